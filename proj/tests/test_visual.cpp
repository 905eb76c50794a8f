#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "nftmarket/visual.hpp"

using namespace nftmarket;
using namespace nftmarket::visual;

namespace {

EmbeddingMatrix gaussian_rows(std::size_t n, std::uint32_t dim, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  EmbeddingMatrix emb(dim);
  std::vector<float> v(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : v) x = static_cast<float>(scale * g(rng));
    emb.add("r" + std::to_string(i), v);
  }
  return emb;
}

Eigen::MatrixXd sample_covariance(const EmbeddingMatrix& emb) {
  Eigen::MatrixXd X = emb.matrix().cast<double>();
  Eigen::RowVectorXd mu = X.colwise().mean();
  X.rowwise() -= mu;
  return X.transpose() * X / double(X.rows() - 1);
}

}  // namespace

TEST(Cosine, FortyFiveDegrees) {
  EXPECT_NEAR(cosine_distance({1.0, 0.0}, {1.0, 1.0}), 1 - 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(cosine_distance({1.0, 2.0}, {1.0, 2.0}), 0.0, 1e-15);
  EXPECT_NEAR(cosine_distance({1.0, 0.0}, {-1.0, 0.0}), 2.0, 1e-15);
}

TEST(Cosine, ScaleInvariant) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0.1, 5);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    auto a2 = a;
    for (auto& x : a2) x *= 37.5;
    EXPECT_NEAR(cosine_distance(a, b), cosine_distance(a2, b), 1e-12);
  }
}

TEST(Cosine, ZeroNormAndDimensionErrors) {
  EXPECT_THROW(cosine_distance({0.0, 0.0}, {1.0, 0.0}), DegenerateError);
  EXPECT_THROW(cosine_distance({1.0}, {1.0, 0.0}), ValidationError);
}

TEST(Container, RoundTripAndValidation) {
  EmbeddingMatrix emb(3);
  emb.add("a", std::vector<float>{1, 2, 3});
  emb.add("https://x/b.png", std::vector<float>{0, 0.5f, -1});
  EXPECT_EQ(emb.negative_components(), 1u);
  EXPECT_THROW(emb.add("a", std::vector<float>{1, 1, 1}), ValidationError);
  EXPECT_THROW(emb.add("c", std::vector<float>{1, 1}), ValidationError);

  std::stringstream buf;
  write_container(buf, emb);
  EXPECT_EQ(buf.str().substr(0, 4), "EMB1");
  auto back = read_container(buf);
  EXPECT_EQ(back.ids(), emb.ids());
  EXPECT_EQ(back.dim(), 3u);
  for (std::size_t i = 0; i < emb.size(); ++i)
    EXPECT_TRUE(std::equal(back.row(i).begin(), back.row(i).end(), emb.row(i).begin()));

  std::stringstream bad("EMB2xxxx");
  EXPECT_THROW(read_container(bad), ValidationError);
  std::string trunc = buf.str();
  std::stringstream cut(trunc.substr(0, trunc.size() - 2));
  EXPECT_THROW(read_container(cut), ValidationError);
}

TEST(DistanceMatrix, ExhaustiveCellsMatchDirectMeans) {
  EmbeddingMatrix emb(2);
  emb.add("a1", std::vector<float>{1, 0});
  emb.add("a2", std::vector<float>{1, 1});
  emb.add("b1", std::vector<float>{0, 1});
  emb.add("x", std::vector<float>{3, 3});  // unlabelled
  auto s = group_distance_matrix(emb, {{"a1", "A"}, {"a2", "A"}, {"b1", "B"}});
  ASSERT_EQ(s.labels, (std::vector<std::string>{"A", "B"}));
  const double d45 = 1 - 1 / std::sqrt(2.0);
  EXPECT_NEAR(s.at(0, 0).mean, d45, 1e-12);
  EXPECT_EQ(s.at(0, 0).n_pairs, 1u);
  EXPECT_NEAR(s.at(0, 1).mean, (1.0 + d45) / 2, 1e-12);
  EXPECT_NEAR(s.at(1, 0).mean, s.at(0, 1).mean, 0);
  EXPECT_FALSE(s.at(1, 1).defined);
}

TEST(DistanceMatrix, SampledCellsAreReproducible) {
  auto emb = gaussian_rows(300, 6, 4);
  std::map<std::string, std::string> groups;
  for (std::size_t i = 0; i < emb.size(); ++i) groups[emb.ids()[i]] = i % 3 ? "A" : "B";
  auto a = group_distance_matrix(emb, groups, 500, 7);
  auto b = group_distance_matrix(emb, groups, 500, 7);
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].mean, b.cells[i].mean);
    EXPECT_LE(a.cells[i].n_pairs, 500u);
  }
  std::ostringstream o1, o2;
  write_distance_matrix(o1, a);
  write_distance_matrix(o2, b);
  EXPECT_EQ(o1.str(), o2.str());
}

TEST(Pca, LineHasOneComponent) {
  EmbeddingMatrix emb(4);
  for (int i = 0; i < 50; ++i) {
    const float t = static_cast<float>(i) - 25.0f;
    emb.add(std::to_string(i), std::vector<float>{t, 2 * t, 0, -t});
  }
  auto m = fit_pca(emb, {.k = 3});
  ASSERT_GE(m.k(), 1u);
  EXPECT_NEAR(m.explained_ratio[0], 1.0, 1e-9);
  Eigen::Vector4d dir(1, 2, 0, -1);
  dir.normalize();
  EXPECT_NEAR(std::abs(m.components.row(0).dot(dir)), 1.0, 1e-9);
}

TEST(Pca, MatchesDenseEigenSolver) {
  // anisotropic: column j scaled by (j + 1)
  std::mt19937_64 rng(6);
  std::normal_distribution<float> g;
  EmbeddingMatrix emb(12);
  std::vector<float> v(12);
  for (int i = 0; i < 2000; ++i) {
    for (int j = 0; j < 12; ++j) v[j] = static_cast<float>((j + 1) * g(rng));
    emb.add(std::to_string(i), v);
  }
  auto m = fit_pca(emb, {.k = 4, .tolerance = 1e-12, .seed = 3, .block_rows = 97});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sample_covariance(emb));
  const Eigen::VectorXd vals = eig.eigenvalues().reverse();
  const double total = vals.sum();
  ASSERT_EQ(m.k(), 4u);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_NEAR(m.eigenvalues[c], vals[c], 1e-6 * vals[0]);
    EXPECT_NEAR(m.explained_ratio[c], vals[c] / total, 1e-6);
    Eigen::VectorXd ref = eig.eigenvectors().col(11 - static_cast<Eigen::Index>(c));
    EXPECT_NEAR(std::abs(m.components.row(c).dot(ref)), 1.0, 1e-5);
  }
  Eigen::MatrixXd gram = m.components * m.components.transpose();
  EXPECT_TRUE(gram.isIdentity(1e-10));
}

TEST(Pca, ProjectionIdentities) {
  auto emb = gaussian_rows(200, 8, 2);
  auto m = fit_pca(emb, {.k = 3});
  // the mean projects to zero; scores have zero column means
  EXPECT_LT(project(m, Eigen::VectorXd(m.mean)).norm(), 1e-12);
  auto scores = project_all(m, emb);
  EXPECT_EQ(scores.rows(), 200);
  EXPECT_LT(scores.colwise().mean().norm(), 1e-5);
  auto row = project(m, emb.row(5));
  EXPECT_LT((row.transpose() - scores.row(5)).norm(), 1e-9);

  std::stringstream buf;
  save_pca(buf, m);
  auto back = load_pca(buf);
  EXPECT_EQ(back.k(), m.k());
  EXPECT_LT((back.components - m.components).norm(), 1e-6);
  EXPECT_THROW(project(m, Eigen::VectorXd::Zero(3)), ValidationError);
}

TEST(InterIntra, SeparatedClustersExceedOne) {
  Eigen::MatrixXd scores(40, 2);
  std::vector<std::string> labels;
  std::mt19937 rng(1);
  std::normal_distribution<double> g(0, 0.1);
  for (int i = 0; i < 40; ++i) {
    scores(i, 0) = (i < 20 ? 0 : 10) + g(rng);
    scores(i, 1) = g(rng);
    labels.push_back(i < 20 ? "a" : "b");
  }
  EXPECT_GT(inter_intra_ratio(scores, labels), 10.0);
  Eigen::MatrixXd same = Eigen::MatrixXd::Zero(4, 2);
  EXPECT_THROW(inter_intra_ratio(same, {"a", "a", "b", "b"}), DegenerateError);
}
