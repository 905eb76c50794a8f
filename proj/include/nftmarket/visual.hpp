#pragma once

// Image-embedding analysis: cosine-distance structure across groups, PCA and
// inter/intra-group distance ratios in PC space.

#include <Eigen/Dense>

#include <bit>
#include <random>
#include <unordered_map>

#include "nftmarket/core.hpp"

namespace nftmarket::visual {

inline constexpr std::uint32_t kEmbeddingDim = 4096;

/// Object id -> fixed-dimension float vector. Ids are unique; rows keep
/// insertion order.
class EmbeddingMatrix {
 public:
  explicit EmbeddingMatrix(std::uint32_t dim = kEmbeddingDim) : dim_(dim) {
    if (dim == 0) throw ValidationError("embedding dimension must be positive");
  }

  void add(std::string id, std::span<const float> v) {
    if (v.size() != dim_)
      throw ValidationError("embedding '" + id + "' has dimension " + std::to_string(v.size()) +
                            ", expected " + std::to_string(dim_));
    for (float x : v) {
      if (!std::isfinite(x)) throw ValidationError("embedding '" + id + "' has a non-finite component");
      if (x < 0) ++negative_components_;
    }
    if (!index_.emplace(id, ids_.size()).second) throw ValidationError("duplicate embedding id: " + id);
    ids_.push_back(std::move(id));
    data_.insert(data_.end(), v.begin(), v.end());
  }

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  /// Count of negative components seen; a rectified layer should give none.
  std::size_t negative_components() const { return negative_components_; }

  /// Row-major n x dim view.
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> matrix() const {
    return {data_.data(), static_cast<Eigen::Index>(ids_.size()), static_cast<Eigen::Index>(dim_)};
  }

 private:
  std::uint32_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t negative_components_ = 0;
};

// ---------------------------------------------------------------------------
// Container files
//
// magic (4 bytes) | u32 dimension | u64 count | count x record
// record = u16 id length | id bytes (UTF-8) | dimension x f32
// All integers and floats little-endian.

inline constexpr std::string_view kEmbeddingMagic = "EMB1";
inline constexpr std::string_view kPcaMagic = "PCA1";

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  out.write(b, sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw ValidationError("truncated container file");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(b[i]) << (8 * i);
  return static_cast<T>(u);
}

}  // namespace detail

inline void write_container(std::ostream& out, const EmbeddingMatrix& emb,
                            std::string_view magic = kEmbeddingMagic) {
  out.write(magic.data(), 4);
  detail::put_le<std::uint32_t>(out, emb.dim());
  detail::put_le<std::uint64_t>(out, emb.size());
  for (std::size_t i = 0; i < emb.size(); ++i) {
    const auto& id = emb.ids()[i];
    if (id.size() > 0xffff) throw ValidationError("embedding id longer than 65535 bytes");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (float x : emb.row(i)) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(x));
  }
  if (!out) throw Error("failed writing container file");
}

inline EmbeddingMatrix read_container(std::istream& in, std::string_view magic = kEmbeddingMagic) {
  char m[4];
  if (!in.read(m, 4) || std::string_view(m, 4) != magic)
    throw ValidationError("bad container magic, expected " + std::string(magic));
  const auto dim = detail::get_le<std::uint32_t>(in);
  const auto count = detail::get_le<std::uint64_t>(in);
  EmbeddingMatrix emb(dim);
  std::vector<float> row(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = detail::get_le<std::uint16_t>(in);
    std::string id(len, '\0');
    if (len && !in.read(id.data(), len)) throw ValidationError("truncated container file");
    for (auto& x : row) x = std::bit_cast<float>(detail::get_le<std::uint32_t>(in));
    emb.add(std::move(id), row);
  }
  if (magic == kEmbeddingMagic && emb.negative_components())
    log_warn("embedding file has " + std::to_string(emb.negative_components()) + " negative components");
  return emb;
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open embedding file: " + path);
  return read_container(in, kEmbeddingMagic);
}

// ---------------------------------------------------------------------------
// Cosine distance

template <class T, class U>
double cosine_distance(std::span<const T> u, std::span<const U> v) {
  if (u.size() != v.size()) throw ValidationError("cosine distance of vectors with different dimension");
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += double(u[i]) * double(v[i]);
    nu += double(u[i]) * double(u[i]);
    nv += double(v[i]) * double(v[i]);
  }
  if (!(nu > 0) || !(nv > 0)) throw DegenerateError("cosine distance of a zero-norm vector");
  return 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
}

inline double cosine_distance(const std::vector<double>& u, const std::vector<double>& v) {
  return cosine_distance(std::span<const double>(u), std::span<const double>(v));
}

struct DistanceCell {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t n_pairs = 0;
  bool defined = false;  // false for intra cells of singleton groups
};

struct DistanceSummary {
  std::vector<std::string> labels;
  std::vector<DistanceCell> cells;  // row-major labels x labels, symmetric

  const DistanceCell& at(std::size_t a, std::size_t b) const { return cells[a * labels.size() + b]; }
};

namespace detail {

// Decodes pair number k of a cell into member positions.
inline std::pair<std::size_t, std::size_t> intra_pair(std::uint64_t k) {
  // k enumerates (i, j), j < i, in row order: i = floor((1 + sqrt(1 + 8k)) / 2)
  auto i = static_cast<std::uint64_t>((1.0 + std::sqrt(1.0 + 8.0 * double(k))) / 2.0);
  while (i * (i - 1) / 2 > k) --i;
  while ((i + 1) * i / 2 <= k) ++i;
  return {static_cast<std::size_t>(i), static_cast<std::size_t>(k - i * (i - 1) / 2)};
}

template <class Metric>
DistanceCell sample_cell(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, bool intra,
                         std::size_t cap, std::mt19937_64& rng, Metric&& metric) {
  DistanceCell cell;
  const std::uint64_t total = intra ? std::uint64_t(a.size()) * (a.size() - 1) / 2 : std::uint64_t(a.size()) * b.size();
  if (total == 0) return cell;
  double sum = 0, sum_sq = 0;
  auto visit = [&](std::uint64_t k) {
    std::size_t x, y;
    if (intra) {
      auto [i, j] = intra_pair(k);
      x = a[i];
      y = a[j];
    } else {
      x = a[k / b.size()];
      y = b[k % b.size()];
    }
    const double d = metric(x, y);
    sum += d;
    sum_sq += d * d;
  };
  std::uint64_t n = 0;
  if (total <= cap) {
    for (std::uint64_t k = 0; k < total; ++k) visit(k);
    n = total;
  } else {
    std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
    for (std::size_t s = 0; s < cap; ++s) visit(pick(rng));
    n = cap;
  }
  cell.defined = true;
  cell.n_pairs = n;
  cell.mean = sum / double(n);
  cell.stddev = n > 1 ? std::sqrt(std::max(0.0, (sum_sq - sum * sum / double(n)) / double(n - 1))) : 0.0;
  return cell;
}

}  // namespace detail

/// Mean and standard deviation of the cosine distance for every pair of group
/// labels (diagonal = within-group). Cells with more than `max_pairs_per_cell`
/// pairs are estimated from that many uniformly sampled pairs; each cell draws
/// from its own generator seeded by (seed, cell index), so results do not
/// depend on evaluation order. Ids without a label are ignored.
inline DistanceSummary group_distance_matrix(const EmbeddingMatrix& emb,
                                             const std::map<std::string, std::string>& grouping,
                                             std::size_t max_pairs_per_cell = 100000, std::uint64_t seed = 0) {
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    auto it = grouping.find(emb.ids()[i]);
    if (it != grouping.end()) members[it->second].push_back(i);
  }
  DistanceSummary out;
  for (const auto& [l, m] : members) out.labels.push_back(l);
  const auto L = out.labels.size();
  out.cells.resize(L * L);

  std::vector<double> norms(emb.size());
  for (std::size_t i = 0; i < emb.size(); ++i) {
    double s = 0;
    for (float x : emb.row(i)) s += double(x) * double(x);
    if (!(s > 0)) throw DegenerateError("zero-norm embedding: " + emb.ids()[i]);
    norms[i] = std::sqrt(s);
  }
  auto metric = [&](std::size_t x, std::size_t y) {
    auto u = emb.row(x), v = emb.row(y);
    double dot = 0;
    for (std::size_t k = 0; k < u.size(); ++k) dot += double(u[k]) * double(v[k]);
    return 1.0 - dot / (norms[x] * norms[y]);
  };

  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = a; b < L; ++b) jobs.push_back({a, b});
  parallel_for(jobs.size(), [&](std::size_t j) {
    const auto [a, b] = jobs[j];
    std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (a * L + b + 1)));
    const auto cell = detail::sample_cell(members.at(out.labels[a]), members.at(out.labels[b]), a == b,
                                          max_pairs_per_cell, rng, metric);
    out.cells[a * L + b] = cell;
    out.cells[b * L + a] = cell;
  });
  return out;
}

/// Long-format CSV of the label x label matrix.
inline void write_distance_matrix(std::ostream& out, const DistanceSummary& s) {
  out << "group_a,group_b,mean_cd,std_cd,n_pairs\n";
  const auto L = s.labels.size();
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = 0; b < L; ++b) {
      const auto& c = s.at(a, b);
      out << csv_escape(s.labels[a]) << ',' << csv_escape(s.labels[b]) << ','
          << (c.defined ? format_double(c.mean) : "") << ',' << (c.defined ? format_double(c.stddev) : "")
          << ',' << c.n_pairs << '\n';
    }
}

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  Eigen::VectorXd mean;          // dim
  Eigen::MatrixXd components;    // k x dim, orthonormal rows
  std::vector<double> eigenvalues;
  std::vector<double> explained_ratio;
  std::size_t iterations = 0;

  std::size_t k() const { return static_cast<std::size_t>(components.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

struct PcaOptions {
  std::size_t k = 5;
  std::size_t oversample = 10;
  std::size_t max_iterations = 200;
  double tolerance = 1e-6;  // relative eigenvalue change between iterations
  std::uint64_t seed = 0;
  std::size_t block_rows = 1024;
};

/// Top-k principal components by randomized subspace iteration on the
/// implicitly centered data; the covariance matrix is never formed. Returns
/// fewer than k components (with a warning) when the data rank is below k.
inline PcaModel fit_pca(const EmbeddingMatrix& emb, const PcaOptions& opts = {}) {
  const auto n = static_cast<Eigen::Index>(emb.size());
  const auto d = static_cast<Eigen::Index>(emb.dim());
  if (opts.k == 0) throw ValidationError("PCA needs k >= 1");
  if (static_cast<std::size_t>(n) < opts.k + 1)
    throw DegenerateError("PCA needs at least k+1 vectors, got " + std::to_string(n));
  const auto X = emb.matrix();

  PcaModel model;
  model.mean = Eigen::VectorXd::Zero(d);
  for (Eigen::Index r = 0; r < n; ++r) model.mean += X.row(r).cast<double>().transpose();
  model.mean /= double(n);

  const Eigen::Index block = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(opts.block_rows));
  double total_var = 0;
  for (Eigen::Index r0 = 0; r0 < n; r0 += block) {
    const auto rows = std::min(block, n - r0);
    Eigen::MatrixXd B = X.middleRows(r0, rows).cast<double>();
    B.rowwise() -= model.mean.transpose();
    total_var += B.squaredNorm();
  }
  total_var /= double(n - 1);

  // C * Q with C the sample covariance, streaming over row blocks.
  auto apply_cov = [&](const Eigen::MatrixXd& Q) {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(d, Q.cols());
    const Eigen::RowVectorXd mq = model.mean.transpose() * Q;
    for (Eigen::Index r0 = 0; r0 < n; r0 += block) {
      const auto rows = std::min(block, n - r0);
      const Eigen::MatrixXd B = X.middleRows(r0, rows).cast<double>();
      Eigen::MatrixXd Y = B * Q;
      Y.rowwise() -= mq;
      Z.noalias() += B.transpose() * Y;
    }
    // sum_i x_i y_i^T includes mean * (sum_i y_i)^T, which is zero for centred Y
    return Eigen::MatrixXd(Z / double(n - 1));
  };

  const auto b = std::min<Eigen::Index>(static_cast<Eigen::Index>(opts.k + opts.oversample), std::min(d, n));
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd Q(d, b);
  for (Eigen::Index j = 0; j < b; ++j)
    for (Eigen::Index i = 0; i < d; ++i) Q(i, j) = gauss(rng);
  auto orthonormalize = [&](const Eigen::MatrixXd& M) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
    return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(M.rows(), M.cols()));
  };
  Q = orthonormalize(Q);

  const auto k_eff = std::min<Eigen::Index>(static_cast<Eigen::Index>(opts.k), b);
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(k_eff);
  Eigen::MatrixXd CQ = apply_cov(Q);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  for (std::size_t it = 1;; ++it) {
    Eigen::MatrixXd T = Q.transpose() * CQ;
    T = 0.5 * (T + T.transpose());
    eig.compute(T);
    const Eigen::VectorXd vals = eig.eigenvalues().reverse().head(k_eff);  // descending
    model.iterations = it;
    const double scale = std::max(vals.cwiseAbs().maxCoeff(), 1e-300);
    const double change = ((vals - prev).cwiseAbs() / scale).maxCoeff();
    prev = vals;
    if ((it > 1 && change < opts.tolerance) || it >= opts.max_iterations) break;
    Q = orthonormalize(CQ);
    CQ = apply_cov(Q);
  }

  const Eigen::MatrixXd V = eig.eigenvectors().rowwise().reverse();
  const Eigen::MatrixXd U = Q * V.leftCols(k_eff);
  const double rank_floor = 1e-10 * std::max(total_var, 1e-300);
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < k_eff; ++j)
    if (prev[j] > rank_floor) kept.push_back(j);
  if (kept.size() < opts.k)
    log_warn("PCA: data rank below k, returning " + std::to_string(kept.size()) + " components");
  model.components.resize(static_cast<Eigen::Index>(kept.size()), d);
  for (std::size_t c = 0; c < kept.size(); ++c) {
    Eigen::VectorXd u = U.col(kept[c]);
    u.normalize();
    // sign convention: largest-magnitude loading positive
    Eigen::Index arg;
    u.cwiseAbs().maxCoeff(&arg);
    if (u[arg] < 0) u = -u;
    model.components.row(static_cast<Eigen::Index>(c)) = u.transpose();
    model.eigenvalues.push_back(prev[kept[c]]);
    model.explained_ratio.push_back(total_var > 0 ? prev[kept[c]] / total_var : 0.0);
  }
  return model;
}

/// Scores = components * (v - mean).
template <class T>
Eigen::VectorXd project(const PcaModel& model, std::span<const T> v) {
  if (v.size() != model.dim()) throw ValidationError("projection dimension mismatch");
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) x[static_cast<Eigen::Index>(i)] = double(v[i]);
  return model.components * (x - model.mean);
}

inline Eigen::VectorXd project(const PcaModel& model, const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != model.dim()) throw ValidationError("projection dimension mismatch");
  return model.components * (v - model.mean);
}

/// Scores of every embedding row (n x k).
inline Eigen::MatrixXd project_all(const PcaModel& model, const EmbeddingMatrix& emb) {
  if (emb.dim() != model.dim()) throw ValidationError("projection dimension mismatch");
  Eigen::MatrixXd centered = emb.matrix().cast<double>();
  centered.rowwise() -= model.mean.transpose();
  return centered * model.components.transpose();
}

/// PCA model in the container layout: records "mean", "component_1".."component_k",
/// "eigenvalues" and "explained_ratio" (first k entries used, rest zero).
inline void save_pca(std::ostream& out, const PcaModel& model) {
  const auto d = static_cast<std::uint32_t>(model.dim());
  EmbeddingMatrix rec(d);
  auto to_float = [&](auto&& getter) {
    std::vector<float> v(d, 0.0f);
    for (std::uint32_t i = 0; i < d; ++i) v[i] = static_cast<float>(getter(i));
    return v;
  };
  auto add_record = [&](std::string id, const std::vector<float>& v) { rec.add(std::move(id), v); };
  add_record("mean", to_float([&](std::uint32_t i) { return model.mean[i]; }));
  for (std::size_t c = 0; c < model.k(); ++c)
    add_record("component_" + std::to_string(c + 1),
                  to_float([&](std::uint32_t i) { return model.components(static_cast<Eigen::Index>(c), i); }));
  add_record("eigenvalues", to_float([&](std::uint32_t i) { return i < model.k() ? model.eigenvalues[i] : 0.0; }));
  add_record("explained_ratio",
                to_float([&](std::uint32_t i) { return i < model.k() ? model.explained_ratio[i] : 0.0; }));
  write_container(out, rec, kPcaMagic);
}

inline PcaModel load_pca(std::istream& in) {
  const auto rec = read_container(in, kPcaMagic);
  auto row = [&](const std::string& id) {
    auto i = rec.find(id);
    if (!i) throw ValidationError("PCA container lacks record " + id);
    return rec.row(*i);
  };
  PcaModel m;
  const auto d = static_cast<Eigen::Index>(rec.dim());
  m.mean.resize(d);
  auto mean = row("mean");
  for (Eigen::Index i = 0; i < d; ++i) m.mean[i] = mean[static_cast<std::size_t>(i)];
  std::size_t k = 0;
  while (rec.find("component_" + std::to_string(k + 1))) ++k;
  m.components.resize(static_cast<Eigen::Index>(k), d);
  auto ev = row("eigenvalues");
  auto ratio = row("explained_ratio");
  for (std::size_t c = 0; c < k; ++c) {
    auto comp = row("component_" + std::to_string(c + 1));
    for (Eigen::Index i = 0; i < d; ++i) m.components(static_cast<Eigen::Index>(c), i) = comp[static_cast<std::size_t>(i)];
    m.eigenvalues.push_back(ev[c]);
    m.explained_ratio.push_back(ratio[c]);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Inter / intra distance ratio

/// (mean Euclidean distance between points of different groups) /
/// (mean distance between points of the same group), over the first `dims`
/// score columns (all when 0). Each side is exhaustive up to `cap` pairs and
/// uniformly sampled beyond.
inline double inter_intra_ratio(const Eigen::MatrixXd& scores, const std::vector<std::string>& labels,
                                std::size_t cap = 100000, std::uint64_t seed = 0, Eigen::Index dims = 0) {
  const auto n = static_cast<std::size_t>(scores.rows());
  if (labels.size() != n) throw ValidationError("label count does not match scores");
  if (dims <= 0 || dims > scores.cols()) dims = scores.cols();
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
  if (groups.size() < 2) throw DegenerateError("inter/intra ratio needs at least two groups");

  auto dist = [&](std::size_t a, std::size_t b) {
    return (scores.row(static_cast<Eigen::Index>(a)).head(dims) - scores.row(static_cast<Eigen::Index>(b)).head(dims)).norm();
  };
  std::vector<const std::vector<std::size_t>*> gs;
  std::vector<double> pair_counts;
  std::uint64_t intra_total = 0;
  for (const auto& [l, m] : groups) {
    gs.push_back(&m);
    const std::uint64_t c = std::uint64_t(m.size()) * (m.size() - 1) / 2;
    pair_counts.push_back(double(c));
    intra_total += c;
  }
  if (intra_total == 0) throw DegenerateError("inter/intra ratio undefined: every group is a singleton");
  const std::uint64_t all_pairs = std::uint64_t(n) * (n - 1) / 2;
  const std::uint64_t inter_total = all_pairs - intra_total;

  std::mt19937_64 rng(seed);
  double intra_sum = 0, inter_sum = 0;
  std::uint64_t intra_n = 0, inter_n = 0;
  if (intra_total <= cap) {
    for (auto* m : gs)
      for (std::size_t i = 0; i < m->size(); ++i)
        for (std::size_t j = 0; j < i; ++j) intra_sum += dist((*m)[i], (*m)[j]);
    intra_n = intra_total;
  } else {
    std::discrete_distribution<std::size_t> pick_group(pair_counts.begin(), pair_counts.end());
    for (std::size_t s = 0; s < cap; ++s) {
      const auto& m = *gs[pick_group(rng)];
      std::uniform_int_distribution<std::uint64_t> pick(0, std::uint64_t(m.size()) * (m.size() - 1) / 2 - 1);
      auto [i, j] = detail::intra_pair(pick(rng));
      intra_sum += dist(m[i], m[j]);
    }
    intra_n = cap;
  }
  if (inter_total <= cap) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (labels[i] != labels[j]) inter_sum += dist(i, j);
    inter_n = inter_total;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (inter_n < cap) {
      const auto i = pick(rng), j = pick(rng);
      if (i == j || labels[i] == labels[j]) continue;
      inter_sum += dist(i, j);
      ++inter_n;
    }
  }
  const double intra_mean = intra_sum / double(intra_n);
  if (!(intra_mean > 0)) throw DegenerateError("inter/intra ratio undefined: zero intra-group distance");
  return (inter_sum / double(inter_n)) / intra_mean;
}

}  // namespace nftmarket::visual
