#include "nftmarket/cli.hpp"

int main(int argc, char** argv) {
  return nftmarket::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
