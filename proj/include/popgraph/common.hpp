#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace popgraph {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Malformed or inconsistent input data (files, cohorts, endpoints).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid run configuration (bad grid, unknown model, missing section).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Training diverged or produced non-finite values.
class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow for large |x|.
inline double log1pexp(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Derives an independent stream seed from a master seed and stream indices.
/// Used wherever work is fanned out (bootstrap iterations, grid configs,
/// folds) so results do not depend on scheduling order.
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return detail::splitmix64(detail::splitmix64(master ^ (a * 0x9e3779b97f4a7c15ULL)) ^ b);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

/// Runs fn(0..n-1) across a small thread pool. Tasks must be independent and
/// write only to their own slot; exceptions are rethrown on the caller.
/// Output must not depend on scheduling — pair with sub_seed per index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned max_threads = 0);

}  // namespace popgraph
