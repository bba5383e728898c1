#pragma once

// Dense kernels, deterministic randomness and the small statistics toolbox
// shared by every other part of the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sernn/error.hpp"

namespace sernn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using ComplexSpectrum = std::vector<std::complex<double>>;

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() < 1 || m.rows() != m.cols()) {
    throw InvalidArgument(std::string(what) + ": matrix must be square and non-empty, got " +
                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + ": matrix has non-finite entries");
}

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

// SplitMix64 finalizer (Steele, Lea, Flood 2014):
//   z += 0x9e3779b97f4a7c15; z = (z ^ z>>30) * 0xbf58476d1ce4e5b9;
//   z = (z ^ z>>27) * 0x94d049bb133111eb; return z ^ z>>31
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream splitting: child_seed = splitmix64(parent ^ splitmix64(index)).
constexpr std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return splitmix64(parent ^ splitmix64(index));
}

// Seeded 64-bit stream. The engine is std::mt19937_64 (fully specified by the
// C++ standard); every distribution below is implemented here rather than
// through <random> distributions, whose algorithms are implementation-defined.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), Lemire's multiply-shift with rejection.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("uniform_index: n must be positive");
    unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(engine_()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal by Box-Muller; consumes exactly two uniforms per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Exponential with the given rate, by inversion.
  double exponential(double rate) { return -std::log(1.0 - uniform()) / rate; }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Marsaglia-Tsang squeeze method; shape < 1 uses the u^(1/k) boost.
inline std::vector<double> gamma_sample(RandomSource& rng, double shape, double scale, std::size_t n) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw InvalidArgument("gamma_sample: shape and scale must be positive");
  }
  const bool boost = shape < 1.0;
  const double k = boost ? shape + 1.0 : shape;
  const double d = k - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);

  std::vector<double> out;
  out.reserve(n);
  while (out.size() < n) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2 || std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      double g = d * v;
      if (boost) g *= std::pow(1.0 - rng.uniform(), 1.0 / shape);
      out.push_back(g * scale);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix functions
// ---------------------------------------------------------------------------

// e^M by scaling and squaring around a degree-13 Pade approximant
// (Higham 2005). Accurate to a few ulps relative for well-conditioned input.
inline Matrix matrix_exp(const Matrix& m) {
  require_square(m, "matrix_exp");
  require_finite(m, "matrix_exp");

  static constexpr std::array<double, 14> b = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
      129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
      1323241920.0,        40840800.0,          960960.0,           16380.0,
      182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;

  const Eigen::Index n = m.rows();
  const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const Matrix a = m / std::ldexp(1.0, squarings);

  const Matrix ident = Matrix::Identity(n, n);
  const Matrix a2 = a * a;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;

  const Matrix u_inner = b[13] * a6 + b[11] * a4 + b[9] * a2;
  const Matrix u = a * (a6 * u_inner + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
  const Matrix v_inner = b[12] * a6 + b[10] * a4 + b[8] * a2;
  const Matrix v = a6 * v_inner + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;

  Matrix result = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

// All eigenvalues of a real square matrix. Backed by Eigen's Hessenberg
// reduction + Francis double-shift QR, with a 100*N sweep budget.
inline ComplexSpectrum eigenvalues(const Matrix& m) {
  require_square(m, "eigenvalues");
  require_finite(m, "eigenvalues");
  const Eigen::MatrixXd dense = m;
  Eigen::EigenSolver<Eigen::MatrixXd> solver;
  solver.setMaxIterations(100 * static_cast<Eigen::Index>(m.rows()));
  solver.compute(dense, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw ConvergenceFailure("eigenvalues: QR iteration did not converge within 100*N sweeps");
  }
  const auto& ev = solver.eigenvalues();
  return ComplexSpectrum(ev.data(), ev.data() + ev.size());
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct Correlation {
  double r = 0.0;
  double p = 1.0;
};

inline double mean(std::span<const double> x) {
  if (x.empty()) throw InvalidArgument("mean: empty input");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double median(std::vector<double> x) {
  if (x.empty()) throw InvalidArgument("median: empty input");
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 == 1 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

// Sample standard deviation (n - 1 denominator).
inline double sample_stddev(std::span<const double> x) {
  if (x.size() < 2) throw InvalidArgument("sample_stddev: need at least two values");
  const double mu = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

namespace detail {

inline std::vector<double> centered(std::span<const double> x) {
  const double mu = mean(x);
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v -= mu;
  return out;
}

inline double sum_squares(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Midranks (1-based) with ties averaged.
inline std::vector<double> midranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

inline constexpr std::size_t kPermutationShuffles = 10000;
inline constexpr std::uint64_t kPermutationSeed = 0x5e4e5eedULL;

// Sample Pearson r with a one-sided permutation p-value in the direction of
// the observed sign: p = #{shuffles with r' at least as extreme} / 10000,
// floored at 1e-4.
inline Correlation pearson(std::span<const double> x, std::span<const double> y,
                           std::uint64_t seed = kPermutationSeed) {
  if (x.size() != y.size()) throw InvalidArgument("pearson: lists differ in length");
  if (x.size() < 3) throw InvalidArgument("pearson: need at least 3 pairs");
  const auto xc = detail::centered(x);
  auto yc = detail::centered(y);
  const double sxx = detail::sum_squares(xc);
  const double syy = detail::sum_squares(yc);
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DegenerateInput("pearson: degenerate (zero) variance");
  const double denom = std::sqrt(sxx * syy);
  const double r = std::clamp(detail::dot(xc, yc) / denom, -1.0, 1.0);

  RandomSource rng(seed);
  const double tol = 1e-12;
  std::size_t extreme = 0;
  for (std::size_t s = 0; s < kPermutationShuffles; ++s) {
    rng.shuffle(std::span<double>(yc));
    const double rp = detail::dot(xc, yc) / denom;
    if (r >= 0.0 ? rp >= r - tol : rp <= r + tol) ++extreme;
  }
  const double p = std::max(static_cast<double>(extreme) / kPermutationShuffles, 1.0 / kPermutationShuffles);
  return {r, p};
}

// Spearman rank correlation (coefficient only).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: lists differ in length");
  if (x.size() < 3) throw InvalidArgument("spearman: need at least 3 pairs");
  const auto rx = detail::centered(detail::midranks(x));
  const auto ry = detail::centered(detail::midranks(y));
  const double sxx = detail::sum_squares(rx);
  const double syy = detail::sum_squares(ry);
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DegenerateInput("spearman: degenerate (constant) input");
  return detail::dot(rx, ry) / std::sqrt(sxx * syy);
}

enum class Alternative { Less, Greater };

struct UTest {
  double u = 0.0;  // U for `a` versus `b`: pairs with a > b, ties count 1/2
  double p = 1.0;  // one-sided, normal approximation, tie-corrected variance
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

// Mann-Whitney U. Alternative::Less tests "a tends to be smaller than b".
inline UTest mann_whitney(std::span<const double> a, std::span<const double> b,
                          Alternative alt = Alternative::Less) {
  if (a.empty() || b.empty()) throw InvalidArgument("mann_whitney: empty group");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = detail::midranks(pooled);

  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  const double n = na + nb;
  double rank_sum_a = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) rank_sum_a += ranks[i];
  const double u = rank_sum_a - na * (na + 1.0) / 2.0;

  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const auto t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double mu = na * nb / 2.0;
  const double var = n > 1.0 ? na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0))) : 0.0;

  double p = 0.5;
  if (var > 0.0) {
    const double z = (u - mu) / std::sqrt(var);
    const double tail = alt == Alternative::Less ? z : -z;
    p = 0.5 * std::erfc(-tail / std::sqrt(2.0));
  }
  return {u, p, a.size(), b.size()};
}

}  // namespace sernn
