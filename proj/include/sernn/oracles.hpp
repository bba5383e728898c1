#pragma once

// Reference computations that share no code with the kernels they check:
// plain loops, long double where it helps, and exhaustive search.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <vector>

namespace sernn::oracle {

using Dense = std::vector<std::vector<long double>>;

inline Dense identity(std::size_t n) {
  Dense out(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i) out[i][i] = 1.0L;
  return out;
}

inline Dense multiply(const Dense& a, const Dense& b) {
  const std::size_t n = a.size();
  const std::size_t m = b[0].size();
  const std::size_t inner = b.size();
  Dense out(n, std::vector<long double>(m, 0.0L));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < inner; ++k)
      for (std::size_t j = 0; j < m; ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

// e^M = sum_{k < terms} M^k / k!.
inline Dense taylor_exp(const Dense& m, int terms = 100) {
  const std::size_t n = m.size();
  Dense sum = identity(n);
  Dense term = identity(n);
  for (int k = 1; k < terms; ++k) {
    term = multiply(term, m);
    for (auto& row : term)
      for (auto& v : row) v /= static_cast<long double>(k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) sum[i][j] += term[i][j];
  }
  return sum;
}

// Laplace (cofactor) expansion along the first row.
inline long double cofactor_determinant(const Dense& m) {
  const std::size_t n = m.size();
  if (n == 1) return m[0][0];
  if (n == 2) return m[0][0] * m[1][1] - m[0][1] * m[1][0];
  long double det = 0.0L;
  for (std::size_t c = 0; c < n; ++c) {
    Dense minor;
    for (std::size_t i = 1; i < n; ++i) {
      std::vector<long double> row;
      for (std::size_t j = 0; j < n; ++j)
        if (j != c) row.push_back(m[i][j]);
      minor.push_back(std::move(row));
    }
    const long double sign = (c % 2 == 0) ? 1.0L : -1.0L;
    det += sign * m[0][c] * cofactor_determinant(minor);
  }
  return det;
}

// Monic characteristic polynomial coefficients of a 3x3 matrix:
// lambda^3 + c2 lambda^2 + c1 lambda + c0.
inline std::array<long double, 3> char_poly3(const Dense& a) {
  const long double tr = a[0][0] + a[1][1] + a[2][2];
  const long double minors = a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0] +
                             a[1][1] * a[2][2] - a[1][2] * a[2][1];
  return {-cofactor_determinant(a), minors, -tr};
}

// Roots of a monic polynomial (coefficients low to high, leading 1 implied)
// by Durand-Kerner iteration followed by Newton polishing.
inline std::vector<std::complex<long double>> polynomial_roots(const std::vector<long double>& coeffs) {
  using C = std::complex<long double>;
  const std::size_t deg = coeffs.size();
  auto eval = [&](C z) {
    C v = 1.0L;
    for (std::size_t k = deg; k-- > 0;) v = v * z + coeffs[k];
    return v;
  };
  auto deriv = [&](C z) {
    C v = static_cast<long double>(deg);
    for (std::size_t k = deg; k-- > 1;) v = v * z + static_cast<long double>(k) * coeffs[k];
    return v;
  };
  long double bound = 1.0L;
  for (long double c : coeffs) bound = std::max(bound, 1.0L + std::abs(c));
  std::vector<C> z(deg);
  const C seed(0.4L, 0.9L);
  for (std::size_t k = 0; k < deg; ++k) z[k] = std::pow(seed, static_cast<long double>(k)) * (bound * 0.5L);
  for (int iter = 0; iter < 2000; ++iter) {
    long double change = 0.0L;
    for (std::size_t i = 0; i < deg; ++i) {
      C denom = 1.0L;
      for (std::size_t j = 0; j < deg; ++j)
        if (j != i) denom *= (z[i] - z[j]);
      const C step = eval(z[i]) / denom;
      z[i] -= step;
      change = std::max(change, std::abs(step));
    }
    if (change < 1e-30L) break;
  }
  for (auto& r : z) {
    for (int k = 0; k < 5; ++k) {
      const C d = deriv(r);
      if (std::abs(d) < 1e-30L) break;
      const C next = r - eval(r) / d;
      if (std::abs(eval(next)) >= std::abs(eval(r))) break;
      r = next;
    }
  }
  return z;
}

// Largest distance from any value to its partner under the best greedy
// nearest-unmatched pairing of two equally sized multisets.
template <typename A, typename B>
double multiset_distance(const std::vector<A>& a, const std::vector<B>& b) {
  std::vector<bool> used(b.size(), false);
  double worst = 0.0;
  for (const auto& x : a) {
    std::size_t best = b.size();
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (used[j]) continue;
      const double d = std::hypot(static_cast<double>(x.real()) - static_cast<double>(b[j].real()),
                                  static_cast<double>(x.imag()) - static_cast<double>(b[j].imag()));
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    if (best == b.size()) return std::numeric_limits<double>::infinity();
    used[best] = true;
    worst = std::max(worst, bd);
  }
  return worst;
}

// Directed modularity of a labeled partition, by definition.
inline long double modularity_of(const Dense& a, const std::vector<int>& label) {
  const std::size_t n = a.size();
  long double m = 0.0L;
  std::vector<long double> out(n, 0.0L), in(n, 0.0L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      m += a[i][j];
      out[i] += a[i][j];
      in[j] += a[i][j];
    }
  long double q = 0.0L;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (label[i] == label[j]) q += a[i][j] - out[i] * in[j] / m;
  return q / m;
}

// Maximum directed modularity over every set partition (restricted growth
// strings), on |A| with the diagonal removed.
inline long double brute_force_modularity(Dense a) {
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : a[i]) v = std::abs(v);
    a[i][i] = 0.0L;
  }
  std::vector<int> rgs(n, 0);
  std::vector<int> prefix_max(n, 0);
  long double best = -std::numeric_limits<long double>::infinity();
  while (true) {
    best = std::max(best, modularity_of(a, rgs));
    std::size_t i = n;
    while (i-- > 1) {
      if (rgs[i] <= prefix_max[i - 1]) break;
    }
    if (i == 0) break;
    ++rgs[i];
    for (std::size_t j = i + 1; j < n; ++j) rgs[j] = 0;
    for (std::size_t j = i; j < n; ++j) prefix_max[j] = std::max(prefix_max[j - 1], rgs[j]);
  }
  return best;
}

// Number of set partitions (Bell number) visited by brute_force_modularity.
inline std::size_t count_partitions(std::size_t n) {
  std::vector<int> rgs(n, 0);
  std::vector<int> prefix_max(n, 0);
  std::size_t count = 0;
  while (true) {
    ++count;
    std::size_t i = n;
    while (i-- > 1) {
      if (rgs[i] <= prefix_max[i - 1]) break;
    }
    if (i == 0) break;
    ++rgs[i];
    for (std::size_t j = i + 1; j < n; ++j) rgs[j] = 0;
    for (std::size_t j = i; j < n; ++j) prefix_max[j] = std::max(prefix_max[j - 1], rgs[j]);
  }
  return count;
}

}  // namespace sernn::oracle
