#pragma once

// Network outcome measures computed from a recurrent weight matrix.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

#include "sernn/constraints.hpp"
#include "sernn/embedding.hpp"
#include "sernn/error.hpp"
#include "sernn/numerics.hpp"

namespace sernn::metrics {

inline double total_weight(const Matrix& w) { return w.cwiseAbs().sum(); }

// H(W) = -(1/N) sum_ij p_ij log2 p_ij with p_ij = |w_ij| / sum_kl |w_kl|.
inline double shannon_entropy(const Matrix& m) {
  require_square(m, "shannon_entropy");
  const double total = total_weight(m);
  if (!(total > 0.0)) throw DegenerateInput("shannon_entropy: all-zero matrix has no weight distribution");
  double h = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double p = std::abs(m(i, j)) / total;
      if (p > 0.0) h -= p * std::log2(p);
    }
  }
  return h / static_cast<double>(m.rows());
}

// Entropy of the eigenvalue-modulus distribution; 0 for an all-zero spectrum.
inline double spectral_entropy(const ComplexSpectrum& spec) {
  if (spec.empty()) throw InvalidArgument("spectral_entropy: empty spectrum");
  double total = 0.0;
  for (const auto& l : spec) total += std::abs(l);
  if (!(total > 0.0)) return 0.0;
  double h = 0.0;
  for (const auto& l : spec) {
    const double p = std::abs(l) / total;
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

// Spectral radius.
inline double leading_eigenvalue(const ComplexSpectrum& spec) {
  if (spec.empty()) throw InvalidArgument("leading_eigenvalue: empty spectrum");
  double best = 0.0;
  for (const auto& l : spec) best = std::max(best, std::abs(l));
  return best;
}

inline double imag_fraction(const ComplexSpectrum& spec) {
  if (spec.empty()) throw InvalidArgument("imag_fraction: empty spectrum");
  double im = 0.0;
  double total = 0.0;
  for (const auto& l : spec) {
    im += std::abs(l.imag());
    total += std::abs(l);
  }
  return total > 0.0 ? im / total : 0.0;
}

// ||W - W^T|| / (||W - W^T|| + ||W + W^T||): 0 symmetric, 1 antisymmetric.
inline double symmetry_index(const Matrix& w) {
  require_square(w, "symmetry_index");
  const double anti = (w - w.transpose()).norm();
  const double sym = (w + w.transpose()).norm();
  if (!(anti + sym > 0.0)) throw DegenerateInput("symmetry_index: zero matrix");
  return anti / (anti + sym);
}

// ---------------------------------------------------------------------------
// Directed modularity
// ---------------------------------------------------------------------------

struct Partition {
  double q = 0.0;
  std::vector<int> community;  // 0-based labels, first-appearance order
};

// Leicht-Newman directed modularity of a given partition of A (nonnegative).
inline double directed_modularity(const Matrix& a, std::span<const int> community) {
  const double m = a.sum();
  if (!(m > 0.0)) throw DegenerateInput("modularity: zero total weight");
  const Vector k_out = a.rowwise().sum();
  const Vector k_in = a.colwise().sum().transpose();
  double q = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (community[static_cast<std::size_t>(i)] == community[static_cast<std::size_t>(j)]) {
        q += a(i, j) - k_out(i) * k_in(j) / m;
      }
    }
  }
  return q / m;
}

namespace detail {

inline std::vector<int> relabel(const std::vector<int>& c) {
  std::vector<int> map(c.size() + 1, -1);
  std::vector<int> out(c.size());
  int next = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto key = static_cast<std::size_t>(c[i]);
    if (map[key] < 0) map[key] = next++;
    out[i] = map[key];
  }
  return out;
}

// Eigenvector for the largest eigenvalue of a symmetric matrix, sign fixed
// so that its largest-magnitude component is positive.
inline Eigen::VectorXd leading_eigenvector(const Eigen::MatrixXd& b) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  if (es.info() != Eigen::Success) throw ConvergenceFailure("modularity: eigen decomposition failed");
  Eigen::VectorXd v = es.eigenvectors().col(b.rows() - 1);
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0.0) v = -v;
  return v;
}


// Kernighan-Lin style refinement of a partition of the symmetrized
// modularity matrix B (diagonal ignored). Each pass moves every node once,
// always taking the best available move (an empty community included), and
// keeps the best prefix of the pass; then the best two-node exchange is
// applied and pairs of communities are merged while that helps. The steps
// repeat until none improves the partition.
inline std::vector<int> refine_partition(const Eigen::MatrixXd& bsym, std::vector<int> comm) {
  const Eigen::Index n = bsym.rows();
  const auto un = static_cast<std::size_t>(n);
  constexpr double kMinGain = 1e-12;
  Eigen::MatrixXd b = bsym;
  b.diagonal().setZero();

  // link(i, c) = sum of B_ij over j in community c.
  auto build_link = [&](const std::vector<int>& c) {
    Eigen::MatrixXd link = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) link.col(c[static_cast<std::size_t>(j)]) += b.col(j);
    return link;
  };

  for (int round = 0; round < 1000; ++round) {
    bool improved = false;

    // Node-move pass.
    Eigen::MatrixXd link = build_link(comm);
    std::vector<int> size(un, 0);
    for (int c : comm) ++size[static_cast<std::size_t>(c)];
    std::vector<bool> moved(un, false);
    std::vector<std::pair<Eigen::Index, int>> log;  // (node, previous community)
    double running = 0.0;
    double best = 0.0;
    std::size_t best_len = 0;
    for (Eigen::Index step = 0; step < n; ++step) {
      Eigen::Index node = -1;
      int target = -1;
      double gain_best = -std::numeric_limits<double>::infinity();
      int empty = -1;
      for (std::size_t c = 0; c < un; ++c) {
        if (size[c] == 0) {
          empty = static_cast<int>(c);
          break;
        }
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        if (moved[static_cast<std::size_t>(i)]) continue;
        const int from = comm[static_cast<std::size_t>(i)];
        for (std::size_t c = 0; c < un; ++c) {
          const int to = static_cast<int>(c);
          if (to == from || (size[c] == 0 && to != empty)) continue;
          if (size[c] == 0 && size[static_cast<std::size_t>(from)] == 1) continue;
          const double gain = link(i, to) - link(i, from);
          if (gain > gain_best) {
            gain_best = gain;
            node = i;
            target = to;
          }
        }
      }
      if (node < 0) break;
      const int from = comm[static_cast<std::size_t>(node)];
      log.emplace_back(node, from);
      comm[static_cast<std::size_t>(node)] = target;
      --size[static_cast<std::size_t>(from)];
      ++size[static_cast<std::size_t>(target)];
      link.col(from) -= b.col(node);
      link.col(target) += b.col(node);
      moved[static_cast<std::size_t>(node)] = true;
      running += gain_best;
      if (running > best + kMinGain) {
        best = running;
        best_len = log.size();
      }
    }
    for (std::size_t k = log.size(); k > best_len; --k) comm[static_cast<std::size_t>(log[k - 1].first)] = log[k - 1].second;
    if (best_len > 0) improved = true;

    // Best exchange of two nodes between their communities.
    {
      const Eigen::MatrixXd lk = build_link(comm);
      double gain_best = kMinGain;
      Eigen::Index xa = -1;
      Eigen::Index xb = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int ci = comm[static_cast<std::size_t>(i)];
        for (Eigen::Index j = i + 1; j < n; ++j) {
          const int cj = comm[static_cast<std::size_t>(j)];
          if (ci == cj) continue;
          const double gain = lk(i, cj) - lk(i, ci) + lk(j, ci) - lk(j, cj) - 2.0 * b(i, j);
          if (gain > gain_best) {
            gain_best = gain;
            xa = i;
            xb = j;
          }
        }
      }
      if (xa >= 0) {
        std::swap(comm[static_cast<std::size_t>(xa)], comm[static_cast<std::size_t>(xb)]);
        improved = true;
      }
    }

    // Merge pass.
    while (true) {
      comm = relabel(comm);
      const int k = *std::max_element(comm.begin(), comm.end()) + 1;
      Eigen::MatrixXd between = Eigen::MatrixXd::Zero(k, k);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) between(comm[static_cast<std::size_t>(i)], comm[static_cast<std::size_t>(j)]) += b(i, j);
      double gain_best = kMinGain;
      int ca = -1;
      int cb = -1;
      for (int x = 0; x < k; ++x)
        for (int y = x + 1; y < k; ++y)
          if (between(x, y) > gain_best) {
            gain_best = between(x, y);
            ca = x;
            cb = y;
          }
      if (ca < 0) break;
      for (int& c : comm)
        if (c == cb) c = ca;
      improved = true;
    }
    if (!improved) break;
  }
  return relabel(comm);
}
}  // namespace detail

// Maximizes directed modularity (resolution 1) on A = |W| with the diagonal
// removed: recursive spectral bisection of the symmetrized modularity matrix
// with Kernighan-Lin style fine-tuning of every split, followed by a global
// node-move and merge refinement of the resulting partition.
inline Partition modularity_q(const Matrix& w) {
  require_square(w, "modularity_q");
  Eigen::MatrixXd a = w.cwiseAbs();
  a.diagonal().setZero();
  const Eigen::Index n = a.rows();
  const double m = a.sum();
  if (!(m > 0.0)) throw DegenerateInput("modularity_q: zero total weight");

  const Eigen::VectorXd k_out = a.rowwise().sum();
  const Eigen::VectorXd k_in = a.colwise().sum().transpose();
  const Eigen::MatrixXd b1 = a - k_out * k_in.transpose() / m;
  const Eigen::MatrixXd bsym = b1 + b1.transpose();

  std::vector<int> ci(static_cast<std::size_t>(n), 0);
  int communities = 1;
  std::vector<int> pending = {0};

  while (!pending.empty()) {
    const int current = pending.front();
    std::vector<Eigen::Index> ind;
    for (Eigen::Index i = 0; i < n; ++i)
      if (ci[static_cast<std::size_t>(i)] == current) ind.push_back(i);
    const auto ng = static_cast<Eigen::Index>(ind.size());
    if (ng < 2) {
      pending.erase(pending.begin());
      continue;
    }
    Eigen::MatrixXd bg(ng, ng);
    for (Eigen::Index i = 0; i < ng; ++i)
      for (Eigen::Index j = 0; j < ng; ++j) bg(i, j) = bsym(ind[static_cast<std::size_t>(i)], ind[static_cast<std::size_t>(j)]);
    const Eigen::VectorXd rowsum = bg.rowwise().sum();
    bg.diagonal() -= rowsum;

    const Eigen::VectorXd v1 = detail::leading_eigenvector(bg);
    Eigen::VectorXd s = Eigen::VectorXd::Ones(ng);
    for (Eigen::Index i = 0; i < ng; ++i)
      if (v1(i) < 0.0) s(i) = -1.0;
    double q = s.dot(bg * s);

    if (q > 1e-10) {
      double qmax = q;
      Eigen::MatrixXd bz = bg;
      bz.diagonal().setZero();
      std::vector<bool> moved(static_cast<std::size_t>(ng), false);
      Eigen::VectorXd sit = s;
      for (Eigen::Index round = 0; round < ng; ++round) {
        const Eigen::VectorXd gain = qmax - 4.0 * sit.cwiseProduct(bz * sit).array();
        Eigen::Index imax = -1;
        double best = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < ng; ++i) {
          if (!moved[static_cast<std::size_t>(i)] && gain(i) > best) {
            best = gain(i);
            imax = i;
          }
        }
        qmax = best;
        sit(imax) = -sit(imax);
        moved[static_cast<std::size_t>(imax)] = true;
        if (qmax > q) {
          q = qmax;
          s = sit;
        }
      }
      if (std::abs(s.sum()) == static_cast<double>(ng)) {
        pending.erase(pending.begin());
      } else {
        const int fresh = communities++;
        for (Eigen::Index i = 0; i < ng; ++i)
          if (s(i) < 0.0) ci[static_cast<std::size_t>(ind[static_cast<std::size_t>(i)])] = fresh;
        pending.insert(pending.begin(), fresh);
      }
    } else {
      pending.erase(pending.begin());
    }
  }

  // Refine the spectral partition and, as alternative starting points, the
  // all-singletons and single-community partitions; keep the best.
  auto within = [&](const std::vector<int>& c) {
    double q = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (c[static_cast<std::size_t>(i)] == c[static_cast<std::size_t>(j)]) q += bsym(i, j);
    return q;
  };
  std::vector<int> singletons(static_cast<std::size_t>(n));
  std::iota(singletons.begin(), singletons.end(), 0);
  std::vector<int> comm = detail::refine_partition(bsym, ci);
  double comm_q = within(comm);
  for (const auto& start : {singletons, std::vector<int>(static_cast<std::size_t>(n), 0)}) {
    auto candidate = detail::refine_partition(bsym, start);
    const double q = within(candidate);
    if (q > comm_q + 1e-12) {
      comm = std::move(candidate);
      comm_q = q;
    }
  }
  Partition out;
  out.community = comm;
  double q = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (comm[static_cast<std::size_t>(i)] == comm[static_cast<std::size_t>(j)]) q += bsym(i, j);
  out.q = q / (2.0 * m);
  return out;
}

// ---------------------------------------------------------------------------
// Distance dependence
// ---------------------------------------------------------------------------

// Pearson r (permutation p) between p_ij = |w_ij| / sum|w| and D_ij over
// off-diagonal pairs with p_ij > 0.
inline Correlation distance_weight_correlation(const Matrix& w, const DistanceLattice& lattice) {
  require_square(w, "distance_weight_correlation");
  if (static_cast<std::size_t>(w.rows()) != lattice.size()) {
    throw InvalidArgument("distance_weight_correlation: W does not match lattice size");
  }
  const double total = total_weight(w);
  std::vector<double> p;
  std::vector<double> d;
  if (total > 0.0) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        if (i == j) continue;
        const double pij = std::abs(w(i, j)) / total;
        if (pij > 0.0) {
          p.push_back(pij);
          d.push_back(lattice.distance(i, j));
        }
      }
    }
  }
  if (p.size() < 3) throw DegenerateInput("distance_weight_correlation: fewer than 3 nonzero connections");
  return pearson(p, d);
}

}  // namespace sernn::metrics
