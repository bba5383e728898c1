#pragma once

// The oracle suite behind `sernn selftest`: each check compares a kernel
// against an independent reference on pinned random inputs.

#include <cmath>
#include <string>
#include <vector>

#include "sernn/constraints.hpp"
#include "sernn/embedding.hpp"
#include "sernn/metrics.hpp"
#include "sernn/numerics.hpp"
#include "sernn/oracles.hpp"
#include "sernn/rate_net.hpp"
#include "sernn/spike_data.hpp"
#include "sernn/spiking_net.hpp"

namespace sernn::selftest {

struct OracleCheck {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst observed error
  double tolerance = 0.0;
  std::string detail;
};

inline constexpr double kExpTolerance = 1e-10;
inline constexpr double kEigenTolerance = 1e-8;
inline constexpr double kModularityTolerance = 1e-10;
inline constexpr double kEntropyAllOnes = 0.132877124;
inline constexpr double kEntropyAllOnesTolerance = 1e-9;
inline constexpr double kSpectralEntropyTolerance = 1e-12;
inline constexpr double kGradientTolerance = 1e-4;
inline constexpr double kFiniteDifferenceStep = 1e-5;

inline oracle::Dense to_dense(const Matrix& m) {
  oracle::Dense d(static_cast<std::size_t>(m.rows()), std::vector<long double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) d[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return d;
}

inline Matrix random_matrix(RandomSource& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline std::string format_value(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// 50 random 6x6 matrices scaled to ||M||_1 in (0, 5].
inline OracleCheck check_matrix_exp(std::uint64_t seed = 101) {
  RandomSource rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix m = random_matrix(rng, 6, 6, -1.0, 1.0);
    const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
    m *= rng.uniform(0.05, 5.0) / norm1;
    const Matrix got = matrix_exp(m);
    const auto ref = oracle::taylor_exp(to_dense(m), 100);
    long double diff = 0.0L;
    long double norm = 0.0L;
    for (Eigen::Index i = 0; i < 6; ++i) {
      for (Eigen::Index j = 0; j < 6; ++j) {
        const long double r = ref[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        diff += (got(i, j) - r) * (got(i, j) - r);
        norm += r * r;
      }
    }
    worst = std::max(worst, static_cast<double>(std::sqrt(diff / norm)));
  }
  return {"matrix_exp vs 100-term Taylor (50 random 6x6, ||M||_1 <= 5)", worst <= kExpTolerance, worst,
          kExpTolerance, "max relative Frobenius error " + format_value(worst)};
}

// 100 random 3x3 integer matrices against characteristic-polynomial roots,
// plus symmetric 100x100 matrices whose spectra must be real.
inline OracleCheck check_eigenvalues(std::uint64_t seed = 202) {
  RandomSource rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix m(3, 3);
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < 3; ++j) m(i, j) = static_cast<double>(static_cast<int>(rng.uniform_index(19)) - 9);
    const auto c = oracle::char_poly3(to_dense(m));
    const auto roots = oracle::polynomial_roots({c[0], c[1], c[2]});
    worst = std::max(worst, oracle::multiset_distance(eigenvalues(m), roots));
  }
  double worst_imag = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    Matrix a = random_matrix(rng, 100, 100, -1.0, 1.0);
    const Matrix s = 0.5 * (a + a.transpose());
    for (const auto& l : eigenvalues(s)) worst_imag = std::max(worst_imag, std::abs(l.imag()));
  }
  const bool ok = worst <= kEigenTolerance && worst_imag <= kEigenTolerance;
  return {"eigenvalues vs characteristic-polynomial roots (100 integer 3x3; symmetric 100x100 real)", ok,
          std::max(worst, worst_imag), kEigenTolerance,
          "max root deviation " + format_value(worst) + ", max |Im| symmetric " + format_value(worst_imag)};
}

inline Matrix two_block_graph() {
  Matrix w = Matrix::Zero(4, 4);
  w(0, 1) = w(1, 0) = w(2, 3) = w(3, 2) = 1.0;
  return w;
}

// 20 random weighted 6-node digraphs against exhaustive search over all 203
// partitions, and the two-block example.
inline OracleCheck check_modularity(std::uint64_t seed = 303) {
  RandomSource rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix w = Matrix::Zero(6, 6);
    for (Eigen::Index i = 0; i < 6; ++i)
      for (Eigen::Index j = 0; j < 6; ++j)
        if (i != j && rng.uniform() < 0.5) w(i, j) = rng.uniform(0.1, 1.0);
    if (w.sum() == 0.0) w(0, 1) = 1.0;
    const double got = metrics::modularity_q(w).q;
    const auto best = static_cast<double>(oracle::brute_force_modularity(to_dense(w)));
    worst = std::max(worst, std::abs(got - best));
  }
  const double two_block = metrics::modularity_q(two_block_graph()).q;
  const double block_err = std::abs(two_block - 0.5);
  const bool ok = worst <= kModularityTolerance && block_err <= kModularityTolerance;
  return {"modularity_q vs brute-force partitions (20 random 6-node digraphs; two-block Q = 0.5)", ok,
          std::max(worst, block_err), kModularityTolerance,
          "max |Q - Q_best| " + format_value(worst) + ", two-block Q " + format_value(two_block)};
}

inline OracleCheck check_entropy() {
  const double h = metrics::shannon_entropy(Matrix::Ones(100, 100));
  const ComplexSpectrum id4(4, {1.0, 0.0});
  const double hs = metrics::spectral_entropy(id4);
  const double e1 = std::abs(h - kEntropyAllOnes);
  const double e2 = std::abs(hs - 2.0);
  const bool ok = e1 <= kEntropyAllOnesTolerance && e2 <= kSpectralEntropyTolerance;
  return {"entropy analytics (H(all-ones 100x100) = 0.132877124; spectral entropy of I_4 = 2)", ok,
          std::max(e1, e2), kEntropyAllOnesTolerance,
          "H(W) " + format_value(h) + ", H_lambda " + format_value(hs)};
}

// ||g - g_fd|| / max(||g||, ||g_fd||) for one tensor.
inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-300});
  return (analytic - numeric).norm() / scale;
}

// Central differences of `loss` for every entry of every tensor of `net`,
// compared tensor-wise with `grads`. Returns the worst tensor and its error.
template <typename Net, typename LossFn>
std::pair<std::string, double> gradient_check(const Net& net, const Net& grads, LossFn&& loss) {
  std::vector<Eigen::MatrixXd> analytic;
  grads.visit([&](const char*, const auto& t) { analytic.emplace_back(t); });
  std::string worst_name;
  double worst = 0.0;
  std::size_t index = 0;
  Net probe = net;
  probe.visit([&](const char* name, auto& tensor) {
    Eigen::MatrixXd numeric(tensor.rows(), tensor.cols());
    for (Eigen::Index i = 0; i < tensor.rows(); ++i) {
      for (Eigen::Index j = 0; j < tensor.cols(); ++j) {
        const double keep = tensor(i, j);
        tensor(i, j) = keep + kFiniteDifferenceStep;
        const double up = loss(probe);
        tensor(i, j) = keep - kFiniteDifferenceStep;
        const double down = loss(probe);
        tensor(i, j) = keep;
        numeric(i, j) = (up - down) / (2.0 * kFiniteDifferenceStep);
      }
    }
    const double err = relative_error(analytic[index++], numeric);
    if (err >= worst) {
      worst = err;
      worst_name = name;
    }
  });
  return {worst_name, worst};
}

// 5-neuron rate net, 3 trials, gamma > 0 with the constraint multiplier frozen.
inline OracleCheck check_rate_gradients(std::uint64_t seed = 404) {
  RandomSource rng(seed);
  const ConstraintContext ctx(build_lattice({5, 1, 1}));
  rate::RateRNN net = rate::init_rate_rnn(rng, 5);
  net.w_rec = random_matrix(rng, 5, 5, -0.8, 0.8);
  net.b = random_matrix(rng, 5, 1, -0.2, 0.2);
  net.b_out = random_matrix(rng, rate::kClasses, 1, -0.2, 0.2);
  const auto batch = rate::generate_trials(rng, 3);
  const double gamma = 0.05;
  const ConstraintTerm frozen = constraint_loss(net.w_rec, RegularizerKind::SpaceComm, ctx);
  const auto lg = rate::loss_and_grads(net, batch, gamma, frozen);
  auto loss = [&](const rate::RateRNN& p) {
    const double task = rate::cross_entropy(rate::softmax(rate::forward(p, batch).logits), rate::targets_of(batch));
    return task + gamma * p.w_rec.cwiseAbs().cwiseProduct(frozen.multiplier).sum();
  };
  const auto [name, err] = gradient_check(net, lg.grads, loss);
  return {"rate BPTT gradient vs central differences (5 neurons, gamma > 0, frozen multiplier)",
          err <= kGradientTolerance, err, kGradientTolerance,
          "worst tensor " + name + " relative error " + format_value(err)};
}

// 5-neuron, 20-step LIF toy with the smooth spike function in both passes.
inline OracleCheck check_spiking_gradients(std::uint64_t seed = 505) {
  RandomSource rng(seed);
  const int channels = 4;
  const int classes = 3;
  const int steps = 20;
  snn::LIFNetwork net = snn::LIFNetwork::zeros(5, channels, classes, 0.5);
  net.w_in = random_matrix(rng, 5, channels, 0.0, 1.2);
  net.w_rec = random_matrix(rng, 5, 5, -0.5, 0.5);
  net.w_out = random_matrix(rng, classes, 5, -1.0, 1.0);
  net.beta = random_matrix(rng, 5, 1, 0.75, 0.95);
  net.beta_out = random_matrix(rng, classes, 1, 0.8, 0.95);

  spikes::SpikeBatch batch;
  batch.steps = steps;
  batch.channels = channels;
  batch.labels = {0, 2};
  batch.active.resize(steps);
  for (int t = 0; t < steps; ++t)
    for (int col = 0; col < 2; ++col)
      for (int ch = 0; ch < channels; ++ch)
        if (rng.uniform() < 0.3) batch.active[static_cast<std::size_t>(t)].emplace_back(col, ch);

  const ConstraintTerm none{0.0, Matrix::Zero(5, 5)};
  const auto r = snn::forward_and_loss<snn::SmoothSpike>(net, batch, 0.0, none, true);
  auto loss = [&](const snn::LIFNetwork& p) {
    return snn::forward_and_loss<snn::SmoothSpike>(p, batch, 0.0, none, false).loss.total;
  };
  const auto [name, err] = gradient_check(net, r.grads, loss);
  return {"spiking surrogate gradient vs central differences of the smoothed model (5 neurons, 20 steps)",
          err <= kGradientTolerance, err, kGradientTolerance,
          "worst tensor " + name + " relative error " + format_value(err)};
}

inline std::vector<OracleCheck> run_all() {
  return {check_matrix_exp(), check_eigenvalues(), check_modularity(),
          check_entropy(),    check_rate_gradients(), check_spiking_gradients()};
}

}  // namespace sernn::selftest
