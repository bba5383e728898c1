#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "sernn/adam.hpp"
#include "sernn/rate_net.hpp"

using namespace sernn;
using namespace sernn::rate;

namespace {

// Oracle for the target rule: squared distances on the 3x3 grid, no floats.
int oracle_target(int goal, int a, int b) {
  auto d2 = [](int p, int q) {
    const int dr = p / 3 - q / 3, dc = p % 3 - q % 3;
    return dr * dr + dc * dc;
  };
  const int da = d2(goal, kOptionCells[a]);
  const int db = d2(goal, kOptionCells[b]);
  if (da == db) return -1;
  return da < db ? a : b;
}

RateRNN small_net(std::uint64_t seed, int n) {
  RandomSource rng(seed);
  RateRNN net = RateRNN::zeros(n);
  net.visit([&](const char*, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-0.8, 0.8);
  });
  return net;
}

}  // namespace

TEST(Trials, GoalCornerExamples) {
  // goal (0,0) = cell 0; options (0,1) = class 0, (1,2) = class 2
  EXPECT_EQ(nearer_option(0, 0, 2), 0);
  EXPECT_EQ(nearer_option(0, 2, 0), 0);
  // (0,1) vs (1,0) tie
  EXPECT_EQ(nearer_option(0, 0, 1), -1);
}

TEST(Trials, TargetRuleMatchesIntegerOracle) {
  for (int goal : kGoalCells)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        if (a != b) EXPECT_EQ(nearer_option(goal, a, b), oracle_target(goal, a, b));
}

TEST(Trials, LayoutInvariants) {
  RandomSource rng(1);
  const auto batch = generate_trials(rng, 200);
  ASSERT_EQ(batch.inputs.size(), 50u);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Trial& t = batch.trials[j];
    EXPECT_NE(t.option_a, t.option_b);
    EXPECT_TRUE(t.target == t.option_a || t.target == t.option_b);
    EXPECT_EQ(oracle_target(t.goal, t.option_a, t.option_b), t.target);
    for (int step = 0; step < 50; ++step) {
      const auto& x = batch.inputs[static_cast<std::size_t>(step)];
      int goal_on = 0, option_on = 0;
      for (int c = 0; c < 9; ++c) goal_on += x(c, static_cast<Eigen::Index>(j)) > 0.5;
      for (int c = 9; c < 18; ++c) option_on += x(c, static_cast<Eigen::Index>(j)) > 0.5;
      EXPECT_EQ(goal_on, step < 20 ? 1 : 0) << step;
      EXPECT_EQ(option_on, step >= 30 ? 2 : 0) << step;
    }
  }
}

TEST(Trials, NoiseStatistics) {
  RandomSource rng(2);
  const auto batch = generate_trials(rng, 500);
  // delay period carries only noise
  double s = 0, ss = 0;
  long n = 0;
  for (int step = 20; step < 30; ++step) {
    const auto& x = batch.inputs[static_cast<std::size_t>(step)];
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      s += x.data()[i];
      ss += x.data()[i] * x.data()[i];
      ++n;
    }
  }
  EXPECT_NEAR(s / n, 0.0, 0.002);
  EXPECT_NEAR(std::sqrt(ss / n), 0.1, 0.002);
}

TEST(Trials, LabelMarginalsAreUniform) {
  // exact marginal by enumerating goals x unordered non-tied option pairs
  std::map<int, int> exact;
  int total = 0;
  for (int goal : kGoalCells)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) {
        if (a == b) continue;
        const int t = oracle_target(goal, a, b);
        if (t < 0) continue;
        ++exact[t];
        ++total;
      }
  for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(exact[c] / static_cast<double>(total), 0.25);

  RandomSource rng(3);
  const auto batch = generate_trials(rng, 10000);
  std::map<int, int> counts;
  for (const auto& t : batch.trials) ++counts[t.target];
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(counts[c] / 10000.0, 0.25, 0.02);
}

TEST(Trials, DeterministicPerSeed) {
  RandomSource a(9), b(9);
  const auto x = generate_trials(a, 20);
  const auto y = generate_trials(b, 20);
  for (int t = 0; t < 50; ++t) EXPECT_EQ(x.inputs[t], y.inputs[t]);
  EXPECT_THROW(generate_trials(a, 0), InvalidArgument);
}

TEST(Forward, ZeroNetIsUniform) {
  RandomSource rng(4);
  const auto batch = generate_trials(rng, 10);
  const auto fwd = forward(RateRNN::zeros(100), batch);
  EXPECT_EQ(fwd.logits.cwiseAbs().maxCoeff(), 0.0);
  const auto lg = loss_and_grads(RateRNN::zeros(100), batch, 0.0, ConstraintTerm{0.0, Matrix::Zero(100, 100)});
  EXPECT_NEAR(lg.loss.task, 1.386294361, 1e-9);
}

TEST(Forward, BiasOnlyPicksClassZero) {
  RateRNN net = RateRNN::zeros(20);
  net.b_out << 1, 0, 0, 0;
  RandomSource rng(5);
  const auto batch = generate_trials(rng, 50);
  const auto fwd = forward(net, batch);
  for (Eigen::Index j = 0; j < fwd.logits.cols(); ++j) {
    Eigen::Index arg;
    fwd.logits.col(j).maxCoeff(&arg);
    EXPECT_EQ(arg, 0);
  }
}

TEST(Forward, HiddenStaysInTanhRange) {
  RandomSource rng(6);
  RateRNN net = init_rate_rnn(rng, 100);
  net.w_rec *= 5.0;
  net.w_in *= 10.0;
  const auto fwd = forward(net, generate_trials(rng, 16));
  ASSERT_EQ(fwd.hidden.size(), 51u);
  for (const auto& h : fwd.hidden) EXPECT_LE(h.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Forward, NonFiniteIsDivergence) {
  RateRNN net = RateRNN::zeros(4);
  net.b_out(0) = std::numeric_limits<double>::quiet_NaN();
  RandomSource rng(7);
  EXPECT_THROW(forward(net, generate_trials(rng, 2)), Divergence);
}

TEST(Init, OrthogonalAtRadiusPointNine) {
  RandomSource rng(8);
  const RateRNN net = init_rate_rnn(rng, 100);
  const Matrix g = net.w_rec.transpose() * net.w_rec;
  EXPECT_LE((g - 0.81 * Matrix::Identity(100, 100)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(net.w_in.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(18.0));
  EXPECT_LE(net.w_out.cwiseAbs().maxCoeff(), 0.1);
}

TEST(Gradients, MatchCentralDifferences) {
  const ConstraintContext ctx(build_lattice({5, 1, 1}));
  RateRNN net = small_net(404, 5);
  RandomSource rng(405);
  const auto batch = generate_trials(rng, 3);
  for (auto kind : kAllKinds) {
    const double gamma = 0.05;
    const ConstraintTerm term = constraint_loss(net.w_rec, kind, ctx);
    const auto lg = loss_and_grads(net, batch, gamma, term);
    auto loss_at = [&](const RateRNN& p) {
      const double task = cross_entropy(softmax(forward(p, batch).logits), targets_of(batch));
      return task + gamma * p.w_rec.cwiseAbs().cwiseProduct(term.multiplier).sum();
    };
    const double h = 1e-5;
    std::vector<Eigen::MatrixXd> analytic;
    lg.grads.visit([&](const char*, const auto& t) { analytic.emplace_back(t); });
    std::size_t k = 0;
    net.visit([&](const char* name, auto& t) {
      const Eigen::MatrixXd& ga = analytic[k++];
      Eigen::MatrixXd fd(t.rows(), t.cols());
      for (Eigen::Index i = 0; i < t.rows(); ++i)
        for (Eigen::Index j = 0; j < t.cols(); ++j) {
          const double keep = t(i, j);
          t(i, j) = keep + h;
          const double up = loss_at(net);
          t(i, j) = keep - h;
          const double down = loss_at(net);
          t(i, j) = keep;
          fd(i, j) = (up - down) / (2 * h);
        }
      const double rel = (ga - fd).norm() / std::max(fd.norm(), 1e-12);
      EXPECT_LE(rel, 1e-4) << kind_name(kind) << " " << name;
    });
  }
}

TEST(Gradients, ZeroGammaIsPureTask) {
  const ConstraintContext ctx(build_lattice({5, 1, 1}));
  const RateRNN net = small_net(406, 5);
  RandomSource rng(407);
  const auto batch = generate_trials(rng, 4);
  const auto with_term = loss_and_grads(net, batch, 0.0, constraint_loss(net.w_rec, RegularizerKind::SpaceComm, ctx));
  const auto without = loss_and_grads(net, batch, 0.0, ConstraintTerm{0.0, Matrix::Zero(5, 5)});
  EXPECT_EQ(with_term.grads.w_rec, without.grads.w_rec);
  EXPECT_EQ(with_term.loss.total, with_term.loss.task);
}

TEST(Gradients, ConstraintTouchesOnlyRecurrentWeights) {
  const ConstraintContext ctx(build_lattice({5, 1, 1}));
  const RateRNN net = small_net(408, 5);
  RandomSource rng(409);
  const auto batch = generate_trials(rng, 4);
  const auto term = constraint_loss(net.w_rec, RegularizerKind::BaselineL1, ctx);
  const auto a = loss_and_grads(net, batch, 0.0, term);
  const auto b = loss_and_grads(net, batch, 0.7, term);
  EXPECT_EQ(a.grads.w_in, b.grads.w_in);
  EXPECT_EQ(a.grads.w_out, b.grads.w_out);
  EXPECT_EQ(a.grads.b, b.grads.b);
  EXPECT_TRUE((b.grads.w_rec - a.grads.w_rec).isApprox(0.7 * constraint_gradient(net.w_rec, term.multiplier)));
  EXPECT_THROW(loss_and_grads(net, batch, -1.0, term), InvalidArgument);
}

TEST(Accuracy, Examples) {
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(4, 3);
  logits(2, 0) = 1;
  logits(0, 1) = 1;
  logits(3, 2) = 1;
  const std::vector<int> targets = {2, 0, 3};
  EXPECT_EQ(accuracy(logits, targets), 1.0);
  const double single = accuracy(logits.leftCols(1), std::vector<int>{1});
  EXPECT_TRUE(single == 0.0 || single == 1.0);
  RandomSource rng(10);
  EXPECT_NEAR(accuracy(RateRNN::zeros(100), generate_trials(rng, 10000)), 0.25, 0.02);
}

TEST(Training, LossDecreasesOverFirstEpoch) {
  RandomSource init(11), data(12), eval_rng(13);
  RateRNN net = init_rate_rnn(init, 100);
  const auto eval = generate_trials(eval_rng, 500);
  const ConstraintTerm none{0.0, Matrix::Zero(100, 100)};
  const double before = loss_and_grads(net, eval, 0.0, none).loss.task;
  Adam<RateRNN> opt;
  for (int step = 0; step < 25; ++step) opt.step(net, loss_and_grads(net, generate_trials(data, 128), 0.0, none).grads);
  EXPECT_LT(loss_and_grads(net, eval, 0.0, none).loss.task, before);
}
