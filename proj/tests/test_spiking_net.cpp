#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "sernn/spike_data.hpp"
#include "sernn/spiking_net.hpp"

using namespace sernn;
using namespace sernn::snn;
using spikes::SpikeBatch;
using spikes::SpikeDataset;

namespace {

LIFNetwork random_net(std::uint64_t seed, int n, int channels, int classes) {
  RandomSource rng(seed);
  LIFNetwork net = LIFNetwork::zeros(n, channels, classes, 0.5);
  auto fill = [&](auto& m, double lo, double hi) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(lo, hi);
  };
  fill(net.w_in, 0.2, 1.2);
  fill(net.w_rec, -0.6, 0.6);
  fill(net.w_out, -1.0, 1.0);
  fill(net.beta, 0.6, 0.95);
  fill(net.beta_out, 0.6, 0.95);
  return net;
}

SpikeBatch random_batch(std::uint64_t seed, int batch, int channels, int classes, int steps, double p = 0.3) {
  RandomSource rng(seed);
  SpikeBatch b;
  b.steps = steps;
  b.channels = channels;
  b.active.resize(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t)
    for (int col = 0; col < batch; ++col)
      for (int ch = 0; ch < channels; ++ch)
        if (rng.uniform() < p) b.active[static_cast<std::size_t>(t)].emplace_back(col, ch);
  for (int col = 0; col < batch; ++col) b.labels.push_back(static_cast<int>(rng.uniform_index(classes)));
  return b;
}

// Hand-unrolled hard-step forward pass for one sample, plain loops only.
double unrolled_loss(const LIFNetwork& net, const SpikeBatch& batch) {
  const int n = static_cast<int>(net.hidden()), k = static_cast<int>(net.classes());
  double total = 0.0;
  for (int col = 0; col < batch.size(); ++col) {
    std::vector<double> v(n, 0.0), s(n, 0.0), u(k, 0.0), best(k, -1e300);
    for (int t = 0; t < batch.steps; ++t) {
      std::vector<double> x(static_cast<std::size_t>(net.channels()), 0.0);
      for (const auto& [c, ch] : batch.active[static_cast<std::size_t>(t)])
        if (c == col) x[ch] = 1.0;
      std::vector<double> v2(n), s2(n);
      for (int i = 0; i < n; ++i) {
        double cur = 0.0;
        for (int ch = 0; ch < net.channels(); ++ch) cur += net.w_in(i, ch) * x[ch];
        for (int j = 0; j < n; ++j) cur += net.w_rec(i, j) * s[j];
        v2[i] = net.beta(i) * v[i] + cur - 1.0 * s[i];
        s2[i] = v2[i] - 1.0 >= 0.0 ? 1.0 : 0.0;
      }
      v = v2;
      s = s2;
      for (int c = 0; c < k; ++c) {
        double drive = 0.0;
        for (int i = 0; i < n; ++i) drive += net.w_out(c, i) * s[i];
        u[c] = net.beta_out(c) * u[c] + drive;
        best[c] = std::max(best[c], u[c]);
      }
    }
    double mx = *std::max_element(best.begin(), best.end()), z = 0.0;
    for (double b : best) z += std::exp(b - mx);
    total += -(best[batch.labels[col]] - mx - std::log(z));
  }
  return total / batch.size();
}

ConstraintTerm no_constraint(int n) { return {0.0, Matrix::Zero(n, n)}; }

}  // namespace

TEST(LifStep, Arithmetic) {
  LIFNetwork net = LIFNetwork::zeros(1, 1, 1);
  net.beta(0) = 0.8;
  net.w_in(0, 0) = 0.1;
  Vector v(1), s(1), x(1);
  v << 0.5;
  s << 0.0;
  x << 1.0;
  auto r = lif_step(v, s, x, net);
  EXPECT_NEAR(r.v(0), 0.5, 1e-15);
  EXPECT_EQ(r.s(0), 0.0);

  net.beta(0) = 0.5;
  net.w_in(0, 0) = 0.0;
  v << 1.2;
  s << 1.0;
  r = lif_step(v, s, x, net);
  EXPECT_NEAR(r.v(0), -0.4, 1e-15);
}

TEST(LifStep, ZeroInputDecays) {
  LIFNetwork net = LIFNetwork::zeros(3, 2, 2);
  net.beta << 0.9, 0.5, 0.99;
  Vector v(3), s = Vector::Zero(3), x = Vector::Zero(2);
  v << 0.9, -0.5, 0.99;
  double prev = v.cwiseAbs().maxCoeff();
  for (int t = 0; t < 200; ++t) {
    auto r = lif_step(v, s, x, net);
    EXPECT_EQ(r.s.sum(), 0.0);
    v = r.v;
    s = r.s;
    EXPECT_LE(v.cwiseAbs().maxCoeff(), prev);
    prev = v.cwiseAbs().maxCoeff();
  }
  EXPECT_LT(prev, 0.99 * std::pow(0.99, 199));
}

TEST(Surrogate, Values) {
  EXPECT_EQ(surrogate_grad(0.0), 1.0);
  EXPECT_NEAR(surrogate_grad(0.01), 0.25, 1e-15);
  for (double u : {1e-4, 0.003, 0.5, 7.0}) EXPECT_EQ(surrogate_grad(u), surrogate_grad(-u));
  EXPECT_EQ(HardSpike::fire(0.0), 1.0);
  EXPECT_EQ(HardSpike::fire(-1e-12), 0.0);
}

TEST(SmoothSpike, DerivativeIsSurrogate) {
  for (double u : {-0.3, -0.01, 0.002, 0.05, 1.0}) {
    const double h = 1e-7;
    EXPECT_NEAR((SmoothSpike::fire(u + h) - SmoothSpike::fire(u - h)) / (2 * h), surrogate_grad(u), 1e-6);
  }
}

TEST(Decay, PlugIn) {
  EXPECT_NEAR(decay_from_tau(20.0, 0.5), 0.975309912, 1e-9);
  EXPECT_NEAR(std::exp(-0.005), 0.995012479, 1e-9);
  EXPECT_EQ(decay_from_tau(1000.0, 0.5), 0.995);
  EXPECT_NEAR(decay_from_tau(0.1, 0.5), std::exp(-1.0 / 3.0), 1e-15);
}

TEST(Decay, InitInvariants) {
  RandomSource rng(1);
  const Vector beta = init_decays(rng, 5000);
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    EXPECT_GT(beta(i), 0.0);
    EXPECT_LE(beta(i), 0.995);
    EXPECT_GE(-0.5 / std::log(beta(i)), 1.5 - 1e-9);
  }
  EXPECT_THROW(init_decays(rng, 0), InvalidArgument);
}

TEST(Decay, GammaMeanBeforeClipping) {
  RandomSource rng(2);
  const auto taus = gamma_sample(rng, kTauShape, kMeanTauMs / kTauShape, 100000);
  EXPECT_NEAR(mean(taus), 20.0, 0.2);
}

TEST(Decay, ClipAfterUpdate) {
  Vector beta(3);
  beta << 0.1, 0.999, 0.9;
  clip_decays(beta, 0.5);
  EXPECT_NEAR(beta(0), std::exp(-1.0 / 3.0), 1e-15);
  EXPECT_EQ(beta(1), 0.995);
  EXPECT_EQ(beta(2), 0.9);
}

TEST(Forward, ZeroWeightsTwentyClasses) {
  const LIFNetwork net = LIFNetwork::zeros(10, 4, 20);
  const auto batch = random_batch(3, 6, 4, 20, 15);
  const auto r = forward_and_loss(net, batch, 0.0, no_constraint(10), false);
  EXPECT_NEAR(r.loss.task, std::log(20.0), 1e-12);
  EXPECT_NEAR(r.loss.task, 2.995732274, 1e-9);
}

TEST(Forward, NoInputNoSpikes) {
  const LIFNetwork net = random_net(4, 8, 3, 2);
  SpikeBatch batch = random_batch(5, 4, 3, 2, 30, 0.0);
  const auto r = forward_and_loss(net, batch, 0.0, no_constraint(8));
  EXPECT_EQ(r.spike_counts.sum(), 0.0);
  EXPECT_EQ(r.grads.w_out.cwiseAbs().sum(), 0.0);
}

TEST(Forward, MatchesHandUnrolledToy) {
  const LIFNetwork net = random_net(6, 5, 4, 3);
  for (int steps : {3, 25}) {
    const auto batch = random_batch(7, 4, 4, 3, steps, 0.5);
    const auto r = forward_and_loss(net, batch, 0.0, no_constraint(5), false);
    EXPECT_NEAR(r.loss.task, unrolled_loss(net, batch), 1e-12) << steps;
  }
}

TEST(Forward, ConstraintOnRecurrentOnly) {
  const ConstraintContext ctx(build_lattice({5, 1, 1}));
  const LIFNetwork net = random_net(8, 5, 4, 3);
  const auto batch = random_batch(9, 4, 4, 3, 20);
  const auto term = constraint_loss(net.w_rec, RegularizerKind::SpaceComm, ctx);
  const auto a = forward_and_loss(net, batch, 0.0, term);
  const auto b = forward_and_loss(net, batch, 0.3, term);
  EXPECT_EQ(a.grads.w_in, b.grads.w_in);
  EXPECT_EQ(a.grads.w_out, b.grads.w_out);
  EXPECT_EQ(a.grads.beta, b.grads.beta);
  EXPECT_NEAR(b.loss.total, b.loss.task + 0.3 * term.loss, 1e-12);
  EXPECT_THROW(forward_and_loss(net, batch, -0.1, term), InvalidArgument);
}

TEST(Forward, ChannelMismatch) {
  const LIFNetwork net = random_net(10, 5, 4, 3);
  const auto batch = random_batch(11, 2, 6, 3, 5);
  EXPECT_THROW(simulate(net, batch), InvalidArgument);
}

TEST(Backward, SmoothModelMatchesFiniteDifferences) {
  const LIFNetwork base = random_net(505, 5, 4, 3);
  const auto batch = random_batch(506, 3, 4, 3, 20);
  const auto r = forward_and_loss<SmoothSpike>(base, batch, 0.0, no_constraint(5));
  std::vector<Eigen::MatrixXd> analytic;
  r.grads.visit([&](const char*, const auto& t) { analytic.emplace_back(t); });
  LIFNetwork net = base;
  std::size_t k = 0;
  net.visit([&](const char* name, auto& t) {
    const Eigen::MatrixXd& ga = analytic[k++];
    Eigen::MatrixXd fd(t.rows(), t.cols());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) {
        const double keep = t(i, j);
        t(i, j) = keep + h;
        const double up = forward_and_loss<SmoothSpike>(net, batch, 0.0, no_constraint(5), false).loss.total;
        t(i, j) = keep - h;
        const double down = forward_and_loss<SmoothSpike>(net, batch, 0.0, no_constraint(5), false).loss.total;
        t(i, j) = keep;
        fd(i, j) = (up - down) / (2 * h);
      }
    EXPECT_LE((ga - fd).norm() / std::max(fd.norm(), 1e-12), 1e-4) << name;
  });
}

TEST(Backward, BetaGradientNonzeroWhenActive) {
  const LIFNetwork net = random_net(12, 6, 4, 3);
  const auto batch = random_batch(13, 4, 4, 3, 30, 0.4);
  const auto r = forward_and_loss(net, batch, 0.0, no_constraint(6));
  ASSERT_GT(r.spike_counts.sum(), 0.0);
  EXPECT_GT(r.grads.beta.cwiseAbs().sum(), 0.0);
  EXPECT_GT(r.grads.beta_out.cwiseAbs().sum(), 0.0);
}

TEST(Binning, Examples) {
  SpikeDataset ds{"t", 2, 2, {}};
  ds.samples.push_back({0, {{0.2, 0}, {0.6, 0}}});
  ds.samples.push_back({1, {{1.1, 1}, {1.2, 1}}});
  ds.samples.push_back({1, {}});
  const auto binned = spikes::bin_events(ds, 0.5, 4);
  EXPECT_EQ(binned.samples[0](0, 0), 1);
  EXPECT_EQ(binned.samples[0](1, 0), 1);
  EXPECT_EQ(binned.samples[0].cast<int>().sum(), 2);
  EXPECT_EQ(binned.samples[1](2, 1), 1);
  EXPECT_EQ(binned.samples[1].cast<int>().sum(), 1);
  EXPECT_EQ(binned.samples[2].cast<int>().sum(), 0);
  EXPECT_EQ(binned.dropped_events, 0u);

  const auto truncated = spikes::bin_events(ds, 0.5, 2);
  EXPECT_EQ(truncated.dropped_events, 2u);
  EXPECT_THROW(spikes::bin_events(ds, 0.0, 2), InvalidArgument);

  const std::vector<std::size_t> idx = {0, 1};
  const auto batch = spikes::make_batch(ds, idx, 0.5, 4);
  EXPECT_EQ(batch.active[2].size(), 1u);
  EXPECT_EQ(batch.active[0].size(), 1u);
  EXPECT_EQ(batch.labels, (std::vector<int>{0, 1}));
}

TEST(Dataset, JsonlRoundTrip) {
  RandomSource rng(14);
  const auto task = spikes::gen_synthetic_spike_task(rng, {});
  const auto dir = std::filesystem::temp_directory_path() / "sernn_spike_io";
  std::filesystem::create_directories(dir);
  for (const char* name : {"d.jsonl", "d.jsonl.gz"}) {
    spikes::save_dataset(task.dataset, dir / name);
    EXPECT_EQ(spikes::load_dataset(dir / name), task.dataset) << name;
  }
  std::filesystem::remove_all(dir);
}

TEST(Dataset, RejectsMalformed) {
  for (const char* text : {"", "{\"channels\":2,\"classes\":2}\n{\"label\":3,\"events\":[]}\n",
                           "{\"channels\":2,\"classes\":2}\n{\"label\":0,\"events\":[[-1,0]]}\n",
                           "{\"channels\":2,\"classes\":2}\n{\"label\":0,\"events\":[[1,5]]}\n", "not json\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(spikes::parse_jsonl(in), FormatError) << text;
  }
}

TEST(Synthetic, DeterministicAndShaped) {
  RandomSource a(15), b(15);
  const auto x = spikes::gen_synthetic_spike_task(a);
  const auto y = spikes::gen_synthetic_spike_task(b);
  EXPECT_EQ(x.dataset, y.dataset);
  EXPECT_EQ(x.dataset.samples.size(), 200u);
  for (const auto& t : x.templates) EXPECT_EQ(t.size(), 8u);
  EXPECT_NO_THROW(spikes::validate(x.dataset));
  RandomSource c(16);
  EXPECT_THROW(spikes::gen_synthetic_spike_task(c, {1}), InvalidArgument);
}

TEST(Synthetic, RatesMatchTemplate) {
  RandomSource rng(17);
  spikes::SyntheticTaskConfig cfg;
  cfg.samples_per_class = 100;
  cfg.duration_ms = 1000.0;
  const auto task = spikes::gen_synthetic_spike_task(rng, cfg);
  double in_count = 0, out_count = 0;
  for (const auto& s : task.dataset.samples) {
    const auto& tmpl = task.templates[static_cast<std::size_t>(s.label)];
    for (const auto& e : s.events)
      (std::binary_search(tmpl.begin(), tmpl.end(), e.channel) ? in_count : out_count) += 1;
  }
  const double samples = static_cast<double>(task.dataset.samples.size());
  EXPECT_NEAR(in_count / (samples * 8), 80.0, 2.0);
  EXPECT_NEAR(out_count / (samples * 12), 8.0, 0.5);
}

TEST(Synthetic, SplitPerClass) {
  RandomSource rng(18);
  const auto task = spikes::gen_synthetic_spike_task(rng);
  const auto [train, test] = spikes::split_per_class(task.dataset, 30);
  EXPECT_EQ(train.samples.size(), 150u);
  EXPECT_EQ(test.samples.size(), 50u);
}
