#include <gtest/gtest.h>

#include <cmath>

#include "sernn/constraints.hpp"
#include "sernn/oracles.hpp"
#include "sernn/selftest.hpp"

using namespace sernn;

namespace {

ConstraintContext two_neuron_context() { return ConstraintContext(build_lattice({2, 1, 1})); }

Matrix swap2() {
  Matrix w(2, 2);
  w << 0, 1, 1, 0;
  return w;
}

Matrix random_weights(std::uint64_t seed, int n, double scale = 1.0) {
  RandomSource rng(seed);
  return selftest::random_matrix(rng, n, n, -scale, scale);
}

}  // namespace

TEST(Strength, Examples) {
  const Vector s = strength_diagonal(swap2());
  EXPECT_EQ(s(0), 2.0);
  EXPECT_EQ(s(1), 2.0);
  const Vector z = strength_diagonal(Matrix::Zero(2, 2));
  EXPECT_EQ(z(0), 1e-6);
  EXPECT_EQ(z(1), 1e-6);
  Matrix w = Matrix::Zero(2, 2);
  w(0, 1) = 2.0;
  const Vector t = strength_diagonal(w);
  EXPECT_EQ(t(0), 2.0);
  EXPECT_EQ(t(1), 2.0);
  EXPECT_THROW(strength_diagonal(Matrix::Zero(2, 3)), InvalidArgument);
}

TEST(Communicability, ZeroGivesIdentity) {
  EXPECT_TRUE(communicability(Matrix::Zero(4, 4)).isApprox(Matrix::Identity(4, 4)));
}

TEST(Communicability, TwoNeuronToyMatchesSeries) {
  // S^-1/2 |W| S^-1/2 = [[0, .5], [.5, 0]]
  oracle::Dense normalized = {{0.0L, 0.5L}, {0.5L, 0.0L}};
  const auto ref = oracle::taylor_exp(normalized, 60);
  const Matrix c = communicability(swap2());
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(c(i, j), static_cast<double>(ref[i][j]), 1e-14);
  EXPECT_NEAR(c(0, 0), 1.127625965, 1e-9);
  EXPECT_NEAR(c(0, 1), 0.521095305, 1e-9);
}

TEST(Communicability, MatchesIndependentNormalization) {
  const Matrix w = random_weights(41, 7);
  oracle::Dense a(7, std::vector<long double>(7));
  std::vector<long double> s(7, 0.0L);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      s[i] += std::abs(w(i, j));
      s[j] += std::abs(w(i, j));
    }
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) a[i][j] = std::abs(w(i, j)) / std::sqrt(s[i] * s[j]);
  const auto ref = oracle::taylor_exp(a, 80);
  const Matrix c = communicability(w);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) EXPECT_NEAR(c(i, j), static_cast<double>(ref[i][j]), 1e-13);
}

TEST(Communicability, NonnegativeWithUnitDiagonalFloor) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix c = communicability(random_weights(seed, 12, 3.0));
    EXPECT_GE(c.minCoeff(), 0.0);
    for (int i = 0; i < 12; ++i) EXPECT_GE(c(i, i), 1.0);
  }
}

TEST(Communicability, SignInvariant) {
  const Matrix w = random_weights(42, 10);
  const Matrix flipped = -w;
  Matrix mixed = w;
  for (int i = 0; i < 10; i += 2) mixed.row(i) *= -1.0;
  EXPECT_TRUE(communicability(w).isApprox(communicability(flipped), 1e-14));
  EXPECT_TRUE(communicability(w).isApprox(communicability(mixed), 1e-14));
}

TEST(Communicability, RejectsNonFinite) {
  Matrix w = Matrix::Zero(2, 2);
  w(1, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(communicability(w), InvalidArgument);
}

TEST(ConstraintLoss, L1Example) {
  Matrix w(2, 2);
  w << 1, -2, 0, 3;
  EXPECT_DOUBLE_EQ(constraint_loss(w, RegularizerKind::BaselineL1, two_neuron_context()).loss, 6.0);
}

TEST(ConstraintLoss, SpaceOnlyIgnoresSelfConnections) {
  const ConstraintContext ctx(build_lattice({2, 2, 1}));
  Matrix w = Matrix::Zero(4, 4);
  w.diagonal() << 1, -2, 3, 4;
  EXPECT_EQ(constraint_loss(w, RegularizerKind::SpaceOnly, ctx).loss, 0.0);
}

TEST(ConstraintLoss, SpaceCommZeroAndToy) {
  const auto ctx = two_neuron_context();
  EXPECT_EQ(constraint_loss(Matrix::Zero(2, 2), RegularizerKind::SpaceComm, ctx).loss, 0.0);
  const auto term = constraint_loss(swap2(), RegularizerKind::SpaceComm, ctx);
  EXPECT_NEAR(term.loss, 2.0 * std::sinh(0.5), 1e-14);
  EXPECT_NEAR(term.loss, 1.042190610, 1e-9);
}

TEST(ConstraintLoss, MultiplierPerKind) {
  const ConstraintContext ctx(build_lattice({3, 2, 1}));
  const Matrix w = random_weights(43, 6);
  const Matrix c = communicability(w);
  EXPECT_TRUE(constraint_loss(w, RegularizerKind::BaselineL1, ctx).multiplier.isApprox(Matrix::Ones(6, 6)));
  EXPECT_TRUE(constraint_loss(w, RegularizerKind::SpaceOnly, ctx).multiplier.isApprox(ctx.distance()));
  EXPECT_TRUE(constraint_loss(w, RegularizerKind::CommOnly, ctx).multiplier.isApprox(c));
  EXPECT_TRUE(
      constraint_loss(w, RegularizerKind::SpaceComm, ctx).multiplier.isApprox(ctx.distance().cwiseProduct(c)));
}

TEST(ConstraintLoss, DimensionMismatch) {
  EXPECT_THROW(constraint_loss(Matrix::Zero(3, 3), RegularizerKind::BaselineL1, two_neuron_context()),
               InvalidArgument);
}

TEST(ConstraintLoss, ScalingIsLinearForL1AndSpace) {
  const ConstraintContext ctx(build_lattice({5, 5, 4}));
  const Matrix w = random_weights(44, 100);
  for (double c : {0.5, 2.0, 7.25}) {
    for (auto kind : {RegularizerKind::BaselineL1, RegularizerKind::SpaceOnly}) {
      const double base = constraint_loss(w, kind, ctx).loss;
      EXPECT_NEAR(constraint_loss(c * w, kind, ctx).loss, c * base, 1e-12 * c * base);
    }
  }
}

TEST(ConstraintLoss, NonnegativeAndZeroOnlyAtZero) {
  const ConstraintContext ctx(build_lattice({2, 2, 2}));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix w = random_weights(seed, 8);
    for (auto kind : kAllKinds) EXPECT_GT(constraint_loss(w, kind, ctx).loss, 0.0);
  }
  for (auto kind : kAllKinds) EXPECT_EQ(constraint_loss(Matrix::Zero(8, 8), kind, ctx).loss, 0.0);
  Matrix diag = Matrix::Zero(8, 8);
  diag.diagonal().setConstant(0.7);
  EXPECT_EQ(constraint_loss(diag, RegularizerKind::SpaceOnly, ctx).loss, 0.0);
  EXPECT_GT(constraint_loss(diag, RegularizerKind::BaselineL1, ctx).loss, 0.0);
  EXPECT_GT(constraint_loss(diag, RegularizerKind::CommOnly, ctx).loss, 0.0);
}

TEST(ConstraintGradient, MatchesFiniteDifferencesWithFrozenMultiplier) {
  const ConstraintContext ctx(build_lattice({5, 1, 1}));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix w = random_weights(100 + seed, 5);
    // keep entries away from the kink at zero
    w = w.unaryExpr([](double v) { return v >= 0 ? v + 0.05 : v - 0.05; });
    for (auto kind : kAllKinds) {
      const Matrix m = constraint_loss(w, kind, ctx).multiplier;
      const Matrix g = constraint_gradient(w, m);
      const double h = 1e-6;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
          Matrix p = w, q = w;
          p(i, j) += h;
          q(i, j) -= h;
          const double fd = (p.cwiseAbs().cwiseProduct(m).sum() - q.cwiseAbs().cwiseProduct(m).sum()) / (2 * h);
          const double denom = std::max(std::abs(fd), 1e-12);
          if (m(i, j) == 0.0) {
            EXPECT_EQ(g(i, j), 0.0);
          } else {
            EXPECT_LE(std::abs(g(i, j) - fd) / denom, 1e-6) << kind_name(kind) << " " << i << "," << j;
          }
        }
    }
  }
}

TEST(ConstraintGradient, SignOfZeroIsZero) {
  const Matrix g = constraint_gradient(Matrix::Zero(3, 3), Matrix::Ones(3, 3));
  EXPECT_EQ(g.cwiseAbs().sum(), 0.0);
}

TEST(TotalLoss, Examples) {
  EXPECT_EQ(total_loss(1.0, 0.0, 100.0), 1.0);
  EXPECT_EQ(total_loss(1.0, 0.5, 2.0), 2.0);
  EXPECT_EQ(total_loss(0.0, 1.0, 0.0), 0.0);
  EXPECT_THROW(total_loss(1.0, -0.1, 1.0), InvalidArgument);
  EXPECT_THROW(total_loss(std::nan(""), 0.1, 1.0), InvalidArgument);
}

TEST(Kinds, NamesRoundTrip) {
  for (auto kind : kAllKinds) EXPECT_EQ(parse_kind(kind_name(kind)), kind);
  EXPECT_THROW(parse_kind("bogus"), InvalidArgument);
}
