#include "gomt/rigid_body.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gomt/error.h"

namespace gomt {
namespace {

constexpr double kTol = 1e-15;

TEST(InertiaBodyTest, DerivedConstantsForFigureBody) {
  const InertiaBody body = make_body({1.0, 2.0, 3.0});
  EXPECT_NEAR(body.alpha(), -1.0 / 6.0, kTol);
  EXPECT_NEAR(body.beta(), 2.0 / 3.0, kTol);
  EXPECT_NEAR(body.gamma(), -1.0 / 2.0, kTol);
}

TEST(InertiaBodyTest, SymmetricBodyHasNoDrift) {
  const InertiaBody body = make_body({1.0, 1.0, 1.0});
  EXPECT_EQ(body.alpha(), 0.0);
  EXPECT_EQ(body.beta(), 0.0);
  EXPECT_EQ(body.gamma(), 0.0);
}

TEST(InertiaBodyTest, AxisymmetricBody) {
  const InertiaBody body = make_body({2.0, 2.0, 4.0});
  EXPECT_NEAR(body.alpha(), -0.25, kTol);
  EXPECT_NEAR(body.beta(), 0.25, kTol);
  EXPECT_EQ(body.gamma(), 0.0);
}

TEST(InertiaBodyTest, RejectsInvalidMoments) {
  EXPECT_THROW(make_body({0.0, 1.0, 1.0}), InvalidInertiaError);
  EXPECT_THROW(make_body({1.0, -2.0, 1.0}), InvalidInertiaError);
  EXPECT_THROW(make_body({1.0, 1.0, NAN}), InvalidInertiaError);
  EXPECT_THROW(make_body({1.0, INFINITY, 1.0}), InvalidInertiaError);
}

TEST(InertiaBodyTest, CoefficientsSumToZero) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> moment(0.01, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const InertiaBody body =
        make_body({moment(rng), moment(rng), moment(rng)});
    const double scale = std::max({std::abs(body.alpha()),
                                   std::abs(body.beta()),
                                   std::abs(body.gamma()), 1.0});
    EXPECT_LE(std::abs(body.alpha() + body.beta() + body.gamma()),
              1e-15 * scale * 4);
  }
}

TEST(DriftTest, EvaluatesComponentwiseProducts) {
  const InertiaBody body = make_body({1.0, 2.0, 3.0});
  const StateVec ones = drift_f0(body, {1.0, 1.0, 1.0});
  EXPECT_NEAR(ones[0], -1.0 / 6.0, kTol);
  EXPECT_NEAR(ones[1], 2.0 / 3.0, kTol);
  EXPECT_NEAR(ones[2], -0.5, kTol);

  const StateVec other = drift_f0(body, {1.0, 0.0, 2.0});
  EXPECT_EQ(other[0], 0.0);
  EXPECT_NEAR(other[1], 4.0 / 3.0, kTol);
  EXPECT_EQ(other[2], 0.0);

  EXPECT_EQ(drift_f0(body, StateVec::Zero()), StateVec::Zero());
}

TEST(DriftTest, OrthogonalToStateForRandomBodies) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> moment(0.1, 10.0);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const InertiaBody body =
        make_body({moment(rng), moment(rng), moment(rng)});
    const StateVec z(coord(rng), coord(rng), coord(rng));
    const StateVec f = drift_f0(body, z);
    EXPECT_LE(std::abs(f.dot(z)), 1e-13 * (1.0 + f.norm() * z.norm()));
  }
}

TEST(AffinePairTest, ZeroTargetGivesExactlyZeroPair) {
  const InertiaBody body = make_body({1.0, 2.0, 3.0});
  const AffinePair pair = affine_pair(body, StateVec::Zero());
  EXPECT_TRUE((pair.A.array() == 0.0).all());
  EXPECT_TRUE((pair.b.array() == 0.0).all());
}

TEST(AffinePairTest, ClosedFormsForUnitTarget) {
  const InertiaBody body = make_body({1.0, 2.0, 3.0});
  const AffinePair pair = affine_pair(body, {0.0, 1.0, 0.0});
  Eigen::Matrix3d expected;
  expected << 0.0, 0.0, -1.0 / 6.0,
              0.0, 0.0, 0.0,
              -0.5, 0.0, 0.0;
  EXPECT_LE((pair.A - expected).cwiseAbs().maxCoeff(), kTol);
  EXPECT_EQ(pair.b, StateVec::Zero());
  EXPECT_TRUE((pair.A.diagonal().array() == 0.0).all());

  const AffinePair ones = affine_pair(body, {1.0, 1.0, 1.0});
  EXPECT_NEAR(ones.b[0], -1.0 / 6.0, kTol);
  EXPECT_NEAR(ones.b[1], 2.0 / 3.0, kTol);
  EXPECT_NEAR(ones.b[2], -0.5, kTol);
}

TEST(AffinePairTest, TranslationIdentityHoldsForRandomPoints) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> moment(0.1, 10.0);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const InertiaBody body =
        make_body({moment(rng), moment(rng), moment(rng)});
    const StateVec z(coord(rng), coord(rng), coord(rng));
    const StateVec x_f(coord(rng), coord(rng), coord(rng));
    const AffinePair pair = affine_pair(body, x_f);
    const StateVec lhs = drift_f0(body, z) + pair.A * z + pair.b;
    const StateVec rhs = drift_f0(body, z + x_f);
    EXPECT_LE((lhs - rhs).norm(), 1e-12 * std::max(1.0, rhs.norm()));
    EXPECT_LE((rhs_z(body, pair, z, StateVec::Zero()) -
               rhs_x(body, z + x_f, StateVec::Zero()))
                  .norm(),
              1e-12 * std::max(1.0, rhs.norm()));
  }
}

TEST(DynamicsTest, RhsX) {
  const InertiaBody body = make_body({1.0, 2.0, 3.0});
  const StateVec x(1.0, 0.0, 0.5);
  const StateVec xdot = rhs_x(body, x, StateVec::Zero());
  EXPECT_EQ(xdot[0], 0.0);
  EXPECT_NEAR(xdot[1], 1.0 / 3.0, kTol);
  EXPECT_EQ(xdot[2], 0.0);

  const StateVec y(0.3, -1.2, 2.5);
  EXPECT_EQ(rhs_x(body, y, -drift_f0(body, y)), StateVec::Zero());

  const InertiaBody sym = make_body({1.0, 1.0, 1.0});
  EXPECT_EQ(rhs_x(sym, y, {1.0, 2.0, 3.0}), StateVec(1.0, 2.0, 3.0));
}

TEST(DynamicsTest, RhsZ) {
  const InertiaBody body = make_body({1.0, 2.0, 3.0});
  const StateVec z(0.4, -0.7, 1.1);
  const StateVec u(0.1, 0.2, -0.3);
  const AffinePair zero = affine_pair(body, StateVec::Zero());
  EXPECT_EQ(rhs_z(body, zero, z, u), rhs_x(body, z, u));

  // x = 0 is an equilibrium of the free dynamics.
  const StateVec x_f(0.2, 1.5, -0.8);
  const AffinePair pair = affine_pair(body, x_f);
  EXPECT_LE(rhs_z(body, pair, -x_f, StateVec::Zero()).norm(), 1e-15);
}

TEST(DynamicsTest, FreeMotionConservesNorm) {
  const InertiaBody body = make_body({1.0, 2.0, 3.0});
  StateVec x(1.0, -0.4, 0.7);
  const double initial = x.norm();
  const double h = 1e-3;
  const auto f = [&](const StateVec& s) {
    return rhs_x(body, s, StateVec::Zero());
  };
  for (int i = 0; i < 5000; ++i) {
    const StateVec k1 = f(x);
    const StateVec k2 = f(x + 0.5 * h * k1);
    const StateVec k3 = f(x + 0.5 * h * k2);
    const StateVec k4 = f(x + h * k3);
    x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  EXPECT_LE(std::abs(x.norm() - initial), 1e-10);
}

TEST(DriftTest, EulerJacobianMatchesFiniteDifferences) {
  const InertiaBody body = make_body({1.0, 2.0, 3.0});
  const Drift euler = Drift::Euler(body);
  const Drift numeric(
      3, [&body](const Vec& x) -> Vec { return drift_f0(body, x); }, {},
      "euler-fd");
  const Vec x = Vec::LinSpaced(3, -0.8, 1.3);
  EXPECT_LE((euler.jacobian(x) - numeric.jacobian(x)).norm(), 1e-8);
  ASSERT_NE(euler.body(), nullptr);
  EXPECT_EQ(euler.body()->alpha(), body.alpha());
}

TEST(NormInvarianceTest, EulerDriftAtOrigin) {
  const Drift euler = Drift::Euler(make_body({1.0, 2.0, 3.0}));
  EXPECT_TRUE(is_translated_norm_invariant(euler, Vec::Zero(3)));
}

TEST(NormInvarianceTest, SkewLinearDriftWithTargetInKernel) {
  Mat S(3, 3);
  S << 0.0, -2.0, 0.0,
       2.0, 0.0, 0.0,
       0.0, 0.0, 0.0;
  const Drift drift = Drift::Linear(S);
  Vec x_f(3);
  x_f << 0.0, 0.0, 1.7;
  EXPECT_TRUE(is_translated_norm_invariant(drift, x_f));
  Vec off(3);
  off << 1.0, 0.0, 0.0;
  EXPECT_FALSE(is_translated_norm_invariant(drift, off));
}

TEST(NormInvarianceTest, EulerDriftAwayFromOriginIsNotInvariant) {
  const InertiaBody body = make_body({1.0, 2.0, 3.0});
  const Drift euler = Drift::Euler(body);
  // <f0((1,1,1)), (1,0,1)> = -1/6 - 1/2.
  const StateVec x_f(0.0, 1.0, 0.0);
  const StateVec z(1.0, 0.0, 1.0);
  EXPECT_NEAR(drift_f0(body, z + x_f).dot(z), -2.0 / 3.0, kTol);
  EXPECT_FALSE(is_translated_norm_invariant(euler, Vec(x_f)));
}

TEST(NormInvarianceTest, AxisymmetricBodyTargetOnSymmetryAxis) {
  // J2 = J3 makes alpha vanish; targets on the first axis keep invariance.
  const Drift euler = Drift::Euler(make_body({1.0, 2.0, 2.0}));
  EXPECT_TRUE(is_translated_norm_invariant(euler, Vec::Unit(3, 0) * 1.3));
  EXPECT_FALSE(is_translated_norm_invariant(euler, Vec::Unit(3, 1) * 1.3));
}

TEST(NormInvarianceTest, RejectsBadOptions) {
  const Drift zero = Drift::Zero(3);
  NormInvarianceOptions options;
  options.samples = 0;
  EXPECT_THROW(is_translated_norm_invariant(zero, Vec::Zero(3), options),
               InvalidArgumentError);
  options = {};
  options.radius = 0.0;
  EXPECT_THROW(is_translated_norm_invariant(zero, Vec::Zero(3), options),
               InvalidArgumentError);
}

}  // namespace
}  // namespace gomt
