#include "prisat/hamiltonian.hpp"
#include "prisat/models.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace prisat;

namespace {

const MriParams kMri{};
const FedBatchParams kFed{};

Vec4 z_of(double x1, double x2, double p1, double p2) {
  Vec4 z;
  z << x1, x2, p1, p2;
  return z;
}

// adjoint over a locus point with H_g = 0 and H_f = 1
Vec4 singular_seed(const PlanarAffineSystem& sys, const Vec2& x) { return stack(x, singular_adjoint(sys, x)); }

}  // namespace

TEST(Lift, MriExamples) {
  const auto sys = mri_system(kMri);
  EXPECT_DOUBLE_EQ(lift(sys, Lift::G, z_of(1, 2, 3, 4)), -2.0);
  EXPECT_NEAR(lift(sys, Lift::FG, z_of(0, 0, 1, 0)), -0.1, 1e-15);
}

TEST(Lift, LinearInAdjoint) {
  const auto sys = fedbatch_system(kFed);
  for (auto which : {Lift::F, Lift::G, Lift::FG, Lift::FFG, Lift::GFG, Lift::Plus, Lift::Minus})
    EXPECT_EQ(lift(sys, which, z_of(2, 1, 0, 0)), 0.0);
  const Vec4 z = z_of(2, 1, 0.3, -0.7);
  EXPECT_NEAR(lift(sys, Lift::Plus, z), lift(sys, Lift::F, z) + lift(sys, Lift::G, z), 1e-14);
  EXPECT_NEAR(lift(sys, Lift::Minus, z), lift(sys, Lift::F, z) - lift(sys, Lift::G, z), 1e-14);
}

TEST(SingularControl, MatchesFeedbackAtMriSaturation) {
  const auto sys = mri_system(kMri);
  const Vec4 z = singular_seed(sys, mri_saturation_point(kMri));
  EXPECT_NEAR(lift(sys, Lift::FG, z), 0.0, 1e-12);
  EXPECT_NEAR(singular_control_z(sys, z), 1.0, 1e-9);
}

TEST(SingularControl, ZeroHomogeneous) {
  const auto sys = mri_system(kMri);
  const Vec4 z = z_of(-0.4, 0.2, 0.7, -1.3);
  Vec4 zc = z;
  zc.tail<2>() *= 3.7;
  EXPECT_NEAR(singular_control_z(sys, z), singular_control_z(sys, zc), 1e-12);
}

TEST(SingularControl, FedBatchVolumeFeedback) {
  const auto sys = fedbatch_system(kFed);
  const Vec4 z = singular_seed(sys, Vec2(kFed.s_star(), 1.0));
  EXPECT_NEAR(singular_control_z(sys, z), fedbatch_singular_volume_feedback(kFed, 1.0), 1e-9);
}

TEST(HamiltonianField, MriBangPlus) {
  const auto sys = mri_system(kMri);
  const Vec4 d = hamiltonian_vector_field(sys, ControlLaw::plus(), z_of(0, 0, 0, 1));
  const Vec4 expect = z_of(0, 0.1, -1, 0.1);
  EXPECT_LT((d - expect).norm(), 1e-15);
}

TEST(HamiltonianField, PlusMinusDifference) {
  const auto sys = fedbatch_system(kFed);
  const Vec4 z = z_of(3, 0.7, 0.2, -0.4);
  const Vec4 diff = hamiltonian_vector_field(sys, ControlLaw::plus(), z) -
                    hamiltonian_vector_field(sys, ControlLaw::minus(), z);
  const Vec2 x = state_of(z), p = adjoint_of(z);
  Vec4 expect;
  expect << 2.0 * sys.g.eval(x), -2.0 * sys.g.jacobian(x).transpose() * p;
  EXPECT_LT((diff - expect).norm(), 1e-13);
}

TEST(HamiltonianField, FedBatchMinusKeepsVolume) {
  const auto sys = fedbatch_system(kFed);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> s(0.1, 9.9), v(0.1, 2.0), p(-3, 3);
  for (int i = 0; i < 20; ++i)
    EXPECT_EQ(hamiltonian_vector_field(sys, ControlLaw::minus(), z_of(s(rng), v(rng), p(rng), p(rng)))[1], 0.0);
}

TEST(HamiltonianField, AdjointMatchesFiniteDifferences) {
  const auto sys = fedbatch_system(kFed);
  const Vec4 z = z_of(2.5, 0.8, 0.4, -1.1);
  for (double u : {-1.0, 0.3, 1.0}) {
    const Vec4 d = hamiltonian_vector_field(sys, ControlLaw::constant(u), z);
    auto H = [&](const Vec2& x) { return adjoint_of(z).dot(sys.velocity(x, u)); };
    const Vec2 grad = fd_gradient(H, state_of(z));
    EXPECT_LT((d.tail<2>() + grad).norm(), 1e-6 * std::max(1.0, grad.norm())) << u;
  }
}

TEST(ControlLawTest, ConstantOutsideBoundThrows) {
  EXPECT_THROW(ControlLaw::constant(1.5), Error);
  EXPECT_NO_THROW(ControlLaw::constant(-1.0));
  EXPECT_EQ(ControlLaw::constant(0.0).label(), "S0");
  EXPECT_EQ(ControlLaw::singular().label(), "S");
}

TEST(ExpMap, ZeroTimeIsIdentity) {
  const auto sys = mri_system(kMri);
  const Vec4 z = z_of(0.1, -0.3, 2, 5);
  EXPECT_EQ(exp_map(sys, ControlLaw::plus(), 0.0, z), z);
}

TEST(ExpMap, MriDriftClosedForm) {
  const auto sys = mri_system(kMri);
  const Vec4 z = exp_map(sys, ControlLaw::constant(0.0), 1.0, z_of(0.5, 0, 0, 0));
  EXPECT_NEAR(z[0], 0.5 * std::exp(-kMri.Gamma), 1e-9);
  EXPECT_NEAR(z[1], 1.0 - std::exp(-kMri.gamma), 1e-9);
}

TEST(ExpMap, Reversible) {
  const auto sys = mri_system(kMri);
  const Vec4 z0 = z_of(-0.3, 0.4, 1.2, -0.5);
  const Vec4 there = exp_map(sys, ControlLaw::plus(), 2.5, z0);
  const Vec4 back = exp_map(sys, ControlLaw::plus(), -2.5, there);
  EXPECT_LT((back - z0).norm(), 1e-8);
}

TEST(ExpMap, HalvingToleranceMovesEndpointLittle) {
  const auto sys = fedbatch_system(kFed);
  ode::Options a, b;
  b.rtol = a.rtol / 2;
  b.atol = a.atol / 2;
  const Vec4 z0 = z_of(4, 0.5, 0.1, 0.3);
  const Vec4 za = exp_map(sys, ControlLaw::plus(), 1.0, z0, a), zb = exp_map(sys, ControlLaw::plus(), 1.0, z0, b);
  EXPECT_LT((za - zb).lpNorm<Eigen::Infinity>(), 10 * a.rtol * std::max(1.0, za.lpNorm<Eigen::Infinity>()));
}

TEST(ExpMap, FedBatchDomainExit) {
  const auto sys = fedbatch_system(kFed);
  try {
    exp_map(sys, ControlLaw::plus(), -50.0, z_of(0.5, 1.0, 0, 0));
    FAIL() << "expected DomainExit";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DomainExit);
  }
}

TEST(Switching, SingularArcStaysOnSurface) {
  const auto sys = mri_system(kMri);
  const Vec4 z0 = singular_seed(sys, Vec2(-0.8, kMri.gamma / (2 * kMri.delta())));
  const auto tr = flow(sys, ControlLaw::singular(), z0, 3.0);
  for (double t : {0.0, 0.7, 1.9, 3.0}) {
    const auto sw = switching_data(sys, tr, t);
    EXPECT_LE(std::abs(sw.phi), 1e-8) << t;
    EXPECT_LE(std::abs(sw.phidot), 1e-8) << t;
  }
  EXPECT_THROW(switching_data(sys, tr, 3.5), Error);
}

TEST(Switching, ZeroAdjointGivesZeroPhi) {
  const auto sys = mri_system(kMri);
  const auto tr = flow(sys, ControlLaw::plus(), z_of(0.2, 0.2, 0, 0), 1.0);
  EXPECT_EQ(switching_data(sys, tr, 0.0).phi, 0.0);
}

TEST(Switching, PhiDotIsBracketLift) {
  const auto sys = fedbatch_system(kFed);
  Vec4 z0 = singular_seed(sys, Vec2(4.0, 0.6));
  // short arc: near s = 0 the u = -1 flow is stiff and the adjoint explodes
  const auto tr = flow(sys, ControlLaw::minus(), z0, 0.3);
  for (double t : {0.05, 0.15, 0.25}) {
    const double h = 1e-5;
    const double fd = (switching_data(sys, tr, t + h).phi - switching_data(sys, tr, t - h).phi) / (2 * h);
    EXPECT_NEAR(fd, switching_data(sys, tr, t).phidot, 1e-6) << t;
  }
}

TEST(GammaU, OnLocusIndependentOfControl) {
  const auto sys = fedbatch_system(kFed);
  const Vec2 x(kFed.s_star(), 0.9);
  const double b = alpha_beta(sys, x).beta;
  for (double u : {-1.0, 0.0, 0.4, 1.0}) EXPECT_NEAR(gamma_u(sys, x, u), b, 1e-10);
  const Vec2 y(2, 1);
  EXPECT_DOUBLE_EQ(gamma_u(sys, y, 0.0), alpha_beta(sys, y).beta);
}

TEST(Extremal, ConservationAndPhiOde) {
  const auto fb = fedbatch_system(kFed);
  const auto mri = mri_system(kMri);
  struct Case {
    const PlanarAffineSystem* sys;
    ControlLaw law;
    Vec4 z0;
    double t;
  };
  const std::vector<Case> cases{
      {&fb, ControlLaw::plus(), singular_seed(fb, Vec2(2, 1)), 0.8},
      {&fb, ControlLaw::minus(), singular_seed(fb, Vec2(3, 1.5)), 0.3},
      {&fb, ControlLaw::singular(), singular_seed(fb, Vec2(kFed.s_star(), 0.3)), 0.5},
      {&mri, ControlLaw::plus(), singular_seed(mri, Vec2(-0.5, -0.125)), 2.0},
      {&mri, ControlLaw::singular(), singular_seed(mri, Vec2(-0.7, -0.125)), 3.0},
  };
  for (const auto& c : cases) {
    const auto tr = flow(*c.sys, c.law, c.z0, c.t, {});
    const auto chk = check_extremal(*c.sys, tr);
    EXPECT_LE(chk.hamiltonian_drift, 1e-7) << c.sys->name << ' ' << c.law.label();
    EXPECT_LE(chk.phi_ode_residual, 1e-6) << c.sys->name << ' ' << c.law.label();
    EXPECT_GT(chk.samples, 2u);
  }
}

TEST(Extremal, TrajectoryCsvHasHeaderAndRows) {
  const auto sys = mri_system(kMri);
  const auto tr = flow(sys, ControlLaw::plus(), z_of(0, 0, 0, 1), 0.5);
  std::ostringstream os;
  write_trajectory_csv(os, sys, tr);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("t,x1,x2,p1,p2,u,phi,phidot\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), tr.t_grid().size() + 1);
}
