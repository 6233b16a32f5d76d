#include "prisat/identities.hpp"
#include "prisat/models.hpp"
#include "prisat/planar_system.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace prisat;

namespace {

PlanarAffineSystem constant_system(Vec2 a, Vec2 b) {
  PlanarAffineSystem s;
  s.name = "constant";
  s.f = VectorField2::from_eval([a](const Vec2&) { return a; });
  s.g = VectorField2::from_eval([b](const Vec2&) { return b; });
  return s;
}

// the Bloch fields again, but with every derivative from finite differences
PlanarAffineSystem mri_fd(const MriParams& P) {
  PlanarAffineSystem s;
  s.name = "mri-fd";
  s.f = VectorField2::from_eval([P](const Vec2& x) { return Vec2(-P.Gamma * x[0], P.gamma * (1.0 - x[1])); });
  s.g = VectorField2::from_eval([](const Vec2& x) { return Vec2(-x[1], x[0]); });
  return s;
}

const MriParams kMri{};
const FedBatchParams kFed{};

template <class T>
int error_kind(T&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return static_cast<int>(e.kind());
  }
  return -1;
}

}  // namespace

TEST(LieBracket, MriAtOrigin) {
  const auto sys = mri_system(kMri);
  const Vec2 b = lie_bracket(sys, Bracket::FG, Vec2(0, 0));
  EXPECT_NEAR(b[0], -0.1, 1e-15);
  EXPECT_NEAR(b[1], 0.0, 1e-15);
}

TEST(LieBracket, MriClosedForm) {
  const auto sys = mri_system(kMri);
  const double d = kMri.delta();
  const Vec2 b = lie_bracket(sys, Bracket::FG, Vec2(1, 1));
  EXPECT_NEAR(b[0], -0.5, 1e-14);
  EXPECT_NEAR(b[1], -0.4, 1e-14);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 20; ++i) {
    const Vec2 x(u(rng), u(rng));
    const Vec2 fg = lie_bracket(sys, Bracket::FG, x);
    EXPECT_NEAR(fg[0], d * x[1] - kMri.gamma, 1e-14);
    EXPECT_NEAR(fg[1], d * x[0], 1e-14);
  }
}

TEST(LieBracket, ConstantFieldsCommute) {
  const auto sys = constant_system(Vec2(1, 2), Vec2(-3, 0.5));
  for (auto which : {Bracket::FG, Bracket::FFG, Bracket::GFG})
    EXPECT_LT(lie_bracket(sys, which, Vec2(0.3, -7)).norm(), 1e-9);
  EXPECT_NEAR(legendre_clebsch_margin(sys, Vec2(0.3, -7)), 0.0, 1e-9);
}

TEST(LieBracket, NestedNeedsHessian) {
  auto sys = mri_system(kMri);
  sys.g.hessian = nullptr;
  EXPECT_NO_THROW(lie_bracket(sys, Bracket::FG, Vec2(0.1, 0.2)));
  EXPECT_EQ(error_kind([&] { lie_bracket(sys, Bracket::GFG, Vec2(0.1, 0.2)); }),
            static_cast<int>(ErrorKind::DerivativeUnavailable));
}

TEST(LieBracket, FiniteDifferenceFallbackAgrees) {
  const auto a = mri_system(kMri), b = mri_fd(kMri);
  for (const Vec2 x : {Vec2(0.2, -0.3), Vec2(-0.6, 0.1), Vec2(0.0, 0.9)}) {
    for (auto which : {Bracket::FG, Bracket::FFG, Bracket::GFG}) {
      const Vec2 ea = lie_bracket(a, which, x), eb = lie_bracket(b, which, x);
      EXPECT_LT((ea - eb).norm(), 1e-6 * std::max(1.0, ea.norm()));
    }
  }
}

TEST(LieBracket, AnalyticJacobianAndHessianMatchFiniteDifferences) {
  const auto sys = fedbatch_system(kFed);
  std::mt19937_64 rng(11);
  auto sample = fedbatch_sampler(kFed);
  for (int i = 0; i < 50; ++i) {
    const Vec2 x = sample(rng);
    for (const VectorField2* vf : {&sys.f, &sys.g}) {
      const Mat2 ja = vf->jacobian(x), jf = VectorField2::central_jacobian(vf->eval, x);
      EXPECT_LT((ja - jf).norm(), 1e-6 * std::max(1.0, ja.norm()));
      const Hessian2 ha = vf->hessian(x);
      for (int k = 0; k < 2; ++k) {
        const Mat2 hf = VectorField2::central_jacobian(
            [&](const Vec2& y) -> Vec2 { return vf->jacobian(y).row(k).transpose(); }, x);
        EXPECT_LT((ha[k] - hf).norm(), 1e-5 * std::max(1.0, ha[k].norm()));
      }
    }
  }
}

TEST(Determinants, CollinearityFedBatch) {
  const auto sys = fedbatch_system(kFed);
  // -μ(1)(s_in - 1) Q/2 with μ(1) = 1/1.2
  EXPECT_NEAR(collinearity_det(sys, Vec2(1, 1)), -3.75, 1e-12);
}

TEST(Determinants, CollinearityTrivialCases) {
  const auto sys = mri_system(kMri);
  EXPECT_EQ(collinearity_det(sys, Vec2(0, 0)), 0.0);
  auto same = mri_system(kMri);
  same.g = same.f;
  EXPECT_EQ(collinearity_det(same, Vec2(0.3, 0.4)), 0.0);
}

TEST(Determinants, SingularLocusMri) {
  const auto sys = mri_system(kMri);
  const double x2h = kMri.gamma / (2 * kMri.delta());
  for (double x1 : {-0.9, -0.3, 0.0, 0.4}) EXPECT_NEAR(singular_det(sys, Vec2(x1, x2h)), 0.0, 1e-15);
  EXPECT_NEAR(singular_det(sys, Vec2(0, 0.3)), 0.0, 1e-15);
  // δ_SA = x1 (γ - 2 δ x2)
  const Vec2 x(0.3, 0.2);
  EXPECT_NEAR(singular_det(sys, x), x[0] * (kMri.gamma - 2 * kMri.delta() * x[1]), 1e-15);
}

TEST(Determinants, SingularLocusFedBatch) {
  const auto sys = fedbatch_system(kFed);
  for (double v : {0.05, 0.5, 1.0, 2.0}) EXPECT_NEAR(singular_det(sys, Vec2(kFed.s_star(), v)), 0.0, 1e-12);
  EXPECT_GT(std::abs(singular_det(sys, Vec2(2.0, 1.0))), 1e-3);
}

TEST(Determinants, DomainIsEnforced) {
  const auto sys = fedbatch_system(kFed);
  EXPECT_EQ(error_kind([&] { collinearity_det(sys, Vec2(0.0, 1.0)); }), static_cast<int>(ErrorKind::DomainError));
  EXPECT_EQ(error_kind([&] { singular_det(sys, Vec2(11.0, 1.0)); }), static_cast<int>(ErrorKind::DomainError));
  EXPECT_EQ(error_kind([&] { collinearity_det(sys, Vec2(1.0, -1.0)); }), static_cast<int>(ErrorKind::DomainError));
  EXPECT_NO_THROW(collinearity_det(sys, Vec2(kFed.s_in, 1.0)));
}

TEST(AlphaBeta, VanishesOnLocus) {
  const auto sys = mri_system(kMri);
  EXPECT_NEAR(alpha_beta(sys, Vec2(-0.4, kMri.gamma / (2 * kMri.delta()))).alpha, 0.0, 1e-15);
  const auto fb = fedbatch_system(kFed);
  EXPECT_NEAR(alpha_beta(fb, Vec2(kFed.s_star(), 0.7)).alpha, 0.0, 1e-12);
}

TEST(AlphaBeta, Reconstruction) {
  for (const auto& [sys, x] : {std::pair{mri_system(kMri), Vec2(-0.2, -0.125)}, std::pair{fedbatch_system(kFed), Vec2(2, 1)}}) {
    const auto ab = alpha_beta(sys, x);
    ASSERT_TRUE(std::isfinite(ab.alpha) && std::isfinite(ab.beta));
    const Vec2 fg = lie_bracket(sys, Bracket::FG, x);
    const Vec2 rec = ab.alpha * sys.f.eval(x) + ab.beta * sys.g.eval(x);
    EXPECT_LT((rec - fg).norm(), 1e-9 * std::max(1.0, fg.norm())) << sys.name;
  }
}

TEST(AlphaBeta, CollinearPointThrows) {
  const auto sys = mri_system(kMri);
  EXPECT_EQ(error_kind([&] { alpha_beta(sys, Vec2(0, 0)); }), static_cast<int>(ErrorKind::CollinearityDegenerate));
}

TEST(SingularFeedback, MriSaturationPoint) {
  const auto sys = mri_system(kMri);
  EXPECT_NEAR(singular_feedback(sys, mri_saturation_point(kMri)), 1.0, 1e-10);
  EXPECT_NEAR(singular_feedback(sys, Vec2(-0.225, -0.125)), 0.5, 1e-12);
}

TEST(SingularFeedback, MriClosedFormOnHorizontalBranch) {
  const auto sys = mri_system(kMri);
  const double g = kMri.gamma, G = kMri.Gamma, d = kMri.delta();
  for (double x1 : {-0.9, -0.5, -0.2, -0.1125})
    EXPECT_NEAR(singular_feedback(sys, Vec2(x1, g / (2 * d))), g * (2 * G - g) / (2 * d * x1), 1e-12);
}

TEST(SingularFeedback, FedBatchSaturatesAtVStar) {
  const auto sys = fedbatch_system(kFed);
  EXPECT_NEAR(kFed.v_star(), 1.2, 1e-12);
  EXPECT_NEAR(singular_feedback(sys, Vec2(kFed.s_star(), kFed.v_star())), 1.0, 1e-9);
}

TEST(SingularFeedback, DegenerateDenominator) {
  const auto sys = constant_system(Vec2(1, 0), Vec2(0, 1));
  EXPECT_EQ(error_kind([&] { singular_feedback(sys, Vec2(0, 0)); }), static_cast<int>(ErrorKind::LegendreDegenerate));
}

TEST(LegendreClebsch, PositiveOnAdmissibleLocus) {
  const auto fb = fedbatch_system(kFed);
  EXPECT_GT(legendre_clebsch_margin(fb, Vec2(1, 1)), 0.0);
  const auto sys = mri_system(kMri);
  const double x2h = kMri.gamma / (2 * kMri.delta());
  for (double x1 = -0.99; x1 <= -0.1125; x1 += 0.05) {
    const Vec2 x(x1, x2h);
    if (x.norm() > 1 || std::abs(singular_feedback(sys, x)) > 1) continue;
    EXPECT_GT(legendre_clebsch_margin(sys, x), 0.0) << x1;
  }
}

TEST(ProjectToLocus, LandsOnDeltaSA) {
  const auto sys = mri_system(kMri);
  const auto y = project_to_locus(sys, Vec2(-0.5, -0.1));
  ASSERT_TRUE(y);
  EXPECT_LE(std::abs(singular_det(sys, *y)), sys.tol.locus);
}

TEST(Identities, SampledBracketIdentities) {
  for (const auto& [sys, sampler] :
       {std::pair{mri_system(kMri), mri_sampler()}, std::pair{fedbatch_system(kFed), fedbatch_sampler(kFed)}}) {
    const auto r = check_bracket_identities(sys, sampler, 800, 2024);
    EXPECT_GE(r.samples, 100) << sys.name;
    EXPECT_GE(r.locus_samples, 100) << sys.name;
    EXPECT_LE(r.bracket_fd_rel, 1e-6) << sys.name;
    EXPECT_LE(r.alpha_delta_rel, 1e-9) << sys.name;
    EXPECT_LE(r.gfg_sign_rel, 1e-6) << sys.name;
    EXPECT_LE(r.ffg_sign_rel, 1e-6) << sys.name;
    EXPECT_LE(r.exclusion_plus_rel, 1e-6) << sys.name;
    EXPECT_LE(r.exclusion_minus_rel, 1e-6) << sys.name;
  }
}
