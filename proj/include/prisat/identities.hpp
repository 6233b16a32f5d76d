#pragma once

// Sampled checks of the bracket identities: analytic vs finite-difference
// brackets, δ_SA = -α δ0 off Δ0, and the sign identities on Δ_SA.

#include "prisat/models.hpp"
#include "prisat/planar_system.hpp"

#include <random>

namespace prisat {

using PointSampler = std::function<Vec2(std::mt19937_64&)>;

inline PointSampler fedbatch_sampler(const FedBatchParams& P) {
  return [P](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> s(0.01 * P.s_in, 0.99 * P.s_in), v(0.01 * P.v_max, P.v_max);
    const double a = s(rng);
    return Vec2(a, v(rng));
  };
}

/// uniform in the Bloch ball, by rejection
inline PointSampler mri_sampler() {
  return [](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> c(-1.0, 1.0);
    for (;;) {
      const double a = c(rng);
      const Vec2 x(a, c(rng));
      if (x.squaredNorm() <= 1.0) return x;
    }
  };
}

struct IdentityReport {
  int samples = 0;
  int locus_samples = 0;
  int skipped = 0;                 ///< collinear or degenerate points
  double bracket_fd_rel = 0.0;     ///< analytic vs central-difference [f,g]
  double alpha_delta_rel = 0.0;    ///< δ_SA + α δ0, relative to |δ_SA|
  double gfg_sign_rel = 0.0;       ///< det(g,[g,[f,g]]) + δ0 ∇α·g on Δ_SA
  double ffg_sign_rel = 0.0;       ///< det(g,[f,[f,g]]) + δ0 ∇α·f on Δ_SA
  double exclusion_plus_rel = 0.0;
  double exclusion_minus_rel = 0.0;
};

namespace detail {

/// |a - b| against the size of the terms that make up a and b
inline double rel_gap(double a, double b, double scale) {
  const double d = std::max({std::abs(a), std::abs(b), scale});
  return d == 0.0 ? 0.0 : std::abs(a - b) / d;
}

}  // namespace detail

/// n points from `sample`; the Δ_SA identities use those points that project
/// onto the locus (|δ_SA| <= tol.locus).
inline IdentityReport check_bracket_identities(const PlanarAffineSystem& sys, const PointSampler& sample, int n,
                                               std::uint64_t seed) {
  IdentityReport r;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) {
    const Vec2 x = sample(rng);
    if (!sys.in_domain(x)) {
      ++r.skipped;
      continue;
    }
    const auto b = bracket_data(sys, x, true);
    ++r.samples;
    const Mat2 jf = VectorField2::central_jacobian(sys.f.eval, x), jg = VectorField2::central_jacobian(sys.g.eval, x);
    const Vec2 fg_fd = jg * b.f - jf * b.g;
    r.bracket_fd_rel = std::max(r.bracket_fd_rel, (fg_fd - b.fg).norm() / std::max(b.fg.norm(), 1e-300));
    if (is_collinear(sys, b)) {
      ++r.skipped;
      continue;
    }
    const double d0 = det2(b.f, b.g), dsa = det2(b.g, b.fg);
    const double alpha = -dsa / d0;
    r.alpha_delta_rel = std::max(r.alpha_delta_rel, std::abs(dsa + alpha * d0) / std::max(std::abs(dsa), 1e-300));

    const auto y = project_to_locus(sys, x);
    if (!y) continue;
    const auto by = bracket_data(sys, *y, true);
    if (is_collinear(sys, by)) continue;
    // near Δ0, δ_SA vanishes with δ0 while α does not: not a singular point
    const double d0y = det2(by.f, by.g);
    if (std::abs(det2(by.g, by.fg) / d0y) > 1e-8) {
      ++r.skipped;
      continue;
    }
    const double lc = det2(by.g, by.gfg);
    if (std::abs(lc) <= sys.tol.legendre) continue;
    ++r.locus_samples;
    auto alpha_at = [&](const Vec2& q) { return alpha_beta(sys, q).alpha; };
    const Vec2 ga = fd_gradient(alpha_at, *y);
    const double sa = std::abs(d0y) * ga.norm();
    r.gfg_sign_rel = std::max(r.gfg_sign_rel, detail::rel_gap(lc, -d0y * ga.dot(by.g), sa * by.g.norm()));
    r.ffg_sign_rel =
        std::max(r.ffg_sign_rel, detail::rel_gap(det2(by.g, by.ffg), -d0y * ga.dot(by.f), sa * by.f.norm()));
    const double psi = -det2(by.g, by.ffg) / lc;
    const Vec2 gd = fd_gradient([&](const Vec2& q) { return singular_det(sys, q); }, *y);
    const double sp = std::max(gd.norm() * (by.f + by.g).norm(), std::abs(lc) * (1.0 + std::abs(psi)));
    const double sm = std::max(gd.norm() * (by.f - by.g).norm(), std::abs(lc) * (1.0 + std::abs(psi)));
    r.exclusion_plus_rel =
        std::max(r.exclusion_plus_rel, detail::rel_gap(gd.dot(by.f + by.g), lc * (1.0 - psi), sp));
    r.exclusion_minus_rel =
        std::max(r.exclusion_minus_rel, detail::rel_gap(gd.dot(by.f - by.g), lc * (-1.0 - psi), sm));
  }
  return r;
}

}  // namespace prisat
