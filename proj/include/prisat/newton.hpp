#pragma once

// Damped Newton on square residual systems with forward-difference Jacobians.

#include "prisat/core.hpp"

#include <functional>
#include <limits>
#include <string>

namespace prisat {

struct ResidualSystem {
  std::string label;
  int dim = 0;
  std::function<VecX(const VecX&)> eval;
};

struct NewtonConfig {
  double tol = 1e-10;  ///< on ||F||_inf
  int max_iter = 100;
  double max_condition = 1e14;
  double armijo = 1e-4;
  double min_damping = 1.0 / 1024.0 / 1024.0;
};

struct ShootingSolution {
  std::string label;
  VecX y;
  double residual_norm = std::numeric_limits<double>::infinity();
  double jac_condition = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
};

/// Forward differences, step sqrt(eps) * (1 + |y_i|).
inline MatX fd_jacobian(const std::function<VecX(const VecX&)>& F, const VecX& y, const VecX& fy) {
  const double base = std::sqrt(std::numeric_limits<double>::epsilon());
  MatX j(fy.size(), y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    VecX yp = y;
    const double h = base * (1.0 + std::abs(y[k]));
    yp[k] += h;
    j.col(k) = (F(yp) - fy) / (yp[k] - y[k]);
  }
  return j;
}

/// 2-norm condition number; infinity for a singular matrix.
inline double condition_number(const MatX& a) {
  Eigen::JacobiSVD<MatX> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 0.0;
  const double smin = s[s.size() - 1];
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

inline ShootingSolution newton_solve(const ResidualSystem& F, const VecX& y0, const NewtonConfig& cfg = {}) {
  if (y0.size() != F.dim) throw Error(ErrorKind::InvalidConfig, F.label + ": initial guess has wrong size");
  ShootingSolution sol;
  sol.label = F.label;
  VecX y = y0;
  VecX r = F.eval(y);
  if (!r.allFinite()) throw Error(ErrorKind::IntegrationFailure, F.label + ": residual not finite at the guess");

  for (int it = 0;; ++it) {
    const MatX J = fd_jacobian(F.eval, y, r);
    sol.jac_condition = condition_number(J);
    sol.y = y;
    sol.residual_norm = r.lpNorm<Eigen::Infinity>();
    sol.iterations = it;
    if (sol.residual_norm <= cfg.tol) {
      sol.converged = true;
      return sol;
    }
    if (it >= cfg.max_iter)
      throw Error(ErrorKind::MaxIterations, F.label + ": no convergence after " + std::to_string(it) +
                                                " iterations, |F| = " + fmt17(sol.residual_norm));
    if (!(sol.jac_condition <= cfg.max_condition))
      throw Error(ErrorKind::SingularJacobian, F.label + ": Jacobian condition " + fmt17(sol.jac_condition));

    const VecX dy = J.colPivHouseholderQr().solve(-r);
    const double n0 = r.norm();
    double lam = 1.0;
    bool accepted = false;
    while (lam >= cfg.min_damping) {
      VecX trial = y + lam * dy;
      VecX rt;
      try {
        rt = F.eval(trial);
      } catch (const Error&) {
        lam *= 0.5;
        continue;
      }
      if (rt.allFinite() && rt.norm() <= (1.0 - cfg.armijo * lam) * n0) {
        y = std::move(trial);
        r = std::move(rt);
        accepted = true;
        break;
      }
      lam *= 0.5;
    }
    if (!accepted)
      throw Error(ErrorKind::LineSearchStall,
                  F.label + ": no sufficient decrease at |F| = " + fmt17(sol.residual_norm));
  }
}

}  // namespace prisat
