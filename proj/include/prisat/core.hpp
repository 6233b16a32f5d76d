#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace prisat {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec4 = Eigen::Matrix<double, 4, 1>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Failure categories shared by every module. Each maps onto one error
/// condition named in the operation contracts.
enum class ErrorKind {
  DomainError,
  DerivativeUnavailable,
  CollinearityDegenerate,
  LegendreDegenerate,
  IntegrationFailure,
  DomainExit,
  OutOfSpan,
  MaxIterations,
  LineSearchStall,
  SingularJacobian,
  NoBracket,
  CorrectorDiverged,
  AssumptionViolated,
  NotSubmersion,
  DegenerateDirection,
  ParamInvariantViolated,
  EventNotFound,
  SingularInadmissible,
  ChainBroken,
  Unclassified,
  InvalidConfig,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::DerivativeUnavailable: return "DerivativeUnavailable";
    case ErrorKind::CollinearityDegenerate: return "CollinearityDegenerate";
    case ErrorKind::LegendreDegenerate: return "LegendreDegenerate";
    case ErrorKind::IntegrationFailure: return "IntegrationFailure";
    case ErrorKind::DomainExit: return "DomainExit";
    case ErrorKind::OutOfSpan: return "OutOfSpan";
    case ErrorKind::MaxIterations: return "MaxIterations";
    case ErrorKind::LineSearchStall: return "LineSearchStall";
    case ErrorKind::SingularJacobian: return "SingularJacobian";
    case ErrorKind::NoBracket: return "NoBracket";
    case ErrorKind::CorrectorDiverged: return "CorrectorDiverged";
    case ErrorKind::AssumptionViolated: return "AssumptionViolated";
    case ErrorKind::NotSubmersion: return "NotSubmersion";
    case ErrorKind::DegenerateDirection: return "DegenerateDirection";
    case ErrorKind::ParamInvariantViolated: return "ParamInvariantViolated";
    case ErrorKind::EventNotFound: return "EventNotFound";
    case ErrorKind::SingularInadmissible: return "SingularInadmissible";
    case ErrorKind::ChainBroken: return "ChainBroken";
    case ErrorKind::Unclassified: return "Unclassified";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// det(a, b) with a as the first column.
inline double det2(const Vec2& a, const Vec2& b) { return a[0] * b[1] - a[1] * b[0]; }

inline Vec4 stack(const Vec2& x, const Vec2& p) {
  Vec4 z;
  z << x, p;
  return z;
}

/// Relative error |a-b| / max(1, |b|); used by the FD consistency checks.
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

template <class A, class B>
double rel_err_vec(const A& a, const B& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

/// Decimal text with 17 significant digits (round-trips every double).
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace prisat
