#pragma once

// Embedded Runge-Kutta 5(4) (Dormand-Prince) with adaptive steps, 4th-order
// continuous extension, and sign-change event location on the dense output.

#include "prisat/core.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace prisat::ode {

struct Options {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_init = 0.0;  ///< 0 selects the starting step automatically
  std::size_t max_steps = 200000;
};

struct Stats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
};

template <int N>
using State = Eigen::Matrix<double, N, 1>;

/// Dense solution over [t_begin, t_end] (t_end < t_begin for backward runs).
template <int N>
class DenseSolution {
 public:
  using StateT = State<N>;

  struct Step {
    double t0;
    double h;
    std::array<StateT, 5> rc;  // Hairer's continuous-output coefficients

    StateT eval(double t) const {
      const double th = (t - t0) / h;
      const double th1 = 1.0 - th;
      return rc[0] + th * (rc[1] + th1 * (rc[2] + th * (rc[3] + th1 * rc[4])));
    }
  };

  DenseSolution() = default;
  DenseSolution(double t0, const StateT& y0) : t_begin_(t0), t_end_(t0) {
    times_.push_back(t0);
    states_.push_back(y0);
  }

  double t_begin() const { return t_begin_; }
  double t_end() const { return t_end_; }
  double span() const { return t_end_ - t_begin_; }
  bool empty() const { return times_.empty(); }

  /// Step endpoints (the natural sample grid of the solution).
  const std::vector<double>& times() const { return times_; }
  const std::vector<StateT>& states() const { return states_; }
  const std::vector<Step>& steps() const { return steps_; }

  bool covers(double t) const {
    const double lo = std::min(t_begin_, t_end_), hi = std::max(t_begin_, t_end_);
    const double slack = 1e-13 * (1.0 + std::abs(lo) + std::abs(hi));
    return t >= lo - slack && t <= hi + slack;
  }

  StateT operator()(double t) const {
    if (!covers(t))
      throw Error(ErrorKind::OutOfSpan, "t=" + std::to_string(t) + " outside [" + std::to_string(t_begin_) +
                                            ", " + std::to_string(t_end_) + "]");
    if (steps_.empty() || t == t_begin_) return states_.front();
    if (t == t_end_) return states_.back();
    const bool fwd = t_end_ >= t_begin_;
    // first step whose far end is beyond t
    auto it = std::lower_bound(steps_.begin(), steps_.end(), t, [fwd](const Step& s, double tv) {
      const double tend = s.t0 + s.h;
      return fwd ? tend < tv : tend > tv;
    });
    if (it == steps_.end()) it = std::prev(steps_.end());
    return it->eval(t);
  }

  void push(const Step& s, double t1, const StateT& y1) {
    steps_.push_back(s);
    times_.push_back(t1);
    states_.push_back(y1);
    t_end_ = t1;
  }

  /// Cuts the solution at an interior time of the last step.
  void truncate_last(double t, const StateT& y) {
    times_.back() = t;
    states_.back() = y;
    t_end_ = t;
  }

 private:
  double t_begin_ = 0.0;
  double t_end_ = 0.0;
  std::vector<double> times_;
  std::vector<StateT> states_;
  std::vector<Step> steps_;
};

/// Scalar event g(t, y) = 0. Crossings are detected only after the sign of g
/// has been armed, i.e. |g| exceeded `arm` once; this skips a zero at the
/// initial point.
template <int N>
struct Event {
  std::function<double(double, const State<N>&)> fn;
  int direction = 0;  ///< +1 rising only, -1 falling only, 0 both
  double arm = 0.0;
  bool terminal = true;
};

template <int N>
struct Result {
  DenseSolution<N> sol;
  Stats stats;
  std::optional<double> t_event;
  int event_index = -1;  ///< which event fired first
};

namespace detail {

struct Tableau {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

template <int N>
double err_norm(const State<N>& err, const State<N>& y0, const State<N>& y1, const Options& o) {
  double acc = 0.0;
  for (int i = 0; i < y0.size(); ++i) {
    const double sc = o.atol + o.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    acc += (err[i] / sc) * (err[i] / sc);
  }
  return std::sqrt(acc / static_cast<double>(y0.size()));
}

}  // namespace detail

/// Integrates y' = rhs(t, y) from t0 to t1 (either direction). `valid` is
/// checked on every accepted step; a false result raises DomainExit.
/// Several events may be watched; when more than one fires inside the same
/// step the earliest crossing wins.
template <int N, class Rhs>
Result<N> integrate(Rhs&& rhs, double t0, const State<N>& y0, double t1, const Options& opt,
                    std::span<const Event<N>> events,
                    const std::function<bool(const State<N>&)>& valid = {}) {
  using S = State<N>;
  using T = detail::Tableau;
  Result<N> res{DenseSolution<N>(t0, y0), {}, std::nullopt, -1};
  if (!y0.allFinite()) throw Error(ErrorKind::IntegrationFailure, "non-finite initial state");
  if (t1 == t0) return res;

  const double dir = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  auto f = [&](double t, const S& y) {
    ++res.stats.rhs_evals;
    return S(rhs(t, y));
  };

  double t = t0;
  S y = y0;
  S k1 = f(t, y);

  double h = opt.h_init;
  if (h <= 0.0) {
    // Hairer's starting-step heuristic
    S sc = (opt.atol + opt.rtol * y.array().abs()).matrix();
    const double d0 = std::sqrt((y.array() / sc.array()).square().mean());
    const double d1 = std::sqrt((k1.array() / sc.array()).square().mean());
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    const S y1 = y + dir * h0 * k1;
    const S k2 = f(t + dir * h0, y1);
    const double d2 = std::sqrt(((k2 - k1).array() / sc.array()).square().mean()) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    h = std::min({100.0 * h0, h1, span});
  }
  h = std::min(h, span);

  auto sign_of = [](double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); };
  std::vector<int> armed(events.size(), 0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const double g0 = events[i].fn(t, y);
    if (std::abs(g0) > events[i].arm) armed[i] = sign_of(g0);
  }

  bool last_rejected = false;
  while (true) {
    if (res.stats.accepted + res.stats.rejected >= opt.max_steps)
      throw Error(ErrorKind::IntegrationFailure, "step budget exhausted");
    const double remaining = std::abs(t1 - t);
    if (h >= remaining) h = remaining;
    if (h < 1e-14 * std::max({std::abs(t), span, 1e-300}))
      throw Error(ErrorKind::IntegrationFailure, "step size underflow at t=" + std::to_string(t));

    const double hs = dir * h;
    const S k2 = f(t + T::c2 * hs, y + hs * (T::a21 * k1));
    const S k3 = f(t + T::c3 * hs, y + hs * (T::a31 * k1 + T::a32 * k2));
    const S k4 = f(t + T::c4 * hs, y + hs * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3));
    const S k5 = f(t + T::c5 * hs, y + hs * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4));
    const S k6 = f(t + hs, y + hs * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 + T::a65 * k5));
    const S ynew = y + hs * (T::a71 * k1 + T::a73 * k3 + T::a74 * k4 + T::a75 * k5 + T::a76 * k6);
    const S k7 = f(t + hs, ynew);
    const S err = hs * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);

    double en = ynew.allFinite() ? detail::err_norm<N>(err, y, ynew, opt) : INFINITY;
    if (!std::isfinite(en)) en = 1e10;

    if (en > 1.0) {
      ++res.stats.rejected;
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
      last_rejected = true;
      continue;
    }

    typename DenseSolution<N>::Step step;
    step.t0 = t;
    step.h = hs;
    step.rc[0] = y;
    step.rc[1] = ynew - y;
    step.rc[2] = hs * k1 - step.rc[1];
    step.rc[3] = step.rc[1] - hs * k7 - step.rc[2];
    step.rc[4] = hs * (T::d1 * k1 + T::d3 * k3 + T::d4 * k4 + T::d5 * k5 + T::d6 * k6 + T::d7 * k7);

    const double tnew = (remaining - h <= 1e-15 * span) ? t1 : t + hs;
    ++res.stats.accepted;
    res.sol.push(step, tnew, ynew);
    if (valid && !valid(ynew))
      throw Error(ErrorKind::DomainExit, "trajectory left the validity region near t=" + std::to_string(tnew));

    // earliest qualifying crossing among the watched events
    int hit = -1;
    double t_hit = tnew;
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto& ev = events[i];
      const int sgn_new = sign_of(ev.fn(tnew, ynew));
      if (armed[i] != 0 && sgn_new != armed[i] && (ev.direction == 0 || ev.direction == -armed[i])) {
        double ta = t, tb = tnew;
        const double tol = 1e-12 * span;
        for (int it = 0; it < 200 && std::abs(tb - ta) > tol; ++it) {
          const double tm = 0.5 * (ta + tb);
          if (sign_of(ev.fn(tm, step.eval(tm))) == armed[i])
            ta = tm;
          else
            tb = tm;
        }
        const double te = 0.5 * (ta + tb);
        if (ev.terminal && (hit < 0 || dir * (te - t_hit) < 0)) {
          hit = static_cast<int>(i);
          t_hit = te;
        } else if (!ev.terminal && !res.t_event) {
          res.t_event = te;
          res.event_index = static_cast<int>(i);
        }
        armed[i] = sgn_new;
      } else if (armed[i] == 0 && std::abs(ev.fn(tnew, ynew)) > ev.arm) {
        armed[i] = sgn_new;
      } else if (armed[i] != 0 && sgn_new != 0 && sgn_new != armed[i]) {
        armed[i] = sgn_new;  // crossing in the ignored direction
      }
    }
    if (hit >= 0) {
      res.sol.truncate_last(t_hit, step.eval(t_hit));
      res.t_event = t_hit;
      res.event_index = hit;
      return res;
    }

    t = tnew;
    y = ynew;
    k1 = k7;
    if (t == t1) return res;

    double fac = std::min(10.0, std::max(0.2, 0.9 * std::pow(std::max(en, 1e-10), -0.2)));
    if (last_rejected) fac = std::min(fac, 1.0);
    last_rejected = false;
    h *= fac;
  }
}

template <int N, class Rhs>
Result<N> integrate(Rhs&& rhs, double t0, const State<N>& y0, double t1, const Options& opt,
                    const Event<N>* event = nullptr,
                    const std::function<bool(const State<N>&)>& valid = {}) {
  std::span<const Event<N>> evs;
  if (event) evs = std::span<const Event<N>>(event, 1);
  return integrate<N>(std::forward<Rhs>(rhs), t0, y0, t1, opt, evs, valid);
}

}  // namespace prisat::ode
