#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pairnet/error.hpp"

namespace pairnet {

struct IntegrationSpec {
  double t0 = 0.0;
  double t_end = 15.0;
  std::vector<double> output_times;
  double rtol = 1e-8;
  double atol = 1e-10;
  std::size_t max_steps = 1'000'000;
  /// Steps leaving any component below -negativity_floor * scale are rejected
  /// and retried at half the step. Disabled when unset.
  std::optional<double> negativity_floor = 1e-9;
  double scale = 1.0;
  /// Initial step; chosen automatically when unset.
  std::optional<double> h0;

  void validate() const {
    if (!(t0 < t_end)) throw DomainError("integration needs t0 < t_end");
    if (!(rtol > 0.0) || !(atol > 0.0)) throw DomainError("rtol and atol must be > 0");
    for (std::size_t i = 0; i < output_times.size(); ++i) {
      if (output_times[i] < t0 || output_times[i] > t_end) throw DomainError("output time outside [t0, t_end]");
      if (i > 0 && !(output_times[i] > output_times[i - 1])) throw DomainError("output times must increase");
    }
  }
};

/// `points` equally spaced times covering [t0, t_end].
inline std::vector<double> uniform_grid(double t0, double t_end, std::size_t points) {
  if (points < 2) throw DomainError("a grid needs at least two points");
  std::vector<double> grid(points);
  const double dt = (t_end - t0) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = t0 + dt * static_cast<double>(i);
  grid.back() = t_end;
  return grid;
}

enum class IntegrationStatus { ok, max_steps_exceeded };

struct TimeSeries {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  IntegrationStatus status = IntegrationStatus::ok;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;

  bool ok() const { return status == IntegrationStatus::ok; }
};

namespace dopri5 {

// Dormand-Prince 5(4) tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
// 5th minus embedded 4th order weights.
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
// Continuous extension (Hairer, Norsett & Wanner).
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

}  // namespace dopri5

namespace detail {

inline std::string describe_state(double t, std::span<const double> y) {
  std::ostringstream os;
  os.precision(17);
  os << "t=" << t << " state=[";
  const std::size_t shown = std::min<std::size_t>(y.size(), 16);
  for (std::size_t i = 0; i < shown; ++i) os << (i ? ", " : "") << y[i];
  if (shown < y.size()) os << ", ... (" << y.size() << " components)";
  os << "]";
  return os.str();
}

template <class Rhs>
void checked_rhs(const Rhs& rhs, double t, std::span<const double> y, std::span<double> dy) {
  rhs(t, y, dy);
  for (double v : dy) {
    if (!std::isfinite(v)) throw NumericalError("non-finite derivative at " + describe_state(t, y));
  }
}

}  // namespace detail

/// Adaptive Dormand-Prince 5(4) integration with PI step control and dense
/// output at spec.output_times.
///
/// `rhs(t, y, dydt)` writes the derivative of y into dydt. The error norm is
/// the RMS of e_i / (atol + rtol * max(|y_i|, |y_new_i|)). When the step
/// budget runs out the series holds the outputs reached so far and its status
/// says so.
template <class Rhs>
TimeSeries integrate(const Rhs& rhs, std::span<const double> y0, const IntegrationSpec& spec) {
  using namespace dopri5;
  spec.validate();
  const std::size_t n = y0.size();
  for (double v : y0) {
    if (!std::isfinite(v)) throw NumericalError("non-finite initial state");
  }

  constexpr double safety = 0.9, fac_min = 0.2, fac_max = 5.0, beta = 0.04;
  const double alpha = 0.2 - 0.75 * beta;

  TimeSeries out;
  std::vector<double> y(y0.begin(), y0.end()), y_new(n), y_stage(n);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  std::vector<double> r1(n), r2(n), r3(n), r4(n), r5(n);

  double t = spec.t0;
  std::size_t next_out = 0;
  const auto& outs = spec.output_times;
  while (next_out < outs.size() && outs[next_out] <= t) {
    out.times.push_back(outs[next_out++]);
    out.states.push_back(y);
  }

  detail::checked_rhs(rhs, t, y, k1);

  auto weight = [&](double a, double b) {
    return spec.atol + spec.rtol * std::max(std::abs(a), std::abs(b));
  };

  double h;
  if (spec.h0) {
    h = *spec.h0;
  } else {
    double dy_norm = 0.0, y_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weight(y[i], y[i]);
      y_norm += (y[i] / w) * (y[i] / w);
      dy_norm += (k1[i] / w) * (k1[i] / w);
    }
    y_norm = std::sqrt(y_norm / static_cast<double>(std::max<std::size_t>(n, 1)));
    dy_norm = std::sqrt(dy_norm / static_cast<double>(std::max<std::size_t>(n, 1)));
    h = (y_norm < 1e-5 || dy_norm < 1e-5) ? 1e-6 : 0.01 * y_norm / dy_norm;
    h = std::min(h, 0.1 * (spec.t_end - spec.t0));
  }
  double err_old = 1e-4;
  bool last_rejected = false;
  const double h_min = 1e-14 * std::max(1.0, std::abs(spec.t_end));

  auto stage = [&](std::vector<double>& dst, std::initializer_list<std::pair<double, const std::vector<double>*>> terms) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (const auto& [coef, k] : terms) acc += coef * (*k)[i];
      dst[i] = y[i] + h * acc;
    }
  };

  std::size_t steps = 0;
  while (t < spec.t_end) {
    if (steps++ >= spec.max_steps) {
      out.status = IntegrationStatus::max_steps_exceeded;
      return out;
    }
    if (t + 1.01 * h >= spec.t_end) h = spec.t_end - t;

    stage(y_stage, {{a21, &k1}});
    detail::checked_rhs(rhs, t + c2 * h, y_stage, k2);
    stage(y_stage, {{a31, &k1}, {a32, &k2}});
    detail::checked_rhs(rhs, t + c3 * h, y_stage, k3);
    stage(y_stage, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
    detail::checked_rhs(rhs, t + c4 * h, y_stage, k4);
    stage(y_stage, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
    detail::checked_rhs(rhs, t + c5 * h, y_stage, k5);
    stage(y_stage, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
    detail::checked_rhs(rhs, t + h, y_stage, k6);
    stage(y_new, {{a71, &k1}, {a73, &k3}, {a74, &k4}, {a75, &k5}, {a76, &k6}});
    const double t_new = (h == spec.t_end - t) ? spec.t_end : t + h;
    detail::checked_rhs(rhs, t_new, y_new, k7);

    double err_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double r = e / weight(y[i], y_new[i]);
      err_norm += r * r;
    }
    err_norm = std::sqrt(err_norm / static_cast<double>(std::max<std::size_t>(n, 1)));

    bool negative = false;
    if (spec.negativity_floor) {
      const double floor = -*spec.negativity_floor * spec.scale;
      negative = std::any_of(y_new.begin(), y_new.end(), [&](double v) { return v < floor; });
    }

    if (negative || err_norm > 1.0) {
      ++out.rejected_steps;
      if (negative) {
        h *= 0.5;
      } else {
        h *= std::max(fac_min, safety * std::pow(err_norm, -alpha));
      }
      last_rejected = true;
      if (h < h_min) throw NumericalError("step size underflow at " + detail::describe_state(t, y));
      continue;
    }

    // Accepted: dense output for every requested time in (t, t_new].
    if (next_out < outs.size() && outs[next_out] <= t_new) {
      for (std::size_t i = 0; i < n; ++i) {
        const double dyi = y_new[i] - y[i];
        const double bspl = h * k1[i] - dyi;
        r1[i] = y[i];
        r2[i] = dyi;
        r3[i] = bspl;
        r4[i] = dyi - h * k7[i] - bspl;
        r5[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
      }
      while (next_out < outs.size() && outs[next_out] <= t_new) {
        const double to = outs[next_out++];
        std::vector<double> yo(n);
        if (to == t_new) {
          yo = y_new;
        } else {
          const double th = (to - t) / h, th1 = 1.0 - th;
          for (std::size_t i = 0; i < n; ++i) {
            yo[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
          }
        }
        out.times.push_back(to);
        out.states.push_back(std::move(yo));
      }
    }

    ++out.accepted_steps;
    t = t_new;
    y.swap(y_new);
    k1.swap(k7);

    double fac = std::pow(std::max(err_norm, 1e-10), -alpha) * std::pow(err_old, beta) * safety;
    fac = std::clamp(fac, fac_min, fac_max);
    if (last_rejected) fac = std::min(fac, 1.0);
    err_old = std::max(err_norm, 1e-4);
    last_rejected = false;
    h *= fac;
  }
  return out;
}

struct PlateauResult {
  std::vector<double> state;
  double time = 0.0;
  bool converged = false;
};

/// Integrate until max_i |dy_i/dt| < plateau_tol * gamma * N or t_cap is reached.
///
/// The derivative is checked at the end of every unit-length (1/gamma) chunk.
template <class Rhs>
PlateauResult solve_to_plateau(const Rhs& rhs, std::span<const double> y0, double gamma, double N,
                               double plateau_tol, IntegrationSpec base = {}, std::optional<double> t_cap = {}) {
  const double cap = t_cap.value_or(200.0 / gamma);
  const double chunk = 1.0 / gamma;
  const double threshold = plateau_tol * gamma * N;
  PlateauResult res;
  res.state.assign(y0.begin(), y0.end());
  res.time = base.t0;
  std::vector<double> dy(res.state.size());
  auto stationary = [&] {
    detail::checked_rhs(rhs, res.time, res.state, dy);
    double worst = 0.0;
    for (double v : dy) worst = std::max(worst, std::abs(v));
    return worst < threshold;
  };
  while (true) {
    if (stationary()) {
      res.converged = true;
      return res;
    }
    if (res.time >= cap) return res;
    IntegrationSpec spec = base;
    spec.t0 = res.time;
    spec.t_end = std::min(cap, res.time + chunk);
    spec.output_times = {spec.t_end};
    spec.h0.reset();
    const TimeSeries ts = integrate(rhs, res.state, spec);
    if (!ts.ok() || ts.states.empty()) throw NumericalError("plateau search exhausted the step budget");
    res.state = ts.states.back();
    res.time = spec.t_end;
  }
}

}  // namespace pairnet
