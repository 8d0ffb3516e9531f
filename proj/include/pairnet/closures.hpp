#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pairnet/degree_model.hpp"
#include "pairnet/error.hpp"

namespace pairnet {

/// Relative variance threshold below which a network is treated as homogeneous:
/// n2 - n1^2 <= kHomogeneousVariance * n1^2.
inline constexpr double kHomogeneousVariance = 1e-9;

inline bool is_homogeneous(const Moments& m) { return m.variance() <= kHomogeneousVariance * m.n1 * m.n1; }

/// [ASI] ~ (n-1)/n [AS][SI]/[S]. Zero when S = 0.
inline double homogeneous_triple(double as, double si, double s, double n) {
  if (!(s > 0.0)) return 0.0;
  return (n - 1.0) / n * as * si / s;
}

/// P = sum_k (d_k - 1) d_k [S_k] / S_s^2 with S_s = sum_k d_k [S_k]. Zero when S_s = 0.
inline double compact_P(std::span<const double> sk, std::span<const int> degrees) {
  CompensatedSum stubs, wedges;
  for (std::size_t k = 0; k < sk.size(); ++k) {
    const double d = degrees[k];
    stubs.add(d * sk[k]);
    wedges.add((d - 1.0) * d * sk[k]);
  }
  const double ss = stubs.value();
  if (!(ss > 0.0)) return 0.0;
  return wedges.value() / (ss * ss);
}

struct SusceptibleStubs {
  double n_S = 0.0;  // mean degree of susceptible nodes
  double S1 = 0.0;   // susceptible stub count [SI] + [SS]
};

/// nullopt when S <= 0.
inline std::optional<SusceptibleStubs> mean_degree_susceptibles(double si, double ss, double s) {
  if (!(s > 0.0)) return std::nullopt;
  return SusceptibleStubs{(si + ss) / s, si + ss};
}

/// Linear-in-degree approximation of the susceptible degree distribution.
///
/// s_k = p_k q_k with q_k linear in d_k, fixed by sum s_k = 1 and
/// sum d_k s_k = n_S. Entries of `s` may be negative for extreme n_S; they are
/// not clamped, `has_negative` is set instead.
struct SusceptibleDegreeApprox {
  double n_S = 0.0;
  double q1 = 0.0;
  double qK = 0.0;
  std::vector<double> s;
  std::optional<double> Q;
  bool has_negative = false;

  /// sum_k d_k^2 s_k, the approximate second moment per susceptible node.
  double second_moment(std::span<const int> degrees) const {
    CompensatedSum acc;
    for (std::size_t k = 0; k < s.size(); ++k) acc.add(static_cast<double>(degrees[k]) * degrees[k] * s[k]);
    return acc.value();
  }
};

inline SusceptibleDegreeApprox linear_susceptible_approx(const DegreeDistribution& dist, double n_S) {
  const Moments m = moments(dist);
  if (dist.size() < 2 || is_homogeneous(m)) {
    throw DomainError("linear susceptible approximation needs a heterogeneous network (K >= 2, nonzero variance)");
  }
  const double var = m.variance();
  const double d1 = dist.min_degree();
  const double dK = dist.max_degree();
  SusceptibleDegreeApprox out;
  out.n_S = n_S;
  // q(d) = 1 + (n_S - n1)(d - n1)/var: the closed forms rearranged to avoid cancelling n2 against n1 n_S
  out.q1 = 1.0 + (n_S - m.n1) * (d1 - m.n1) / var;
  out.qK = 1.0 + (n_S - m.n1) * (dK - m.n1) / var;
  out.s.resize(dist.size());
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const double dk = dist.degree(k);
    const double p = dist.prob(k);
    out.s[k] = (p * (dk - d1) * out.qK + p * (dK - dk) * out.q1) / (dK - d1);
    if (out.s[k] < 0.0) out.has_negative = true;
  }
  return out;
}

/// Closure factor Q of the super compact model, so that [ASI] ~ [AS][SI] Q.
///
/// Q = 1/(n_S S) * ( (n2 (n2 - n_S n1) + n3 (n_S - n1)) / (n_S (n2 - n1^2)) - 1 ),
/// n_S = ([SI] + [SS]) / [S]. For zero-variance networks the bracket is
/// replaced by its limit n2/n_S - 1. nullopt when S <= 0 or [SI] + [SS] <= 0.
inline std::optional<double> Q_factor(double s, double si, double ss, const Moments& m) {
  if (!(s > 0.0) || !(si + ss > 0.0)) return std::nullopt;
  const double n_S = (si + ss) / s;
  double bracket;
  if (is_homogeneous(m)) {
    bracket = m.n2 / n_S - 1.0;
  } else {
    // same as (n2 (n2 - n_S n1) + n3 (n_S - n1)) / (n_S var) - 1, without the n2^2 cancellation
    bracket = (m.n2 + (n_S - m.n1) * m.cov_k_k2() / m.variance()) / n_S - 1.0;
  }
  return bracket / (n_S * s);
}

inline std::optional<double> Q_factor(double s, double si, double ss, const DegreeDistribution& dist) {
  return Q_factor(s, si, ss, moments(dist));
}

/// [ASI] under the moment-based closure; zero on degenerate states.
inline double new_closure_triple(double as, double si, double s, double ss, const Moments& m) {
  return as * si * Q_factor(s, si, ss, m).value_or(0.0);
}

inline double new_closure_triple(double as, double si, double s, double ss, const DegreeDistribution& dist) {
  return new_closure_triple(as, si, s, ss, moments(dist));
}

/// E = (S2 - S1)/S1^2 - Q evaluated on a degree-resolved susceptible profile.
struct ClosureErrorReport {
  double t = 0.0;
  double E = 0.0;
  double relative = 0.0;  // E / Q
  double n_S = 0.0;       // S1 / [S] from the degree-resolved counts
  double n_S_pairs = 0.0; // ([SI] + [SS]) / [S]
  double Q = 0.0;
};

/// `sk` are the per-degree susceptible counts; si and ss the aggregate pairs.
inline ClosureErrorReport closure_error_E(double t, std::span<const double> sk, double si, double ss,
                                          const DegreeDistribution& dist) {
  CompensatedSum s_tot, s1, s2;
  for (std::size_t k = 0; k < sk.size(); ++k) {
    const double d = dist.degree(k);
    s_tot.add(sk[k]);
    s1.add(d * sk[k]);
    s2.add(d * d * sk[k]);
  }
  const double S = s_tot.value();
  const double S1 = s1.value();
  if (!(S > 0.0) || !(S1 > 0.0)) throw DomainError("closure error undefined: no susceptible stubs");
  ClosureErrorReport rep;
  rep.t = t;
  rep.n_S = S1 / S;
  rep.n_S_pairs = (si + ss) / S;
  // Q evaluated at the degree-resolved n_S so E isolates the closure itself.
  rep.Q = *Q_factor(S, S1, 0.0, moments(dist));
  rep.E = (s2.value() - S1) / (S1 * S1) - rep.Q;
  rep.relative = rep.Q != 0.0 ? rep.E / rep.Q : 0.0;
  return rep;
}

}  // namespace pairnet
