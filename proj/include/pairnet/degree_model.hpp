#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pairnet/error.hpp"

namespace pairnet {

/// Kahan-Babuska (Neumaier) compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Raw moments n_i = sum_k d_k^i p_k of a degree distribution.
///
/// moments() also fills the central sums var = n2 - n1^2 and
/// cov = n3 - n1 n2 from two passes; hand-built values fall back to the raw forms.
struct Moments {
  double n1 = 0.0;
  double n2 = 0.0;
  double n3 = 0.0;
  double var = std::numeric_limits<double>::quiet_NaN();
  double cov = std::numeric_limits<double>::quiet_NaN();

  double mean() const { return n1; }
  double variance() const { return std::isnan(var) ? n2 - n1 * n1 : var; }
  /// Cov(k, k^2) = n3 - n1 n2.
  double cov_k_k2() const { return std::isnan(cov) ? n3 - n1 * n2 : cov; }
  double stddev() const { return std::sqrt(std::max(0.0, variance())); }
};

/// Transmission rate per S-I edge, recovery rate per infected node, node count.
struct EpidemicParams {
  double tau = 0.0;
  double gamma = 1.0;
  std::size_t N = 1;

  void validate() const {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw DomainError("tau must be finite and >= 0");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be finite and > 0");
    if (N < 1) throw DomainError("N must be >= 1");
  }
};

/// Distinct degrees d_1 < ... < d_K with probabilities p_k.
class DegreeDistribution {
 public:
  static constexpr double kNormTolerance = 1e-12;

  DegreeDistribution(std::vector<int> degrees, std::vector<double> probs)
      : degrees_(std::move(degrees)), probs_(std::move(probs)) {
    if (degrees_.empty()) throw DomainError("degree distribution needs at least one degree");
    if (degrees_.size() != probs_.size()) throw DomainError("degrees and probabilities differ in length");
    if (degrees_.front() < 1) throw DomainError("degrees must be >= 1");
    for (std::size_t k = 1; k < degrees_.size(); ++k) {
      if (degrees_[k] <= degrees_[k - 1]) throw DomainError("degrees must be strictly increasing");
    }
    CompensatedSum total;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("probabilities must be finite and >= 0");
      total.add(p);
    }
    if (std::abs(total.value() - 1.0) > kNormTolerance) {
      throw DomainError("probabilities sum to " + std::to_string(total.value()) + ", expected 1");
    }
  }

  std::size_t size() const { return degrees_.size(); }
  std::span<const int> degrees() const { return degrees_; }
  std::span<const double> probs() const { return probs_; }
  int degree(std::size_t k) const { return degrees_[k]; }
  double prob(std::size_t k) const { return probs_[k]; }
  int min_degree() const { return degrees_.front(); }
  int max_degree() const { return degrees_.back(); }

  friend bool operator==(const DegreeDistribution&, const DegreeDistribution&) = default;

 private:
  std::vector<int> degrees_;
  std::vector<double> probs_;
};

inline DegreeDistribution make_regular(int n) {
  if (n < 1) throw DomainError("regular degree must be >= 1");
  return DegreeDistribution({n}, {1.0});
}

/// Two degrees d1 < d2; frac1 = N_1 / N is the share of low-degree nodes.
inline DegreeDistribution make_bimodal(int d1, int d2, double frac1) {
  if (d1 == d2) throw DomainError("bimodal degrees coincide; use make_regular");
  if (d1 < 1 || d2 < d1) throw DomainError("bimodal degrees must satisfy 1 <= d1 < d2");
  if (!(frac1 > 0.0 && frac1 < 1.0)) throw DomainError("bimodal frac1 must lie in (0, 1)");
  return DegreeDistribution({d1, d2}, {frac1, 1.0 - frac1});
}

/// p(k) = C k^-alpha on kmin..kmax inclusive.
inline DegreeDistribution make_truncated_powerlaw(int kmin, int kmax, double alpha) {
  if (kmin < 1 || kmax < kmin) throw DomainError("power law needs 1 <= kmin <= kmax");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("power law exponent must be > 0");
  std::vector<int> degrees(static_cast<std::size_t>(kmax - kmin + 1));
  std::iota(degrees.begin(), degrees.end(), kmin);
  std::vector<double> weights(degrees.size());
  CompensatedSum inv_c;
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    weights[i] = std::pow(static_cast<double>(degrees[i]), -alpha);
    inv_c.add(weights[i]);
  }
  const double c = 1.0 / inv_c.value();
  for (double& w : weights) w *= c;
  return DegreeDistribution(std::move(degrees), std::move(weights));
}

inline Moments moments(const DegreeDistribution& dist) {
  CompensatedSum s1, s2, s3;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const double d = dist.degree(k);
    const double p = dist.prob(k);
    s1.add(d * p);
    s2.add(d * d * p);
    s3.add(d * d * d * p);
  }
  Moments m{s1.value(), s2.value(), s3.value()};
  // sum p (d - n1)^2 and sum p (d - n1)^2 (d + n1): nonnegative terms, no cancellation
  CompensatedSum c2, c3;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    const double dev = dist.degree(k) - m.n1;
    const double p = dist.prob(k);
    c2.add(dev * dev * p);
    c3.add(dev * dev * (dist.degree(k) + m.n1) * p);
  }
  m.var = c2.value();
  m.cov = c3.value();
  return m;
}

/// gamma <k> / <k^2>, the raw-moment epidemic threshold.
inline double tau_critical(const DegreeDistribution& dist, double gamma) {
  const Moments m = moments(dist);
  return gamma * m.n1 / m.n2;
}

inline double default_tau(const DegreeDistribution& dist, double gamma, double multiple = 3.0) {
  if (!(multiple > 0.0)) throw DomainError("tau multiple must be > 0");
  return multiple * tau_critical(dist, gamma);
}

/// Per-class node counts N_k realizing `dist` on N nodes.
///
/// Largest-remainder rounding of N p_k (ties go to the lower degree), so the
/// counts sum to N. If the stub total comes out odd, one node moves from a
/// class that was rounded up to the smallest-degree class with a nonzero
/// remainder whose degree has the other parity.
inline std::vector<std::size_t> degree_class_counts(const DegreeDistribution& dist, std::size_t N) {
  if (N < 1) throw DomainError("N must be >= 1");
  const std::size_t K = dist.size();
  std::vector<std::size_t> counts(K);
  std::vector<double> frac(K);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const double target = static_cast<double>(N) * dist.prob(k);
    counts[k] = static_cast<std::size_t>(std::floor(target));
    frac[k] = target - std::floor(target);
    assigned += counts[k];
  }
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  std::vector<bool> rounded_up(K, false);
  for (std::size_t i = 0; assigned < N; i = (i + 1) % K) {
    ++counts[order[i]];
    rounded_up[order[i]] = true;
    ++assigned;
  }
  // Guard against floor() overshoot from probabilities a hair above the true value.
  for (std::size_t i = K; assigned > N; --i) {
    const std::size_t k = order[(i - 1) % K];
    if (counts[k] > 0) {
      --counts[k];
      --assigned;
    }
  }

  unsigned long long stubs = 0;
  for (std::size_t k = 0; k < K; ++k) stubs += static_cast<unsigned long long>(dist.degree(k)) * counts[k];
  if (stubs % 2 == 0) return counts;

  auto parity = [&](std::size_t k) { return dist.degree(k) % 2; };
  auto pick_donor = [&](std::size_t receiver) -> std::ptrdiff_t {
    std::ptrdiff_t best = -1;
    for (std::size_t k = 0; k < K; ++k) {
      if (k == receiver || counts[k] == 0 || parity(k) == parity(receiver)) continue;
      if (best < 0) {
        best = static_cast<std::ptrdiff_t>(k);
        continue;
      }
      const auto b = static_cast<std::size_t>(best);
      // prefer classes that were rounded up, then the smallest remainder
      if (rounded_up[k] != rounded_up[b] ? rounded_up[k] : frac[k] < frac[b]) best = static_cast<std::ptrdiff_t>(k);
    }
    return best;
  };
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t k = 0; k < K; ++k) {
      if (pass == 0 && (frac[k] == 0.0 || rounded_up[k])) continue;
      const std::ptrdiff_t donor = pick_donor(k);
      if (donor < 0) continue;
      --counts[static_cast<std::size_t>(donor)];
      ++counts[k];
      return counts;
    }
  }
  throw DomainError("no degree sequence on " + std::to_string(N) + " nodes has an even stub total");
}

/// Sorted degree sequence of length N; see degree_class_counts for the rounding rule.
inline std::vector<int> sample_degree_sequence(const DegreeDistribution& dist, std::size_t N) {
  const auto counts = degree_class_counts(dist, N);
  std::vector<int> seq;
  seq.reserve(N);
  for (std::size_t k = 0; k < dist.size(); ++k) seq.insert(seq.end(), counts[k], dist.degree(k));
  return seq;
}

}  // namespace pairnet
