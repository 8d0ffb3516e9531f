#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pairnet/closures.hpp"
#include "pairnet/degree_model.hpp"
#include "pairnet/error.hpp"

// Closed pairwise SIS models on a flat state vector.
//
// Pair variables use directed counting: [SI] = [IS] is the number of S-I
// edges, [SS] and [II] are twice the number of S-S and I-I edges, so
// [SS] + 2[SI] + [II] is the total stub count n1 N.
//
// State layouts (K = number of distinct degrees):
//   traditional, supercompact : [S, I, SI, SS, II]
//   compact                   : [S_1..S_K, I_1..I_K, SI, SS, II]
//   heterogeneous             : [S_1..S_K, I_1..I_K, SS(KxK), SI(KxK), II(KxK)]
// Matrices are row-major; SI(k, l) = [S_k I_l]. The redundant infected
// variables are integrated alongside the susceptible ones so that node
// conservation doubles as an integration-quality check.

namespace pairnet {

enum class ModelKind { traditional, compact, heterogeneous, supercompact };

inline std::string_view model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::traditional: return "traditional";
    case ModelKind::compact: return "compact";
    case ModelKind::heterogeneous: return "heterogeneous";
    case ModelKind::supercompact: return "supercompact";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(std::string_view name) {
  for (ModelKind k : {ModelKind::traditional, ModelKind::compact, ModelKind::heterogeneous, ModelKind::supercompact}) {
    if (model_name(k) == name) return k;
  }
  throw DomainError("unknown model '" + std::string(name) + "'");
}

struct PairwiseState {
  double S = 0.0;
  double I = 0.0;
  double SI = 0.0;
  double SS = 0.0;
  double II = 0.0;

  std::vector<double> flat() const { return {S, I, SI, SS, II}; }
  static PairwiseState from_flat(std::span<const double> y) { return {y[0], y[1], y[2], y[3], y[4]}; }
};

struct CompactState {
  std::vector<double> Sk;
  std::vector<double> Ik;
  double SI = 0.0;
  double SS = 0.0;
  double II = 0.0;

  std::vector<double> flat() const {
    std::vector<double> y(Sk);
    y.insert(y.end(), Ik.begin(), Ik.end());
    y.insert(y.end(), {SI, SS, II});
    return y;
  }
  static CompactState from_flat(std::span<const double> y, std::size_t K) {
    CompactState c;
    c.Sk.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(K));
    c.Ik.assign(y.begin() + static_cast<std::ptrdiff_t>(K), y.begin() + static_cast<std::ptrdiff_t>(2 * K));
    c.SI = y[2 * K];
    c.SS = y[2 * K + 1];
    c.II = y[2 * K + 2];
    return c;
  }
};

struct HetState {
  std::size_t K = 0;
  std::vector<double> Sk;
  std::vector<double> Ik;
  std::vector<double> SSmat;  // [S_k S_l], row-major K x K
  std::vector<double> SImat;  // [S_k I_l]
  std::vector<double> IImat;  // [I_k I_l]

  std::vector<double> flat() const {
    std::vector<double> y;
    y.reserve(2 * K + 3 * K * K);
    for (const auto* part : {&Sk, &Ik, &SSmat, &SImat, &IImat}) y.insert(y.end(), part->begin(), part->end());
    return y;
  }
  static HetState from_flat(std::span<const double> y, std::size_t K) {
    HetState h;
    h.K = K;
    auto take = [&](std::size_t off, std::size_t n) {
      return std::vector<double>(y.begin() + static_cast<std::ptrdiff_t>(off),
                                 y.begin() + static_cast<std::ptrdiff_t>(off + n));
    };
    h.Sk = take(0, K);
    h.Ik = take(K, K);
    h.SSmat = take(2 * K, K * K);
    h.SImat = take(2 * K + K * K, K * K);
    h.IImat = take(2 * K + 2 * K * K, K * K);
    return h;
  }
};

struct ConservedQuantities {
  double node_total = 0.0;  // [S] + [I]
  double pair_total = 0.0;  // [SS] + 2[SI] + [II]
};

inline ConservedQuantities conserved_quantities(const PairwiseState& agg) {
  return {agg.S + agg.I, agg.SS + 2.0 * agg.SI + agg.II};
}

namespace detail {

// Shared right-hand side of the closed 5-equation pairwise system with
// [ASI] = [AS][SI] * factor.
inline void pairwise_rhs(double tau, double gamma, double factor, std::span<const double> y, std::span<double> dy) {
  const double I = y[1], SI = y[2], SS = y[3], II = y[4];
  dy[0] = gamma * I - tau * SI;
  dy[1] = tau * SI - gamma * I;
  dy[2] = gamma * (II - SI) + tau * factor * SI * (SS - SI) - tau * SI;
  dy[3] = 2.0 * gamma * SI - 2.0 * tau * factor * SI * SS;
  dy[4] = -2.0 * gamma * II + 2.0 * tau * factor * SI * SI + 2.0 * tau * SI;
}

}  // namespace detail

/// Pairwise model closed with [ASI] ~ (n-1)/n [AS][SI]/[S].
class TraditionalModel {
 public:
  TraditionalModel(EpidemicParams params, double mean_degree) : params_(params), n_(mean_degree) {
    if (!(n_ >= 1.0)) throw DomainError("traditional model needs mean degree >= 1");
  }

  std::size_t dimension() const { return 5; }
  const EpidemicParams& params() const { return params_; }

  void operator()(double /*t*/, std::span<const double> y, std::span<double> dy) const {
    const double S = y[0];
    const double factor = S > 0.0 ? (n_ - 1.0) / n_ / S : 0.0;
    detail::pairwise_rhs(params_.tau, params_.gamma, factor, y, dy);
  }

  PairwiseState aggregate(std::span<const double> y) const { return PairwiseState::from_flat(y); }

 private:
  EpidemicParams params_;
  double n_;
};

/// Four-equation model closed with the moment-based factor Q (plus the redundant [I]).
class SuperCompactModel {
 public:
  SuperCompactModel(EpidemicParams params, const DegreeDistribution& dist)
      : params_(params), moments_(moments(dist)) {}

  std::size_t dimension() const { return 5; }
  const EpidemicParams& params() const { return params_; }

  void operator()(double /*t*/, std::span<const double> y, std::span<double> dy) const {
    const double factor = Q_factor(y[0], y[2], y[3], moments_).value_or(0.0);
    detail::pairwise_rhs(params_.tau, params_.gamma, factor, y, dy);
  }

  PairwiseState aggregate(std::span<const double> y) const { return PairwiseState::from_flat(y); }

 private:
  EpidemicParams params_;
  Moments moments_;
};

/// K+3 equation model: [S_k] per degree with aggregate pairs (plus redundant [I_k]).
class CompactModel {
 public:
  CompactModel(EpidemicParams params, const DegreeDistribution& dist)
      : params_(params), degrees_(dist.degrees().begin(), dist.degrees().end()) {}

  std::size_t K() const { return degrees_.size(); }
  std::size_t dimension() const { return 2 * K() + 3; }
  const EpidemicParams& params() const { return params_; }
  std::span<const int> degrees() const { return degrees_; }

  void operator()(double /*t*/, std::span<const double> y, std::span<double> dy) const {
    const std::size_t K = this->K();
    const double tau = params_.tau, gamma = params_.gamma;
    const auto sk = y.first(K);
    const auto ik = y.subspan(K, K);
    const double SI = y[2 * K], SS = y[2 * K + 1], II = y[2 * K + 2];

    CompensatedSum stubs;
    for (std::size_t k = 0; k < K; ++k) stubs.add(degrees_[k] * sk[k]);
    const double s_s = stubs.value();
    const double per_stub = s_s > 0.0 ? SI / s_s : 0.0;
    const double P = compact_P(sk, degrees_);

    for (std::size_t k = 0; k < K; ++k) {
      const double dS = gamma * ik[k] - tau * degrees_[k] * sk[k] * per_stub;
      dy[k] = dS;
      dy[K + k] = -dS;
    }
    dy[2 * K] = gamma * (II - SI) + tau * (SS - SI) * SI * P - tau * SI;
    dy[2 * K + 1] = 2.0 * gamma * SI - 2.0 * tau * SS * SI * P;
    dy[2 * K + 2] = 2.0 * tau * SI - 2.0 * gamma * II + 2.0 * tau * SI * SI * P;
  }

  PairwiseState aggregate(std::span<const double> y) const {
    const std::size_t K = this->K();
    CompensatedSum s, i;
    for (std::size_t k = 0; k < K; ++k) {
      s.add(y[k]);
      i.add(y[K + k]);
    }
    return {s.value(), i.value(), y[2 * K], y[2 * K + 1], y[2 * K + 2]};
  }

 private:
  EpidemicParams params_;
  std::vector<int> degrees_;
};

/// Degree-resolved pair model with 2K^2-scale pair variables.
///
/// Triples are closed around the middle node:
///   [A_m S_k B_l] ~ (d_k - 1)/d_k [A_m S_k][S_k B_l] / [S_k].
class HeterogeneousModel {
 public:
  HeterogeneousModel(EpidemicParams params, const DegreeDistribution& dist)
      : params_(params), degrees_(dist.degrees().begin(), dist.degrees().end()) {}

  std::size_t K() const { return degrees_.size(); }
  std::size_t dimension() const { return 2 * K() + 3 * K() * K(); }
  const EpidemicParams& params() const { return params_; }
  std::span<const int> degrees() const { return degrees_; }

  void operator()(double /*t*/, std::span<const double> y, std::span<double> dy) const {
    const std::size_t K = this->K();
    const std::size_t KK = K * K;
    const double tau = params_.tau, gamma = params_.gamma;
    const auto sk = y.first(K);
    const auto ik = y.subspan(K, K);
    const auto SS = y.subspan(2 * K, KK);
    const auto SI = y.subspan(2 * K + KK, KK);
    const auto II = y.subspan(2 * K + 2 * KK, KK);
    auto dSS = dy.subspan(2 * K, KK);
    auto dSI = dy.subspan(2 * K + KK, KK);
    auto dII = dy.subspan(2 * K + 2 * KK, KK);

    // a_k = (d_k - 1)/d_k * [S_k I] / [S_k]: infected-neighbour closure weight of a degree-k susceptible.
    std::vector<double> a(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      CompensatedSum row;
      for (std::size_t l = 0; l < K; ++l) row.add(SI[k * K + l]);
      const double r = row.value();
      const double d = degrees_[k];
      dy[k] = gamma * ik[k] - tau * r;
      dy[K + k] = -dy[k];
      a[k] = sk[k] > 0.0 ? (d - 1.0) / d * r / sk[k] : 0.0;
    }

    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t l = k; l < K; ++l) {
        const std::size_t kl = k * K + l, lk = l * K + k;
        const double si_sym = SI[kl] + SI[lk];
        const double dss = -tau * (a[k] + a[l]) * SS[kl] + gamma * si_sym;
        const double dii = tau * (a[k] * SI[kl] + a[l] * SI[lk]) + tau * si_sym - 2.0 * gamma * II[kl];
        dSS[kl] = dSS[lk] = dss;
        dII[kl] = dII[lk] = dii;
      }
      for (std::size_t l = 0; l < K; ++l) {
        const std::size_t kl = k * K + l;
        dSI[kl] = tau * (a[l] * SS[kl] - a[k] * SI[kl]) - (tau + gamma) * SI[kl] + gamma * II[kl];
      }
    }
  }

  PairwiseState aggregate(std::span<const double> y) const {
    const std::size_t K = this->K();
    const std::size_t KK = K * K;
    CompensatedSum s, i, ss, si, ii;
    for (std::size_t k = 0; k < K; ++k) {
      s.add(y[k]);
      i.add(y[K + k]);
    }
    for (std::size_t j = 0; j < KK; ++j) {
      ss.add(y[2 * K + j]);
      si.add(y[2 * K + KK + j]);
      ii.add(y[2 * K + 2 * KK + j]);
    }
    return {s.value(), i.value(), si.value(), ss.value(), ii.value()};
  }

  /// max_k |sum_l ([S_k S_l] + [S_k I_l]) - d_k [S_k]|, a drift diagnostic of stub bookkeeping.
  double row_sum_defect(std::span<const double> y) const {
    const std::size_t K = this->K();
    const std::size_t KK = K * K;
    double worst = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double row = 0.0;
      for (std::size_t l = 0; l < K; ++l) row += y[2 * K + k * K + l] + y[2 * K + KK + k * K + l];
      worst = std::max(worst, std::abs(row - degrees_[k] * y[k]));
    }
    return worst;
  }

 private:
  EpidemicParams params_;
  std::vector<int> degrees_;
};

using AnyModel = std::variant<TraditionalModel, CompactModel, HeterogeneousModel, SuperCompactModel>;

inline AnyModel make_model(ModelKind kind, const DegreeDistribution& dist, const EpidemicParams& params) {
  params.validate();
  switch (kind) {
    case ModelKind::traditional: return TraditionalModel(params, moments(dist).n1);
    case ModelKind::compact: return CompactModel(params, dist);
    case ModelKind::heterogeneous: return HeterogeneousModel(params, dist);
    case ModelKind::supercompact: return SuperCompactModel(params, dist);
  }
  throw DomainError("unknown model kind");
}

inline ModelKind kind_of(const AnyModel& model) {
  return static_cast<ModelKind>(model.index());
}

inline std::size_t dimension(const AnyModel& model) {
  return std::visit([](const auto& m) { return m.dimension(); }, model);
}

inline PairwiseState aggregate(const AnyModel& model, std::span<const double> y) {
  return std::visit([&](const auto& m) { return m.aggregate(y); }, model);
}

inline void evaluate_rhs(const AnyModel& model, double t, std::span<const double> y, std::span<double> dy) {
  std::visit([&](const auto& m) { m(t, y, dy); }, model);
}

// Typed right-hand sides. These pack into the flat layout and back.

inline PairwiseState rhs_traditional(const PairwiseState& state, const EpidemicParams& params, double n) {
  std::vector<double> dy(5);
  TraditionalModel(params, n)(0.0, state.flat(), dy);
  return PairwiseState::from_flat(dy);
}

inline PairwiseState rhs_supercompact(const PairwiseState& state, const EpidemicParams& params,
                                      const DegreeDistribution& dist) {
  std::vector<double> dy(5);
  SuperCompactModel(params, dist)(0.0, state.flat(), dy);
  return PairwiseState::from_flat(dy);
}

inline CompactState rhs_compact(const CompactState& state, const EpidemicParams& params,
                                const DegreeDistribution& dist) {
  const CompactModel model(params, dist);
  std::vector<double> dy(model.dimension());
  model(0.0, state.flat(), dy);
  return CompactState::from_flat(dy, model.K());
}

inline HetState rhs_heterogeneous(const HetState& state, const EpidemicParams& params,
                                  const DegreeDistribution& dist) {
  const HeterogeneousModel model(params, dist);
  std::vector<double> dy(model.dimension());
  model(0.0, state.flat(), dy);
  return HetState::from_flat(dy, model.K());
}

// Initial conditions: a fraction i0 of every degree class infected, pairs
// formed by random stub mixing, [X_k Y_l] = d_k [X_k] d_l [Y_l] / (n1 N).

inline HetState initial_heterogeneous(const DegreeDistribution& dist, const EpidemicParams& params, double i0) {
  if (!(i0 >= 0.0 && i0 < 1.0)) throw DomainError("initial infected fraction must lie in [0, 1)");
  const std::size_t K = dist.size();
  const double N = static_cast<double>(params.N);
  const double stubs = moments(dist).n1 * N;
  HetState h;
  h.K = K;
  h.Sk.resize(K);
  h.Ik.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double Nk = N * dist.prob(k);
    h.Ik[k] = i0 * Nk;
    h.Sk[k] = Nk - h.Ik[k];
  }
  h.SSmat.resize(K * K);
  h.SImat.resize(K * K);
  h.IImat.resize(K * K);
  for (std::size_t k = 0; k < K; ++k) {
    const double sk = dist.degree(k) * h.Sk[k], ik = dist.degree(k) * h.Ik[k];
    for (std::size_t l = 0; l < K; ++l) {
      const double sl = dist.degree(l) * h.Sk[l], il = dist.degree(l) * h.Ik[l];
      h.SSmat[k * K + l] = sk * sl / stubs;
      h.SImat[k * K + l] = sk * il / stubs;
      h.IImat[k * K + l] = ik * il / stubs;
    }
  }
  return h;
}

inline CompactState initial_compact(const DegreeDistribution& dist, const EpidemicParams& params, double i0) {
  const HetState h = initial_heterogeneous(dist, params, i0);
  const HeterogeneousModel het(params, dist);
  const PairwiseState agg = het.aggregate(h.flat());
  return {h.Sk, h.Ik, agg.SI, agg.SS, agg.II};
}

inline PairwiseState initial_pairwise(const DegreeDistribution& dist, const EpidemicParams& params, double i0) {
  const HetState h = initial_heterogeneous(dist, params, i0);
  return HeterogeneousModel(params, dist).aggregate(h.flat());
}

inline std::vector<double> initial_conditions(const DegreeDistribution& dist, const EpidemicParams& params,
                                              double i0, ModelKind kind) {
  switch (kind) {
    case ModelKind::traditional:
    case ModelKind::supercompact: return initial_pairwise(dist, params, i0).flat();
    case ModelKind::compact: return initial_compact(dist, params, i0).flat();
    case ModelKind::heterogeneous: return initial_heterogeneous(dist, params, i0).flat();
  }
  throw DomainError("unknown model kind");
}

}  // namespace pairnet
