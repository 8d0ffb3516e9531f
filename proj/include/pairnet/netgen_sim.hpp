#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <exception>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pairnet/degree_model.hpp"
#include "pairnet/error.hpp"
#include "pairnet/ode_models.hpp"

namespace pairnet {

using NodeId = std::uint32_t;
using Rng = std::mt19937_64;

/// SplitMix64 finalizer; derives independent stream seeds from (seed, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Simple undirected graph with sorted adjacency lists.
class Graph {
 public:
  Graph() = default;
  explicit Graph(std::vector<std::vector<NodeId>> adjacency) : adj_(std::move(adjacency)) {
    for (auto& nb : adj_) std::sort(nb.begin(), nb.end());
  }

  std::size_t size() const { return adj_.size(); }
  std::span<const NodeId> neighbors(NodeId v) const { return adj_[v]; }
  int degree(NodeId v) const { return static_cast<int>(adj_[v].size()); }

  std::vector<int> degree_sequence() const {
    std::vector<int> d(adj_.size());
    for (std::size_t v = 0; v < adj_.size(); ++v) d[v] = static_cast<int>(adj_[v].size());
    return d;
  }

  std::size_t edge_count() const {
    std::size_t total = 0;
    for (const auto& nb : adj_) total += nb.size();
    return total / 2;
  }

  /// No self-loops, no repeated neighbours, every edge listed at both ends.
  bool is_simple() const {
    for (std::size_t v = 0; v < adj_.size(); ++v) {
      const auto& nb = adj_[v];
      for (std::size_t i = 0; i < nb.size(); ++i) {
        if (nb[i] == v || nb[i] >= adj_.size()) return false;
        if (i > 0 && nb[i] == nb[i - 1]) return false;
        const auto& back = adj_[nb[i]];
        if (!std::binary_search(back.begin(), back.end(), static_cast<NodeId>(v))) return false;
      }
    }
    return true;
  }

 private:
  std::vector<std::vector<NodeId>> adj_;
};

namespace detail {

inline std::uint64_t edge_key(NodeId a, NodeId b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

inline std::string summarize_sequence(std::span<const int> degrees) {
  std::string s = "[";
  const std::size_t shown = std::min<std::size_t>(degrees.size(), 12);
  for (std::size_t i = 0; i < shown; ++i) s += (i ? "," : "") + std::to_string(degrees[i]);
  if (shown < degrees.size()) s += ",... (" + std::to_string(degrees.size()) + " nodes)";
  return s + "]";
}

}  // namespace detail

/// Configuration-model graph with exactly the given degrees.
///
/// Stubs are matched uniformly at random; self-loops and multi-edges are then
/// removed by double-edge swaps against uniformly chosen partner edges, which
/// keeps every degree intact.
inline Graph build_configuration_graph(std::span<const int> degrees, std::uint64_t seed, int max_sweeps = 200) {
  const std::size_t N = degrees.size();
  long long stub_total = 0;
  for (int d : degrees) {
    if (d < 0) throw DomainError("negative degree in sequence");
    if (N > 0 && static_cast<std::size_t>(d) >= N) {
      throw DomainError("degree " + std::to_string(d) + " does not fit a simple graph on " + std::to_string(N) +
                        " nodes");
    }
    stub_total += d;
  }
  if (stub_total % 2 != 0) throw DomainError("degree sequence has an odd stub total");

  Rng rng(seed);
  std::vector<NodeId> stubs;
  stubs.reserve(static_cast<std::size_t>(stub_total));
  for (std::size_t v = 0; v < N; ++v) stubs.insert(stubs.end(), static_cast<std::size_t>(degrees[v]), static_cast<NodeId>(v));

  std::vector<std::pair<NodeId, NodeId>> edges(stubs.size() / 2);
  std::unordered_map<std::uint64_t, int> multiplicity;
  multiplicity.reserve(edges.size() * 2);
  auto match_stubs = [&] {
    std::shuffle(stubs.begin(), stubs.end(), rng);
    multiplicity.clear();
    for (std::size_t e = 0; e < edges.size(); ++e) {
      edges[e] = {stubs[2 * e], stubs[2 * e + 1]};
      ++multiplicity[detail::edge_key(edges[e].first, edges[e].second)];
    }
  };

  auto is_bad = [&](std::size_t e) {
    const auto [a, b] = edges[e];
    return a == b || multiplicity.at(detail::edge_key(a, b)) > 1;
  };
  auto remove = [&](std::size_t e) {
    auto it = multiplicity.find(detail::edge_key(edges[e].first, edges[e].second));
    if (--it->second == 0) multiplicity.erase(it);
  };
  auto exists = [&](NodeId a, NodeId b) { return multiplicity.count(detail::edge_key(a, b)) > 0; };

  std::uniform_int_distribution<std::size_t> pick_edge(0, edges.empty() ? 0 : edges.size() - 1);
  std::bernoulli_distribution coin(0.5);
  constexpr int kAttemptsPerEdge = 64;
  // Swaps never create new defects, so a matching can get stuck (three
  // self-loops on [2,2,2]); after a few sweeps without progress, re-match.
  constexpr int kStaleSweeps = 3;
  match_stubs();
  bool simple = false;
  std::size_t best = std::numeric_limits<std::size_t>::max();
  int stale = 0;
  for (int sweep = 0;; ++sweep) {
    std::vector<std::size_t> bad;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (is_bad(e)) bad.push_back(e);
    }
    if (bad.empty()) {
      simple = true;
      break;
    }
    if (sweep == max_sweeps) break;
    if (bad.size() < best) {
      best = bad.size();
      stale = 0;
    } else if (++stale >= kStaleSweeps) {
      match_stubs();
      best = std::numeric_limits<std::size_t>::max();
      stale = 0;
      continue;
    }
    for (std::size_t e : bad) {
      if (!is_bad(e)) continue;
      for (int attempt = 0; attempt < kAttemptsPerEdge; ++attempt) {
        const std::size_t f = pick_edge(rng);
        if (f == e) continue;
        auto [a, b] = edges[e];
        auto [c, d] = edges[f];
        if (coin(rng)) std::swap(c, d);
        // (a,b),(c,d) -> (a,c),(b,d)
        if (a == c || b == d) continue;
        if (detail::edge_key(a, c) == detail::edge_key(b, d)) continue;
        if (exists(a, c) || exists(b, d)) continue;
        remove(e);
        remove(f);
        edges[e] = {a, c};
        edges[f] = {b, d};
        ++multiplicity[detail::edge_key(a, c)];
        ++multiplicity[detail::edge_key(b, d)];
        break;
      }
    }
  }
  if (!simple) {
    throw NumericalError("could not rewire configuration graph into a simple graph for degree sequence " +
                         detail::summarize_sequence(degrees));
  }

  std::vector<std::vector<NodeId>> adj(N);
  for (std::size_t v = 0; v < N; ++v) adj[v].reserve(static_cast<std::size_t>(degrees[v]));
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return Graph(std::move(adj));
}

/// Binary sum tree over per-node event rates: O(log N) update and sampling.
class RateTree {
 public:
  explicit RateTree(std::size_t n) : leaves_(1) {
    while (leaves_ < std::max<std::size_t>(n, 1)) leaves_ *= 2;
    tree_.assign(2 * leaves_, 0.0);
  }

  void set(std::size_t i, double rate) {
    std::size_t p = leaves_ + i;
    tree_[p] = rate;
    for (p /= 2; p >= 1; p /= 2) tree_[p] = tree_[2 * p] + tree_[2 * p + 1];
  }

  double rate(std::size_t i) const { return tree_[leaves_ + i]; }
  double total() const { return tree_[1]; }

  /// Leaf index whose cumulative interval contains u, 0 <= u < total().
  std::size_t find(double u) const {
    std::size_t p = 1;
    while (p < leaves_) {
      const double left = tree_[2 * p];
      const double right = tree_[2 * p + 1];
      if ((u < left && left > 0.0) || right <= 0.0) {
        p = 2 * p;
      } else {
        u -= left;
        p = 2 * p + 1;
      }
    }
    return p - leaves_;
  }

 private:
  std::size_t leaves_;
  std::vector<double> tree_;
};

struct SimParams {
  double tau = 0.0;
  double gamma = 1.0;
};

/// Directed pair counts [SI], [SS], [II] recounted from scratch.
inline PairwiseState recount(const Graph& g, std::span<const std::uint8_t> infected) {
  PairwiseState c;
  for (NodeId v = 0; v < g.size(); ++v) {
    (infected[v] ? c.I : c.S) += 1.0;
    for (NodeId u : g.neighbors(v)) {
      if (!infected[v] && !infected[u]) c.SS += 1.0;
      else if (infected[v] && infected[u]) c.II += 1.0;
      else if (!infected[v]) c.SI += 1.0;
    }
  }
  return c;
}

struct SimEvent {
  double t = 0.0;
  NodeId node = 0;
  bool infection = false;  // S->I when true, I->S otherwise
};

struct RunResult {
  std::vector<double> times;
  std::vector<PairwiseState> counts;
  std::size_t events = 0;
  std::optional<double> extinction_time;  // first time the infection died out
  std::vector<SimEvent> event_log;        // filled when SimOptions::record_events
};

struct SimOptions {
  /// Recount pair counts from the adjacency at every sample and fail on mismatch.
  bool audit = false;
  bool record_events = false;
};

/// Exact continuous-time SIS simulation (Gillespie direct method).
///
/// Infected nodes recover at rate gamma; each S-I edge transmits at rate tau.
/// Each susceptible node carries rate tau * (infected neighbours) in a sum
/// tree, so an event costs O(degree * log N).
inline RunResult gillespie_sis(const Graph& g, const SimParams& params, std::span<const NodeId> initial_infected,
                               std::span<const double> output_times, std::uint64_t seed, SimOptions opts = {}) {
  if (!(params.tau >= 0.0) || !(params.gamma >= 0.0)) throw DomainError("rates must be >= 0");
  const std::size_t N = g.size();
  std::vector<std::uint8_t> infected(N, 0);
  for (NodeId v : initial_infected) {
    if (v >= N) throw DomainError("initial infected node out of range");
    infected[v] = 1;
  }
  std::vector<int> pressure(N, 0);  // infected neighbours
  for (NodeId v = 0; v < N; ++v) {
    if (!infected[v]) continue;
    for (NodeId u : g.neighbors(v)) ++pressure[u];
  }
  RateTree rates(N);
  for (NodeId v = 0; v < N; ++v) rates.set(v, infected[v] ? params.gamma : params.tau * pressure[v]);

  PairwiseState c = recount(g, infected);
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RunResult res;
  res.times.assign(output_times.begin(), output_times.end());
  res.counts.reserve(output_times.size());
  if (c.I == 0.0) res.extinction_time = output_times.empty() ? 0.0 : output_times.front();

  auto sample = [&] {
    if (opts.audit) {
      const PairwiseState truth = recount(g, infected);
      if (truth.S != c.S || truth.I != c.I || truth.SI != c.SI || truth.SS != c.SS || truth.II != c.II) {
        throw NumericalError("pair bookkeeping diverged from recount");
      }
    }
    res.counts.push_back(c);
  };

  double t = output_times.empty() ? 0.0 : std::min(0.0, output_times.front());
  std::size_t next = 0;
  while (next < output_times.size()) {
    const double total = rates.total();
    const double dt = total > 0.0 ? -std::log1p(-unit(rng)) / total : INFINITY;
    const double t_event = t + dt;
    while (next < output_times.size() && output_times[next] < t_event) {
      sample();
      ++next;
    }
    if (next >= output_times.size()) break;

    t = t_event;
    const NodeId v = static_cast<NodeId>(rates.find(unit(rng) * total));
    ++res.events;
    if (opts.record_events) res.event_log.push_back({t, v, !infected[v]});
    if (infected[v]) {
      infected[v] = 0;
      c.I -= 1.0;
      c.S += 1.0;
      for (NodeId u : g.neighbors(v)) {
        --pressure[u];
        if (infected[u]) {
          c.II -= 2.0;
          c.SI += 1.0;
        } else {
          c.SI -= 1.0;
          c.SS += 2.0;
          rates.set(u, params.tau * pressure[u]);
        }
      }
      rates.set(v, params.tau * pressure[v]);
      if (c.I == 0.0 && !res.extinction_time) res.extinction_time = t;
    } else {
      infected[v] = 1;
      c.S -= 1.0;
      c.I += 1.0;
      for (NodeId u : g.neighbors(v)) {
        ++pressure[u];
        if (infected[u]) {
          c.SI -= 1.0;
          c.II += 2.0;
        } else {
          c.SS -= 2.0;
          c.SI += 1.0;
          rates.set(u, params.tau * pressure[u]);
        }
      }
      rates.set(v, params.gamma);
    }
  }
  return res;
}

/// Pick round(i0 * N_k) nodes uniformly within every degree class.
inline std::vector<NodeId> seed_infections(const Graph& g, double i0, Rng& rng) {
  if (!(i0 >= 0.0 && i0 <= 1.0)) throw DomainError("initial infected fraction must lie in [0, 1]");
  std::vector<std::vector<NodeId>> classes;
  std::vector<int> class_degree;
  {
    std::vector<NodeId> order(g.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](NodeId a, NodeId b) { return g.degree(a) < g.degree(b); });
    for (NodeId v : order) {
      if (class_degree.empty() || class_degree.back() != g.degree(v)) {
        class_degree.push_back(g.degree(v));
        classes.emplace_back();
      }
      classes.back().push_back(v);
    }
  }
  std::vector<NodeId> chosen;
  for (auto& members : classes) {
    const auto count = static_cast<std::size_t>(std::llround(i0 * static_cast<double>(members.size())));
    std::shuffle(members.begin(), members.end(), rng);
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(count));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

struct EnsembleSpec {
  std::size_t runs = 200;
  std::uint64_t seed = 1;
  double i0 = 0.01;
  /// Draw a new configuration graph for every run; otherwise one graph is shared.
  bool fresh_graph = true;
  /// Drop runs whose infection died out at or before survival_time.
  bool condition_on_survival = false;
  double survival_time = 0.0;
  unsigned threads = 0;  // 0: hardware concurrency
  SimOptions options;
};

struct EnsembleResult {
  std::vector<double> times;
  std::vector<PairwiseState> mean;
  std::vector<PairwiseState> stddev;  // sample standard deviation (0 for a single run)
  std::size_t runs_used = 0;
  std::size_t runs_excluded = 0;
};

namespace detail {

inline PairwiseState apply(const PairwiseState& a, const PairwiseState& b, auto op) {
  return {op(a.S, b.S), op(a.I, b.I), op(a.SI, b.SI), op(a.SS, b.SS), op(a.II, b.II)};
}

}  // namespace detail

/// Independent Gillespie runs on configuration graphs realizing `degrees`,
/// reduced to pointwise mean and standard deviation in run order.
inline EnsembleResult ensemble(std::span<const int> degrees, const SimParams& params,
                               std::span<const double> output_times, const EnsembleSpec& spec) {
  if (spec.runs < 1) throw DomainError("ensemble needs at least one run");
  std::optional<Graph> shared;
  if (!spec.fresh_graph) shared = build_configuration_graph(degrees, derive_seed(spec.seed, 0));

  std::vector<RunResult> results(spec.runs);
  auto work = [&](std::size_t r) {
    const std::uint64_t run_seed = derive_seed(spec.seed, r + 1);
    const Graph graph = shared ? *shared : build_configuration_graph(degrees, derive_seed(run_seed, 1));
    Rng seeding(derive_seed(run_seed, 2));
    const auto initial = seed_infections(graph, spec.i0, seeding);
    results[r] = gillespie_sis(graph, params, initial, output_times, derive_seed(run_seed, 3), spec.options);
  };

  unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, spec.runs));
  if (threads <= 1) {
    for (std::size_t r = 0; r < spec.runs; ++r) work(r);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t r = w; r < spec.runs; r += threads) work(r);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EnsembleResult out;
  out.times.assign(output_times.begin(), output_times.end());
  const std::size_t T = output_times.size();
  std::vector<PairwiseState> sum(T), sumsq(T);
  for (const auto& run : results) {
    if (spec.condition_on_survival && run.extinction_time && *run.extinction_time <= spec.survival_time) {
      ++out.runs_excluded;
      continue;
    }
    ++out.runs_used;
    for (std::size_t i = 0; i < T; ++i) {
      sum[i] = detail::apply(sum[i], run.counts[i], std::plus<>());
      sumsq[i] = detail::apply(sumsq[i], run.counts[i], [](double acc, double x) { return acc + x * x; });
    }
  }
  out.mean.resize(T);
  out.stddev.resize(T);
  if (out.runs_used == 0) return out;
  const double n = static_cast<double>(out.runs_used);
  for (std::size_t i = 0; i < T; ++i) {
    out.mean[i] = detail::apply(sum[i], sum[i], [n](double s, double) { return s / n; });
    if (out.runs_used > 1) {
      out.stddev[i] = detail::apply(sumsq[i], out.mean[i], [n](double sq, double m) {
        return std::sqrt(std::max(0.0, (sq - n * m * m) / (n - 1.0)));
      });
    }
  }
  return out;
}

}  // namespace pairnet
