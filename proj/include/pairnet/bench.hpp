#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairnet/closures.hpp"
#include "pairnet/degree_model.hpp"
#include "pairnet/error.hpp"
#include "pairnet/integrator.hpp"
#include "pairnet/netgen_sim.hpp"
#include "pairnet/ode_models.hpp"

namespace pairnet {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Distribution specs

inline DegreeDistribution parse_distribution(const json& spec, const std::string& path = "distribution");

namespace detail {

inline std::string at_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(at_path(path, key) + ": missing required field");
  return *it;
}

inline double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number, got " + std::string(v.type_name()));
  return v.get<double>();
}

inline long long get_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) {
    if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) return v.get<long long>();
    throw ConfigError(path + ": expected an integer, got " + v.dump());
  }
  return v.get<long long>();
}

inline bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
  return v.get<bool>();
}

inline std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + ": expected a string");
  return v.get<std::string>();
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(at_path(path, key) + ": unknown field");
    }
  }
}

template <class F>
auto rethrow_as_config(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const DomainError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace detail

/// {"kind":"bimodal","d1":5,"d2":35,"frac1":0.5} | {"kind":"powerlaw","kmin":5,"kmax":30,"alpha":2.0}
/// | {"kind":"regular","n":10} | {"kind":"custom","degrees":[...],"probs":[...]}
inline DegreeDistribution parse_distribution(const json& spec, const std::string& path) {
  using namespace detail;
  const std::string kind = get_string(require(spec, "kind", path), at_path(path, "kind"));
  auto integer = [&](const char* key) {
    return static_cast<int>(get_integer(require(spec, key, path), at_path(path, key)));
  };
  auto number = [&](const char* key) { return get_number(require(spec, key, path), at_path(path, key)); };
  return rethrow_as_config(path, [&] {
    if (kind == "bimodal") {
      reject_unknown(spec, {"kind", "d1", "d2", "frac1"}, path);
      return make_bimodal(integer("d1"), integer("d2"), number("frac1"));
    }
    if (kind == "powerlaw") {
      reject_unknown(spec, {"kind", "kmin", "kmax", "alpha"}, path);
      return make_truncated_powerlaw(integer("kmin"), integer("kmax"), number("alpha"));
    }
    if (kind == "regular") {
      reject_unknown(spec, {"kind", "n"}, path);
      return make_regular(integer("n"));
    }
    if (kind == "custom") {
      reject_unknown(spec, {"kind", "degrees", "probs"}, path);
      const json& d = require(spec, "degrees", path);
      const json& p = require(spec, "probs", path);
      if (!d.is_array() || !p.is_array()) throw ConfigError(path + ": degrees and probs must be arrays");
      std::vector<int> degrees;
      std::vector<double> probs;
      for (std::size_t i = 0; i < d.size(); ++i) {
        degrees.push_back(static_cast<int>(get_integer(d[i], path + ".degrees[" + std::to_string(i) + "]")));
      }
      for (std::size_t i = 0; i < p.size(); ++i) {
        probs.push_back(get_number(p[i], path + ".probs[" + std::to_string(i) + "]"));
      }
      return DegreeDistribution(std::move(degrees), std::move(probs));
    }
    throw ConfigError(at_path(path, "kind") + ": unknown distribution kind '" + kind + "'");
  });
}

// ---------------------------------------------------------------------------
// Scenarios

struct IntegrationConfig {
  double t_end = 15.0;  // in units of 1/gamma
  std::size_t points = 201;
  double rtol = 1e-8;
  double atol_per_node = 1e-10;
  double negativity_floor = 1e-9;
};

struct SimulationConfig {
  std::size_t runs = 0;  // 0: no simulation
  std::uint64_t seed = 1;
  bool fresh_graph = true;
  bool condition_on_survival = false;
  double survival_time = 0.0;
  unsigned threads = 0;
};

struct TableReference {
  double mean = 0.0;
  double stddev = 0.0;
};

struct CaseConfig {
  std::string name;
  json distribution_spec;
  DegreeDistribution dist = make_regular(1);
  std::size_t N = 1000;
  double gamma = 1.0;
  std::optional<double> tau;
  double tau_multiple = 3.0;
  double i0 = 0.01;
  std::vector<ModelKind> models;
  IntegrationConfig integration;
  SimulationConfig simulation;
  std::optional<TableReference> reference;

  double resolved_tau() const { return tau ? *tau : default_tau(dist, gamma, tau_multiple); }
  EpidemicParams params() const { return {resolved_tau(), gamma, N}; }
  std::vector<double> grid() const { return uniform_grid(0.0, integration.t_end / gamma, integration.points); }
};

struct Scenario {
  std::string name;
  std::vector<CaseConfig> cases;
  bool gnuplot = false;
};

namespace detail {

inline std::string line_context(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline CaseConfig parse_case(const json& c, const std::string& path) {
  reject_unknown(c, {"name", "distribution", "N", "gamma", "tau", "tau_multiple", "i0", "models", "integration",
                     "simulation", "reference"},
                 path);
  CaseConfig cfg;
  if (c.contains("name")) cfg.name = get_string(c["name"], at_path(path, "name"));
  cfg.distribution_spec = require(c, "distribution", path);
  cfg.dist = parse_distribution(cfg.distribution_spec, at_path(path, "distribution"));
  if (c.contains("N")) {
    const long long N = get_integer(c["N"], at_path(path, "N"));
    if (N < 1) throw ConfigError(at_path(path, "N") + ": must be >= 1");
    cfg.N = static_cast<std::size_t>(N);
  }
  if (c.contains("gamma")) cfg.gamma = get_number(c["gamma"], at_path(path, "gamma"));
  if (!(cfg.gamma > 0.0)) throw ConfigError(at_path(path, "gamma") + ": must be > 0");
  const bool has_tau = c.contains("tau") && !c["tau"].is_null();
  const bool has_multiple = c.contains("tau_multiple") && !c["tau_multiple"].is_null();
  if (has_tau && has_multiple) throw ConfigError(path + ": tau and tau_multiple are mutually exclusive");
  if (has_tau) {
    cfg.tau = get_number(c["tau"], at_path(path, "tau"));
    if (!(*cfg.tau >= 0.0)) throw ConfigError(at_path(path, "tau") + ": must be >= 0");
  }
  if (has_multiple) {
    cfg.tau_multiple = get_number(c["tau_multiple"], at_path(path, "tau_multiple"));
    if (!(cfg.tau_multiple > 0.0)) throw ConfigError(at_path(path, "tau_multiple") + ": must be > 0");
  }
  if (c.contains("i0")) cfg.i0 = get_number(c["i0"], at_path(path, "i0"));
  if (!(cfg.i0 >= 0.0 && cfg.i0 < 1.0)) throw ConfigError(at_path(path, "i0") + ": must lie in [0, 1)");
  if (c.contains("models")) {
    const json& m = c["models"];
    if (!m.is_array()) throw ConfigError(at_path(path, "models") + ": expected an array");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string p = at_path(path, "models") + "[" + std::to_string(i) + "]";
      cfg.models.push_back(rethrow_as_config(p, [&] { return parse_model_kind(get_string(m[i], p)); }));
    }
  }
  if (c.contains("integration")) {
    const json& in = c["integration"];
    const std::string p = at_path(path, "integration");
    reject_unknown(in, {"t_end", "points", "rtol", "atol_per_node", "negativity_floor"}, p);
    auto& ic = cfg.integration;
    if (in.contains("t_end")) ic.t_end = get_number(in["t_end"], at_path(p, "t_end"));
    if (in.contains("points")) ic.points = static_cast<std::size_t>(get_integer(in["points"], at_path(p, "points")));
    if (in.contains("rtol")) ic.rtol = get_number(in["rtol"], at_path(p, "rtol"));
    if (in.contains("atol_per_node")) ic.atol_per_node = get_number(in["atol_per_node"], at_path(p, "atol_per_node"));
    if (in.contains("negativity_floor")) {
      ic.negativity_floor = get_number(in["negativity_floor"], at_path(p, "negativity_floor"));
    }
    if (!(ic.t_end > 0.0)) throw ConfigError(at_path(p, "t_end") + ": must be > 0");
    if (ic.points < 2) throw ConfigError(at_path(p, "points") + ": must be >= 2");
    if (!(ic.rtol > 0.0) || !(ic.atol_per_node > 0.0)) throw ConfigError(p + ": tolerances must be > 0");
  }
  if (c.contains("simulation")) {
    const json& s = c["simulation"];
    const std::string p = at_path(path, "simulation");
    reject_unknown(s, {"runs", "seed", "fresh_graph", "condition_on_survival", "survival_time", "threads"}, p);
    auto& sc = cfg.simulation;
    if (s.contains("runs")) {
      const long long runs = get_integer(s["runs"], at_path(p, "runs"));
      if (runs < 0) throw ConfigError(at_path(p, "runs") + ": must be >= 0");
      sc.runs = static_cast<std::size_t>(runs);
    }
    if (s.contains("seed")) sc.seed = static_cast<std::uint64_t>(get_integer(s["seed"], at_path(p, "seed")));
    if (s.contains("fresh_graph")) sc.fresh_graph = get_bool(s["fresh_graph"], at_path(p, "fresh_graph"));
    if (s.contains("condition_on_survival")) {
      sc.condition_on_survival = get_bool(s["condition_on_survival"], at_path(p, "condition_on_survival"));
    }
    if (s.contains("survival_time")) sc.survival_time = get_number(s["survival_time"], at_path(p, "survival_time"));
    if (s.contains("threads")) sc.threads = static_cast<unsigned>(get_integer(s["threads"], at_path(p, "threads")));
  }
  if (c.contains("reference")) {
    const json& r = c["reference"];
    const std::string p = at_path(path, "reference");
    reject_unknown(r, {"mean", "std"}, p);
    cfg.reference = TableReference{get_number(require(r, "mean", p), at_path(p, "mean")),
                                   get_number(require(r, "std", p), at_path(p, "std"))};
  }
  return cfg;
}

}  // namespace detail

/// Parse a scenario document. Top-level fields other than "name", "cases"
/// and "gnuplot" are defaults that every entry of "cases" overrides by JSON
/// merge patch; without "cases" the document is a single case.
inline Scenario parse_scenario(const std::string& text, const std::string& fallback_name = "scenario") {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario syntax error at " + detail::line_context(text, e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("scenario: top level must be an object");
  Scenario sc;
  sc.name = doc.contains("name") ? detail::get_string(doc["name"], "name") : fallback_name;
  if (doc.contains("gnuplot")) sc.gnuplot = detail::get_bool(doc["gnuplot"], "gnuplot");
  json defaults = doc;
  defaults.erase("name");
  defaults.erase("cases");
  defaults.erase("gnuplot");
  if (doc.contains("cases")) {
    const json& cases = doc["cases"];
    if (!cases.is_array() || cases.empty()) throw ConfigError("cases: expected a non-empty array");
    for (std::size_t i = 0; i < cases.size(); ++i) {
      json merged = defaults;
      merged.merge_patch(cases[i]);
      // a case's distribution replaces the default one rather than patching it
      if (cases[i].is_object() && cases[i].contains("distribution")) merged["distribution"] = cases[i]["distribution"];
      CaseConfig cfg = detail::parse_case(merged, "cases[" + std::to_string(i) + "]");
      if (cfg.name.empty()) cfg.name = "case" + std::to_string(i);
      sc.cases.push_back(std::move(cfg));
    }
  } else {
    CaseConfig cfg = detail::parse_case(defaults, "");
    if (cfg.name.empty()) cfg.name = sc.name;
    sc.cases.push_back(std::move(cfg));
  }
  std::map<std::string, int> seen;
  for (const auto& c : sc.cases) {
    if (seen[c.name]++) throw ConfigError("cases: duplicate case name '" + c.name + "'");
  }
  return sc;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path), path.stem().string());
}

// ---------------------------------------------------------------------------
// CSV time series: t,S,I,SI,SS,II,source,model[,std_I]

struct CsvSeries {
  std::string source;
  std::string model;
  std::vector<double> times;
  std::vector<PairwiseState> rows;
  std::vector<double> std_I;  // simulation only

  std::vector<double> infected() const {
    std::vector<double> out(rows.size());
    std::transform(rows.begin(), rows.end(), out.begin(), [](const PairwiseState& r) { return r.I; });
    return out;
  }
};

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const CsvSeries& s) {
  const bool with_std = !s.std_I.empty();
  os << "t,S,I,SI,SS,II,source,model" << (with_std ? ",std_I" : "") << '\n';
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    const auto& r = s.rows[i];
    os << format_number(s.times[i]) << ',' << format_number(r.S) << ',' << format_number(r.I) << ','
       << format_number(r.SI) << ',' << format_number(r.SS) << ',' << format_number(r.II) << ',' << s.source << ','
       << s.model;
    if (with_std) os << ',' << format_number(s.std_I[i]);
    os << '\n';
  }
}

inline CsvSeries read_csv(std::istream& is, const std::string& label = "csv") {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError(label + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool with_std;
  if (line == "t,S,I,SI,SS,II,source,model") {
    with_std = false;
  } else if (line == "t,S,I,SI,SS,II,source,model,std_I") {
    with_std = true;
  } else {
    throw ConfigError(label + ": line 1: unexpected header '" + line + "'");
  }
  CsvSeries s;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != (with_std ? 9u : 8u)) {
      throw ConfigError(label + ": line " + std::to_string(lineno) + ": expected " + (with_std ? "9" : "8") +
                        " fields");
    }
    auto num = [&](std::size_t i) {
      try {
        std::size_t used = 0;
        const double v = std::stod(f[i], &used);
        if (used != f[i].size()) throw std::invalid_argument("trailing characters");
        return v;
      } catch (const std::exception&) {
        throw ConfigError(label + ": line " + std::to_string(lineno) + ": field " + std::to_string(i + 1) +
                          " is not a number");
      }
    };
    s.times.push_back(num(0));
    s.rows.push_back({num(1), num(2), num(3), num(4), num(5)});
    if (s.source.empty()) {
      s.source = f[6];
      s.model = f[7];
    }
    if (with_std) s.std_I.push_back(num(8));
  }
  return s;
}

inline CsvSeries read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return read_csv(in, path.string());
}

// ---------------------------------------------------------------------------
// Comparison metrics

/// Mean of `values` over grid times t >= 0.75 * t_last: the endemic plateau.
inline double plateau_mean(std::span<const double> times, std::span<const double> values) {
  if (times.empty()) return 0.0;
  const double cutoff = times.front() + 0.75 * (times.back() - times.front());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] >= cutoff) {
      sum += values[i];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : values.back();
}

struct SeriesComparison {
  std::string a;
  std::string b;
  double sup_norm = 0.0;       // max_t |I_a - I_b|
  double terminal_diff = 0.0;  // |I_a(T) - I_b(T)|
  double plateau_diff = 0.0;   // |plateau(I_a) - plateau(I_b)|
  std::optional<double> max_abs_E;
  std::optional<double> sup_over_E;
};

inline void require_same_grid(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("grid mismatch: " + std::to_string(a.size()) + " vs " +
                                              std::to_string(b.size()) + " time points");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > 1e-12 * std::max(1.0, std::abs(a[i]))) {
      throw ConfigError("grid mismatch at row " + std::to_string(i + 1) + ": t=" + format_number(a[i]) + " vs t=" +
                        format_number(b[i]));
    }
  }
}

inline SeriesComparison compare_infected(std::span<const double> times_a, std::span<const double> ia,
                                         std::span<const double> times_b, std::span<const double> ib) {
  require_same_grid(times_a, times_b);
  SeriesComparison c;
  for (std::size_t i = 0; i < ia.size(); ++i) c.sup_norm = std::max(c.sup_norm, std::abs(ia[i] - ib[i]));
  if (!ia.empty()) c.terminal_diff = std::abs(ia.back() - ib.back());
  c.plateau_diff = std::abs(plateau_mean(times_a, ia) - plateau_mean(times_b, ib));
  return c;
}

inline SeriesComparison compare(const CsvSeries& a, const CsvSeries& b) {
  const auto ia = a.infected(), ib = b.infected();
  SeriesComparison c = compare_infected(a.times, ia, b.times, ib);
  c.a = a.source + ":" + a.model;
  c.b = b.source + ":" + b.model;
  return c;
}

/// Attach the closure-error magnitude and the empirical ratio sup|dI| / max|E|.
inline void attach_closure_error(SeriesComparison& c, double max_abs_E) {
  c.max_abs_E = max_abs_E;
  if (max_abs_E > 0.0) c.sup_over_E = c.sup_norm / max_abs_E;
}

inline json to_json(const SeriesComparison& c) {
  json j{{"a", c.a}, {"b", c.b}, {"sup_norm", c.sup_norm}, {"terminal_diff", c.terminal_diff},
         {"plateau_diff", c.plateau_diff}};
  if (c.max_abs_E) j["max_abs_E"] = *c.max_abs_E;
  if (c.sup_over_E) j["sup_over_E"] = *c.sup_over_E;
  return j;
}

/// Closure-error series CSV: t,E,relative,n_S,n_S_pairs
inline void write_closure_error_csv(std::ostream& os, const std::vector<ClosureErrorReport>& series) {
  os << "t,E,relative,n_S,n_S_pairs\n";
  for (const auto& r : series) {
    os << format_number(r.t) << ',' << format_number(r.E) << ',' << format_number(r.relative) << ','
       << format_number(r.n_S) << ',' << format_number(r.n_S_pairs) << '\n';
  }
}

inline double max_abs_E_from_csv(std::istream& is, const std::string& label) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,E", 0) != 0) throw ConfigError(label + ": not a closure-error CSV");
  double worst = 0.0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    worst = std::max(worst, std::abs(std::stod(line.substr(first + 1, second - first - 1))));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Moments table

struct MomentsRow {
  std::string label;
  Moments m;
  std::optional<TableReference> reference;
};

inline std::vector<MomentsRow> moments_table(const std::vector<std::pair<std::string, DegreeDistribution>>& specs,
                                             const std::vector<std::optional<TableReference>>& refs = {}) {
  std::vector<MomentsRow> rows;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    rows.push_back({specs[i].first, moments(specs[i].second), i < refs.size() ? refs[i] : std::nullopt});
  }
  return rows;
}

inline std::string format_moments_table(const std::vector<MomentsRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-22s %12s %12s %12s %12s\n", "network", "<k>", "std", "ref <k>", "ref std");
  os << buf;
  for (const auto& r : rows) {
    if (r.reference) {
      std::snprintf(buf, sizeof buf, "%-22s %12.4f %12.4f %12.4f %12.4f  (dev %+.4f, %+.4f)\n", r.label.c_str(),
                    r.m.mean(), r.m.stddev(), r.reference->mean, r.reference->stddev, r.m.mean() - r.reference->mean,
                    r.m.stddev() - r.reference->stddev);
    } else {
      std::snprintf(buf, sizeof buf, "%-22s %12.4f %12.4f %12s %12s\n", r.label.c_str(), r.m.mean(), r.m.stddev(),
                    "-", "-");
    }
    os << buf;
  }
  return os.str();
}

inline void write_moments_csv(std::ostream& os, const std::vector<MomentsRow>& rows) {
  os << "network,mean,std,n1,n2,n3,ref_mean,ref_std\n";
  for (const auto& r : rows) {
    os << r.label << ',' << format_number(r.m.mean()) << ',' << format_number(r.m.stddev()) << ','
       << format_number(r.m.n1) << ',' << format_number(r.m.n2) << ',' << format_number(r.m.n3) << ','
       << (r.reference ? format_number(r.reference->mean) : "") << ','
       << (r.reference ? format_number(r.reference->stddev) : "") << '\n';
  }
}

// ---------------------------------------------------------------------------
// Running a scenario

struct ModelRun {
  ModelKind kind;
  TimeSeries series;             // full model states
  std::vector<PairwiseState> aggregated;
  double max_node_drift = 0.0;   // max_t |node_total(t) - node_total(0)|
  double max_pair_drift = 0.0;
};

struct CaseResult {
  const CaseConfig* config = nullptr;
  double tau = 0.0;
  std::vector<double> grid;
  std::vector<ModelRun> models;
  std::optional<EnsembleResult> simulation;
  std::vector<ClosureErrorReport> closure_error;  // along the compact trajectory
  std::vector<SeriesComparison> comparisons;

  const ModelRun* find(ModelKind k) const {
    for (const auto& m : models) {
      if (m.kind == k) return &m;
    }
    return nullptr;
  }
};

inline ModelRun run_model(ModelKind kind, const CaseConfig& cfg, std::optional<double> rtol_override = {}) {
  const EpidemicParams params = cfg.params();
  const AnyModel model = make_model(kind, cfg.dist, params);
  const std::vector<double> y0 = initial_conditions(cfg.dist, params, cfg.i0, kind);
  IntegrationSpec spec;
  spec.t0 = 0.0;
  spec.t_end = cfg.integration.t_end / cfg.gamma;
  spec.output_times = cfg.grid();
  spec.rtol = rtol_override.value_or(cfg.integration.rtol);
  spec.atol = cfg.integration.atol_per_node * static_cast<double>(cfg.N);
  spec.negativity_floor = cfg.integration.negativity_floor;
  spec.scale = static_cast<double>(cfg.N);
  ModelRun run{kind, {}, {}, 0.0, 0.0};
  run.series = integrate([&](double t, std::span<const double> y, std::span<double> dy) { evaluate_rhs(model, t, y, dy); },
                         y0, spec);
  if (!run.series.ok()) {
    throw NumericalError(std::string(model_name(kind)) + ": step budget exhausted after output t=" +
                         (run.series.times.empty() ? std::string("0") : format_number(run.series.times.back())));
  }
  const ConservedQuantities c0 = conserved_quantities(aggregate(model, y0));
  for (const auto& y : run.series.states) {
    run.aggregated.push_back(aggregate(model, y));
    const ConservedQuantities c = conserved_quantities(run.aggregated.back());
    run.max_node_drift = std::max(run.max_node_drift, std::abs(c.node_total - c0.node_total));
    run.max_pair_drift = std::max(run.max_pair_drift, std::abs(c.pair_total - c0.pair_total));
  }
  return run;
}

inline std::vector<double> infected_of(const std::vector<PairwiseState>& rows) {
  std::vector<double> out(rows.size());
  std::transform(rows.begin(), rows.end(), out.begin(), [](const PairwiseState& r) { return r.I; });
  return out;
}

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> rtol;
  std::optional<std::size_t> runs;
};

inline CaseResult run_case(const CaseConfig& cfg, const RunOverrides& ov = {}) {
  CaseResult res;
  res.config = &cfg;
  res.tau = cfg.resolved_tau();
  res.grid = cfg.grid();

  std::vector<std::future<ModelRun>> pending;
  for (ModelKind k : cfg.models) pending.push_back(std::async(std::launch::async, run_model, k, std::cref(cfg), ov.rtol));
  for (auto& f : pending) res.models.push_back(f.get());

  const std::size_t runs = ov.runs.value_or(cfg.simulation.runs);
  if (runs > 0) {
    EnsembleSpec es;
    es.runs = runs;
    es.seed = ov.seed.value_or(cfg.simulation.seed);
    es.i0 = cfg.i0;
    es.fresh_graph = cfg.simulation.fresh_graph;
    es.condition_on_survival = cfg.simulation.condition_on_survival;
    es.survival_time = cfg.simulation.survival_time;
    es.threads = cfg.simulation.threads;
    const auto degrees = sample_degree_sequence(cfg.dist, cfg.N);
    res.simulation = ensemble(degrees, SimParams{res.tau, cfg.gamma}, res.grid, es);
  }

  if (const ModelRun* compact = res.find(ModelKind::compact)) {
    const std::size_t K = cfg.dist.size();
    for (std::size_t i = 0; i < compact->series.times.size(); ++i) {
      const auto& y = compact->series.states[i];
      res.closure_error.push_back(closure_error_E(compact->series.times[i], std::span<const double>(y).first(K),
                                                  y[2 * K], y[2 * K + 1], cfg.dist));
    }
  }

  struct Named {
    std::string name;
    std::vector<double> I;
  };
  std::vector<Named> curves;
  if (res.simulation) curves.push_back({"simulation", infected_of(res.simulation->mean)});
  for (const auto& m : res.models) curves.push_back({std::string(model_name(m.kind)), infected_of(m.aggregated)});
  double max_E = 0.0;
  for (const auto& r : res.closure_error) max_E = std::max(max_E, std::abs(r.E));
  for (std::size_t a = 0; a < curves.size(); ++a) {
    for (std::size_t b = a + 1; b < curves.size(); ++b) {
      SeriesComparison c = compare_infected(res.grid, curves[a].I, res.grid, curves[b].I);
      c.a = curves[a].name;
      c.b = curves[b].name;
      const bool sc_vs_c = (c.a == "compact" && c.b == "supercompact") || (c.a == "supercompact" && c.b == "compact");
      if (sc_vs_c && !res.closure_error.empty()) attach_closure_error(c, max_E);
      res.comparisons.push_back(c);
    }
  }
  return res;
}

inline json case_report(const CaseResult& r) {
  const CaseConfig& cfg = *r.config;
  const Moments m = moments(cfg.dist);
  json j;
  j["name"] = cfg.name;
  j["distribution"] = cfg.distribution_spec;
  j["N"] = cfg.N;
  j["gamma"] = cfg.gamma;
  j["tau"] = r.tau;
  j["tau_critical"] = tau_critical(cfg.dist, cfg.gamma);
  j["i0"] = cfg.i0;
  j["moments"] = {{"mean", m.mean()}, {"std", m.stddev()}, {"n1", m.n1}, {"n2", m.n2}, {"n3", m.n3}};
  json models = json::array();
  for (const auto& mr : r.models) {
    const auto I = infected_of(mr.aggregated);
    models.push_back({{"model", model_name(mr.kind)},
                      {"plateau_I", plateau_mean(r.grid, I)},
                      {"max_node_drift", mr.max_node_drift},
                      {"max_pair_drift", mr.max_pair_drift},
                      {"accepted_steps", mr.series.accepted_steps},
                      {"rejected_steps", mr.series.rejected_steps}});
  }
  j["models"] = models;
  if (r.simulation) {
    j["simulation"] = {{"runs_used", r.simulation->runs_used},
                       {"runs_excluded", r.simulation->runs_excluded},
                       {"plateau_I", plateau_mean(r.grid, infected_of(r.simulation->mean))}};
  }
  if (!r.closure_error.empty()) {
    double max_E = 0.0, max_rel = 0.0;
    for (const auto& e : r.closure_error) {
      max_E = std::max(max_E, std::abs(e.E));
      max_rel = std::max(max_rel, std::abs(e.relative));
    }
    j["closure_error"] = {{"max_abs_E", max_E}, {"max_abs_relative", max_rel}};
  }
  json comps = json::array();
  for (const auto& c : r.comparisons) comps.push_back(to_json(c));
  j["comparisons"] = comps;
  return j;
}

inline std::string output_stem(const Scenario& sc, const CaseConfig& c) {
  return sc.cases.size() == 1 && c.name == sc.name ? sc.name : sc.name + "_" + c.name;
}

/// Write one CSV per model and simulation, the closure-error series, the JSON
/// report and optionally a gnuplot script. Returns the report.
inline json write_outputs(const Scenario& sc, const std::vector<CaseResult>& results,
                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  json report;
  report["scenario"] = sc.name;
  report["cases"] = json::array();
  std::ostringstream gp;
  if (sc.gnuplot) gp << "set datafile separator ','\nset key outside\nset xlabel 't'\nset ylabel '[I]'\n";
  for (const auto& r : results) {
    const std::string stem = output_stem(sc, *r.config);
    std::vector<std::string> files;
    auto open = [&](const std::string& name) {
      std::ofstream f(out_dir / name, std::ios::binary);
      if (!f) throw NumericalError("cannot write " + (out_dir / name).string());
      return f;
    };
    for (const auto& m : r.models) {
      const std::string name = stem + "_" + std::string(model_name(m.kind)) + ".csv";
      auto f = open(name);
      write_csv(f, CsvSeries{"ode", std::string(model_name(m.kind)), r.grid, m.aggregated, {}});
      files.push_back(name);
    }
    if (r.simulation) {
      const std::string name = stem + "_simulation.csv";
      auto f = open(name);
      std::vector<double> sd(r.simulation->stddev.size());
      std::transform(r.simulation->stddev.begin(), r.simulation->stddev.end(), sd.begin(),
                     [](const PairwiseState& s) { return s.I; });
      write_csv(f, CsvSeries{"simulation", "gillespie", r.grid, r.simulation->mean, sd});
      files.push_back(name);
    }
    if (!r.closure_error.empty()) {
      auto f = open(stem + "_closure_error.csv");
      write_closure_error_csv(f, r.closure_error);
    }
    if (sc.gnuplot && !files.empty()) {
      gp << "set title '" << stem << "'\nplot ";
      for (std::size_t i = 0; i < files.size(); ++i) {
        gp << (i ? ", \\\n     " : "") << "'" << files[i] << "' every ::1 using 1:3 with lines title '"
           << files[i].substr(stem.size() + 1, files[i].size() - stem.size() - 5) << "'";
      }
      gp << "\npause -1\n";
    }
    report["cases"].push_back(case_report(r));
  }
  {
    std::ofstream f(out_dir / (sc.name + "_report.json"), std::ios::binary);
    f << report.dump(2) << '\n';
  }
  if (sc.gnuplot) {
    std::ofstream f(out_dir / (sc.name + ".gp"), std::ios::binary);
    f << gp.str();
  }
  return report;
}

}  // namespace pairnet
