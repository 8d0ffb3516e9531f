// pairnet: run pairwise SIS scenarios, tabulate degree moments, compare curves.
//
// Exit codes: 0 ok, 1 configuration error, 2 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pairnet/bench.hpp"

namespace fs = std::filesystem;
using namespace pairnet;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kNumericalError = 2;

fs::path resolve_out_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("PAIRNET_OUT_DIR"); env && *env) return env;
  return "pairnet-out";
}

int cmd_run(const std::string& scenario_path, const RunOverrides& ov, const fs::path& out_dir) {
  const Scenario sc = load_scenario(scenario_path);
  std::vector<CaseResult> results;
  for (const auto& c : sc.cases) {
    std::cerr << "[" << sc.name << "] case " << c.name << ": tau=" << format_number(c.resolved_tau()) << '\n';
    results.push_back(run_case(c, ov));
  }
  const json report = write_outputs(sc, results, out_dir);
  for (const auto& c : report["cases"]) {
    std::cout << c["name"].get<std::string>() << "  <k>=" << c["moments"]["mean"].get<double>()
              << "  std=" << c["moments"]["std"].get<double>() << "  tau=" << c["tau"].get<double>() << '\n';
    for (const auto& m : c["models"]) {
      std::cout << "  " << m["model"].get<std::string>() << ": plateau [I]=" << m["plateau_I"].get<double>()
                << "  drift(node,pair)=(" << m["max_node_drift"].get<double>() << ", "
                << m["max_pair_drift"].get<double>() << ")\n";
    }
    if (c.contains("simulation")) {
      std::cout << "  simulation: plateau [I]=" << c["simulation"]["plateau_I"].get<double>() << "  runs used "
                << c["simulation"]["runs_used"].get<std::size_t>() << '\n';
    }
    if (c.contains("closure_error")) {
      std::cout << "  max|E|=" << c["closure_error"]["max_abs_E"].get<double>() << '\n';
    }
    for (const auto& cmp : c["comparisons"]) {
      std::cout << "  " << cmp["a"].get<std::string>() << " vs " << cmp["b"].get<std::string>()
                << ": sup|dI|=" << cmp["sup_norm"].get<double>() << '\n';
    }
  }
  std::cout << "outputs written to " << out_dir.string() << '\n';
  return kOk;
}

int cmd_moments(const std::string& arg, const fs::path& out_dir, bool write) {
  std::string text = fs::exists(arg) ? read_file(arg) : arg;
  json doc;
  try {
    doc = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("moments: cannot parse input: ") + e.what());
  }
  std::vector<std::pair<std::string, DegreeDistribution>> specs;
  std::vector<std::optional<TableReference>> refs;
  std::string name = "moments";
  if (doc.is_object() && doc.contains("kind")) {
    specs.emplace_back(doc.value("kind", std::string("network")), parse_distribution(doc));
    refs.emplace_back();
  } else {
    const Scenario sc = parse_scenario(text, fs::exists(arg) ? fs::path(arg).stem().string() : "moments");
    name = sc.name;
    for (const auto& c : sc.cases) {
      specs.emplace_back(c.name, c.dist);
      refs.push_back(c.reference);
    }
  }
  const auto rows = moments_table(specs, refs);
  std::cout << format_moments_table(rows);
  if (write) {
    fs::create_directories(out_dir);
    std::ofstream f(out_dir / (name + "_moments.csv"), std::ios::binary);
    write_moments_csv(f, rows);
  }
  return kOk;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& error_csv) {
  SeriesComparison c = compare(read_csv_file(a), read_csv_file(b));
  if (!error_csv.empty()) {
    std::ifstream in(error_csv);
    if (!in) throw ConfigError("cannot open " + error_csv);
    attach_closure_error(c, max_abs_E_from_csv(in, error_csv));
  }
  std::cout << to_json(c).dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pairwise SIS models on heterogeneous networks"};
  app.require_subcommand(1);

  std::string out_flag;
  std::optional<std::uint64_t> seed;
  std::optional<double> rtol;
  std::optional<std::size_t> runs;
  app.add_option("--out-dir", out_flag, "Output directory (default: $PAIRNET_OUT_DIR or ./pairnet-out)");

  auto* run = app.add_subcommand("run", "Run a scenario file");
  std::string scenario;
  run->add_option("scenario", scenario, "Scenario file")->required();
  run->add_option("--seed", seed, "Master seed for the simulation ensemble");
  run->add_option("--rtol", rtol, "Relative integration tolerance");
  run->add_option("--runs", runs, "Number of simulation runs (0 disables simulation)");
  run->add_option("--out-dir", out_flag, "Output directory");

  auto* mom = app.add_subcommand("moments", "Tabulate degree moments of a scenario or distribution spec");
  std::string mom_arg;
  bool mom_write = false;
  mom->add_option("input", mom_arg, "Scenario file, or a distribution spec as JSON")->required();
  mom->add_flag("--csv", mom_write, "Also write <name>_moments.csv to the output directory");
  mom->add_option("--out-dir", out_flag, "Output directory");

  auto* cmp = app.add_subcommand("compare", "Compare the [I] columns of two CSV series");
  std::string csv_a, csv_b, error_csv;
  cmp->add_option("a", csv_a, "First CSV")->required();
  cmp->add_option("b", csv_b, "Second CSV")->required();
  cmp->add_option("--closure-error", error_csv, "Closure-error CSV from the compact model run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const fs::path out_dir = resolve_out_dir(out_flag);
    if (*run) return cmd_run(scenario, RunOverrides{seed, rtol, runs}, out_dir);
    if (*mom) return cmd_moments(mom_arg, out_dir, mom_write);
    if (*cmp) return cmd_compare(csv_a, csv_b, error_csv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalError;
  }
  return kOk;
}
