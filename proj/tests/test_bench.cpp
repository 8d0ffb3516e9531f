#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <sstream>

#include "pairnet/bench.hpp"

using namespace pairnet;
namespace fs = std::filesystem;

namespace {

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pairnet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(PAIRNET_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmall = R"({
  "name": "small",
  "distribution": {"kind": "bimodal", "d1": 5, "d2": 35, "frac1": 0.5},
  "N": 300,
  "models": ["traditional", "compact", "supercompact"],
  "integration": {"t_end": 5, "points": 21},
  "simulation": {"runs": 4, "seed": 3, "threads": 2}
})";

}  // namespace

TEST(ParseDistribution, Kinds) {
  EXPECT_EQ(parse_distribution(json::parse(R"({"kind":"bimodal","d1":5,"d2":35,"frac1":0.5})")),
            make_bimodal(5, 35, 0.5));
  EXPECT_EQ(parse_distribution(json::parse(R"({"kind":"powerlaw","kmin":5,"kmax":30,"alpha":2})")),
            make_truncated_powerlaw(5, 30, 2.0));
  EXPECT_EQ(parse_distribution(json::parse(R"({"kind":"regular","n":4})")), make_regular(4));
  EXPECT_EQ(parse_distribution(json::parse(R"({"kind":"custom","degrees":[2,3],"probs":[0.25,0.75]})")),
            DegreeDistribution({2, 3}, {0.25, 0.75}));
}

TEST(ParseDistribution, ErrorsNameTheField) {
  EXPECT_NE(message_of([] { parse_distribution(json::parse(R"({"kind":"bimodal","d1":5,"d2":35})")); })
                .find("distribution.frac1"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse_distribution(json::parse(R"({"kind":"bimodal","d1":5,"d2":5,"frac1":0.5})")); }),
            "");
  EXPECT_NE(message_of([] { parse_distribution(json::parse(R"({"kind":"zipf"})")); }).find("unknown distribution"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse_distribution(json::parse(R"({"kind":"regular","n":4,"x":1})")); })
                .find("distribution.x"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse_distribution(json::parse(R"({"kind":"regular","n":"four"})")); })
                .find("distribution.n"),
            std::string::npos);
}

TEST(ParseScenario, DefaultsAndCaseOverrides) {
  const Scenario sc = parse_scenario(R"({
    // comment lines are allowed
    "name": "demo",
    "N": 500,
    "models": ["compact"],
    "distribution": {"kind": "regular", "n": 4},
    "cases": [
      {"name": "a"},
      {"name": "b", "N": 200, "tau": 0.5, "distribution": {"kind": "bimodal", "d1": 2, "d2": 8, "frac1": 0.5}}
    ]
  })");
  ASSERT_EQ(sc.cases.size(), 2u);
  EXPECT_EQ(sc.name, "demo");
  EXPECT_EQ(sc.cases[0].N, 500u);
  EXPECT_EQ(sc.cases[0].dist, make_regular(4));
  EXPECT_DOUBLE_EQ(sc.cases[0].resolved_tau(), default_tau(make_regular(4), 1.0));
  EXPECT_EQ(sc.cases[1].N, 200u);
  EXPECT_EQ(sc.cases[1].dist, make_bimodal(2, 8, 0.5));
  EXPECT_DOUBLE_EQ(sc.cases[1].resolved_tau(), 0.5);
  EXPECT_EQ(sc.cases[1].models, std::vector<ModelKind>{ModelKind::compact});
}

TEST(ParseScenario, Errors) {
  EXPECT_NE(message_of([] { parse_scenario("{\n  \"N\": 10,\n  oops\n}"); }).find("line 3"), std::string::npos);
  EXPECT_NE(message_of([] {
              parse_scenario(R"({"distribution":{"kind":"regular","n":4},"tau":1,"tau_multiple":2})");
            }).find("mutually exclusive"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse_scenario(R"({"distribution":{"kind":"regular","n":4},"Nn":10})"); }).find("Nn"),
            std::string::npos);
  EXPECT_NE(message_of([] {
              parse_scenario(R"({"distribution":{"kind":"regular","n":4},"models":["compactt"]})");
            }).find("models[0]"),
            std::string::npos);
  EXPECT_NE(message_of([] {
              parse_scenario(R"({"distribution":{"kind":"regular","n":4},"cases":[{"name":"x"},{"name":"x"}]})");
            }).find("duplicate"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse_scenario(R"({"cases":[{"N":10}]})"); }).find("cases[0].distribution"),
            std::string::npos);
  EXPECT_NE(message_of([] { parse_scenario(R"({"distribution":{"kind":"regular","n":4},"i0":1.5})"); }).find("i0"),
            std::string::npos);
}

TEST(ParseScenario, BundledScenariosLoad) {
  for (const char* name : {"fig1", "fig2", "fig3", "table1"}) {
    const Scenario sc = load_scenario(std::string(PAIRNET_SCENARIO_DIR) + "/" + name + ".scenario");
    EXPECT_EQ(sc.name, name);
    EXPECT_FALSE(sc.cases.empty());
  }
  const Scenario fig1 = load_scenario(std::string(PAIRNET_SCENARIO_DIR) + "/fig1.scenario");
  EXPECT_EQ(fig1.cases[0].models.size() + (fig1.cases[0].simulation.runs > 0), 4u);
  const Scenario fig2 = load_scenario(std::string(PAIRNET_SCENARIO_DIR) + "/fig2.scenario");
  std::size_t curves = 0;
  for (const auto& c : fig2.cases) curves += c.models.size();
  EXPECT_EQ(curves, 9u);
}

TEST(Csv, RoundTripIsExact) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int trial = 0; trial < 100; ++trial) {
    CsvSeries s{"ode", "compact", {}, {}, {}};
    const bool with_std = trial % 2;
    for (int i = 0; i < 20; ++i) {
      s.times.push_back(0.1 * i);
      s.rows.push_back({u(rng), u(rng), u(rng), u(rng) * 1e-200, u(rng) * 1e200});
      if (with_std) s.std_I.push_back(std::abs(u(rng)));
    }
    std::stringstream ss;
    write_csv(ss, s);
    const CsvSeries back = read_csv(ss);
    EXPECT_EQ(back.source, "ode");
    EXPECT_EQ(back.model, "compact");
    EXPECT_EQ(back.times, s.times);
    EXPECT_EQ(back.std_I, s.std_I);
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      EXPECT_EQ(back.rows[i].flat(), s.rows[i].flat());
    }
  }
}

TEST(Csv, MalformedInputIsReported) {
  std::stringstream bad_header("t,S,I\n0,1,2\n");
  EXPECT_NE(message_of([&] { read_csv(bad_header, "x.csv"); }).find("line 1"), std::string::npos);
  std::stringstream short_row("t,S,I,SI,SS,II,source,model\n0,1,2,3,4,5,ode,compact\n1,2,3\n");
  EXPECT_NE(message_of([&] { read_csv(short_row, "x.csv"); }).find("line 3"), std::string::npos);
  std::stringstream not_number("t,S,I,SI,SS,II,source,model\n0,1,2x,3,4,5,ode,compact\n");
  EXPECT_NE(message_of([&] { read_csv(not_number, "x.csv"); }).find("field 3"), std::string::npos);
}

TEST(Compare, IdenticalSeriesGiveZero) {
  CsvSeries s{"ode", "compact", {0, 1, 2, 3}, {{9, 1, 0, 0, 0}, {8, 2, 0, 0, 0}, {7, 3, 0, 0, 0}, {6, 4, 0, 0, 0}}, {}};
  const auto c = compare(s, s);
  EXPECT_EQ(c.sup_norm, 0.0);
  EXPECT_EQ(c.terminal_diff, 0.0);
  EXPECT_EQ(c.plateau_diff, 0.0);
}

TEST(Compare, Metrics) {
  CsvSeries a{"ode", "a", {0, 1, 2, 3, 4}, {}, {}};
  CsvSeries b{"ode", "b", {0, 1, 2, 3, 4}, {}, {}};
  for (double I : {1.0, 2.0, 3.0, 4.0, 5.0}) a.rows.push_back({0, I, 0, 0, 0});
  for (double I : {1.0, 5.0, 3.0, 4.0, 6.0}) b.rows.push_back({0, I, 0, 0, 0});
  auto c = compare(a, b);
  EXPECT_DOUBLE_EQ(c.sup_norm, 3.0);
  EXPECT_DOUBLE_EQ(c.terminal_diff, 1.0);
  EXPECT_DOUBLE_EQ(c.plateau_diff, 0.5);  // only t=3 (0.75 * 4) and t=4 count: 4.5 vs 5
  attach_closure_error(c, 0.5);
  EXPECT_DOUBLE_EQ(*c.sup_over_E, 6.0);
}

TEST(Compare, GridMismatchIsAConfigError) {
  CsvSeries a{"ode", "a", {0, 1}, {{}, {}}, {}};
  CsvSeries b{"ode", "b", {0, 1, 2}, {{}, {}, {}}, {}};
  EXPECT_THROW(compare(a, b), ConfigError);
  b = CsvSeries{"ode", "b", {0, 1.5}, {{}, {}}, {}};
  EXPECT_NE(message_of([&] { compare(a, b); }).find("row 2"), std::string::npos);
}

TEST(MomentsTable, TabulatedRows) {
  const auto rows = moments_table({{"b0.1", make_bimodal(5, 35, 0.1)},
                                   {"b0.5", make_bimodal(5, 35, 0.5)},
                                   {"b0.9", make_bimodal(5, 35, 0.9)}},
                                  {TableReference{32, 9}, std::nullopt, std::nullopt});
  EXPECT_NEAR(rows[0].m.mean(), 32, 1e-12);
  EXPECT_NEAR(rows[0].m.stddev(), 9, 1e-12);
  EXPECT_NEAR(rows[1].m.stddev(), 15, 1e-12);
  EXPECT_NEAR(rows[2].m.mean(), 8, 1e-12);
  const std::string text = format_moments_table(rows);
  EXPECT_NE(text.find("b0.1"), std::string::npos);
  EXPECT_NE(text.find("+0.0000"), std::string::npos);
  std::stringstream csv;
  write_moments_csv(csv, rows);
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "network,mean,std,n1,n2,n3,ref_mean,ref_std");
}

TEST(RunCase, SmallScenarioEndToEnd) {
  const Scenario sc = parse_scenario(kSmall);
  const CaseResult r = run_case(sc.cases[0]);
  ASSERT_EQ(r.models.size(), 3u);
  ASSERT_TRUE(r.simulation.has_value());
  EXPECT_EQ(r.grid.size(), 21u);
  EXPECT_EQ(r.closure_error.size(), 21u);
  EXPECT_EQ(r.comparisons.size(), 6u);  // 4 curves, all pairs
  for (const auto& m : r.models) {
    EXPECT_LE(m.max_node_drift, 1e-9 * 300);
    EXPECT_LE(m.max_pair_drift, 1e-9 * 300);
  }
  bool has_ratio = false;
  for (const auto& c : r.comparisons) has_ratio |= c.max_abs_E.has_value();
  EXPECT_TRUE(has_ratio);
}

TEST(RunCase, OutputsAreByteReproducible) {
  const Scenario sc = parse_scenario(kSmall);
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  write_outputs(sc, {run_case(sc.cases[0])}, a);
  write_outputs(sc, {run_case(sc.cases[0])}, b);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    ASSERT_TRUE(fs::exists(b / name)) << name;
    EXPECT_EQ(read_file(entry.path()), read_file(b / name)) << name;
    ++files;
  }
  EXPECT_EQ(files, 6u);  // 3 models, simulation, closure error, report
  const CsvSeries sim = read_csv_file(a / "small_simulation.csv");
  EXPECT_EQ(sim.std_I.size(), 21u);
  EXPECT_EQ(sim.source, "simulation");
}

TEST(RunCase, SeedOverrideChangesOnlySimulation) {
  const Scenario sc = parse_scenario(kSmall);
  const CaseResult base = run_case(sc.cases[0]);
  const CaseResult other = run_case(sc.cases[0], RunOverrides{99, std::nullopt, std::nullopt});
  EXPECT_EQ(base.models[1].aggregated.back().I, other.models[1].aggregated.back().I);
  bool differs = false;
  for (std::size_t i = 0; i < base.grid.size(); ++i) differs |= base.simulation->mean[i].I != other.simulation->mean[i].I;
  EXPECT_TRUE(differs);
  const CaseResult none = run_case(sc.cases[0], RunOverrides{std::nullopt, std::nullopt, 0});
  EXPECT_FALSE(none.simulation.has_value());
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  const fs::path good = dir / "good.scenario";
  {
    std::ofstream(good) << kSmall;
    std::ofstream(dir / "bad.scenario") << "{\"distribution\": {\"kind\": \"regular\"}}";
    std::ofstream(dir / "weird.scenario") << "{ not json";
  }
  EXPECT_EQ(run_cli("run " + good.string() + " --runs 0 --out-dir " + (dir / "out").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "small_compact.csv"));
  EXPECT_EQ(run_cli("run " + (dir / "bad.scenario").string() + " --out-dir " + (dir / "out").string()), 1);
  EXPECT_EQ(run_cli("run " + (dir / "weird.scenario").string()), 1);
  EXPECT_EQ(run_cli("run " + (dir / "missing.scenario").string()), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("moments '{\"kind\":\"bimodal\",\"d1\":5,\"d2\":35,\"frac1\":0.5}'"), 0);
  EXPECT_EQ(run_cli("moments " + std::string(PAIRNET_SCENARIO_DIR) + "/table1.scenario"), 0);
  const std::string csv = (dir / "out" / "small_compact.csv").string();
  EXPECT_EQ(run_cli("compare " + csv + " " + csv), 0);
  EXPECT_EQ(run_cli("compare " + csv + " " + (dir / "nope.csv").string()), 1);
  // a step budget of a few steps is a numerical failure
  std::ofstream(dir / "stiff.scenario")
      << R"({"name":"stiff","distribution":{"kind":"regular","n":4},"models":["traditional"],
             "integration":{"rtol":1e-14,"atol_per_node":1e-300,"t_end":1e6,"points":2},"gamma":1e3})";
  EXPECT_EQ(run_cli("run " + (dir / "stiff.scenario").string() + " --out-dir " + (dir / "out").string()), 2);
}

TEST(Cli, EnvironmentSetsDefaultOutputDirectory) {
  const fs::path dir = scratch("cli_env");
  std::ofstream(dir / "good.scenario") << kSmall;
  const std::string cmd = "PAIRNET_OUT_DIR=" + (dir / "env_out").string() + " " + PAIRNET_CLI + " run " +
                          (dir / "good.scenario").string() + " --runs 0 > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "env_out" / "small_report.json"));
}
