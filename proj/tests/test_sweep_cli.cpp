#include <gtest/gtest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rdpc/errors.hpp"
#include "rdpc/report.hpp"
#include "rdpc/sweep.hpp"

using namespace rdpc;

namespace {

Json small_config() {
  return Json::parse(R"({
    "source": {"n": 5, "variance": 4.0, "p0": 0.5, "seed": 7},
    "m": [2], "dist": [6.0], "perc": [4.1], "cls": [0.1],
    "seeds": [1, 2, 3], "threads": 1
  })");
}

SweepRow synthetic(int m, double d, double p, double c, std::uint64_t seed, double rate) {
  SweepRow r;
  r.seed = seed;
  r.n = 5;
  r.m = m;
  r.budget = {d, p, c};
  r.report = {rate, rate / std::log(2.0), d, p, c, 0.1};
  r.feasible = true;
  r.converged = true;
  r.outer_iters = 3;
  return r;
}

std::vector<SweepRow> curve(int m, double p, double c, const std::vector<double>& rates) {
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < rates.size(); ++i)
    rows.push_back(synthetic(m, 6.0 + static_cast<double>(i), p, c, 1, rates[i]));
  return rows;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "rdpc_test_sweep_cli";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const std::string& args, const std::filesystem::path& stdout_path) {
  const std::string cmd = std::string("\"") + RDPC_CLI_PATH + "\" " + args + " > \"" +
                          stdout_path.string() + "\" 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(SweepConfig, ParsesShippedConfigs) {
  for (const char* name : {"smoke.json", "cls_sweep.json", "channel_sweep.json"})
    EXPECT_NO_THROW(load_sweep_config(std::string(RDPC_CONFIG_DIR) + "/" + name)) << name;
}

TEST(SweepConfig, RejectsInvalidGrids) {
  auto broken = [](const char* key, const Json& value) {
    Json j = small_config();
    j[key] = value;
    return j;
  };
  EXPECT_THROW(parse_sweep_config(broken("dist", Json::array())), PreconditionError);
  EXPECT_THROW(parse_sweep_config(broken("dist", Json{7.0, 6.0})), PreconditionError);
  EXPECT_THROW(parse_sweep_config(broken("cls", Json{0.1, 0.1})), PreconditionError);
  EXPECT_THROW(parse_sweep_config(broken("cls", Json{1.5})), PreconditionError);
  EXPECT_THROW(parse_sweep_config(broken("m", Json{5})), PreconditionError);
  EXPECT_THROW(parse_sweep_config(broken("seeds", Json::array())), PreconditionError);
  EXPECT_THROW(parse_sweep_config(broken("seeds", Json{-1})), PreconditionError);
  EXPECT_THROW(parse_sweep_config(broken("unknown", Json(1))), PreconditionError);
  EXPECT_THROW(parse_sweep_config(broken("solver", Json{{"inner_itres", 10}})), PreconditionError);
  Json no_seeds = small_config();
  no_seeds.erase("seeds");
  EXPECT_THROW(parse_sweep_config(no_seeds), PreconditionError);
  EXPECT_THROW(load_sweep_config("/nonexistent/sweep.json"), PreconditionError);
}

TEST(Sweep, OneCellGivesOneRowPerSeed) {
  const SweepConfig c = parse_sweep_config(small_config());
  const auto rows = run_sweep(c);
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].seed, c.seeds[i]);
    EXPECT_EQ(rows[i].m, 2);
    EXPECT_EQ(rows[i].n, 5);
    EXPECT_TRUE(rows[i].feasible);
  }
}

TEST(Sweep, ByteIdenticalAcrossRerunsAndThreadCounts) {
  Json j = small_config();
  j["m"] = Json{1, 2};
  j["dist"] = Json{6.0, 8.0};
  SweepConfig c = parse_sweep_config(j);
  const std::string a = to_csv(run_sweep(c));
  EXPECT_EQ(a, to_csv(run_sweep(c)));
  c.threads = 4;
  EXPECT_EQ(a, to_csv(run_sweep(c)));
}

TEST(SweepCsv, RoundTrips) {
  const auto rows = run_sweep(parse_sweep_config(small_config()));
  const std::string text = to_csv(rows);
  std::istringstream in(text);
  const auto back = parse_sweep_csv(in);
  EXPECT_EQ(to_csv(back), text);
}

TEST(SweepCsv, MalformedInputThrows) {
  const std::string header = std::string(kCsvHeader) + "\n";
  const std::string good = csv_line(synthetic(2, 6.0, 4.1, 0.1, 1, 0.5));
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return parse_sweep_csv(in);
  };
  EXPECT_NO_THROW(parse(header + good + "\n"));
  EXPECT_THROW(parse(""), PreconditionError);
  EXPECT_THROW(parse("seed,n\n"), PreconditionError);
  EXPECT_THROW(parse(header + "1,5,2\n"), PreconditionError);
  EXPECT_THROW(parse(header + good + ",extra\n"), PreconditionError);
  std::string bad_bool = good;
  bad_bool.replace(bad_bool.find(",true"), 5, ",yes");
  EXPECT_THROW(parse(header + bad_bool + "\n"), PreconditionError);
  std::string bad_number = good;
  bad_number.replace(bad_number.find(",6"), 2, ",x");
  EXPECT_THROW(parse(header + bad_number + "\n"), PreconditionError);
  EXPECT_THROW(load_sweep_csv("/nonexistent/rows.csv"), PreconditionError);
}

TEST(Report, MonotoneConvexCurvePasses) {
  const TradeoffReport rep = build_report(curve(2, 4.1, 0.1, {1.0, 0.6, 0.35, 0.2, 0.12}));
  EXPECT_TRUE(rep.pass());
  ASSERT_EQ(rep.curves.size(), 1u);
  EXPECT_EQ(rep.curves[0].median.size(), 5u);
}

TEST(Report, NonMonotoneCurveFails) {
  const TradeoffReport rep = build_report(curve(2, 4.1, 0.1, {1.0, 0.6, 0.8, 0.2}));
  const ShapeCheck* mono = rep.find("monotone_D[m=2,P=4.1,C=0.1]");
  ASSERT_NE(mono, nullptr);
  EXPECT_FALSE(mono->pass);
  EXPECT_FALSE(rep.pass());
}

TEST(Report, ConcaveCurveFails) {
  const TradeoffReport rep = build_report(curve(2, 4.1, 0.1, {1.0, 0.95, 0.85, 0.2}));
  const ShapeCheck* cvx = rep.find("convex_D[m=2,P=4.1,C=0.1]");
  ASSERT_NE(cvx, nullptr);
  EXPECT_FALSE(cvx->pass);
}

TEST(Report, SinglePointCurvePasses) {
  const TradeoffReport rep = build_report(curve(2, 4.1, 0.1, {0.7}));
  EXPECT_TRUE(rep.pass());
}

TEST(Report, MedianOverSeeds) {
  std::vector<SweepRow> rows;
  for (std::uint64_t s = 1; s <= 5; ++s)
    rows.push_back(synthetic(2, 6.0, 4.1, 0.1, s, static_cast<double>(s)));
  rows[4].feasible = false;
  const TradeoffReport rep = build_report(rows);
  ASSERT_EQ(rep.curves.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.curves[0].median[0], 2.5);
  EXPECT_EQ(rep.curves[0].feasible[0], 4);
  EXPECT_EQ(rep.curves[0].total[0], 5);
}

TEST(Report, MissingFeasibleSeedFailsCoverage) {
  auto rows = curve(2, 4.1, 0.1, {1.0, 0.5});
  rows[1].feasible = false;
  const ShapeCheck* cov = build_report(rows).find("coverage[m=2,P=4.1,C=0.1]");
  ASSERT_NE(cov, nullptr);
  EXPECT_FALSE(cov->pass);
}

TEST(Report, DetectsLooserClassificationBudgetRaisingRate) {
  auto rows = curve(2, 4.1, 0.1, {1.0, 0.5});
  auto loose = curve(2, 4.1, 0.3, {0.9, 0.4});
  rows.insert(rows.end(), loose.begin(), loose.end());
  const ShapeCheck* ok = build_report(rows).find("cls_tightening[m=2,P=4.1,C=0.1<0.3]");
  ASSERT_NE(ok, nullptr);
  EXPECT_TRUE(ok->pass);

  auto bad = curve(2, 4.1, 0.1, {1.0, 0.5});
  auto higher = curve(2, 4.1, 0.3, {1.1, 0.4});
  bad.insert(bad.end(), higher.begin(), higher.end());
  const ShapeCheck* chk = build_report(bad).find("cls_tightening[m=2,P=4.1,C=0.1<0.3]");
  ASSERT_NE(chk, nullptr);
  EXPECT_FALSE(chk->pass);
}

TEST(Report, FlatM1AndChannelOrdering) {
  auto rows = curve(1, 4.1, 0.1, {0.5, 0.5, 0.5});
  auto m2 = curve(2, 4.1, 0.1, {0.9, 0.6, 0.4});
  auto m3 = curve(3, 4.1, 0.1, {1.0, 0.7, 0.5});
  rows.insert(rows.end(), m2.begin(), m2.end());
  rows.insert(rows.end(), m3.begin(), m3.end());
  const TradeoffReport rep = build_report(rows);
  ASSERT_NE(rep.find("flat_m1[P=4.1,C=0.1]"), nullptr);
  EXPECT_TRUE(rep.find("flat_m1[P=4.1,C=0.1]")->pass);
  EXPECT_TRUE(rep.find("m2_le_m3[P=4.1,C=0.1]")->pass);

  rows[1].report.rate_nats = 0.6;
  EXPECT_FALSE(build_report(rows).find("flat_m1[P=4.1,C=0.1]")->pass);
}

TEST(Report, PureFunctionOfRows) {
  const auto rows = curve(2, 4.1, 0.1, {1.0, 0.6, 0.35});
  EXPECT_EQ(to_json(build_report(rows)).dump(), to_json(build_report(rows)).dump());
}

TEST(Cli, SolveDefaultsIsFeasible) {
  const auto out = scratch("solve.json");
  EXPECT_EQ(cli("solve", out), 0);
  const Json j = Json::parse(slurp(out));
  EXPECT_TRUE(j.at("feasible").get<bool>());
  EXPECT_LE(j.at("report").at("distortion").get<double>(), 6.0);
  EXPECT_LE(j.at("report").at("perception_bound").get<double>(), 4.1);
  EXPECT_LE(j.at("report").at("bhattacharyya").get<double>(), 0.1);
}

TEST(Cli, SolveIsDeterministic) {
  const auto a = scratch("solve_a.json");
  const auto b = scratch("solve_b.json");
  ASSERT_EQ(cli("solve --seed 7", a), 0);
  ASSERT_EQ(cli("solve --seed 7", b), 0);
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST(Cli, ExitCodes) {
  const auto out = scratch("exit.txt");
  EXPECT_EQ(cli("solve --cls 1.5", out), 1);
  EXPECT_EQ(cli("solve --m 9", out), 1);
  EXPECT_EQ(cli("bogus", out), 1);
  EXPECT_EQ(cli("solve --perc 0.0001", out), 2);
  const auto bad = scratch("bad.csv");
  std::ofstream(bad) << "not,a,sweep\n";
  EXPECT_EQ(cli("report \"" + bad.string() + "\"", out), 1);
  EXPECT_EQ(cli("report /nonexistent/rows.csv", out), 1);
  EXPECT_EQ(cli("sweep --config /nonexistent/sweep.json", out), 1);
}

TEST(Cli, SweepThenReport) {
  const auto cfg = scratch("sweep.json");
  const auto csv = scratch("sweep.csv");
  Json j = small_config();
  j["dist"] = Json{6.0, 8.0};
  std::ofstream(cfg) << j.dump();
  const auto out = scratch("sweep_stdout.txt");
  ASSERT_EQ(cli("sweep --config \"" + cfg.string() + "\" --out \"" + csv.string() + "\"", out), 0);
  EXPECT_EQ(slurp(csv), to_csv(run_sweep(parse_sweep_config(j))));
  const int code = cli("report --json \"" + csv.string() + "\"", out);
  const TradeoffReport rep = build_report(load_sweep_csv(csv.string()));
  EXPECT_EQ(code, rep.pass() ? 0 : 3);
  EXPECT_EQ(Json::parse(slurp(out)).dump(), to_json(rep).dump());
}

TEST(Cli, VerifyQuickIsFastAndDeterministic) {
  const auto a = scratch("verify_a.json");
  const auto b = scratch("verify_b.json");
  const auto start = std::chrono::steady_clock::now();
  const int code = cli("verify --quick --seed 7", a);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 30.0);
  EXPECT_TRUE(code == 0 || code == 3) << code;
  EXPECT_EQ(cli("verify --quick --seed 7", b), code);
  EXPECT_EQ(slurp(a), slurp(b));
  const Json j = Json::parse(slurp(a));
  EXPECT_TRUE(j.is_object());
}
