// rdpc: single solves, sweeps, tradeoff reports and the oracle battery.
//
// Exit codes: 0 success / feasible, 1 usage or malformed input,
// 2 infeasible budgets, 3 checks failed, 4 solver failure.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rdpc/errors.hpp"
#include "rdpc/io.hpp"
#include "rdpc/rdpco.hpp"
#include "rdpc/report.hpp"
#include "rdpc/sweep.hpp"
#include "rdpc/verify.hpp"

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kInfeasible = 2, kChecksFailed = 3, kSolverFailure = 4 };

struct SolveArgs {
  rdpc::SourceSpec source;
  int m = 2;
  double dist = 6.0;
  double perc = 4.1;
  double cls = 0.1;
  std::uint64_t seed = 42;
  std::string config;
  std::string out;
};

bool write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  return static_cast<bool>(f);
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  if (!write_text(out, text)) throw rdpc::PreconditionError("cannot write '" + out + "'");
}

rdpc::Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw rdpc::PreconditionError("cannot open '" + path + "'");
  try {
    return rdpc::Json::parse(in);
  } catch (const rdpc::Json::exception& e) {
    throw rdpc::PreconditionError("'" + path + "' is not valid JSON: " + e.what());
  }
}

int run_solve(const SolveArgs& a) {
  rdpc::SolverConfig config;
  if (!a.config.empty()) {
    const rdpc::Json j = read_json(a.config);
    rdpc::apply_solver_overrides(config, j.contains("solver") ? j.at("solver") : j);
  }
  config.seed = a.seed;
  const rdpc::GmmSource src = a.source.build();
  const rdpc::RdpcBudget budget{a.dist, a.perc, a.cls};
  budget.validate();
  try {
    const rdpc::TradeoffPoint p = rdpc::solve(src, a.m, budget, config);
    rdpc::Json j = rdpc::to_json(p);
    j["seed"] = a.seed;
    j["source"] = rdpc::Json{{"n", src.n()}, {"c", rdpc::to_json(src.c)}, {"p0", src.p0}};
    emit(a.out, j.dump(2) + "\n");
    return p.feasible ? kOk : kInfeasible;
  } catch (const rdpc::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  }
}

int run_sweep(const std::string& config_path, const std::string& out) {
  rdpc::SweepConfig config = rdpc::load_sweep_config(config_path);
  const std::string target = out.empty() ? config.out : out;
  emit(target, rdpc::to_csv(rdpc::run_sweep(config)));
  return kOk;
}

int run_report(const std::string& csv, const std::string& out, bool json_only) {
  const rdpc::TradeoffReport rep = rdpc::build_report(rdpc::load_sweep_csv(csv));
  const std::string json = rdpc::to_json(rep).dump(2) + "\n";
  if (json_only) {
    std::cout << json;
  } else {
    std::cout << rdpc::to_text(rep);
  }
  if (!out.empty()) emit(out, json);
  return rep.pass() ? kOk : kChecksFailed;
}

int run_verify(bool quick, std::uint64_t seed, const std::string& out) {
  const rdpc::VerifyOptions opt{quick, seed};
  const rdpc::VerifySummary v = rdpc::run_verify(opt);
  const std::string json = rdpc::to_json(v, opt).dump(2) + "\n";
  std::cout << json;
  if (!out.empty()) emit(out, json);
  return v.pass() ? kOk : kChecksFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rate-distortion-perception-classification solver and oracle suite"};
  app.require_subcommand(1);

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "solve one operating point, print JSON");
  solve->add_option("--n", sa.source.n, "source dimension")->capture_default_str();
  solve->add_option("--m", sa.m, "channel count")->capture_default_str();
  solve->add_option("--dist", sa.dist, "distortion budget D")->capture_default_str();
  solve->add_option("--perc", sa.perc, "perception budget P")->capture_default_str();
  solve->add_option("--cls", sa.cls, "classification budget C")->capture_default_str();
  solve->add_option("--seed", sa.seed, "solver seed")->capture_default_str();
  solve->add_option("--source-seed", sa.source.seed, "seed of the class offset c")->capture_default_str();
  solve->add_option("--variance", sa.source.variance, "entry variance of c")->capture_default_str();
  solve->add_option("--p0", sa.source.p0, "class-0 prior")->capture_default_str();
  solve->add_option("--config", sa.config, "JSON file with solver overrides");
  solve->add_option("--out", sa.out, "write JSON here instead of stdout");

  std::string sweep_config;
  std::string sweep_out;
  auto* sweep = app.add_subcommand("sweep", "run a sweep config, write CSV");
  sweep->add_option("--config", sweep_config, "sweep config (JSON)")->required();
  sweep->add_option("--out", sweep_out, "CSV path (overrides the config's 'out')");

  std::string report_csv;
  std::string report_out;
  bool report_json = false;
  auto* report = app.add_subcommand("report", "shape checks on a sweep CSV");
  report->add_option("csv", report_csv, "CSV written by sweep")->required();
  report->add_option("--out", report_out, "also write the JSON report here");
  report->add_flag("--json", report_json, "print JSON instead of text");

  bool quick = false;
  std::uint64_t verify_seed = 1;
  std::string verify_out;
  auto* verify = app.add_subcommand("verify", "run the oracle battery");
  verify->add_flag("--quick", quick, "reduced sample counts");
  verify->add_option("--seed", verify_seed, "battery seed")->capture_default_str();
  verify->add_option("--out", verify_out, "also write the JSON summary here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*solve) return run_solve(sa);
    if (*sweep) return run_sweep(sweep_config, sweep_out);
    if (*report) return run_report(report_csv, report_out, report_json);
    if (*verify) return run_verify(quick, verify_seed, verify_out);
  } catch (const rdpc::PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const rdpc::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  }
  return kUsage;
}
