#pragma once

// Budget / dimension sweeps: JSON configuration, a worker pool of
// independent solves and the fixed-schema CSV.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "rdpc/errors.hpp"
#include "rdpc/io.hpp"
#include "rdpc/metrics.hpp"
#include "rdpc/model.hpp"
#include "rdpc/rdpco.hpp"

namespace rdpc {

struct SourceSpec {
  Eigen::Index n = 5;
  double variance = 4.0;
  double p0 = 0.5;
  std::uint64_t seed = 7;

  GmmSource build() const { return random_source(n, variance, p0, seed); }
};

struct SweepConfig {
  SourceSpec source;
  std::vector<int> m;
  std::vector<double> dist;
  std::vector<double> perc;
  std::vector<double> cls;
  std::vector<std::uint64_t> seeds;
  SolverConfig solver;
  std::string out;   // CSV path; empty means the caller decides
  int threads = 0;   // 0: hardware concurrency

  void validate() const {
    auto increasing = [](const auto& v, const std::string& name) {
      detail::require(!v.empty(), "sweep: grid '" + name + "' is empty");
      for (std::size_t i = 1; i < v.size(); ++i)
        detail::require(v[i - 1] < v[i], "sweep: grid '" + name + "' must be strictly increasing");
    };
    increasing(m, "m");
    increasing(dist, "dist");
    increasing(perc, "perc");
    increasing(cls, "cls");
    detail::require(!seeds.empty(), "sweep: at least one seed is required");
    detail::require(source.n >= 2, "sweep: source.n must be >= 2");
    detail::require(m.front() >= 1 && m.back() < source.n, "sweep: need 1 <= m < n");
    for (double d : dist) RdpcBudget{d, perc.front(), cls.front()}.validate();
    for (double p : perc) RdpcBudget{dist.front(), p, cls.front()}.validate();
    for (double c : cls) RdpcBudget{dist.front(), perc.front(), c}.validate();
    detail::require(threads >= 0, "sweep: threads must be >= 0");
    solver.validate();
  }
};

namespace detail {

template <typename T>
std::vector<T> json_list(const Json& j, const std::string& key) {
  require(j.contains(key), "sweep config: missing '" + key + "'");
  const Json& a = j.at(key);
  require(a.is_array(), "sweep config: '" + key + "' must be an array");
  std::vector<T> out;
  for (const auto& v : a) {
    if constexpr (std::is_integral_v<T>) {
      require(v.is_number_integer() && (!std::is_unsigned_v<T> || v.get<long long>() >= 0),
              "sweep config: '" + key + "' entries must be non-negative integers");
    } else {
      require(v.is_number(), "sweep config: '" + key + "' entries must be numbers");
    }
    out.push_back(v.get<T>());
  }
  return out;
}

}  // namespace detail

inline SweepConfig parse_sweep_config(const Json& j) {
  detail::require(j.is_object(), "sweep config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    static const char* known[] = {"source", "m",    "dist", "perc",   "cls",
                                  "seeds",  "solver", "out", "threads", "comment"};
    detail::require(std::find_if(std::begin(known), std::end(known),
                                 [&](const char* k) { return key == k; }) != std::end(known),
                    "sweep config: unknown key '" + key + "'");
  }

  SweepConfig c;
  if (j.contains("source")) {
    const Json& s = j.at("source");
    detail::require(s.is_object(), "sweep config: 'source' must be an object");
    for (const auto& [key, value] : s.items()) {
      if (key == "n") {
        detail::require(value.is_number_integer(), "source.n must be an integer");
        c.source.n = value.get<Eigen::Index>();
      } else if (key == "variance") {
        detail::require(value.is_number(), "source.variance must be a number");
        c.source.variance = value.get<double>();
      } else if (key == "p0") {
        detail::require(value.is_number(), "source.p0 must be a number");
        c.source.p0 = value.get<double>();
      } else if (key == "seed") {
        detail::require(value.is_number_unsigned(), "source.seed must be a non-negative integer");
        c.source.seed = value.get<std::uint64_t>();
      } else {
        throw PreconditionError("sweep config: unknown source key '" + key + "'");
      }
    }
  }
  c.m = detail::json_list<int>(j, "m");
  c.dist = detail::json_list<double>(j, "dist");
  c.perc = detail::json_list<double>(j, "perc");
  c.cls = detail::json_list<double>(j, "cls");
  c.seeds = detail::json_list<std::uint64_t>(j, "seeds");
  if (j.contains("solver")) apply_solver_overrides(c.solver, j.at("solver"));
  if (j.contains("out")) {
    detail::require(j.at("out").is_string(), "sweep config: 'out' must be a string");
    c.out = j.at("out").get<std::string>();
  }
  if (j.contains("threads")) {
    detail::require(j.at("threads").is_number_integer(), "sweep config: 'threads' must be an integer");
    c.threads = j.at("threads").get<int>();
  }
  c.validate();
  return c;
}

inline SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open sweep config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw PreconditionError("sweep config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_sweep_config(j);
}

struct SweepRow {
  std::uint64_t seed = 0;
  Eigen::Index n = 0;
  int m = 0;
  RdpcBudget budget;
  MetricReport report;  // NaN when the solve threw
  bool feasible = false;
  bool converged = false;
  int outer_iters = 0;
};

inline constexpr const char* kCsvHeader =
    "seed,n,m,dist_budget,perc_budget,cls_budget,rate_nats,rate_bits,distortion,"
    "perception_bound,bhattacharyya,classification_margin,feasible,converged,outer_iters";

/// One cell. Solver failures become infeasible rows with NaN metrics.
inline SweepRow solve_cell(const GmmSource& src, int m, const RdpcBudget& budget,
                           SolverConfig config, std::uint64_t seed) {
  config.seed = seed;
  SweepRow row;
  row.seed = seed;
  row.n = src.n();
  row.m = m;
  row.budget = budget;
  try {
    const TradeoffPoint p = solve(src, m, budget, config);
    row.report = p.report;
    row.feasible = p.feasible;
    row.converged = p.converged;
    row.outer_iters = p.outer_iters;
  } catch (const std::runtime_error&) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.report = MetricReport{nan, nan, nan, nan, nan, nan};
  }
  return row;
}

/// Rows in the order (m, dist, perc, cls, seed), independent of scheduling.
inline std::vector<SweepRow> run_sweep(const SweepConfig& config) {
  config.validate();
  const GmmSource src = config.source.build();

  struct Cell {
    int m;
    RdpcBudget budget;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (int m : config.m)
    for (double d : config.dist)
      for (double p : config.perc)
        for (double c : config.cls)
          for (std::uint64_t s : config.seeds) cells.push_back({m, RdpcBudget{d, p, c}, s});

  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        rows[i] = solve_cell(src, cells[i].m, cells[i].budget, config.solver, cells[i].seed);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };

  unsigned threads = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, cells.size())));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return rows;
}

inline std::string csv_line(const SweepRow& r) {
  std::string s = std::to_string(r.seed) + "," + std::to_string(r.n) + "," + std::to_string(r.m);
  for (double v : {r.budget.dist, r.budget.perc, r.budget.cls, r.report.rate_nats,
                   r.report.rate_bits, r.report.distortion, r.report.perception_bound,
                   r.report.bhattacharyya, r.report.classification_margin})
    s += "," + format_double(v);
  s += r.feasible ? ",true" : ",false";
  s += r.converged ? ",true" : ",false";
  s += "," + std::to_string(r.outer_iters);
  return s;
}

inline std::string to_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) out += csv_line(r) + "\n";
  return out;
}

}  // namespace rdpc
