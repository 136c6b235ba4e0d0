#pragma once

// JSON conversions for the solver and oracle types.

#include <Eigen/Dense>

#include <cstdio>
#include <string>

#include "json.hpp"
#include "rdpc/errors.hpp"
#include "rdpc/metrics.hpp"
#include "rdpc/oracle.hpp"
#include "rdpc/rdpco.hpp"

namespace rdpc {

using Json = nlohmann::ordered_json;

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Json to_json(const MetricReport& r) {
  return Json{{"rate_nats", r.rate_nats},
              {"rate_bits", r.rate_bits},
              {"distortion", r.distortion},
              {"perception_bound", r.perception_bound},
              {"bhattacharyya", r.bhattacharyya},
              {"classification_margin", r.classification_margin}};
}

inline Json to_json(const RdpcBudget& b) {
  return Json{{"dist", b.dist}, {"perc", b.perc}, {"cls", b.cls}};
}

inline Json to_json(const TradeoffPoint& p) {
  return Json{{"codec", {{"enc", to_json(p.codec.enc)}, {"dec", to_json(p.codec.dec)}}},
              {"noise", to_json(p.noise.sigma)},
              {"report", to_json(p.report)},
              {"budgets", to_json(p.budgets)},
              {"converged", p.converged},
              {"outer_iters", p.outer_iters},
              {"feasible", p.feasible}};
}

inline Json to_json(const McEstimate& e) {
  return Json{{"value", e.value}, {"std_error", e.std_error}, {"count", e.count}, {"seed", e.seed}};
}

inline Json to_json(const ChainReport& r) {
  Json links = Json::array();
  for (const auto& l : r.links)
    links.push_back(Json{{"name", l.name},
                         {"lhs", l.lhs},
                         {"rhs", l.rhs},
                         {"std_error", l.std_error},
                         {"tolerance", l.tolerance},
                         {"pass", l.pass}});
  return Json{{"k", r.k},
              {"resamples", r.resamples},
              {"seed", r.seed},
              {"bound_scale", r.bound_scale},
              {"pass", r.pass()},
              {"links", std::move(links)}};
}

/// Applies the keys of `j` to `config`. Unknown keys are rejected so that a
/// typo cannot silently fall back to a default.
inline void apply_solver_overrides(SolverConfig& config, const Json& j) {
  detail::require(j.is_object(), "solver overrides must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    auto num = [&]() {
      detail::require(value.is_number(), "solver." + key + " must be a number");
      return value.get<double>();
    };
    auto integer = [&]() {
      detail::require(value.is_number_integer(), "solver." + key + " must be an integer");
      return value.get<int>();
    };
    if (key == "codec_lr") config.codec_lr = num();
    else if (key == "codec_iters") config.codec_iters = integer();
    else if (key == "t0") config.t0 = num();
    else if (key == "mu") config.mu = num();
    else if (key == "eps") config.eps = num();
    else if (key == "max_outer") config.max_outer = integer();
    else if (key == "barrier_gap") config.barrier_gap = num();
    else if (key == "barrier_max_updates") config.barrier_max_updates = integer();
    else if (key == "inner_lr") config.inner_lr = num();
    else if (key == "inner_iters") config.inner_iters = integer();
    else if (key == "sigma_floor") config.sigma_floor = num();
    else if (key == "lambda_d") config.lambda_d = num();
    else if (key == "lambda_p") config.lambda_p = num();
    else if (key == "lambda_c") config.lambda_c = num();
    else throw PreconditionError("unknown solver option '" + key + "'");
  }
  config.validate();
}

/// %.17g, the round-trip form used in every emitted CSV.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// %.6g, for labels and human-readable summaries.
inline std::string format_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace rdpc
