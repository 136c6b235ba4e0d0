#pragma once

// Tradeoff report over a sweep CSV: median-over-seeds rate curves against
// the distortion budget and shape checks on them. A pure function of the
// CSV contents.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "rdpc/errors.hpp"
#include "rdpc/io.hpp"
#include "rdpc/sweep.hpp"

namespace rdpc {

/// Relative tolerance of the curve-shape checks, as a fraction of the
/// curve's range (max - min of its medians).
inline constexpr double kShapeTolerance = 0.02;
/// Maximum relative spread (max - min) / min of a flat curve.
inline constexpr double kFlatTolerance = 0.01;

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, long line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  require(!s.empty() && end == s.c_str() + s.size(),
          "CSV line " + std::to_string(line) + ": '" + s + "' is not a number");
  return v;
}

inline long long parse_integer(const std::string& s, long line) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  require(!s.empty() && end == s.c_str() + s.size(),
          "CSV line " + std::to_string(line) + ": '" + s + "' is not an integer");
  return v;
}

inline bool parse_bool(const std::string& s, long line) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw PreconditionError("CSV line " + std::to_string(line) + ": '" + s + "' is not true/false");
}

}  // namespace detail

inline std::vector<SweepRow> parse_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw PreconditionError("CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  detail::require(line == kCsvHeader, "CSV header does not match the sweep schema");

  std::vector<SweepRow> rows;
  long number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    detail::require(f.size() == 15, "CSV line " + std::to_string(number) + ": expected 15 fields, got " +
                                        std::to_string(f.size()));
    SweepRow r;
    const long long seed = detail::parse_integer(f[0], number);
    detail::require(seed >= 0, "CSV line " + std::to_string(number) + ": negative seed");
    r.seed = static_cast<std::uint64_t>(seed);
    r.n = detail::parse_integer(f[1], number);
    r.m = static_cast<int>(detail::parse_integer(f[2], number));
    r.budget = {detail::parse_double(f[3], number), detail::parse_double(f[4], number),
                detail::parse_double(f[5], number)};
    r.report = {detail::parse_double(f[6], number),  detail::parse_double(f[7], number),
                detail::parse_double(f[8], number),  detail::parse_double(f[9], number),
                detail::parse_double(f[10], number), detail::parse_double(f[11], number)};
    r.feasible = detail::parse_bool(f[12], number);
    r.converged = detail::parse_bool(f[13], number);
    r.outer_iters = static_cast<int>(detail::parse_integer(f[14], number));
    detail::require(!r.feasible || std::isfinite(r.report.rate_nats),
                    "CSV line " + std::to_string(number) + ": feasible row without a finite rate");
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<SweepRow> load_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open CSV '" + path + "'");
  return parse_sweep_csv(in);
}

/// Median feasible rate (nats) against the distortion budget at fixed (m, P, C).
struct RateCurve {
  int m = 0;
  double perc = 0.0;
  double cls = 0.0;
  std::vector<double> dist;
  std::vector<double> median;  // NaN where no seed was feasible
  std::vector<int> feasible;   // seeds counted per point
  std::vector<int> total;

  std::string label() const {
    return "m=" + std::to_string(m) + ",P=" + format_short(perc) + ",C=" + format_short(cls);
  }
};

struct ShapeCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct TradeoffReport {
  std::vector<RateCurve> curves;
  std::vector<ShapeCheck> checks;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const ShapeCheck& c) { return c.pass; });
  }
  const ShapeCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline std::vector<RateCurve> rate_curves(const std::vector<SweepRow>& rows) {
  // (m, P, C) -> D -> feasible rates, plus the per-point row count.
  std::map<std::tuple<int, double, double>, std::map<double, std::pair<std::vector<double>, int>>> g;
  for (const auto& r : rows) {
    auto& cell = g[{r.m, r.budget.perc, r.budget.cls}][r.budget.dist];
    ++cell.second;
    if (r.feasible) cell.first.push_back(r.report.rate_nats);
  }
  std::vector<RateCurve> out;
  for (const auto& [key, points] : g) {
    RateCurve c;
    std::tie(c.m, c.perc, c.cls) = key;
    for (const auto& [d, cell] : points) {
      c.dist.push_back(d);
      c.median.push_back(median_of(cell.first));
      c.feasible.push_back(static_cast<int>(cell.first.size()));
      c.total.push_back(cell.second);
    }
    out.push_back(std::move(c));
  }
  return out;
}

namespace detail {

inline double curve_range(const std::vector<double>& v) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double x : v)
    if (std::isfinite(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  return hi >= lo ? hi - lo : 0.0;
}

inline const RateCurve* find_curve(const std::vector<RateCurve>& curves, int m, double p, double c) {
  for (const auto& k : curves)
    if (k.m == m && k.perc == p && k.cls == c) return &k;
  return nullptr;
}

// hi(D) >= lo(D) at every D of `lo` that `hi` shares; missing points fail.
inline ShapeCheck dominates(const std::string& name, const RateCurve& hi, const RateCurve& lo) {
  ShapeCheck chk{name, true, ""};
  int compared = 0;
  for (std::size_t i = 0; i < lo.dist.size(); ++i) {
    const auto it = std::find(hi.dist.begin(), hi.dist.end(), lo.dist[i]);
    if (it == hi.dist.end()) continue;
    const double a = hi.median[static_cast<std::size_t>(it - hi.dist.begin())];
    const double b = lo.median[i];
    ++compared;
    if (!(std::isfinite(a) && std::isfinite(b))) {
      chk.pass = false;
      chk.detail += "D=" + format_short(lo.dist[i]) + " missing; ";
    } else if (a < b) {
      chk.pass = false;
      chk.detail += "D=" + format_short(lo.dist[i]) + ": " + format_short(a) + " < " +
                    format_short(b) + "; ";
    }
  }
  if (compared == 0) {
    chk.pass = false;
    chk.detail = "no shared grid points";
  } else if (chk.pass) {
    chk.detail = std::to_string(compared) + " points";
  }
  return chk;
}

}  // namespace detail

/// Shape checks on the median curves:
///   coverage[...]      every grid point has a feasible seed
///   monotone_D[...]    r(D_{i+1}) - r(D_i) <= 2% of range
///   convex_D[...]      generalized second difference >= -2% of range
///   flat_m1[P,C]       m = 1 spread below 1%
///   m2_le_m3[P,C]      m = 2 curve pointwise <= m = 3 curve
///   cls_tightening[..] rate(C_a) >= rate(C_b) pointwise for C_a < C_b
///   perc_tightening[..] likewise in P
inline TradeoffReport build_report(const std::vector<SweepRow>& rows) {
  TradeoffReport rep;
  rep.curves = rate_curves(rows);

  for (const auto& c : rep.curves) {
    const std::string tag = "[" + c.label() + "]";
    {
      ShapeCheck chk{"coverage" + tag, true, ""};
      for (std::size_t i = 0; i < c.dist.size(); ++i)
        if (c.feasible[i] == 0) {
          chk.pass = false;
          chk.detail += "D=" + format_short(c.dist[i]) + " has no feasible seed; ";
        }
      if (chk.pass) chk.detail = std::to_string(c.dist.size()) + " points";
      rep.checks.push_back(chk);
    }

    std::vector<double> d;
    std::vector<double> r;
    for (std::size_t i = 0; i < c.dist.size(); ++i)
      if (std::isfinite(c.median[i])) {
        d.push_back(c.dist[i]);
        r.push_back(c.median[i]);
      }
    const double tol = kShapeTolerance * detail::curve_range(r);

    ShapeCheck mono{"monotone_D" + tag, true, ""};
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < r.size(); ++i) {
      const double rise = r[i] - r[i - 1];
      worst = std::max(worst, rise);
      if (rise > tol) {
        mono.pass = false;
        mono.detail += "rises by " + format_short(rise) + " at D=" + format_short(d[i]) + "; ";
      }
    }
    if (mono.pass) mono.detail = "max rise " + format_short(r.size() > 1 ? worst : 0.0) +
                                 ", tolerance " + format_short(tol);
    rep.checks.push_back(mono);

    ShapeCheck cvx{"convex_D" + tag, true, ""};
    double least = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < r.size(); ++i) {
      const double w = (d[i + 1] - d[i]) / (d[i + 1] - d[i - 1]);
      const double second = 2.0 * (w * r[i - 1] + (1.0 - w) * r[i + 1] - r[i]);
      least = std::min(least, second);
      if (second < -tol) {
        cvx.pass = false;
        cvx.detail += "second difference " + format_short(second) + " at D=" + format_short(d[i]) + "; ";
      }
    }
    if (cvx.pass) cvx.detail = "min second difference " + format_short(r.size() > 2 ? least : 0.0) +
                               ", tolerance " + format_short(-tol);
    rep.checks.push_back(cvx);
  }

  // Cross-curve checks, grouped by the budgets that stay fixed.
  std::vector<int> ms;
  std::vector<double> ps;
  std::vector<double> cs;
  for (const auto& c : rep.curves) {
    ms.push_back(c.m);
    ps.push_back(c.perc);
    cs.push_back(c.cls);
  }
  auto uniq = [](auto& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(ms);
  uniq(ps);
  uniq(cs);

  for (double p : ps)
    for (double c : cs) {
      const std::string tag = "[P=" + format_short(p) + ",C=" + format_short(c) + "]";
      if (const RateCurve* k = detail::find_curve(rep.curves, 1, p, c)) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        bool missing = false;
        for (double v : k->median) {
          if (!std::isfinite(v)) missing = true;
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        const double spread = missing || !(lo > 0.0) ? std::numeric_limits<double>::infinity()
                                                     : (hi - lo) / lo;
        rep.checks.push_back({"flat_m1" + tag, spread < kFlatTolerance,
                              "relative spread " + format_short(spread)});
      }
      const RateCurve* m2 = detail::find_curve(rep.curves, 2, p, c);
      const RateCurve* m3 = detail::find_curve(rep.curves, 3, p, c);
      if (m2 && m3) rep.checks.push_back(detail::dominates("m2_le_m3" + tag, *m3, *m2));
    }

  for (int m : ms)
    for (double p : ps)
      for (std::size_t i = 0; i + 1 < cs.size(); ++i) {
        const RateCurve* tight = detail::find_curve(rep.curves, m, p, cs[i]);
        const RateCurve* loose = detail::find_curve(rep.curves, m, p, cs[i + 1]);
        if (tight && loose)
          rep.checks.push_back(detail::dominates("cls_tightening[m=" + std::to_string(m) +
                                                     ",P=" + format_short(p) + ",C=" +
                                                     format_short(cs[i]) + "<" +
                                                     format_short(cs[i + 1]) + "]",
                                                 *tight, *loose));
      }
  for (int m : ms)
    for (double c : cs)
      for (std::size_t i = 0; i + 1 < ps.size(); ++i) {
        const RateCurve* tight = detail::find_curve(rep.curves, m, ps[i], c);
        const RateCurve* loose = detail::find_curve(rep.curves, m, ps[i + 1], c);
        if (tight && loose)
          rep.checks.push_back(detail::dominates("perc_tightening[m=" + std::to_string(m) +
                                                     ",C=" + format_short(c) + ",P=" +
                                                     format_short(ps[i]) + "<" +
                                                     format_short(ps[i + 1]) + "]",
                                                 *tight, *loose));
      }
  return rep;
}

inline Json to_json(const TradeoffReport& rep) {
  Json curves = Json::array();
  for (const auto& c : rep.curves) {
    Json pts = Json::array();
    for (std::size_t i = 0; i < c.dist.size(); ++i) {
      Json pt{{"dist", c.dist[i]}, {"feasible_seeds", c.feasible[i]}, {"rows", c.total[i]}};
      pt["median_rate_nats"] = std::isfinite(c.median[i]) ? Json(c.median[i]) : Json(nullptr);
      pts.push_back(std::move(pt));
    }
    curves.push_back(Json{{"m", c.m}, {"perc", c.perc}, {"cls", c.cls}, {"points", std::move(pts)}});
  }
  Json checks = Json::array();
  for (const auto& k : rep.checks)
    checks.push_back(Json{{"name", k.name}, {"pass", k.pass}, {"detail", k.detail}});
  return Json{{"pass", rep.pass()}, {"curves", std::move(curves)}, {"checks", std::move(checks)}};
}

inline std::string to_text(const TradeoffReport& rep) {
  std::string s;
  for (const auto& c : rep.curves) {
    s += "curve " + c.label() + "\n";
    for (std::size_t i = 0; i < c.dist.size(); ++i)
      s += "  D=" + format_short(c.dist[i]) + "  median_rate_nats=" + format_short(c.median[i]) +
           "  feasible=" + std::to_string(c.feasible[i]) + "/" + std::to_string(c.total[i]) + "\n";
  }
  for (const auto& k : rep.checks)
    s += std::string(k.pass ? "PASS " : "FAIL ") + k.name + "  " + k.detail + "\n";
  return s;
}

}  // namespace rdpc
