#pragma once

// Oracle battery: gradient fidelity, closed forms against Monte Carlo, the
// sampled Wasserstein bound chain, reparameterization invariance and sweep
// determinism. Each check is deterministic given its seed.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rdpc/io.hpp"
#include "rdpc/metrics.hpp"
#include "rdpc/model.hpp"
#include "rdpc/oracle.hpp"
#include "rdpc/rdpco.hpp"
#include "rdpc/rng.hpp"
#include "rdpc/sweep.hpp"

namespace rdpc {

struct CheckResult {
  std::string name;
  bool pass = false;
  Json detail;
};

struct Instance {
  GmmSource src;
  LinearCodec codec;
  ChannelNoise noise;
};

/// c ~ N(0, c_var I), p0 ~ U[0.3, 0.7], codec entries N(0, 1/n),
/// noise powers U[0.2, 2].
inline Instance random_instance(Rng& rng, Eigen::Index n, Eigen::Index m, double c_var = 4.0) {
  Vector c(n);
  for (Eigen::Index i = 0; i < n; ++i) c(i) = std::sqrt(c_var) * rng.normal();
  const double p0 = rng.uniform(0.3, 0.7);
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  LinearCodec codec{Matrix(m, n), Matrix(n, m)};
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) codec.enc(i, j) = sd * rng.normal();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) codec.dec(i, j) = sd * rng.normal();
  Vector sigma(m);
  for (Eigen::Index i = 0; i < m; ++i) sigma(i) = rng.uniform(0.2, 2.0);
  return {make_source(std::move(c), p0), std::move(codec), ChannelNoise{std::move(sigma)}};
}

/// Budgets with every barrier argument strictly positive at `inst.noise`.
inline RdpcBudget feasible_budget(Rng& rng, const Instance& inst) {
  const MetricReport r = evaluate(inst.src, inst.codec, inst.noise, RdpcBudget{1.0, 1.0, 0.5});
  const double cls = std::min(0.99, r.bhattacharyya * rng.uniform(1.2, 3.0));
  return {r.distortion + rng.uniform(0.5, 2.0), r.perception_bound + rng.uniform(0.5, 2.0), cls};
}

namespace detail {

inline double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace detail

/// Central differences, step h, of codec_objective and barrier_objective.
inline CheckResult check_gradients(int instances, std::uint64_t seed, double h = 1e-5,
                                   double tol = 1e-4) {
  Rng rng(seed);
  double worst_codec = 0.0;
  double worst_barrier = 0.0;
  for (int k = 0; k < instances; ++k) {
    const Instance inst = random_instance(rng, 5, 2);
    const Matrix& enc = inst.codec.enc;
    const Matrix& dec = inst.codec.dec;
    const SigmaHatDesign design = design_sigma_hat(inst.src, 2, rng.index(1u << 30));
    const Vector& c = inst.src.c;

    const CodecGradient g = codec_gradients(enc, dec, inst.noise, design.sigma_hat, c);
    Matrix fd_enc(enc.rows(), enc.cols());
    Matrix fd_dec(dec.rows(), dec.cols());
    for (Eigen::Index i = 0; i < enc.size(); ++i) {
      Matrix up = enc, dn = enc;
      up(i) += h;
      dn(i) -= h;
      fd_enc(i) = (codec_objective(up, dec, inst.noise, design.sigma_hat, c) -
                   codec_objective(dn, dec, inst.noise, design.sigma_hat, c)) / (2.0 * h);
    }
    for (Eigen::Index i = 0; i < dec.size(); ++i) {
      Matrix up = dec, dn = dec;
      up(i) += h;
      dn(i) -= h;
      fd_dec(i) = (codec_objective(enc, up, inst.noise, design.sigma_hat, c) -
                   codec_objective(enc, dn, inst.noise, design.sigma_hat, c)) / (2.0 * h);
    }
    worst_codec = std::max({worst_codec, detail::relative_error(g.enc, fd_enc),
                            detail::relative_error(g.dec, fd_dec)});

    const RdpcBudget budget = feasible_budget(rng, inst);
    const BarrierState state =
        make_barrier_state(inst.codec, inst.src, budget, rng.uniform(0.5, 5.0), inst.noise.sigma);
    const BarrierWeights w = barrier_weights(inst.src, budget, SolverConfig{});
    const Vector gb = barrier_gradients(inst.noise, inst.codec, inst.src, budget, state, w);
    Vector fd(gb.size());
    for (Eigen::Index i = 0; i < gb.size(); ++i) {
      ChannelNoise up = inst.noise, dn = inst.noise;
      up.sigma(i) += h;
      dn.sigma(i) -= h;
      fd(i) = (barrier_objective(up, inst.codec, inst.src, budget, state, w) -
               barrier_objective(dn, inst.codec, inst.src, budget, state, w)) / (2.0 * h);
    }
    worst_barrier = std::max(worst_barrier, detail::relative_error(gb, fd));
  }
  const bool pass = worst_codec < tol && worst_barrier < tol;
  return {"gradient_fidelity", pass,
          Json{{"instances", instances},
               {"step", h},
               {"max_rel_error_codec", worst_codec},
               {"max_rel_error_barrier", worst_barrier},
               {"tolerance", tol}}};
}

inline CheckResult check_distortion(int instances, long samples, std::uint64_t seed) {
  Rng rng(seed);
  double worst_z = 0.0;
  bool pass = true;
  for (int k = 0; k < instances; ++k) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.index(5));  // 2..6
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(std::min<Eigen::Index>(3, n - 1))));
    const Instance inst = random_instance(rng, n, m);
    const double closed = distortion_closed_form(inst.src, inst.codec, inst.noise);
    const McEstimate mc = mc_distortion(inst.src, inst.codec, inst.noise, samples, rng.index(1u << 30));
    const double z = std::abs(closed - mc.value) / mc.std_error;
    worst_z = std::max(worst_z, z);
    pass = pass && z <= 4.0;
  }
  return {"closed_form_distortion", pass,
          Json{{"instances", instances}, {"samples", samples}, {"max_abs_z", worst_z}, {"limit_z", 4.0}}};
}

inline CheckResult check_bhattacharyya(int instances, long samples, std::uint64_t seed) {
  Rng rng(seed);
  double worst_excess = -1e300;  // (mc - bound) / SE
  double worst_rel = 0.0;
  bool pass = true;
  for (int k = 0; k < instances; ++k) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.index(4));  // 2..5
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n - 1)));
    const Instance inst = random_instance(rng, n, m, 1.0);
    const double bound = bhattacharyya_bound(inst.src, inst.codec, inst.noise);
    const OutputGmm out = output_distribution(inst.src, inst.codec, inst.noise);
    const double general = bhattacharyya_general(out.mean0, out.cov, out.mean1, out.cov,
                                                 inst.src.p0, inst.src.p1);
    const double rel = std::abs(bound - general) / std::max(bound, 1e-300);
    worst_rel = std::max(worst_rel, rel);
    const McEstimate mc = mc_bayes_error(inst.src, inst.codec, inst.noise, samples, rng.index(1u << 30));
    const double se = std::max(mc.std_error, 1e-300);
    worst_excess = std::max(worst_excess, (mc.value - bound) / se);
    pass = pass && rel <= 1e-10 && mc.value <= bound + 3.0 * mc.std_error;
  }
  return {"bhattacharyya_bound", pass,
          Json{{"instances", instances},
               {"samples", samples},
               {"max_excess_in_se", worst_excess},
               {"limit_excess_in_se", 3.0},
               {"max_rel_gap_general", worst_rel},
               {"limit_rel_gap_general", 1e-10}}};
}

/// Instances for the bound chain: 1-D and 2-D sources with their codecs.
inline std::vector<Instance> chain_instances(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Instance> out;
  out.push_back(random_instance(rng, 1, 1, 4.0));
  out.push_back(random_instance(rng, 2, 1, 4.0));
  out.push_back(random_instance(rng, 2, 2, 4.0));
  // Identity codec, no noise: both sides of every link vanish.
  out.push_back({make_source(Vector::Constant(2, 1.5)), LinearCodec{Matrix::Identity(2, 2), Matrix::Identity(2, 2)},
                 ChannelNoise{Vector::Zero(2)}});
  return out;
}

inline CheckResult check_wasserstein_chain(Eigen::Index k, int resamples, std::uint64_t seed) {
  bool pass = true;
  Json reports = Json::array();
  const auto instances = chain_instances(derive_seed(seed, 1));
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Instance& inst = instances[i];
    const ChainReport r = bound_chain_check(inst.src, inst.codec, inst.noise, k, resamples,
                                            derive_seed(seed, 10 + i));
    pass = pass && r.pass();
    Json j = to_json(r);
    j["n"] = inst.src.n();
    j["m"] = inst.codec.m();
    reports.push_back(std::move(j));
  }

  // Harness self-test: halving the mixture bound on an instance where it is
  // nearly tight must make the last link fail.
  const Instance tight{make_source(Vector::Constant(1, 0.1)),
                       LinearCodec{Matrix::Identity(1, 1), Matrix::Identity(1, 1)},
                       ChannelNoise{Vector::Constant(1, 3.0)}};
  const ChainReport honest = bound_chain_check(tight.src, tight.codec, tight.noise, k, resamples,
                                               derive_seed(seed, 99));
  const ChainReport halved = bound_chain_check(tight.src, tight.codec, tight.noise, k, resamples,
                                               derive_seed(seed, 99), 0.5);
  const auto link = [](const ChainReport& r, const std::string& name) {
    for (const auto& l : r.links)
      if (l.name == name) return l.pass;
    return false;
  };
  const bool self_test = honest.pass() && !link(halved, "mixture_w1_le_bound");
  pass = pass && self_test;
  return {"wasserstein_chain", pass,
          Json{{"k", k},
               {"resamples", resamples},
               {"instances", std::move(reports)},
               {"harness_self_test", self_test},
               {"self_test_halved", to_json(halved)}}};
}

/// (D, E, Sigma) -> (D M^{-1}, M E, Sigma) with M = S^{1/2} U S^{-1/2},
/// U orthogonal: the mixings that keep the channel noise covariance fixed.
inline Matrix noise_preserving_mixing(Rng& rng, const ChannelNoise& noise) {
  const Eigen::Index m = noise.m();
  Matrix g(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) g(i, j) = rng.normal();
  const Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix u = qr.householderQ() * Matrix::Identity(m, m);
  const Vector root = noise.sigma.cwiseSqrt();
  return root.asDiagonal() * u * root.cwiseInverse().asDiagonal();
}

/// Gaussian m x m mixing, redrawn until its condition number is below 1e3.
inline Matrix random_mixing(Rng& rng, Eigen::Index m) {
  for (;;) {
    Matrix g(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) g(i, j) = rng.normal();
    const Vector s = Eigen::JacobiSVD<Matrix>(g).singularValues();
    if (s(m - 1) > 1e-3 * s(0)) return g;
  }
}

namespace detail {

inline double max_rel_change(const MetricReport& a, const MetricReport& b) {
  double worst = 0.0;
  for (auto [x, y] : {std::pair{a.rate_nats, b.rate_nats}, std::pair{a.rate_bits, b.rate_bits},
                      std::pair{a.distortion, b.distortion},
                      std::pair{a.perception_bound, b.perception_bound},
                      std::pair{a.bhattacharyya, b.bhattacharyya},
                      std::pair{a.classification_margin, b.classification_margin}})
    worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(x)));
  return worst;
}

/// Noise-free metrics, which depend on the codec only through D E.
inline double max_rel_change_noise_free(const Instance& inst, const LinearCodec& moved, double cls) {
  const ChannelNoise zero{Vector::Zero(inst.codec.m())};
  double worst = 0.0;
  for (auto [x, y] : {std::pair{distortion_closed_form(inst.src, inst.codec, zero),
                                distortion_closed_form(inst.src, moved, zero)},
                      std::pair{w1_mixture_bound(inst.src, inst.codec, zero),
                                w1_mixture_bound(inst.src, moved, zero)},
                      std::pair{bhattacharyya_bound(inst.src, inst.codec, zero),
                                bhattacharyya_bound(inst.src, moved, zero)},
                      std::pair{classification_margin(inst.src, inst.codec, zero, cls),
                                classification_margin(inst.src, moved, zero, cls)}})
    worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(x)));
  return worst;
}

}  // namespace detail

/// Every MetricReport field under (E, D) -> (M E, D M^{-1}) for random
/// invertible M. The noise-preserving family and the noise-free metrics are
/// reported alongside.
inline CheckResult check_reparameterization(int instances, std::uint64_t seed, double tol = 1e-8) {
  Rng rng(seed);
  double worst_general = 0.0;
  double worst_preserving = 0.0;
  double worst_noise_free = 0.0;
  for (int k = 0; k < instances; ++k) {
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(rng.index(2));
    const Instance inst = random_instance(rng, 5, m);
    const RdpcBudget budget = feasible_budget(rng, inst);
    const MetricReport base = evaluate(inst.src, inst.codec, inst.noise, budget);

    const LinearCodec general = reparameterize(inst.codec, random_mixing(rng, m));
    worst_general = std::max(worst_general,
                             detail::max_rel_change(base, evaluate(inst.src, general, inst.noise, budget)));
    worst_noise_free = std::max(worst_noise_free, detail::max_rel_change_noise_free(inst, general, budget.cls));

    const LinearCodec preserving = reparameterize(inst.codec, noise_preserving_mixing(rng, inst.noise));
    worst_preserving = std::max(
        worst_preserving, detail::max_rel_change(base, evaluate(inst.src, preserving, inst.noise, budget)));
  }
  return {"reparameterization_invariance", worst_general <= tol,
          Json{{"instances", instances},
               {"max_rel_change", worst_general},
               {"tolerance", tol},
               {"max_rel_change_noise_preserving", worst_preserving},
               {"max_rel_change_noise_free", worst_noise_free}}};
}

/// The same sweep run single-threaded and on a pool must give one CSV.
inline CheckResult check_sweep_determinism(const SweepConfig& base) {
  SweepConfig a = base;
  a.threads = 1;
  SweepConfig b = base;
  b.threads = 3;
  const std::string first = to_csv(run_sweep(a));
  const std::string second = to_csv(run_sweep(b));
  const std::string third = to_csv(run_sweep(a));
  const bool pass = first == second && first == third;
  return {"sweep_determinism", pass,
          Json{{"rows", std::count(first.begin(), first.end(), '\n') - 1},
               {"bytes", first.size()},
               {"identical", pass}}};
}

inline SweepConfig small_determinism_sweep() {
  SweepConfig c;
  c.m = {1, 2};
  c.dist = {6.0, 8.0};
  c.perc = {4.1};
  c.cls = {0.1};
  c.seeds = {1, 2};
  c.solver.codec_iters = 2000;
  return c;
}

struct VerifyOptions {
  bool quick = false;
  std::uint64_t seed = 1;
};

struct VerifySummary {
  std::vector<CheckResult> checks;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }
};

inline VerifySummary run_verify(const VerifyOptions& opt) {
  const std::uint64_t s = opt.seed;
  VerifySummary out;
  out.checks.push_back(check_gradients(opt.quick ? 10 : 50, derive_seed(s, 101)));
  out.checks.push_back(check_distortion(opt.quick ? 3 : 10, opt.quick ? 50000 : 200000, derive_seed(s, 102)));
  out.checks.push_back(check_bhattacharyya(opt.quick ? 3 : 10, opt.quick ? 100000 : 1000000, derive_seed(s, 103)));
  out.checks.push_back(check_wasserstein_chain(opt.quick ? 128 : 512, opt.quick ? 10 : 20, derive_seed(s, 104)));
  out.checks.push_back(check_reparameterization(10, derive_seed(s, 105)));
  out.checks.push_back(check_sweep_determinism(small_determinism_sweep()));
  return out;
}

inline Json to_json(const VerifySummary& v, const VerifyOptions& opt) {
  Json checks = Json::array();
  for (const auto& c : v.checks)
    checks.push_back(Json{{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  return Json{{"seed", opt.seed}, {"quick", opt.quick}, {"pass", v.pass()}, {"checks", std::move(checks)}};
}

}  // namespace rdpc
