#pragma once

// Alternating solver for the linear-codec upper-bound problem:
//
//   1. design the decoded covariance Sigma_hat = Q Lambda Q^T with the class
//      offset direction as a unit-eigenvalue eigenvector;
//   2. fit (E, D) by gradient descent on the constraint-eliminated
//      factorization objective, noise held at the previous iterate;
//   3. fit the channel noise by a log-barrier method with the codec fixed;
//   repeat 2-3 until (E, D, sigma) stops moving.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rdpc/errors.hpp"
#include "rdpc/metrics.hpp"
#include "rdpc/model.hpp"
#include "rdpc/rng.hpp"
#include "rdpc/spectral.hpp"

namespace rdpc {

struct SolverConfig {
  double codec_lr = 1e-4;
  int codec_iters = 20000;
  double t0 = 0.01;
  double mu = 2.0;
  double eps = 1e-5;
  int max_outer = 8;
  double barrier_gap = 0.01;
  int barrier_max_updates = 20;
  double inner_lr = 1e-3;
  int inner_iters = 500;
  double sigma_floor = 1e-6;
  // Barrier weights; unset means the budget-derived defaults.
  std::optional<double> lambda_d;
  std::optional<double> lambda_p;
  std::optional<double> lambda_c;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(codec_lr > 0.0 && codec_iters > 0, "SolverConfig: codec step/iters must be > 0");
    detail::require(t0 > 0.0 && mu > 1.0, "SolverConfig: need t0 > 0 and mu > 1");
    detail::require(eps > 0.0 && max_outer > 0, "SolverConfig: need eps > 0 and max_outer > 0");
    detail::require(barrier_gap > 0.0 && barrier_max_updates > 0,
                    "SolverConfig: barrier gap/updates must be > 0");
    detail::require(inner_lr > 0.0 && inner_iters > 0, "SolverConfig: inner step/iters must be > 0");
    detail::require(sigma_floor > 0.0, "SolverConfig: sigma_floor must be > 0");
    for (const auto& l : {lambda_d, lambda_p, lambda_c})
      detail::require(!l || (*l >= 0.0 && std::isfinite(*l)), "SolverConfig: barrier weights must be >= 0");
  }
};

struct BarrierWeights {
  double d = 1.0;
  double p = 1.0;
  double c = 1.0;
  bool fallback = false;  // a log-budget weight was replaced by 1
};

/// lambda_D = 1/ln D, lambda_P = 1/ln P, lambda_C = -1/ln sqrt(p0 p1).
/// Budgets <= 1 would flip the sign of the log weight; those fall back to 1.
inline BarrierWeights barrier_weights(const GmmSource& src, const RdpcBudget& budget,
                                      const SolverConfig& config) {
  BarrierWeights w;
  if (config.lambda_d) {
    w.d = *config.lambda_d;
  } else if (budget.dist > 1.0) {
    w.d = 1.0 / std::log(budget.dist);
  } else {
    w.fallback = true;
  }
  if (config.lambda_p) {
    w.p = *config.lambda_p;
  } else if (budget.perc > 1.0) {
    w.p = 1.0 / std::log(budget.perc);
  } else {
    w.fallback = true;
  }
  w.c = config.lambda_c ? *config.lambda_c : -1.0 / std::log(std::sqrt(src.p0 * src.p1));
  return w;
}

// ------------------------------------------------------ Sigma_hat design

struct SigmaHatDesign {
  Matrix q;          // orthogonal, column 0 = c / ||c||
  Vector lambda;     // (1, l_2, ..., l_m, 0, ..., 0)
  Matrix sigma_hat;  // q Diag(lambda) q^T
};

inline SigmaHatDesign design_sigma_hat(const GmmSource& src, Eigen::Index m, std::uint64_t seed) {
  src.validate();
  const Eigen::Index n = src.n();
  detail::require(m >= 1 && m < n, "design_sigma_hat: need 1 <= m < n");

  Rng rng(seed);
  constexpr int kMaxDraws = 16;
  for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
    Matrix basis(n, n);
    basis.col(0) = src.c / src.c.norm();
    for (Eigen::Index j = 1; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) basis(i, j) = rng.normal();
    Matrix q;
    try {
      q = gram_schmidt(basis);
    } catch (const RankDeficientError&) {
      continue;
    }
    Vector lambda = Vector::Zero(n);
    lambda(0) = 1.0;
    for (Eigen::Index i = 1; i < m; ++i) lambda(i) = rng.uniform();
    Matrix sigma_hat = q * lambda.asDiagonal() * q.transpose();
    sigma_hat = 0.5 * (sigma_hat + sigma_hat.transpose());
    return {std::move(q), std::move(lambda), std::move(sigma_hat)};
  }
  throw RankDeficientError("design_sigma_hat: Gram-Schmidt failed on every random draw");
}

// --------------------------------------------------------- codec fitting

/// 1/2 ||I - Sigma_hat + D S D^T||_F^2 + 1/2 ||D S D^T||_F^2 + 1/2 ||c - D E c||^2,
/// S = Diag(sigma_prev).
inline double codec_objective(const Matrix& enc, const Matrix& dec, const ChannelNoise& sigma_prev,
                              const Matrix& sigma_hat, const Vector& c) {
  const Eigen::Index n = dec.rows();
  const Matrix noise_out = dec * sigma_prev.sigma.asDiagonal() * dec.transpose();
  const Matrix gap = Matrix::Identity(n, n) - sigma_hat + noise_out;
  const Vector miss = c - dec * (enc * c);
  return 0.5 * (gap.squaredNorm() + noise_out.squaredNorm() + miss.squaredNorm());
}

struct CodecGradient {
  Matrix enc;  // m x n
  Matrix dec;  // n x m
};

/// Analytic partial derivatives of codec_objective. The noise matrix is the
/// previous iterate in every factor.
inline CodecGradient codec_gradients(const Matrix& enc, const Matrix& dec,
                                     const ChannelNoise& sigma_prev, const Matrix& sigma_hat,
                                     const Vector& c) {
  const Eigen::Index n = dec.rows();
  const Vector code = enc * c;
  const Vector err = dec * code - c;  // D E c - c
  const Matrix ds = dec * sigma_prev.sigma.asDiagonal();
  const Matrix noise_out = ds * dec.transpose();
  const Matrix shortfall = Matrix::Identity(n, n) - sigma_hat;

  CodecGradient g;
  g.enc = dec.transpose() * err * c.transpose();
  g.dec = 4.0 * noise_out * ds + 2.0 * shortfall * ds + err * code.transpose();
  return g;
}

/// Entries i.i.d. N(0, 1/n).
inline LinearCodec init_codec(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  Rng rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  LinearCodec codec{Matrix(m, n), Matrix(n, m)};
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i) codec.enc(i, j) = sd * rng.normal();
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) codec.dec(i, j) = sd * rng.normal();
  return codec;
}

namespace detail {
inline constexpr std::uint64_t kStreamDesign = 1;
inline constexpr std::uint64_t kStreamCodec = 2;
}  // namespace detail

/// Gradient descent on codec_objective from a seeded initialization.
///
/// The step starts at config.codec_lr; a step that would increase the
/// objective is halved until it does not, and a successful step is allowed
/// to grow back by x2 up to codec_lr. The objective sequence is therefore
/// non-increasing and the final iterate is the best one recorded.
/// `trace`, when given, receives the objective after every iteration.
inline LinearCodec fit_codec(const Matrix& sigma_hat, const ChannelNoise& sigma_prev,
                             const Vector& c, const SolverConfig& config,
                             std::vector<double>* trace = nullptr) {
  config.validate();
  const Eigen::Index n = sigma_hat.rows();
  const Eigen::Index m = sigma_prev.m();
  detail::require(sigma_hat.cols() == n && c.size() == n, "fit_codec: dimension mismatch");
  detail::require(m >= 1 && m <= n, "fit_codec: need 1 <= m <= n");

  LinearCodec codec = init_codec(n, m, derive_seed(config.seed, detail::kStreamCodec));
  double value = codec_objective(codec.enc, codec.dec, sigma_prev, sigma_hat, c);
  if (!std::isfinite(value))
    throw DivergenceError("fit_codec: objective is not finite at the initial point");

  double step = config.codec_lr;
  for (int it = 0; it < config.codec_iters; ++it) {
    const CodecGradient g = codec_gradients(codec.enc, codec.dec, sigma_prev, sigma_hat, c);
    if (!g.enc.allFinite() || !g.dec.allFinite())
      throw DivergenceError("fit_codec: gradient overflow; use a smaller codec_lr");

    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      Matrix enc = codec.enc - step * g.enc;
      Matrix dec = codec.dec - step * g.dec;
      const double next = codec_objective(enc, dec, sigma_prev, sigma_hat, c);
      if (std::isfinite(next) && next <= value) {
        codec.enc = std::move(enc);
        codec.dec = std::move(dec);
        value = next;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (trace) trace->push_back(value);
    if (!accepted) break;  // stationary to machine precision
    step = std::min(config.codec_lr, 2.0 * step);
  }

  if (!std::isfinite(value)) throw DivergenceError("fit_codec: objective diverged; use a smaller codec_lr");
  if (!codec.full_rank())
    throw RankDeficientError("fit_codec: fitted codec is rank deficient");
  return codec;
}

// ------------------------------------------------------- noise barrier

/// d_k: distortion budget minus every sigma-independent distortion term.
/// p_k: signed square of the perception residual P - p1 ||D E c - c||
///      (non-positive when the codec mismatch alone exhausts P).
struct BarrierState {
  double d_k = 0.0;
  double p_k = 0.0;
  double t = 1.0;
  Vector sigma;
};

inline BarrierState make_barrier_state(const LinearCodec& codec, const GmmSource& src,
                                       const RdpcBudget& budget, double t, Vector sigma) {
  const ChannelNoise silent{Vector::Zero(codec.m())};
  const double fixed_distortion = distortion_closed_form(src, codec, silent);
  const double residual = budget.perc - src.p1 * (codec.dec * (codec.enc * src.c) - src.c).norm();
  return {budget.dist - fixed_distortion, residual * std::abs(residual), t, std::move(sigma)};
}

/// The three log-barrier arguments; all must be > 0 at a feasible point.
struct BarrierArgs {
  double dist = 0.0;
  double perc = 0.0;
  double cls = 0.0;

  bool feasible() const { return dist > 0.0 && perc > 0.0 && cls > 0.0; }
  double min() const { return std::min({dist, perc, cls}); }

  std::vector<std::string> violated() const {
    std::vector<std::string> v;
    if (!(dist > 0.0)) v.emplace_back("distortion");
    if (!(perc > 0.0)) v.emplace_back("perception");
    if (!(cls > 0.0)) v.emplace_back("classification");
    return v;
  }
};

namespace detail {

// Shared pieces of the barrier function and its gradient at one sigma.
struct BarrierEval {
  BarrierArgs args;
  SpectralDecomp cov;
  Vector mean1;
};

inline BarrierEval barrier_eval(const Vector& sigma, const LinearCodec& codec, const GmmSource& src,
                                const RdpcBudget& budget, const BarrierState& state) {
  const ChannelNoise noise{sigma};
  BarrierEval e;
  e.mean1 = codec.dec * (codec.enc * src.c);
  e.cov = eig_sym(output_covariance(codec, noise));

  const double noise_distortion = codec.dec.colwise().squaredNorm().dot(sigma);
  const double mismatch = (sqrt_psd(e.cov) - Matrix::Identity(src.n(), src.n())).squaredNorm();
  const double quad = e.mean1.dot(gen_inverse(e.cov) * e.mean1);

  e.args.dist = state.d_k - noise_distortion;
  e.args.perc = state.p_k - mismatch;
  e.args.cls = quad + 8.0 * std::log(budget.cls / std::sqrt(src.p0 * src.p1));
  return e;
}

inline void check_sigma(const Vector& sigma, const LinearCodec& codec) {
  require(sigma.size() == codec.m(), "barrier: sigma has wrong length");
  require(sigma.allFinite() && sigma.minCoeff() > 0.0, "barrier: sigma must be > 0");
}

}  // namespace detail

inline BarrierArgs barrier_arguments(const ChannelNoise& noise, const LinearCodec& codec,
                                     const GmmSource& src, const RdpcBudget& budget,
                                     const BarrierState& state) {
  detail::check_sigma(noise.sigma, codec);
  return detail::barrier_eval(noise.sigma, codec, src, budget, state).args;
}

struct BarrierTerms {
  double h_r = 0.0;
  double h_d = 0.0;
  double h_p = 0.0;
  double h_c = 0.0;
};

inline BarrierTerms barrier_terms(const ChannelNoise& noise, const LinearCodec& codec,
                                  const GmmSource& src, const RdpcBudget& budget,
                                  const BarrierState& state) {
  const BarrierArgs a = barrier_arguments(noise, codec, src, budget, state);
  if (!a.feasible()) {
    std::string what = "barrier: infeasible point, violated:";
    for (const auto& v : a.violated()) what += " " + v;
    throw InfeasibleError(what, a.violated());
  }
  return {rate_nats(noise), std::log(a.dist), std::log(a.perc), std::log(a.cls)};
}

/// t h_r - lambda_D h_d - lambda_P h_p - lambda_C h_c.
inline double barrier_objective(const ChannelNoise& noise, const LinearCodec& codec,
                                const GmmSource& src, const RdpcBudget& budget,
                                const BarrierState& state, const BarrierWeights& w) {
  const BarrierTerms h = barrier_terms(noise, codec, src, budget, state);
  return state.t * h.h_r - w.d * h.h_d - w.p * h.h_p - w.c * h.h_c;
}

/// Gradient of barrier_objective with respect to sigma.
///
/// With d_i the i-th decoder column, Sigma_hat^+ the generalized inverse and
/// u = D E c:
///   dh_r/ds_i = -1 / (s_i^2 + s_i)
///   dh_d/ds_i = -||d_i||^2 / arg_d
///   dh_p/ds_i = -d_i^T (I - Sigma_hat^{+1/2}) d_i / arg_p
///   dh_c/ds_i = -(D^T Sigma_hat^+ u)_i^2 / arg_c
inline Vector barrier_gradients(const ChannelNoise& noise, const LinearCodec& codec,
                                const GmmSource& src, const RdpcBudget& budget,
                                const BarrierState& state, const BarrierWeights& w) {
  detail::check_sigma(noise.sigma, codec);
  const auto e = detail::barrier_eval(noise.sigma, codec, src, budget, state);
  if (!e.args.feasible()) {
    std::string what = "barrier gradient: infeasible point, violated:";
    for (const auto& v : e.args.violated()) what += " " + v;
    throw InfeasibleError(what, e.args.violated());
  }

  const Matrix& dec = codec.dec;
  const Eigen::Index n = src.n();
  const Vector& s = noise.sigma;

  const Vector grad_r = -(s.array().square() + s.array()).inverse().matrix();
  const Vector col_sq = dec.colwise().squaredNorm().transpose();
  const Vector grad_d = -col_sq / e.args.dist;

  const Matrix shrink = Matrix::Identity(n, n) - gen_inverse_sqrt(e.cov);
  const Vector grad_p = -(dec.transpose() * shrink * dec).diagonal() / e.args.perc;

  const Vector whitened = dec.transpose() * (gen_inverse(e.cov) * e.mean1);
  const Vector grad_c = -whitened.array().square().matrix() / e.args.cls;

  return state.t * grad_r - w.d * grad_d - w.p * grad_p - w.c * grad_c;
}

struct NoiseFit {
  ChannelNoise noise;
  BarrierState state;       // final t, d_k, p_k
  int barrier_updates = 0;  // inner solves performed
  long accepted_steps = 0;
  double min_log_argument = std::numeric_limits<double>::infinity();  // over accepted iterates
};

namespace detail {

/// Projected gradient descent on one barrier subproblem. The step starts at
/// `lr`, halves on any candidate that leaves the feasible set or increases
/// the objective, and doubles after each accepted step.
inline void barrier_descent(Vector& sigma, const LinearCodec& codec, const GmmSource& src,
                            const RdpcBudget& budget, const BarrierState& state,
                            const BarrierWeights& w, const SolverConfig& config, NoiseFit& fit) {
  auto value_at = [&](const Vector& s, BarrierArgs& args) {
    const auto e = barrier_eval(s, codec, src, budget, state);
    args = e.args;
    if (!args.feasible()) return std::numeric_limits<double>::infinity();
    return state.t * rate_nats(ChannelNoise{s}) - w.d * std::log(args.dist) -
           w.p * std::log(args.perc) - w.c * std::log(args.cls);
  };

  BarrierArgs args;
  double value = value_at(sigma, args);
  double step = config.inner_lr;
  for (int it = 0; it < config.inner_iters; ++it) {
    const Vector g = barrier_gradients(ChannelNoise{sigma}, codec, src, budget, state, w);
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      const Vector candidate = (sigma - step * g).cwiseMax(config.sigma_floor);
      BarrierArgs cand_args;
      const double next = value_at(candidate, cand_args);
      if (next <= value) {
        const double moved = (candidate - sigma).norm();
        const double gain = value - next;
        sigma = candidate;
        value = next;
        fit.min_log_argument = std::min(fit.min_log_argument, cand_args.min());
        ++fit.accepted_steps;
        accepted = true;
        if (moved <= 1e-13 * (1.0 + sigma.norm()) && gain <= 1e-15 * (1.0 + std::abs(value)))
          return;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return;
    step *= 2.0;
  }
}

}  // namespace detail

/// Log-barrier minimization of the rate over the noise powers with the codec
/// fixed. A strictly feasible start is searched from `warm_start` (if given
/// and feasible), then from sigma = 1 shrinking by 4 towards sigma_floor.
inline NoiseFit fit_noise(const LinearCodec& codec, const GmmSource& src, const RdpcBudget& budget,
                          const SolverConfig& config,
                          const std::optional<Vector>& warm_start = std::nullopt) {
  config.validate();
  budget.validate();
  detail::check_dimensions(src, codec, ChannelNoise{Vector::Ones(codec.m())});
  const BarrierWeights w = barrier_weights(src, budget, config);
  const Eigen::Index m = codec.m();

  BarrierState state = make_barrier_state(codec, src, budget, config.t0, Vector::Ones(m));

  std::vector<Vector> starts;
  if (warm_start && warm_start->size() == m && warm_start->allFinite())
    starts.push_back(warm_start->cwiseMax(config.sigma_floor));
  {
    double level = 1.0;
    for (int shrink = 0; shrink <= 40; ++shrink) {
      starts.push_back(Vector::Constant(m, std::max(level, config.sigma_floor)));
      if (level <= config.sigma_floor) break;
      level /= 4.0;
    }
  }

  std::optional<Vector> start;
  BarrierArgs last;
  for (const Vector& s : starts) {
    last = barrier_arguments(ChannelNoise{s}, codec, src, budget, state);
    if (last.feasible()) {
      start = s;
      break;
    }
  }
  if (!start) {
    std::string what = "no strictly feasible noise level; violated:";
    for (const auto& v : last.violated()) what += " " + v;
    throw InfeasibleError(what, last.violated());
  }

  NoiseFit fit;
  Vector sigma = *start;
  fit.min_log_argument = barrier_arguments(ChannelNoise{sigma}, codec, src, budget, state).min();

  const int cap = std::max(static_cast<int>((m + 99) / 100), config.barrier_max_updates);
  for (int update = 0; update < cap; ++update) {
    detail::barrier_descent(sigma, codec, src, budget, state, w, config, fit);
    ++fit.barrier_updates;
    if (3.0 / state.t < config.barrier_gap) break;
    state.t *= config.mu;
  }
  state.sigma = sigma;
  fit.noise = ChannelNoise{sigma};
  fit.state = state;
  return fit;
}

// ----------------------------------------------------------------- solve

struct TradeoffPoint {
  LinearCodec codec;
  ChannelNoise noise;
  MetricReport report;
  RdpcBudget budgets;
  bool converged = false;
  int outer_iters = 0;
  bool feasible = false;
};

inline constexpr double kFeasibilitySlack = 1e-6;

/// Runs the alternating solver. The returned point is the feasible outer
/// iterate with the lowest rate (the last iterate if none is feasible).
/// Infeasibility at the first outer iteration is propagated; at a later one
/// it ends the loop with converged = false.
inline TradeoffPoint solve(const GmmSource& src, Eigen::Index m, const RdpcBudget& budget,
                           const SolverConfig& config) {
  src.validate();
  budget.validate();
  config.validate();
  detail::require(m >= 1 && m < src.n(), "solve: need 1 <= m < n");

  const SigmaHatDesign design =
      design_sigma_hat(src, m, derive_seed(config.seed, detail::kStreamDesign));

  ChannelNoise sigma_prev{Vector::Ones(m)};
  std::optional<LinearCodec> prev_codec;

  std::optional<TradeoffPoint> best;
  TradeoffPoint last;
  bool converged = false;
  int iters = 0;

  for (int k = 1; k <= config.max_outer; ++k) {
    // Later refits can collapse decoder columns onto the class-offset
    // direction once a channel's noise grows large; that ends the loop.
    LinearCodec codec;
    NoiseFit nf;
    try {
      codec = fit_codec(design.sigma_hat, sigma_prev, src.c, config);
      nf = fit_noise(codec, src, budget, config, sigma_prev.sigma);
    } catch (const InfeasibleError&) {
      if (k == 1) throw;
      break;
    } catch (const RankDeficientError&) {
      if (k == 1) throw;
      break;
    }
    iters = k;

    TradeoffPoint point{codec, nf.noise, evaluate(src, codec, nf.noise, budget), budget,
                        false, k, false};
    point.feasible = satisfies(point.report, budget, kFeasibilitySlack);
    if (point.feasible && (!best || point.report.rate_nats < best->report.rate_nats)) best = point;

    double change = std::numeric_limits<double>::infinity();
    if (prev_codec) {
      change = std::sqrt((codec.enc - prev_codec->enc).squaredNorm() +
                         (codec.dec - prev_codec->dec).squaredNorm() +
                         (nf.noise.sigma - sigma_prev.sigma).squaredNorm());
    }
    last = std::move(point);
    prev_codec = codec;
    sigma_prev = nf.noise;
    if (change <= config.eps) {
      converged = true;
      break;
    }
  }

  TradeoffPoint out = best ? *best : last;
  out.converged = converged;
  out.outer_iters = iters;
  return out;
}

/// (E, D) -> (M E, D M^{-1}).
inline LinearCodec reparameterize(const LinearCodec& codec, const Matrix& mix) {
  detail::require(mix.rows() == codec.m() && mix.cols() == codec.m(),
                  "reparameterize: mixing matrix must be m x m");
  return {mix * codec.enc, codec.dec * mix.inverse()};
}

}  // namespace rdpc
