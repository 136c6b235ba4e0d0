#pragma once

// Closed-form evaluators for the quantities in the linear-codec upper-bound
// problem: channel rate, expected squared-error distortion, the Wasserstein
// perception bound and the Bhattacharyya classification bound.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "rdpc/errors.hpp"
#include "rdpc/model.hpp"
#include "rdpc/spectral.hpp"

namespace rdpc {

struct RdpcBudget {
  double dist = 0.0;  // expected squared error
  double perc = 0.0;  // Wasserstein-1
  double cls = 0.0;   // classification error probability

  void validate() const {
    detail::require(std::isfinite(dist) && std::isfinite(perc) && std::isfinite(cls),
                    "budget values must be finite");
    detail::require(dist > 0.0, "distortion budget must be > 0");
    detail::require(perc >= 0.0, "perception budget must be >= 0");
    detail::require(cls > 0.0 && cls < 1.0, "classification budget must lie in (0, 1)");
  }
};

struct MetricReport {
  double rate_nats = 0.0;
  double rate_bits = 0.0;
  double distortion = 0.0;
  double perception_bound = 0.0;
  double bhattacharyya = 0.0;
  double classification_margin = 0.0;
};

// ---------------------------------------------------------------- rate

inline double rate_nats(const ChannelNoise& noise) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < noise.m(); ++i) {
    const double s = noise.sigma(i);
    detail::require(s > 0.0 && std::isfinite(s), "rate_nats: noise powers must be > 0");
    acc += std::log1p(1.0 / s);
  }
  return acc;
}

/// m channels sharing one noise standard deviation sigma_t.
inline double rate_bits(Eigen::Index m, double sigma_t) {
  detail::require(sigma_t > 0.0 && std::isfinite(sigma_t), "rate_bits: sigma_t must be > 0");
  return static_cast<double>(m) * std::log2(1.0 + 1.0 / (sigma_t * sigma_t));
}

inline double snr_db(double sigma_t) {
  detail::require(sigma_t > 0.0, "snr_db: sigma_t must be > 0");
  return -10.0 * std::log10(sigma_t * sigma_t);
}

inline double sigma_t_from_snr(double snr) { return std::sqrt(std::pow(10.0, -snr / 10.0)); }

// ---------------------------------------------------------- distortion

/// E||X - Xhat||^2, term by term as conditioned on each class.
inline double distortion_closed_form(const GmmSource& src, const LinearCodec& codec,
                                     const ChannelNoise& noise) {
  detail::check_dimensions(src, codec, noise);
  const auto n = static_cast<double>(src.n());
  const Matrix& e = codec.enc;
  const Matrix& d = codec.dec;
  const Vector dec_c = d * (e * src.c);
  const double tr_cov = output_covariance(codec, noise).trace();
  const double tr_ed = (e * d).trace();
  const double c2 = src.c.squaredNorm();
  // tr(E (I + c c^T) D) = tr(ED) + c^T D E c
  const double tr_e_second_moment_d = tr_ed + src.c.dot(dec_c);

  const double class0 = tr_cov - 2.0 * tr_ed + n;
  const double class1 = tr_cov + dec_c.squaredNorm() - 2.0 * tr_e_second_moment_d + n + c2;
  return src.p0 * class0 + src.p1 * class1;
}

// --------------------------------------------------------- perception

/// Wasserstein-2 between Gaussians with commuting covariances.
inline double w2_gaussian_commuting(const Vector& mu_a, const Matrix& cov_a, const Vector& mu_b,
                                    const Matrix& cov_b) {
  detail::require(mu_a.size() == mu_b.size() && cov_a.rows() == mu_a.size() &&
                      cov_b.rows() == mu_b.size(),
                  "w2_gaussian_commuting: dimension mismatch");
  const double scale = std::max(1.0, cov_a.norm() * cov_b.norm());
  detail::require((cov_a * cov_b - cov_b * cov_a).norm() <= 1e-8 * scale,
                  "w2_gaussian_commuting: covariances do not commute");
  const double cov_term = (sqrt_psd(cov_a) - sqrt_psd(cov_b)).squaredNorm();
  return std::sqrt((mu_a - mu_b).squaredNorm() + cov_term);
}

/// ||cov^{1/2} - I||_F for the decoded covariance.
inline double covariance_mismatch(const Matrix& cov) {
  return (sqrt_psd(cov) - Matrix::Identity(cov.rows(), cov.cols())).norm();
}

/// Upper bound on W1(p_X, p_Xhat):
///   ||cov^{1/2} - I||_F + p1 ||D E c - c||.
inline double w1_mixture_bound(const GmmSource& src, const LinearCodec& codec,
                               const ChannelNoise& noise) {
  const OutputGmm out = output_distribution(src, codec, noise);
  return covariance_mismatch(out.cov) + src.p1 * (out.mean1 - src.c).norm();
}

// ----------------------------------------------------- classification

struct BhattacharyyaDetail {
  double value = 0.0;
  /// The mean difference had a component outside the common range; only its
  /// projection entered the Mahalanobis term.
  bool projected = false;
};

inline BhattacharyyaDetail bhattacharyya_general_detail(const Vector& mu0, const Matrix& cov0,
                                                        const Vector& mu1, const Matrix& cov1,
                                                        double p0, double p1) {
  detail::require(mu0.size() == mu1.size() && cov0.rows() == mu0.size() &&
                      cov1.rows() == mu0.size(),
                  "bhattacharyya_general: dimension mismatch");
  detail::require(p0 >= 0.0 && p1 >= 0.0 && std::abs(p0 + p1 - 1.0) <= 1e-12,
                  "bhattacharyya_general: priors must sum to 1");

  const SpectralDecomp d0 = eig_sym(cov0);
  const SpectralDecomp d1 = eig_sym(cov1);
  const SpectralDecomp avg = eig_sym(0.5 * (cov0 + cov1));
  detail::require(numerical_rank(d0) == numerical_rank(d1) &&
                      numerical_rank(avg) == numerical_rank(d0),
                  "bhattacharyya_general: covariances must share a null space");

  const Vector diff = mu1 - mu0;
  const Matrix avg_inv = gen_inverse(avg);
  const double mahalanobis = diff.dot(avg_inv * diff);
  const double log_ratio =
      gen_log_det(avg) - 0.5 * (gen_log_det(d0) + gen_log_det(d1));

  // Component of diff outside range(avg).
  const Matrix projector = avg_inv * avg.reconstruct();
  const double outside = (diff - projector * diff).norm();

  return {std::sqrt(p0 * p1) * std::exp(-0.125 * mahalanobis - 0.5 * log_ratio),
          outside > 1e-8 * std::max(1.0, diff.norm())};
}

inline double bhattacharyya_general(const Vector& mu0, const Matrix& cov0, const Vector& mu1,
                                    const Matrix& cov1, double p0, double p1) {
  return bhattacharyya_general_detail(mu0, cov0, mu1, cov1, p0, p1).value;
}

/// c^T E^T D^T cov^+ D E c with the shared decoded covariance.
inline double separation_quadratic(const GmmSource& src, const LinearCodec& codec,
                                   const ChannelNoise& noise) {
  const OutputGmm out = output_distribution(src, codec, noise);
  return out.mean1.dot(gen_inverse(eig_sym(out.cov)) * out.mean1);
}

inline double bhattacharyya_bound(const GmmSource& src, const LinearCodec& codec,
                                  const ChannelNoise& noise) {
  return std::sqrt(src.p0 * src.p1) * std::exp(-0.125 * separation_quadratic(src, codec, noise));
}

/// >= 0 exactly when bhattacharyya_bound <= cls.
inline double classification_margin(const GmmSource& src, const LinearCodec& codec,
                                    const ChannelNoise& noise, double cls) {
  detail::require(cls > 0.0 && cls < 1.0, "classification_margin: C must lie in (0, 1)");
  return separation_quadratic(src, codec, noise) +
         8.0 * std::log(cls / std::sqrt(src.p0 * src.p1));
}

// ------------------------------------------------------------ report

inline MetricReport evaluate(const GmmSource& src, const LinearCodec& codec,
                             const ChannelNoise& noise, const RdpcBudget& budget) {
  MetricReport r;
  r.rate_nats = rate_nats(noise);
  r.rate_bits = r.rate_nats / std::numbers::ln2;
  r.distortion = distortion_closed_form(src, codec, noise);
  r.perception_bound = w1_mixture_bound(src, codec, noise);
  r.bhattacharyya = bhattacharyya_bound(src, codec, noise);
  r.classification_margin = classification_margin(src, codec, noise, budget.cls);
  return r;
}

/// Constraint check with absolute slack.
inline bool satisfies(const MetricReport& r, const RdpcBudget& b, double slack = 1e-6) {
  return r.distortion <= b.dist + slack && r.perception_bound <= b.perc + slack &&
         r.classification_margin >= -slack;
}

}  // namespace rdpc
