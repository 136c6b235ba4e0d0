#pragma once

// Source, codec and channel data model, plus seeded samplers.
//
//   X | H0 ~ N(0, I_n),  X | H1 ~ N(c, I_n),  P(H1) = p1
//   Y = E X,  Yhat = Y + N,  N ~ N(0, Diag(sigma)),  Xhat = D Yhat
//
// Evaluator routines accept rank-deficient codecs (e.g. D = 0) and zero noise
// so analytic limits can be expressed; the solver enforces full rank and
// strictly positive noise on its own.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rdpc/errors.hpp"
#include "rdpc/rng.hpp"
#include "rdpc/spectral.hpp"

namespace rdpc {

struct GmmSource {
  Vector c;  // class-1 mean offset
  double p0 = 0.5;
  double p1 = 0.5;

  Eigen::Index n() const { return c.size(); }

  void validate() const {
    detail::require(c.size() > 0, "GmmSource: dimension must be positive");
    detail::require(c.allFinite(), "GmmSource: non-finite mean offset");
    detail::require(c.norm() > 0.0, "GmmSource: mean offset must be non-zero");
    detail::require(p0 > 0.0 && p0 < 1.0 && p1 > 0.0 && p1 < 1.0,
                    "GmmSource: priors must lie in (0, 1)");
    detail::require(std::abs(p0 + p1 - 1.0) <= 1e-12, "GmmSource: priors must sum to 1");
  }
};

inline GmmSource make_source(Vector c, double p0 = 0.5) {
  GmmSource src{std::move(c), p0, 1.0 - p0};
  src.validate();
  return src;
}

/// c with i.i.d. N(0, variance) entries.
inline GmmSource random_source(Eigen::Index n, double variance, double p0, std::uint64_t seed) {
  detail::require(n > 0, "random_source: n must be positive");
  detail::require(variance > 0.0, "random_source: variance must be positive");
  Rng rng(derive_seed(seed, 0x5eed));
  Vector c(n);
  const double sd = std::sqrt(variance);
  for (Eigen::Index i = 0; i < n; ++i) c(i) = sd * rng.normal();
  return make_source(std::move(c), p0);
}

struct LinearCodec {
  Matrix enc;  // m x n
  Matrix dec;  // n x m

  Eigen::Index m() const { return enc.rows(); }
  Eigen::Index n() const { return enc.cols(); }

  void validate_shapes() const {
    detail::require(enc.rows() > 0 && enc.cols() > 0, "LinearCodec: empty encoder");
    detail::require(dec.rows() == enc.cols() && dec.cols() == enc.rows(),
                    "LinearCodec: decoder must be n x m for an m x n encoder");
    detail::require(enc.allFinite() && dec.allFinite(), "LinearCodec: non-finite entry");
  }

  /// Smallest singular value above 1e-8 times the largest, for both factors.
  bool full_rank() const {
    auto ok = [](const Matrix& a) {
      Eigen::JacobiSVD<Matrix> svd(a);
      const auto& s = svd.singularValues();
      return s.size() > 0 && s(0) > 0.0 && s(s.size() - 1) > 1e-8 * s(0);
    };
    return ok(enc) && ok(dec);
  }
};

struct ChannelNoise {
  Vector sigma;  // per-channel noise power (variance)

  Eigen::Index m() const { return sigma.size(); }
};

/// Reconstruction law: two Gaussians sharing the (degenerate) covariance
/// D (E E^T + Diag(sigma)) D^T.
struct OutputGmm {
  Vector mean0;
  Vector mean1;
  Matrix cov;
};

namespace detail {

inline void check_dimensions(const GmmSource& src, const LinearCodec& codec,
                             const ChannelNoise& noise) {
  codec.validate_shapes();
  require(codec.n() == src.n(), "dimension mismatch: codec input size " +
                                    std::to_string(codec.n()) + " vs source dimension " +
                                    std::to_string(src.n()));
  require(noise.m() == codec.m(), "dimension mismatch: " + std::to_string(noise.m()) +
                                      " noise powers for " + std::to_string(codec.m()) +
                                      " channels");
  require(noise.sigma.allFinite() && noise.sigma.minCoeff() >= 0.0,
          "noise powers must be finite and non-negative");
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace detail

/// Covariance of the decoded signal, shared by both classes.
inline Matrix output_covariance(const LinearCodec& codec, const ChannelNoise& noise) {
  Matrix k = codec.enc * codec.enc.transpose();
  k.diagonal() += noise.sigma;
  return detail::symmetrize(codec.dec * k * codec.dec.transpose());
}

inline OutputGmm output_distribution(const GmmSource& src, const LinearCodec& codec,
                                     const ChannelNoise& noise) {
  detail::check_dimensions(src, codec, noise);
  return OutputGmm{Vector::Zero(src.n()), codec.dec * (codec.enc * src.c),
                   output_covariance(codec, noise)};
}

struct SourceSamples {
  Matrix x;                 // count x n, one draw per row
  std::vector<int> labels;  // 0 or 1
};

struct OutputSamples {
  Matrix inputs;   // count x n
  Matrix outputs;  // count x n
  std::vector<int> labels;
};

inline SourceSamples sample_source(const GmmSource& src, Eigen::Index count, std::uint64_t seed) {
  detail::require(count >= 1, "sample_source: count must be >= 1");
  Rng rng(seed);
  const Eigen::Index n = src.n();
  SourceSamples s{Matrix(count, n), std::vector<int>(static_cast<std::size_t>(count))};
  for (Eigen::Index r = 0; r < count; ++r) {
    const int label = rng.bernoulli(src.p1) ? 1 : 0;
    s.labels[static_cast<std::size_t>(r)] = label;
    for (Eigen::Index i = 0; i < n; ++i) s.x(r, i) = rng.normal() + (label ? src.c(i) : 0.0);
  }
  return s;
}

/// One paired draw at a time, in the same order as sample_output:
/// label, then n source normals, then m channel normals.
class OutputDrawer {
public:
  OutputDrawer(const GmmSource& src, const LinearCodec& codec, const ChannelNoise& noise,
               std::uint64_t seed)
      : src_(src), codec_(codec), noise_sd_(noise.sigma.cwiseSqrt()), rng_(seed),
        y_(codec.m()) {
    detail::check_dimensions(src, codec, noise);
  }

  int draw(Vector& x, Vector& xhat) {
    const Eigen::Index n = src_.n();
    const int label = rng_.bernoulli(src_.p1) ? 1 : 0;
    x.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = rng_.normal() + (label ? src_.c(i) : 0.0);
    y_.noalias() = codec_.enc * x;
    for (Eigen::Index j = 0; j < y_.size(); ++j) y_(j) += noise_sd_(j) * rng_.normal();
    xhat.noalias() = codec_.dec * y_;
    return label;
  }

private:
  const GmmSource& src_;
  const LinearCodec& codec_;
  Vector noise_sd_;
  Rng rng_;
  Vector y_;
};

/// Paired draws: row r of `outputs` is D(E * inputs.row(r) + N_r).
inline OutputSamples sample_output(const GmmSource& src, const LinearCodec& codec,
                                   const ChannelNoise& noise, Eigen::Index count,
                                   std::uint64_t seed) {
  detail::require(count >= 1, "sample_output: count must be >= 1");
  OutputDrawer drawer(src, codec, noise, seed);
  const Eigen::Index n = src.n();
  OutputSamples s{Matrix(count, n), Matrix(count, n),
                  std::vector<int>(static_cast<std::size_t>(count))};
  Vector x(n);
  Vector xhat(n);
  for (Eigen::Index r = 0; r < count; ++r) {
    s.labels[static_cast<std::size_t>(r)] = drawer.draw(x, xhat);
    s.inputs.row(r) = x.transpose();
    s.outputs.row(r) = xhat.transpose();
  }
  return s;
}

}  // namespace rdpc
