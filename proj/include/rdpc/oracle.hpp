#pragma once

// Independent ground truth for the closed forms: Monte Carlo distortion and
// Bayes error, exact small-instance optimal transport, and the sampled
// Wasserstein bound chain.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rdpc/errors.hpp"
#include "rdpc/metrics.hpp"
#include "rdpc/model.hpp"
#include "rdpc/rng.hpp"
#include "rdpc/spectral.hpp"

namespace rdpc {

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long count = 0;
  std::uint64_t seed = 0;
};

namespace detail {

// Welford running mean / variance.
struct RunningMoments {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double v) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  double std_error() const {
    if (n < 2) return 0.0;
    return std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  }
};

}  // namespace detail

/// Sample mean of ||Xhat - X||^2 over paired draws.
inline McEstimate mc_distortion(const GmmSource& src, const LinearCodec& codec,
                                const ChannelNoise& noise, long count, std::uint64_t seed) {
  detail::require(count >= 1000, "mc_distortion: count must be >= 1000");
  OutputDrawer drawer(src, codec, noise, seed);
  detail::RunningMoments acc;
  Vector x;
  Vector xhat;
  for (long r = 0; r < count; ++r) {
    drawer.draw(x, xhat);
    acc.push((xhat - x).squaredNorm());
  }
  return {acc.mean, acc.std_error(), count, seed};
}

/// Misclassification rate of the Bayes rule on decoded samples.
///
/// Both output components share cov, so their densities live on the same
/// affine range and the normalizers cancel: the rule compares the projected
/// Mahalanobis terms plus log priors. Ties go to class 1.
inline McEstimate mc_bayes_error(const GmmSource& src, const LinearCodec& codec,
                                 const ChannelNoise& noise, long count, std::uint64_t seed) {
  detail::require(count >= 10000, "mc_bayes_error: count must be >= 1e4");
  const OutputGmm out = output_distribution(src, codec, noise);
  const SpectralDecomp cov = eig_sym(out.cov);
  const Matrix prec = gen_inverse(cov);
  const Vector& mu1 = out.mean1;
  const Vector off_range = mu1 - prec * (cov.reconstruct() * mu1);
  if (off_range.norm() > 1e-8 * std::max(1.0, mu1.norm()))
    throw PreconditionError(
        "mc_bayes_error: class means differ outside the shared covariance range; "
        "the output components have disjoint supports");

  // log p1 f1(x) - log p0 f0(x) = w.x - b, with w = prec mu1.
  const Vector w = prec * mu1;
  const double b = 0.5 * mu1.dot(w) - std::log(src.p1 / src.p0);

  OutputDrawer drawer(src, codec, noise, seed);
  detail::RunningMoments acc;
  Vector x;
  Vector xhat;
  for (long r = 0; r < count; ++r) {
    const int label = drawer.draw(x, xhat);
    const int decided = w.dot(xhat) - b >= 0.0 ? 1 : 0;
    acc.push(decided != label ? 1.0 : 0.0);
  }
  return {acc.mean, acc.std_error(), count, seed};
}

// ----------------------------------------------------------- transport

struct Assignment {
  double cost = 0.0;           // summed over matched pairs
  std::vector<int> match;      // row i -> column match[i]
};

/// Exact minimum-cost perfect matching on a square cost matrix
/// (Hungarian method with potentials, O(k^3)).
inline Assignment min_cost_assignment(const Matrix& cost) {
  detail::require(cost.rows() == cost.cols(), "min_cost_assignment: cost must be square");
  detail::require(cost.allFinite(), "min_cost_assignment: non-finite cost");
  const int k = static_cast<int>(cost.rows());
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // 1-based arrays; column 0 is the virtual start.
  std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0), minv(k + 1);
  std::vector<int> owner(k + 1, 0), way(k + 1, 0);
  std::vector<char> used(k + 1);
  for (int i = 1; i <= k; ++i) {
    owner[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = owner[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= k; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= k; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const int j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment a;
  a.match.assign(static_cast<std::size_t>(k), -1);
  for (int j = 1; j <= k; ++j)
    if (owner[j] > 0) a.match[static_cast<std::size_t>(owner[j] - 1)] = j - 1;
  for (int i = 0; i < k; ++i) a.cost += cost(i, a.match[static_cast<std::size_t>(i)]);
  return a;
}

inline constexpr Eigen::Index kMaxTransportPoints = 512;

namespace detail {

inline Matrix pairwise_distance(const Matrix& a, const Matrix& b, bool squared) {
  require(a.rows() == b.rows(), "discrete transport: sample counts differ (" +
                                    std::to_string(a.rows()) + " vs " +
                                    std::to_string(b.rows()) + ")");
  require(a.cols() == b.cols(), "discrete transport: sample dimensions differ");
  require(a.rows() >= 1 && a.rows() <= kMaxTransportPoints,
          "discrete transport: need 1 <= k <= 512 points");
  const Eigen::Index k = a.rows();
  Matrix c(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      const double d2 = (a.row(i) - b.row(j)).squaredNorm();
      c(i, j) = squared ? d2 : std::sqrt(d2);
    }
  return c;
}

}  // namespace detail

/// Exact W1 between two uniform empirical measures of k points each (rows).
inline double discrete_w1(const Matrix& a, const Matrix& b) {
  const Matrix c = detail::pairwise_distance(a, b, false);
  return min_cost_assignment(c).cost / static_cast<double>(a.rows());
}

inline double discrete_w2(const Matrix& a, const Matrix& b) {
  const Matrix c = detail::pairwise_distance(a, b, true);
  return std::sqrt(std::max(0.0, min_cost_assignment(c).cost / static_cast<double>(a.rows())));
}

/// k midpoint quantiles of N(mean, sd^2), as a k x 1 matrix.
inline Matrix normal_quantile_grid(double mean, double sd, Eigen::Index k) {
  detail::require(k >= 1, "normal_quantile_grid: k must be >= 1");
  detail::require(sd >= 0.0 && std::isfinite(sd) && std::isfinite(mean),
                  "normal_quantile_grid: need finite mean and sd >= 0");
  Matrix g(k, 1);
  if (sd == 0.0) {
    g.setConstant(mean);
    return g;
  }
  const boost::math::normal_distribution<double> dist(mean, sd);
  for (Eigen::Index i = 0; i < k; ++i)
    g(i, 0) = boost::math::quantile(dist, (static_cast<double>(i) + 0.5) / static_cast<double>(k));
  return g;
}

/// W2 between N(mu_a, cov_a) and N(mu_b, cov_b) for commuting covariances,
/// by exact transport between quantile grids in each shared eigen-coordinate.
inline double w2_quantile_grid(const Vector& mu_a, const Matrix& cov_a, const Vector& mu_b,
                               const Matrix& cov_b, Eigen::Index k) {
  detail::require(mu_a.size() == mu_b.size() && cov_a.rows() == mu_a.size() &&
                      cov_b.rows() == mu_a.size(),
                  "w2_quantile_grid: dimension mismatch");
  // Eigenvectors of a generic combination diagonalize both.
  const SpectralDecomp basis = eig_sym(cov_a + 0.5 * cov_b);
  const Matrix& q = basis.q;
  const Vector ma = q.transpose() * mu_a;
  const Vector mb = q.transpose() * mu_b;
  const Vector va = (q.transpose() * cov_a * q).diagonal();
  const Vector vb = (q.transpose() * cov_b * q).diagonal();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < mu_a.size(); ++j) {
    const double w = discrete_w2(normal_quantile_grid(ma(j), std::sqrt(std::max(va(j), 0.0)), k),
                                 normal_quantile_grid(mb(j), std::sqrt(std::max(vb(j), 0.0)), k));
    acc += w * w;
  }
  return std::sqrt(acc);
}

// ------------------------------------------------------ bound chain

struct ChainLink {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double std_error = 0.0;  // bootstrap SE of lhs - rhs
  double tolerance = 0.0;  // pass iff lhs <= rhs + tolerance
  bool pass = false;
};

struct ChainReport {
  long k = 0;
  int resamples = 0;
  std::uint64_t seed = 0;
  double bound_scale = 1.0;
  std::vector<ChainLink> links;

  bool pass() const {
    for (const auto& l : links)
      if (!l.pass) return false;
    return !links.empty();
  }
};

namespace detail {

struct ChainSides {
  double mixture = 0.0;
  double class_w1[2] = {0.0, 0.0};
};

inline Matrix take_rows(const Matrix& a, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = a.row(rows[r]);
  return out;
}

inline ChainSides chain_sides(const OutputSamples& s, const std::vector<Eigen::Index>& rows) {
  ChainSides out;
  out.mixture = discrete_w1(take_rows(s.inputs, rows), take_rows(s.outputs, rows));
  for (int l = 0; l < 2; ++l) {
    std::vector<Eigen::Index> sub;
    for (Eigen::Index r : rows)
      if (s.labels[static_cast<std::size_t>(r)] == l) sub.push_back(r);
    out.class_w1[l] = sub.empty() ? 0.0 : discrete_w1(take_rows(s.inputs, sub), take_rows(s.outputs, sub));
  }
  return out;
}

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Checks, on k paired draws (X, Xhat) with bootstrap SEs:
///   (i)   W1(mixture) <= p0 W1(class 0) + p1 W1(class 1)
///   (ii)  W1(class l) <= closed-form class-l W2, l = 0, 1
///   (iii) W1(mixture) <= w1_mixture_bound
/// each up to 3 SE, and the closed-form class W2 against quantile-grid
/// transport within 1e-2. `bound_scale` multiplies the bound in (iii).
inline ChainReport bound_chain_check(const GmmSource& src, const LinearCodec& codec,
                                     const ChannelNoise& noise, Eigen::Index k, int resamples,
                                     std::uint64_t seed, double bound_scale = 1.0) {
  detail::require(k >= 2 && k <= kMaxTransportPoints, "bound_chain_check: need 2 <= k <= 512");
  detail::require(resamples >= 2, "bound_chain_check: need at least 2 resamples");
  const OutputSamples s = sample_output(src, codec, noise, k, derive_seed(seed, 1));
  const OutputGmm out = output_distribution(src, codec, noise);
  const Matrix eye = Matrix::Identity(src.n(), src.n());

  const double w2_class[2] = {w2_gaussian_commuting(out.mean0, eye, Vector::Zero(src.n()), out.cov),
                              w2_gaussian_commuting(src.c, eye, out.mean1, out.cov)};
  const double bound = bound_scale * w1_mixture_bound(src, codec, noise);

  std::vector<Eigen::Index> all(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) all[static_cast<std::size_t>(i)] = i;
  const detail::ChainSides point = detail::chain_sides(s, all);

  // Paired bootstrap: every link's difference is recomputed on the same
  // resampled rows.
  std::vector<double> d_sub, d_cls0, d_cls1, d_mix;
  Rng rng(derive_seed(seed, 2));
  for (int b = 0; b < resamples; ++b) {
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(k));
    for (auto& r : rows) r = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(k)));
    const detail::ChainSides rep = detail::chain_sides(s, rows);
    d_sub.push_back(rep.mixture - src.p0 * rep.class_w1[0] - src.p1 * rep.class_w1[1]);
    d_cls0.push_back(rep.class_w1[0]);
    d_cls1.push_back(rep.class_w1[1]);
    d_mix.push_back(rep.mixture);
  }

  ChainReport rep{k, resamples, seed, bound_scale, {}};
  auto add = [&](std::string name, double lhs, double rhs, double se, double tol) {
    rep.links.push_back({std::move(name), lhs, rhs, se, tol, lhs <= rhs + tol});
  };
  double se = detail::sample_sd(d_sub);
  add("mixture_subadditivity", point.mixture,
      src.p0 * point.class_w1[0] + src.p1 * point.class_w1[1], se, 3.0 * se);
  se = detail::sample_sd(d_cls0);
  add("class0_w1_le_w2", point.class_w1[0], w2_class[0], se, 3.0 * se);
  se = detail::sample_sd(d_cls1);
  add("class1_w1_le_w2", point.class_w1[1], w2_class[1], se, 3.0 * se);
  se = detail::sample_sd(d_mix);
  add("mixture_w1_le_bound", point.mixture, bound, se, 3.0 * se);

  // Closed form against quantile-grid transport, two-sided.
  const double grid0 = w2_quantile_grid(out.mean0, eye, Vector::Zero(src.n()), out.cov, k);
  const double grid1 = w2_quantile_grid(src.c, eye, out.mean1, out.cov, k);
  const double gap = std::max(std::abs(grid0 - w2_class[0]), std::abs(grid1 - w2_class[1]));
  add("closed_form_w2_vs_grid", gap, 0.0, 0.0, 1e-2);
  return rep;
}

}  // namespace rdpc
