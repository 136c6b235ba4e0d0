#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rdpc/errors.hpp"
#include "rdpc/oracle.hpp"
#include "rdpc/verify.hpp"
#include "test_support.hpp"

using namespace rdpc;
using namespace rdpc::testing;

namespace {

const ChainLink* link(const ChainReport& r, const std::string& name) {
  for (const auto& l : r.links)
    if (l.name == name) return &l;
  return nullptr;
}

}  // namespace

// ----------------------------------------------------------- Monte Carlo

TEST(McDistortion, PerfectReconstructionIsExactlyZero) {
  const GmmSource src = make_source(vec({1.0, 2.0}));
  const McEstimate e = mc_distortion(src, identity_codec(2), {Vector::Zero(2)}, 5000, 1);
  EXPECT_EQ(e.value, 0.0);
  EXPECT_EQ(e.std_error, 0.0);
  EXPECT_EQ(e.count, 5000);
  EXPECT_EQ(e.seed, 1u);
}

TEST(McDistortion, ZeroDecoderMatchesSourceEnergy) {
  const GmmSource src = make_source(vec({1.0, -2.0, 0.5}), 0.35);
  const LinearCodec k{Matrix::Ones(2, 3), Matrix::Zero(3, 2)};
  const McEstimate e = mc_distortion(src, k, {Vector::Ones(2)}, 100000, 2);
  const double target = 3.0 * 0.35 + (3.0 + src.c.squaredNorm()) * 0.65;
  EXPECT_LE(std::abs(e.value - target), 4.0 * e.std_error);
}

TEST(McDistortion, RejectsSmallCounts) {
  const GmmSource src = make_source(vec({1.0}));
  EXPECT_THROW(mc_distortion(src, identity_codec(1), {Vector::Zero(1)}, 999, 1), PreconditionError);
}

TEST(McEstimators, StandardErrorHalvesWithDoubledCount) {
  Rng rng(51);
  const Instance inst = random_instance(rng, 4, 2);
  const double d_ratio = mc_distortion(inst.src, inst.codec, inst.noise, 100000, 3).std_error /
                         mc_distortion(inst.src, inst.codec, inst.noise, 50000, 3).std_error;
  EXPECT_GE(d_ratio, 0.6);
  EXPECT_LE(d_ratio, 0.85);
  const double b_ratio = mc_bayes_error(inst.src, inst.codec, inst.noise, 200000, 4).std_error /
                         mc_bayes_error(inst.src, inst.codec, inst.noise, 100000, 4).std_error;
  EXPECT_GE(b_ratio, 0.6);
  EXPECT_LE(b_ratio, 0.85);
}

TEST(McBayesError, IndistinguishableClasses) {
  const GmmSource src = make_source(vec({1.0, 0.0, 0.0}));
  const LinearCodec blind{vec({0.0, 1.0, 0.0}).transpose(), vec({1.0, 1.0, 0.0})};
  const McEstimate e = mc_bayes_error(src, blind, {vec({0.5})}, 100000, 5);
  EXPECT_LE(std::abs(e.value - 0.5), 4.0 * e.std_error);
}

TEST(McBayesError, WidelySeparatedClasses) {
  const GmmSource src = make_source(vec({40.0, 0.0}));
  const McEstimate e = mc_bayes_error(src, identity_codec(2), {Vector::Constant(2, 0.1)}, 100000, 6);
  EXPECT_LE(e.value, 4.0 * std::max(e.std_error, 1.0 / 100000.0));
}

TEST(McBayesError, BelowBhattacharyyaBound) {
  Rng rng(52);
  for (int k = 0; k < 5; ++k) {
    const Instance inst = random_instance(rng, 4, 1 + static_cast<Eigen::Index>(rng.index(3)), 1.0);
    const McEstimate e = mc_bayes_error(inst.src, inst.codec, inst.noise, 200000, rng.index(1u << 30));
    EXPECT_LE(e.value, bhattacharyya_bound(inst.src, inst.codec, inst.noise) + 3.0 * e.std_error);
  }
}

TEST(McBayesError, RejectsSmallCounts) {
  const GmmSource src = make_source(vec({1.0}));
  EXPECT_THROW(mc_bayes_error(src, identity_codec(1), {vec({1.0})}, 9999, 1), PreconditionError);
}

TEST(McBayesError, InvariantUnderNoisePreservingMixing) {
  Rng rng(53);
  const Instance inst = random_instance(rng, 4, 2, 1.0);
  const LinearCodec moved = reparameterize(inst.codec, noise_preserving_mixing(rng, inst.noise));
  const McEstimate a = mc_bayes_error(inst.src, inst.codec, inst.noise, 200000, 7);
  const McEstimate b = mc_bayes_error(inst.src, moved, inst.noise, 200000, 8);
  EXPECT_LE(std::abs(a.value - b.value), 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST(McBayesError, InvariantUnderGeneralMixingWithoutNoise) {
  Rng rng(54);
  const Instance inst = random_instance(rng, 4, 2, 1.0);
  const ChannelNoise zero{Vector::Zero(2)};
  const LinearCodec moved = reparameterize(inst.codec, random_mixing(rng, 2));
  const McEstimate a = mc_bayes_error(inst.src, inst.codec, zero, 200000, 9);
  const McEstimate b = mc_bayes_error(inst.src, moved, zero, 200000, 10);
  EXPECT_LE(std::abs(a.value - b.value), 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST(McBayesError, GeneralMixingWithNoiseChangesError) {
  const GmmSource src = make_source(vec({2.0, 0.0, 0.0}));
  const LinearCodec k{Matrix::Identity(2, 3), Matrix::Identity(3, 2)};
  const ChannelNoise noise{vec({1.0, 1.0})};
  const LinearCodec moved = reparameterize(k, diag({10.0, 1.0}));
  const McEstimate a = mc_bayes_error(src, k, noise, 200000, 11);
  const McEstimate b = mc_bayes_error(src, moved, noise, 200000, 12);
  EXPECT_GT(a.value - b.value, 10.0 * std::hypot(a.std_error, b.std_error));
}

// ----------------------------------------------------------- transport

TEST(Assignment, MatchesBruteForceOnSmallProblems) {
  Rng rng(55);
  for (int k = 0; k < 30; ++k) {
    const Eigen::Index size = 1 + static_cast<Eigen::Index>(rng.index(6));
    const Matrix cost = gaussian(rng, size, size).cwiseAbs();
    std::vector<int> perm(static_cast<std::size_t>(size));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (Eigen::Index i = 0; i < size; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const Assignment a = min_cost_assignment(cost);
    EXPECT_NEAR(a.cost, best, 1e-12);
    std::vector<int> seen = a.match;
    std::sort(seen.begin(), seen.end());
    for (Eigen::Index i = 0; i < size; ++i) EXPECT_EQ(seen[static_cast<std::size_t>(i)], i);
  }
}

TEST(DiscreteTransport, Examples) {
  Rng rng(56);
  const Matrix a = gaussian(rng, 50, 2);
  EXPECT_NEAR(discrete_w1(a, a), 0.0, 1e-15);
  EXPECT_NEAR(discrete_w2(a, a), 0.0, 1e-15);
  Matrix p(1, 2), q(1, 2);
  p << 0.0, 0.0;
  q << 3.0, 4.0;
  EXPECT_NEAR(discrete_w1(p, q), 5.0, 1e-15);
  EXPECT_NEAR(discrete_w2(p, q), 5.0, 1e-15);
}

TEST(DiscreteTransport, Preconditions) {
  EXPECT_THROW(discrete_w1(Matrix::Zero(3, 1), Matrix::Zero(4, 1)), PreconditionError);
  EXPECT_THROW(discrete_w1(Matrix::Zero(3, 1), Matrix::Zero(3, 2)), PreconditionError);
  EXPECT_THROW(discrete_w2(Matrix::Zero(513, 1), Matrix::Zero(513, 1)), PreconditionError);
}

TEST(DiscreteTransport, MetricAxiomsAndJensen) {
  Rng rng(57);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng.index(40));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.index(2));
    const Matrix a = gaussian(rng, n, d);
    const Matrix b = gaussian(rng, n, d, 2.0);
    const Matrix c = gaussian(rng, n, d, 0.5).array() + 1.0;
    for (auto w : {discrete_w1, discrete_w2}) {
      EXPECT_NEAR(w(a, b), w(b, a), 1e-12);
      EXPECT_LE(w(a, c), w(a, b) + w(b, c) + 1e-9);
    }
    EXPECT_LE(discrete_w1(a, b), discrete_w2(a, b) + 1e-12);
    EXPECT_LE(discrete_w1(a, c), discrete_w2(a, c) + 1e-12);
  }
}

TEST(QuantileGrid, MidpointQuantiles) {
  const Matrix g = normal_quantile_grid(1.0, 2.0, 4);
  EXPECT_NEAR(g(0, 0) + g(3, 0), 2.0, 1e-12);
  EXPECT_LT(g(0, 0), g(1, 0));
  EXPECT_EQ(normal_quantile_grid(3.0, 0.0, 5), Matrix::Constant(5, 1, 3.0));
  EXPECT_THROW(normal_quantile_grid(0.0, -1.0, 5), PreconditionError);
}

TEST(QuantileGrid, OneDimensionalW2) {
  const Matrix one = Matrix::Constant(1, 1, 1.0);
  const Vector z = Vector::Zero(1);
  EXPECT_NEAR(discrete_w2(normal_quantile_grid(0, 1, 512), normal_quantile_grid(3, 1, 512)), 3.0, 1e-2);
  EXPECT_NEAR(discrete_w2(normal_quantile_grid(0, 1, 512), normal_quantile_grid(0, 2, 512)), 1.0, 1e-2);
  EXPECT_NEAR(discrete_w2(normal_quantile_grid(0, 1, 512), normal_quantile_grid(0, 1, 512)), 0.0, 1e-15);
  EXPECT_NEAR(w2_quantile_grid(z, one, z, 4.0 * one, 512), 1.0, 1e-2);
}

TEST(QuantileGrid, AgreesWithClosedFormInTwoDimensions) {
  Rng rng(58);
  for (int k = 0; k < 5; ++k) {
    const Matrix q = orthogonal(rng, 2);
    const Matrix a = q * diag({rng.uniform(0.2, 3), rng.uniform(0.2, 3)}) * q.transpose();
    const Matrix b = q * diag({rng.uniform(0.2, 3), 0.0}) * q.transpose();
    const Matrix sa = 0.5 * (a + a.transpose()), sb = 0.5 * (b + b.transpose());
    const Vector ma = gaussian(rng, 2, 1), mb = gaussian(rng, 2, 1);
    EXPECT_NEAR(w2_quantile_grid(ma, sa, mb, sb, 512), w2_gaussian_commuting(ma, sa, mb, sb), 1e-2);
  }
}

// ------------------------------------------------------------ bound chain

TEST(BoundChain, IdentityCodecWithoutNoiseIsZero) {
  const GmmSource src = make_source(vec({1.5, -0.5}));
  const ChainReport r = bound_chain_check(src, identity_codec(2), {Vector::Zero(2)}, 128, 10, 1);
  EXPECT_TRUE(r.pass());
  for (const auto& l : r.links) {
    EXPECT_NEAR(l.lhs, 0.0, 1e-12) << l.name;
    EXPECT_NEAR(l.rhs, 0.0, 1e-12) << l.name;
  }
}

TEST(BoundChain, OneDimensionalInstancePasses) {
  Rng rng(59);
  const Instance inst = random_instance(rng, 1, 1);
  const ChainReport r = bound_chain_check(inst.src, inst.codec, inst.noise, 512, 20, 2);
  EXPECT_TRUE(r.pass());
  EXPECT_EQ(r.links.size(), 5u);
}

TEST(BoundChain, HalvedBoundFailsTheLastLink) {
  const GmmSource src = make_source(vec({0.1}));
  const LinearCodec k = identity_codec(1);
  const ChannelNoise noise{vec({3.0})};
  const ChainReport honest = bound_chain_check(src, k, noise, 512, 20, 3);
  const ChainReport halved = bound_chain_check(src, k, noise, 512, 20, 3, 0.5);
  EXPECT_TRUE(honest.pass());
  ASSERT_NE(link(halved, "mixture_w1_le_bound"), nullptr);
  EXPECT_FALSE(link(halved, "mixture_w1_le_bound")->pass);
  EXPECT_TRUE(link(halved, "mixture_subadditivity")->pass);
}

TEST(BoundChain, Deterministic) {
  Rng rng(60);
  const Instance inst = random_instance(rng, 2, 1);
  const ChainReport a = bound_chain_check(inst.src, inst.codec, inst.noise, 64, 5, 4);
  const ChainReport b = bound_chain_check(inst.src, inst.codec, inst.noise, 64, 5, 4);
  ASSERT_EQ(a.links.size(), b.links.size());
  for (std::size_t i = 0; i < a.links.size(); ++i) {
    EXPECT_EQ(a.links[i].lhs, b.links[i].lhs);
    EXPECT_EQ(a.links[i].std_error, b.links[i].std_error);
  }
}

TEST(BoundChain, Preconditions) {
  const GmmSource src = make_source(vec({1.0}));
  EXPECT_THROW(bound_chain_check(src, identity_codec(1), {vec({1.0})}, 1, 10, 1), PreconditionError);
  EXPECT_THROW(bound_chain_check(src, identity_codec(1), {vec({1.0})}, 600, 10, 1), PreconditionError);
  EXPECT_THROW(bound_chain_check(src, identity_codec(1), {vec({1.0})}, 64, 1, 1), PreconditionError);
}
