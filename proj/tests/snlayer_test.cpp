#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "lipb/numkit.hpp"
#include "lipb/snlayer.hpp"

using lipb::Matrix;
using lipb::RngStream;
using lipb::VariationalLinear;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Reference forward pass with a fixed divisor: A = Z (mu + e^rho * eps)^T / divisor.
Matrix reference_forward(const Matrix& mu, const Matrix& rho, const Matrix& eps, double divisor,
                         const Matrix& z) {
  Matrix w = mu.array() + rho.array().exp() * eps.array();
  return z * w.transpose() / divisor;
}

// Reference KL of one weight by Simpson quadrature of q log(q / p).
double kl_quadrature(double mu, double sigma, double s0) {
  const double lo = mu - 14.0 * sigma, hi = mu + 14.0 * sigma;
  const int n = 20000;
  const double h = (hi - lo) / n;
  auto f = [&](double w) {
    const double lq = -0.5 * std::pow((w - mu) / sigma, 2) - std::log(sigma * std::sqrt(2 * M_PI));
    const double lp = -0.5 * std::pow(w / s0, 2) - std::log(s0 * std::sqrt(2 * M_PI));
    return std::exp(lq) * (lq - lp);
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * f(lo + i * h);
  return acc * h / 3.0;
}

VariationalLinear random_layer(std::size_t out, std::size_t in, std::uint64_t seed) {
  VariationalLinear layer = VariationalLinear::create(out, in, RngStream(seed).with_purpose("init"));
  layer.rho = -1.5 + 0.5 * lipb::gaussian_sample(RngStream(seed).with_purpose("rho"), out, in).array();
  return layer;
}

}  // namespace

TEST(VariationalLinear, CreateShapesAndPrior) {
  auto layer = VariationalLinear::create(4, 7, RngStream(1));
  EXPECT_EQ(layer.out_dim(), 4u);
  EXPECT_EQ(layer.in_dim(), 7u);
  EXPECT_NEAR(layer.u_buffer.norm(), 1.0, 1e-12);
  EXPECT_TRUE((layer.rho.array() == std::log(0.01)).all());
}

TEST(VariationalLinear, IdentityWeightsPassInputThrough) {
  VariationalLinear layer = VariationalLinear::create(3, 3, RngStream(2));
  layer.mu = Matrix::Identity(3, 3);
  layer.options.sn_iters = 50;
  Matrix z = lipb::gaussian_sample(RngStream(2).with_purpose("z"), 5, 3);
  auto [a, cache] = lipb::forward_with_noise(layer, z, Matrix::Zero(3, 3), false);
  EXPECT_NEAR(cache.sigma_hat, 1.0, 1e-12);
  EXPECT_LT((a - z).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(VariationalLinear, NormalizedWeightWithinUnitBound) {
  VariationalLinear layer = random_layer(6, 9, 3);
  layer.options.sn_iters = 50;
  Matrix z = Matrix::Ones(2, 9);
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto [a, cache] = lipb::sample_forward(layer, z, RngStream(3).with_step(s), false);
    EXPECT_LE(lipb::svd_max_singular(cache.normalized), 1.0 + 1e-3);
  }
}

TEST(VariationalLinear, JointRescalingLeavesWeightUnchanged) {
  VariationalLinear a = random_layer(5, 4, 4);
  a.options.sn_iters = 50;
  VariationalLinear b = a;
  const double c = 3.7;
  b.mu *= c;
  b.rho.array() += std::log(c);
  Matrix eps = lipb::gaussian_sample(RngStream(4).with_purpose("eps"), 5, 4);
  Matrix z = Matrix::Ones(1, 4);
  auto [ya, ca] = lipb::forward_with_noise(a, z, eps, false);
  auto [yb, cb] = lipb::forward_with_noise(b, z, eps, false);
  EXPECT_LT((ca.normalized - cb.normalized).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(VariationalLinear, DisabledNormalizationUsesRawWeight) {
  VariationalLinear layer = random_layer(3, 3, 5);
  layer.options.spectral_norm = false;
  Matrix eps = lipb::gaussian_sample(RngStream(5).with_purpose("eps"), 3, 3);
  Matrix z = lipb::gaussian_sample(RngStream(5).with_purpose("z"), 4, 3);
  auto [a, cache] = lipb::forward_with_noise(layer, z, eps, false);
  EXPECT_EQ(cache.divisor, 1.0);
  EXPECT_LT((a - reference_forward(layer.mu, layer.rho, eps, 1.0, z)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KlToPrior, PosteriorEqualToPriorIsZero) {
  VariationalLinear layer = VariationalLinear::create(4, 4, RngStream(6));
  layer.mu.setZero();
  layer.rho.setConstant(std::log(0.01));
  EXPECT_NEAR(lipb::kl_to_prior(layer), 0.0, 1e-12);
}

TEST(KlToPrior, SingleWeightHandValue) {
  VariationalLinear layer = VariationalLinear::create(1, 1, RngStream(7));
  layer.mu(0, 0) = 0.01;
  layer.rho(0, 0) = std::log(0.01);
  EXPECT_NEAR(lipb::kl_to_prior(layer), 0.5, 1e-12);
}

TEST(KlToPrior, MatchesQuadrature) {
  VariationalLinear layer = VariationalLinear::create(1, 3, RngStream(8));
  layer.mu << 0.004, -0.02, 0.011;
  layer.rho << std::log(0.006), std::log(0.015), std::log(0.01);
  double expected = 0.0;
  for (int j = 0; j < 3; ++j) {
    expected += kl_quadrature(layer.mu(0, j), std::exp(layer.rho(0, j)), 0.01);
  }
  EXPECT_NEAR(lipb::kl_to_prior(layer), expected, 1e-6);
}

TEST(KlToPrior, GradientMatchesFiniteDifferences) {
  VariationalLinear layer = random_layer(2, 3, 9);
  layer.mu *= 0.01;
  layer.rho.array() -= 3.0;
  auto [gm, gr] = lipb::kl_gradient(layer);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < layer.mu.size(); ++i) {
    VariationalLinear p = layer, m = layer;
    p.mu.data()[i] += h;
    m.mu.data()[i] -= h;
    EXPECT_LT(rel_err(gm.data()[i], (lipb::kl_to_prior(p) - lipb::kl_to_prior(m)) / (2 * h)), 1e-5);
    p = layer;
    m = layer;
    p.rho.data()[i] += h;
    m.rho.data()[i] -= h;
    EXPECT_LT(rel_err(gr.data()[i], (lipb::kl_to_prior(p) - lipb::kl_to_prior(m)) / (2 * h)), 1e-5);
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  VariationalLinear layer = random_layer(3, 4, 10);
  Matrix z = Matrix::Ones(2, 4);
  auto [a, cache] = lipb::sample_forward(layer, z, RngStream(10), true);
  auto g = lipb::backward(layer, cache, Matrix::Zero(2, 3));
  EXPECT_TRUE(g.mu.isZero(0.0));
  EXPECT_TRUE(g.rho.isZero(0.0));
  EXPECT_TRUE(g.input.isZero(0.0));
}

TEST(Backward, ZeroNoiseReducesToLinearLayer) {
  VariationalLinear layer = random_layer(3, 4, 11);
  Matrix z = lipb::gaussian_sample(RngStream(11).with_purpose("z"), 5, 4);
  Matrix g = lipb::gaussian_sample(RngStream(11).with_purpose("g"), 5, 3);
  auto [a, cache] = lipb::forward_with_noise(layer, z, Matrix::Zero(3, 4), true);
  auto grads = lipb::backward(layer, cache, g);
  Matrix expected = g.transpose() * z / cache.divisor;
  EXPECT_LT((grads.mu - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(grads.rho.isZero(0.0));
}

TEST(Backward, MatchesFiniteDifferences) {
  VariationalLinear layer = random_layer(6, 8, 12);
  Matrix z = lipb::gaussian_sample(RngStream(12).with_purpose("z"), 4, 8);
  Matrix g = lipb::gaussian_sample(RngStream(12).with_purpose("g"), 4, 6);
  auto [a, cache] = lipb::sample_forward(layer, z, RngStream(12).with_purpose("eps"), true);
  auto grads = lipb::backward(layer, cache, g);

  // Linear probe loss L = sum(g .* A) with epsilon and the divisor frozen.
  const Matrix eps = cache.eps;
  const double div = cache.divisor;
  auto loss = [&](const Matrix& mu, const Matrix& rho, const Matrix& zz) {
    return (g.array() * reference_forward(mu, rho, eps, div, zz).array()).sum();
  };
  ASSERT_LT((a - reference_forward(layer.mu, layer.rho, eps, div, z)).cwiseAbs().maxCoeff(), 1e-12);

  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < layer.mu.size(); ++i) {
    Matrix mp = layer.mu, mm = layer.mu;
    mp.data()[i] += h;
    mm.data()[i] -= h;
    worst = std::max(worst, rel_err(grads.mu.data()[i],
                                    (loss(mp, layer.rho, z) - loss(mm, layer.rho, z)) / (2 * h)));
    Matrix rp = layer.rho, rm = layer.rho;
    rp.data()[i] += h;
    rm.data()[i] -= h;
    worst = std::max(worst, rel_err(grads.rho.data()[i],
                                    (loss(layer.mu, rp, z) - loss(layer.mu, rm, z)) / (2 * h)));
  }
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Matrix zp = z, zm = z;
    zp.data()[i] += h;
    zm.data()[i] -= h;
    worst = std::max(worst, rel_err(grads.input.data()[i],
                                    (loss(layer.mu, layer.rho, zp) - loss(layer.mu, layer.rho, zm)) /
                                        (2 * h)));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Backward, UnrecordedPassIsRejected) {
  VariationalLinear layer = random_layer(2, 2, 13);
  auto [a, cache] = lipb::sample_forward(layer, Matrix::Ones(1, 2), RngStream(13), false);
  EXPECT_ANY_THROW(lipb::backward(layer, cache, Matrix::Ones(1, 2)));
}
