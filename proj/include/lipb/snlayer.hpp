#pragma once

#include <cstddef>
#include <utility>

#include "lipb/numkit.hpp"
#include "lipb/rng.hpp"

namespace lipb {

struct LayerOptions {
  int sn_iters = 1;
  double eps_sn = 1e-12;
  double prior_std = 0.01;
  bool spectral_norm = true;
  // When false the layer is deterministic: epsilon is fixed at zero.
  bool stochastic = true;
};

/// Bias-free linear layer with a fully factorized Gaussian posterior over its
/// weights, N(mu_ij, exp(rho_ij)^2). Each forward pass samples one weight
/// matrix and divides it by a power-iteration estimate of its largest
/// singular value, so mean and standard deviation are rescaled together.
struct VariationalLinear {
  Matrix mu;        // out x in
  Matrix rho;       // out x in, log standard deviation
  Vector u_buffer;  // persistent left singular vector estimate, length out
  LayerOptions options;

  std::size_t out_dim() const { return static_cast<std::size_t>(mu.rows()); }
  std::size_t in_dim() const { return static_cast<std::size_t>(mu.cols()); }

  // mu ~ N(0, 1/in), rho = ln(prior_std), u ~ normalized N(0, I).
  static VariationalLinear create(std::size_t out, std::size_t in, const RngStream& stream,
                                  const LayerOptions& options = {});
};

struct ForwardCache {
  Matrix input;       // batch x in; empty when the pass was not recorded
  Matrix eps;         // out x in
  Matrix weight;      // raw sample W = mu + exp(rho) * eps
  Matrix normalized;  // W / divisor
  double sigma_hat = 1.0;
  double divisor = 1.0;  // sigma_hat + eps_sn, or 1 without spectral normalization
  bool recorded = false;
};

// Draws epsilon from `stream` and runs forward_with_noise.
std::pair<Matrix, ForwardCache> sample_forward(VariationalLinear& layer, const Matrix& z,
                                               const RngStream& stream, bool train_mode);

// Forward pass with a caller-supplied epsilon. Refines layer.u_buffer. With
// train_mode false the input is not retained and the cache cannot be used
// for backward.
std::pair<Matrix, ForwardCache> forward_with_noise(VariationalLinear& layer, const Matrix& z,
                                                   Matrix eps, bool train_mode);

// Closed-form KL(q || N(0, s0^2)) summed over all weights.
double kl_to_prior(const VariationalLinear& layer);

struct LayerGrads {
  Matrix input;
  Matrix mu;
  Matrix rho;
};

// Gradients of a loss with respect to input and variational parameters given
// dL/dA. sigma_hat is held constant.
LayerGrads backward(const VariationalLinear& layer, const ForwardCache& cache,
                    const Matrix& grad_a);

// Gradient of kl_to_prior with respect to (mu, rho).
std::pair<Matrix, Matrix> kl_gradient(const VariationalLinear& layer);

}  // namespace lipb
