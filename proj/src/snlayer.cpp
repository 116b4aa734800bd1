#include "lipb/snlayer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lipb/error.hpp"

namespace lipb {

VariationalLinear VariationalLinear::create(std::size_t out, std::size_t in,
                                            const RngStream& stream,
                                            const LayerOptions& options) {
  if (out == 0 || in == 0) {
    throw std::invalid_argument("VariationalLinear: dimensions must be positive");
  }
  if (options.prior_std <= 0.0 || options.sn_iters < 1) {
    throw std::invalid_argument("VariationalLinear: prior_std and sn_iters must be positive");
  }
  VariationalLinear layer;
  layer.options = options;
  layer.mu = gaussian_sample(stream.with_purpose("mu-init"), out, in) /
             std::sqrt(static_cast<double>(in));
  layer.rho = Matrix::Constant(out, in, std::log(options.prior_std));
  layer.u_buffer = gaussian_sample(stream.with_purpose("u-init"), out, 1).col(0);
  layer.u_buffer.normalize();
  return layer;
}

std::pair<Matrix, ForwardCache> sample_forward(VariationalLinear& layer, const Matrix& z,
                                               const RngStream& stream, bool train_mode) {
  Matrix eps = layer.options.stochastic
                   ? gaussian_sample(stream, layer.out_dim(), layer.in_dim())
                   : Matrix::Zero(layer.mu.rows(), layer.mu.cols());
  return forward_with_noise(layer, z, std::move(eps), train_mode);
}

std::pair<Matrix, ForwardCache> forward_with_noise(VariationalLinear& layer, const Matrix& z,
                                                   Matrix eps, bool train_mode) {
  if (static_cast<std::size_t>(z.cols()) != layer.in_dim()) {
    throw std::invalid_argument("sample_forward: input width does not match layer");
  }
  if (eps.rows() != layer.mu.rows() || eps.cols() != layer.mu.cols()) {
    throw std::invalid_argument("sample_forward: epsilon shape does not match layer");
  }

  ForwardCache cache;
  cache.weight = layer.mu + (layer.rho.array().exp() * eps.array()).matrix();
  cache.eps = std::move(eps);

  if (layer.options.spectral_norm) {
    PowerIterationResult pi =
        power_iteration(cache.weight, layer.u_buffer, layer.options.sn_iters);
    if (!pi.degenerate) {
      layer.u_buffer = std::move(pi.u);
    }
    cache.sigma_hat = pi.sigma;
    cache.divisor = pi.sigma + layer.options.eps_sn;
    if (pi.sigma <= 0.0 && !pi.degenerate) {
      throw NumericalError("sample_forward: power iteration returned zero for a nonzero weight");
    }
  }
  cache.normalized = cache.weight.array() / cache.divisor;

  Matrix a = z * cache.normalized.transpose();
  if (!a.allFinite()) {
    std::ostringstream msg;
    msg << "sample_forward: non-finite activations (sigma_hat=" << cache.sigma_hat
        << ", max|W|=" << cache.weight.cwiseAbs().maxCoeff() << ")";
    throw NumericalError(msg.str());
  }
  if (train_mode) {
    cache.input = z;
    cache.recorded = true;
  }
  return {std::move(a), std::move(cache)};
}

double kl_to_prior(const VariationalLinear& layer) {
  const double s0 = layer.options.prior_std;
  const double log_s0 = std::log(s0);
  const double inv_two_var = 1.0 / (2.0 * s0 * s0);
  double total = 0.0;
  for (Eigen::Index i = 0; i < layer.mu.size(); ++i) {
    const double r = layer.rho.data()[i];
    const double m = layer.mu.data()[i];
    total += -r + log_s0 + (std::exp(2.0 * r) + m * m) * inv_two_var - 0.5;
  }
  return total;
}

std::pair<Matrix, Matrix> kl_gradient(const VariationalLinear& layer) {
  const double s0 = layer.options.prior_std;
  const double inv_var = 1.0 / (s0 * s0);
  Matrix grad_mu = layer.mu * inv_var;
  Matrix grad_rho = ((2.0 * layer.rho.array()).exp() * inv_var - 1.0).matrix();
  return {std::move(grad_mu), std::move(grad_rho)};
}

LayerGrads backward(const VariationalLinear& layer, const ForwardCache& cache,
                    const Matrix& grad_a) {
  if (!cache.recorded) {
    throw std::invalid_argument("backward: cache was produced without train_mode");
  }
  if (grad_a.rows() != cache.input.rows() ||
      static_cast<std::size_t>(grad_a.cols()) != layer.out_dim() ||
      cache.normalized.rows() != layer.mu.rows() || cache.normalized.cols() != layer.mu.cols()) {
    throw std::invalid_argument("backward: gradient or cache shape mismatch");
  }
  LayerGrads g;
  g.input = grad_a * cache.normalized;
  const Matrix grad_normalized = grad_a.transpose() * cache.input;
  g.mu = grad_normalized / cache.divisor;
  g.rho = (g.mu.array() * layer.rho.array().exp() * cache.eps.array()).matrix();
  return g;
}

}  // namespace lipb
