#include "lipb/header.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "lipb/error.hpp"

namespace lipb {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kStandard: return "standard";
    case Variant::kBayes: return "bayes";
    case Variant::kLipbSn1: return "lipb-sn1";
    case Variant::kLipbSn5: return "lipb-sn5";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "standard") return Variant::kStandard;
  if (name == "bayes") return Variant::kBayes;
  if (name == "lipb-sn1") return Variant::kLipbSn1;
  if (name == "lipb-sn5") return Variant::kLipbSn5;
  throw std::invalid_argument("unknown header variant '" + std::string(name) + "'");
}

BayesHeader BayesHeader::create(const HeaderOptions& options, const RngStream& stream) {
  if (options.in_dim == 0 || options.num_classes < 2) {
    throw std::invalid_argument("BayesHeader: need in_dim > 0 and at least two classes");
  }
  if (options.beta < 0.0) {
    throw std::invalid_argument("BayesHeader: beta must be nonnegative");
  }
  LayerOptions lo;
  lo.prior_std = options.prior_std;
  switch (options.variant) {
    case Variant::kStandard:
      lo.stochastic = false;
      lo.spectral_norm = false;
      break;
    case Variant::kBayes:
      lo.spectral_norm = false;
      break;
    case Variant::kLipbSn1:
      lo.sn_iters = 1;
      break;
    case Variant::kLipbSn5:
      lo.sn_iters = 5;
      break;
  }
  if (options.sn_iters > 0) lo.sn_iters = options.sn_iters;

  const std::size_t hidden = options.hidden_dim == 0 ? options.in_dim : options.hidden_dim;
  BayesHeader h;
  h.layer1 = VariationalLinear::create(hidden, options.in_dim, stream.with_purpose("layer1"), lo);
  h.layer2 =
      VariationalLinear::create(options.num_classes, hidden, stream.with_purpose("layer2"), lo);
  h.beta = options.variant == Variant::kStandard ? 0.0 : options.beta;
  h.mc_samples_train = options.mc_samples_train;
  h.mc_samples_infer = options.mc_samples_infer;
  h.variant = options.variant;
  return h;
}

void BayesHeader::set_sn_iters(int iters) {
  if (iters < 1) throw std::invalid_argument("sn_iters must be positive");
  layer1.options.sn_iters = iters;
  layer2.options.sn_iters = iters;
}

HeaderPass header_forward(BayesHeader& header, const Matrix& z, const RngStream& stream,
                          bool train_mode) {
  auto draw = [&](const VariationalLinear& layer, std::string_view tag) {
    return layer.options.stochastic
               ? gaussian_sample(stream.with_purpose(tag), layer.out_dim(), layer.in_dim())
               : Matrix::Zero(layer.mu.rows(), layer.mu.cols());
  };
  Matrix eps1 = draw(header.layer1, "eps-layer1");
  Matrix eps2 = draw(header.layer2, "eps-layer2");
  return header_forward_with_noise(header, z, std::move(eps1), std::move(eps2), train_mode);
}

HeaderPass header_forward_with_noise(BayesHeader& header, const Matrix& z, Matrix eps1,
                                     Matrix eps2, bool train_mode) {
  HeaderPass pass;
  auto [pre, c1] = forward_with_noise(header.layer1, z, std::move(eps1), train_mode);
  Matrix hidden = pre.cwiseMax(0.0);
  auto [logits, c2] = forward_with_noise(header.layer2, hidden, std::move(eps2), train_mode);
  pass.logits = std::move(logits);
  pass.hidden_pre = std::move(pre);
  pass.layer1 = std::move(c1);
  pass.layer2 = std::move(c2);
  return pass;
}

HeaderGrads HeaderGrads::zeros_like(const BayesHeader& header) {
  return {Matrix::Zero(header.layer1.mu.rows(), header.layer1.mu.cols()),
          Matrix::Zero(header.layer1.mu.rows(), header.layer1.mu.cols()),
          Matrix::Zero(header.layer2.mu.rows(), header.layer2.mu.cols()),
          Matrix::Zero(header.layer2.mu.rows(), header.layer2.mu.cols())};
}

HeaderGrads& HeaderGrads::operator+=(const HeaderGrads& o) {
  mu1 += o.mu1;
  rho1 += o.rho1;
  mu2 += o.mu2;
  rho2 += o.rho2;
  return *this;
}

HeaderGrads& HeaderGrads::operator*=(double s) {
  mu1 *= s;
  rho1 *= s;
  mu2 *= s;
  rho2 *= s;
  return *this;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

ElboResult elbo_loss_and_grads(BayesHeader& header, const Matrix& z, std::span<const int> y,
                               const RngStream& stream) {
  const auto batch = static_cast<std::size_t>(z.rows());
  if (batch == 0 || y.size() != batch) {
    throw std::invalid_argument("elbo_loss_and_grads: empty batch or label count mismatch");
  }
  const auto classes = static_cast<int>(header.num_classes());
  for (int label : y) {
    if (label < 0 || label >= classes) {
      throw std::invalid_argument("elbo_loss_and_grads: label out of range");
    }
  }
  const int draws = header.stochastic() ? std::max(1, header.mc_samples_train) : 1;

  ElboResult out;
  out.grads = HeaderGrads::zeros_like(header);
  out.sample_losses.assign(batch, 0.0);
  out.predictions.assign(batch, 0);
  const double inv_batch = 1.0 / static_cast<double>(batch);

  for (int d = 0; d < draws; ++d) {
    const RngStream draw_stream = draws == 1 ? stream : stream.child("draw").with_step(d);
    HeaderPass pass = header_forward(header, z, draw_stream, true);

    Matrix grad_logits = softmax_rows(pass.logits);
    double draw_loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double mx = pass.logits.row(row).maxCoeff();
      const double lse = mx + std::log((pass.logits.row(row).array() - mx).exp().sum());
      const double ce = lse - pass.logits(row, y[i]);
      out.sample_losses[i] += ce / draws;
      draw_loss += ce;
      grad_logits(row, y[i]) -= 1.0;
      if (d == 0) {
        Eigen::Index arg = 0;
        pass.logits.row(row).maxCoeff(&arg);
        out.predictions[i] = static_cast<int>(arg);
      }
    }
    grad_logits *= inv_batch;
    out.data_term += draw_loss * inv_batch / draws;

    LayerGrads g2 = backward(header.layer2, pass.layer2, grad_logits);
    Matrix grad_pre = g2.input.array() * (pass.hidden_pre.array() > 0.0).cast<double>();
    LayerGrads g1 = backward(header.layer1, pass.layer1, grad_pre);

    out.grads.mu1 += g1.mu / draws;
    out.grads.rho1 += g1.rho / draws;
    out.grads.mu2 += g2.mu / draws;
    out.grads.rho2 += g2.rho / draws;
    out.draws.push_back({std::move(pass.layer1.eps), std::move(pass.layer2.eps),
                         pass.layer1.divisor, pass.layer2.divisor});
  }

  if (header.beta > 0.0) {
    out.kl = kl_to_prior(header.layer1) + kl_to_prior(header.layer2);
    auto [km1, kr1] = kl_gradient(header.layer1);
    auto [km2, kr2] = kl_gradient(header.layer2);
    out.grads.mu1 += header.beta * km1;
    out.grads.rho1 += header.beta * kr1;
    out.grads.mu2 += header.beta * km2;
    out.grads.rho2 += header.beta * kr2;
  }
  out.loss = out.data_term + header.beta * out.kl;
  if (!std::isfinite(out.loss)) {
    throw NumericalError("elbo_loss_and_grads: non-finite loss");
  }
  return out;
}

AdamW::AdamW(const BayesHeader& header, AdamWOptions options)
    : options_(options), m_(HeaderGrads::zeros_like(header)), v_(HeaderGrads::zeros_like(header)) {
  if (options.lr <= 0.0 || options.weight_decay < 0.0 || options.beta1 <= 0.0 ||
      options.beta1 >= 1.0 || options.beta2 <= 0.0 || options.beta2 >= 1.0) {
    throw std::invalid_argument("AdamW: invalid hyperparameters");
  }
}

void AdamW::step(BayesHeader& header, const HeaderGrads& grads) {
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = options_.lr;

  auto update = [&](Matrix& param, const Matrix& g, Matrix& m, Matrix& v, double decay) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param *= 1.0 - lr * decay;
    param.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + options_.eps);
  };
  update(header.layer1.mu, grads.mu1, m_.mu1, v_.mu1, options_.weight_decay);
  update(header.layer2.mu, grads.mu2, m_.mu2, v_.mu2, options_.weight_decay);
  if (header.stochastic()) {
    update(header.layer1.rho, grads.rho1, m_.rho1, v_.rho1, 0.0);
    update(header.layer2.rho, grads.rho2, m_.rho2, v_.rho2, 0.0);
    header.layer1.rho = header.layer1.rho.cwiseMax(kRhoMin).cwiseMin(kRhoMax);
    header.layer2.rho = header.layer2.rho.cwiseMax(kRhoMin).cwiseMin(kRhoMax);
  }
}

ElboResult train_step(BayesHeader& header, AdamW& optimizer, const Matrix& z,
                      std::span<const int> y, const RngStream& stream) {
  ElboResult r = elbo_loss_and_grads(header, z, y, stream);
  optimizer.step(header, r.grads);
  return r;
}

TrainHistory train(BayesHeader& header, const FeatureDataset& data, const TrainConfig& config) {
  if (data.dim() != header.in_dim()) {
    throw std::invalid_argument("train: dataset dimension does not match header");
  }
  if (config.epochs < 0 || config.batch_size == 0 || config.batch_size > data.size()) {
    throw std::invalid_argument("train: need epochs >= 0 and 0 < batch_size <= n");
  }
  if (config.sn_iters > 0) header.set_sn_iters(config.sn_iters);

  TrainHistory history;
  if (config.epochs == 0) return history;

  AdamW optimizer(header, config.optim);
  const RngStream root(config.seed);
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::vector<int> batch_labels;
  Matrix batch_z;
  long global_step = 0;
  int blowups = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Engine shuffle = root.with_purpose("shuffle").with_step(static_cast<std::uint64_t>(epoch)).engine();
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle.below(i + 1)]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      batch_z.resize(static_cast<Eigen::Index>(stop - start), data.features.cols());
      batch_labels.resize(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        batch_z.row(static_cast<Eigen::Index>(k - start)) =
            data.features.row(static_cast<Eigen::Index>(order[k]));
        batch_labels[k - start] = data.labels[order[k]];
      }
      ElboResult r;
      try {
        r = train_step(header, optimizer, batch_z, batch_labels,
                       root.with_purpose("elbo").with_step(static_cast<std::uint64_t>(global_step)));
      } catch (const NumericalError& e) {
        std::ostringstream msg;
        msg << "train: epoch " << epoch << " batch " << batches << ": " << e.what();
        throw NumericalError(msg.str());
      }
      ++global_step;
      ++batches;
      loss_sum += r.loss;
      for (std::size_t k = 0; k < r.predictions.size(); ++k) {
        correct += r.predictions[k] == batch_labels[k] ? 1 : 0;
      }
    }
    EpochRecord rec{loss_sum / static_cast<double>(batches),
                    static_cast<double>(correct) / static_cast<double>(n)};
    history.epochs.push_back(rec);

    if (rec.loss > 10.0 * history.epochs.front().loss) {
      if (++blowups >= 3) {
        std::ostringstream msg;
        msg << "train: diverged at epoch " << epoch << " (loss " << rec.loss << ", first epoch "
            << history.epochs.front().loss << ")";
        throw Error(msg.str());
      }
    } else {
      blowups = 0;
    }
  }
  return history;
}

std::vector<PredictiveSummary> summarize_mc(std::span<const Matrix> draw_probs) {
  if (draw_probs.size() < 2) {
    throw std::invalid_argument("summarize_mc: need at least two draws for an uncertainty");
  }
  const Eigen::Index n = draw_probs.front().rows();
  const Eigen::Index classes = draw_probs.front().cols();
  Matrix mean = Matrix::Zero(n, classes);
  for (const Matrix& p : draw_probs) {
    if (p.rows() != n || p.cols() != classes) {
      throw std::invalid_argument("summarize_mc: draw shapes differ");
    }
    mean += p;
  }
  const double s = static_cast<double>(draw_probs.size());
  mean /= s;

  std::vector<PredictiveSummary> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    PredictiveSummary& ps = out[static_cast<std::size_t>(i)];
    ps.mean_probs = mean.row(i).transpose();
    Eigen::Index arg = 0;
    ps.confidence = mean.row(i).maxCoeff(&arg);
    ps.predicted = static_cast<int>(arg);
    // Offsets from the first draw, so identical draws give exactly zero.
    const double first = draw_probs.front()(i, arg);
    double shift = 0.0;
    for (const Matrix& p : draw_probs) shift += p(i, arg) - first;
    shift /= s;
    double var = 0.0;
    for (const Matrix& p : draw_probs) {
      const double d = p(i, arg) - first - shift;
      var += d * d;
    }
    ps.uncertainty = std::sqrt(var / s);
  }
  return out;
}

std::vector<PredictiveSummary> predict_mc(BayesHeader& header, const Matrix& z, int samples,
                                          const RngStream& stream) {
  if (samples < 2) {
    throw std::invalid_argument("predict_mc: need at least two samples");
  }
  if (static_cast<std::size_t>(z.cols()) != header.in_dim()) {
    throw std::invalid_argument("predict_mc: input width does not match header");
  }
  std::vector<Matrix> probs;
  probs.reserve(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    HeaderPass pass =
        header_forward(header, z, stream.with_step(static_cast<std::uint64_t>(s)), false);
    probs.push_back(softmax_rows(pass.logits));
  }
  return summarize_mc(probs);
}

}  // namespace lipb
