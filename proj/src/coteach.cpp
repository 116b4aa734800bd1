#include "lipb/coteach.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lipb {

double disagreement_fraction(std::span<const int> pred_f, std::span<const int> pred_g) {
  if (pred_f.size() != pred_g.size()) {
    throw std::invalid_argument("disagreement_fraction: prediction vectors differ in length");
  }
  if (pred_f.empty()) throw std::invalid_argument("disagreement_fraction: empty batch");
  std::size_t differ = 0;
  for (std::size_t i = 0; i < pred_f.size(); ++i) differ += pred_f[i] != pred_g[i] ? 1 : 0;
  return static_cast<double>(differ) / static_cast<double>(pred_f.size());
}

double adaptive_forget_rate(std::span<const int> pred_f, std::span<const int> pred_g, double base,
                            double slope, double max_rate) {
  return std::min(base + slope * disagreement_fraction(pred_f, pred_g), max_rate);
}

double scheduled_keep_rate(double epoch, double tau, double ramp_epochs) {
  if (epoch < 0.0 || ramp_epochs <= 0.0) {
    throw std::invalid_argument("scheduled_keep_rate: need t >= 0 and t_k > 0");
  }
  return 1.0 - tau * std::min(epoch / ramp_epochs, 1.0);
}

std::size_t kept_count(double forget_rate, std::size_t batch) {
  const double kept = std::floor((1.0 - forget_rate) * static_cast<double>(batch) + 1e-9);
  return std::max<std::size_t>(1, kept > 0.0 ? static_cast<std::size_t>(kept) : 0);
}

std::vector<std::size_t> select_small_loss(std::span<const double> losses,
                                           std::span<const std::uint64_t> ids, std::size_t keep) {
  if (ids.size() != losses.size()) {
    throw std::invalid_argument("select_small_loss: ids and losses differ in length");
  }
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  keep = std::min(keep, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (losses[a] != losses[b]) return losses[a] < losses[b];
                      return ids[a] < ids[b];
                    });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

CoteachState::CoteachState(BayesHeader f, BayesHeader g, const AdamWOptions& optim)
    : header_f(std::move(f)), header_g(std::move(g)), optim_f(header_f, optim),
      optim_g(header_g, optim) {}

namespace {

Matrix gather_rows(const Matrix& z, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), z.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = z.row(static_cast<Eigen::Index>(rows[k]));
  }
  return out;
}

std::vector<int> gather(std::span<const int> y, std::span<const std::size_t> rows) {
  std::vector<int> out(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) out[k] = y[rows[k]];
  return out;
}

}  // namespace

CoteachStepInfo coteach_step(CoteachState& state, const Matrix& z, std::span<const int> y,
                             std::span<const std::uint64_t> ids, const RngStream& stream_f,
                             const RngStream& stream_g) {
  const auto batch = static_cast<std::size_t>(z.rows());
  if (batch == 0 || y.size() != batch || ids.size() != batch) {
    throw std::invalid_argument("coteach_step: empty batch or length mismatch");
  }
  // Scoring runs on copies so the persistent u buffers only move during updates.
  BayesHeader probe_f = state.header_f;
  BayesHeader probe_g = state.header_g;
  const ElboResult score_f = elbo_loss_and_grads(probe_f, z, y, stream_f.with_purpose("select"));
  const ElboResult score_g = elbo_loss_and_grads(probe_g, z, y, stream_g.with_purpose("select"));

  CoteachStepInfo info;
  if (state.mode == ForgetMode::kAdaptive) {
    info.forget_rate = adaptive_forget_rate(score_f.predictions, score_g.predictions, state.base,
                                            state.slope, state.max_rate);
  } else {
    info.forget_rate = 1.0 - scheduled_keep_rate(state.epoch, state.tau, state.ramp_epochs);
  }
  info.kept = kept_count(info.forget_rate, batch);
  info.kept_floor_hit = (1.0 - info.forget_rate) * static_cast<double>(batch) < 1.0;
  info.kept_by_f = select_small_loss(score_f.sample_losses, ids, info.kept);
  info.kept_by_g = select_small_loss(score_g.sample_losses, ids, info.kept);

  const Matrix z_for_f = gather_rows(z, info.kept_by_g);
  const std::vector<int> y_for_f = gather(y, info.kept_by_g);
  const Matrix z_for_g = gather_rows(z, info.kept_by_f);
  const std::vector<int> y_for_g = gather(y, info.kept_by_f);
  info.loss_f = train_step(state.header_f, state.optim_f, z_for_f, y_for_f, stream_f).loss;
  info.loss_g = train_step(state.header_g, state.optim_g, z_for_g, y_for_g, stream_g).loss;
  return info;
}

CoteachHistory coteach_train(CoteachState& state, const FeatureDataset& data,
                             const TrainConfig& config) {
  if (data.dim() != state.header_f.in_dim()) {
    throw std::invalid_argument("coteach_train: dataset dimension does not match header");
  }
  if (config.epochs < 0 || config.batch_size == 0 || config.batch_size > data.size()) {
    throw std::invalid_argument("coteach_train: need epochs >= 0 and 0 < batch_size <= n");
  }
  if (config.sn_iters > 0) {
    state.header_f.set_sn_iters(config.sn_iters);
    state.header_g.set_sn_iters(config.sn_iters);
  }
  CoteachHistory history;
  const RngStream root(config.seed);
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    state.epoch = epoch;
    std::iota(order.begin(), order.end(), std::size_t{0});
    Engine shuffle = root.with_purpose("shuffle").with_step(static_cast<std::uint64_t>(epoch)).engine();
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);

    double loss_sum = 0.0, forget_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      const FeatureDataset batch = data.subset(rows);
      const auto s = static_cast<std::uint64_t>(step++);
      const CoteachStepInfo info =
          coteach_step(state, batch.features, batch.labels, batch.ids,
                       root.with_purpose("peer-f").with_step(s), root.with_purpose("peer-g").with_step(s));
      loss_sum += info.loss_f;
      forget_sum += info.forget_rate;
      ++batches;
    }
    // Accuracy of peer f against the training labels, one draw.
    BayesHeader probe = state.header_f;
    HeaderPass pass = header_forward(probe, data.features,
                                     root.with_purpose("epoch-eval").with_step(static_cast<std::uint64_t>(epoch)), false);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      pass.logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
      correct += static_cast<int>(arg) == data.labels[i] ? 1 : 0;
    }
    history.epochs.push_back({loss_sum / static_cast<double>(batches),
                              static_cast<double>(correct) / static_cast<double>(n)});
    history.mean_forget_rate.push_back(forget_sum / static_cast<double>(batches));
  }
  return history;
}

}  // namespace lipb
