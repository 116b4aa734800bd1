#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "lipb/dataset.hpp"
#include "lipb/snlayer.hpp"

namespace lipb {

// standard: deterministic weights, no spectral normalization, no KL term.
// bayes: variational weights without spectral normalization.
// lipb-sn1 / lipb-sn5: variational weights, 1 or 5 power iterations per pass.
enum class Variant { kStandard, kBayes, kLipbSn1, kLipbSn5 };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct HeaderOptions {
  std::size_t in_dim = 0;
  std::size_t hidden_dim = 0;  // 0 selects in_dim
  std::size_t num_classes = 0;
  Variant variant = Variant::kLipbSn1;
  double beta = 1e-4;
  double prior_std = 0.01;
  int sn_iters = 0;  // 0 selects the variant's default
  int mc_samples_train = 1;
  int mc_samples_infer = 50;
};

inline constexpr double kRhoMin = -20.0;
inline constexpr double kRhoMax = 10.0;

/// Two stacked variational layers with a ReLU between them:
/// logits = W2 relu(W1 z).
struct BayesHeader {
  VariationalLinear layer1;  // hidden x d
  VariationalLinear layer2;  // C x hidden
  double beta = 1e-4;
  int mc_samples_train = 1;
  int mc_samples_infer = 50;
  Variant variant = Variant::kLipbSn1;

  static BayesHeader create(const HeaderOptions& options, const RngStream& stream);

  std::size_t in_dim() const { return layer1.in_dim(); }
  std::size_t num_classes() const { return layer2.out_dim(); }
  void set_sn_iters(int iters);
  bool stochastic() const { return layer1.options.stochastic; }
};

struct HeaderPass {
  Matrix logits;
  Matrix hidden_pre;  // W1 z before the ReLU
  ForwardCache layer1;
  ForwardCache layer2;
};

HeaderPass header_forward(BayesHeader& header, const Matrix& z, const RngStream& stream,
                          bool train_mode);
HeaderPass header_forward_with_noise(BayesHeader& header, const Matrix& z, Matrix eps1,
                                     Matrix eps2, bool train_mode);

struct HeaderGrads {
  Matrix mu1, rho1, mu2, rho2;

  static HeaderGrads zeros_like(const BayesHeader& header);
  HeaderGrads& operator+=(const HeaderGrads& other);
  HeaderGrads& operator*=(double s);
};

// One posterior draw as seen by the loss: epsilon and the divisor of each layer.
struct DrawRecord {
  Matrix eps1, eps2;
  double divisor1 = 1.0;
  double divisor2 = 1.0;
};

struct ElboResult {
  double loss = 0.0;
  double data_term = 0.0;
  double kl = 0.0;
  HeaderGrads grads;
  std::vector<double> sample_losses;  // per-row cross-entropy, averaged over draws
  std::vector<int> predictions;       // argmax of the first draw's logits
  std::vector<DrawRecord> draws;
};

Matrix softmax_rows(const Matrix& logits);

/// Negative ELBO of a batch: mean cross-entropy under mc_samples_train
/// posterior draws plus beta times the KL of both layers, with analytic
/// gradients.
ElboResult elbo_loss_and_grads(BayesHeader& header, const Matrix& z, std::span<const int> y,
                               const RngStream& stream);

struct AdamWOptions {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moments with decoupled weight decay. Decay applies to the means
// only; rho is clamped to [kRhoMin, kRhoMax] after every step.
class AdamW {
 public:
  AdamW(const BayesHeader& header, AdamWOptions options);
  void step(BayesHeader& header, const HeaderGrads& grads);
  long steps() const { return t_; }

 private:
  AdamWOptions options_;
  long t_ = 0;
  HeaderGrads m_, v_;
};

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 64;
  AdamWOptions optim;
  std::uint64_t seed = 0;
  int sn_iters = 0;  // 0 keeps the header's setting
};

struct EpochRecord {
  double loss = 0.0;
  double accuracy = 0.0;  // against the labels the header was trained on
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// One optimizer update on (z, y). `stream` supplies the posterior draw.
ElboResult train_step(BayesHeader& header, AdamW& optimizer, const Matrix& z,
                      std::span<const int> y, const RngStream& stream);

/// Mini-batch training with seeded shuffling. Throws lipb::Error on a
/// non-finite loss or when the epoch loss stays above ten times the first
/// epoch's loss for three consecutive epochs.
TrainHistory train(BayesHeader& header, const FeatureDataset& data, const TrainConfig& config);

struct PredictiveSummary {
  Vector mean_probs;
  int predicted = 0;
  double confidence = 0.0;
  double uncertainty = 0.0;  // population STD of the predicted-class probability
};

// Aggregates S per-draw probability matrices (each n x C).
std::vector<PredictiveSummary> summarize_mc(std::span<const Matrix> draw_probs);

// S forward passes over all of z, sharing and refining the u buffers in order.
std::vector<PredictiveSummary> predict_mc(BayesHeader& header, const Matrix& z, int samples,
                                          const RngStream& stream);

}  // namespace lipb
