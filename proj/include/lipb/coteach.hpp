#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lipb/header.hpp"

namespace lipb {

inline constexpr double kForgetBase = 0.1;   // R0
inline constexpr double kForgetSlope = 0.2;  // alpha
inline constexpr double kForgetMax = 0.5;    // Rmax

// Fraction of positions where the two prediction vectors differ.
double disagreement_fraction(std::span<const int> pred_f, std::span<const int> pred_g);

// min(base + slope * disagreement, max_rate) for one mini-batch.
double adaptive_forget_rate(std::span<const int> pred_f, std::span<const int> pred_g,
                            double base = kForgetBase, double slope = kForgetSlope,
                            double max_rate = kForgetMax);

// 1 - tau * min(t / ramp_epochs, 1): the fraction of each batch that is kept.
double scheduled_keep_rate(double epoch, double tau, double ramp_epochs);

// max(1, floor((1 - forget_rate) * batch)).
std::size_t kept_count(double forget_rate, std::size_t batch);

// The `keep` rows with the smallest loss, ties by smaller id; result sorted by row.
std::vector<std::size_t> select_small_loss(std::span<const double> losses,
                                           std::span<const std::uint64_t> ids, std::size_t keep);

enum class ForgetMode { kAdaptive, kScheduled };

struct CoteachState {
  BayesHeader header_f;
  BayesHeader header_g;
  AdamW optim_f;
  AdamW optim_g;
  ForgetMode mode = ForgetMode::kAdaptive;
  double base = kForgetBase;
  double slope = kForgetSlope;
  double max_rate = kForgetMax;
  double tau = 0.0;          // assumed noise rate, scheduled mode
  double ramp_epochs = 10.0; // t_k, scheduled mode
  int epoch = 0;

  CoteachState(BayesHeader f, BayesHeader g, const AdamWOptions& optim);
};

struct CoteachStepInfo {
  double forget_rate = 0.0;
  std::size_t kept = 0;
  bool kept_floor_hit = false;  // forget rate would have dropped every sample
  std::vector<std::size_t> kept_by_f;  // rows f selected, used to update g
  std::vector<std::size_t> kept_by_g;
  double loss_f = 0.0;
  double loss_g = 0.0;
};

/// One co-teaching mini-batch. Both peers score the batch on copies of
/// themselves (their u buffers are left untouched), each keeps its
/// small-loss fraction, and each peer is then updated on the rows its
/// partner kept.
CoteachStepInfo coteach_step(CoteachState& state, const Matrix& z, std::span<const int> y,
                             std::span<const std::uint64_t> ids, const RngStream& stream_f,
                             const RngStream& stream_g);

struct CoteachHistory {
  std::vector<EpochRecord> epochs;     // peer f
  std::vector<double> mean_forget_rate;
};

CoteachHistory coteach_train(CoteachState& state, const FeatureDataset& data,
                             const TrainConfig& config);

}  // namespace lipb
