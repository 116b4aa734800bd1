#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "lipb/dataset.hpp"
#include "lipb/header.hpp"

namespace lipb {

struct ScoreVector {
  std::vector<double> scores;  // in [0, 1]
  bool degenerate = false;     // input was constant; scores are all zero
};

// Min-max normalization to [0, 1]; constant input yields zeros, flagged.
ScoreVector min_max_normalize(std::span<const double> values);

struct KnnScores {
  std::vector<double> agreement;  // raw distance-weighted agreement a_i
  ScoreVector suspicion;          // 1 - normalized agreement
};

inline constexpr double kKnnDistanceEps = 1e-8;

/// Distance-weighted label agreement among each sample's K cosine-nearest
/// neighbours (the sample itself excluded), weights proportional to
/// 1 / (distance + 1e-8).
KnnScores knn_suspicion(const FeatureDataset& ds, std::size_t k = 10);

// Min-max normalized MC uncertainty.
ScoreVector uncertainty_suspicion(std::span<const PredictiveSummary> predictions);
ScoreVector uncertainty_suspicion(std::span<const double> uncertainties);

struct SuspicionReport {
  std::vector<std::uint64_t> ids;
  std::vector<double> s_knn, s_unc, s_fused;
  std::vector<bool> flagged;
  double w_knn = 0.5;
  double w_unc = 0.5;
  double b_knn = 0.0;
  double b_unc = 0.0;
  bool equal_weight_fallback = false;
  double expected_rate = 0.0;

  std::size_t flagged_count() const;
  // Flat table "id s_knn s_unc s_fused flagged" preceded by '#' metadata lines.
  void write(std::ostream& os) const;
};

inline constexpr double kFusionSlope = 8.0;
inline constexpr double kFusionWeightMin = 0.2;
inline constexpr double kFusionWeightMax = 0.8;

// clip(logistic(8 (b_knn - b_unc)), 0.2, 0.8).
double fusion_weight(double b_knn, double b_unc);

/// Bimodality-weighted arithmetic mean of the two score channels. The top
/// ceil(expected_rate n) fused scores are flagged, ties going to the lower id.
/// `ids` defaults to row indices when empty.
SuspicionReport fuse_adaptive(std::span<const double> s_knn, std::span<const double> s_unc,
                              double expected_rate, std::span<const std::uint64_t> ids = {});

// Indices of the `count` largest scores; ties resolved by smaller id.
std::vector<std::size_t> top_k_by_score(std::span<const double> scores,
                                        std::span<const std::uint64_t> ids, std::size_t count);

}  // namespace lipb
