#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lipb/dataset.hpp"
#include "lipb/header.hpp"

namespace lipb {

// Detection scores against ground truth (true = mislabelled).
struct ScoredTruth {
  std::vector<double> scores;
  std::vector<bool> truth;
  std::vector<std::uint64_t> ids;  // optional; row index when empty

  void check() const;
  std::size_t positives() const;
};

// Mann-Whitney AUC with half credit for ties.
double auc_roc(const ScoredTruth& st);

// Step-wise area under the precision-recall curve, one point per distinct score.
double auc_pr(const ScoredTruth& st);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

// Flags the top ceil(fraction n) scores (ties by smaller id).
PrecisionRecall precision_recall_at(const ScoredTruth& st, double fraction);

struct ClassificationSummary {
  double accuracy = 0.0;
  double mean_confidence = 0.0;
  double mean_uncertainty = 0.0;
};

ClassificationSummary summarize_predictions(std::span<const PredictiveSummary> preds,
                                            std::span<const int> labels);

struct SweepPoint {
  double scale = 0.0;
  ClassificationSummary summary;
};

/// Adds isotropic Gaussian noise of each scale to the features and runs
/// predict_mc on a fresh copy of the header per scale, always with the same
/// inference stream, so scale 0 reproduces the clean evaluation.
std::vector<SweepPoint> perturbation_sweep(const BayesHeader& header, const FeatureDataset& ds,
                                           std::span<const double> noise_scales, int samples,
                                           const RngStream& stream);

}  // namespace lipb
