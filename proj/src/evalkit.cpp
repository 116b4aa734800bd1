#include "lipb/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lipb/suspicion.hpp"

namespace lipb {

void ScoredTruth::check() const {
  if (scores.size() != truth.size() || (!ids.empty() && ids.size() != scores.size())) {
    throw std::invalid_argument("ScoredTruth: scores, truth and ids differ in length");
  }
}

std::size_t ScoredTruth::positives() const {
  return static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
}

double auc_roc(const ScoredTruth& st) {
  st.check();
  const std::size_t n = st.scores.size();
  const std::size_t pos = st.positives();
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("auc_roc: truth must contain both classes");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return st.scores[a] < st.scores[b]; });
  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && st.scores[order[j]] == st.scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t q = i; q < j; ++q) {
      if (st.truth[order[q]]) rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double auc_pr(const ScoredTruth& st) {
  st.check();
  const std::size_t n = st.scores.size();
  const std::size_t pos = st.positives();
  if (pos == 0) throw std::invalid_argument("auc_pr: truth has no positives");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return st.scores[a] > st.scores[b]; });
  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && st.scores[order[j]] == st.scores[order[i]]) {
      tp += st.truth[order[j]] ? 1 : 0;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(j);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

PrecisionRecall precision_recall_at(const ScoredTruth& st, double fraction) {
  st.check();
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("precision_recall_at: fraction must lie in (0, 1]");
  }
  const std::size_t n = st.scores.size();
  if (n == 0) throw std::invalid_argument("precision_recall_at: no scores");
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  const std::vector<std::size_t> top = top_k_by_score(st.scores, st.ids, count);
  std::size_t tp = 0;
  for (std::size_t i : top) tp += st.truth[i] ? 1 : 0;
  const std::size_t pos = st.positives();
  return {static_cast<double>(tp) / static_cast<double>(top.size()),
          pos == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pos)};
}

ClassificationSummary summarize_predictions(std::span<const PredictiveSummary> preds,
                                            std::span<const int> labels) {
  if (preds.size() != labels.size() || preds.empty()) {
    throw std::invalid_argument("summarize_predictions: length mismatch or empty input");
  }
  ClassificationSummary s;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    s.accuracy += preds[i].predicted == labels[i] ? 1.0 : 0.0;
    s.mean_confidence += preds[i].confidence;
    s.mean_uncertainty += preds[i].uncertainty;
  }
  const auto n = static_cast<double>(preds.size());
  s.accuracy /= n;
  s.mean_confidence /= n;
  s.mean_uncertainty /= n;
  return s;
}

std::vector<SweepPoint> perturbation_sweep(const BayesHeader& header, const FeatureDataset& ds,
                                           std::span<const double> noise_scales, int samples,
                                           const RngStream& stream) {
  std::vector<SweepPoint> out;
  out.reserve(noise_scales.size());
  const RngStream infer = stream.with_purpose("sweep-infer");
  for (std::size_t k = 0; k < noise_scales.size(); ++k) {
    const double scale = noise_scales[k];
    if (!(scale >= 0.0)) throw std::invalid_argument("perturbation_sweep: scales must be >= 0");
    Matrix z = ds.features;
    if (scale > 0.0) {
      z += scale * gaussian_sample(stream.with_purpose("sweep-noise").with_step(k),
                                   ds.size(), ds.dim());
    }
    BayesHeader copy = header;
    const auto preds = predict_mc(copy, z, samples, infer);
    out.push_back({scale, summarize_predictions(preds, ds.labels)});
  }
  return out;
}

}  // namespace lipb
