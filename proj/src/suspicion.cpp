#include "lipb/suspicion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "lipb/noiselab.hpp"

namespace lipb {

ScoreVector min_max_normalize(std::span<const double> values) {
  ScoreVector out;
  out.scores.assign(values.size(), 0.0);
  if (values.empty()) {
    out.degenerate = true;
    return out;
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.scores[i] = std::clamp((values[i] - *lo) / range, 0.0, 1.0);
  }
  return out;
}

KnnScores knn_suspicion(const FeatureDataset& ds, std::size_t k) {
  const std::size_t n = ds.size();
  if (k == 0 || n <= k) {
    throw std::invalid_argument("knn_suspicion: need 0 < K < n");
  }
  const Matrix unit = unit_rows(ds.features);
  KnnScores out;
  out.agreement.assign(n, 0.0);

  std::vector<std::pair<double, std::size_t>> pool(n - 1);
  Eigen::VectorXd sims(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    sims.noalias() = unit * unit.row(static_cast<Eigen::Index>(i)).transpose();
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      // Clamp: rounding can push 1 - cos slightly below zero for duplicates.
      pool[m++] = {std::max(0.0, 1.0 - sims(static_cast<Eigen::Index>(j))), j};
    }
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end());
    double weight_sum = 0.0;
    double agree = 0.0;
    for (std::size_t q = 0; q < k; ++q) {
      const double w = 1.0 / (pool[q].first + kKnnDistanceEps);
      weight_sum += w;
      if (ds.labels[pool[q].second] == ds.labels[i]) agree += w;
    }
    out.agreement[i] = agree / weight_sum;
  }
  ScoreVector normalized = min_max_normalize(out.agreement);
  out.suspicion.degenerate = normalized.degenerate;
  out.suspicion.scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.suspicion.scores[i] = normalized.degenerate ? 0.0 : 1.0 - normalized.scores[i];
  }
  return out;
}

ScoreVector uncertainty_suspicion(std::span<const double> uncertainties) {
  return min_max_normalize(uncertainties);
}

ScoreVector uncertainty_suspicion(std::span<const PredictiveSummary> predictions) {
  std::vector<double> u(predictions.size());
  std::transform(predictions.begin(), predictions.end(), u.begin(),
                 [](const PredictiveSummary& p) { return p.uncertainty; });
  return min_max_normalize(u);
}

double fusion_weight(double b_knn, double b_unc) {
  const double raw = 1.0 / (1.0 + std::exp(-kFusionSlope * (b_knn - b_unc)));
  return std::clamp(raw, kFusionWeightMin, kFusionWeightMax);
}

std::vector<std::size_t> top_k_by_score(std::span<const double> scores,
                                        std::span<const std::uint64_t> ids, std::size_t count) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto id_of = [&](std::size_t i) { return ids.empty() ? static_cast<std::uint64_t>(i) : ids[i]; };
  count = std::min(count, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return id_of(a) < id_of(b);
                    });
  order.resize(count);
  return order;
}

std::size_t SuspicionReport::flagged_count() const {
  return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), true));
}

void SuspicionReport::write(std::ostream& os) const {
  os << "# w_knn " << w_knn << "\n# w_unc " << w_unc << "\n# b_knn " << b_knn << "\n# b_unc "
     << b_unc << "\n# expected_rate " << expected_rate << "\n# equal_weight_fallback "
     << (equal_weight_fallback ? 1 : 0) << "\n";
  os << "id\ts_knn\ts_unc\ts_fused\tflagged\n";
  for (std::size_t i = 0; i < s_fused.size(); ++i) {
    os << ids[i] << '\t' << s_knn[i] << '\t' << s_unc[i] << '\t' << s_fused[i] << '\t'
       << (flagged[i] ? 1 : 0) << '\n';
  }
}

SuspicionReport fuse_adaptive(std::span<const double> s_knn, std::span<const double> s_unc,
                              double expected_rate, std::span<const std::uint64_t> ids) {
  const std::size_t n = s_knn.size();
  if (s_unc.size() != n || (!ids.empty() && ids.size() != n)) {
    throw std::invalid_argument("fuse_adaptive: score vectors differ in length");
  }
  if (!(expected_rate > 0.0 && expected_rate <= 0.5)) {
    throw std::invalid_argument("fuse_adaptive: expected_rate must lie in (0, 0.5]");
  }
  SuspicionReport r;
  r.expected_rate = expected_rate;
  r.s_knn.assign(s_knn.begin(), s_knn.end());
  r.s_unc.assign(s_unc.begin(), s_unc.end());
  if (ids.empty()) {
    r.ids.resize(n);
    std::iota(r.ids.begin(), r.ids.end(), std::uint64_t{0});
  } else {
    r.ids.assign(ids.begin(), ids.end());
  }

  const Bimodality bk = bimodality_coefficient(s_knn);
  const Bimodality bu = bimodality_coefficient(s_unc);
  r.b_knn = bk.value;
  r.b_unc = bu.value;
  if (bk.degenerate || bu.degenerate) {
    r.equal_weight_fallback = true;
    r.w_knn = 0.5;
  } else {
    r.w_knn = fusion_weight(bk.value, bu.value);
  }
  r.w_unc = 1.0 - r.w_knn;

  r.s_fused.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.s_fused[i] = std::clamp(r.w_knn * s_knn[i] + r.w_unc * s_unc[i],
                              std::min(s_knn[i], s_unc[i]), std::max(s_knn[i], s_unc[i]));
  }
  const auto count =
      static_cast<std::size_t>(std::ceil(expected_rate * static_cast<double>(n) - 1e-9));
  r.flagged.assign(n, false);
  for (std::size_t i : top_k_by_score(r.s_fused, r.ids, count)) r.flagged[i] = true;
  return r;
}

}  // namespace lipb
