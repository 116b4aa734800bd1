#include "lipb/dataset.hpp"

#include <numeric>
#include <string>
#include <unordered_set>

#include "lipb/error.hpp"

namespace lipb {

void FeatureDataset::validate() const {
  const auto n = labels.size();
  if (static_cast<std::size_t>(features.rows()) != n || ids.size() != n) {
    throw Error("FeatureDataset: features, labels and ids disagree in length");
  }
  if (num_classes < 1) {
    throw Error("FeatureDataset: num_classes must be positive");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw Error("FeatureDataset: label " + std::to_string(labels[i]) + " at row " +
                  std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  std::unordered_set<std::uint64_t> seen(ids.begin(), ids.end());
  if (seen.size() != n) {
    throw Error("FeatureDataset: duplicate sample id");
  }
  require_finite(features, "FeatureDataset features");
}

FeatureDataset FeatureDataset::subset(std::span<const std::size_t> rows) const {
  FeatureDataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(rows[k]));
    out.labels.push_back(labels.at(rows[k]));
    out.ids.push_back(ids.at(rows[k]));
  }
  return out;
}

FeatureDataset make_dataset(Matrix features, std::vector<int> labels, int num_classes) {
  FeatureDataset ds;
  ds.features = std::move(features);
  ds.labels = std::move(labels);
  ds.ids.resize(ds.labels.size());
  std::iota(ds.ids.begin(), ds.ids.end(), std::uint64_t{0});
  ds.num_classes = num_classes;
  ds.validate();
  return ds;
}

}  // namespace lipb
