#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lipb/error.hpp"
#include "lipb/numkit.hpp"

namespace lipb {

struct FeatureDataset {
  Matrix features;                  // n x d
  std::vector<int> labels;          // n entries in [0, num_classes)
  std::vector<std::uint64_t> ids;   // n stable identifiers
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  // Throws lipb::Error when shapes disagree, a label is out of range, ids repeat
  // or a feature is non-finite.
  void validate() const;

  // Rows `rows`, in that order, as a new dataset.
  FeatureDataset subset(std::span<const std::size_t> rows) const;
};

// Assigns ids 0..n-1 and checks invariants.
FeatureDataset make_dataset(Matrix features, std::vector<int> labels, int num_classes);

}  // namespace lipb
