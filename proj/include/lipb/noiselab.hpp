#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "lipb/dataset.hpp"
#include "lipb/rng.hpp"

namespace lipb {

enum class Mechanism { kRandom, kSpce };

std::string_view to_string(Mechanism m);
Mechanism parse_mechanism(std::string_view name);

struct NoiseEntry {
  std::uint64_t id = 0;
  int original = 0;
  int corrupted = 0;
  Mechanism mechanism = Mechanism::kRandom;
};

struct NoisePlan {
  double eta = 0.0;
  std::vector<NoiseEntry> entries;

  // Flat text table: header line, then "id from to mechanism" rows.
  void write(std::ostream& os) const;
  static NoisePlan read(std::istream& is);
};

// round(eta * n) with halves rounded up.
std::size_t plan_size(double eta, std::size_t n);

struct Corruption {
  FeatureDataset data;
  NoisePlan plan;
};

// Flips round(eta n) labels chosen uniformly without replacement; each new
// label is uniform over the other C-1 classes.
Corruption inject_random(const FeatureDataset& ds, double eta, const RngStream& stream);

/// Semantically proximal corruption. Each sample's K nearest cross-class
/// neighbours (cosine distance) form the candidate pairs; pairs are visited
/// closest first and the query sample is relabelled to its neighbour's class,
/// at most once per sample, until round(eta n) labels have changed.
Corruption inject_spce(const FeatureDataset& ds, double eta, std::size_t k);

// Relabels the rows named in `plan` back to their original classes.
FeatureDataset revert(const FeatureDataset& ds, const NoisePlan& plan);

// Truth vector for detection metrics: true where the row's id is in the plan.
std::vector<bool> corrupted_mask(const FeatureDataset& ds, const NoisePlan& plan);

struct BlobSpec {
  std::size_t n = 0;
  std::size_t dim = 0;
  int num_classes = 0;
  double spread = 1.0;      // per-coordinate cluster std
  double separation = 1.0;  // norm of each class centre
};

// C Gaussian clusters whose centres are random directions scaled to
// `separation`. Row i has label i mod C.
FeatureDataset make_blobs(const BlobSpec& spec, const RngStream& stream);

// Row-normalized copy of `features`; zero rows stay zero.
Matrix unit_rows(const Matrix& features);

}  // namespace lipb
