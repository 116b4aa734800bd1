#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lipb/coteach.hpp"
#include "lipb/dataset.hpp"
#include "lipb/evalkit.hpp"
#include "lipb/header.hpp"
#include "lipb/noiselab.hpp"
#include "lipb/quality.hpp"

namespace lipb {

// standard | bayes | lipb-sn1 | lipb-sn5 train one header; coteach and
// lipb-coteach train a pair of standard / lipb-sn1 peers.
enum class ModelVariant { kStandard, kBayes, kLipbSn1, kLipbSn5, kCoteach, kLipbCoteach };

std::string_view to_string(ModelVariant v);
ModelVariant parse_model_variant(std::string_view name);

struct DataSource {
  std::string path;  // empty selects the synthetic blobs below
  // Clean cosine 1-NN accuracy about 0.97.
  BlobSpec blobs{3000, 32, 6, 2.4, 10.0};
  std::uint64_t seed = 7;
  double test_fraction = 0.2;
};

struct ExperimentConfig {
  DataSource data;
  Mechanism regime = Mechanism::kRandom;
  std::vector<double> etas{0.0, 0.05, 0.10, 0.15};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  ModelVariant model = ModelVariant::kLipbSn1;
  std::size_t hidden_dim = 0;
  double beta = 1e-4;
  double prior_std = 0.01;
  int mc_samples = 50;
  TrainConfig train{40, 64, {}, 0, 0};
  ForgetMode forget_mode = ForgetMode::kAdaptive;
  double coteach_ramp_epochs = 10.0;
  std::optional<double> expected_rate;  // defaults to each cell's eta
  std::size_t knn_k = 10;
  std::size_t spce_k = 10;
  std::vector<double> perturbation_scales;  // empty disables the sweep
  std::uint64_t root_seed = 0;
  unsigned threads = 1;
  std::string output_dir;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

struct DetectionMetrics {
  double auc_pr = 0.0;
  double auc_roc = 0.0;
  double recall_at_rate = 0.0;
  double precision_at_rate = 0.0;
};

struct CellResult {
  double eta = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_corrupted = 0;
  double final_train_loss = 0.0;
  ClassificationSummary test;  // on the clean held-out split
  bool has_detection = false;
  DetectionMetrics knn, uncertainty, fused;
  double w_knn = 0.5;
  double b_knn = 0.0;
  double b_unc = 0.0;
  std::vector<SweepPoint> sweep;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<CellResult> cells;  // ordered by (eta, seed)

  std::size_t failed_cells() const;
  // signal per rate, indexed like config.seeds; only successful cells.
  SeedSignals signals(std::string_view which) const;
  nlohmann::json to_json() const;
};

struct SplitData {
  FeatureDataset train;
  FeatureDataset test;
};

// Loads or generates the dataset and splits it with a seeded permutation.
SplitData load_split(const DataSource& source);

// Runs one (eta, seed) cell on an already split dataset. Throws on failure.
CellResult run_cell(const ExperimentConfig& config, const SplitData& split, double eta,
                    std::uint64_t seed);

/// Every (eta, seed) cell, in a pool of config.threads workers. Cells own
/// their streams, so results do not depend on scheduling. A failed cell is
/// recorded with its error and the rest continue.
ExperimentReport run_experiment(const ExperimentConfig& config);

// Flat tab-separated per-cell table.
void write_cells_table(const ExperimentReport& report, std::ostream& os);
// Perturbation curves: per scale mean and inter-seed std at each rate.
void write_sweep_table(const ExperimentReport& report, std::ostream& os);

}  // namespace lipb
