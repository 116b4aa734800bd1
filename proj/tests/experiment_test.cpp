#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "lipb/experiment.hpp"

using lipb::ExperimentConfig;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.data.blobs = {240, 6, 3, 1.0, 10.0};
  c.etas = {0.0, 0.1};
  c.seeds = {0, 1};
  c.mc_samples = 4;
  c.train.epochs = 3;
  c.train.batch_size = 32;
  c.knn_k = 5;
  c.spce_k = 5;
  return c;
}

}  // namespace

TEST(ExperimentConfig, JsonRoundTrip) {
  ExperimentConfig c = tiny();
  c.regime = lipb::Mechanism::kSpce;
  c.model = lipb::ModelVariant::kLipbCoteach;
  c.expected_rate = 0.2;
  c.perturbation_scales = {0.0, 1.5};
  nlohmann::json j = c;
  ExperimentConfig back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.regime, lipb::Mechanism::kSpce);
  EXPECT_EQ(*back.expected_rate, 0.2);
}

TEST(ExperimentConfig, RejectsRateAboveHalf) {
  ExperimentConfig c = tiny();
  c.etas = {0.6};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.etas = {0.1};
  c.seeds.clear();
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ModelVariant, NamesRoundTrip) {
  using lipb::ModelVariant;
  for (auto v : {ModelVariant::kStandard, ModelVariant::kBayes, ModelVariant::kLipbSn1,
                 ModelVariant::kLipbSn5, ModelVariant::kCoteach, ModelVariant::kLipbCoteach}) {
    EXPECT_EQ(lipb::parse_model_variant(lipb::to_string(v)), v);
  }
}

TEST(RunExperiment, SeparableSanityCell) {
  ExperimentConfig c;
  c.data.blobs = {600, 8, 4, 0.5, 10.0};
  c.etas = {0.0};
  c.seeds = {0};
  c.train.epochs = 20;
  c.train.optim.lr = 1e-2;
  c.mc_samples = 10;
  auto r = lipb::run_experiment(c);
  ASSERT_EQ(r.cells.size(), 1u);
  ASSERT_TRUE(r.cells[0].ok) << r.cells[0].error;
  EXPECT_GE(r.cells[0].test.accuracy, 0.99);
  EXPECT_FALSE(r.cells[0].has_detection);
}

TEST(RunExperiment, RepeatRunsAreByteIdentical) {
  ExperimentConfig c = tiny();
  c.perturbation_scales = {0.0, 2.0};
  const auto a = lipb::run_experiment(c).to_json().dump();
  c.threads = 3;
  const auto b = lipb::run_experiment(c).to_json().dump();
  EXPECT_EQ(a, b);
}

TEST(RunExperiment, GridCellCount) {
  ExperimentConfig c = tiny();
  c.data.blobs = {60, 4, 3, 1.0, 10.0};
  c.etas.clear();
  for (int k = 0; k < 16; ++k) c.etas.push_back(0.02 * k);
  c.seeds = {0, 1, 2, 3, 4};
  c.train.epochs = 1;
  c.mc_samples = 2;
  c.knn_k = 3;
  c.spce_k = 3;
  c.threads = 2;
  auto r = lipb::run_experiment(c);
  EXPECT_EQ(r.cells.size(), 80u);
  EXPECT_EQ(r.failed_cells(), 0u);
  auto sig = r.signals("inv-confidence");
  EXPECT_EQ(sig.size(), 16u);
  EXPECT_EQ(sig.begin()->second.size(), 5u);
}

TEST(RunExperiment, DetectionOnCorruptedCells) {
  ExperimentConfig c = tiny();
  c.regime = lipb::Mechanism::kSpce;
  auto r = lipb::run_experiment(c);
  for (const auto& cell : r.cells) {
    ASSERT_TRUE(cell.ok) << cell.error;
    EXPECT_EQ(cell.has_detection, cell.eta > 0.0);
    if (cell.has_detection) {
      EXPECT_GT(cell.n_corrupted, 0u);
      EXPECT_GE(cell.fused.auc_roc, 0.0);
      EXPECT_LE(cell.fused.auc_roc, 1.0);
    }
  }
  std::ostringstream cells, sweep;
  lipb::write_cells_table(r, cells);
  lipb::write_sweep_table(r, sweep);
  const std::string table = cells.str();
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);  // header plus four cells
}

TEST(RunExperiment, CoteachVariantRuns) {
  ExperimentConfig c = tiny();
  c.model = lipb::ModelVariant::kLipbCoteach;
  c.etas = {0.1};
  c.seeds = {0};
  auto r = lipb::run_experiment(c);
  ASSERT_TRUE(r.cells[0].ok) << r.cells[0].error;
  EXPECT_TRUE(r.cells[0].has_detection);
}

TEST(RunExperiment, FailedCellIsRecorded) {
  ExperimentConfig c = tiny();
  c.data.blobs = {30, 4, 3, 1.0, 10.0};
  c.knn_k = 50;  // more neighbours than training samples
  c.etas = {0.0, 0.1};
  c.seeds = {0};
  auto r = lipb::run_experiment(c);
  EXPECT_TRUE(r.cells[0].ok);
  EXPECT_FALSE(r.cells[1].ok);
  EXPECT_FALSE(r.cells[1].error.empty());
  EXPECT_EQ(r.failed_cells(), 1u);
}
