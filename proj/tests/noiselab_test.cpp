#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "lipb/noiselab.hpp"

using lipb::FeatureDataset;
using lipb::Matrix;
using lipb::RngStream;

namespace {

FeatureDataset from_angles(const std::vector<double>& degrees, const std::vector<int>& labels,
                           int classes) {
  Matrix f(static_cast<Eigen::Index>(degrees.size()), 2);
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    const double a = degrees[i] * M_PI / 180.0;
    f(static_cast<Eigen::Index>(i), 0) = std::cos(a);
    f(static_cast<Eigen::Index>(i), 1) = std::sin(a);
  }
  return lipb::make_dataset(std::move(f), labels, classes);
}

// Exhaustive 1-nearest-neighbour accuracy under Euclidean distance.
double one_nn_accuracy(const FeatureDataset& ds) {
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    double best = INFINITY;
    Eigen::Index arg = -1;
    for (Eigen::Index j = 0; j < ds.features.rows(); ++j) {
      if (j == i) continue;
      const double d = (ds.features.row(i) - ds.features.row(j)).squaredNorm();
      if (d < best) best = d, arg = j;
    }
    hits += ds.labels[static_cast<std::size_t>(arg)] == ds.labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

FeatureDataset blobs(std::size_t n, std::size_t d, int c, double spread, double sep,
                     std::uint64_t seed) {
  return lipb::make_blobs({n, d, c, spread, sep}, RngStream(seed).with_purpose("blobs"));
}

}  // namespace

TEST(PlanSize, RoundsHalfUp) {
  EXPECT_EQ(lipb::plan_size(0.15, 1000), 150u);
  EXPECT_EQ(lipb::plan_size(0.05, 10), 1u);
  EXPECT_EQ(lipb::plan_size(0.0, 10), 0u);
}

TEST(InjectRandom, ZeroRateIsIdentity) {
  auto ds = blobs(60, 3, 3, 1.0, 1.0, 1);
  auto c = lipb::inject_random(ds, 0.0, RngStream(1));
  EXPECT_TRUE(c.plan.entries.empty());
  EXPECT_EQ(c.data.labels, ds.labels);
}

TEST(InjectRandom, FullRateOnTwoClassesFlipsEverything) {
  auto ds = blobs(40, 3, 2, 1.0, 1.0, 2);
  auto c = lipb::inject_random(ds, 1.0, RngStream(2));
  ASSERT_EQ(c.plan.entries.size(), 40u);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(c.data.labels[i], 1 - ds.labels[i]);
}

TEST(InjectRandom, ExactCountAndRealFlips) {
  auto ds = blobs(1000, 4, 5, 1.0, 1.0, 3);
  auto c = lipb::inject_random(ds, 0.15, RngStream(3));
  ASSERT_EQ(c.plan.entries.size(), 150u);
  std::set<std::uint64_t> ids;
  std::size_t changed = 0;
  for (const auto& e : c.plan.entries) {
    EXPECT_NE(e.original, e.corrupted);
    EXPECT_EQ(e.original, ds.labels[e.id]);
    EXPECT_EQ(e.corrupted, c.data.labels[e.id]);
    ids.insert(e.id);
  }
  for (std::size_t i = 0; i < ds.size(); ++i) changed += c.data.labels[i] != ds.labels[i];
  EXPECT_EQ(ids.size(), 150u);
  EXPECT_EQ(changed, 150u);
}

TEST(InjectRandom, SeededAndReproducible) {
  auto ds = blobs(200, 3, 4, 1.0, 1.0, 4);
  auto a = lipb::inject_random(ds, 0.1, RngStream(4).with_purpose("noise"));
  auto b = lipb::inject_random(ds, 0.1, RngStream(4).with_purpose("noise"));
  auto c = lipb::inject_random(ds, 0.1, RngStream(5).with_purpose("noise"));
  EXPECT_EQ(a.data.labels, b.data.labels);
  EXPECT_NE(a.data.labels, c.data.labels);
}

TEST(InjectRandom, RejectsBadRate) {
  auto ds = blobs(20, 2, 2, 1.0, 1.0, 5);
  EXPECT_THROW(lipb::inject_random(ds, 1.5, RngStream(5)), std::invalid_argument);
  EXPECT_THROW(lipb::inject_random(ds, -0.1, RngStream(5)), std::invalid_argument);
}

TEST(InjectSpce, ZeroRateIsIdentity) {
  auto ds = blobs(60, 3, 3, 1.0, 1.0, 6);
  auto c = lipb::inject_spce(ds, 0.0, 10);
  EXPECT_TRUE(c.plan.entries.empty());
  EXPECT_EQ(c.data.labels, ds.labels);
}

TEST(InjectSpce, BoundaryPairSwapsFirst) {
  // Class 0 at 0 and 40 degrees, class 1 at 50 and 90: the 40/50 pair is closest.
  auto ds = from_angles({0.0, 40.0, 50.0, 90.0}, {0, 0, 1, 1}, 2);
  auto c = lipb::inject_spce(ds, 0.5, 2);
  ASSERT_EQ(c.plan.entries.size(), 2u);
  EXPECT_EQ(c.plan.entries[0].id, 1u);
  EXPECT_EQ(c.plan.entries[1].id, 2u);
  EXPECT_EQ(c.data.labels, (std::vector<int>{0, 1, 0, 1}));
}

TEST(InjectSpce, SwapsStayInsideInterleavedPair) {
  // Classes 0 and 1 are far apart; classes 2 and 3 alternate around 90 degrees.
  std::vector<double> angles;
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) {
    angles.push_back(-10.0 + i);
    labels.push_back(0);
    angles.push_back(170.0 + i);
    labels.push_back(1);
    angles.push_back(80.0 + i);
    labels.push_back(2 + i % 2);
  }
  auto ds = from_angles(angles, labels, 4);
  auto c = lipb::inject_spce(ds, 0.1, 3);
  ASSERT_EQ(c.plan.entries.size(), 6u);
  for (const auto& e : c.plan.entries) {
    EXPECT_TRUE(e.original >= 2 && e.corrupted >= 2) << e.original << "->" << e.corrupted;
  }
}

TEST(InjectSpce, EachSampleRelabelledOnce) {
  auto ds = blobs(300, 8, 3, 1.0, 1.0, 7);
  auto c = lipb::inject_spce(ds, 0.3, 10);
  std::set<std::uint64_t> ids;
  for (const auto& e : c.plan.entries) {
    EXPECT_NE(e.original, e.corrupted);
    EXPECT_TRUE(ids.insert(e.id).second);
  }
  EXPECT_EQ(ids.size(), 90u);
}

TEST(InjectSpce, FailsWithoutCrossClassNeighbours) {
  Matrix f = Matrix::Identity(4, 4);
  auto ds = lipb::make_dataset(f, {0, 0, 0, 0}, 2);
  EXPECT_THROW(lipb::inject_spce(ds, 0.25, 2), lipb::Error);
}

TEST(Revert, RestoresOriginalLabels) {
  auto ds = blobs(100, 3, 4, 1.0, 1.0, 8);
  auto c = lipb::inject_random(ds, 0.2, RngStream(8));
  EXPECT_EQ(lipb::revert(c.data, c.plan).labels, ds.labels);
  auto mask = lipb::corrupted_mask(c.data, c.plan);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(mask[i], c.data.labels[i] != ds.labels[i]);
  }
}

TEST(NoisePlan, TextRoundTrip) {
  auto ds = blobs(50, 3, 3, 1.0, 1.0, 9);
  auto c = lipb::inject_spce(ds, 0.1, 5);
  std::stringstream ss;
  c.plan.write(ss);
  auto back = lipb::NoisePlan::read(ss);
  EXPECT_DOUBLE_EQ(back.eta, 0.1);
  ASSERT_EQ(back.entries.size(), c.plan.entries.size());
  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].id, c.plan.entries[i].id);
    EXPECT_EQ(back.entries[i].corrupted, c.plan.entries[i].corrupted);
    EXPECT_EQ(back.entries[i].mechanism, lipb::Mechanism::kSpce);
  }
}

TEST(MakeBlobs, ZeroSpreadCollapsesClasses) {
  auto ds = blobs(30, 4, 3, 0.0, 2.0, 10);
  for (std::size_t i = 3; i < ds.size(); ++i) {
    EXPECT_EQ(ds.features.row(static_cast<Eigen::Index>(i)),
              ds.features.row(static_cast<Eigen::Index>(i % 3)));
  }
}

TEST(MakeBlobs, TightClustersAreOneNnSeparable) {
  auto ds = blobs(300, 8, 4, 0.01, 1.0, 11);
  EXPECT_EQ(one_nn_accuracy(ds), 1.0);
}

TEST(MakeBlobs, BalancedClassCounts) {
  auto ds = blobs(3000, 4, 6, 1.0, 1.0, 12);
  std::vector<int> counts(6, 0);
  for (int y : ds.labels) ++counts[static_cast<std::size_t>(y)];
  for (int c : counts) EXPECT_EQ(c, 500);
}
