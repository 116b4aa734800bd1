#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "lipb/coteach.hpp"
#include "lipb/noiselab.hpp"
#include "lipb/numkit.hpp"

using lipb::BayesHeader;
using lipb::CoteachState;
using lipb::Matrix;
using lipb::RngStream;

namespace {

// Distance in units in the last place.
std::int64_t ulps(double a, double b) {
  std::int64_t ia, ib;
  std::memcpy(&ia, &a, sizeof a);
  std::memcpy(&ib, &b, sizeof b);
  return std::llabs(ia - ib);
}

std::vector<int> agreeing(std::size_t n, std::size_t differ) {
  std::vector<int> v(n, 0);
  for (std::size_t i = 0; i < differ; ++i) v[i] = 1;
  return v;
}

BayesHeader header(std::uint64_t seed) {
  lipb::HeaderOptions o;
  o.in_dim = 5;
  o.hidden_dim = 4;
  o.num_classes = 3;
  return BayesHeader::create(o, RngStream(seed).with_purpose("init"));
}

struct Batch {
  Matrix z;
  std::vector<int> y;
  std::vector<std::uint64_t> ids;
};

Batch batch(std::size_t n, std::uint64_t seed) {
  auto ds = lipb::make_blobs({n, 5, 3, 1.0, 2.0}, RngStream(seed).with_purpose("data"));
  return {ds.features, ds.labels, ds.ids};
}

void expect_same(const BayesHeader& a, const BayesHeader& b) {
  EXPECT_EQ(a.layer1.mu, b.layer1.mu);
  EXPECT_EQ(a.layer1.rho, b.layer1.rho);
  EXPECT_EQ(a.layer2.mu, b.layer2.mu);
  EXPECT_EQ(a.layer2.rho, b.layer2.rho);
  EXPECT_EQ(a.layer1.u_buffer, b.layer1.u_buffer);
  EXPECT_EQ(a.layer2.u_buffer, b.layer2.u_buffer);
}

}  // namespace

TEST(AdaptiveForgetRate, ReferenceValues) {
  const std::vector<int> f(10, 0);
  EXPECT_EQ(lipb::adaptive_forget_rate(f, agreeing(10, 0)), 0.1);
  EXPECT_EQ(lipb::adaptive_forget_rate(f, agreeing(10, 5)), 0.2);
  // 0.1 + 0.2 has no exact binary representation; one rounding step is allowed.
  EXPECT_LE(ulps(lipb::adaptive_forget_rate(f, agreeing(10, 10)), 0.3), 1);
}

TEST(AdaptiveForgetRate, ClipsAtMaximum) {
  const std::vector<int> f(4, 0);
  EXPECT_EQ(lipb::adaptive_forget_rate(f, agreeing(4, 4), 0.4, 0.2, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(lipb::disagreement_fraction(f, agreeing(4, 1)), 0.25);
}

TEST(ScheduledKeepRate, LinearRampThenFlat) {
  EXPECT_EQ(lipb::scheduled_keep_rate(0, 0.2, 10), 1.0);
  EXPECT_DOUBLE_EQ(lipb::scheduled_keep_rate(5, 0.2, 10), 0.9);
  EXPECT_DOUBLE_EQ(lipb::scheduled_keep_rate(10, 0.2, 10), 0.8);
  EXPECT_DOUBLE_EQ(lipb::scheduled_keep_rate(40, 0.2, 10), 0.8);
}

TEST(KeptCount, FloorWithMinimumOne) {
  EXPECT_EQ(lipb::kept_count(0.3, 10), 7u);
  EXPECT_EQ(lipb::kept_count(0.0, 64), 64u);
  EXPECT_EQ(lipb::kept_count(0.99, 10), 1u);
  EXPECT_EQ(lipb::kept_count(0.25, 7), 5u);
}

TEST(SelectSmallLoss, TiesByIdAndSortedRows) {
  std::vector<double> loss{0.3, 0.1, 0.3, 0.2, 0.3};
  std::vector<std::uint64_t> ids{9, 8, 2, 7, 5};
  EXPECT_EQ(lipb::select_small_loss(loss, ids, 3), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(lipb::select_small_loss(loss, ids, 4), (std::vector<std::size_t>{1, 2, 3, 4}));
}

TEST(CoteachStep, KeepsSevenOfTen) {
  CoteachState st(header(1), header(2), {});
  st.mode = lipb::ForgetMode::kScheduled;
  st.tau = 0.3;
  st.ramp_epochs = 1;
  st.epoch = 5;
  Batch b = batch(10, 1);
  auto info = lipb::coteach_step(st, b.z, b.y, b.ids, RngStream(1).with_purpose("f"),
                                 RngStream(1).with_purpose("g"));
  EXPECT_EQ(info.kept, 7u);
  EXPECT_EQ(info.kept_by_f.size(), 7u);
  EXPECT_EQ(info.kept_by_g.size(), 7u);
  EXPECT_FALSE(info.kept_floor_hit);
}

TEST(CoteachStep, AdaptiveRateWithinBounds) {
  CoteachState st(header(3), header(4), {});
  Batch b = batch(32, 3);
  auto info = lipb::coteach_step(st, b.z, b.y, b.ids, RngStream(3).with_purpose("f"),
                                 RngStream(3).with_purpose("g"));
  EXPECT_GE(info.forget_rate, 0.1);
  EXPECT_LE(info.forget_rate, 0.3 + 1e-15);
  EXPECT_EQ(info.kept, lipb::kept_count(info.forget_rate, 32));
}

TEST(CoteachStep, IdenticalPeersStayIdentical) {
  CoteachState st(header(5), header(5), {});
  const RngStream s(5);
  for (std::uint64_t t = 0; t < 6; ++t) {
    Batch b = batch(16, 10 + t);
    auto info = lipb::coteach_step(st, b.z, b.y, b.ids, s.with_step(t), s.with_step(t));
    EXPECT_EQ(info.kept_by_f, info.kept_by_g);
  }
  expect_same(st.header_f, st.header_g);
}

TEST(CoteachStep, ZeroForgetRateIsPlainTraining) {
  CoteachState st(header(6), header(7), {});
  st.mode = lipb::ForgetMode::kScheduled;
  st.tau = 0.0;
  BayesHeader f = header(6), g = header(7);
  lipb::AdamW of(f, {}), og(g, {});
  for (std::uint64_t t = 0; t < 4; ++t) {
    Batch b = batch(12, 20 + t);
    const RngStream sf = RngStream(6).with_step(t), sg = RngStream(7).with_step(t);
    auto info = lipb::coteach_step(st, b.z, b.y, b.ids, sf, sg);
    EXPECT_EQ(info.kept, 12u);
    lipb::train_step(f, of, b.z, b.y, sf);
    lipb::train_step(g, og, b.z, b.y, sg);
  }
  expect_same(st.header_f, f);
  expect_same(st.header_g, g);
}

TEST(CoteachTrain, RunsAndRecordsForgetRates) {
  auto ds = lipb::make_blobs({120, 5, 3, 0.5, 3.0}, RngStream(8).with_purpose("data"));
  CoteachState st(header(8), header(9), {});
  lipb::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.seed = 8;
  auto hist = lipb::coteach_train(st, ds, cfg);
  ASSERT_EQ(hist.epochs.size(), 3u);
  for (double r : hist.mean_forget_rate) {
    EXPECT_GE(r, 0.1);
    EXPECT_LE(r, 0.5);
  }
}
