#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

namespace lipb {

inline constexpr double kResponseStdFloor = 1e-6;

// Gaussian response of a scalar run-level signal at each noise rate.
struct QualityModel {
  std::vector<double> eta_grid;  // ascending
  std::vector<double> mean;
  std::vector<double> stddev;    // floored at kResponseStdFloor
  std::vector<double> prior;     // sums to 1

  void write(std::ostream& os) const;
};

// Per rate: sample mean and Bessel-corrected std. Needs >= 2 values per rate.
QualityModel fit_response_model(const std::map<double, std::vector<double>>& calibration);

// Same, but fails if any rate in `eta_grid` is missing from the calibration.
QualityModel fit_response_model(const std::map<double, std::vector<double>>& calibration,
                                 std::span<const double> eta_grid);

struct Posterior {
  std::vector<double> probs;
  std::size_t map_index = 0;  // ties go to the smaller rate
  bool underflow = false;     // every likelihood underflowed; probs are uniform
};

Posterior posterior_eta(const QualityModel& model, double signal);

struct HeldoutObservation {
  double eta = 0.0;
  double signal = 0.0;
};

struct SoftMetrics {
  double soft_accuracy = 0.0;
  double soft_confidence = 0.0;
  std::size_t observations = 0;
};

inline constexpr double kSoftWindow = 0.02;

/// soft_confidence: mean posterior mass within +-window of the true rate.
/// soft_accuracy: fraction of observations whose MAP rate lies in that window.
SoftMetrics soft_metrics(const QualityModel& model, std::span<const HeldoutObservation> heldout,
                         double window = kSoftWindow);

// Seed-indexed signals per rate: calibration[eta][seed_index].
using SeedSignals = std::map<double, std::vector<double>>;

/// Leave-one-seed-out scoring: for each seed index s, fit on every other
/// seed and score the held-out signals of s at every rate.
SoftMetrics leave_one_seed_out(const SeedSignals& signals, double window = kSoftWindow);

// Scores a predictor that always answers `eta_hat` with posterior mass one.
SoftMetrics constant_predictor_metrics(std::span<const HeldoutObservation> heldout, double eta_hat,
                                       double window = kSoftWindow);

struct LookupHistogram {
  std::vector<double> bin_edges;  // signal_bins + 1 ascending edges
  std::vector<double> eta_grid;   // distinct rates, ascending
  std::vector<std::vector<double>> rows;  // bins x rates, row-stochastic where nonempty
  std::vector<bool> empty_row;

  void write(std::ostream& os) const;
};

// Row-normalized 2-D histogram of (signal bin, rate); equal-width bins span
// the observed signal range.
LookupHistogram lookup_histogram(std::span<const HeldoutObservation> observations,
                                 std::size_t signal_bins);

}  // namespace lipb
