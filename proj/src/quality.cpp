#include "lipb/quality.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>

#include "lipb/error.hpp"

namespace lipb {
namespace {

// Rates come from decimal config values; compare them with a tolerance.
bool within_window(double a, double b, double window) { return std::abs(a - b) <= window + 1e-12; }

}  // namespace

void QualityModel::write(std::ostream& os) const {
  os << "eta\tmean\tstd\tprior\n";
  for (std::size_t k = 0; k < eta_grid.size(); ++k) {
    os << eta_grid[k] << '\t' << mean[k] << '\t' << stddev[k] << '\t' << prior[k] << '\n';
  }
}

QualityModel fit_response_model(const std::map<double, std::vector<double>>& calibration) {
  if (calibration.empty()) throw Error("fit_response_model: no calibration data");
  QualityModel m;
  for (const auto& [eta, values] : calibration) {
    if (values.size() < 2) {
      throw Error("fit_response_model: rate " + std::to_string(eta) + " has fewer than 2 seeds");
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    m.eta_grid.push_back(eta);
    m.mean.push_back(mean);
    m.stddev.push_back(std::max(sd, kResponseStdFloor));
  }
  m.prior.assign(m.eta_grid.size(), 1.0 / static_cast<double>(m.eta_grid.size()));
  return m;
}

QualityModel fit_response_model(const std::map<double, std::vector<double>>& calibration,
                                 std::span<const double> eta_grid) {
  for (double eta : eta_grid) {
    const bool found = std::any_of(calibration.begin(), calibration.end(),
                                   [&](const auto& kv) { return within_window(kv.first, eta, 0.0); });
    if (!found) {
      throw Error("fit_response_model: rate " + std::to_string(eta) + " missing from calibration");
    }
  }
  return fit_response_model(calibration);
}

Posterior posterior_eta(const QualityModel& model, double signal) {
  const std::size_t k = model.eta_grid.size();
  if (k == 0 || model.mean.size() != k || model.stddev.size() != k || model.prior.size() != k) {
    throw std::invalid_argument("posterior_eta: model is not fitted");
  }
  Posterior post;
  std::vector<double> log_lik(k);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < k; ++j) {
    const double z = (signal - model.mean[j]) / model.stddev[j];
    log_lik[j] = -0.5 * z * z - std::log(model.stddev[j]) - 0.5 * std::log(2.0 * std::numbers::pi);
    best = std::max(best, log_lik[j]);
  }
  if (!(best >= std::log(DBL_MIN))) {
    post.underflow = true;
    post.probs.assign(k, 1.0 / static_cast<double>(k));
    post.map_index = 0;
    return post;
  }
  post.probs.resize(k);
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    post.probs[j] = model.prior[j] * std::exp(log_lik[j] - best);
    total += post.probs[j];
  }
  for (double& p : post.probs) p /= total;
  post.map_index = static_cast<std::size_t>(
      std::max_element(post.probs.begin(), post.probs.end()) - post.probs.begin());
  return post;
}

SoftMetrics soft_metrics(const QualityModel& model, std::span<const HeldoutObservation> heldout,
                         double window) {
  if (heldout.empty()) throw std::invalid_argument("soft_metrics: no observations");
  SoftMetrics out;
  std::size_t hits = 0;
  double mass = 0.0;
  for (const auto& obs : heldout) {
    const Posterior post = posterior_eta(model, obs.signal);
    for (std::size_t j = 0; j < post.probs.size(); ++j) {
      if (within_window(model.eta_grid[j], obs.eta, window)) mass += post.probs[j];
    }
    if (within_window(model.eta_grid[post.map_index], obs.eta, window)) ++hits;
  }
  out.observations = heldout.size();
  out.soft_accuracy = static_cast<double>(hits) / static_cast<double>(heldout.size());
  out.soft_confidence = std::min(1.0, mass / static_cast<double>(heldout.size()));
  return out;
}

SoftMetrics leave_one_seed_out(const SeedSignals& signals, double window) {
  std::size_t seeds = 0;
  for (const auto& [eta, values] : signals) {
    if (seeds == 0) seeds = values.size();
    if (values.size() != seeds) throw Error("leave_one_seed_out: ragged seed counts");
  }
  if (seeds < 3) throw Error("leave_one_seed_out: need at least three seeds per rate");

  double acc = 0.0, conf = 0.0;
  std::size_t total = 0;
  for (std::size_t held = 0; held < seeds; ++held) {
    std::map<double, std::vector<double>> fit;
    std::vector<HeldoutObservation> test;
    for (const auto& [eta, values] : signals) {
      for (std::size_t s = 0; s < seeds; ++s) {
        if (s == held) {
          test.push_back({eta, values[s]});
        } else {
          fit[eta].push_back(values[s]);
        }
      }
    }
    const SoftMetrics m = soft_metrics(fit_response_model(fit), test, window);
    acc += m.soft_accuracy * static_cast<double>(m.observations);
    conf += m.soft_confidence * static_cast<double>(m.observations);
    total += m.observations;
  }
  return {acc / static_cast<double>(total), conf / static_cast<double>(total), total};
}

SoftMetrics constant_predictor_metrics(std::span<const HeldoutObservation> heldout, double eta_hat,
                                       double window) {
  if (heldout.empty()) throw std::invalid_argument("constant_predictor_metrics: no observations");
  std::size_t hits = 0;
  for (const auto& obs : heldout) hits += within_window(eta_hat, obs.eta, window) ? 1 : 0;
  const double frac = static_cast<double>(hits) / static_cast<double>(heldout.size());
  return {frac, frac, heldout.size()};
}

void LookupHistogram::write(std::ostream& os) const {
  os << "bin_lo\tbin_hi";
  for (double eta : eta_grid) os << "\teta_" << eta;
  os << '\n';
  for (std::size_t b = 0; b < rows.size(); ++b) {
    os << bin_edges[b] << '\t' << bin_edges[b + 1];
    for (double p : rows[b]) os << '\t' << p;
    os << '\n';
  }
}

LookupHistogram lookup_histogram(std::span<const HeldoutObservation> observations,
                                 std::size_t signal_bins) {
  if (observations.empty()) throw std::invalid_argument("lookup_histogram: no observations");
  if (signal_bins == 0) throw std::invalid_argument("lookup_histogram: need at least one bin");
  LookupHistogram h;
  std::set<double> rates;
  double lo = observations.front().signal, hi = lo;
  for (const auto& o : observations) {
    rates.insert(o.eta);
    lo = std::min(lo, o.signal);
    hi = std::max(hi, o.signal);
  }
  h.eta_grid.assign(rates.begin(), rates.end());
  const double width = hi > lo ? (hi - lo) / static_cast<double>(signal_bins) : 1.0;
  for (std::size_t b = 0; b <= signal_bins; ++b) h.bin_edges.push_back(lo + width * static_cast<double>(b));

  std::vector<std::vector<double>> counts(signal_bins, std::vector<double>(h.eta_grid.size(), 0.0));
  for (const auto& o : observations) {
    auto bin = static_cast<std::size_t>((o.signal - lo) / width);
    bin = std::min(bin, signal_bins - 1);
    const auto col = static_cast<std::size_t>(
        std::lower_bound(h.eta_grid.begin(), h.eta_grid.end(), o.eta) - h.eta_grid.begin());
    counts[bin][col] += 1.0;
  }
  for (auto& row : counts) {
    double total = 0.0;
    for (double c : row) total += c;
    h.empty_row.push_back(total == 0.0);
    if (total > 0.0) {
      for (double& c : row) c /= total;
    }
  }
  h.rows = std::move(counts);
  return h;
}

}  // namespace lipb
