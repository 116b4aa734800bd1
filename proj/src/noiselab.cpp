#include "lipb/noiselab.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "lipb/error.hpp"

namespace lipb {

std::string_view to_string(Mechanism m) { return m == Mechanism::kRandom ? "random" : "spce"; }

Mechanism parse_mechanism(std::string_view name) {
  if (name == "random") return Mechanism::kRandom;
  if (name == "spce") return Mechanism::kSpce;
  throw std::invalid_argument("unknown noise regime '" + std::string(name) + "'");
}

void NoisePlan::write(std::ostream& os) const {
  os << "# eta " << eta << "\n";
  os << "id\tfrom\tto\tmechanism\n";
  for (const auto& e : entries) {
    os << e.id << '\t' << e.original << '\t' << e.corrupted << '\t' << to_string(e.mechanism)
       << '\n';
  }
}

NoisePlan NoisePlan::read(std::istream& is) {
  NoisePlan plan;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# eta ", 0) == 0) {
      plan.eta = std::stod(line.substr(6));
      continue;
    }
    if (line[0] == '#' || line.rfind("id", 0) == 0) continue;
    std::istringstream row(line);
    NoiseEntry e;
    std::string mech;
    if (!(row >> e.id >> e.original >> e.corrupted >> mech)) {
      throw Error("NoisePlan: malformed row '" + line + "'");
    }
    e.mechanism = parse_mechanism(mech);
    plan.entries.push_back(e);
  }
  return plan;
}

std::size_t plan_size(double eta, std::size_t n) {
  return static_cast<std::size_t>(std::floor(eta * static_cast<double>(n) + 0.5));
}

namespace {

void check_rate(const FeatureDataset& ds, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw std::invalid_argument("noise rate must lie in [0, 1]");
  }
  if (ds.num_classes < 2) {
    throw std::invalid_argument("label corruption needs at least two classes");
  }
  if (plan_size(eta, ds.size()) > ds.size()) {
    throw std::invalid_argument("noise rate selects more samples than exist");
  }
}

}  // namespace

Corruption inject_random(const FeatureDataset& ds, double eta, const RngStream& stream) {
  check_rate(ds, eta);
  const std::size_t n = ds.size();
  const std::size_t count = plan_size(eta, n);

  Corruption out{ds, NoisePlan{eta, {}}};
  Engine engine = stream.engine();
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + engine.below(n - i)]);
  }
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t row = order[k];
    const int from = ds.labels[row];
    int to = static_cast<int>(engine.below(static_cast<std::uint64_t>(ds.num_classes - 1)));
    if (to >= from) ++to;
    out.data.labels[row] = to;
    out.plan.entries.push_back({ds.ids[row], from, to, Mechanism::kRandom});
  }
  return out;
}

Matrix unit_rows(const Matrix& features) {
  Matrix out = features;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

Corruption inject_spce(const FeatureDataset& ds, double eta, std::size_t k) {
  check_rate(ds, eta);
  if (k == 0) throw std::invalid_argument("inject_spce: K must be positive");
  const std::size_t n = ds.size();
  const std::size_t count = plan_size(eta, n);
  Corruption out{ds, NoisePlan{eta, {}}};
  if (count == 0) return out;

  struct Candidate {
    double distance;
    std::size_t query;
    std::size_t neighbour;
  };
  const Matrix unit = unit_rows(ds.features);
  std::vector<Candidate> candidates;
  candidates.reserve(n * k);
  std::vector<Candidate> row_pool;
  Eigen::VectorXd sims(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    sims.noalias() = unit * unit.row(static_cast<Eigen::Index>(i)).transpose();
    row_pool.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (ds.labels[j] != ds.labels[i]) {
        row_pool.push_back({1.0 - sims(static_cast<Eigen::Index>(j)), i, j});
      }
    }
    const std::size_t keep = std::min(k, row_pool.size());
    std::partial_sort(row_pool.begin(), row_pool.begin() + static_cast<std::ptrdiff_t>(keep),
                      row_pool.end(), [](const Candidate& a, const Candidate& b) {
                        return a.distance < b.distance ||
                               (a.distance == b.distance && a.neighbour < b.neighbour);
                      });
    candidates.insert(candidates.end(), row_pool.begin(),
                      row_pool.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.query != b.query) return a.query < b.query;
    return a.neighbour < b.neighbour;
  });

  std::vector<bool> relabelled(n, false);
  std::size_t achievable = 0;
  for (const auto& c : candidates) {
    if (!relabelled[c.query]) {
      relabelled[c.query] = true;
      ++achievable;
    }
  }
  if (achievable < count) {
    throw Error("inject_spce: only " + std::to_string(achievable) +
                " samples have cross-class neighbours, " + std::to_string(count) + " requested");
  }

  std::fill(relabelled.begin(), relabelled.end(), false);
  for (const auto& c : candidates) {
    if (out.plan.entries.size() == count) break;
    if (relabelled[c.query]) continue;
    relabelled[c.query] = true;
    const int from = ds.labels[c.query];
    const int to = ds.labels[c.neighbour];
    out.data.labels[c.query] = to;
    out.plan.entries.push_back({ds.ids[c.query], from, to, Mechanism::kSpce});
  }
  return out;
}

FeatureDataset revert(const FeatureDataset& ds, const NoisePlan& plan) {
  std::unordered_map<std::uint64_t, std::size_t> row_of;
  for (std::size_t i = 0; i < ds.size(); ++i) row_of.emplace(ds.ids[i], i);
  FeatureDataset out = ds;
  for (auto it = plan.entries.rbegin(); it != plan.entries.rend(); ++it) {
    const auto found = row_of.find(it->id);
    if (found == row_of.end()) {
      throw Error("revert: plan names unknown id " + std::to_string(it->id));
    }
    if (out.labels[found->second] != it->corrupted) {
      throw Error("revert: label of id " + std::to_string(it->id) + " does not match the plan");
    }
    out.labels[found->second] = it->original;
  }
  return out;
}

std::vector<bool> corrupted_mask(const FeatureDataset& ds, const NoisePlan& plan) {
  std::unordered_map<std::uint64_t, std::size_t> row_of;
  for (std::size_t i = 0; i < ds.size(); ++i) row_of.emplace(ds.ids[i], i);
  std::vector<bool> mask(ds.size(), false);
  for (const auto& e : plan.entries) {
    const auto found = row_of.find(e.id);
    if (found != row_of.end()) mask[found->second] = true;
  }
  return mask;
}

FeatureDataset make_blobs(const BlobSpec& spec, const RngStream& stream) {
  if (spec.num_classes < 1 || spec.dim == 0 || spec.n < static_cast<std::size_t>(spec.num_classes)) {
    throw std::invalid_argument("make_blobs: need n >= C >= 1 and dim > 0");
  }
  if (spec.spread < 0.0 || spec.separation < 0.0) {
    throw std::invalid_argument("make_blobs: spread and separation must be nonnegative");
  }
  Matrix centres = unit_rows(gaussian_sample(stream.with_purpose("centres"),
                                             static_cast<std::size_t>(spec.num_classes), spec.dim));
  centres *= spec.separation;
  Matrix noise = gaussian_sample(stream.with_purpose("points"), spec.n, spec.dim);

  Matrix features(static_cast<Eigen::Index>(spec.n), static_cast<Eigen::Index>(spec.dim));
  std::vector<int> labels(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(spec.num_classes));
    labels[i] = c;
    features.row(static_cast<Eigen::Index>(i)) =
        centres.row(c) + spec.spread * noise.row(static_cast<Eigen::Index>(i));
  }
  return make_dataset(std::move(features), std::move(labels), spec.num_classes);
}

}  // namespace lipb
