#include "lipb/experiment.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "lipb/io.hpp"
#include "lipb/suspicion.hpp"

namespace lipb {

using nlohmann::json;

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::kStandard: return "standard";
    case ModelVariant::kBayes: return "bayes";
    case ModelVariant::kLipbSn1: return "lipb-sn1";
    case ModelVariant::kLipbSn5: return "lipb-sn5";
    case ModelVariant::kCoteach: return "coteach";
    case ModelVariant::kLipbCoteach: return "lipb-coteach";
  }
  return "unknown";
}

ModelVariant parse_model_variant(std::string_view name) {
  for (auto v : {ModelVariant::kStandard, ModelVariant::kBayes, ModelVariant::kLipbSn1,
                 ModelVariant::kLipbSn5, ModelVariant::kCoteach, ModelVariant::kLipbCoteach}) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  if (etas.empty() || seeds.empty()) throw std::invalid_argument("config: need >= 1 rate and seed");
  for (double eta : etas) {
    if (!(eta >= 0.0 && eta <= 0.5)) throw std::invalid_argument("config: eta outside [0, 0.5]");
  }
  if (expected_rate && !(*expected_rate > 0.0 && *expected_rate <= 0.5)) {
    throw std::invalid_argument("config: expected_rate outside (0, 0.5]");
  }
  if (mc_samples < 2) throw std::invalid_argument("config: mc_samples must be >= 2");
  if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0)) {
    throw std::invalid_argument("config: test_fraction outside (0, 1)");
  }
  if (threads == 0) throw std::invalid_argument("config: threads must be >= 1");
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{
      {"data",
       {{"path", c.data.path},
        {"blobs",
         {{"n", c.data.blobs.n},
          {"dim", c.data.blobs.dim},
          {"classes", c.data.blobs.num_classes},
          {"spread", c.data.blobs.spread},
          {"separation", c.data.blobs.separation}}},
        {"seed", c.data.seed},
        {"test_fraction", c.data.test_fraction}}},
      {"regime", to_string(c.regime)},
      {"etas", c.etas},
      {"seeds", c.seeds},
      {"model", to_string(c.model)},
      {"hidden_dim", c.hidden_dim},
      {"beta", c.beta},
      {"prior_std", c.prior_std},
      {"mc_samples", c.mc_samples},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"lr", c.train.optim.lr},
        {"weight_decay", c.train.optim.weight_decay},
        {"beta1", c.train.optim.beta1},
        {"beta2", c.train.optim.beta2},
        {"sn_iters", c.train.sn_iters}}},
      {"forget_mode", c.forget_mode == ForgetMode::kAdaptive ? "adaptive" : "scheduled"},
      {"coteach_ramp_epochs", c.coteach_ramp_epochs},
      {"expected_rate", c.expected_rate ? json(*c.expected_rate) : json(nullptr)},
      {"knn_k", c.knn_k},
      {"spce_k", c.spce_k},
      {"perturbation_scales", c.perturbation_scales},
      {"root_seed", c.root_seed},
  };
}

void from_json(const json& j, ExperimentConfig& c) {
  if (j.contains("data")) {
    const json& d = j.at("data");
    c.data.path = d.value("path", c.data.path);
    if (d.contains("blobs")) {
      const json& b = d.at("blobs");
      c.data.blobs.n = b.value("n", c.data.blobs.n);
      c.data.blobs.dim = b.value("dim", c.data.blobs.dim);
      c.data.blobs.num_classes = b.value("classes", c.data.blobs.num_classes);
      c.data.blobs.spread = b.value("spread", c.data.blobs.spread);
      c.data.blobs.separation = b.value("separation", c.data.blobs.separation);
    }
    c.data.seed = d.value("seed", c.data.seed);
    c.data.test_fraction = d.value("test_fraction", c.data.test_fraction);
  }
  if (j.contains("regime")) c.regime = parse_mechanism(j.at("regime").get<std::string>());
  c.etas = j.value("etas", c.etas);
  c.seeds = j.value("seeds", c.seeds);
  if (j.contains("model")) c.model = parse_model_variant(j.at("model").get<std::string>());
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.beta = j.value("beta", c.beta);
  c.prior_std = j.value("prior_std", c.prior_std);
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  if (j.contains("train")) {
    const json& t = j.at("train");
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.optim.lr = t.value("lr", c.train.optim.lr);
    c.train.optim.weight_decay = t.value("weight_decay", c.train.optim.weight_decay);
    c.train.optim.beta1 = t.value("beta1", c.train.optim.beta1);
    c.train.optim.beta2 = t.value("beta2", c.train.optim.beta2);
    c.train.sn_iters = t.value("sn_iters", c.train.sn_iters);
  }
  if (j.contains("forget_mode")) {
    const auto mode = j.at("forget_mode").get<std::string>();
    if (mode == "adaptive") {
      c.forget_mode = ForgetMode::kAdaptive;
    } else if (mode == "scheduled") {
      c.forget_mode = ForgetMode::kScheduled;
    } else {
      throw std::invalid_argument("config: forget_mode must be adaptive or scheduled");
    }
  }
  c.coteach_ramp_epochs = j.value("coteach_ramp_epochs", c.coteach_ramp_epochs);
  if (j.contains("expected_rate") && !j.at("expected_rate").is_null()) {
    c.expected_rate = j.at("expected_rate").get<double>();
  }
  c.knn_k = j.value("knn_k", c.knn_k);
  c.spce_k = j.value("spce_k", c.spce_k);
  c.perturbation_scales = j.value("perturbation_scales", c.perturbation_scales);
  c.root_seed = j.value("root_seed", c.root_seed);
  c.threads = j.value("threads", c.threads);
  c.output_dir = j.value("output_dir", c.output_dir);
}

SplitData load_split(const DataSource& source) {
  const RngStream stream(source.seed);
  FeatureDataset full = source.path.empty() ? make_blobs(source.blobs, stream.with_purpose("blobs"))
                                            : read_features(source.path);
  const std::size_t n = full.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Engine engine = stream.with_purpose("split").engine();
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[engine.below(i + 1)]);
  const auto n_test = static_cast<std::size_t>(std::llround(source.test_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_test >= n) throw Error("load_split: split leaves an empty partition");
  std::vector<std::size_t> test_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  return {full.subset(train_rows), full.subset(test_rows)};
}

namespace {

Variant header_variant(ModelVariant m) {
  switch (m) {
    case ModelVariant::kStandard:
    case ModelVariant::kCoteach: return Variant::kStandard;
    case ModelVariant::kBayes: return Variant::kBayes;
    case ModelVariant::kLipbSn5: return Variant::kLipbSn5;
    case ModelVariant::kLipbSn1:
    case ModelVariant::kLipbCoteach: return Variant::kLipbSn1;
  }
  return Variant::kLipbSn1;
}

DetectionMetrics detection(std::span<const double> scores, const std::vector<bool>& truth,
                           std::span<const std::uint64_t> ids, double rate) {
  ScoredTruth st{{scores.begin(), scores.end()}, truth, {ids.begin(), ids.end()}};
  DetectionMetrics m;
  m.auc_pr = auc_pr(st);
  m.auc_roc = auc_roc(st);
  const PrecisionRecall pr = precision_recall_at(st, rate);
  m.recall_at_rate = pr.recall;
  m.precision_at_rate = pr.precision;
  return m;
}

}  // namespace

CellResult run_cell(const ExperimentConfig& config, const SplitData& split, double eta,
                    std::uint64_t seed) {
  CellResult cell;
  cell.eta = eta;
  cell.seed = seed;
  cell.n_train = split.train.size();
  cell.n_test = split.test.size();
  const RngStream root = RngStream(config.root_seed).with_run(seed);

  Corruption noisy = config.regime == Mechanism::kRandom
                         ? inject_random(split.train, eta, root.with_purpose("noise"))
                         : inject_spce(split.train, eta, config.spce_k);
  cell.n_corrupted = noisy.plan.entries.size();

  HeaderOptions ho;
  ho.in_dim = split.train.dim();
  ho.hidden_dim = config.hidden_dim;
  ho.num_classes = static_cast<std::size_t>(split.train.num_classes);
  ho.variant = header_variant(config.model);
  ho.beta = config.beta;
  ho.prior_std = config.prior_std;
  ho.mc_samples_infer = config.mc_samples;

  TrainConfig tc = config.train;
  tc.seed = root.with_purpose("train").key();
  tc.batch_size = std::min(tc.batch_size, noisy.data.size());

  BayesHeader model;
  if (config.model == ModelVariant::kCoteach || config.model == ModelVariant::kLipbCoteach) {
    CoteachState state(BayesHeader::create(ho, root.with_purpose("init-f")),
                       BayesHeader::create(ho, root.with_purpose("init-g")), tc.optim);
    state.mode = config.forget_mode;
    state.tau = config.expected_rate.value_or(eta);
    state.ramp_epochs = config.coteach_ramp_epochs;
    const CoteachHistory h = coteach_train(state, noisy.data, tc);
    if (!h.epochs.empty()) cell.final_train_loss = h.epochs.back().loss;
    model = std::move(state.header_f);
  } else {
    model = BayesHeader::create(ho, root.with_purpose("init"));
    const TrainHistory h = train(model, noisy.data, tc);
    if (!h.epochs.empty()) cell.final_train_loss = h.epochs.back().loss;
  }

  {
    BayesHeader probe = model;
    const auto preds =
        predict_mc(probe, split.test.features, config.mc_samples, root.with_purpose("predict-test"));
    cell.test = summarize_predictions(preds, split.test.labels);
  }

  if (cell.n_corrupted > 0) {
    const double rate = std::min(0.5, config.expected_rate.value_or(eta));
    BayesHeader probe = model;
    const auto preds = predict_mc(probe, noisy.data.features, config.mc_samples,
                                  root.with_purpose("predict-train"));
    const KnnScores knn = knn_suspicion(noisy.data, config.knn_k);
    const ScoreVector unc = uncertainty_suspicion(preds);
    const SuspicionReport fused = fuse_adaptive(knn.suspicion.scores, unc.scores, rate, noisy.data.ids);
    const std::vector<bool> truth = corrupted_mask(noisy.data, noisy.plan);
    cell.has_detection = true;
    cell.knn = detection(knn.suspicion.scores, truth, noisy.data.ids, rate);
    cell.uncertainty = detection(unc.scores, truth, noisy.data.ids, rate);
    cell.fused = detection(fused.s_fused, truth, noisy.data.ids, rate);
    cell.w_knn = fused.w_knn;
    cell.b_knn = fused.b_knn;
    cell.b_unc = fused.b_unc;
  }

  if (!config.perturbation_scales.empty()) {
    cell.sweep = perturbation_sweep(model, split.test, config.perturbation_scales, config.mc_samples,
                                    root.with_purpose("sweep"));
  }
  cell.ok = true;
  return cell;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const SplitData split = load_split(config.data);

  ExperimentReport report;
  report.config = config;
  std::vector<double> etas = config.etas;
  std::sort(etas.begin(), etas.end());
  for (double eta : etas) {
    for (std::uint64_t seed : config.seeds) {
      CellResult c;
      c.eta = eta;
      c.seed = seed;
      report.cells.push_back(c);
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < report.cells.size(); i = next++) {
      CellResult& slot = report.cells[i];
      try {
        slot = run_cell(config, split, slot.eta, slot.seed);
      } catch (const std::exception& e) {
        slot.ok = false;
        slot.error = e.what();
      }
    }
  };
  const unsigned workers =
      std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(report.cells.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
    worker();
  }
  return report;
}

std::size_t ExperimentReport::failed_cells() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return !c.ok; }));
}

SeedSignals ExperimentReport::signals(std::string_view which) const {
  const bool inv_conf = which == "inv-confidence";
  if (!inv_conf && which != "uncertainty") {
    throw std::invalid_argument("signal must be inv-confidence or uncertainty");
  }
  SeedSignals out;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    out[c.eta].push_back(inv_conf ? 1.0 - c.test.mean_confidence : c.test.mean_uncertainty);
  }
  return out;
}

namespace {

json detection_json(const DetectionMetrics& m) {
  return {{"auc_pr", m.auc_pr},
          {"auc_roc", m.auc_roc},
          {"recall_at_rate", m.recall_at_rate},
          {"precision_at_rate", m.precision_at_rate}};
}

}  // namespace

json ExperimentReport::to_json() const {
  json cells_json = json::array();
  for (const auto& c : cells) {
    json cj{{"eta", c.eta}, {"seed", c.seed}, {"ok", c.ok}};
    if (!c.ok) {
      cj["error"] = c.error;
      cells_json.push_back(cj);
      continue;
    }
    cj["n_train"] = c.n_train;
    cj["n_test"] = c.n_test;
    cj["n_corrupted"] = c.n_corrupted;
    cj["final_train_loss"] = c.final_train_loss;
    cj["test"] = {{"accuracy", c.test.accuracy},
                  {"mean_confidence", c.test.mean_confidence},
                  {"mean_uncertainty", c.test.mean_uncertainty}};
    if (c.has_detection) {
      cj["detection"] = {{"knn", detection_json(c.knn)},
                         {"uncertainty", detection_json(c.uncertainty)},
                         {"fused", detection_json(c.fused)},
                         {"w_knn", c.w_knn},
                         {"b_knn", c.b_knn},
                         {"b_unc", c.b_unc}};
    }
    if (!c.sweep.empty()) {
      json sweep = json::array();
      for (const auto& p : c.sweep) {
        sweep.push_back({{"scale", p.scale},
                         {"accuracy", p.summary.accuracy},
                         {"mean_confidence", p.summary.mean_confidence},
                         {"mean_uncertainty", p.summary.mean_uncertainty}});
      }
      cj["sweep"] = std::move(sweep);
    }
    cells_json.push_back(std::move(cj));
  }
  json quality = json::object();
  for (const char* which : {"inv-confidence", "uncertainty"}) {
    json per_rate = json::object();
    for (const auto& [eta, values] : signals(which)) {
      per_rate[std::to_string(eta)] = {{"eta", eta}, {"values", values}};
    }
    quality[which] = std::move(per_rate);
  }
  return {{"format", "lipb-report-1"},
          {"config", config},
          {"mc_buffer_mode", "serialized"},
          {"cells", std::move(cells_json)},
          {"failed_cells", failed_cells()},
          {"quality_inputs", std::move(quality)}};
}

void write_cells_table(const ExperimentReport& report, std::ostream& os) {
  os << "eta\tseed\tok\taccuracy\tmean_confidence\tmean_uncertainty\tauc_pr_knn\tauc_pr_unc\t"
        "auc_pr_fused\tauc_roc_knn\tauc_roc_unc\tauc_roc_fused\trecall_knn\trecall_unc\trecall_fused\t"
        "w_knn\n";
  for (const auto& c : report.cells) {
    os << c.eta << '\t' << c.seed << '\t' << (c.ok ? 1 : 0) << '\t' << c.test.accuracy << '\t'
       << c.test.mean_confidence << '\t' << c.test.mean_uncertainty;
    if (c.has_detection) {
      os << '\t' << c.knn.auc_pr << '\t' << c.uncertainty.auc_pr << '\t' << c.fused.auc_pr << '\t'
         << c.knn.auc_roc << '\t' << c.uncertainty.auc_roc << '\t' << c.fused.auc_roc << '\t'
         << c.knn.recall_at_rate << '\t' << c.uncertainty.recall_at_rate << '\t'
         << c.fused.recall_at_rate << '\t' << c.w_knn;
    } else {
      os << "\tnan\tnan\tnan\tnan\tnan\tnan\tnan\tnan\tnan\tnan";
    }
    os << '\n';
  }
}

void write_sweep_table(const ExperimentReport& report, std::ostream& os) {
  struct Acc {
    std::vector<double> acc, conf, unc;
  };
  std::map<std::pair<double, double>, Acc> groups;
  for (const auto& c : report.cells) {
    if (!c.ok) continue;
    for (const auto& p : c.sweep) {
      Acc& a = groups[{c.eta, p.scale}];
      a.acc.push_back(p.summary.accuracy);
      a.conf.push_back(p.summary.mean_confidence);
      a.unc.push_back(p.summary.mean_uncertainty);
    }
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{m, sd};
  };
  os << "eta\tscale\taccuracy\taccuracy_std\tconfidence\tconfidence_std\tuncertainty\t"
        "uncertainty_std\n";
  for (const auto& [key, a] : groups) {
    const auto [am, as] = mean_std(a.acc);
    const auto [cm, cs] = mean_std(a.conf);
    const auto [um, us] = mean_std(a.unc);
    os << key.first << '\t' << key.second << '\t' << am << '\t' << as << '\t' << cm << '\t' << cs
       << '\t' << um << '\t' << us << '\n';
  }
}

}  // namespace lipb
