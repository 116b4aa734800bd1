// lipb: command-line front end to the library.
//
// Exit status: 0 ok, 1 runtime failure or failed experiment cells, 2 usage.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lipb/evalkit.hpp"
#include "lipb/experiment.hpp"
#include "lipb/io.hpp"
#include "lipb/noiselab.hpp"
#include "lipb/quality.hpp"
#include "lipb/suspicion.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw lipb::Error("cannot write " + path.string());
  os.precision(17);
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw lipb::Error("cannot read " + path.string());
  return is;
}

json read_json(const fs::path& path) {
  auto is = open_in(path);
  return json::parse(is);
}

lipb::SeedSignals signals_from_report(const json& report, const std::string& which) {
  lipb::SeedSignals out;
  for (const auto& [key, entry] : report.at("quality_inputs").at(which).items()) {
    out[entry.at("eta").get<double>()] = entry.at("values").get<std::vector<double>>();
  }
  if (out.empty()) throw lipb::Error("report has no successful cells");
  return out;
}

// "id s_knn s_unc" rows after one header line.
struct ChannelTable {
  std::vector<std::uint64_t> ids;
  std::vector<double> s_knn, s_unc;
};

ChannelTable read_channels(const fs::path& path) {
  auto is = open_in(path);
  std::string line;
  std::getline(is, line);
  ChannelTable t;
  std::uint64_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::uint64_t id;
    double k, u;
    if (!(ss >> id >> k >> u)) throw lipb::FormatError("bad channel row", row);
    t.ids.push_back(id);
    t.s_knn.push_back(k);
    t.s_unc.push_back(u);
  }
  return t;
}

struct Cli {
  CLI::App app{"Lipschitz-constrained Bayesian header and label-noise toolchain"};

  // blobs
  lipb::BlobSpec blobs{3000, 32, 6, 2.4, 10.0};
  std::uint64_t seed = 0;

  // shared paths
  std::string in, out, plan, checkpoint, report, config;

  // inject
  double eta = 0.1;
  std::string regime = "random";
  std::size_t k = 10;

  // train / eval / suspect
  std::string variant = "lipb-sn1";
  std::size_t hidden = 0;
  lipb::TrainConfig train{40, 64, {}, 0, 0};
  double beta = 1e-4;
  int samples = 50;

  // fuse / quality / report
  double expected_rate = 0.1;
  std::string signal = "inv-confidence";
  std::size_t bins = 10;

  // run overrides
  std::vector<double> etas;
  std::vector<std::uint64_t> seeds;
  std::string model;
  unsigned threads = 0;
  std::string data;
};

int cmd_blobs(const Cli& c) {
  auto ds = lipb::make_blobs(c.blobs, lipb::RngStream(c.seed).with_purpose("blobs"));
  lipb::write_features(ds, c.out);
  std::cout << "wrote " << ds.size() << " x " << ds.dim() << " (" << ds.num_classes
            << " classes) to " << c.out << '\n';
  return 0;
}

int cmd_inject(const Cli& c) {
  const auto ds = lipb::read_features(c.in);
  const auto mech = lipb::parse_mechanism(c.regime);
  auto corr = mech == lipb::Mechanism::kSpce
                  ? lipb::inject_spce(ds, c.eta, c.k)
                  : lipb::inject_random(ds, c.eta, lipb::RngStream(c.seed).with_purpose("noise"));
  lipb::write_features(corr.data, c.out);
  if (!c.plan.empty()) {
    auto os = open_out(c.plan);
    corr.plan.write(os);
  }
  std::cout << corr.plan.entries.size() << " labels changed\n";
  return 0;
}

int cmd_train(const Cli& c) {
  const auto ds = lipb::read_features(c.in);
  lipb::HeaderOptions o;
  o.in_dim = ds.dim();
  o.hidden_dim = c.hidden;
  o.num_classes = static_cast<std::size_t>(ds.num_classes);
  o.variant = lipb::parse_variant(c.variant);
  o.beta = c.beta;
  auto h = lipb::BayesHeader::create(o, lipb::RngStream(c.seed).with_purpose("init"));
  lipb::TrainConfig cfg = c.train;
  cfg.seed = c.seed;
  const auto hist = lipb::train(h, ds, cfg);
  lipb::save_checkpoint(h, c.checkpoint);
  if (!hist.epochs.empty()) {
    std::cout << "final loss " << hist.epochs.back().loss << ", train accuracy "
              << hist.epochs.back().accuracy << '\n';
  }
  return 0;
}

int cmd_eval(const Cli& c) {
  const auto ds = lipb::read_features(c.in);
  auto h = lipb::load_checkpoint(c.checkpoint);
  const auto preds =
      lipb::predict_mc(h, ds.features, c.samples, lipb::RngStream(c.seed).with_purpose("infer"));
  const auto s = lipb::summarize_predictions(preds, ds.labels);
  if (!c.out.empty()) {
    auto os = open_out(c.out);
    os << "id\tlabel\tpredicted\tconfidence\tuncertainty\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
      os << ds.ids[i] << '\t' << ds.labels[i] << '\t' << preds[i].predicted << '\t'
         << preds[i].confidence << '\t' << preds[i].uncertainty << '\n';
    }
  }
  std::cout << json{{"accuracy", s.accuracy},
                    {"mean_confidence", s.mean_confidence},
                    {"mean_uncertainty", s.mean_uncertainty}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_suspect(const Cli& c) {
  const auto ds = lipb::read_features(c.in);
  auto h = lipb::load_checkpoint(c.checkpoint);
  const auto knn = lipb::knn_suspicion(ds, c.k);
  const auto preds =
      lipb::predict_mc(h, ds.features, c.samples, lipb::RngStream(c.seed).with_purpose("infer"));
  const auto unc = lipb::uncertainty_suspicion(preds);
  auto os = open_out(c.out);
  os << "id\ts_knn\ts_unc\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << ds.ids[i] << '\t' << knn.suspicion.scores[i] << '\t' << unc.scores[i] << '\n';
  }
  if (knn.suspicion.degenerate) std::cerr << "warning: kNN agreement is constant\n";
  if (unc.degenerate) std::cerr << "warning: uncertainty is constant\n";
  return 0;
}

int cmd_fuse(const Cli& c) {
  const auto t = read_channels(c.in);
  const auto rep = lipb::fuse_adaptive(t.s_knn, t.s_unc, c.expected_rate, t.ids);
  auto os = open_out(c.out);
  rep.write(os);
  json summary{{"n", t.ids.size()},
               {"flagged", rep.flagged_count()},
               {"w_knn", rep.w_knn},
               {"b_knn", rep.b_knn},
               {"b_unc", rep.b_unc}};
  if (!c.plan.empty()) {
    auto is = open_in(c.plan);
    const auto plan = lipb::NoisePlan::read(is);
    std::map<std::uint64_t, bool> noisy;
    for (const auto& e : plan.entries) noisy[e.id] = true;
    lipb::ScoredTruth st{rep.s_fused, {}, t.ids};
    for (auto id : t.ids) st.truth.push_back(noisy.count(id) > 0);
    const auto pr = lipb::precision_recall_at(st, c.expected_rate);
    summary["auc_pr"] = lipb::auc_pr(st);
    summary["auc_roc"] = lipb::auc_roc(st);
    summary["precision_at_rate"] = pr.precision;
    summary["recall_at_rate"] = pr.recall;
  }
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_quality(const Cli& c) {
  const auto sig = signals_from_report(read_json(c.report), c.signal);
  const auto loso = lipb::leave_one_seed_out(sig);
  std::vector<lipb::HeldoutObservation> all;
  for (const auto& [e, values] : sig) {
    for (double v : values) all.push_back({e, v});
  }
  const auto base = lipb::constant_predictor_metrics(all, sig.begin()->first);
  std::cout << json{{"signal", c.signal},
                    {"soft_accuracy", loso.soft_accuracy},
                    {"soft_confidence", loso.soft_confidence},
                    {"observations", loso.observations},
                    {"baseline_soft_accuracy", base.soft_accuracy},
                    {"baseline_soft_confidence", base.soft_confidence}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_report(const Cli& c) {
  const auto sig = signals_from_report(read_json(c.report), c.signal);
  const auto model = lipb::fit_response_model(sig);
  std::vector<lipb::HeldoutObservation> all;
  for (const auto& [e, values] : sig) {
    for (double v : values) all.push_back({e, v});
  }
  const auto hist = lipb::lookup_histogram(all, c.bins);
  const fs::path dir(c.out);
  {
    auto os = open_out(dir / "quality_model.tsv");
    model.write(os);
  }
  {
    auto os = open_out(dir / "lookup.tsv");
    hist.write(os);
  }
  std::cout << "wrote " << (dir / "quality_model.tsv").string() << " and "
            << (dir / "lookup.tsv").string() << '\n';
  return 0;
}

int cmd_run(const Cli& c) {
  lipb::ExperimentConfig cfg;
  if (!c.config.empty()) cfg = read_json(c.config).get<lipb::ExperimentConfig>();
  if (!c.etas.empty()) cfg.etas = c.etas;
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (!c.model.empty()) cfg.model = lipb::parse_model_variant(c.model);
  if (c.app.get_subcommand("run")->count("--regime")) cfg.regime = lipb::parse_mechanism(c.regime);
  if (c.threads > 0) cfg.threads = c.threads;
  if (!c.data.empty()) cfg.data.path = c.data;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (cfg.output_dir.empty()) cfg.output_dir = "lipb-out";
  cfg.validate();

  const auto rep = lipb::run_experiment(cfg);
  const fs::path dir(cfg.output_dir);
  {
    auto os = open_out(dir / "report.json");
    os << rep.to_json().dump(2) << '\n';
  }
  {
    auto os = open_out(dir / "cells.tsv");
    lipb::write_cells_table(rep, os);
  }
  {
    auto os = open_out(dir / "sweep.tsv");
    lipb::write_sweep_table(rep, os);
  }
  std::cout << rep.cells.size() << " cells, " << rep.failed_cells() << " failed; output in "
            << dir.string() << '\n';
  for (const auto& cell : rep.cells) {
    if (!cell.ok) std::cerr << "cell eta=" << cell.eta << " seed=" << cell.seed << ": " << cell.error << '\n';
  }
  return rep.failed_cells() == 0 ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  Cli c;
  CLI::App& app = c.app;
  app.require_subcommand(1);

  auto* blobs = app.add_subcommand("blobs", "Write a synthetic Gaussian-blob feature file");
  blobs->add_option("--n", c.blobs.n, "Samples")->capture_default_str();
  blobs->add_option("--dim", c.blobs.dim, "Feature dimension")->capture_default_str();
  blobs->add_option("--classes", c.blobs.num_classes, "Classes")->capture_default_str();
  blobs->add_option("--spread", c.blobs.spread, "Per-coordinate cluster std")->capture_default_str();
  blobs->add_option("--separation", c.blobs.separation, "Norm of the class centres")
      ->capture_default_str();
  blobs->add_option("--seed", c.seed)->capture_default_str();
  blobs->add_option("--out", c.out, "Output file (.csv or FSET1)")->required();

  auto* inject = app.add_subcommand("inject", "Corrupt labels and record the noise plan");
  inject->add_option("--in", c.in)->required()->check(CLI::ExistingFile);
  inject->add_option("--out", c.out)->required();
  inject->add_option("--plan", c.plan, "Where to write the noise plan");
  inject->add_option("--eta", c.eta)->capture_default_str()->check(CLI::Range(0.0, 0.5));
  inject->add_option("--regime", c.regime)
      ->capture_default_str()
      ->check(CLI::IsMember({"random", "spce"}));
  inject->add_option("--k", c.k, "Cross-class neighbours for spce")->capture_default_str();
  inject->add_option("--seed", c.seed)->capture_default_str();

  auto add_header_opts = [&](CLI::App* s) {
    s->add_option("--variant", c.variant)
        ->capture_default_str()
        ->check(CLI::IsMember({"standard", "bayes", "lipb-sn1", "lipb-sn5"}));
    s->add_option("--hidden", c.hidden, "Hidden width, 0 = input dimension")->capture_default_str();
    s->add_option("--epochs", c.train.epochs)->capture_default_str();
    s->add_option("--batch", c.train.batch_size)->capture_default_str();
    s->add_option("--lr", c.train.optim.lr)->capture_default_str();
    s->add_option("--beta", c.beta, "KL weight")->capture_default_str();
  };
  auto* train = app.add_subcommand("train", "Train a header and save a checkpoint");
  train->add_option("--in", c.in)->required()->check(CLI::ExistingFile);
  train->add_option("--checkpoint", c.checkpoint)->required();
  train->add_option("--seed", c.seed)->capture_default_str();
  add_header_opts(train);

  auto* eval = app.add_subcommand("eval", "MC prediction summary of a checkpoint on a feature file");
  eval->add_option("--in", c.in)->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", c.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--samples", c.samples)->capture_default_str();
  eval->add_option("--seed", c.seed)->capture_default_str();
  eval->add_option("--out", c.out, "Per-sample prediction table");

  auto* suspect = app.add_subcommand("suspect", "kNN and uncertainty suspicion channels");
  suspect->add_option("--in", c.in)->required()->check(CLI::ExistingFile);
  suspect->add_option("--checkpoint", c.checkpoint)->required()->check(CLI::ExistingFile);
  suspect->add_option("--out", c.out)->required();
  suspect->add_option("--k", c.k)->capture_default_str();
  suspect->add_option("--samples", c.samples)->capture_default_str();
  suspect->add_option("--seed", c.seed)->capture_default_str();

  auto* fuse = app.add_subcommand("fuse", "Fuse suspicion channels and flag the top fraction");
  fuse->add_option("--in", c.in, "Table written by suspect")->required()->check(CLI::ExistingFile);
  fuse->add_option("--out", c.out)->required();
  fuse->add_option("--expected-rate", c.expected_rate)
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  fuse->add_option("--plan", c.plan, "Noise plan to score the detection against")
      ->check(CLI::ExistingFile);

  auto* quality = app.add_subcommand("quality", "Leave-one-seed-out quality metrics of a run report");
  quality->add_option("--report", c.report)->required()->check(CLI::ExistingFile);
  quality->add_option("--signal", c.signal)
      ->capture_default_str()
      ->check(CLI::IsMember({"inv-confidence", "uncertainty"}));

  auto* report = app.add_subcommand("report", "Quality model and lookup histogram of a run report");
  report->add_option("--report", c.report)->required()->check(CLI::ExistingFile);
  report->add_option("--out", c.out, "Output directory")->required();
  report->add_option("--signal", c.signal)
      ->capture_default_str()
      ->check(CLI::IsMember({"inv-confidence", "uncertainty"}));
  report->add_option("--bins", c.bins)->capture_default_str()->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "Full (eta, seed) grid from a JSON config");
  run->add_option("--config", c.config)->check(CLI::ExistingFile);
  run->add_option("--out", c.out, "Output directory");
  run->add_option("--data", c.data, "Feature file instead of synthetic blobs")
      ->check(CLI::ExistingFile);
  run->add_option("--etas", c.etas)->delimiter(',');
  run->add_option("--seeds", c.seeds)->delimiter(',');
  run->add_option("--model", c.model)
      ->check(CLI::IsMember(
          {"standard", "bayes", "lipb-sn1", "lipb-sn5", "coteach", "lipb-coteach"}));
  run->add_option("--regime", c.regime)->check(CLI::IsMember({"random", "spce"}));
  run->add_option("--threads", c.threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*blobs) return cmd_blobs(c);
    if (*inject) return cmd_inject(c);
    if (*train) return cmd_train(c);
    if (*eval) return cmd_eval(c);
    if (*suspect) return cmd_suspect(c);
    if (*fuse) return cmd_fuse(c);
    if (*quality) return cmd_quality(c);
    if (*report) return cmd_report(c);
    if (*run) return cmd_run(c);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
