#include <fstream>
#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lipb/coteach.hpp"
#include "lipb/evalkit.hpp"
#include "lipb/experiment.hpp"
#include "lipb/io.hpp"
#include "lipb/noiselab.hpp"
#include "lipb/quality.hpp"
#include "lipb/suspicion.hpp"

namespace py = pybind11;
using namespace lipb;

namespace {

std::string plan_text(const NoisePlan& plan) {
  std::ostringstream os;
  os.precision(17);
  plan.write(os);
  return os.str();
}

ScoredTruth scored(std::vector<double> scores, std::vector<bool> truth) {
  return {std::move(scores), std::move(truth), {}};
}

}  // namespace

PYBIND11_MODULE(_lipb, m) {
  m.doc() = "Bayesian header with spectral normalization and label-noise tools.";

  // Translators run newest first, so the subclass goes last.
  auto base = py::register_exception<Error>(m, "LipbError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  py::class_<FeatureDataset>(m, "FeatureDataset")
      .def(py::init(&make_dataset), py::arg("features"), py::arg("labels"),
           py::arg("num_classes"))
      .def_readonly("features", &FeatureDataset::features)
      .def_readonly("labels", &FeatureDataset::labels)
      .def_readonly("ids", &FeatureDataset::ids)
      .def_readonly("num_classes", &FeatureDataset::num_classes)
      .def("__len__", &FeatureDataset::size)
      .def_property_readonly("dim", &FeatureDataset::dim);

  m.def("read_features", &read_features, py::arg("path"));
  m.def("write_features", &write_features, py::arg("dataset"), py::arg("path"));
  m.def(
      "make_blobs",
      [](std::size_t n, std::size_t dim, int classes, double spread, double separation,
         std::uint64_t seed) {
        return make_blobs({n, dim, classes, spread, separation},
                          RngStream(seed).with_purpose("blobs"));
      },
      py::arg("n"), py::arg("dim"), py::arg("num_classes"), py::arg("spread") = 1.0,
      py::arg("separation") = 1.0, py::arg("seed") = 0);

  // Returns (corrupted dataset, noise plan as text).
  m.def(
      "inject",
      [](const FeatureDataset& ds, double eta, const std::string& regime, std::size_t k,
         std::uint64_t seed) {
        auto c = parse_mechanism(regime) == Mechanism::kSpce
                     ? inject_spce(ds, eta, k)
                     : inject_random(ds, eta, RngStream(seed).with_purpose("noise"));
        return py::make_tuple(c.data, plan_text(c.plan));
      },
      py::arg("dataset"), py::arg("eta"), py::arg("regime") = "random", py::arg("k") = 10,
      py::arg("seed") = 0);

  py::class_<PredictiveSummary>(m, "PredictiveSummary")
      .def_readonly("mean_probs", &PredictiveSummary::mean_probs)
      .def_readonly("predicted", &PredictiveSummary::predicted)
      .def_readonly("confidence", &PredictiveSummary::confidence)
      .def_readonly("uncertainty", &PredictiveSummary::uncertainty);

  py::class_<BayesHeader>(m, "BayesHeader")
      .def(py::init([](std::size_t in_dim, std::size_t num_classes, const std::string& variant,
                       std::size_t hidden_dim, double beta, std::uint64_t seed) {
             HeaderOptions o;
             o.in_dim = in_dim;
             o.num_classes = num_classes;
             o.hidden_dim = hidden_dim;
             o.variant = parse_variant(variant);
             o.beta = beta;
             return BayesHeader::create(o, RngStream(seed).with_purpose("init"));
           }),
           py::arg("in_dim"), py::arg("num_classes"), py::arg("variant") = "lipb-sn1",
           py::arg("hidden_dim") = 0, py::arg("beta") = 1e-4, py::arg("seed") = 0)
      .def_property_readonly("in_dim", &BayesHeader::in_dim)
      .def_property_readonly("num_classes", &BayesHeader::num_classes)
      .def_property_readonly("variant", [](const BayesHeader& h) { return std::string(to_string(h.variant)); })
      .def("set_sn_iters", &BayesHeader::set_sn_iters)
      .def(
          "train",
          [](BayesHeader& h, const FeatureDataset& ds, int epochs, std::size_t batch_size,
             double lr, std::uint64_t seed) {
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.optim.lr = lr;
            cfg.seed = seed;
            py::gil_scoped_release release;
            std::vector<double> losses;
            for (const auto& e : train(h, ds, cfg).epochs) losses.push_back(e.loss);
            return losses;
          },
          py::arg("dataset"), py::arg("epochs") = 50, py::arg("batch_size") = 64,
          py::arg("lr") = 1e-3, py::arg("seed") = 0, "Returns the loss of each epoch.")
      .def(
          "predict",
          [](BayesHeader& h, const Matrix& z, int samples, std::uint64_t seed) {
            return predict_mc(h, z, samples, RngStream(seed).with_purpose("infer"));
          },
          py::arg("features"), py::arg("samples") = 50, py::arg("seed") = 0)
      .def("kl", [](const BayesHeader& h) { return kl_to_prior(h.layer1) + kl_to_prior(h.layer2); })
      .def("save", [](const BayesHeader& h, const std::filesystem::path& p) { save_checkpoint(h, p); })
      .def_static("load", &load_checkpoint);

  m.def(
      "knn_suspicion",
      [](const FeatureDataset& ds, std::size_t k) { return knn_suspicion(ds, k).suspicion.scores; },
      py::arg("dataset"), py::arg("k") = 10);
  m.def(
      "uncertainty_suspicion",
      [](const std::vector<double>& u) { return uncertainty_suspicion(u).scores; },
      py::arg("uncertainties"));
  m.def(
      "fuse",
      [](const std::vector<double>& s_knn, const std::vector<double>& s_unc, double rate) {
        const auto r = fuse_adaptive(s_knn, s_unc, rate);
        return py::dict(py::arg("fused") = r.s_fused, py::arg("flagged") = r.flagged,
                        py::arg("w_knn") = r.w_knn, py::arg("b_knn") = r.b_knn,
                        py::arg("b_unc") = r.b_unc);
      },
      py::arg("s_knn"), py::arg("s_unc"), py::arg("expected_rate"));
  m.def("fusion_weight", &fusion_weight, py::arg("b_knn"), py::arg("b_unc"));
  m.def(
      "bimodality",
      [](const std::vector<double>& x) { return bimodality_coefficient(x).value; }, py::arg("x"));

  m.def(
      "auc_roc", [](std::vector<double> s, std::vector<bool> t) { return auc_roc(scored(s, t)); },
      py::arg("scores"), py::arg("truth"));
  m.def(
      "auc_pr", [](std::vector<double> s, std::vector<bool> t) { return auc_pr(scored(s, t)); },
      py::arg("scores"), py::arg("truth"));

  m.def(
      "adaptive_forget_rate",
      [](const std::vector<int>& f, const std::vector<int>& g) { return adaptive_forget_rate(f, g); },
      py::arg("pred_f"), py::arg("pred_g"));

  m.def(
      "posterior_eta",
      [](const std::map<double, std::vector<double>>& calibration, double signal) {
        return posterior_eta(fit_response_model(calibration), signal).probs;
      },
      py::arg("calibration"), py::arg("signal"));
  m.def(
      "leave_one_seed_out",
      [](const SeedSignals& signals) {
        const auto s = leave_one_seed_out(signals);
        return py::make_tuple(s.soft_accuracy, s.soft_confidence);
      },
      py::arg("signals"));

  // Config and report travel as JSON text.
  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        const auto cfg = nlohmann::json::parse(config_json).get<ExperimentConfig>();
        cfg.validate();
        py::gil_scoped_release release;
        return run_experiment(cfg).to_json().dump();
      },
      py::arg("config_json"));
}
