// Python bindings: config handling, data generation, training and scoring.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>

#include "kws/config.hpp"
#include "kws/errors.hpp"
#include "kws/experiment.hpp"

namespace py = pybind11;
using namespace kws;

namespace {

ExperimentConfig config_from(const std::optional<std::string>& text) {
  return text ? parse_config(*text) : parse_config("");
}

py::dict row_dict(const MetricsRow& r) {
  py::dict d;
  d["round"] = r.round;
  d["eval_loss"] = r.eval_loss;
  d["frame_accuracy"] = r.frame_accuracy;
  d["clients_seen"] = r.clients_seen;
  d["client_lr"] = r.client_lr;
  return d;
}

py::dict point_dict(const OperatingPoint& op) {
  py::dict d;
  d["threshold"] = op.threshold;
  d["fa"] = op.fa_rate;
  d["fr"] = op.fr_rate;
  return d;
}

py::dict generate_data(const std::optional<std::string>& config, const std::filesystem::path& out) {
  const ExperimentConfig cfg = config_from(config);
  const DataLayout layout{out};
  write_synthetic_data(cfg, layout);
  const Corpus train = load_corpus(layout.train_manifest());
  write_partition(partition(describe(train), cfg.partition), layout.train_partition());
  const CorpusSummary s = summarize(train);
  py::dict d;
  d["utterances"] = s.utterances;
  d["speakers"] = s.speakers;
  d["positives"] = s.positives;
  return d;
}

py::dict train(const std::optional<std::string>& config, const std::optional<std::filesystem::path>& data_dir,
               const std::optional<std::filesystem::path>& out) {
  const ExperimentConfig cfg = config_from(config);
  PreparedData data = data_dir ? load_data(DataLayout{*data_dir}, cfg) : prepare_synthetic(cfg);
  if (cfg.labeling.mode == LabelingMode::kTeacher) {
    const Checkpoint teacher = read_checkpoint_file(cfg.labeling.teacher_checkpoint);
    data = with_teacher_labels(data, teacher.params, cfg.model, cfg.labeling.threshold);
  }
  TrainingResult res;
  {
    py::gil_scoped_release release;
    res = run_training(cfg.model, cfg.run, data.view(), {out});
  }
  py::list rows;
  for (const auto& r : res.rows) rows.append(row_dict(r));
  py::dict d;
  d["rows"] = rows;
  d["best_round"] = res.best_round;
  d["best_eval_loss"] = res.best_eval_loss;
  d["params"] = res.final_params.values();
  return d;
}

py::dict evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                  const std::optional<std::string>& config, std::optional<double> target_fa) {
  const ExperimentConfig cfg = config_from(config);
  const Checkpoint ckpt = read_checkpoint_file(checkpoint);
  if (ckpt.params.size() != param_count(cfg.model))
    throw DataError("checkpoint has " + std::to_string(ckpt.params.size()) + " parameters, the model has " +
                    std::to_string(param_count(cfg.model)));
  const auto scores = score_corpus(ckpt.params, cfg.model, load_corpus(manifest));
  py::dict d = point_dict(operating_point_at(scores, target_fa.value_or(cfg.target_fa)));
  d["round"] = ckpt.round;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Federated keyword-spotting training core";

  auto usage = py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", usage.ptr());
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);

  m.def("default_config", &default_config_text, "Config text listing every key with its default.");
  m.def(
      "config_keys",
      [] {
        py::list out;
        for (const auto& k : config_keys()) out.append(py::make_tuple(k.key, k.default_value, k.help));
        return out;
      },
      "(key, default, help) for every accepted config key.");
  m.def(
      "check_config", [](const std::string& text) { parse_config(text); }, py::arg("text"),
      "Raises ConfigError if the text does not parse.");
  m.def("generate_data", &generate_data, py::arg("config") = py::none(), py::arg("out"),
        "Writes train/ and eval/ corpora and the train partition under out; returns a train summary.");
  m.def("train", &train, py::arg("config") = py::none(), py::arg("data_dir") = py::none(),
        py::arg("out") = py::none(),
        "Runs federated training. Without data_dir the corpus is generated in memory.");
  m.def("evaluate", &evaluate, py::arg("checkpoint"), py::arg("manifest"), py::arg("config") = py::none(),
        py::arg("target_fa") = py::none(), "Operating point of a checkpoint on a corpus.");
  m.def(
      "tune_threshold",
      [](const std::vector<double>& neg, double target_fa) { return tune_threshold(neg, target_fa); },
      py::arg("neg_scores"), py::arg("target_fa"));
  m.def(
      "compute_fa_fr",
      [](const std::vector<double>& pos, const std::vector<double>& neg, double threshold) {
        return point_dict(compute_fa_fr(pos, neg, threshold));
      },
      py::arg("pos_scores"), py::arg("neg_scores"), py::arg("threshold"));
  m.def("ablation_run_names", &ablation_run_names);
}
