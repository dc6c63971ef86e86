#include "kws/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace kws {

CorpusSummary summarize(const Corpus& corpus) {
  CorpusSummary s;
  std::set<std::string> speakers;
  for (const auto& u : corpus) {
    speakers.insert(u.speaker);
    if (u.polarity == Polarity::kPositive) ++s.positives;
  }
  s.utterances = corpus.size();
  s.speakers = speakers.size();
  return s;
}

std::vector<ClientCache> default_eval_partition(const Corpus& eval, const PartitionConfig& cfg) {
  if (eval.empty()) throw UsageError("eval corpus is empty");
  PartitionConfig iid = cfg;
  iid.mode = PartitionMode::kIid;
  if (eval.size() >= static_cast<std::size_t>(iid.iid_cluster_size)) return partition_iid(describe(eval), iid);
  ClientCache all{"eval_all", {}};
  for (const auto& u : eval) all.utterance_ids.push_back(u.id);
  return {all};
}

PreparedData prepare_synthetic(const ExperimentConfig& cfg) {
  PreparedData d;
  d.train = generate_synthetic_dataset(cfg.train_data);
  d.eval = generate_synthetic_dataset(cfg.eval_data);
  d.train_clients = partition(describe(d.train), cfg.partition);
  d.eval_clients = default_eval_partition(d.eval, cfg.partition);
  return d;
}

void write_synthetic_data(const ExperimentConfig& cfg, const DataLayout& layout) {
  save_corpus(generate_synthetic_dataset(cfg.train_data), layout.train_dir());
  save_corpus(generate_synthetic_dataset(cfg.eval_data), layout.eval_dir());
}

namespace {

void check_covered(const std::vector<ClientCache>& clients, const Corpus& corpus, const std::string& what) {
  const CorpusIndex index(corpus);
  std::set<std::string> seen;
  for (const auto& c : clients) {
    for (const auto& id : c.utterance_ids) {
      if (!index.contains(id)) throw DataError(what + " partition names unknown utterance '" + id + "'");
      if (!seen.insert(id).second) throw DataError(what + " partition assigns '" + id + "' twice");
    }
  }
}

}  // namespace

PreparedData load_data(const DataLayout& layout, const ExperimentConfig& cfg) {
  PreparedData d;
  d.train = load_corpus(layout.train_manifest());
  d.eval = load_corpus(layout.eval_manifest());
  if (!std::filesystem::exists(layout.train_partition())) {
    throw UsageError("missing train partition " + layout.train_partition().string() +
                     " (run the partition command first)");
  }
  d.train_clients = read_partition(layout.train_partition());
  d.eval_clients = std::filesystem::exists(layout.eval_partition()) ? read_partition(layout.eval_partition())
                                                                   : default_eval_partition(d.eval, cfg.partition);
  check_covered(d.train_clients, d.train, "train");
  check_covered(d.eval_clients, d.eval, "eval");
  for (const auto& u : d.train) {
    if (u.spec.bins != cfg.model.input_bins) {
      throw DataError("utterance " + u.id + " has " + std::to_string(u.spec.bins) + " bins, model expects " +
                      std::to_string(cfg.model.input_bins));
    }
  }
  return d;
}

ParamVector train_central(const ExperimentConfig& cfg, const Corpus& train) {
  ParamVector w = central_train(cfg.model, train, cfg.central, cfg.run.seed);
  narrow_to_float(w);
  return w;
}

PreparedData with_teacher_labels(const PreparedData& data, const ParamVector& teacher,
                                 const ModelConfig& teacher_model, double threshold) {
  PreparedData out = data;
  out.train = relabel_with_teacher(data.train, teacher, teacher_model, threshold);
  return out;
}

RunSummary summarize_model(const std::string& name, const ParamVector& params, const ModelConfig& model,
                           const PreparedData& data, double target_fa) {
  RunSummary s;
  s.name = name;
  const EvalMetrics m = eval_clients(params, model, data.eval_clients, CorpusIndex(data.eval));
  s.eval_loss = m.mean_loss;
  s.frame_accuracy = m.frame_accuracy;
  s.op = operating_point_at(score_corpus(params, model, data.eval), target_fa);
  return s;
}

std::vector<std::string> ablation_run_names() {
  return {"base", "no_specaugment", "one_epoch", "constant_lr", "no_clipping", "sgd_server", "teacher_labels",
          "central"};
}

RunConfig ablation_variant(const RunConfig& base, const std::string& name) {
  RunConfig r = base;
  if (name == "base" || name == "teacher_labels") {
  } else if (name == "no_specaugment") {
    r.client.augment.reset();
  } else if (name == "one_epoch") {
    r.client.epochs = 1;
  } else if (name == "constant_lr") {
    r.lr.kind = ClientLrSchedule::Kind::kConstant;
  } else if (name == "no_clipping") {
    r.client.clip_norm.reset();
  } else if (name == "sgd_server") {
    r.server = ServerOptimizerConfig::defaults(ServerVariant::kSgd);
  } else {
    throw UsageError("no federated ablation run named '" + name + "'");
  }
  return r;
}

std::vector<RunSummary> run_ablation(const ExperimentConfig& cfg, const PreparedData& data,
                                     const std::optional<std::filesystem::path>& out_dir,
                                     const ProgressFn& progress) {
  check_orthogonal(data.train, data.eval);
  std::vector<RunSummary> rows;
  std::optional<ParamVector> central;
  auto get_central = [&]() -> const ParamVector& {
    if (!central) {
      if (progress) progress("central");
      central = train_central(cfg, data.train);
    }
    return *central;
  };
  for (const auto& name : ablation_run_names()) {
    if (name == "central") {
      rows.push_back(summarize_model(name, get_central(), cfg.model, data, cfg.target_fa));
      continue;
    }
    RunConfig run = ablation_variant(cfg.run, name);
    const PreparedData* use = &data;
    std::optional<PreparedData> relabeled;
    if (name == "teacher_labels") {
      relabeled = with_teacher_labels(data, get_central(), cfg.model, cfg.labeling.threshold);
      use = &*relabeled;
      run.labeling = "teacher@central";
    }
    if (progress) progress(name);
    TrainingOutput output;
    if (out_dir) {
      output.dir = *out_dir / name;
      std::filesystem::create_directories(*output.dir);
    }
    const TrainingResult res = run_training(cfg.model, run, use->view(), output);
    rows.push_back(summarize_model(name, res.final_params, cfg.model, data, cfg.target_fa));
  }
  if (out_dir) write_ablation_csv(rows, *out_dir / "ablation.csv");
  return rows;
}

std::string format_summary_row(const RunSummary& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g", row.name.c_str(), row.eval_loss,
                row.frame_accuracy, row.op.threshold, row.op.fa_rate, row.op.fr_rate);
  return buf;
}

void write_ablation_csv(const std::vector<RunSummary>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << kAblationHeader << '\n';
  for (const auto& r : rows) out << format_summary_row(r) << '\n';
}

}  // namespace kws
