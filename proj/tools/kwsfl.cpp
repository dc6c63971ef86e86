// kwsfl: synthetic keyword-spotting data, partitions, federated training,
// offline evaluation and ablations.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "kws/config.hpp"
#include "kws/experiment.hpp"

namespace fs = std::filesystem;
using namespace kws;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kFormat = 4 };

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
};

struct LoadedConfig {
  ExperimentConfig cfg;
  std::string text;       // file contents, empty when running on defaults
  std::string overrides;  // command-line overrides as config lines
};

LoadedConfig load(const Globals& g) {
  LoadedConfig lc;
  if (!g.config_path.empty()) lc.text = read_text_file(g.config_path);
  lc.cfg = parse_config(lc.text);
  if (g.seed) {
    lc.cfg.run.seed = *g.seed;
    lc.cfg.partition.seed = *g.seed;
    lc.cfg.train_data.seed = *g.seed;
    lc.overrides += "run.seed = " + std::to_string(*g.seed) + "\npartition.seed = " + std::to_string(*g.seed) +
                    "\ndata.seed = " + std::to_string(*g.seed) + "\n";
  }
  if (g.workers) {
    if (*g.workers < 1) throw ConfigError("run.workers", "--workers must be >= 1");
    lc.cfg.run.workers = *g.workers;
    lc.overrides += "run.workers = " + std::to_string(*g.workers) + "\n";
  }
  return lc;
}

fs::path require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw UsageError(std::string("--out ") + what + " is required");
  return g.out;
}

void make_writable_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".kwsfl_probe";
  {
    std::ofstream p(probe);
    if (!p) throw UsageError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

// Verbatim config plus overrides, for provenance.
void echo_config(const LoadedConfig& lc, const fs::path& dir) {
  write_text_file(dir / "config.txt", lc.text);
  if (!lc.overrides.empty()) write_text_file(dir / "overrides.txt", lc.overrides);
}

void print_summary(const char* label, const Corpus& c) {
  const CorpusSummary s = summarize(c);
  std::printf("%s: %zu utterances, %zu speakers, %zu positive (fraction %.4f)\n", label, s.utterances, s.speakers,
              s.positives, s.positive_fraction());
}

int cmd_gen_data(const Globals& g) {
  const LoadedConfig lc = load(g);
  const DataLayout layout{require_out(g, "<data dir>")};
  make_writable_dir(layout.root);
  write_synthetic_data(lc.cfg, layout);
  echo_config(lc, layout.root);
  print_summary("train", load_corpus(layout.train_manifest()));
  print_summary("eval", load_corpus(layout.eval_manifest()));
  return kOk;
}

int cmd_partition(const Globals& g, const std::string& manifest, const std::string& mode) {
  LoadedConfig lc = load(g);
  if (!mode.empty()) {
    try {
      lc.cfg.partition.mode = parse_partition_mode(mode);
    } catch (const UsageError& e) {
      throw ConfigError("partition.mode", e.what());
    }
  }
  std::vector<ManifestRow> rows;
  try {
    rows = read_manifest(manifest);
  } catch (const FormatError& e) {
    // A bad manifest is an input validation problem here, reported with its line.
    std::fprintf(stderr, "kwsfl: %s: line %llu: %s\n", manifest.c_str(),
                 static_cast<unsigned long long>(e.offset()), e.what());
    return kUsage;
  }
  const fs::path out = g.out.empty() ? fs::path(manifest).parent_path() / "partition.tsv" : fs::path(g.out);
  const auto info = describe(rows);
  const auto caches = partition(info, lc.cfg.partition);
  write_partition(caches, out);
  const PartitionReport r = check_partition(caches, info);
  std::printf("mode: %s\nclients: %zu\nassigned: %zu of %zu\nmedian n_k: %g\nmax n_k: %zu\n",
              partition_mode_name(lc.cfg.partition.mode), r.clients, r.assigned, rows.size(), r.median_size,
              r.max_size);
  if (lc.cfg.partition.mode == PartitionMode::kNonIid) {
    std::printf("label-pure: %s, speaker-pure: %s\n", r.label_pure ? "true" : "false",
                r.speaker_pure ? "true" : "false");
  }
  std::printf("wrote %s\n", out.string().c_str());
  return r.disjoint ? kOk : kData;
}

int cmd_train(const Globals& g, const std::string& data_dir, const std::string& resume_path) {
  const LoadedConfig lc = load(g);
  const ExperimentConfig& cfg = lc.cfg;
  const fs::path out = require_out(g, "<run dir>");
  PreparedData data = load_data(DataLayout{data_dir}, cfg);
  RunConfig run = cfg.run;
  if (cfg.labeling.mode == LabelingMode::kTeacher) {
    const Checkpoint teacher = read_checkpoint_file(cfg.labeling.teacher_checkpoint);
    if (teacher.params.size() != param_count(cfg.model)) {
      throw DataError("teacher checkpoint has " + std::to_string(teacher.params.size()) +
                      " parameters, the model has " + std::to_string(param_count(cfg.model)));
    }
    data = with_teacher_labels(data, teacher.params, cfg.model, cfg.labeling.threshold);
    std::printf("relabeled %zu train utterances with teacher %s\n", data.train.size(),
                cfg.labeling.teacher_checkpoint.c_str());
  }
  make_writable_dir(out);
  std::optional<ResumeFrom> resume;
  if (!resume_path.empty()) {
    resume.emplace();
    resume->checkpoint = read_checkpoint_file(resume_path);
    if (fs::exists(out / "metrics.csv")) resume->prior_rows = read_metrics_csv(out / "metrics.csv");
    std::printf("resuming from round %u\n", resume->checkpoint.round);
  }
  echo_config(lc, out);
  std::printf("train clients: %zu, eval clients: %zu, params: %zu\n", data.train_clients.size(),
              data.eval_clients.size(), param_count(cfg.model));
  const std::uint32_t every = static_cast<std::uint32_t>(run.eval_every);
  const TrainingResult res =
      run_training(cfg.model, run, data.view(), TrainingOutput{out}, resume ? &*resume : nullptr,
                   [&](std::uint32_t round, const ParamVector&) {
                     if (round % every == 0) std::fprintf(stderr, "round %u\n", round);
                   });
  const MetricsRow& last = res.rows.back();
  std::printf("final round %u: eval_loss %.6g, frame_accuracy %.6g\nbest round %u: eval_loss %.6g\n", last.round,
              last.eval_loss, last.frame_accuracy, res.best_round, res.best_eval_loss);
  return kOk;
}

int cmd_eval(const Globals& g, const std::string& ckpt_path, const std::string& manifest,
             std::optional<double> target_fa) {
  const LoadedConfig lc = load(g);
  const double fa = target_fa.value_or(lc.cfg.target_fa);
  if (!(fa > 0.0 && fa < 1.0)) throw ConfigError("eval.target_fa", "--target-fa must be in (0, 1)");
  const Checkpoint ckpt = read_checkpoint_file(ckpt_path);
  if (ckpt.params.size() != param_count(lc.cfg.model)) {
    throw DataError("checkpoint has " + std::to_string(ckpt.params.size()) + " parameters, the model has " +
                    std::to_string(param_count(lc.cfg.model)));
  }
  const Corpus corpus = load_corpus(manifest);
  const auto scores = score_corpus(ckpt.params, lc.cfg.model, corpus);
  const OperatingPoint op = operating_point_at(scores, fa);
  const fs::path dump = g.out.empty() ? fs::path("scores.tsv") : fs::path(g.out);
  write_score_dump(scores, dump);
  std::printf("checkpoint round: %u\ntarget_fa: %g\ntheta: %.9g\nFA: %.6g\nFR: %.6g\nscores: %s\n", ckpt.round, fa,
              op.threshold, op.fa_rate, op.fr_rate, dump.string().c_str());
  return kOk;
}

int cmd_ablate(const Globals& g, const std::string& data_dir) {
  const LoadedConfig lc = load(g);
  const fs::path out = require_out(g, "<ablation dir>");
  make_writable_dir(out);
  const PreparedData data = data_dir.empty() ? prepare_synthetic(lc.cfg) : load_data(DataLayout{data_dir}, lc.cfg);
  echo_config(lc, out);
  const auto rows = run_ablation(lc.cfg, data, out, [](const std::string& name) {
    std::fprintf(stderr, "running %s\n", name.c_str());
  });
  std::printf("%s\n", kAblationHeader);
  for (const auto& r : rows) std::printf("%s\n", format_summary_row(r).c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated keyword-spotting experiments on synthetic spectrogram data"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "key = value config file (defaults when omitted)");
  app.add_option("--seed", g.seed, "overrides run.seed, data.seed and partition.seed");
  app.add_option("--workers", g.workers, "client-training threads (overrides run.workers)");
  app.add_option("--out", g.out, "output path (directory or file, per command)");

  auto* gen = app.add_subcommand("gen-data", "write train/ and eval/ corpora under --out");

  std::string manifest, mode;
  auto* part = app.add_subcommand("partition", "split a manifest into client caches (--out, default: next to it)");
  part->add_option("manifest", manifest, "manifest.tsv")->required();
  part->add_option("--mode", mode, "iid or non_iid (overrides partition.mode)");

  std::string data_dir, resume;
  auto* train = app.add_subcommand("train", "federated training into run directory --out");
  train->add_option("--data", data_dir, "data directory from gen-data + partition")->required();
  train->add_option("--resume", resume, "checkpoint to continue from");

  std::string ckpt, eval_manifest;
  std::optional<double> target_fa;
  auto* ev = app.add_subcommand("eval", "operating point of a checkpoint; score dump to --out (scores.tsv)");
  ev->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  ev->add_option("--manifest", eval_manifest, "manifest of the tuning set")->required();
  ev->add_option("--target-fa", target_fa, "false-accept budget (eval.target_fa)");

  std::string ablate_data;
  auto* abl = app.add_subcommand("ablate", "base run, one run per removed factor, central baseline");
  abl->add_option("--data", ablate_data, "data directory (generated in memory when omitted)");

  auto* defaults = app.add_subcommand("defaults", "print every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(g);
    if (*part) return cmd_partition(g, manifest, mode);
    if (*train) return cmd_train(g, data_dir, resume);
    if (*ev) return cmd_eval(g, ckpt, eval_manifest, target_fa);
    if (*abl) return cmd_ablate(g, ablate_data);
    if (*defaults) {
      std::fputs(default_config_text().c_str(), stdout);
      return kOk;
    }
  } catch (const FormatError& e) {
    std::fprintf(stderr, "kwsfl: %s\n", e.what());
    return kFormat;
  } catch (const DataError& e) {
    std::fprintf(stderr, "kwsfl: data error: %s\n", e.what());
    return kData;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "kwsfl: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "kwsfl: %s\n", e.what());
    return kFailure;
  }
  return kUsage;
}
