#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kws/config.hpp"
#include "kws/evaluation.hpp"

namespace kws {

// Train and eval corpora with their client partitions. Eval clients are IID
// clusters so federated eval metrics are not dominated by one speaker.
struct PreparedData {
  Corpus train;
  Corpus eval;
  std::vector<ClientCache> train_clients;
  std::vector<ClientCache> eval_clients;

  FederatedData view() const { return {&train, &train_clients, &eval, &eval_clients}; }
};

// Standard on-disk layout of a data directory.
struct DataLayout {
  std::filesystem::path root;
  std::filesystem::path train_dir() const { return root / "train"; }
  std::filesystem::path eval_dir() const { return root / "eval"; }
  std::filesystem::path train_manifest() const { return train_dir() / "manifest.tsv"; }
  std::filesystem::path eval_manifest() const { return eval_dir() / "manifest.tsv"; }
  std::filesystem::path train_partition() const { return train_dir() / "partition.tsv"; }
  std::filesystem::path eval_partition() const { return eval_dir() / "partition.tsv"; }
};

struct CorpusSummary {
  std::size_t utterances = 0;
  std::size_t speakers = 0;
  std::size_t positives = 0;
  double positive_fraction() const { return utterances ? double(positives) / double(utterances) : 0.0; }
};

CorpusSummary summarize(const Corpus& corpus);

// Eval partition used when no partition file is given: IID clusters of the
// configured size, falling back to a single client with the whole set when
// it is smaller than one cluster.
std::vector<ClientCache> default_eval_partition(const Corpus& eval, const PartitionConfig& cfg);

// Generates both corpora and partitions them in memory.
PreparedData prepare_synthetic(const ExperimentConfig& cfg);

// Writes train/ and eval/ corpora under layout.root.
void write_synthetic_data(const ExperimentConfig& cfg, const DataLayout& layout);

// Loads a data directory. The train partition file is required; the eval
// partition file is optional.
PreparedData load_data(const DataLayout& layout, const ExperimentConfig& cfg);

// Central model used as teacher when no checkpoint is given.
ParamVector train_central(const ExperimentConfig& cfg, const Corpus& train);

// Copy of `data` with train targets replaced by teacher predictions.
PreparedData with_teacher_labels(const PreparedData& data, const ParamVector& teacher,
                                 const ModelConfig& teacher_model, double threshold);

struct RunSummary {
  std::string name;
  double eval_loss = 0.0;
  double frame_accuracy = 0.0;
  OperatingPoint op;
};

inline constexpr const char* kAblationHeader = "run,eval_loss,frame_accuracy,threshold,fa,fr";

// Final eval loss / accuracy on the eval clients plus the operating point at
// target_fa on the whole eval corpus.
RunSummary summarize_model(const std::string& name, const ParamVector& params, const ModelConfig& model,
                           const PreparedData& data, double target_fa);

// Ablation runs: the base setting, one run per removed factor, and the
// centralized baseline.
std::vector<std::string> ablation_run_names();
RunConfig ablation_variant(const RunConfig& base, const std::string& name);

using ProgressFn = std::function<void(const std::string&)>;

/// Runs every ablation entry; with out_dir set each federated run writes
/// its artifacts to <out_dir>/<name>/ and the table goes to
/// <out_dir>/ablation.csv.
std::vector<RunSummary> run_ablation(const ExperimentConfig& cfg, const PreparedData& data,
                                     const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                     const ProgressFn& progress = {});

std::string format_summary_row(const RunSummary& row);
void write_ablation_csv(const std::vector<RunSummary>& rows, const std::filesystem::path& path);

}  // namespace kws
