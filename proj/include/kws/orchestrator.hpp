#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kws/client_trainer.hpp"
#include "kws/dataset.hpp"
#include "kws/evaluation.hpp"
#include "kws/model.hpp"
#include "kws/partition.hpp"
#include "kws/server_optim.hpp"

namespace kws {

struct RunConfig {
  int clients_per_round = 20;
  int total_rounds = 300;
  int eval_every = 10;
  std::uint64_t seed = 1;
  ServerOptimizerConfig server = ServerOptimizerConfig::defaults(ServerVariant::kYogi);
  ClientConfig client;
  ClientLrSchedule lr;
  // Free-form description of how train labels were produced; only enters
  // the config fingerprint.
  std::string labeling = "supervised";
  int workers = 1;

  void validate() const;
};

// Hash of every setting that influences the trajectory of a run. Round
// budget and worker count are excluded so a run may be resumed with a
// larger budget or a different pool size.
std::uint64_t config_fingerprint(const RunConfig& run, const ModelConfig& model);

// Checkpoint file (little-endian):
//   "KWSC" u16 version=1 u16 flags u32 round u32 P float32[P] params,
//   then one block per optimizer vector: u8 tag ('v', 'm' or 's') float32[P],
//   then u64 config hash.
// flags bit 0/1/2 mark the presence of the v/m/s blocks.
struct Checkpoint {
  std::uint32_t round = 0;
  ParamVector params;
  std::optional<ParamVector> v;
  std::optional<ParamVector> m;
  std::optional<ParamVector> s;
  std::uint64_t config_hash = 0;
};

Checkpoint make_checkpoint(std::uint32_t round, const ParamVector& params,
                           const ServerOptimizerState& state, std::uint64_t config_hash);
ServerOptimizerState restore_server_state(const Checkpoint& ckpt, const ServerOptimizerConfig& cfg);

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void write_checkpoint_file(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint_file(const std::filesystem::path& path);

struct MetricsRow {
  std::uint32_t round = 0;
  double eval_loss = 0.0;
  double frame_accuracy = 0.0;
  std::uint64_t clients_seen = 0;
  double client_lr = 0.0;
};

inline constexpr const char* kMetricsHeader = "round,eval_loss,frame_accuracy,clients_seen,client_lr";

std::string format_metrics_row(const MetricsRow& row);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions are
// rethrown on the caller in index order.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

// Read-only inputs shared by all rounds.
struct FederatedData {
  const Corpus* train = nullptr;
  const std::vector<ClientCache>* train_clients = nullptr;
  const Corpus* eval = nullptr;
  const std::vector<ClientCache>* eval_clients = nullptr;
};

// K distinct indices into the client population, uniform without
// replacement, from stream (seed, "cohort", round).
std::vector<std::size_t> sample_cohort(std::uint64_t seed, std::uint64_t round, std::size_t population,
                                       std::size_t k);

struct RoundResult {
  ParamVector weights;
  std::vector<std::string> cohort;  // client ids, sampling order
  ParamVector delta;                // aggregated Δ_t
  double mean_local_loss = 0.0;
};

/// One federated round: cohort sampling, local training, weighted
/// aggregation, server step. `round` is zero-based; the result holds
/// w_{round+1}.
RoundResult run_round(std::uint64_t round, const ParamVector& weights, ServerOptimizerState& state,
                      const ModelConfig& model, const RunConfig& cfg,
                      const std::vector<ClientCache>& train_clients, const CorpusIndex& train_index);

struct TrainingOutput {
  // When set: <dir>/metrics.csv, <dir>/checkpoints/ckpt_<round>.kwsc,
  // <dir>/best_checkpoint.txt.
  std::optional<std::filesystem::path> dir;
};

struct ResumeFrom {
  Checkpoint checkpoint;
  std::vector<MetricsRow> prior_rows;  // rows already logged up to the checkpoint
};

struct TrainingResult {
  std::vector<MetricsRow> rows;  // including prior rows when resuming
  ParamVector final_params;
  ServerOptimizerState final_state;
  std::uint32_t best_round = 0;
  double best_eval_loss = 0.0;
};

// Called after every completed round with (round, weights).
using RoundCallback = std::function<void(std::uint32_t, const ParamVector&)>;

/// Full training run. Evaluates and checkpoints at round 0, every
/// eval_every rounds and after the last round; at those points parameters
/// and optimizer state are rounded to float32 so a resumed run continues
/// from exactly the in-memory state.
TrainingResult run_training(const ModelConfig& model, const RunConfig& cfg, const FederatedData& data,
                            const TrainingOutput& output = {}, const ResumeFrom* resume = nullptr,
                            const RoundCallback& on_round = {});

// Throws DataError when train and eval share utterance ids or speakers.
void check_orthogonal(const Corpus& train, const Corpus& eval);

struct CentralConfig {
  std::uint64_t steps = 0;
  double lr = 0.02;
  std::optional<SpecAugmentConfig> augment;
};

/// Sequential single-example SGD over reshuffled passes of the data, with
/// fresh augmentation on every visit.
ParamVector central_train(const ModelConfig& model, const ParamVector& init,
                          std::span<const Utterance* const> data, const CentralConfig& cfg, Rng& rng);

// Same, starting from the run's standard initialization for `seed`.
ParamVector central_train(const ModelConfig& model, const Corpus& data, const CentralConfig& cfg,
                          std::uint64_t seed);

// Initial weights for a run with this seed.
ParamVector initial_params(const ModelConfig& model, std::uint64_t seed);

}  // namespace kws
