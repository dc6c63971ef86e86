#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kws/dataset.hpp"
#include "kws/model.hpp"
#include "kws/partition.hpp"

namespace kws {

// Operating point target from the offline evaluation protocol (FA = 0.2%).
inline constexpr double kDefaultTargetFa = 0.002;

struct EvalMetrics {
  double mean_loss = 0.0;
  double frame_accuracy = 0.0;
  std::size_t n_examples = 0;
};

// Mean per-utterance loss and frame accuracy (score >= 0.5 counts as a
// keyword prediction) over one client's examples.
EvalMetrics eval_examples(const ParamVector& params, const ModelConfig& config,
                          std::span<const Utterance* const> examples);

/// Per-client metrics averaged on the server with weights n_k / N.
EvalMetrics eval_clients(const ParamVector& params, const ModelConfig& config,
                         const std::vector<ClientCache>& caches, const CorpusIndex& corpus);

// Combines per-client metrics weighted by example counts.
EvalMetrics combine_metrics(std::span<const EvalMetrics> parts);

/// Trigger statistic: the maximum frame score.
double utterance_score(const ParamVector& params, const ModelConfig& config, const Utterance& u);

struct OperatingPoint {
  double threshold = 0.0;
  double fa_rate = 0.0;
  double fr_rate = 0.0;
};

/// fa = share of negatives scoring >= threshold; fr = share of positives
/// scoring below it.
OperatingPoint compute_fa_fr(std::span<const double> pos_scores, std::span<const double> neg_scores,
                             double threshold);

/// Smallest threshold among the distinct negative scores (plus a sentinel
/// just above the maximum) whose false-accept rate is within target_fa.
double tune_threshold(std::span<const double> neg_scores, double target_fa);

struct ScoredUtterance {
  std::string utterance_id;
  Polarity polarity = Polarity::kNegative;
  double score = 0.0;
};

std::vector<ScoredUtterance> score_corpus(const ParamVector& params, const ModelConfig& config,
                                          const Corpus& corpus);

// Tunes the threshold on the negatives and reports FA / FR there.
OperatingPoint operating_point_at(const std::vector<ScoredUtterance>& scores, double target_fa);

// Rows "utterance_id<TAB>polarity<TAB>score"; scores are written with enough
// digits to round-trip exactly.
void write_score_dump(const std::vector<ScoredUtterance>& scores, const std::filesystem::path& path);
std::vector<ScoredUtterance> read_score_dump(const std::filesystem::path& path);

}  // namespace kws
