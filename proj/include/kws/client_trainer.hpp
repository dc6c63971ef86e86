#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "kws/augment.hpp"
#include "kws/dataset.hpp"
#include "kws/model.hpp"
#include "kws/numerics.hpp"
#include "kws/partition.hpp"
#include "kws/rng.hpp"

namespace kws {

struct ClientLrSchedule {
  enum class Kind { kConstant, kExponential };
  Kind kind = Kind::kExponential;
  double eta0 = 0.02;
  double gamma = 0.9;
  int decay_every = 1000;  // rounds

  void validate() const;
};

const char* lr_kind_name(ClientLrSchedule::Kind k);
ClientLrSchedule::Kind parse_lr_kind(const std::string& s);

/// eta0 for a constant schedule; eta0 * gamma^floor(round / decay_every)
/// for an exponential one.
double client_lr(const ClientLrSchedule& schedule, std::uint64_t round);

struct ClientConfig {
  int epochs = 10;
  std::optional<double> clip_norm = kDefaultClipNorm;  // nullopt: no clipping
  std::optional<SpecAugmentConfig> augment;            // nullopt: no augmentation

  void validate() const;
};

struct ClientUpdate {
  std::string client_id;
  ParamVector delta;  // w_t - w_final, after clipping
  std::size_t n_k = 0;
  double local_loss = 0.0;
};

/// Local SGD with batch size 1. Each epoch shuffles the examples with `rng`,
/// then steps once per (freshly augmented) utterance on its frame-mean BCE.
/// The learning rate is fixed for the round.
ClientUpdate train_client(const ModelConfig& model, const ParamVector& weights,
                          std::span<const Utterance* const> examples, const ClientConfig& cfg,
                          const ClientLrSchedule& schedule, std::uint64_t round, Rng& rng,
                          std::string client_id = {});

ClientUpdate train_client(const ModelConfig& model, const ParamVector& weights,
                          const ClientCache& cache, const CorpusIndex& corpus,
                          const ClientConfig& cfg, const ClientLrSchedule& schedule,
                          std::uint64_t round, Rng& rng);

}  // namespace kws
