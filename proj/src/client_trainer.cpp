#include "kws/client_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "kws/errors.hpp"

namespace kws {

void ClientLrSchedule::validate() const {
  if (!(eta0 > 0.0)) throw UsageError("client lr: eta0 must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw UsageError("client lr: gamma must lie in (0, 1]");
  if (decay_every < 1) throw UsageError("client lr: decay_every must be >= 1");
}

const char* lr_kind_name(ClientLrSchedule::Kind k) {
  return k == ClientLrSchedule::Kind::kConstant ? "constant" : "exponential";
}

ClientLrSchedule::Kind parse_lr_kind(const std::string& s) {
  if (s == "constant") return ClientLrSchedule::Kind::kConstant;
  if (s == "exponential") return ClientLrSchedule::Kind::kExponential;
  throw UsageError("unknown lr schedule '" + s + "' (expected constant or exponential)");
}

double client_lr(const ClientLrSchedule& schedule, std::uint64_t round) {
  schedule.validate();
  if (schedule.kind == ClientLrSchedule::Kind::kConstant) return schedule.eta0;
  const auto steps = round / static_cast<std::uint64_t>(schedule.decay_every);
  return schedule.eta0 * std::pow(schedule.gamma, static_cast<double>(steps));
}

void ClientConfig::validate() const {
  if (epochs < 1) throw UsageError("client: epochs must be >= 1");
  if (clip_norm && !(*clip_norm > 0.0)) throw UsageError("client: clip_norm must be > 0");
  if (augment) augment->validate();
}

ClientUpdate train_client(const ModelConfig& model, const ParamVector& weights,
                          std::span<const Utterance* const> examples, const ClientConfig& cfg,
                          const ClientLrSchedule& schedule, std::uint64_t round, Rng& rng,
                          std::string client_id) {
  cfg.validate();
  if (examples.empty()) throw UsageError("train_client: empty cache");
  if (weights.size() != param_count(model)) throw UsageError("train_client: parameter count mismatch");
  const double lr = client_lr(schedule, round);

  std::vector<const Utterance*> order(examples.begin(), examples.end());
  ParamVector w = weights;
  double first_epoch_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (const Utterance* u : order) {
      LossAndGradient lg = cfg.augment
                               ? model_backward(w, model, apply_spec_augment(u->spec, *cfg.augment, rng), u->targets)
                               : model_backward(w, model, u->spec, u->targets);
      if (epoch == 0) first_epoch_loss += lg.loss;
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * lg.gradient[i];
    }
  }
  ensure_finite(w, "train_client");

  ClientUpdate up;
  up.client_id = std::move(client_id);
  up.delta = subtract(weights, w);
  if (cfg.clip_norm) up.delta = clip_by_norm(up.delta, *cfg.clip_norm);
  up.n_k = examples.size();
  up.local_loss = first_epoch_loss / static_cast<double>(examples.size());
  return up;
}

ClientUpdate train_client(const ModelConfig& model, const ParamVector& weights,
                          const ClientCache& cache, const CorpusIndex& corpus,
                          const ClientConfig& cfg, const ClientLrSchedule& schedule,
                          std::uint64_t round, Rng& rng) {
  std::vector<const Utterance*> examples;
  examples.reserve(cache.size());
  for (const auto& id : cache.utterance_ids) examples.push_back(&corpus.at(id));
  return train_client(model, weights, examples, cfg, schedule, round, rng, cache.client_id);
}

}  // namespace kws
