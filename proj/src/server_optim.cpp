#include "kws/server_optim.hpp"

#include <algorithm>
#include <cmath>

#include "kws/errors.hpp"

namespace kws {

const char* server_variant_name(ServerVariant v) {
  switch (v) {
    case ServerVariant::kSgd: return "sgd";
    case ServerVariant::kNag: return "nag";
    case ServerVariant::kAdam: return "adam";
    case ServerVariant::kYogi: return "yogi";
  }
  return "?";
}

ServerVariant parse_server_variant(const std::string& s) {
  if (s == "sgd") return ServerVariant::kSgd;
  if (s == "nag") return ServerVariant::kNag;
  if (s == "adam") return ServerVariant::kAdam;
  if (s == "yogi") return ServerVariant::kYogi;
  throw UsageError("unknown server variant '" + s + "' (expected sgd, nag, adam or yogi)");
}

ServerOptimizerConfig ServerOptimizerConfig::defaults(ServerVariant variant) {
  ServerOptimizerConfig c;
  c.variant = variant;
  switch (variant) {
    case ServerVariant::kSgd:
      c.eta_s = 1.0;
      c.gamma = 0.0;
      break;
    case ServerVariant::kNag:
      c.eta_s = 1.0;
      c.gamma = 0.99;
      break;
    case ServerVariant::kAdam:
      c.eta_s = 1e-3;
      c.epsilon = 1e-8;
      c.v0 = 0.0;
      break;
    case ServerVariant::kYogi:
      c.eta_s = 0.1;
      c.epsilon = 1e-3;
      c.v0 = 1e-6;
      break;
  }
  return c;
}

void ServerOptimizerConfig::validate() const {
  if (!(eta_s > 0.0)) throw UsageError("server: eta_s must be > 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw UsageError("server: gamma must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw UsageError("server: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw UsageError("server: beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw UsageError("server: epsilon must be > 0");
  if (!(v0 >= 0.0)) throw UsageError("server: v0 must be >= 0");
  if (nesterov && (variant == ServerVariant::kSgd || variant == ServerVariant::kNag)) {
    throw UsageError("server: the nesterov flag applies to adam and yogi only");
  }
}

ServerOptimizerState init_server_state(const ServerOptimizerConfig& cfg, std::size_t param_count) {
  cfg.validate();
  ServerOptimizerState st;
  st.variant = cfg.variant;
  if (cfg.variant == ServerVariant::kNag) st.v = ParamVector(param_count, 0.0);
  if (cfg.variant == ServerVariant::kAdam || cfg.variant == ServerVariant::kYogi) {
    st.m = ParamVector(param_count, 0.0);
    st.s = ParamVector(param_count, cfg.v0);
  }
  return st;
}

ParamVector aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw UsageError("aggregate: a round needs at least one client update");
  std::vector<const ClientUpdate*> order;
  order.reserve(updates.size());
  for (const auto& u : updates) order.push_back(&u);
  std::stable_sort(order.begin(), order.end(),
                   [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });

  const std::size_t p = order.front()->delta.size();
  std::size_t total = 0;
  for (const auto* u : order) {
    if (u->delta.size() != p) throw UsageError("aggregate: client deltas differ in length");
    if (u->n_k == 0) throw UsageError("aggregate: client update with n_k = 0");
    total += u->n_k;
  }
  ParamVector sum(p, 0.0);
  for (const auto* u : order) {
    const double weight = static_cast<double>(u->n_k) / static_cast<double>(total);
    for (std::size_t i = 0; i < p; ++i) sum[i] += weight * u->delta[i];
  }
  ensure_finite(sum, "aggregate");
  return sum;
}

ParamVector sgd_step(const ParamVector& w, const ParamVector& delta, double eta_s) {
  return axpy(-eta_s, delta, w);
}

ParamVector nag_step(ServerOptimizerState& state, const ParamVector& w, const ParamVector& delta,
                     double eta_s, double gamma) {
  require_same_size(w, delta, "nag_step");
  if (state.v.empty()) state.v = ParamVector(w.size(), 0.0);
  require_same_size(state.v, w, "nag_step momentum");
  ParamVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    state.v[i] = gamma * state.v[i] + delta[i];
    out[i] = w[i] - eta_s * (gamma * state.v[i] + delta[i]);
  }
  ensure_finite(out, "nag_step");
  ++state.t;
  return out;
}

ParamVector adaptive_step(ServerOptimizerState& state, const ParamVector& w, const ParamVector& delta,
                          const ServerOptimizerConfig& cfg) {
  cfg.validate();
  if (cfg.variant != ServerVariant::kAdam && cfg.variant != ServerVariant::kYogi) {
    throw UsageError("adaptive_step: variant must be adam or yogi");
  }
  if (state.variant != cfg.variant) throw UsageError("adaptive_step: optimizer state belongs to another variant");
  require_same_size(w, delta, "adaptive_step");
  require_same_size(state.m, w, "adaptive_step first moment");
  require_same_size(state.s, w, "adaptive_step second moment");

  const bool yogi = cfg.variant == ServerVariant::kYogi;
  ParamVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double g = delta[i];
    const double g2 = g * g;
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    if (yogi) {
      const double diff = state.s[i] - g2;
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      state.s[i] = state.s[i] - (1.0 - cfg.beta2) * sign * g2;
    } else {
      state.s[i] = cfg.beta2 * state.s[i] + (1.0 - cfg.beta2) * g2;
    }
    const double moment = cfg.nesterov ? cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g : state.m[i];
    out[i] = w[i] - cfg.eta_s * moment / (std::sqrt(state.s[i]) + cfg.epsilon);
  }
  ensure_finite(out, "adaptive_step");
  ++state.t;
  return out;
}

ParamVector server_step(ServerOptimizerState& state, const ParamVector& w, const ParamVector& delta,
                        const ServerOptimizerConfig& cfg) {
  switch (cfg.variant) {
    case ServerVariant::kSgd: {
      ++state.t;
      return sgd_step(w, delta, cfg.eta_s);
    }
    case ServerVariant::kNag: return nag_step(state, w, delta, cfg.eta_s, cfg.gamma);
    case ServerVariant::kAdam:
    case ServerVariant::kYogi: return adaptive_step(state, w, delta, cfg);
  }
  throw UsageError("server_step: unknown variant");
}

}  // namespace kws
