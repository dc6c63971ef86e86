#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kws/client_trainer.hpp"
#include "kws/numerics.hpp"

namespace kws {

enum class ServerVariant { kSgd, kNag, kAdam, kYogi };

const char* server_variant_name(ServerVariant v);
ServerVariant parse_server_variant(const std::string& s);

struct ServerOptimizerConfig {
  ServerVariant variant = ServerVariant::kYogi;
  bool nesterov = false;  // adam / yogi only
  double eta_s = 0.1;
  double gamma = 0.99;  // nag momentum
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-3;
  double v0 = 1e-6;  // initial second-moment fill

  // Tuned values per algorithm:
  //   sgd  eta_s = 1
  //   nag  eta_s = 1, gamma = 0.99
  //   adam eta_s = 1e-3, eps = 1e-8, beta1 = 0.9, beta2 = 0.999
  //   yogi eta_s = 0.1,  eps = 1e-3, beta1 = 0.9, beta2 = 0.999, v0 = 1e-6
  static ServerOptimizerConfig defaults(ServerVariant variant);

  void validate() const;
};

struct ServerOptimizerState {
  ServerVariant variant = ServerVariant::kSgd;
  ParamVector v;  // nag momentum
  ParamVector m;  // first moment
  ParamVector s;  // second moment
  std::uint64_t t = 0;
};

ServerOptimizerState init_server_state(const ServerOptimizerConfig& cfg, std::size_t param_count);

/// sum_k (n_k / N) * delta_k, summed in client-id order.
ParamVector aggregate(std::span<const ClientUpdate> updates);

ParamVector sgd_step(const ParamVector& w, const ParamVector& delta, double eta_s);

/// v' = gamma v + delta;  w' = w - eta_s (gamma v' + delta)
ParamVector nag_step(ServerOptimizerState& state, const ParamVector& w, const ParamVector& delta,
                     double eta_s, double gamma);

/// Adam / Yogi on the pseudo-gradient `delta`, without bias correction.
ParamVector adaptive_step(ServerOptimizerState& state, const ParamVector& w, const ParamVector& delta,
                          const ServerOptimizerConfig& cfg);

// Dispatches on cfg.variant.
ParamVector server_step(ServerOptimizerState& state, const ParamVector& w, const ParamVector& delta,
                        const ServerOptimizerConfig& cfg);

}  // namespace kws
