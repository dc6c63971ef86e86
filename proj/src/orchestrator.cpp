#include "kws/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "kws/errors.hpp"
#include "kws/rng.hpp"

namespace kws {

void RunConfig::validate() const {
  if (clients_per_round < 1) throw UsageError("run: clients_per_round must be >= 1");
  if (total_rounds < 0) throw UsageError("run: total_rounds must be >= 0");
  if (eval_every < 1) throw UsageError("run: eval_every must be >= 1");
  if (workers < 1) throw UsageError("run: workers must be >= 1");
  server.validate();
  client.validate();
  lr.validate();
}

namespace {

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

std::uint64_t config_fingerprint(const RunConfig& run, const ModelConfig& model) {
  std::ostringstream s;
  s << "model.bins=" << model.input_bins << ';';
  for (const auto& l : model.encoder) s << "enc=" << l.nodes << ',' << l.memory << ',' << l.bottleneck << ';';
  for (const auto& l : model.decoder) s << "dec=" << l.nodes << ',' << l.memory << ';';
  s << "K=" << run.clients_per_round << ";eval_every=" << run.eval_every << ";seed=" << run.seed << ';';
  const auto& sv = run.server;
  s << "server=" << server_variant_name(sv.variant) << ',' << sv.nesterov << ',' << fmt_double(sv.eta_s) << ','
    << fmt_double(sv.gamma) << ',' << fmt_double(sv.beta1) << ',' << fmt_double(sv.beta2) << ','
    << fmt_double(sv.epsilon) << ',' << fmt_double(sv.v0) << ';';
  s << "client=" << run.client.epochs << ',' << (run.client.clip_norm ? fmt_double(*run.client.clip_norm) : "none")
    << ';';
  if (run.client.augment) {
    const auto& a = *run.client.augment;
    s << "aug=" << a.n_time_masks << ',' << a.max_time_frames << ',' << a.n_freq_masks << ',' << a.max_freq_bins
      << ',' << (a.noise_mean ? fmt_double(*a.noise_mean) : "auto") << ','
      << (a.noise_std ? fmt_double(*a.noise_std) : "auto") << ';';
  } else {
    s << "aug=none;";
  }
  s << "lr=" << lr_kind_name(run.lr.kind) << ',' << fmt_double(run.lr.eta0) << ',' << fmt_double(run.lr.gamma)
    << ',' << run.lr.decay_every << ';';
  s << "labeling=" << run.labeling << ';';
  return fnv1a64(s.str());
}

// ---------------------------------------------------------------------------
// Checkpoints

Checkpoint make_checkpoint(std::uint32_t round, const ParamVector& params,
                           const ServerOptimizerState& state, std::uint64_t config_hash) {
  Checkpoint c;
  c.round = round;
  c.params = params;
  if (!state.v.empty()) c.v = state.v;
  if (!state.m.empty()) c.m = state.m;
  if (!state.s.empty()) c.s = state.s;
  c.config_hash = config_hash;
  return c;
}

ServerOptimizerState restore_server_state(const Checkpoint& ckpt, const ServerOptimizerConfig& cfg) {
  ServerOptimizerState st = init_server_state(cfg, ckpt.params.size());
  auto take = [&](ParamVector& dst, const std::optional<ParamVector>& src, const char* tag) {
    if (dst.empty()) return;
    if (!src) throw FormatError(tag, 0, std::string("checkpoint lacks the '") + tag + "' block required by " +
                                            server_variant_name(cfg.variant));
    dst = *src;
  };
  take(st.v, ckpt.v, "v");
  take(st.m, ckpt.m, "m");
  take(st.s, ckpt.s, "s");
  st.t = ckpt.round;
  return st;
}

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_floats(std::string& out, const ParamVector& v) {
  for (double x : v) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
}

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  const unsigned char* take(std::uint64_t n, const char* field) {
    if (remaining() < n) throw FormatError(field, bytes_.size(), "truncated file");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data()) + pos_;
    pos_ += n;
    return p;
  }
  std::uint16_t u16(const char* field) {
    const auto* p = take(2, field);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }
  std::uint32_t u32(const char* field) {
    const auto* p = take(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* field) {
    const auto* p = take(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  ParamVector floats(std::uint32_t n, const char* field) {
    const auto* p = take(4ULL * n, field);
    ParamVector v(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
      const float f = std::bit_cast<float>(bits);
      if (!std::isfinite(f)) throw FormatError(field, offset() - 4ULL * n + 4ULL * i, "non-finite value");
      v[i] = f;
    }
    return v;
  }

 private:
  std::string bytes_;
  std::uint64_t pos_ = 0;
};

constexpr std::uint16_t kFlagV = 1, kFlagM = 2, kFlagS = 4;
constexpr std::uint32_t kMaxCheckpointParams = 1U << 28;

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  const auto p = static_cast<std::uint32_t>(ckpt.params.size());
  std::uint16_t flags = 0;
  if (ckpt.v) flags |= kFlagV;
  if (ckpt.m) flags |= kFlagM;
  if (ckpt.s) flags |= kFlagS;
  std::string buf("KWSC");
  put_u16(buf, 1);
  put_u16(buf, flags);
  put_u32(buf, ckpt.round);
  put_u32(buf, p);
  put_floats(buf, ckpt.params);
  auto block = [&](char tag, const std::optional<ParamVector>& v) {
    if (!v) return;
    if (v->size() != p) throw UsageError("write_checkpoint: optimizer block length mismatch");
    buf.push_back(tag);
    put_floats(buf, *v);
  };
  block('v', ckpt.v);
  block('m', ckpt.m);
  block('s', ckpt.s);
  put_u64(buf, ckpt.config_hash);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write_checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  ByteReader r(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  if (std::memcmp(r.take(4, "magic"), "KWSC", 4) != 0) throw FormatError("magic", 0, "expected \"KWSC\"");
  if (const auto v = r.u16("version"); v != 1) throw FormatError("version", 4, "unsupported version " + std::to_string(v));
  const std::uint16_t flags = r.u16("flags");
  if (flags & ~(kFlagV | kFlagM | kFlagS)) throw FormatError("flags", 6, "unknown flag bits");
  Checkpoint c;
  c.round = r.u32("round");
  const std::uint32_t p = r.u32("param_count");
  if (p == 0 || p > kMaxCheckpointParams) throw FormatError("param_count", 12, "parameter count out of range");
  c.params = r.floats(p, "params");
  auto block = [&](std::uint16_t flag, char tag, std::optional<ParamVector>& dst, const char* field) {
    if (!(flags & flag)) return;
    const std::uint64_t at = r.offset();
    const char got = static_cast<char>(*r.take(1, "block tag"));
    if (got != tag) throw FormatError("block tag", at, std::string("expected '") + tag + "'");
    dst = r.floats(p, field);
  };
  block(kFlagV, 'v', c.v, "v");
  block(kFlagM, 'm', c.m, "m");
  block(kFlagS, 's', c.s, "s");
  c.config_hash = r.u64("config_hash");
  if (r.remaining() != 0) throw FormatError("config_hash", r.offset(), "trailing bytes");
  return c;
}

void write_checkpoint_file(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(ckpt, out);
}

Checkpoint read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

// ---------------------------------------------------------------------------
// Metrics CSV

std::string format_metrics_row(const MetricsRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%u,%.9g,%.9g,%llu,%.9g", row.round, row.eval_loss, row.frame_accuracy,
                static_cast<unsigned long long>(row.clients_seen), row.client_lr);
  return buf;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << format_metrics_row(r) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw FormatError("header", 1, "unexpected metrics header");
  std::vector<MetricsRow> rows;
  std::uint64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    MetricsRow r;
    unsigned long long seen = 0;
    unsigned round = 0;
    if (std::sscanf(line.c_str(), "%u,%lf,%lf,%llu,%lf", &round, &r.eval_loss, &r.frame_accuracy, &seen,
                    &r.client_lr) != 5) {
      throw FormatError("metrics row", line_no, "expected 5 comma-separated values");
    }
    r.round = round;
    r.clients_seen = seen;
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Round loop

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t pool = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (pool <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  threads.reserve(pool);
  for (std::size_t w = 0; w < pool; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::size_t> sample_cohort(std::uint64_t seed, std::uint64_t round, std::size_t population,
                                       std::size_t k) {
  if (k > population) {
    throw UsageError("cohort of " + std::to_string(k) + " exceeds population of " + std::to_string(population));
  }
  Rng rng = derive_stream(seed, "cohort", round);
  std::vector<std::size_t> idx(population);
  for (std::size_t i = 0; i < population; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, population - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

RoundResult run_round(std::uint64_t round, const ParamVector& weights, ServerOptimizerState& state,
                      const ModelConfig& model, const RunConfig& cfg,
                      const std::vector<ClientCache>& train_clients, const CorpusIndex& train_index) {
  const auto cohort = sample_cohort(cfg.seed, round, train_clients.size(),
                                    static_cast<std::size_t>(cfg.clients_per_round));
  std::vector<ClientUpdate> updates(cohort.size());
  parallel_for(cohort.size(), cfg.workers, [&](std::size_t i) {
    const ClientCache& cache = train_clients[cohort[i]];
    Rng rng = derive_stream(cfg.seed, "client", round, cache.client_id);
    updates[i] = train_client(model, weights, cache, train_index, cfg.client, cfg.lr, round, rng);
  });

  RoundResult result;
  for (const auto i : cohort) result.cohort.push_back(train_clients[i].client_id);
  for (const auto& u : updates) result.mean_local_loss += u.local_loss;
  result.mean_local_loss /= static_cast<double>(updates.size());
  result.delta = aggregate(updates);
  result.weights = server_step(state, weights, result.delta, cfg.server);
  return result;
}

void check_orthogonal(const Corpus& train, const Corpus& eval) {
  std::unordered_set<std::string> ids, speakers;
  for (const auto& u : train) {
    ids.insert(u.id);
    speakers.insert(u.speaker);
  }
  for (const auto& u : eval) {
    if (ids.count(u.id)) throw DataError("utterance " + u.id + " appears in both train and eval sets");
    if (speakers.count(u.speaker)) throw DataError("speaker " + u.speaker + " appears in both train and eval sets");
  }
}

ParamVector initial_params(const ModelConfig& model, std::uint64_t seed) {
  Rng rng = derive_stream(seed, "init");
  return init_params(model, rng);
}

namespace {

void narrow_state(ServerOptimizerState& st) {
  narrow_to_float(st.v);
  narrow_to_float(st.m);
  narrow_to_float(st.s);
}

std::string checkpoint_name(std::uint32_t round) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06u.kwsc", round);
  return buf;
}

}  // namespace

TrainingResult run_training(const ModelConfig& model, const RunConfig& cfg, const FederatedData& data,
                            const TrainingOutput& output, const ResumeFrom* resume,
                            const RoundCallback& on_round) {
  cfg.validate();
  if (!data.train || !data.train_clients || !data.eval || !data.eval_clients) {
    throw UsageError("run_training: missing train or eval data");
  }
  check_orthogonal(*data.train, *data.eval);
  if (data.train_clients->empty()) throw UsageError("run_training: no train clients");
  if (static_cast<std::size_t>(cfg.clients_per_round) > data.train_clients->size()) {
    throw UsageError("run_training: clients_per_round (" + std::to_string(cfg.clients_per_round) +
                     ") exceeds the " + std::to_string(data.train_clients->size()) + " train clients");
  }
  const CorpusIndex train_index(*data.train);
  const CorpusIndex eval_index(*data.eval);
  const std::uint64_t hash = config_fingerprint(cfg, model);

  TrainingResult result;
  ParamVector w;
  ServerOptimizerState state;
  std::uint32_t start = 0;
  if (resume) {
    if (resume->checkpoint.config_hash != hash) {
      throw DataError("checkpoint was written by a run with a different configuration");
    }
    if (resume->checkpoint.params.size() != param_count(model)) {
      throw FormatError("param_count", 12, "checkpoint does not match the model configuration");
    }
    w = resume->checkpoint.params;
    state = restore_server_state(resume->checkpoint, cfg.server);
    start = resume->checkpoint.round;
    for (const auto& r : resume->prior_rows) {
      if (r.round <= start) result.rows.push_back(r);
    }
  } else {
    w = initial_params(model, cfg.seed);
    state = init_server_state(cfg.server, w.size());
  }

  std::optional<std::filesystem::path> ckpt_dir;
  if (output.dir) {
    ckpt_dir = *output.dir / "checkpoints";
    std::filesystem::create_directories(*ckpt_dir);
  }

  auto checkpoint_point = [&](std::uint32_t round) {
    narrow_to_float(w);
    narrow_state(state);
    const EvalMetrics m = eval_clients(w, model, *data.eval_clients, eval_index);
    MetricsRow row;
    row.round = round;
    row.eval_loss = m.mean_loss;
    row.frame_accuracy = m.frame_accuracy;
    row.clients_seen = static_cast<std::uint64_t>(round) * static_cast<std::uint64_t>(cfg.clients_per_round);
    row.client_lr = client_lr(cfg.lr, round);
    result.rows.push_back(row);
    if (ckpt_dir) {
      write_checkpoint_file(make_checkpoint(round, w, state, hash), *ckpt_dir / checkpoint_name(round));
      write_metrics_csv(result.rows, *output.dir / "metrics.csv");
    }
  };

  if (!resume) checkpoint_point(0);
  const auto total = static_cast<std::uint32_t>(cfg.total_rounds);
  for (std::uint32_t r = start; r < total; ++r) {
    RoundResult rr = run_round(r, w, state, model, cfg, *data.train_clients, train_index);
    w = std::move(rr.weights);
    const std::uint32_t done = r + 1;
    if (on_round) on_round(done, w);
    if (done % static_cast<std::uint32_t>(cfg.eval_every) == 0 || done == total) checkpoint_point(done);
  }

  const auto best = std::min_element(result.rows.begin(), result.rows.end(),
                                     [](const MetricsRow& a, const MetricsRow& b) { return a.eval_loss < b.eval_loss; });
  if (best != result.rows.end()) {
    result.best_round = best->round;
    result.best_eval_loss = best->eval_loss;
  }
  if (output.dir) {
    std::ofstream out(*output.dir / "best_checkpoint.txt", std::ios::binary | std::ios::trunc);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "round\t%u\neval_loss\t%.9g\ncheckpoint\tcheckpoints/%s\n", result.best_round,
                  result.best_eval_loss, checkpoint_name(result.best_round).c_str());
    out << buf;
  }
  result.final_params = std::move(w);
  result.final_state = std::move(state);
  return result;
}

// ---------------------------------------------------------------------------
// Central baseline

ParamVector central_train(const ModelConfig& model, const ParamVector& init,
                          std::span<const Utterance* const> data, const CentralConfig& cfg, Rng& rng) {
  if (data.empty()) throw UsageError("central_train: empty dataset");
  if (!(cfg.lr > 0.0)) throw UsageError("central_train: lr must be > 0");
  if (cfg.augment) cfg.augment->validate();
  if (init.size() != param_count(model)) throw UsageError("central_train: parameter count mismatch");
  ParamVector w = init;
  std::vector<const Utterance*> order(data.begin(), data.end());
  std::size_t pos = order.size();
  for (std::uint64_t step = 0; step < cfg.steps; ++step) {
    if (pos == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      pos = 0;
    }
    const Utterance* u = order[pos++];
    const LossAndGradient lg = cfg.augment
                                   ? model_backward(w, model, apply_spec_augment(u->spec, *cfg.augment, rng), u->targets)
                                   : model_backward(w, model, u->spec, u->targets);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.lr * lg.gradient[i];
  }
  ensure_finite(w, "central_train");
  return w;
}

ParamVector central_train(const ModelConfig& model, const Corpus& data, const CentralConfig& cfg,
                          std::uint64_t seed) {
  std::vector<const Utterance*> ptrs;
  ptrs.reserve(data.size());
  for (const auto& u : data) ptrs.push_back(&u);
  Rng rng = derive_stream(seed, "central");
  return central_train(model, initial_params(model, seed), ptrs, cfg, rng);
}

}  // namespace kws
