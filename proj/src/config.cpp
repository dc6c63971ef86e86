#include "kws/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>

namespace kws {

namespace {

// Values from the file before they are folded into ExperimentConfig. Keys
// whose default depends on another key (server hyperparameters on the
// variant, eval data on train data) are resolved in finalize().
struct Draft {
  ExperimentConfig cfg;
  bool augment_enabled = true;
  SpecAugmentConfig augment;
  int eval_speakers = 10;
  int eval_utterances_per_speaker = 50;
  double eval_snr_db = 6.0;
  std::uint64_t eval_seed = 2;
  std::optional<double> eta_s, gamma, beta1, beta2, epsilon, v0;
  bool nesterov = false;

  Draft() { cfg.central.steps = 50000; }
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
  return out;
}

int to_count(const std::string& key, const std::string& v, long long min = 0) {
  const long long x = to_int(key, v);
  if (x < min || x > 1'000'000'000) throw ConfigError(key, "value " + v + " out of range (minimum " + std::to_string(min) + ")");
  return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key, "expected an unsigned integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
}

double to_range(const std::string& key, const std::string& v, double lo, double hi, bool open_lo = false,
                bool open_hi = false) {
  const double x = to_double(key, v);
  const bool ok = (open_lo ? x > lo : x >= lo) && (open_hi ? x < hi : x <= hi);
  if (!ok) {
    std::ostringstream msg;
    msg << "value " << v << " outside " << (open_lo ? '(' : '[') << lo << ", " << hi << (open_hi ? ')' : ']');
    throw ConfigError(key, msg.str());
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::vector<SvdfLayerSpec> to_layers(const std::string& key, const std::string& v, bool bottleneck) {
  std::vector<SvdfLayerSpec> out;
  if (v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::vector<std::string> parts;
    std::stringstream is(trim(item));
    std::string p;
    while (std::getline(is, p, ':')) parts.push_back(p);
    const std::size_t want = bottleneck ? 3 : 2;
    if (parts.size() != want) {
      throw ConfigError(key, bottleneck ? "layers are nodes:memory:bottleneck" : "layers are nodes:memory");
    }
    SvdfLayerSpec l;
    l.nodes = to_count(key, parts[0], 1);
    l.memory = to_count(key, parts[1], 1);
    l.bottleneck = bottleneck ? to_count(key, parts[2], 1) : 0;
    out.push_back(l);
  }
  return out;
}

std::optional<double> to_optional(const std::string& key, const std::string& v, const char* sentinel) {
  if (v == sentinel) return std::nullopt;
  return to_double(key, v);
}

using Setter = std::function<void(Draft&, const std::string& key, const std::string& value)>;

struct KeySpec {
  ConfigKeyInfo info;
  Setter set;
};

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> keys = {
      // run
      {{"run.seed", "1", "root seed for every derived random stream"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.run.seed = to_u64(k, v); }},
      {{"run.clients_per_round", "20", "K, clients sampled per round"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.run.clients_per_round = to_count(k, v, 1); }},
      {{"run.total_rounds", "300", "federated rounds"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.run.total_rounds = to_count(k, v); }},
      {{"run.eval_every", "10", "rounds between eval rows / checkpoints"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.run.eval_every = to_count(k, v, 1); }},
      {{"run.workers", "1", "client-training threads"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.run.workers = to_count(k, v, 1); }},
      // synthetic data
      {{"data.n_speakers", "40", "train speakers"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.train_data.n_speakers = to_count(k, v, 1); }},
      {{"data.utterances_per_speaker", "108", "utterances per train speaker"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.train_data.utterances_per_speaker = to_count(k, v, 1); }},
      {{"data.positive_fraction", "0.5", "share of utterances containing the keyword"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.train_data.positive_fraction = to_range(k, v, 0.0, 1.0); }},
      {{"data.distractor_fraction", "0.5", "share of negatives carrying the flipped distractor"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.train_data.distractor_fraction = to_range(k, v, 0.0, 1.0); }},
      {{"data.keyword_len_frames", "40", "nominal keyword length in frames"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.train_data.keyword_len_frames = to_count(k, v, 1); }},
      {{"data.utterance_len_frames", "200", "utterance length in frames (10 ms each)"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.train_data.utterance_len_frames = to_count(k, v, 2); }},
      {{"data.snr_db", "6", "keyword-to-noise ratio of train utterances"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.train_data.snr_db = to_double(k, v); }},
      {{"data.seed", "1", "train corpus seed"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.train_data.seed = to_u64(k, v); }},
      {{"data.eval_speakers", "10", "held-out eval speakers"},
       [](Draft& d, const std::string& k, const std::string& v) { d.eval_speakers = to_count(k, v, 1); }},
      {{"data.eval_utterances_per_speaker", "50", "utterances per eval speaker"},
       [](Draft& d, const std::string& k, const std::string& v) { d.eval_utterances_per_speaker = to_count(k, v, 1); }},
      {{"data.eval_snr_db", "6", "keyword-to-noise ratio of eval utterances"},
       [](Draft& d, const std::string& k, const std::string& v) { d.eval_snr_db = to_double(k, v); }},
      {{"data.eval_seed", "2", "eval corpus seed"},
       [](Draft& d, const std::string& k, const std::string& v) { d.eval_seed = to_u64(k, v); }},
      // model
      {{"model.input_bins", "16", "spectral bins per frame"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.model.input_bins = to_count(k, v, 2); }},
      {{"model.encoder", "32:8:16,32:8:16,32:8:16,32:8:16", "encoder SVDF layers, nodes:memory:bottleneck"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.model.encoder = to_layers(k, v, true); }},
      {{"model.decoder", "16:16,16:16,16:16", "decoder SVDF layers, nodes:memory"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.model.decoder = to_layers(k, v, false); }},
      // partition
      {{"partition.mode", "non_iid", "iid or non_iid"},
       [](Draft& d, const std::string& k, const std::string& v) {
         try {
           d.cfg.partition.mode = parse_partition_mode(v);
         } catch (const UsageError& e) {
           throw ConfigError(k, e.what());
         }
       }},
      {{"partition.iid_cluster_size", "50", "utterances per IID client"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.partition.iid_cluster_size = to_count(k, v, 1); }},
      {{"partition.target_median_n", "6.5", "median utterances per non-IID client"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.partition.target_median_n = to_range(k, v, 1.0, 1e9); }},
      {{"partition.seed", "1", "partition shuffle seed"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.partition.seed = to_u64(k, v); }},
      // server optimizer
      {{"server.variant", "yogi", "sgd, nag, adam or yogi"},
       [](Draft& d, const std::string& k, const std::string& v) {
         try {
           d.cfg.run.server.variant = parse_server_variant(v);
         } catch (const UsageError& e) {
           throw ConfigError(k, e.what());
         }
       }},
      {{"server.nesterov", "false", "Nesterov moment for adam / yogi"},
       [](Draft& d, const std::string& k, const std::string& v) { d.nesterov = to_bool(k, v); }},
      {{"server.eta_s", "per variant", "server learning rate (sgd/nag 1, adam 1e-3, yogi 0.1)"},
       [](Draft& d, const std::string& k, const std::string& v) { d.eta_s = to_range(k, v, 0.0, 1e9, true); }},
      {{"server.gamma", "per variant", "nag momentum (0.99)"},
       [](Draft& d, const std::string& k, const std::string& v) { d.gamma = to_range(k, v, 0.0, 1.0, false, true); }},
      {{"server.beta1", "0.9", "first-moment decay"},
       [](Draft& d, const std::string& k, const std::string& v) { d.beta1 = to_range(k, v, 0.0, 1.0, false, true); }},
      {{"server.beta2", "0.999", "second-moment decay"},
       [](Draft& d, const std::string& k, const std::string& v) { d.beta2 = to_range(k, v, 0.0, 1.0, false, true); }},
      {{"server.epsilon", "per variant", "adaptive denominator offset (adam 1e-8, yogi 1e-3)"},
       [](Draft& d, const std::string& k, const std::string& v) { d.epsilon = to_range(k, v, 0.0, 1e9, true); }},
      {{"server.v0", "per variant", "initial second moment (adam 0, yogi 1e-6)"},
       [](Draft& d, const std::string& k, const std::string& v) { d.v0 = to_range(k, v, 0.0, 1e9); }},
      // client
      {{"client.epochs", "10", "local epochs per round"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.run.client.epochs = to_count(k, v, 1); }},
      {{"client.clip_norm", "20", "L2 clip of the client delta, or none"},
       [](Draft& d, const std::string& k, const std::string& v) {
         d.cfg.run.client.clip_norm = to_optional(k, v, "none");
         if (d.cfg.run.client.clip_norm && !(*d.cfg.run.client.clip_norm > 0.0)) throw ConfigError(k, "must be > 0");
       }},
      {{"client.lr_schedule", "exponential", "constant or exponential"},
       [](Draft& d, const std::string& k, const std::string& v) {
         try {
           d.cfg.run.lr.kind = parse_lr_kind(v);
         } catch (const UsageError& e) {
           throw ConfigError(k, e.what());
         }
       }},
      {{"client.lr", "0.02", "initial client learning rate"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.run.lr.eta0 = to_range(k, v, 0.0, 1e9, true); }},
      {{"client.lr_gamma", "0.9", "decay factor per decay period"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.run.lr.gamma = to_range(k, v, 0.0, 1.0, true); }},
      {{"client.lr_decay_every", "1000", "rounds per decay period"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.run.lr.decay_every = to_count(k, v, 1); }},
      // augmentation
      {{"specaugment.enabled", "true", "apply SpecAugment during client training"},
       [](Draft& d, const std::string& k, const std::string& v) { d.augment_enabled = to_bool(k, v); }},
      {{"specaugment.n_time_masks", "2", "time masks per utterance"},
       [](Draft& d, const std::string& k, const std::string& v) { d.augment.n_time_masks = to_count(k, v); }},
      {{"specaugment.max_time_frames", "60", "maximum time-mask width"},
       [](Draft& d, const std::string& k, const std::string& v) { d.augment.max_time_frames = to_count(k, v); }},
      {{"specaugment.n_freq_masks", "2", "frequency masks per utterance"},
       [](Draft& d, const std::string& k, const std::string& v) { d.augment.n_freq_masks = to_count(k, v); }},
      {{"specaugment.max_freq_bins", "15", "maximum frequency-mask width"},
       [](Draft& d, const std::string& k, const std::string& v) { d.augment.max_freq_bins = to_count(k, v); }},
      {{"specaugment.noise_mean", "auto", "time-mask fill mean (auto: utterance mean)"},
       [](Draft& d, const std::string& k, const std::string& v) { d.augment.noise_mean = to_optional(k, v, "auto"); }},
      {{"specaugment.noise_std", "auto", "time-mask fill std (auto: utterance std)"},
       [](Draft& d, const std::string& k, const std::string& v) {
         d.augment.noise_std = to_optional(k, v, "auto");
         if (d.augment.noise_std && *d.augment.noise_std < 0.0) throw ConfigError(k, "must be >= 0");
       }},
      // labeling
      {{"labeling.mode", "supervised", "supervised or teacher"},
       [](Draft& d, const std::string& k, const std::string& v) {
         if (v == "supervised") {
           d.cfg.labeling.mode = LabelingMode::kSupervised;
         } else if (v == "teacher") {
           d.cfg.labeling.mode = LabelingMode::kTeacher;
         } else {
           throw ConfigError(k, "expected supervised or teacher, got '" + v + "'");
         }
       }},
      {{"labeling.teacher_checkpoint", "", "teacher checkpoint path (teacher mode)"},
       [](Draft& d, const std::string&, const std::string& v) { d.cfg.labeling.teacher_checkpoint = v; }},
      {{"labeling.threshold", "0.5", "teacher score threshold for a positive frame"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.labeling.threshold = to_range(k, v, 0.0, 1.0); }},
      // central baseline
      {{"central.steps", "50000", "SGD steps of the centralized baseline / teacher"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.central.steps = to_u64(k, v); }},
      {{"central.lr", "0.02", "centralized SGD learning rate"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.central.lr = to_range(k, v, 0.0, 1e9, true); }},
      // offline eval
      {{"eval.target_fa", "0.002", "false-accept budget for threshold tuning"},
       [](Draft& d, const std::string& k, const std::string& v) { d.cfg.target_fa = to_range(k, v, 0.0, 1.0, true, true); }},
  };
  return keys;
}

ExperimentConfig finalize(Draft& d) {
  ExperimentConfig& c = d.cfg;
  const ServerVariant variant = c.run.server.variant;
  c.run.server = ServerOptimizerConfig::defaults(variant);
  c.run.server.nesterov = d.nesterov;
  if (d.eta_s) c.run.server.eta_s = *d.eta_s;
  if (d.gamma) c.run.server.gamma = *d.gamma;
  if (d.beta1) c.run.server.beta1 = *d.beta1;
  if (d.beta2) c.run.server.beta2 = *d.beta2;
  if (d.epsilon) c.run.server.epsilon = *d.epsilon;
  if (d.v0) c.run.server.v0 = *d.v0;
  if (c.run.server.nesterov && (variant == ServerVariant::kSgd || variant == ServerVariant::kNag)) {
    throw ConfigError("server.nesterov", "applies to adam and yogi only");
  }

  c.run.client.augment = d.augment_enabled ? std::optional<SpecAugmentConfig>(d.augment) : std::nullopt;
  c.central.augment = c.run.client.augment;

  c.train_data.bins = c.model.input_bins;
  c.train_data.speaker_offset = 0;
  if (c.train_data.keyword_len_frames >= c.train_data.utterance_len_frames) {
    throw ConfigError("data.keyword_len_frames", "must be smaller than data.utterance_len_frames");
  }
  c.eval_data = c.train_data;
  c.eval_data.n_speakers = d.eval_speakers;
  c.eval_data.utterances_per_speaker = d.eval_utterances_per_speaker;
  c.eval_data.snr_db = d.eval_snr_db;
  c.eval_data.seed = d.eval_seed;
  c.eval_data.speaker_offset = c.train_data.n_speakers;

  if (c.model.encoder.empty() && c.model.decoder.empty()) {
    throw ConfigError("model.decoder", "the model needs at least one SVDF layer");
  }
  if (c.labeling.mode == LabelingMode::kTeacher && c.labeling.teacher_checkpoint.empty()) {
    throw ConfigError("labeling.teacher_checkpoint", "required when labeling.mode = teacher");
  }
  c.run.labeling = c.labeling.mode == LabelingMode::kSupervised
                       ? "supervised"
                       : "teacher@" + std::to_string(c.labeling.threshold);
  return c;
}

}  // namespace

const std::vector<ConfigKeyInfo>& config_keys() {
  static const std::vector<ConfigKeyInfo> infos = [] {
    std::vector<ConfigKeyInfo> out;
    for (const auto& k : schema()) out.push_back(k.info);
    return out;
  }();
  return infos;
}

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, std::pair<std::string, int>> values;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("", "line " + std::to_string(line_no) + ": empty key");
    if (!values.emplace(key, std::make_pair(value, line_no)).second) {
      throw ConfigError(key, "set twice (line " + std::to_string(line_no) + ")");
    }
  }
  for (const auto& [key, v] : values) {
    bool known = false;
    for (const auto& k : schema()) known = known || k.info.key == key;
    if (!known) throw ConfigError(key, "unknown key (line " + std::to_string(v.second) + ")");
  }
  Draft d;
  for (const auto& k : schema()) {
    const auto it = values.find(k.info.key);
    if (it != values.end()) k.set(d, k.info.key, it->second.first);
  }
  return finalize(d);
}

ExperimentConfig load_config_file(const std::filesystem::path& path) { return parse_config(read_text_file(path)); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
}

std::string default_config_text() {
  std::ostringstream out;
  for (const auto& k : schema()) {
    out << "# " << k.info.help << '\n';
    if (k.info.default_value == "per variant" || k.info.default_value.empty()) {
      out << "# " << k.info.key << " = " << k.info.default_value << "\n\n";
    } else {
      out << k.info.key << " = " << k.info.default_value << "\n\n";
    }
  }
  return out.str();
}

}  // namespace kws
