#include "kws/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "kws/errors.hpp"
#include "kws/rng.hpp"

namespace kws {

const char* polarity_name(Polarity p) { return p == Polarity::kPositive ? "pos" : "neg"; }

Polarity parse_polarity(const std::string& s) {
  if (s == "pos") return Polarity::kPositive;
  if (s == "neg") return Polarity::kNegative;
  throw UsageError("unknown polarity '" + s + "' (expected pos or neg)");
}

void check_consistency(const Utterance& u) {
  if (u.targets.size() != static_cast<std::size_t>(u.spec.frames)) {
    throw DataError("utterance " + u.id + ": targets length does not match frame count");
  }
  const bool any = std::any_of(u.targets.begin(), u.targets.end(), [](std::uint8_t t) { return t != 0; });
  if (any != (u.polarity == Polarity::kPositive)) {
    throw DataError("utterance " + u.id + ": polarity does not match frame targets");
  }
}

void SyntheticConfig::validate() const {
  if (n_speakers < 1) throw UsageError("n_speakers must be >= 1");
  if (utterances_per_speaker < 1) throw UsageError("utterances_per_speaker must be >= 1");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw UsageError("positive_fraction must lie in [0, 1]");
  }
  if (keyword_len_frames < 1) throw UsageError("keyword_len_frames must be >= 1");
  if (keyword_len_frames >= utterance_len_frames) {
    throw UsageError("keyword_len_frames must be < utterance_len_frames");
  }
  if (bins < 2) throw UsageError("bins must be >= 2");
  if (!std::isfinite(snr_db)) throw UsageError("snr_db must be finite");
  if (speaker_offset < 0) throw UsageError("speaker_offset must be >= 0");
  if (!(distractor_fraction >= 0.0 && distractor_fraction <= 1.0)) {
    throw UsageError("distractor_fraction must lie in [0, 1]");
  }
}

namespace {

// Speaker-dependent rendering parameters, derived from the speaker id alone.
struct SpeakerTraits {
  double low_bin;
  double high_bin;
  int keyword_len;
  double gain;
  std::vector<double> timbre;
};

SpeakerTraits speaker_traits(const std::string& speaker, const SyntheticConfig& cfg) {
  Rng rng = derive_stream(fnv1a64(speaker), "speaker-traits");
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  std::uniform_real_distribution<double> stretch(0.85, 1.15);
  std::uniform_real_distribution<double> gain(0.8, 1.2);
  std::normal_distribution<double> timbre(0.0, 0.3);
  SpeakerTraits tr;
  const double span = cfg.bins - 1;
  tr.low_bin = 0.2 * span + jitter(rng);
  tr.high_bin = 0.8 * span + jitter(rng);
  const int len = static_cast<int>(std::lround(cfg.keyword_len_frames * stretch(rng)));
  tr.keyword_len = std::clamp(len, 1, cfg.utterance_len_frames - 1);
  tr.gain = gain(rng);
  tr.timbre.resize(static_cast<std::size_t>(cfg.bins));
  for (double& v : tr.timbre) v = timbre(rng);
  return tr;
}

// Band-limited rising chirp; `flipped` mirrors it along frequency.
double chirp(const SpeakerTraits& tr, int frame, int bin, int bins, bool flipped) {
  const double pos = tr.keyword_len > 1 ? static_cast<double>(frame) / (tr.keyword_len - 1) : 0.0;
  const double center = tr.low_bin + (tr.high_bin - tr.low_bin) * pos;
  const double b = flipped ? (bins - 1 - bin) : bin;
  constexpr double kBandwidth = 1.2;
  const double d = (b - center) / kBandwidth;
  return std::exp(-0.5 * d * d);
}

std::string speaker_name(int i) { return "s" + std::to_string(i); }

std::string utterance_name(const std::string& speaker, int j) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "_u%04d", j);
  return speaker + buf;
}

// Little-endian byte helpers.
void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::uint64_t kMaxUtteranceValues = 1ULL << 28;

}  // namespace

std::vector<UtterancePlan> plan_synthetic_dataset(const SyntheticConfig& cfg) {
  cfg.validate();
  std::vector<UtterancePlan> plan;
  plan.reserve(static_cast<std::size_t>(cfg.n_speakers) * cfg.utterances_per_speaker);
  Rng rng = derive_stream(cfg.seed, "corpus-plan");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < cfg.n_speakers; ++i) {
    const std::string speaker = speaker_name(cfg.speaker_offset + i);
    for (int j = 0; j < cfg.utterances_per_speaker; ++j) {
      UtterancePlan p;
      p.id = utterance_name(speaker, j);
      p.speaker = speaker;
      p.polarity = u01(rng) < cfg.positive_fraction ? Polarity::kPositive : Polarity::kNegative;
      p.distractor = u01(rng) < cfg.distractor_fraction;
      if (p.polarity == Polarity::kPositive) p.distractor = false;
      p.index = plan.size();
      plan.push_back(std::move(p));
    }
  }
  return plan;
}

Utterance render_utterance(const UtterancePlan& plan, const SyntheticConfig& cfg) {
  const SpeakerTraits tr = speaker_traits(plan.speaker, cfg);
  Rng rng = derive_stream(cfg.seed, "utterance", plan.index, plan.id);
  const int frames = cfg.utterance_len_frames;
  const double amplitude = std::pow(10.0, cfg.snr_db / 20.0) * tr.gain;

  Utterance u;
  u.id = plan.id;
  u.speaker = plan.speaker;
  u.polarity = plan.polarity;
  u.spec = Spectrogram(frames, cfg.bins);
  u.targets.assign(static_cast<std::size_t>(frames), 0);

  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> values(static_cast<std::size_t>(frames) * cfg.bins);
  for (int t = 0; t < frames; ++t) {
    for (int b = 0; b < cfg.bins; ++b) values[static_cast<std::size_t>(t) * cfg.bins + b] = noise(rng) + tr.timbre[b];
  }
  const bool has_event = plan.polarity == Polarity::kPositive || plan.distractor;
  if (has_event) {
    const int offset = std::uniform_int_distribution<int>(0, frames - tr.keyword_len)(rng);
    const bool flipped = plan.polarity == Polarity::kNegative;
    for (int j = 0; j < tr.keyword_len; ++j) {
      for (int b = 0; b < cfg.bins; ++b) {
        values[static_cast<std::size_t>(offset + j) * cfg.bins + b] += amplitude * chirp(tr, j, b, cfg.bins, flipped);
      }
    }
    if (plan.polarity == Polarity::kPositive) {
      const int last = offset + tr.keyword_len - 1;
      for (int t = std::max(0, last - kTargetWindow + 1); t <= last; ++t) u.targets[t] = 1;
    }
  }
  for (std::size_t i = 0; i < values.size(); ++i) u.spec.values[i] = static_cast<float>(values[i]);
  return u;
}

Corpus generate_synthetic_dataset(const SyntheticConfig& cfg) {
  Corpus corpus;
  for (const auto& p : plan_synthetic_dataset(cfg)) corpus.push_back(render_utterance(p, cfg));
  return corpus;
}

void write_utterance(const Utterance& u, std::ostream& out) {
  if (u.spec.frames < 0 || u.spec.bins < 0 ||
      u.spec.values.size() != static_cast<std::size_t>(u.spec.frames) * u.spec.bins ||
      u.targets.size() != static_cast<std::size_t>(u.spec.frames)) {
    throw UsageError("write_utterance: inconsistent dimensions for " + u.id);
  }
  std::string buf;
  buf.reserve(kUtteranceHeaderBytes + u.spec.values.size() * 4 + u.targets.size());
  buf.append("KWSU");
  put_u16(buf, 1);
  put_u16(buf, 0);
  put_u32(buf, static_cast<std::uint32_t>(u.spec.frames));
  put_u32(buf, static_cast<std::uint32_t>(u.spec.bins));
  for (float v : u.spec.values) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  for (std::uint8_t t : u.targets) buf.push_back(static_cast<char>(t));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write_utterance: write failed for " + u.id);
}

UtteranceData read_utterance(std::istream& in) {
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t size = bytes.size();
  auto need = [&](std::uint64_t offset, std::uint64_t count, const char* field) {
    if (size < offset + count) throw FormatError(field, size, "truncated file");
  };
  need(0, 4, "magic");
  if (std::memcmp(p, "KWSU", 4) != 0) throw FormatError("magic", 0, "expected \"KWSU\"");
  need(4, 2, "version");
  if (get_u16(p + 4) != 1) throw FormatError("version", 4, "unsupported version " + std::to_string(get_u16(p + 4)));
  need(6, 2, "reserved");
  if (get_u16(p + 6) != 0) throw FormatError("reserved", 6, "reserved field must be zero");
  need(8, 4, "num_frames");
  const std::uint32_t frames = get_u32(p + 8);
  need(12, 4, "num_bins");
  const std::uint32_t bins = get_u32(p + 12);
  if (frames == 0 || frames > kMaxUtteranceValues) throw FormatError("num_frames", 8, "frame count out of range");
  if (bins == 0 || static_cast<std::uint64_t>(frames) * bins > kMaxUtteranceValues) {
    throw FormatError("num_bins", 12, "frames x bins out of range");
  }
  const std::uint64_t n = static_cast<std::uint64_t>(frames) * bins;
  need(kUtteranceHeaderBytes, n * 4, "features");
  const std::uint64_t target_offset = kUtteranceHeaderBytes + n * 4;
  need(target_offset, frames, "targets");
  if (size != target_offset + frames) throw FormatError("targets", target_offset + frames, "trailing bytes");

  UtteranceData d;
  d.spec = Spectrogram(static_cast<int>(frames), static_cast<int>(bins));
  for (std::uint64_t i = 0; i < n; ++i) d.spec.values[i] = std::bit_cast<float>(get_u32(p + kUtteranceHeaderBytes + 4 * i));
  d.targets.resize(frames);
  for (std::uint32_t t = 0; t < frames; ++t) {
    const unsigned char v = p[target_offset + t];
    if (v > 1) throw FormatError("targets", target_offset + t, "target byte must be 0 or 1");
    d.targets[t] = v;
  }
  return d;
}

void write_utterance_file(const Utterance& u, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_utterance(u, out);
}

UtteranceData read_utterance_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open utterance file " + path.string());
  return read_utterance(in);
}

void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& r : rows) {
    out << r.utterance_id << '\t' << r.speaker_id << '\t' << polarity_name(r.polarity) << '\t' << r.path << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) throw FormatError("manifest row", line_no, "expected 4 tab-separated fields");
    for (const auto& f : fields) {
      if (f.empty()) throw FormatError("manifest row", line_no, "empty field");
    }
    ManifestRow r;
    r.utterance_id = fields[0];
    r.speaker_id = fields[1];
    if (fields[2] == "pos") {
      r.polarity = Polarity::kPositive;
    } else if (fields[2] == "neg") {
      r.polarity = Polarity::kNegative;
    } else {
      throw FormatError("polarity", line_no, "expected pos or neg, got '" + fields[2] + "'");
    }
    r.path = fields[3];
    rows.push_back(std::move(r));
  }
  return rows;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "utt");
  std::vector<ManifestRow> rows;
  rows.reserve(corpus.size());
  for (const auto& u : corpus) {
    const std::string rel = "utt/" + u.id + ".kwsu";
    write_utterance_file(u, dir / rel);
    rows.push_back({u.id, u.speaker, u.polarity, rel});
  }
  write_manifest(rows, dir / "manifest.tsv");
}

Corpus load_corpus(const std::filesystem::path& manifest_path) {
  const auto rows = read_manifest(manifest_path);
  const auto base = manifest_path.parent_path();
  Corpus corpus;
  corpus.reserve(rows.size());
  for (const auto& r : rows) {
    const auto file = base / r.path;
    if (file.stem().string() != r.utterance_id) {
      throw DataError("manifest row " + r.utterance_id + " points at " + r.path);
    }
    UtteranceData d = read_utterance_file(file);
    Utterance u;
    u.id = r.utterance_id;
    u.speaker = r.speaker_id;
    u.polarity = r.polarity;
    u.spec = std::move(d.spec);
    u.targets = std::move(d.targets);
    check_consistency(u);
    corpus.push_back(std::move(u));
  }
  return corpus;
}

CorpusIndex::CorpusIndex(const Corpus& corpus) : corpus_(&corpus) {
  index_.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!index_.emplace(corpus[i].id, i).second) throw DataError("duplicate utterance id " + corpus[i].id);
  }
}

const Utterance& CorpusIndex::at(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown utterance id " + id);
  return (*corpus_)[it->second];
}

Corpus relabel_with_teacher(const Corpus& corpus, const ParamVector& teacher_params,
                            const ModelConfig& teacher_config, double threshold) {
  if (teacher_params.size() != param_count(teacher_config)) {
    throw UsageError("relabel_with_teacher: teacher parameters do not match teacher config");
  }
  Corpus out = corpus;
  for (auto& u : out) {
    const FrameScores scores = model_forward(teacher_params, teacher_config, u.spec);
    bool any = false;
    for (std::size_t t = 0; t < scores.size(); ++t) {
      u.targets[t] = scores[t] >= threshold ? 1 : 0;
      any = any || u.targets[t];
    }
    u.polarity = any ? Polarity::kPositive : Polarity::kNegative;
  }
  return out;
}

}  // namespace kws
