#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "kws/model.hpp"
#include "kws/spectrogram.hpp"

namespace kws {

enum class Polarity : std::uint8_t { kNegative = 0, kPositive = 1 };

const char* polarity_name(Polarity p);  // "pos" / "neg"
Polarity parse_polarity(const std::string& s);

struct Utterance {
  std::string id;
  std::string speaker;
  Polarity polarity = Polarity::kNegative;
  Spectrogram spec;
  std::vector<std::uint8_t> targets;  // one per frame, 0 or 1

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

using Corpus = std::vector<Utterance>;

// Throws DataError when targets disagree with the frame count or polarity.
void check_consistency(const Utterance& u);

// Frames carrying a positive target in a positive utterance: the last
// kTargetWindow frames of the keyword.
inline constexpr int kTargetWindow = 10;

struct SyntheticConfig {
  int n_speakers = 40;
  int utterances_per_speaker = 108;
  double positive_fraction = 0.5;
  int keyword_len_frames = 40;
  int utterance_len_frames = 200;
  double snr_db = 6.0;
  std::uint64_t seed = 1;
  int bins = 16;
  // Speaker ids are "s<speaker_offset + i>"; disjoint offsets give disjoint
  // user groups (train vs eval).
  int speaker_offset = 0;
  // Share of negatives that carry the frequency-flipped distractor instead
  // of pure noise.
  double distractor_fraction = 0.5;

  void validate() const;
};

// Utterance metadata without the rendered spectrogram. Rendering a plan
// entry yields exactly the corresponding generated utterance.
struct UtterancePlan {
  std::string id;
  std::string speaker;
  Polarity polarity = Polarity::kNegative;
  bool distractor = false;
  std::uint64_t index = 0;  // position in the corpus
};

std::vector<UtterancePlan> plan_synthetic_dataset(const SyntheticConfig& cfg);
Utterance render_utterance(const UtterancePlan& plan, const SyntheticConfig& cfg);
Corpus generate_synthetic_dataset(const SyntheticConfig& cfg);

// Binary utterance file (little-endian):
//   "KWSU" u16 version=1 u16 reserved=0 u32 num_frames u32 num_bins
//   float32[num_frames * num_bins] frame-major, u8[num_frames] targets
inline constexpr std::uint32_t kUtteranceHeaderBytes = 16;

struct UtteranceData {
  Spectrogram spec;
  std::vector<std::uint8_t> targets;
};

void write_utterance(const Utterance& u, std::ostream& out);
UtteranceData read_utterance(std::istream& in);
void write_utterance_file(const Utterance& u, const std::filesystem::path& path);
UtteranceData read_utterance_file(const std::filesystem::path& path);

struct ManifestRow {
  std::string utterance_id;
  std::string speaker_id;
  Polarity polarity = Polarity::kNegative;
  std::string path;  // relative to the manifest's directory
};

void write_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path);
// FormatError offsets are 1-based line numbers.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

// Writes <dir>/manifest.tsv and <dir>/utt/<id>.kwsu.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
// Loads every manifest row and checks it against its file.
Corpus load_corpus(const std::filesystem::path& manifest_path);

class CorpusIndex {
 public:
  explicit CorpusIndex(const Corpus& corpus);
  const Utterance& at(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

 private:
  const Corpus* corpus_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr double kDefaultTeacherThreshold = 0.5;

/// Replaces every frame target with 1{teacher score >= threshold} and
/// recomputes polarity. The input corpus is left untouched.
Corpus relabel_with_teacher(const Corpus& corpus, const ParamVector& teacher_params,
                            const ModelConfig& teacher_config,
                            double threshold = kDefaultTeacherThreshold);

}  // namespace kws
