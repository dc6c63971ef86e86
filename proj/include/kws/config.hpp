#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kws/dataset.hpp"
#include "kws/errors.hpp"
#include "kws/orchestrator.hpp"
#include "kws/partition.hpp"

namespace kws {

// Invalid config text or value. Maps to exit code 2.
class ConfigError : public UsageError {
 public:
  ConfigError(std::string key, const std::string& what)
      : UsageError(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

enum class LabelingMode { kSupervised, kTeacher };

struct LabelingConfig {
  LabelingMode mode = LabelingMode::kSupervised;
  std::string teacher_checkpoint;  // required for kTeacher
  double threshold = kDefaultTeacherThreshold;
};

// Everything a config file can set. Defaults are the documented desk
// defaults.
struct ExperimentConfig {
  SyntheticConfig train_data;
  SyntheticConfig eval_data;
  ModelConfig model = ModelConfig::desk_default();
  PartitionConfig partition;
  RunConfig run;
  LabelingConfig labeling;
  CentralConfig central;
  double target_fa = kDefaultTargetFa;
};

struct ConfigKeyInfo {
  std::string key;
  std::string default_value;
  std::string help;
};

// Every accepted key with its default and a one-line description.
const std::vector<ConfigKeyInfo>& config_keys();

/// Parses "key = value" lines. '#' starts a comment. Keys not listed in
/// config_keys() are rejected; unset keys keep their defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Reads a file's bytes verbatim (used to echo configs into run directories).
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Default config rendered as a config file.
std::string default_config_text();

}  // namespace kws
