#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kws/dataset.hpp"
#include "kws/rng.hpp"

namespace kws {

struct ClientCache {
  std::string client_id;
  std::vector<std::string> utterance_ids;

  std::size_t size() const { return utterance_ids.size(); }
  friend bool operator==(const ClientCache&, const ClientCache&) = default;
};

enum class PartitionMode { kIid, kNonIid };

const char* partition_mode_name(PartitionMode m);  // "iid" / "non_iid"
PartitionMode parse_partition_mode(const std::string& s);

struct PartitionConfig {
  PartitionMode mode = PartitionMode::kNonIid;
  int iid_cluster_size = 50;
  double target_median_n = 6.5;
  std::uint64_t seed = 1;

  void validate() const;
};

// The fields partitioning looks at.
struct UtteranceInfo {
  std::string id;
  std::string speaker;
  Polarity polarity = Polarity::kNegative;
};

std::vector<UtteranceInfo> describe(const Corpus& corpus);
std::vector<UtteranceInfo> describe(const std::vector<UtterancePlan>& plan);
std::vector<UtteranceInfo> describe(const std::vector<ManifestRow>& rows);

/// One draw of the client-size law: max(1, round(-median / ln 2 * ln U)),
/// U ~ Uniform(0, 1].
int sample_client_size(double median, Rng& rng);

/// Speaker clusters, split by label, then cut into clients with
/// exponentially distributed sizes. Every utterance lands in exactly one
/// cache; caches are returned sorted by client id.
std::vector<ClientCache> partition_non_iid(const std::vector<UtteranceInfo>& data,
                                           const PartitionConfig& cfg);

/// Global shuffle, then fixed-size chunks. A trailing partial chunk is
/// dropped.
std::vector<ClientCache> partition_iid(const std::vector<UtteranceInfo>& data,
                                       const PartitionConfig& cfg);

std::vector<ClientCache> partition(const std::vector<UtteranceInfo>& data, const PartitionConfig& cfg);

struct PartitionReport {
  std::size_t clients = 0;
  std::size_t assigned = 0;
  double median_size = 0.0;
  std::size_t max_size = 0;
  bool disjoint = true;
  bool complete = true;  // every utterance assigned
  bool speaker_pure = true;
  bool label_pure = true;
};

PartitionReport check_partition(const std::vector<ClientCache>& caches,
                                const std::vector<UtteranceInfo>& data);

// Rows "client_id<TAB>utterance_id", grouped by client.
void write_partition(const std::vector<ClientCache>& caches, const std::filesystem::path& path);
std::vector<ClientCache> read_partition(const std::filesystem::path& path);

}  // namespace kws
