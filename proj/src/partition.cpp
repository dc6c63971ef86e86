#include "kws/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <unordered_map>
#include <unordered_set>

#include "kws/errors.hpp"

namespace kws {

const char* partition_mode_name(PartitionMode m) { return m == PartitionMode::kIid ? "iid" : "non_iid"; }

PartitionMode parse_partition_mode(const std::string& s) {
  if (s == "iid") return PartitionMode::kIid;
  if (s == "non_iid") return PartitionMode::kNonIid;
  throw UsageError("unknown partition mode '" + s + "' (expected iid or non_iid)");
}

void PartitionConfig::validate() const {
  if (iid_cluster_size < 1) throw UsageError("iid_cluster_size must be >= 1");
  if (!(target_median_n >= 1.0)) throw UsageError("target_median_n must be >= 1");
}

std::vector<UtteranceInfo> describe(const Corpus& corpus) {
  std::vector<UtteranceInfo> out;
  out.reserve(corpus.size());
  for (const auto& u : corpus) out.push_back({u.id, u.speaker, u.polarity});
  return out;
}

std::vector<UtteranceInfo> describe(const std::vector<UtterancePlan>& plan) {
  std::vector<UtteranceInfo> out;
  out.reserve(plan.size());
  for (const auto& p : plan) out.push_back({p.id, p.speaker, p.polarity});
  return out;
}

std::vector<UtteranceInfo> describe(const std::vector<ManifestRow>& rows) {
  std::vector<UtteranceInfo> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r.utterance_id, r.speaker_id, r.polarity});
  return out;
}

int sample_client_size(double median, Rng& rng) {
  // 1 - canonical lies in (0, 1], so the log is finite.
  const double u = 1.0 - std::generate_canonical<double, 64>(rng);
  const double x = -median / std::numbers::ln2 * std::log(u);
  return std::max(1, static_cast<int>(std::lround(x)));
}

namespace {

std::string client_name(const std::string& stem, std::size_t j) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", j);
  return stem + "_" + buf;
}

}  // namespace

std::vector<ClientCache> partition_non_iid(const std::vector<UtteranceInfo>& data,
                                           const PartitionConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw UsageError("partition_non_iid: empty dataset");

  // (speaker, polarity) -> member ids. Sorted before shuffling so the
  // result does not depend on input order.
  std::map<std::pair<std::string, int>, std::vector<std::string>> clusters;
  for (const auto& u : data) clusters[{u.speaker, static_cast<int>(u.polarity)}].push_back(u.id);

  std::vector<ClientCache> caches;
  for (auto& [key, ids] :
       clusters) {
    const std::string stem = key.first + "_" + polarity_name(static_cast<Polarity>(key.second));
    std::sort(ids.begin(), ids.end());
    Rng rng = derive_stream(cfg.seed, "partition-non-iid", 0, stem);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::size_t pos = 0;
    std::size_t j = 0;
    while (pos < ids.size()) {
      const auto want = static_cast<std::size_t>(sample_client_size(cfg.target_median_n, rng));
      const std::size_t take = std::min(want, ids.size() - pos);
      ClientCache c;
      c.client_id = client_name(stem, j++);
      c.utterance_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(pos),
                             ids.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
      caches.push_back(std::move(c));
    }
  }
  std::sort(caches.begin(), caches.end(),
            [](const ClientCache& a, const ClientCache& b) { return a.client_id < b.client_id; });
  return caches;
}

std::vector<ClientCache> partition_iid(const std::vector<UtteranceInfo>& data,
                                       const PartitionConfig& cfg) {
  cfg.validate();
  const auto size = static_cast<std::size_t>(cfg.iid_cluster_size);
  if (data.size() < size) {
    throw UsageError("partition_iid: dataset has " + std::to_string(data.size()) +
                     " utterances, fewer than one cluster of " + std::to_string(size));
  }
  std::vector<std::string> ids;
  ids.reserve(data.size());
  for (const auto& u : data) ids.push_back(u.id);
  std::sort(ids.begin(), ids.end());
  Rng rng = derive_stream(cfg.seed, "partition-iid");
  std::shuffle(ids.begin(), ids.end(), rng);

  std::vector<ClientCache> caches;
  for (std::size_t k = 0; (k + 1) * size <= ids.size(); ++k) {
    ClientCache c;
    c.client_id = client_name("iid", k);
    c.utterance_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(k * size),
                           ids.begin() + static_cast<std::ptrdiff_t>((k + 1) * size));
    caches.push_back(std::move(c));
  }
  return caches;
}

std::vector<ClientCache> partition(const std::vector<UtteranceInfo>& data, const PartitionConfig& cfg) {
  return cfg.mode == PartitionMode::kIid ? partition_iid(data, cfg) : partition_non_iid(data, cfg);
}

PartitionReport check_partition(const std::vector<ClientCache>& caches,
                                const std::vector<UtteranceInfo>& data) {
  std::unordered_map<std::string, const UtteranceInfo*> by_id;
  by_id.reserve(data.size());
  for (const auto& u : data) by_id.emplace(u.id, &u);

  PartitionReport r;
  r.clients = caches.size();
  std::unordered_set<std::string> seen;
  std::vector<std::size_t> sizes;
  for (const auto& c : caches) {
    sizes.push_back(c.size());
    const UtteranceInfo* first = nullptr;
    for (const auto& id : c.utterance_ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("partition references unknown utterance " + id);
      if (!seen.insert(id).second) r.disjoint = false;
      const UtteranceInfo* u = it->second;
      if (!first) {
        first = u;
        continue;
      }
      if (u->speaker != first->speaker) r.speaker_pure = false;
      if (u->polarity != first->polarity) r.label_pure = false;
    }
  }
  r.assigned = seen.size();
  r.complete = seen.size() == data.size();
  if (!sizes.empty()) {
    std::sort(sizes.begin(), sizes.end());
    const std::size_t n = sizes.size();
    r.median_size = n % 2 ? static_cast<double>(sizes[n / 2])
                          : 0.5 * static_cast<double>(sizes[n / 2 - 1] + sizes[n / 2]);
    r.max_size = sizes.back();
  }
  return r;
}

void write_partition(const std::vector<ClientCache>& caches, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& c : caches) {
    for (const auto& id : c.utterance_ids) out << c.client_id << '\t' << id << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ClientCache> read_partition(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open partition file " + path.string());
  std::vector<ClientCache> caches;
  std::unordered_set<std::string> closed;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
        line.find('\t', tab + 1) != std::string::npos) {
      throw FormatError("partition row", line_no, "expected client_id<TAB>utterance_id");
    }
    std::string client = line.substr(0, tab);
    std::string utt = line.substr(tab + 1);
    if (caches.empty() || caches.back().client_id != client) {
      if (!caches.empty()) closed.insert(caches.back().client_id);
      if (closed.count(client)) throw FormatError("partition row", line_no, "rows for client " + client + " are not grouped");
      caches.push_back({std::move(client), {}});
    }
    caches.back().utterance_ids.push_back(std::move(utt));
  }
  return caches;
}

}  // namespace kws
