#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "kws/errors.hpp"
#include "kws/partition.hpp"
#include "support.hpp"

using namespace kws;

namespace {

std::vector<UtteranceInfo> synthetic_info(int speakers, int per_speaker, std::uint64_t seed = 1) {
  SyntheticConfig c;
  c.n_speakers = speakers;
  c.utterances_per_speaker = per_speaker;
  c.seed = seed;
  return describe(plan_synthetic_dataset(c));
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_SUITE("partition") {

TEST_CASE("defaults") {
  const PartitionConfig c;
  CHECK(c.target_median_n == 6.5);
  CHECK(c.iid_cluster_size == 50);
  CHECK(c.mode == PartitionMode::kNonIid);
}

TEST_CASE("validation") {
  PartitionConfig c;
  c.iid_cluster_size = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.target_median_n = 0.5;
  CHECK_THROWS_AS(c.validate(), UsageError);
  CHECK_THROWS_AS(parse_partition_mode("random"), UsageError);
  CHECK(parse_partition_mode("iid") == PartitionMode::kIid);
}

TEST_CASE("label purity forces one cache per polarity") {
  const std::vector<UtteranceInfo> data{{"a", "s0", Polarity::kPositive}, {"b", "s0", Polarity::kNegative}};
  const auto caches = partition_non_iid(data, PartitionConfig{});
  REQUIRE(caches.size() == 2);
  CHECK(caches[0].size() == 1);
  CHECK(caches[1].size() == 1);
}

TEST_CASE("non-IID caches are pure, disjoint and complete") {
  const auto data = synthetic_info(30, 40);
  for (std::uint64_t seed : {1, 2, 3}) {
    PartitionConfig c;
    c.seed = seed;
    const auto caches = partition_non_iid(data, c);
    const PartitionReport r = check_partition(caches, data);
    CHECK(r.disjoint);
    CHECK(r.complete);
    CHECK(r.speaker_pure);
    CHECK(r.label_pure);
    CHECK(r.assigned == data.size());
    std::set<std::string> ids;
    for (const auto& cache : caches) {
      CHECK(cache.size() >= 1);
      CHECK(ids.insert(cache.client_id).second);
    }
  }
}

TEST_CASE("client sizes follow the exponential size law") {
  // Direct sampling of the law: exponential with the target median, rounded,
  // at least one. The two empirical CDFs must agree.
  constexpr int n = 200000;
  Rng rng(77);
  std::exponential_distribution<double> expo(std::numbers::ln2 / 6.5);
  std::vector<int> direct(n), sampled(n);
  for (auto& x : direct) x = std::max(1, static_cast<int>(std::lround(expo(rng))));
  Rng rng2(78);
  for (auto& x : sampled) x = sample_client_size(6.5, rng2);
  double ks = 0.0;
  for (int k = 1; k <= 80; ++k) {
    const double a = double(std::count_if(direct.begin(), direct.end(), [&](int x) { return x <= k; })) / n;
    const double b = double(std::count_if(sampled.begin(), sampled.end(), [&](int x) { return x <= k; })) / n;
    ks = std::max(ks, std::abs(a - b));
  }
  CHECK(ks < 0.01);
  std::vector<double> sizes(sampled.begin(), sampled.end());
  CHECK(median_of(sizes) >= 5.5);
  CHECK(median_of(sizes) <= 7.5);
}

TEST_CASE("100k-utterance corpus hits the median target") {
  const auto data = synthetic_info(1000, 100);
  REQUIRE(data.size() == 100000);
  const auto caches = partition_non_iid(data, PartitionConfig{});
  const PartitionReport r = check_partition(caches, data);
  CHECK(r.median_size >= 5.5);
  CHECK(r.median_size <= 7.5);
  CHECK(r.max_size > 4 * r.median_size);
  CHECK(r.speaker_pure);
  CHECK(r.label_pure);
  CHECK(r.complete);
}

TEST_CASE("IID chunk arithmetic") {
  PartitionConfig c;
  c.mode = PartitionMode::kIid;
  const auto exact = partition(synthetic_info(3, 50), c);
  REQUIRE(exact.size() == 3);
  for (const auto& cache : exact) CHECK(cache.size() == 50);
  const auto data160 = synthetic_info(4, 40);
  const auto caches = partition(data160, c);
  CHECK(caches.size() == 3);
  const PartitionReport r = check_partition(caches, data160);
  CHECK(r.assigned == 150);
  CHECK_FALSE(r.complete);
  CHECK(r.disjoint);
  CHECK_THROWS_AS(partition(synthetic_info(1, 10), c), UsageError);
}

TEST_CASE("IID caches mix speakers") {
  PartitionConfig c;
  c.mode = PartitionMode::kIid;
  const auto data = synthetic_info(20, 20);
  const PartitionReport r = check_partition(partition(data, c), data);
  CHECK_FALSE(r.speaker_pure);
}

TEST_CASE("partitioning is deterministic and input-order independent") {
  auto data = synthetic_info(10, 30);
  const auto a = partition_non_iid(data, PartitionConfig{});
  CHECK(a == partition_non_iid(data, PartitionConfig{}));
  Rng rng(1);
  std::shuffle(data.begin(), data.end(), rng);
  std::vector<std::string> flat_a, flat_b;
  for (const auto& c : a) flat_a.insert(flat_a.end(), c.utterance_ids.begin(), c.utterance_ids.end());
  const auto b = partition_non_iid(data, PartitionConfig{});
  for (const auto& c : b) flat_b.insert(flat_b.end(), c.utterance_ids.begin(), c.utterance_ids.end());
  CHECK(flat_a == flat_b);
}

TEST_CASE("partition file round trip") {
  test::TempDir dir("partition");
  const auto caches = partition_non_iid(synthetic_info(5, 20), PartitionConfig{});
  write_partition(caches, dir / "p.tsv");
  CHECK(read_partition(dir / "p.tsv") == caches);

  std::ofstream(dir / "split.tsv") << "c1\tu1\nc2\tu2\nc1\tu3\n";
  CHECK_THROWS_AS(read_partition(dir / "split.tsv"), FormatError);
  std::ofstream(dir / "bad.tsv") << "c1 u1\n";
  CHECK_THROWS_AS(read_partition(dir / "bad.tsv"), FormatError);
}

}
