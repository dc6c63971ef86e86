#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "kws/config.hpp"
#include "kws/dataset.hpp"
#include "kws/evaluation.hpp"
#include "kws/orchestrator.hpp"
#include "support.hpp"

#ifndef KWSFL_BIN
#error "KWSFL_BIN must point at the kwsfl executable"
#endif

using namespace kws;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs kwsfl with `args`, capturing stdout and stderr.
Result kwsfl(const std::string& args) {
  const std::string cmd = std::string(KWSFL_BIN) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

const char* kSmallConfig =
    "# small\n"
    "data.n_speakers = 6\n"
    "data.utterances_per_speaker = 10\n"
    "data.utterance_len_frames = 40\n"
    "data.keyword_len_frames = 15\n"
    "data.eval_speakers = 2\n"
    "data.eval_utterances_per_speaker = 10\n"
    "model.encoder = 8:4:4\n"
    "model.decoder = 6:4\n"
    "run.clients_per_round = 3\n"
    "run.total_rounds = 4\n"
    "run.eval_every = 2\n"
    "client.epochs = 1\n"
    "server.eta_s = 0.01\n"
    "partition.iid_cluster_size = 10\n"
    "central.steps = 50\n";

struct Workspace {
  test::TempDir dir{"cli"};
  std::string cfg;
  Workspace() {
    cfg = (dir / "small.cfg").string();
    std::ofstream(cfg) << kSmallConfig;
  }
  std::string path(const std::string& rel) const { return (dir / rel).string(); }
  std::string base() const { return "--config " + cfg; }

  void make_data() {
    REQUIRE(kwsfl(base() + " --out " + path("data") + " gen-data").code == 0);
    REQUIRE(kwsfl(base() + " partition " + path("data/train/manifest.tsv")).code == 0);
    REQUIRE(kwsfl(base() + " partition --mode iid " + path("data/eval/manifest.tsv")).code == 0);
  }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen-data with defaults prints the default counts") {
  test::TempDir dir("cli_defaults");
  const Result r = kwsfl("--out " + (dir / "d").string() + " gen-data");
  CHECK(r.code == 0);
  CHECK(r.out.find("train: 4320 utterances, 40 speakers") != std::string::npos);
  CHECK(r.out.find("eval: 500 utterances, 10 speakers") != std::string::npos);
}

TEST_CASE("gen-data is byte-reproducible and echoes the config") {
  Workspace w;
  REQUIRE(kwsfl(w.base() + " --out " + w.path("a") + " gen-data").code == 0);
  REQUIRE(kwsfl(w.base() + " --out " + w.path("b") + " gen-data").code == 0);
  for (const char* f : {"train/manifest.tsv", "eval/manifest.tsv", "train/utt/s0_u0003.kwsu", "eval/utt/s6_u0001.kwsu"}) {
    CHECK(bytes_of(w.dir / "a" / f) == bytes_of(w.dir / "b" / f));
    CHECK_FALSE(bytes_of(w.dir / "a" / f).empty());
  }
  CHECK(bytes_of(w.dir / "a/config.txt") == kSmallConfig);
}

TEST_CASE("invalid config exits 2 naming the key") {
  Workspace w;
  std::ofstream(w.path("bad.cfg")) << "data.positive_fraction = 1.5\n";
  const Result r = kwsfl("--config " + w.path("bad.cfg") + " --out " + w.path("x") + " gen-data");
  CHECK(r.code == 2);
  CHECK(r.out.find("data.positive_fraction") != std::string::npos);
  std::ofstream(w.path("unknown.cfg")) << "data.colour = blue\n";
  CHECK(kwsfl("--config " + w.path("unknown.cfg") + " --out " + w.path("x") + " gen-data").code == 2);
  CHECK(kwsfl("frobnicate").code == 2);
}

TEST_CASE("unwritable output exits 2") {
  Workspace w;
  std::ofstream(w.path("file")) << "x";
  CHECK(kwsfl(w.base() + " --out " + w.path("file/sub") + " gen-data").code == 2);
}

TEST_CASE("partition reports sizes and purity") {
  Workspace w;
  REQUIRE(kwsfl(w.base() + " --out " + w.path("data") + " gen-data").code == 0);
  Result r = kwsfl(w.base() + " partition " + w.path("data/train/manifest.tsv"));
  CHECK(r.code == 0);
  CHECK(r.out.find("label-pure: true, speaker-pure: true") != std::string::npos);
  CHECK(r.out.find("median n_k:") != std::string::npos);
  r = kwsfl(w.base() + " --out " + w.path("p.tsv") + " partition --mode iid " + w.path("data/train/manifest.tsv"));
  CHECK(r.code == 0);
  CHECK(r.out.find("clients: 6") != std::string::npos);
  CHECK(read_partition(w.path("p.tsv")).size() == 6);
}

TEST_CASE("manifest parse failure exits 2 with the line number") {
  Workspace w;
  std::ofstream(w.path("m.tsv")) << "u1\ts0\tpos\tutt/u1.kwsu\nbroken line\n";
  const Result r = kwsfl("partition " + w.path("m.tsv"));
  CHECK(r.code == 2);
  CHECK(r.out.find("line 2") != std::string::npos);
}

TEST_CASE("train, resume and eval") {
  Workspace w;
  w.make_data();
  Result r = kwsfl(w.base() + " --out " + w.path("run") + " train --data " + w.path("data"));
  REQUIRE(r.code == 0);
  CHECK(bytes_of(w.dir / "run/config.txt") == kSmallConfig);
  const auto rows = read_metrics_csv(w.path("run/metrics.csv"));
  CHECK(rows.size() == 3);

  // Resume from round 2 into a copy and compare with the full run.
  std::filesystem::create_directories(w.dir / "resumed/checkpoints");
  std::ofstream(w.path("resumed/metrics.csv")) << bytes_of(w.dir / "run/metrics.csv");
  r = kwsfl(w.base() + " --out " + w.path("resumed") + " train --data " + w.path("data") + " --resume " +
            w.path("run/checkpoints/ckpt_000002.kwsc"));
  REQUIRE(r.code == 0);
  CHECK(bytes_of(w.dir / "resumed/metrics.csv") == bytes_of(w.dir / "run/metrics.csv"));
  CHECK(bytes_of(w.dir / "resumed/checkpoints/ckpt_000004.kwsc") ==
        bytes_of(w.dir / "run/checkpoints/ckpt_000004.kwsc"));

  r = kwsfl(w.base() + " --out " + w.path("scores.tsv") + " eval --checkpoint " +
            w.path("run/checkpoints/ckpt_000004.kwsc") + " --manifest " + w.path("data/eval/manifest.tsv"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("target_fa: 0.002") != std::string::npos);
  CHECK(r.out.find("theta:") != std::string::npos);
  // Dump matches in-process scoring.
  const ExperimentConfig cfg = load_config_file(w.cfg);
  const Checkpoint ck = read_checkpoint_file(w.path("run/checkpoints/ckpt_000004.kwsc"));
  const auto expect = score_corpus(ck.params, cfg.model, load_corpus(w.path("data/eval/manifest.tsv")));
  const auto dumped = read_score_dump(w.path("scores.tsv"));
  REQUIRE(dumped.size() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(dumped[i].score == expect[i].score);
}

TEST_CASE("train rejects overlapping train and eval data with exit 3") {
  Workspace w;
  w.make_data();
  // Point the eval manifest at the train corpus.
  std::filesystem::remove_all(w.dir / "data/eval");
  std::filesystem::copy(w.dir / "data/train", w.dir / "data/eval", std::filesystem::copy_options::recursive);
  std::filesystem::remove(w.dir / "data/eval/partition.tsv");
  const Result r = kwsfl(w.base() + " --out " + w.path("run") + " train --data " + w.path("data"));
  CHECK(r.code == 3);
}

TEST_CASE("teacher labeling is wired through train") {
  Workspace w;
  w.make_data();
  REQUIRE(kwsfl(w.base() + " --out " + w.path("teacher") + " train --data " + w.path("data")).code == 0);
  std::ofstream(w.path("student.cfg")) << kSmallConfig << "labeling.mode = teacher\nlabeling.teacher_checkpoint = "
                                       << w.path("teacher/checkpoints/ckpt_000004.kwsc") << "\n";
  const Result r = kwsfl("--config " + w.path("student.cfg") + " --out " + w.path("student") + " train --data " +
                         w.path("data"));
  CHECK(r.code == 0);
  CHECK(r.out.find("relabeled 60 train utterances") != std::string::npos);
  CHECK(bytes_of(w.dir / "student/metrics.csv") != bytes_of(w.dir / "teacher/metrics.csv"));
}

TEST_CASE("corrupt checkpoint exits 4 naming the field") {
  Workspace w;
  w.make_data();
  REQUIRE(kwsfl(w.base() + " --out " + w.path("run") + " train --data " + w.path("data")).code == 0);
  const std::string good = bytes_of(w.dir / "run/checkpoints/ckpt_000004.kwsc");
  std::ofstream(w.path("trunc.kwsc"), std::ios::binary) << good.substr(0, 30);
  Result r = kwsfl(w.base() + " eval --checkpoint " + w.path("trunc.kwsc") + " --manifest " +
                   w.path("data/eval/manifest.tsv"));
  CHECK(r.code == 4);
  CHECK(r.out.find("'params'") != std::string::npos);
  std::string bad = good;
  bad[0] = 'Q';
  std::ofstream(w.path("magic.kwsc"), std::ios::binary) << bad;
  r = kwsfl(w.base() + " eval --checkpoint " + w.path("magic.kwsc") + " --manifest " + w.path("data/eval/manifest.tsv"));
  CHECK(r.code == 4);
  CHECK(r.out.find("'magic'") != std::string::npos);
}

TEST_CASE("all-zero checkpoint evaluates to the sentinel operating point") {
  Workspace w;
  w.make_data();
  const ExperimentConfig cfg = load_config_file(w.cfg);
  Checkpoint zero;
  zero.params = ParamVector(param_count(cfg.model), 0.0);
  write_checkpoint_file(zero, w.path("zero.kwsc"));
  const Result r = kwsfl(w.base() + " --out " + w.path("z.tsv") + " eval --checkpoint " + w.path("zero.kwsc") +
                         " --manifest " + w.path("data/eval/manifest.tsv"));
  CHECK(r.code == 0);
  CHECK(r.out.find("FA: 0\n") != std::string::npos);
  CHECK(r.out.find("FR: 1\n") != std::string::npos);
}

TEST_CASE("ablate emits base, six factors and central") {
  Workspace w;
  w.make_data();
  const Result r = kwsfl(w.base() + " --out " + w.path("abl") + " ablate --data " + w.path("data"));
  REQUIRE(r.code == 0);
  std::istringstream csv(bytes_of(w.dir / "abl/ablation.csv"));
  std::string line;
  std::vector<std::string> names;
  std::getline(csv, line);
  CHECK(line == "run,eval_loss,frame_accuracy,threshold,fa,fr");
  std::string base_row;
  while (std::getline(csv, line)) {
    names.push_back(line.substr(0, line.find(',')));
    if (names.back() == "base") base_row = line;
  }
  CHECK(names == std::vector<std::string>{"base", "no_specaugment", "one_epoch", "constant_lr", "no_clipping",
                                          "sgd_server", "teacher_labels", "central"});
  // The base run is the same run a standalone train produces.
  REQUIRE(kwsfl(w.base() + " --out " + w.path("run") + " train --data " + w.path("data")).code == 0);
  CHECK(bytes_of(w.dir / "abl/base/metrics.csv") == bytes_of(w.dir / "run/metrics.csv"));
}

}
