#include <doctest.h>

#include "kws/experiment.hpp"
#include "support.hpp"

using namespace kws;

namespace {

ExperimentConfig tiny_experiment() {
  ExperimentConfig c = parse_config(
      "data.n_speakers = 6\ndata.utterances_per_speaker = 10\ndata.utterance_len_frames = 40\n"
      "data.keyword_len_frames = 15\ndata.eval_speakers = 2\ndata.eval_utterances_per_speaker = 10\n"
      "model.encoder = 8:4:4\nmodel.decoder = 6:4\nrun.clients_per_round = 3\nrun.total_rounds = 2\n"
      "run.eval_every = 1\nclient.epochs = 1\nserver.eta_s = 0.01\npartition.iid_cluster_size = 10\n"
      "central.steps = 40\n");
  return c;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("prepared data is orthogonal and fully partitioned") {
  const ExperimentConfig cfg = tiny_experiment();
  const PreparedData d = prepare_synthetic(cfg);
  CHECK(d.train.size() == 60);
  CHECK(d.eval.size() == 20);
  CHECK_NOTHROW(check_orthogonal(d.train, d.eval));
  CHECK(check_partition(d.train_clients, describe(d.train)).complete);
  CHECK(d.eval_clients.size() == 2);
  const CorpusSummary s = summarize(d.train);
  CHECK(s.speakers == 6);
  CHECK(s.positive_fraction() > 0.2);
}

TEST_CASE("small eval sets fall back to one client") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.partition.iid_cluster_size = 50;
  const PreparedData d = prepare_synthetic(cfg);
  REQUIRE(d.eval_clients.size() == 1);
  CHECK(d.eval_clients[0].size() == 20);
}

TEST_CASE("data directory round trip") {
  test::TempDir dir("layout");
  const ExperimentConfig cfg = tiny_experiment();
  const DataLayout layout{dir.path()};
  write_synthetic_data(cfg, layout);
  CHECK_THROWS_AS(load_data(layout, cfg), UsageError);  // no partition yet
  const PreparedData mem = prepare_synthetic(cfg);
  write_partition(mem.train_clients, layout.train_partition());
  const PreparedData disk = load_data(layout, cfg);
  CHECK(disk.train == mem.train);
  CHECK(disk.eval == mem.eval);
  CHECK(disk.train_clients == mem.train_clients);

  std::vector<ClientCache> bogus = mem.train_clients;
  bogus[0].utterance_ids.push_back("ghost");
  write_partition(bogus, layout.train_partition());
  CHECK_THROWS_AS(load_data(layout, cfg), DataError);
}

TEST_CASE("ablation variants toggle one factor each") {
  const RunConfig base = tiny_experiment().run;
  CHECK_FALSE(ablation_variant(base, "no_specaugment").client.augment.has_value());
  CHECK(ablation_variant(base, "one_epoch").client.epochs == 1);
  CHECK(ablation_variant(base, "constant_lr").lr.kind == ClientLrSchedule::Kind::kConstant);
  CHECK_FALSE(ablation_variant(base, "no_clipping").client.clip_norm.has_value());
  CHECK(ablation_variant(base, "sgd_server").server.variant == ServerVariant::kSgd);
  CHECK(config_fingerprint(ablation_variant(base, "base"), ModelConfig::desk_default()) ==
        config_fingerprint(base, ModelConfig::desk_default()));
  CHECK_THROWS_AS(ablation_variant(base, "central"), UsageError);
  CHECK(ablation_run_names().size() == 8);
}

TEST_CASE("ablation produces one row per run") {
  const ExperimentConfig cfg = tiny_experiment();
  const PreparedData d = prepare_synthetic(cfg);
  std::vector<std::string> seen;
  const auto rows = run_ablation(cfg, d, std::nullopt, [&](const std::string& n) { seen.push_back(n); });
  REQUIRE(rows.size() == 8);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].name == ablation_run_names()[i]);
    CHECK(rows[i].eval_loss > 0.0);
    CHECK(rows[i].op.fa_rate <= cfg.target_fa);
  }
  // Base equals a direct run.
  const TrainingResult direct = run_training(cfg.model, cfg.run, d.view());
  const RunSummary s = summarize_model("base", direct.final_params, cfg.model, d, cfg.target_fa);
  CHECK(s.eval_loss == rows[0].eval_loss);
  CHECK(format_summary_row(s) == format_summary_row(rows[0]));
}

}
