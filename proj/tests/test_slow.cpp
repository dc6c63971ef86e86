// Desk-scale smoke benchmarks; minutes rather than seconds.

#include <doctest.h>

#include "kws/experiment.hpp"
#include "support.hpp"

using namespace kws;

TEST_SUITE("slow") {

TEST_CASE("central teacher reaches 95% frame accuracy and relabels held-out data") {
  SyntheticConfig tc;
  tc.n_speakers = 100;
  tc.utterances_per_speaker = 100;
  tc.utterance_len_frames = 100;
  const Corpus train = generate_synthetic_dataset(tc);
  REQUIRE(train.size() == 10000);
  SyntheticConfig ec = tc;
  ec.n_speakers = 10;
  ec.utterances_per_speaker = 50;
  ec.speaker_offset = 1000;
  ec.seed = 2;
  const Corpus held_out = generate_synthetic_dataset(ec);
  const ModelConfig model = ModelConfig::desk_default();
  CentralConfig cc;
  cc.steps = 50000;
  const ParamVector teacher = central_train(model, train, cc, 1);

  std::vector<const Utterance*> ptrs;
  for (const auto& u : held_out) ptrs.push_back(&u);
  const EvalMetrics m = eval_examples(teacher, model, ptrs);
  MESSAGE("teacher held-out frame accuracy " << m.frame_accuracy << ", loss " << m.mean_loss);
  CHECK(m.frame_accuracy >= 0.95);

  const Corpus relabeled = relabel_with_teacher(held_out, teacher, model);
  std::size_t agree = 0, total = 0;
  for (std::size_t i = 0; i < held_out.size(); ++i)
    for (std::size_t t = 0; t < held_out[i].targets.size(); ++t, ++total)
      agree += relabeled[i].targets[t] == held_out[i].targets[t];
  MESSAGE("teacher agreement " << double(agree) / total);
  CHECK(double(agree) / total >= 0.9);
}

TEST_CASE("desk-default federated run improves on its initial model") {
  ExperimentConfig cfg = parse_config("data.utterance_len_frames = 100\nrun.total_rounds = 200\nrun.eval_every = 100\n"
                                      "server.eta_s = 0.01\n");
  const PreparedData d = prepare_synthetic(cfg);
  const TrainingResult r = run_training(cfg.model, cfg.run, d.view());
  REQUIRE(r.rows.size() == 3);
  MESSAGE("round 0 loss " << r.rows[0].eval_loss << ", round 200 loss " << r.rows.back().eval_loss);
  CHECK(r.rows.back().eval_loss < r.rows[0].eval_loss);
}

}
