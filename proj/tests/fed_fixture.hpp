#pragma once

#include "kws/orchestrator.hpp"
#include "support.hpp"

namespace kws::test {

// A few seconds' worth of federated problem: small model, short utterances.
struct SmallFederation {
  ModelConfig model;
  Corpus train, eval;
  std::vector<ClientCache> train_clients, eval_clients;
  RunConfig run;

  explicit SmallFederation(int train_speakers = 8, int per_speaker = 12) {
    model.input_bins = 16;
    model.encoder = {{8, 4, 4}};
    model.decoder = {{6, 4, 0}};
    SyntheticConfig tc = small_corpus_config(train_speakers, per_speaker, 40);
    tc.keyword_len_frames = 15;
    train = generate_synthetic_dataset(tc);
    SyntheticConfig ec = tc;
    ec.n_speakers = 3;
    ec.utterances_per_speaker = 10;
    ec.speaker_offset = 100;
    ec.seed = 2;
    eval = generate_synthetic_dataset(ec);
    train_clients = partition_non_iid(describe(train), PartitionConfig{});
    PartitionConfig iid;
    iid.mode = PartitionMode::kIid;
    iid.iid_cluster_size = 10;
    eval_clients = partition_iid(describe(eval), iid);
    run.clients_per_round = 4;
    run.total_rounds = 6;
    run.eval_every = 2;
    run.client.epochs = 2;
    run.server = ServerOptimizerConfig::defaults(ServerVariant::kYogi);
    run.server.eta_s = 0.01;
  }

  FederatedData data() const { return {&train, &train_clients, &eval, &eval_clients}; }
};

}  // namespace kws::test
