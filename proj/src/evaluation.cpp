#include "kws/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "kws/errors.hpp"

namespace kws {

EvalMetrics eval_examples(const ParamVector& params, const ModelConfig& config,
                          std::span<const Utterance* const> examples) {
  if (examples.empty()) throw UsageError("eval: client has no examples");
  double loss = 0.0;
  double accuracy = 0.0;
  for (const Utterance* u : examples) {
    const FrameScores scores = model_forward(params, config, u->spec);
    loss += frame_bce_loss(scores, u->targets);
    std::size_t correct = 0;
    for (std::size_t t = 0; t < scores.size(); ++t) {
      correct += (scores[t] >= 0.5) == (u->targets[t] != 0);
    }
    accuracy += static_cast<double>(correct) / static_cast<double>(scores.size());
  }
  const auto n = static_cast<double>(examples.size());
  return {loss / n, accuracy / n, examples.size()};
}

EvalMetrics combine_metrics(std::span<const EvalMetrics> parts) {
  if (parts.empty()) throw UsageError("combine_metrics: nothing to combine");
  std::size_t total = 0;
  for (const auto& p : parts) total += p.n_examples;
  if (total == 0) throw UsageError("combine_metrics: zero examples");
  EvalMetrics out;
  for (const auto& p : parts) {
    const double w = static_cast<double>(p.n_examples) / static_cast<double>(total);
    out.mean_loss += w * p.mean_loss;
    out.frame_accuracy += w * p.frame_accuracy;
  }
  out.n_examples = total;
  return out;
}

EvalMetrics eval_clients(const ParamVector& params, const ModelConfig& config,
                         const std::vector<ClientCache>& caches, const CorpusIndex& corpus) {
  if (caches.empty()) throw UsageError("eval_clients: no eval clients");
  std::vector<EvalMetrics> parts;
  parts.reserve(caches.size());
  std::vector<const Utterance*> examples;
  for (const auto& c : caches) {
    examples.clear();
    for (const auto& id : c.utterance_ids) examples.push_back(&corpus.at(id));
    parts.push_back(eval_examples(params, config, examples));
  }
  return combine_metrics(parts);
}

double utterance_score(const ParamVector& params, const ModelConfig& config, const Utterance& u) {
  const FrameScores scores = model_forward(params, config, u.spec);
  return *std::max_element(scores.begin(), scores.end());
}

OperatingPoint compute_fa_fr(std::span<const double> pos_scores, std::span<const double> neg_scores,
                             double threshold) {
  if (pos_scores.empty() || neg_scores.empty()) {
    throw UsageError("compute_fa_fr: need at least one positive and one negative score");
  }
  const auto fa = std::count_if(neg_scores.begin(), neg_scores.end(), [&](double s) { return s >= threshold; });
  const auto fr = std::count_if(pos_scores.begin(), pos_scores.end(), [&](double s) { return s < threshold; });
  return {threshold, static_cast<double>(fa) / static_cast<double>(neg_scores.size()),
          static_cast<double>(fr) / static_cast<double>(pos_scores.size())};
}

double tune_threshold(std::span<const double> neg_scores, double target_fa) {
  if (neg_scores.empty()) throw UsageError("tune_threshold: no negative scores");
  if (!(target_fa > 0.0 && target_fa < 1.0)) throw UsageError("tune_threshold: target_fa must lie in (0, 1)");
  std::vector<double> sorted(neg_scores.begin(), neg_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // Walking the distinct values upward, FA at a candidate is the share of
  // scores at or above it; the first one within budget is the answer.
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0 && sorted[i] == sorted[i - 1]) continue;
    const double fa = static_cast<double>(sorted.size() - i) / n;
    if (fa <= target_fa) return sorted[i];
  }
  return std::nextafter(sorted.back(), std::numeric_limits<double>::infinity());
}

std::vector<ScoredUtterance> score_corpus(const ParamVector& params, const ModelConfig& config,
                                          const Corpus& corpus) {
  std::vector<ScoredUtterance> out;
  out.reserve(corpus.size());
  for (const auto& u : corpus) out.push_back({u.id, u.polarity, utterance_score(params, config, u)});
  return out;
}

OperatingPoint operating_point_at(const std::vector<ScoredUtterance>& scores, double target_fa) {
  std::vector<double> pos, neg;
  for (const auto& s : scores) (s.polarity == Polarity::kPositive ? pos : neg).push_back(s.score);
  const double theta = tune_threshold(neg, target_fa);
  return compute_fa_fr(pos, neg, theta);
}

void write_score_dump(const std::vector<ScoredUtterance>& scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  char buf[32];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof(buf), "%.17g", s.score);
    out << s.utterance_id << '\t' << polarity_name(s.polarity) << '\t' << buf << '\n';
  }
}

std::vector<ScoredUtterance> read_score_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open score dump " + path.string());
  std::vector<ScoredUtterance> out;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) throw FormatError("score row", line_no, "expected 3 tab-separated fields");
    ScoredUtterance s;
    s.utterance_id = line.substr(0, a);
    const std::string pol = line.substr(a + 1, b - a - 1);
    if (pol != "pos" && pol != "neg") throw FormatError("polarity", line_no, "expected pos or neg");
    s.polarity = parse_polarity(pol);
    try {
      std::size_t used = 0;
      const std::string num = line.substr(b + 1);
      s.score = std::stod(num, &used);
      if (used != num.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError("score", line_no, "not a number");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace kws
