#include "stepconf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "stepconf/error.hpp"
#include "stepconf/rewards.hpp"

namespace stepconf {

namespace {

using nlohmann::json;

void require_unit_interval(double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw ValidationError("confidence must be in [0, 1], got " + std::to_string(confidence));
  }
}

}  // namespace

double ece(const std::vector<ConfidencePair>& pairs, int bins) {
  if (pairs.empty()) throw ValidationError("ece: empty input");
  if (bins < 1) throw ValidationError("ece: bin count must be >= 1");

  std::vector<int> counts(bins, 0);
  std::vector<double> conf_sums(bins, 0.0);
  std::vector<double> acc_sums(bins, 0.0);
  for (const ConfidencePair& pair : pairs) {
    require_unit_interval(pair.confidence);
    int bin = static_cast<int>(pair.confidence * bins);
    bin = std::min(bin, bins - 1);  // confidence 1.0 joins the last bin
    ++counts[bin];
    conf_sums[bin] += pair.confidence;
    acc_sums[bin] += pair.correct;
  }

  const double n = static_cast<double>(pairs.size());
  double error = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (counts[b] == 0) continue;
    const double avg_conf = conf_sums[b] / counts[b];
    const double avg_acc = acc_sums[b] / counts[b];
    error += (counts[b] / n) * std::abs(avg_acc - avg_conf);
  }
  return error;
}

double mece(const std::vector<std::vector<ConfidencePair>>& responses) {
  if (responses.empty()) throw ValidationError("mece: empty input");
  double total = 0.0;
  for (const auto& response : responses) {
    if (response.empty()) throw ValidationError("mece: a response has no steps");
    double gap_sum = 0.0;
    for (const ConfidencePair& pair : response) {
      require_unit_interval(pair.confidence);
      gap_sum += std::abs(static_cast<double>(pair.correct) - pair.confidence);
    }
    total += gap_sum / static_cast<double>(response.size());
  }
  return total / static_cast<double>(responses.size());
}

double auroc(const std::vector<ConfidencePair>& pairs) {
  std::size_t positives = 0;
  for (const ConfidencePair& pair : pairs) {
    require_unit_interval(pair.confidence);
    positives += pair.correct ? 1 : 0;
  }
  const std::size_t negatives = pairs.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ValidationError("auroc: needs at least one correct and one incorrect item");
  }

  // Average ranks, ties sharing the mean rank of their block.
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pairs[a].confidence < pairs[b].confidence;
  });

  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && pairs[order[j]].confidence == pairs[order[i]].confidence) ++j;
    const double mean_rank = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
    for (std::size_t k = i; k < j; ++k) {
      if (pairs[order[k]].correct) positive_rank_sum += mean_rank;
    }
    i = j;
  }

  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

F1Scores chain_f1(const AlignmentResult& alignment) {
  if (alignment.prediction_count < 1 || alignment.reference_count < 1) {
    throw ValidationError("chain_f1: prediction and reference counts must both be >= 1");
  }
  F1Scores scores;
  scores.precision = static_cast<double>(alignment.matched_count) /
                     static_cast<double>(alignment.prediction_count);
  scores.recall = static_cast<double>(alignment.covered_count) /
                  static_cast<double>(alignment.reference_count);
  const double denom = scores.precision + scores.recall;
  scores.f1 = denom == 0.0 ? 0.0 : 2.0 * scores.precision * scores.recall / denom;
  return scores;
}

F1Scores chain_f1_micro(const std::vector<AlignmentResult>& alignments) {
  if (alignments.empty()) throw ValidationError("chain_f1_micro: empty input");
  AlignmentResult pooled;
  for (const AlignmentResult& alignment : alignments) {
    pooled.prediction_count += alignment.prediction_count;
    pooled.reference_count += alignment.reference_count;
    pooled.matched_count += alignment.matched_count;
    pooled.covered_count += alignment.covered_count;
  }
  return chain_f1(pooled);
}

void to_json(json& j, const EvalReport& v) {
  j = json{{"ece", v.ece},
           {"mece", v.mece},
           {"auroc", v.auroc},
           {"chain_precision", v.chain_precision},
           {"chain_recall", v.chain_recall},
           {"chain_f1", v.chain_f1},
           {"n_responses", v.n_responses},
           {"n_steps", v.n_steps},
           {"bin_count", v.bin_count}};
}

void from_json(const json& j, EvalReport& v) {
  j.at("ece").get_to(v.ece);
  j.at("mece").get_to(v.mece);
  j.at("auroc").get_to(v.auroc);
  j.at("chain_precision").get_to(v.chain_precision);
  j.at("chain_recall").get_to(v.chain_recall);
  j.at("chain_f1").get_to(v.chain_f1);
  j.at("n_responses").get_to(v.n_responses);
  j.at("n_steps").get_to(v.n_steps);
  j.at("bin_count").get_to(v.bin_count);
}

EvalReport evaluate(const std::vector<AnnotatedResponse>& responses,
                    const std::vector<ReferenceChain>& chains, const StatementPools& pools,
                    const SentenceScorer& scorer, double threshold, int bins) {
  if (responses.empty()) throw ValidationError("evaluate: no responses");

  std::map<std::string, const ReferenceChain*> by_id;
  for (const ReferenceChain& chain : chains) by_id[chain.id] = &chain;

  std::vector<ConfidencePair> pooled;
  std::vector<std::vector<ConfidencePair>> per_response;
  std::vector<AlignmentResult> alignments;

  for (const AnnotatedResponse& response : responses) {
    auto it = by_id.find(response.trace_id);
    if (it == by_id.end()) {
      throw ValidationError("no reference chain for response \"" + response.trace_id + "\"");
    }
    if (response.steps.empty()) {
      throw ValidationError("annotated response \"" + response.trace_id + "\" has no steps");
    }

    std::vector<std::string> sentences;
    sentences.reserve(response.steps.size());
    for (const AnnotatedStep& step : response.steps) sentences.push_back(step.sentence_text);
    const AlignmentResult alignment = align(sentences, *it->second, scorer, threshold);
    alignments.push_back(alignment);

    std::vector<ConfidencePair> step_pairs;
    step_pairs.reserve(response.steps.size());
    for (std::size_t t = 0; t < response.steps.size(); ++t) {
      ConfidencePair pair;
      pair.confidence = step_expressed_value(response.steps[t], pools, scorer).value;
      pair.correct = alignment.matched[t] ? 1 : 0;
      step_pairs.push_back(pair);
      pooled.push_back(pair);
    }
    per_response.push_back(std::move(step_pairs));
  }

  EvalReport report;
  report.ece = ece(pooled, bins);
  report.mece = mece(per_response);
  report.auroc = auroc(pooled);
  const F1Scores f1 = chain_f1_micro(alignments);
  report.chain_precision = f1.precision;
  report.chain_recall = f1.recall;
  report.chain_f1 = f1.f1;
  report.n_responses = static_cast<int>(responses.size());
  report.n_steps = static_cast<int>(pooled.size());
  report.bin_count = bins;
  return report;
}

}  // namespace stepconf
