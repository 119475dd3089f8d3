#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "stepconf/align.hpp"
#include "stepconf/statements.hpp"
#include "stepconf/trace.hpp"

namespace stepconf {

struct ConfidencePair {
  double confidence = 0.0;  // in [0, 1]
  int correct = 0;          // 0 or 1
};

// Expected calibration error over equal-width confidence bins; the last bin
// is right-closed so confidence 1.0 lands in it.
double ece(const std::vector<ConfidencePair>& pairs, int bins = 10);

// Mean per-step |indicator - confidence|, macro-averaged over responses;
// per-step gaps are never binned.
double mece(const std::vector<std::vector<ConfidencePair>>& responses);

// Probability a random correct item outranks a random incorrect one, ties
// counting half. Computed from ranks; requires both classes present.
double auroc(const std::vector<ConfidencePair>& pairs);

struct F1Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// precision = matched/prediction, recall = covered/reference; F1 defined as
// 0 when precision + recall is 0.
F1Scores chain_f1(const AlignmentResult& alignment);

// Micro average: counts pooled across the set before dividing.
F1Scores chain_f1_micro(const std::vector<AlignmentResult>& alignments);

struct EvalReport {
  double ece = 0.0;
  double mece = 0.0;
  double auroc = 0.0;
  double chain_precision = 0.0;
  double chain_recall = 0.0;
  double chain_f1 = 0.0;
  int n_responses = 0;
  int n_steps = 0;
  int bin_count = 10;
};

void to_json(nlohmann::json& j, const EvalReport& v);
void from_json(const nlohmann::json& j, EvalReport& v);

// Full evaluation: joins responses to reference chains by id, recovers each
// step's expressed confidence from its statement, and aggregates all four
// metrics (ece/auroc pooled over steps, mece macro, chain F1 micro).
EvalReport evaluate(const std::vector<AnnotatedResponse>& responses,
                    const std::vector<ReferenceChain>& chains, const StatementPools& pools,
                    const SentenceScorer& scorer, double threshold = kDefaultMatchThreshold,
                    int bins = 10);

}  // namespace stepconf
