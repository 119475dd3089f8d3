#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "stepconf/align.hpp"
#include "stepconf/statements.hpp"
#include "stepconf/trace.hpp"
#include "stepconf/uncertainty.hpp"

namespace stepconf {

// Quadratic calibration terms, each in [-1, 1] and maximal exactly when the
// two arguments agree.
inline double ec_term(int ind, double ev) {
  const double gap = static_cast<double>(ind) - ev;
  return 1.0 - 2.0 * gap * gap;
}

inline double cs_term(double iv, double ev) {
  const double gap = iv - ev;
  return 1.0 - 2.0 * gap * gap;
}

// Expressed confidence recovered from a statement. A step with no statement
// gets the neutral level-3 value and is flagged.
struct ExpressedConfidence {
  double value = 0.5;
  bool defaulted = false;
};

ExpressedConfidence step_expressed_value(const AnnotatedStep& step, const StatementPools& pools,
                                         const SentenceScorer& scorer);

struct StepTerms {
  int indicator = 0;
  double ev = 0.5;
  double iv = 0.5;
  double ec = 0.0;
  double cs = 0.0;
  bool ev_defaulted = false;
};

struct RewardBreakdown {
  std::string trace_id;
  double r_ka = 0.0;  // in [0, 1]
  double r_ec = 0.0;  // in [-1, 1]
  double r_cs = 0.0;  // in [-1, 1]
  std::vector<StepTerms> per_step;
  double combined = 0.0;
  double alpha = 1.0 / 3.0;
  double beta = 1.0 / 3.0;
  double gamma = 1.0 / 3.0;
};

void to_json(nlohmann::json& j, const StepTerms& v);
void to_json(nlohmann::json& j, const RewardBreakdown& v);

// Fraction of response sentences that match the reference chain.
double knowledge_accuracy(const AnnotatedResponse& response, const ReferenceChain& ref,
                          const SentenceScorer& scorer,
                          double threshold = kDefaultMatchThreshold);

// Mean per-step agreement between the match indicator and the expressed
// confidence recovered from the statement text.
double expected_calibration(const AnnotatedResponse& response, const ReferenceChain& ref,
                            const SentenceScorer& scorer, double threshold,
                            const StatementPools& pools, const SentenceScorer& statement_scorer);

// Mean per-step agreement between the recomputed internal confidence and
// the expressed confidence.
double self_calibration(const AnnotatedResponse& response,
                        const std::vector<ConfidenceRecord>& internal,
                        const StatementPools& pools, const SentenceScorer& statement_scorer);

// Weighted sum of the three rewards; the defaults weight them equally.
double combine(double r_ka, double r_ec, double r_cs, double alpha = 1.0 / 3.0,
               double beta = 1.0 / 3.0, double gamma = 1.0 / 3.0);

// Everything at once, sharing one alignment pass per response.
RewardBreakdown reward_breakdown(const AnnotatedResponse& response, const ReferenceChain& ref,
                                 const std::vector<ConfidenceRecord>& internal,
                                 const StatementPools& pools, const SentenceScorer& scorer,
                                 double threshold = kDefaultMatchThreshold,
                                 double alpha = 1.0 / 3.0, double beta = 1.0 / 3.0,
                                 double gamma = 1.0 / 3.0);

}  // namespace stepconf
