#include "stepconf/rewards.hpp"

#include "stepconf/error.hpp"

namespace stepconf {

namespace {

using nlohmann::json;

void require_steps(const AnnotatedResponse& response) {
  if (response.steps.empty()) {
    throw ValidationError("annotated response \"" + response.trace_id + "\" has no steps");
  }
}

std::vector<std::string> sentence_texts(const AnnotatedResponse& response) {
  std::vector<std::string> out;
  out.reserve(response.steps.size());
  for (const AnnotatedStep& step : response.steps) out.push_back(step.sentence_text);
  return out;
}

}  // namespace

ExpressedConfidence step_expressed_value(const AnnotatedStep& step, const StatementPools& pools,
                                         const SentenceScorer& scorer) {
  if (step.statement_text.empty()) {
    return ExpressedConfidence{level_to_value(3), true};
  }
  return ExpressedConfidence{expressed_value(step.statement_text, pools, scorer), false};
}

void to_json(json& j, const StepTerms& v) {
  j = json{{"indicator", v.indicator}, {"ev", v.ev},       {"iv", v.iv},
           {"ec_term", v.ec},          {"cs_term", v.cs},  {"ev_defaulted", v.ev_defaulted}};
}

void to_json(json& j, const RewardBreakdown& v) {
  j = json{{"trace_id", v.trace_id},
           {"r_ka", v.r_ka},
           {"r_ec", v.r_ec},
           {"r_cs", v.r_cs},
           {"per_step", v.per_step},
           {"combined", v.combined},
           {"alpha", v.alpha},
           {"beta", v.beta},
           {"gamma", v.gamma}};
}

double knowledge_accuracy(const AnnotatedResponse& response, const ReferenceChain& ref,
                          const SentenceScorer& scorer, double threshold) {
  require_steps(response);
  const AlignmentResult alignment = align(sentence_texts(response), ref, scorer, threshold);
  return static_cast<double>(alignment.matched_count) /
         static_cast<double>(alignment.prediction_count);
}

double expected_calibration(const AnnotatedResponse& response, const ReferenceChain& ref,
                            const SentenceScorer& scorer, double threshold,
                            const StatementPools& pools, const SentenceScorer& statement_scorer) {
  require_steps(response);
  const AlignmentResult alignment = align(sentence_texts(response), ref, scorer, threshold);
  double sum = 0.0;
  for (std::size_t t = 0; t < response.steps.size(); ++t) {
    const int ind = alignment.matched[t] ? 1 : 0;
    const double ev = step_expressed_value(response.steps[t], pools, statement_scorer).value;
    sum += ec_term(ind, ev);
  }
  return sum / static_cast<double>(response.steps.size());
}

double self_calibration(const AnnotatedResponse& response,
                        const std::vector<ConfidenceRecord>& internal,
                        const StatementPools& pools, const SentenceScorer& statement_scorer) {
  require_steps(response);
  if (internal.size() != response.steps.size()) {
    throw ValidationError("annotated response \"" + response.trace_id + "\" has " +
                          std::to_string(response.steps.size()) + " steps but " +
                          std::to_string(internal.size()) + " internal confidence records");
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < response.steps.size(); ++t) {
    const double ev = step_expressed_value(response.steps[t], pools, statement_scorer).value;
    sum += cs_term(internal[t].iv, ev);
  }
  return sum / static_cast<double>(response.steps.size());
}

double combine(double r_ka, double r_ec, double r_cs, double alpha, double beta, double gamma) {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw ValidationError("reward weights must be nonnegative");
  }
  return alpha * r_ka + beta * r_ec + gamma * r_cs;
}

RewardBreakdown reward_breakdown(const AnnotatedResponse& response, const ReferenceChain& ref,
                                 const std::vector<ConfidenceRecord>& internal,
                                 const StatementPools& pools, const SentenceScorer& scorer,
                                 double threshold, double alpha, double beta, double gamma) {
  require_steps(response);
  if (internal.size() != response.steps.size()) {
    throw ValidationError("annotated response \"" + response.trace_id + "\" has " +
                          std::to_string(response.steps.size()) + " steps but " +
                          std::to_string(internal.size()) + " internal confidence records");
  }

  const AlignmentResult alignment = align(sentence_texts(response), ref, scorer, threshold);

  RewardBreakdown breakdown;
  breakdown.trace_id = response.trace_id;
  breakdown.alpha = alpha;
  breakdown.beta = beta;
  breakdown.gamma = gamma;
  breakdown.per_step.reserve(response.steps.size());

  double ka_sum = 0.0, ec_sum = 0.0, cs_sum = 0.0;
  for (std::size_t t = 0; t < response.steps.size(); ++t) {
    StepTerms terms;
    terms.indicator = alignment.matched[t] ? 1 : 0;
    const ExpressedConfidence ev = step_expressed_value(response.steps[t], pools, scorer);
    terms.ev = ev.value;
    terms.ev_defaulted = ev.defaulted;
    terms.iv = internal[t].iv;
    terms.ec = ec_term(terms.indicator, terms.ev);
    terms.cs = cs_term(terms.iv, terms.ev);
    ka_sum += terms.indicator;
    ec_sum += terms.ec;
    cs_sum += terms.cs;
    breakdown.per_step.push_back(terms);
  }

  const double n = static_cast<double>(response.steps.size());
  breakdown.r_ka = ka_sum / n;
  breakdown.r_ec = ec_sum / n;
  breakdown.r_cs = cs_sum / n;
  breakdown.combined = combine(breakdown.r_ka, breakdown.r_ec, breakdown.r_cs, alpha, beta, gamma);
  return breakdown;
}

}  // namespace stepconf
