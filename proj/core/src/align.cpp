#include "stepconf/align.hpp"

#include "stepconf/error.hpp"

namespace stepconf {

AlignmentResult align(const std::vector<std::string>& predictions, const ReferenceChain& ref,
                      const SentenceScorer& scorer, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    throw ValidationError("match threshold must be in [0, 1], got " + std::to_string(threshold));
  }
  const std::vector<std::string> references = ref.all_sentences();

  AlignmentResult result;
  result.threshold = threshold;
  result.prediction_count = static_cast<int>(predictions.size());
  result.reference_count = static_cast<int>(references.size());
  result.matched.assign(predictions.size(), false);
  result.covered.assign(references.size(), false);

  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (std::size_t j = 0; j < references.size(); ++j) {
      if (scorer.score(predictions[i], references[j]) >= threshold) {
        result.matched[i] = true;
        result.covered[j] = true;
      }
    }
  }
  for (bool m : result.matched) result.matched_count += m ? 1 : 0;
  for (bool c : result.covered) result.covered_count += c ? 1 : 0;
  return result;
}

int indicator(const std::string& sentence, const ReferenceChain& ref,
              const SentenceScorer& scorer, double threshold) {
  const AlignmentResult result = align({sentence}, ref, scorer, threshold);
  return result.matched_count > 0 ? 1 : 0;
}

}  // namespace stepconf
