#pragma once

#include <string>
#include <vector>

#include "stepconf/scorer.hpp"
#include "stepconf/trace.hpp"

namespace stepconf {

inline constexpr double kDefaultMatchThreshold = 0.64;

// Thresholded many-to-many match between predicted sentences and the
// reference chain (perception ++ reasoning, order-insensitive). A prediction
// is matched when its best reference score reaches the threshold; a
// reference is covered when its best prediction score does. Scores exactly
// at the threshold count.
struct AlignmentResult {
  std::vector<bool> matched;  // per prediction
  std::vector<bool> covered;  // per reference
  int prediction_count = 0;
  int reference_count = 0;
  int matched_count = 0;
  int covered_count = 0;
  double threshold = kDefaultMatchThreshold;
};

AlignmentResult align(const std::vector<std::string>& predictions, const ReferenceChain& ref,
                      const SentenceScorer& scorer, double threshold = kDefaultMatchThreshold);

// 1 when the sentence matches some reference sentence at the threshold.
int indicator(const std::string& sentence, const ReferenceChain& ref,
              const SentenceScorer& scorer, double threshold = kDefaultMatchThreshold);

}  // namespace stepconf
