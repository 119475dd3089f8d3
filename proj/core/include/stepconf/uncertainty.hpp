#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepconf/scorer.hpp"
#include "stepconf/trace.hpp"

namespace stepconf {

// Raw per-sentence uncertainty components, before dataset normalization.
// lnlp/mte/token_sar grow with uncertainty; clip is a relevance (higher =
// better aligned) and is inverted during fusion.
struct ComponentScores {
  double lnlp = 1.0;       // sequence perplexity, >= 1
  double mte = 0.0;        // mean token entropy in nats, >= 0
  double token_sar = 0.0;  // relevance-weighted mean negative logprob, >= 0
  std::optional<double> clip;  // image-sentence alignment in [0, 1]

  bool operator==(const ComponentScores&) const = default;
};

struct ComponentRange {
  double min = 0.0;
  double max = 0.0;
  bool degenerate = false;  // min == max over the fitting set

  bool operator==(const ComponentRange&) const = default;
};

// Dataset statistics fitted once over a corpus of component scores and
// reused for every later transform.
struct Normalizer {
  ComponentRange lnlp, mte, token_sar, clip;
  bool clip_present = false;  // any fitting element carried a clip score
  double mu = 0.0;            // population moments of the fused score
  double sigma = 0.0;
  std::array<double, 4> weights{0.25, 0.25, 0.25, 0.25};
  bool clip_direction_inverted = true;

  bool operator==(const Normalizer&) const = default;

  void save(const std::string& path) const;
  static Normalizer load(const std::string& path);
};

void to_json(nlohmann::json& j, const Normalizer& v);
void from_json(const nlohmann::json& j, Normalizer& v);

struct FusionResult {
  double value = 0.0;   // fused uncertainty in [0, 1]
  bool clamped = false;  // some component fell outside its fitted range
  bool clip_redistributed = false;  // clip weight spread over the text components
};

struct RelevanceWeights {
  std::vector<double> weights;   // nonnegative, sum to 1
  bool uniform_fallback = false;  // every leave-one-out relevance was 0
};

// Per-sentence scoring output: raw components, fused score, level bucket,
// and the level's numeric value.
struct ConfidenceRecord {
  int sentence_index = 0;
  ComponentScores components;
  double u_final = 0.0;  // in [0, 1]
  int level = 3;         // 1..5, 5 = most confident
  double iv = 0.5;       // level_to_value(level)
};

void to_json(nlohmann::json& j, const ConfidenceRecord& v);
void from_json(const nlohmann::json& j, ConfidenceRecord& v);

// Sentence perplexity: exp of the mean negative token logprob. >= 1, equal
// to 1 exactly when every token had probability 1.
double u_lnlp(const SentenceSpan& sentence);

// Entropy of one token's distribution in nats, from the precomputed field or
// renormalized over alt_logprobs. Throws when neither source exists.
double token_entropy(const TokenRecord& token, const std::string& context);

// Mean per-token entropy in nats.
double u_mte(const SentenceSpan& sentence);

// Leave-one-out token relevance, normalized to sum 1. Precomputed weights on
// the sentence are returned verbatim.
RelevanceWeights token_relevance(const SentenceSpan& sentence, const std::string& question,
                                 const SentenceScorer& scorer);

// Relevance-weighted mean negative logprob.
double u_token_sar(const SentenceSpan& sentence, const std::vector<double>& weights);

// Clamped image-sentence cosine, in [0, 1].
double u_clip(const EmbeddingStore& store, const EmbeddingRef& image_ref,
              const EmbeddingRef& sentence_ref);

// Fits per-component min/max over the dataset, then the population mean and
// standard deviation of the fused scores of the fitting set itself.
Normalizer fit_normalizer(const std::vector<ComponentScores>& dataset,
                          const std::array<double, 4>& weights);

// Min-max normalizes each component (clamping out-of-range inputs), inverts
// the clip relevance into an uncertainty, and fuses with the fitted weights.
// A missing clip score has its weight redistributed proportionally across
// the text components; if no text weight remains that is an error.
FusionResult fuse(const ComponentScores& components, const Normalizer& norm);
double u_final(const ComponentScores& components, const Normalizer& norm);

// Interval boundaries [0, mu-sigma, mu+sigma, mu+2sigma, mu+3sigma, 1],
// clamped into [0, 1] and monotonized left to right.
std::array<double, 6> bucket_boundaries(const Normalizer& norm);

// Maps a fused uncertainty to a confidence level: [b0,b1) -> 5, [b1,b2) -> 4,
// [b2,b3) -> 3, [b3,b4) -> 2, [b4,b5] -> 1. Total after clamping.
int bucketize(double u, const Normalizer& norm);

// (level - 1) / 4, spanning [0, 1] across levels 1..5.
double level_to_value(int level);

// Components for one sentence. clip is set only when both the image and the
// sentence embedding are available.
ComponentScores component_scores(const SentenceSpan& sentence, const std::string& question,
                                 const std::optional<EmbeddingRef>& image_ref,
                                 const SentenceScorer& scorer, const EmbeddingStore& store);

ConfidenceRecord score_sentence(const SentenceSpan& sentence, const std::string& question,
                                const std::optional<EmbeddingRef>& image_ref,
                                const SentenceScorer& scorer, const EmbeddingStore& store,
                                const Normalizer& norm);

std::vector<ConfidenceRecord> score_trace(const InferenceTrace& trace,
                                          const SentenceScorer& scorer,
                                          const EmbeddingStore& store, const Normalizer& norm);

}  // namespace stepconf
