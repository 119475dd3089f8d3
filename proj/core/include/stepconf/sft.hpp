#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepconf/statements.hpp"
#include "stepconf/trace.hpp"
#include "stepconf/uncertainty.hpp"

namespace stepconf {

// One warm-up example: the original sentences with a sampled confidence
// statement interleaved after each one.
struct SftExample {
  std::string id;
  std::string question;
  std::optional<EmbeddingRef> image_embedding_ref;
  std::vector<std::string> target;  // alternating sentence, statement; length 2T
  std::vector<int> levels;          // length T

  std::vector<std::string> sentences() const;   // even positions
  std::vector<std::string> statements() const;  // odd positions
  // Sentences with their statements appended, joined by single spaces.
  std::string target_text() const;

  bool operator==(const SftExample&) const = default;
};

void to_json(nlohmann::json& j, const SftExample& v);
void from_json(const nlohmann::json& j, SftExample& v);

struct SkippedTrace {
  std::string id;
  std::string reason;
};

struct SftBuildResult {
  std::vector<SftExample> examples;
  std::vector<SkippedTrace> skipped;
};

// Builds the example for one trace: per-sentence confidence estimation, then
// a statement sampled from the matching pool. The statement draw is seeded
// from (seed, trace id, sentence index), so any execution order gives the
// same output. Returns nullopt and records a reason when the trace cannot be
// scored (e.g. a token with no entropy source).
std::optional<SftExample> build_sft_example(const InferenceTrace& trace, const Normalizer& norm,
                                            const StatementPools& pools,
                                            const SentenceScorer& scorer,
                                            const EmbeddingStore& store, std::uint64_t seed,
                                            std::string* skip_reason);

SftBuildResult build_sft(const std::vector<InferenceTrace>& traces, const Normalizer& norm,
                         const StatementPools& pools, const SentenceScorer& scorer,
                         const EmbeddingStore& store, std::uint64_t seed);

struct SftStats {
  std::array<int, 5> level_counts{};          // index 0 holds level 1
  std::array<int, 5> distinct_statements{};
  int example_count = 0;
  int step_count = 0;
};

void to_json(nlohmann::json& j, const SftStats& v);

SftStats sft_stats(const std::vector<SftExample>& examples);

// The annotated-response view of an example, for the reward and eval stages.
AnnotatedResponse to_annotated(const SftExample& example);

void write_sft(const std::string& path, const std::vector<SftExample>& examples);
std::vector<SftExample> read_sft(const std::string& path);

}  // namespace stepconf
