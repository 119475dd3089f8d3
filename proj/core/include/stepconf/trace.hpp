#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace stepconf {

// One generated token with the log probability the engine assigned to it.
// Logprobs are natural-log, entropies are nats.
struct TokenRecord {
  std::string text;
  double logprob = 0.0;  // <= 0
  std::optional<double> entropy;  // full-distribution entropy, >= 0
  // Top-k of the step distribution, as (token, logprob) pairs. Used to
  // derive an entropy when the engine did not report one.
  std::optional<std::vector<std::pair<std::string, double>>> alt_logprobs;

  bool operator==(const TokenRecord&) const = default;
};

// Reference to an embedding: either a key into a sidecar store or an inline
// vector (accepted for small tests).
struct EmbeddingRef {
  std::string name;
  std::vector<float> inline_values;

  bool is_inline() const { return !inline_values.empty(); }
  std::string describe() const { return is_inline() ? "<inline>" : name; }

  bool operator==(const EmbeddingRef&) const = default;
};

struct SentenceSpan {
  int index = 0;  // 0-based position within the trace
  std::string text;
  std::vector<TokenRecord> tokens;
  std::optional<EmbeddingRef> embedding_ref;
  // Precomputed per-token relevance weights; nonnegative, sum to 1.
  std::optional<std::vector<double>> relevance_weights;

  bool operator==(const SentenceSpan&) const = default;
};

struct InferenceTrace {
  std::string id;
  std::string question;
  std::optional<EmbeddingRef> image_embedding_ref;
  std::vector<SentenceSpan> sentences;  // indices 0..T-1, T >= 1
  std::optional<std::string> final_answer;

  bool operator==(const InferenceTrace&) const = default;
};

// Annotated ground-truth chain: perception-level sentences followed by
// reasoning-level sentences; the last reasoning sentence states the answer.
struct ReferenceChain {
  std::string id;
  std::vector<std::string> perception;
  std::vector<std::string> reasoning;

  std::vector<std::string> all_sentences() const;

  bool operator==(const ReferenceChain&) const = default;
};

struct AnnotatedStep {
  std::string sentence_text;
  std::string statement_text;
  int level = 3;               // 1..5
  double expressed_conf = 0.5;  // in [0, 1]

  bool operator==(const AnnotatedStep&) const = default;
};

struct AnnotatedResponse {
  std::string trace_id;
  std::vector<AnnotatedStep> steps;  // ordered by sentence index

  bool operator==(const AnnotatedResponse&) const = default;
};

// Invariant checks. Throw ValidationError naming the offending id and field;
// nothing is ever silently repaired.
void validate(const TokenRecord& token, const std::string& context);
void validate(const SentenceSpan& sentence, const std::string& trace_id);
void validate(const InferenceTrace& trace);
void validate(const ReferenceChain& chain);
void validate(const AnnotatedResponse& response);

void to_json(nlohmann::json& j, const TokenRecord& v);
void from_json(const nlohmann::json& j, TokenRecord& v);
void to_json(nlohmann::json& j, const EmbeddingRef& v);
void from_json(const nlohmann::json& j, EmbeddingRef& v);
void to_json(nlohmann::json& j, const SentenceSpan& v);
void from_json(const nlohmann::json& j, SentenceSpan& v);
void to_json(nlohmann::json& j, const InferenceTrace& v);
void from_json(const nlohmann::json& j, InferenceTrace& v);
void to_json(nlohmann::json& j, const ReferenceChain& v);
void from_json(const nlohmann::json& j, ReferenceChain& v);
void to_json(nlohmann::json& j, const AnnotatedStep& v);
void from_json(const nlohmann::json& j, AnnotatedStep& v);
void to_json(nlohmann::json& j, const AnnotatedResponse& v);
void from_json(const nlohmann::json& j, AnnotatedResponse& v);

// JSONL readers. A malformed line raises ValidationError naming the line
// number; an invariant violation raises ValidationError naming the record id
// and field. Unreadable paths raise IoError.
std::vector<InferenceTrace> read_traces(const std::string& path);
std::vector<ReferenceChain> read_reference_chains(const std::string& path);
std::vector<AnnotatedResponse> read_annotated(const std::string& path);

// JSONL writers; items are validated before anything is written.
void write_traces(const std::string& path, const std::vector<InferenceTrace>& items);
void write_reference_chains(const std::string& path, const std::vector<ReferenceChain>& items);
void write_annotated(const std::string& path, const std::vector<AnnotatedResponse>& items);

}  // namespace stepconf
