#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stepconf/trace.hpp"

namespace stepconf {

// Plain cosine similarity in [-1, 1]. Throws ValidationError on a dimension
// mismatch or a zero-norm input.
double cosine(std::span<const float> a, std::span<const float> b);

// Cosine of lowercase token-count vectors, clamped to [0, 1]. Tokens are
// maximal runs of ASCII alphanumerics. Both inputs empty scores 0.
double bow_score(const std::string& a, const std::string& b);

// Immutable map ref -> vector, all vectors of one dimension. Persisted as a
// binary sidecar: 8-byte magic "STEPEMB1", uint32 LE JSON-header length, the
// UTF-8 JSON header {"dim", "count", "refs": {ref -> slot}}, then
// count*dim float32 LE values (see docs/formats.md).
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  static EmbeddingStore load(const std::string& path);
  void save(const std::string& path) const;

  void insert(const std::string& ref, std::vector<float> values);
  bool contains(const std::string& ref) const { return vectors_.count(ref) != 0; }
  std::span<const float> get(const std::string& ref) const;

  // Resolves either an inline vector or a named ref.
  std::span<const float> resolve(const EmbeddingRef& ref) const;

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  const std::map<std::string, std::vector<float>>& entries() const { return vectors_; }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<float>> vectors_;
};

// max(cos, 0) between two resolvable embeddings.
double embedding_score(const EmbeddingStore& store, const EmbeddingRef& a,
                       const EmbeddingRef& b);

// Sentence similarity contract: score(a, a) = 1 for non-empty a, symmetric,
// range [0, 1].
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  virtual double score(const std::string& a, const std::string& b) const = 0;
  virtual std::string name() const = 0;
};

// Deterministic bag-of-words backend; the default for tests and CI.
class BowScorer final : public SentenceScorer {
 public:
  double score(const std::string& a, const std::string& b) const override;
  std::string name() const override { return "bow"; }
};

// File-backed backend over vectors an external encoder wrote; sentences are
// looked up by their exact text.
class EmbeddingScorer final : public SentenceScorer {
 public:
  explicit EmbeddingScorer(EmbeddingStore store) : store_(std::move(store)) {}

  double score(const std::string& a, const std::string& b) const override;
  std::string name() const override { return "embed"; }
  const EmbeddingStore& store() const { return store_; }

 private:
  EmbeddingStore store_;
};

// Parses a scorer selection: "bow" or "embed:<sidecar path>".
std::unique_ptr<SentenceScorer> make_scorer(const std::string& selection);

}  // namespace stepconf
