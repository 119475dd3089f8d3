#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepconf/scorer.hpp"

namespace stepconf {

// Five per-level pools of short confidence clauses ("with total certainty.").
// Level 5 is fully confident, level 1 uncertain. No statement may appear in
// two pools. File schema: {"1": [...], ..., "5": [...]}.
class StatementPools {
 public:
  StatementPools() = default;
  explicit StatementPools(std::array<std::vector<std::string>, 5> pools);

  static StatementPools load(const std::string& path);
  void save(const std::string& path) const;

  const std::vector<std::string>& pool(int level) const;
  std::size_t total_statements() const;

 private:
  std::array<std::vector<std::string>, 5> pools_;  // index 0 holds level 1
};

// Uniform draw from the level's pool, deterministic for a given seed.
std::string forward_statement(int level, const StatementPools& pools, std::uint64_t seed);

struct ReverseResult {
  int level = 1;
  double similarity = 0.0;
};

// Scores the statement against every pool member and returns the level of
// the best match; ties break toward the lower (more cautious) level.
ReverseResult reverse_statement(const std::string& statement, const StatementPools& pools,
                                const SentenceScorer& scorer);

// level_to_value of the reverse-mapped level, in [0, 1].
double expressed_value(const std::string& statement, const StatementPools& pools,
                       const SentenceScorer& scorer);

}  // namespace stepconf
