#include "stepconf/statements.hpp"

#include <fstream>
#include <set>

#include "stepconf/error.hpp"
#include "stepconf/rng.hpp"
#include "stepconf/uncertainty.hpp"

namespace stepconf {

namespace {

using nlohmann::json;

void validate_pools(const std::array<std::vector<std::string>, 5>& pools) {
  std::set<std::string> seen;
  for (int level = 1; level <= 5; ++level) {
    const auto& pool = pools[level - 1];
    if (pool.empty()) {
      throw ValidationError("statement pool for level " + std::to_string(level) + " is empty");
    }
    for (const std::string& statement : pool) {
      if (statement.empty()) {
        throw ValidationError("level " + std::to_string(level) + " contains an empty statement");
      }
      if (!seen.insert(statement).second) {
        throw ValidationError("statement \"" + statement + "\" appears in two pools");
      }
    }
  }
}

}  // namespace

StatementPools::StatementPools(std::array<std::vector<std::string>, 5> pools)
    : pools_(std::move(pools)) {
  validate_pools(pools_);
}

StatementPools StatementPools::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open statement pool file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("statement pool file " + path + ": " + e.what());
  }
  std::array<std::vector<std::string>, 5> pools;
  for (int level = 1; level <= 5; ++level) {
    const std::string key = std::to_string(level);
    if (!j.contains(key)) {
      throw ValidationError("statement pool file " + path + ": missing level \"" + key + "\"");
    }
    pools[level - 1] = j.at(key).get<std::vector<std::string>>();
  }
  return StatementPools(std::move(pools));
}

void StatementPools::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open statement pool file for writing: " + path);
  json j = json::object();
  for (int level = 1; level <= 5; ++level) {
    j[std::to_string(level)] = pools_[level - 1];
  }
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

const std::vector<std::string>& StatementPools::pool(int level) const {
  if (level < 1 || level > 5) {
    throw ValidationError("statement pool level must be in 1..5, got " + std::to_string(level));
  }
  return pools_[level - 1];
}

std::size_t StatementPools::total_statements() const {
  std::size_t n = 0;
  for (const auto& pool : pools_) n += pool.size();
  return n;
}

std::string forward_statement(int level, const StatementPools& pools, std::uint64_t seed) {
  const auto& pool = pools.pool(level);
  Rng rng(seed);
  return pool[rng.uniform_below(pool.size())];
}

ReverseResult reverse_statement(const std::string& statement, const StatementPools& pools,
                                const SentenceScorer& scorer) {
  ReverseResult best{1, -1.0};
  for (int level = 1; level <= 5; ++level) {
    for (const std::string& candidate : pools.pool(level)) {
      const double similarity = scorer.score(statement, candidate);
      // Strict > keeps the lowest level on ties.
      if (similarity > best.similarity) {
        best = ReverseResult{level, similarity};
      }
    }
  }
  return best;
}

double expressed_value(const std::string& statement, const StatementPools& pools,
                       const SentenceScorer& scorer) {
  return level_to_value(reverse_statement(statement, pools, scorer).level);
}

}  // namespace stepconf
