#include "stepconf/sft.hpp"

#include <fstream>

#include <set>

#include "stepconf/error.hpp"
#include "stepconf/rng.hpp"

namespace stepconf {

namespace {

using nlohmann::json;

void validate_example(const SftExample& example) {
  if (example.target.size() != 2 * example.levels.size()) {
    throw ValidationError("sft example \"" + example.id + "\": target length " +
                          std::to_string(example.target.size()) + " != 2 * " +
                          std::to_string(example.levels.size()));
  }
  for (int level : example.levels) {
    if (level < 1 || level > 5) {
      throw ValidationError("sft example \"" + example.id + "\": level out of range");
    }
  }
}

}  // namespace

std::vector<std::string> SftExample::sentences() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < target.size(); i += 2) out.push_back(target[i]);
  return out;
}

std::vector<std::string> SftExample::statements() const {
  std::vector<std::string> out;
  for (std::size_t i = 1; i < target.size(); i += 2) out.push_back(target[i]);
  return out;
}

std::string SftExample::target_text() const {
  std::string out;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += target[i];
  }
  return out;
}

void to_json(json& j, const SftExample& v) {
  json input = json{{"question", v.question}};
  if (v.image_embedding_ref) input["image_embedding_ref"] = *v.image_embedding_ref;
  j = json{{"id", v.id},
           {"input", std::move(input)},
           {"target", v.target_text()},
           {"sentences", v.sentences()},
           {"statements", v.statements()},
           {"levels", v.levels}};
}

void from_json(const json& j, SftExample& v) {
  j.at("id").get_to(v.id);
  const json& input = j.at("input");
  input.at("question").get_to(v.question);
  v.image_embedding_ref.reset();
  if (auto it = input.find("image_embedding_ref"); it != input.end() && !it->is_null()) {
    v.image_embedding_ref = it->get<EmbeddingRef>();
  }
  const auto sentences = j.at("sentences").get<std::vector<std::string>>();
  const auto statements = j.at("statements").get<std::vector<std::string>>();
  if (sentences.size() != statements.size()) {
    throw ValidationError("sft example \"" + v.id + "\": sentence/statement count mismatch");
  }
  v.target.clear();
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    v.target.push_back(sentences[i]);
    v.target.push_back(statements[i]);
  }
  j.at("levels").get_to(v.levels);
  validate_example(v);
}

std::optional<SftExample> build_sft_example(const InferenceTrace& trace, const Normalizer& norm,
                                            const StatementPools& pools,
                                            const SentenceScorer& scorer,
                                            const EmbeddingStore& store, std::uint64_t seed,
                                            std::string* skip_reason) {
  const std::uint64_t trace_seed = derive_seed(seed, trace.id);

  SftExample example;
  example.id = trace.id;
  example.question = trace.question;
  example.image_embedding_ref = trace.image_embedding_ref;

  try {
    for (const SentenceSpan& sentence : trace.sentences) {
      const ConfidenceRecord record =
          score_sentence(sentence, trace.question, trace.image_embedding_ref, scorer, store, norm);
      const std::string statement = forward_statement(
          record.level, pools, mix_seed(trace_seed, static_cast<std::uint64_t>(sentence.index)));
      example.target.push_back(sentence.text);
      example.target.push_back(statement);
      example.levels.push_back(record.level);
    }
  } catch (const ValidationError& e) {
    if (skip_reason) *skip_reason = e.what();
    return std::nullopt;
  }
  return example;
}

SftBuildResult build_sft(const std::vector<InferenceTrace>& traces, const Normalizer& norm,
                         const StatementPools& pools, const SentenceScorer& scorer,
                         const EmbeddingStore& store, std::uint64_t seed) {
  SftBuildResult result;
  for (const InferenceTrace& trace : traces) {
    std::string reason;
    auto example = build_sft_example(trace, norm, pools, scorer, store, seed, &reason);
    if (example) {
      result.examples.push_back(std::move(*example));
    } else {
      result.skipped.push_back(SkippedTrace{trace.id, reason});
    }
  }
  return result;
}

void to_json(json& j, const SftStats& v) {
  json levels = json::object();
  json distinct = json::object();
  for (int level = 1; level <= 5; ++level) {
    levels[std::to_string(level)] = v.level_counts[level - 1];
    distinct[std::to_string(level)] = v.distinct_statements[level - 1];
  }
  j = json{{"level_counts", std::move(levels)},
           {"distinct_statements", std::move(distinct)},
           {"example_count", v.example_count},
           {"step_count", v.step_count}};
}

SftStats sft_stats(const std::vector<SftExample>& examples) {
  SftStats stats;
  std::array<std::set<std::string>, 5> distinct;
  for (const SftExample& example : examples) {
    validate_example(example);
    ++stats.example_count;
    const auto statements = example.statements();
    for (std::size_t t = 0; t < example.levels.size(); ++t) {
      const int level = example.levels[t];
      ++stats.level_counts[level - 1];
      distinct[level - 1].insert(statements[t]);
      ++stats.step_count;
    }
  }
  for (int i = 0; i < 5; ++i) {
    stats.distinct_statements[i] = static_cast<int>(distinct[i].size());
  }
  return stats;
}

AnnotatedResponse to_annotated(const SftExample& example) {
  validate_example(example);
  AnnotatedResponse response;
  response.trace_id = example.id;
  for (std::size_t t = 0; t < example.levels.size(); ++t) {
    AnnotatedStep step;
    step.sentence_text = example.target[2 * t];
    step.statement_text = example.target[2 * t + 1];
    step.level = example.levels[t];
    step.expressed_conf = level_to_value(example.levels[t]);
    response.steps.push_back(std::move(step));
  }
  return response;
}

void write_sft(const std::string& path, const std::vector<SftExample>& examples) {
  for (const SftExample& example : examples) validate_example(example);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open sft file for writing: " + path);
  for (const SftExample& example : examples) {
    out << json(example).dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<SftExample> read_sft(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open sft file: " + path);
  std::vector<SftExample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<SftExample>());
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace stepconf
