#include "stepconf/trace.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "stepconf/error.hpp"

namespace stepconf {

namespace {

using nlohmann::json;

void require_finite(double x, const std::string& context, const char* field) {
  if (!std::isfinite(x)) {
    throw ValidationError(context + ": field \"" + field + "\" must be finite");
  }
}

template <typename T>
void write_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v.has_value()) j[key] = *v;
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& v) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    v = it->get<T>();
  } else {
    v.reset();
  }
}

template <typename T>
std::vector<T> read_jsonl(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + std::string(what) + " file: " + path);
  std::vector<T> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": malformed JSON line: " + e.what());
    }
    T item;
    try {
      item = j.get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": bad " +
                            what + " record: " + e.what());
    }
    validate(item);
    out.push_back(std::move(item));
  }
  return out;
}

template <typename T>
void write_jsonl(const std::string& path, const std::vector<T>& items, const char* what) {
  for (const T& item : items) validate(item);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + std::string(what) + " file for writing: " + path);
  for (const T& item : items) {
    out << json(item).dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

std::vector<std::string> ReferenceChain::all_sentences() const {
  std::vector<std::string> out = perception;
  out.insert(out.end(), reasoning.begin(), reasoning.end());
  return out;
}

void validate(const TokenRecord& token, const std::string& context) {
  require_finite(token.logprob, context, "logprob");
  if (token.logprob > 0.0) {
    std::ostringstream msg;
    msg << context << ": violates \"logprob <= 0\" (got " << token.logprob << ")";
    throw ValidationError(msg.str());
  }
  if (token.entropy) {
    require_finite(*token.entropy, context, "entropy");
    if (*token.entropy < 0.0) {
      throw ValidationError(context + ": violates \"entropy >= 0\"");
    }
  }
  if (token.alt_logprobs) {
    double prob_sum = 0.0;
    for (const auto& [alt, lp] : *token.alt_logprobs) {
      require_finite(lp, context, "alt_logprobs");
      prob_sum += std::exp(lp);
    }
    if (prob_sum > 1.0 + 1e-6) {
      std::ostringstream msg;
      msg << context << ": alt_logprobs imply probability mass " << prob_sum << " > 1";
      throw ValidationError(msg.str());
    }
  }
}

void validate(const SentenceSpan& sentence, const std::string& trace_id) {
  const std::string context =
      "trace \"" + trace_id + "\" sentence " + std::to_string(sentence.index);
  if (sentence.tokens.empty()) {
    throw ValidationError(context + ": field \"tokens\" must be non-empty");
  }
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    validate(sentence.tokens[i], context + " token " + std::to_string(i));
  }
  if (sentence.embedding_ref && sentence.embedding_ref->is_inline()) {
    for (float x : sentence.embedding_ref->inline_values) {
      require_finite(x, context, "embedding_ref");
    }
  }
  if (sentence.relevance_weights) {
    const auto& w = *sentence.relevance_weights;
    if (w.size() != sentence.tokens.size()) {
      throw ValidationError(context + ": field \"relevance_weights\" length " +
                            std::to_string(w.size()) + " != token count " +
                            std::to_string(sentence.tokens.size()));
    }
    double sum = 0.0;
    for (double x : w) {
      require_finite(x, context, "relevance_weights");
      if (x < 0.0) {
        throw ValidationError(context + ": relevance_weights must be nonnegative");
      }
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      std::ostringstream msg;
      msg << context << ": relevance_weights sum to " << sum << ", expected 1";
      throw ValidationError(msg.str());
    }
  }
}

void validate(const InferenceTrace& trace) {
  if (trace.id.empty()) throw ValidationError("trace with empty \"id\"");
  if (trace.sentences.empty()) {
    throw ValidationError("trace \"" + trace.id + "\": field \"sentences\" must be non-empty");
  }
  for (std::size_t t = 0; t < trace.sentences.size(); ++t) {
    if (trace.sentences[t].index != static_cast<int>(t)) {
      throw ValidationError("trace \"" + trace.id + "\": sentence indices must be contiguous 0.." +
                            std::to_string(trace.sentences.size() - 1) + ", position " +
                            std::to_string(t) + " has index " +
                            std::to_string(trace.sentences[t].index));
    }
    validate(trace.sentences[t], trace.id);
  }
  if (trace.image_embedding_ref && trace.image_embedding_ref->is_inline()) {
    for (float x : trace.image_embedding_ref->inline_values) {
      require_finite(x, "trace \"" + trace.id + "\"", "image_embedding_ref");
    }
  }
}

void validate(const ReferenceChain& chain) {
  if (chain.id.empty()) throw ValidationError("reference chain with empty \"id\"");
  if (chain.perception.empty() && chain.reasoning.empty()) {
    throw ValidationError("reference chain \"" + chain.id +
                          "\": perception and reasoning are both empty");
  }
}

void validate(const AnnotatedResponse& response) {
  if (response.trace_id.empty()) {
    throw ValidationError("annotated response with empty \"trace_id\"");
  }
  const std::string context = "annotated response \"" + response.trace_id + "\"";
  for (std::size_t i = 0; i < response.steps.size(); ++i) {
    const AnnotatedStep& step = response.steps[i];
    if (step.level < 1 || step.level > 5) {
      throw ValidationError(context + " step " + std::to_string(i) +
                            ": field \"level\" must be in 1..5, got " +
                            std::to_string(step.level));
    }
    require_finite(step.expressed_conf, context, "expressed_conf");
    if (step.expressed_conf < 0.0 || step.expressed_conf > 1.0) {
      throw ValidationError(context + " step " + std::to_string(i) +
                            ": field \"expressed_conf\" must be in [0, 1]");
    }
  }
}

void to_json(json& j, const TokenRecord& v) {
  j = json{{"text", v.text}, {"logprob", v.logprob}};
  write_optional(j, "entropy", v.entropy);
  if (v.alt_logprobs) {
    json alts = json::array();
    for (const auto& [tok, lp] : *v.alt_logprobs) alts.push_back(json::array({tok, lp}));
    j["alt_logprobs"] = std::move(alts);
  }
}

void from_json(const json& j, TokenRecord& v) {
  j.at("text").get_to(v.text);
  j.at("logprob").get_to(v.logprob);
  read_optional(j, "entropy", v.entropy);
  v.alt_logprobs.reset();
  if (auto it = j.find("alt_logprobs"); it != j.end() && !it->is_null()) {
    std::vector<std::pair<std::string, double>> alts;
    for (const json& pair : *it) {
      alts.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<double>());
    }
    v.alt_logprobs = std::move(alts);
  }
}

void to_json(json& j, const EmbeddingRef& v) {
  if (v.is_inline()) {
    j = v.inline_values;
  } else {
    j = v.name;
  }
}

void from_json(const json& j, EmbeddingRef& v) {
  v = EmbeddingRef{};
  if (j.is_string()) {
    v.name = j.get<std::string>();
  } else if (j.is_array()) {
    v.inline_values = j.get<std::vector<float>>();
  } else {
    throw ValidationError("embedding reference must be a string key or an inline number array");
  }
}

void to_json(json& j, const SentenceSpan& v) {
  j = json{{"index", v.index}, {"text", v.text}, {"tokens", v.tokens}};
  write_optional(j, "embedding_ref", v.embedding_ref);
  write_optional(j, "relevance_weights", v.relevance_weights);
}

void from_json(const json& j, SentenceSpan& v) {
  j.at("index").get_to(v.index);
  j.at("text").get_to(v.text);
  j.at("tokens").get_to(v.tokens);
  read_optional(j, "embedding_ref", v.embedding_ref);
  read_optional(j, "relevance_weights", v.relevance_weights);
}

void to_json(json& j, const InferenceTrace& v) {
  j = json{{"id", v.id}, {"question", v.question}, {"sentences", v.sentences}};
  write_optional(j, "image_embedding_ref", v.image_embedding_ref);
  write_optional(j, "final_answer", v.final_answer);
}

void from_json(const json& j, InferenceTrace& v) {
  j.at("id").get_to(v.id);
  j.at("question").get_to(v.question);
  j.at("sentences").get_to(v.sentences);
  read_optional(j, "image_embedding_ref", v.image_embedding_ref);
  read_optional(j, "final_answer", v.final_answer);
}

void to_json(json& j, const ReferenceChain& v) {
  j = json{{"id", v.id}, {"perception", v.perception}, {"reasoning", v.reasoning}};
}

void from_json(const json& j, ReferenceChain& v) {
  j.at("id").get_to(v.id);
  j.at("perception").get_to(v.perception);
  j.at("reasoning").get_to(v.reasoning);
}

void to_json(json& j, const AnnotatedStep& v) {
  j = json{{"sentence_text", v.sentence_text},
           {"statement_text", v.statement_text},
           {"level", v.level},
           {"expressed_conf", v.expressed_conf}};
}

void from_json(const json& j, AnnotatedStep& v) {
  j.at("sentence_text").get_to(v.sentence_text);
  j.at("statement_text").get_to(v.statement_text);
  j.at("level").get_to(v.level);
  j.at("expressed_conf").get_to(v.expressed_conf);
}

void to_json(json& j, const AnnotatedResponse& v) {
  j = json{{"trace_id", v.trace_id}, {"steps", v.steps}};
}

void from_json(const json& j, AnnotatedResponse& v) {
  j.at("trace_id").get_to(v.trace_id);
  j.at("steps").get_to(v.steps);
}

std::vector<InferenceTrace> read_traces(const std::string& path) {
  return read_jsonl<InferenceTrace>(path, "trace");
}

std::vector<ReferenceChain> read_reference_chains(const std::string& path) {
  return read_jsonl<ReferenceChain>(path, "reference chain");
}

std::vector<AnnotatedResponse> read_annotated(const std::string& path) {
  return read_jsonl<AnnotatedResponse>(path, "annotated response");
}

void write_traces(const std::string& path, const std::vector<InferenceTrace>& items) {
  write_jsonl(path, items, "trace");
}

void write_reference_chains(const std::string& path, const std::vector<ReferenceChain>& items) {
  write_jsonl(path, items, "reference chain");
}

void write_annotated(const std::string& path, const std::vector<AnnotatedResponse>& items) {
  write_jsonl(path, items, "annotated response");
}

}  // namespace stepconf
