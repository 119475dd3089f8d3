#include "stepconf/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "stepconf/error.hpp"

namespace stepconf {

namespace {

using nlohmann::json;

std::string sentence_context(const SentenceSpan& sentence) {
  return "sentence " + std::to_string(sentence.index);
}

// Token texts joined with single spaces; skip < 0 keeps everything.
std::string join_tokens(const std::vector<TokenRecord>& tokens, int skip = -1) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (static_cast<int>(i) == skip) continue;
    if (!out.empty()) out.push_back(' ');
    out += tokens[i].text;
  }
  return out;
}

double normalize_component(double value, const ComponentRange& range, bool* clamped) {
  if (range.degenerate) return 0.0;
  if (value < range.min) {
    *clamped = true;
    return 0.0;
  }
  if (value > range.max) {
    *clamped = true;
    return 1.0;
  }
  return (value - range.min) / (range.max - range.min);
}

ComponentRange fit_range(const std::vector<double>& values) {
  ComponentRange range;
  range.min = *std::min_element(values.begin(), values.end());
  range.max = *std::max_element(values.begin(), values.end());
  range.degenerate = range.min == range.max;
  return range;
}

void to_json(json& j, const ComponentRange& v) {
  j = json{{"min", v.min}, {"max", v.max}, {"degenerate", v.degenerate}};
}

void range_from_json(const json& j, ComponentRange& v) {
  j.at("min").get_to(v.min);
  j.at("max").get_to(v.max);
  j.at("degenerate").get_to(v.degenerate);
}

}  // namespace

void to_json(json& j, const Normalizer& v) {
  json lnlp, mte, token_sar, clip;
  to_json(lnlp, v.lnlp);
  to_json(mte, v.mte);
  to_json(token_sar, v.token_sar);
  to_json(clip, v.clip);
  j = json{{"lnlp", lnlp},
           {"mte", mte},
           {"token_sar", token_sar},
           {"clip", clip},
           {"clip_present", v.clip_present},
           {"mu", v.mu},
           {"sigma", v.sigma},
           {"weights", v.weights},
           {"clip_direction_inverted", v.clip_direction_inverted}};
}

void from_json(const json& j, Normalizer& v) {
  range_from_json(j.at("lnlp"), v.lnlp);
  range_from_json(j.at("mte"), v.mte);
  range_from_json(j.at("token_sar"), v.token_sar);
  range_from_json(j.at("clip"), v.clip);
  j.at("clip_present").get_to(v.clip_present);
  j.at("mu").get_to(v.mu);
  j.at("sigma").get_to(v.sigma);
  j.at("weights").get_to(v.weights);
  j.at("clip_direction_inverted").get_to(v.clip_direction_inverted);
}

void Normalizer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open normalizer file for writing: " + path);
  out << json(*this).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

Normalizer Normalizer::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open normalizer file: " + path);
  json j;
  Normalizer norm;
  try {
    in >> j;
    norm = j.get<Normalizer>();
  } catch (const json::exception& e) {
    throw ValidationError("normalizer file " + path + ": " + e.what());
  }
  for (const auto& [name, range] :
       {std::pair<const char*, const ComponentRange*>{"lnlp", &norm.lnlp},
        {"mte", &norm.mte},
        {"token_sar", &norm.token_sar},
        {"clip", &norm.clip}}) {
    if (range->min > range->max) {
      throw ValidationError("normalizer file " + path + ": " + name + " has min > max");
    }
  }
  if (norm.sigma < 0.0) {
    throw ValidationError("normalizer file " + path + ": sigma must be >= 0");
  }
  double weight_sum = 0.0;
  for (double w : norm.weights) {
    if (w < 0.0) {
      throw ValidationError("normalizer file " + path + ": weights must be nonnegative");
    }
    weight_sum += w;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) {
    throw ValidationError("normalizer file " + path + ": weights must sum to 1");
  }
  return norm;
}

void to_json(json& j, const ConfidenceRecord& v) {
  json components = json{{"lnlp", v.components.lnlp},
                         {"mte", v.components.mte},
                         {"token_sar", v.components.token_sar}};
  if (v.components.clip) components["clip"] = *v.components.clip;
  j = json{{"sentence_index", v.sentence_index},
           {"components", std::move(components)},
           {"u_final", v.u_final},
           {"level", v.level},
           {"iv", v.iv}};
}

void from_json(const json& j, ConfidenceRecord& v) {
  j.at("sentence_index").get_to(v.sentence_index);
  const json& c = j.at("components");
  c.at("lnlp").get_to(v.components.lnlp);
  c.at("mte").get_to(v.components.mte);
  c.at("token_sar").get_to(v.components.token_sar);
  v.components.clip.reset();
  if (auto it = c.find("clip"); it != c.end() && !it->is_null()) {
    v.components.clip = it->get<double>();
  }
  j.at("u_final").get_to(v.u_final);
  j.at("level").get_to(v.level);
  j.at("iv").get_to(v.iv);
}

double u_lnlp(const SentenceSpan& sentence) {
  if (sentence.tokens.empty()) {
    throw ValidationError(sentence_context(sentence) + ": no tokens, perplexity undefined");
  }
  double sum = 0.0;
  for (const TokenRecord& token : sentence.tokens) sum += token.logprob;
  return std::exp(-sum / static_cast<double>(sentence.tokens.size()));
}

double token_entropy(const TokenRecord& token, const std::string& context) {
  if (token.entropy) return *token.entropy;
  if (token.alt_logprobs && !token.alt_logprobs->empty()) {
    // Renormalize over the listed alternatives, then Shannon entropy.
    double mass = 0.0;
    for (const auto& [_, lp] : *token.alt_logprobs) mass += std::exp(lp);
    if (mass <= 0.0) {
      throw ValidationError(context + ": alt_logprobs carry no probability mass");
    }
    double h = 0.0;
    for (const auto& [_, lp] : *token.alt_logprobs) {
      const double p = std::exp(lp) / mass;
      if (p > 0.0) h -= p * std::log(p);
    }
    return std::max(h, 0.0);
  }
  throw ValidationError(context + ": no entropy source (neither entropy nor alt_logprobs)");
}

double u_mte(const SentenceSpan& sentence) {
  if (sentence.tokens.empty()) {
    throw ValidationError(sentence_context(sentence) + ": no tokens, entropy undefined");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    sum += token_entropy(sentence.tokens[i],
                         sentence_context(sentence) + " token " + std::to_string(i));
  }
  return sum / static_cast<double>(sentence.tokens.size());
}

RelevanceWeights token_relevance(const SentenceSpan& sentence, const std::string& question,
                                 const SentenceScorer& scorer) {
  if (sentence.relevance_weights) {
    return RelevanceWeights{*sentence.relevance_weights, false};
  }
  if (sentence.tokens.empty()) {
    throw ValidationError(sentence_context(sentence) + ": no tokens, relevance undefined");
  }
  const std::size_t n = sentence.tokens.size();
  const std::string full = question + " " + join_tokens(sentence.tokens);

  std::vector<double> raw(n, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::string without = join_tokens(sentence.tokens, static_cast<int>(k));
    const std::string reduced = without.empty() ? question : question + " " + without;
    const double relevance = std::max(1.0 - scorer.score(full, reduced), 0.0);
    raw[k] = relevance;
    total += relevance;
  }

  RelevanceWeights result;
  result.weights.resize(n);
  if (total <= 0.0) {
    std::fill(result.weights.begin(), result.weights.end(), 1.0 / static_cast<double>(n));
    result.uniform_fallback = true;
  } else {
    for (std::size_t k = 0; k < n; ++k) result.weights[k] = raw[k] / total;
  }
  return result;
}

double u_token_sar(const SentenceSpan& sentence, const std::vector<double>& weights) {
  if (weights.size() != sentence.tokens.size()) {
    throw ValidationError(sentence_context(sentence) + ": weight count " +
                          std::to_string(weights.size()) + " != token count " +
                          std::to_string(sentence.tokens.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    sum += weights[i] * sentence.tokens[i].logprob;
  }
  return -sum;
}

double u_clip(const EmbeddingStore& store, const EmbeddingRef& image_ref,
              const EmbeddingRef& sentence_ref) {
  return std::max(cosine(store.resolve(image_ref), store.resolve(sentence_ref)), 0.0);
}

Normalizer fit_normalizer(const std::vector<ComponentScores>& dataset,
                          const std::array<double, 4>& weights) {
  if (dataset.empty()) {
    throw ValidationError("fit_normalizer: empty dataset");
  }
  double weight_sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("fit_normalizer: weights must be nonnegative");
    weight_sum += w;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "fit_normalizer: weights sum to " << weight_sum << ", expected 1";
    throw ValidationError(msg.str());
  }

  std::vector<double> lnlp, mte, token_sar, clip;
  for (const ComponentScores& c : dataset) {
    lnlp.push_back(c.lnlp);
    mte.push_back(c.mte);
    token_sar.push_back(c.token_sar);
    if (c.clip) clip.push_back(*c.clip);
  }

  Normalizer norm;
  norm.weights = weights;
  norm.lnlp = fit_range(lnlp);
  norm.mte = fit_range(mte);
  norm.token_sar = fit_range(token_sar);
  norm.clip_present = !clip.empty();
  if (norm.clip_present) {
    norm.clip = fit_range(clip);
  } else {
    norm.clip = ComponentRange{0.0, 0.0, true};
  }

  // Moments of the fused score over the fitting set itself (population).
  double mean = 0.0;
  std::vector<double> fused(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    fused[i] = fuse(dataset[i], norm).value;
    mean += fused[i];
  }
  mean /= static_cast<double>(dataset.size());
  double var = 0.0;
  for (double f : fused) var += (f - mean) * (f - mean);
  var /= static_cast<double>(dataset.size());

  norm.mu = mean;
  norm.sigma = std::sqrt(var);
  return norm;
}

FusionResult fuse(const ComponentScores& components, const Normalizer& norm) {
  FusionResult result;

  const double n_lnlp = normalize_component(components.lnlp, norm.lnlp, &result.clamped);
  const double n_mte = normalize_component(components.mte, norm.mte, &result.clamped);
  const double n_sar = normalize_component(components.token_sar, norm.token_sar, &result.clamped);

  std::array<double, 4> w = norm.weights;
  double clip_uncertainty = 0.0;
  if (components.clip) {
    const double n_clip = normalize_component(*components.clip, norm.clip, &result.clamped);
    clip_uncertainty = norm.clip_direction_inverted ? 1.0 - n_clip : n_clip;
  } else if (w[3] > 0.0) {
    // Text-only input: spread the clip weight across the text components.
    const double text_weight = w[0] + w[1] + w[2];
    if (text_weight <= 0.0) {
      throw ValidationError(
          "fuse: clip score absent but clip carries all the weight; nothing to redistribute");
    }
    const double scale = 1.0 / text_weight;
    w[0] *= scale;
    w[1] *= scale;
    w[2] *= scale;
    w[3] = 0.0;
    result.clip_redistributed = true;
  }

  result.value = w[0] * n_lnlp + w[1] * n_mte + w[2] * n_sar + w[3] * clip_uncertainty;
  result.value = std::clamp(result.value, 0.0, 1.0);
  return result;
}

double u_final(const ComponentScores& components, const Normalizer& norm) {
  return fuse(components, norm).value;
}

std::array<double, 6> bucket_boundaries(const Normalizer& norm) {
  std::array<double, 6> b{0.0,
                          norm.mu - norm.sigma,
                          norm.mu + norm.sigma,
                          norm.mu + 2.0 * norm.sigma,
                          norm.mu + 3.0 * norm.sigma,
                          1.0};
  double prev = 0.0;
  for (int i = 1; i <= 4; ++i) {
    b[i] = std::clamp(b[i], prev, 1.0);
    prev = b[i];
  }
  return b;
}

int bucketize(double u, const Normalizer& norm) {
  const double clamped = std::clamp(u, 0.0, 1.0);
  const std::array<double, 6> b = bucket_boundaries(norm);
  for (int i = 1; i <= 4; ++i) {
    if (clamped < b[i]) return 6 - i;
  }
  return 1;
}

double level_to_value(int level) {
  if (level < 1 || level > 5) {
    throw ValidationError("level must be in 1..5, got " + std::to_string(level));
  }
  return static_cast<double>(level - 1) / 4.0;
}

ComponentScores component_scores(const SentenceSpan& sentence, const std::string& question,
                                 const std::optional<EmbeddingRef>& image_ref,
                                 const SentenceScorer& scorer, const EmbeddingStore& store) {
  ComponentScores c;
  c.lnlp = u_lnlp(sentence);
  c.mte = u_mte(sentence);
  c.token_sar = u_token_sar(sentence, token_relevance(sentence, question, scorer).weights);
  if (image_ref && sentence.embedding_ref) {
    c.clip = u_clip(store, *image_ref, *sentence.embedding_ref);
  }
  return c;
}

ConfidenceRecord score_sentence(const SentenceSpan& sentence, const std::string& question,
                                const std::optional<EmbeddingRef>& image_ref,
                                const SentenceScorer& scorer, const EmbeddingStore& store,
                                const Normalizer& norm) {
  ConfidenceRecord record;
  record.sentence_index = sentence.index;
  record.components = component_scores(sentence, question, image_ref, scorer, store);
  record.u_final = u_final(record.components, norm);
  record.level = bucketize(record.u_final, norm);
  record.iv = level_to_value(record.level);
  return record;
}

std::vector<ConfidenceRecord> score_trace(const InferenceTrace& trace,
                                          const SentenceScorer& scorer,
                                          const EmbeddingStore& store, const Normalizer& norm) {
  std::vector<ConfidenceRecord> records;
  records.reserve(trace.sentences.size());
  for (const SentenceSpan& sentence : trace.sentences) {
    records.push_back(
        score_sentence(sentence, trace.question, trace.image_embedding_ref, scorer, store, norm));
  }
  return records;
}

}  // namespace stepconf
