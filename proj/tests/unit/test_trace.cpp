#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "stepconf/error.hpp"
#include "stepconf/trace.hpp"

using namespace stepconf;
using testutil::TempDir;

namespace {

InferenceTrace sample_trace(const std::string& id) {
  InferenceTrace trace;
  trace.id = id;
  trace.question = "What instrument is shown?";
  trace.image_embedding_ref = EmbeddingRef{"img_" + id, {}};
  SentenceSpan sentence = testutil::make_sentence(0, "The image shows a red drum.", -0.2, 0.3);
  sentence.embedding_ref = EmbeddingRef{"", {0.5f, 0.25f, -0.125f}};
  trace.sentences.push_back(sentence);
  trace.final_answer = "a drum";
  return trace;
}

InferenceTrace random_trace(std::mt19937_64& rng, const std::string& id) {
  std::uniform_real_distribution<double> logprob(-4.0, 0.0);
  std::uniform_real_distribution<double> entropy(0.0, 2.5);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> n_sentences(1, 4);
  std::uniform_int_distribution<int> n_tokens(1, 6);

  InferenceTrace trace;
  trace.id = id;
  trace.question = testutil::random_words(rng);
  if (coin(rng)) trace.image_embedding_ref = EmbeddingRef{"img", {}};
  const int T = n_sentences(rng);
  for (int t = 0; t < T; ++t) {
    SentenceSpan sentence;
    sentence.index = t;
    sentence.text = testutil::random_words(rng);
    const int L = n_tokens(rng);
    for (int l = 0; l < L; ++l) {
      TokenRecord token;
      token.text = testutil::random_words(rng, 1, 1);
      token.logprob = logprob(rng);
      if (coin(rng)) token.entropy = entropy(rng);
      if (coin(rng)) {
        token.alt_logprobs = std::vector<std::pair<std::string, double>>{
            {"a", std::log(0.6)}, {"b", std::log(0.4)}};
      }
      sentence.tokens.push_back(token);
    }
    if (coin(rng)) {
      sentence.embedding_ref = coin(rng) ? EmbeddingRef{"sent", {}}
                                         : EmbeddingRef{"", {0.25f, 0.75f}};
    }
    if (coin(rng)) {
      std::vector<double> weights(sentence.tokens.size(), 0.0);
      double sum = 0.0;
      for (double& w : weights) {
        w = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
        sum += w;
      }
      for (double& w : weights) w /= sum;
      sentence.relevance_weights = weights;
    }
    trace.sentences.push_back(sentence);
  }
  if (coin(rng)) trace.final_answer = testutil::random_words(rng);
  return trace;
}

}  // namespace

TEST_SUITE("trace") {

TEST_CASE("reading a file with two valid lines returns both traces") {
  TempDir dir;
  const std::string path = dir.file("traces.jsonl");
  write_traces(path, {sample_trace("t1"), sample_trace("t2")});

  const auto traces = read_traces(path);
  REQUIRE(traces.size() == 2);
  CHECK(traces[0] == sample_trace("t1"));
  CHECK(traces[1] == sample_trace("t2"));
}

TEST_CASE("positive logprob fails validation citing the invariant and trace id") {
  TempDir dir;
  InferenceTrace trace = sample_trace("t1");
  trace.sentences[0].tokens[0].logprob = 0.5;

  const std::string path = dir.file("traces.jsonl");
  std::ofstream out(path);
  out << nlohmann::json(trace).dump() << '\n';
  out.close();

  try {
    read_traces(path);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("logprob <= 0") != std::string::npos);
    CHECK(what.find("t1") != std::string::npos);
  }
}

TEST_CASE("empty file gives an empty list") {
  TempDir dir;
  const std::string path = dir.file("empty.jsonl");
  std::ofstream(path).close();
  CHECK(read_traces(path).empty());
}

TEST_CASE("malformed JSON names the line number") {
  TempDir dir;
  const std::string path = dir.file("bad.jsonl");
  std::ofstream out(path);
  out << nlohmann::json(sample_trace("t1")).dump() << '\n';
  out << "{not json\n";
  out.close();

  try {
    read_traces(path);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("missing file is an IO error") {
  CHECK_THROWS_AS(read_traces("/nonexistent/traces.jsonl"), IoError);
}

TEST_CASE("invariants are checked on read, never repaired") {
  TempDir dir;
  auto write_raw = [&](const nlohmann::json& j) {
    const std::string path = dir.file("raw.jsonl");
    std::ofstream out(path);
    out << j.dump() << '\n';
    out.close();
    return path;
  };

  SUBCASE("non-contiguous sentence indices") {
    InferenceTrace trace = sample_trace("t1");
    trace.sentences[0].index = 3;
    CHECK_THROWS_WITH_AS(read_traces(write_raw(nlohmann::json(trace))),
                         doctest::Contains("contiguous"), ValidationError);
  }
  SUBCASE("empty token list") {
    nlohmann::json j = nlohmann::json(sample_trace("t1"));
    j["sentences"][0]["tokens"] = nlohmann::json::array();
    CHECK_THROWS_WITH_AS(read_traces(write_raw(j)), doctest::Contains("tokens"),
                         ValidationError);
  }
  SUBCASE("negative entropy") {
    InferenceTrace trace = sample_trace("t1");
    trace.sentences[0].tokens[0].entropy = -0.1;
    CHECK_THROWS_WITH_AS(read_traces(write_raw(nlohmann::json(trace))),
                         doctest::Contains("entropy"), ValidationError);
  }
  SUBCASE("alt_logprobs implying probability mass above one") {
    InferenceTrace trace = sample_trace("t1");
    trace.sentences[0].tokens[0].alt_logprobs =
        std::vector<std::pair<std::string, double>>{{"a", -0.01}, {"b", -0.01}};
    CHECK_THROWS_WITH_AS(read_traces(write_raw(nlohmann::json(trace))),
                         doctest::Contains("alt_logprobs"), ValidationError);
  }
  SUBCASE("relevance weights must match token count") {
    InferenceTrace trace = sample_trace("t1");
    trace.sentences[0].relevance_weights = std::vector<double>{1.0};
    CHECK_THROWS_WITH_AS(read_traces(write_raw(nlohmann::json(trace))),
                         doctest::Contains("relevance_weights"), ValidationError);
  }
  SUBCASE("relevance weights must sum to one") {
    InferenceTrace trace = sample_trace("t1");
    trace.sentences[0].relevance_weights =
        std::vector<double>(trace.sentences[0].tokens.size(), 0.4);
    CHECK_THROWS_AS(read_traces(write_raw(nlohmann::json(trace))), ValidationError);
  }
}

TEST_CASE("write_annotated round-trips and validates before writing") {
  TempDir dir;
  AnnotatedResponse response;
  response.trace_id = "t1";
  response.steps = {
      {"The image shows a red drum.", "with total certainty.", 5, 1.0},
      {"The drum has a wooden shell.", "but I'm not sure.", 2, 0.25},
      {"So the instrument is a drum.", "and this seems trustworthy.", 4, 0.75},
  };

  SUBCASE("write then read three items gives identical items") {
    const std::string path = dir.file("annotated.jsonl");
    write_annotated(path, {response, response, response});
    const auto back = read_annotated(path);
    REQUIRE(back.size() == 3);
    for (const auto& item : back) CHECK(item == response);
  }

  SUBCASE("empty list writes an empty file") {
    const std::string path = dir.file("annotated.jsonl");
    write_annotated(path, {});
    std::ifstream in(path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content.empty());
  }

  SUBCASE("level 6 is rejected before anything is written") {
    response.steps[0].level = 6;
    const std::string path = dir.file("annotated.jsonl");
    CHECK_THROWS_WITH_AS(write_annotated(path, {response}), doctest::Contains("level"),
                         ValidationError);
    CHECK_FALSE(std::filesystem::exists(path));
  }

  SUBCASE("expressed confidence outside the unit interval is rejected") {
    response.steps[1].expressed_conf = 1.5;
    CHECK_THROWS_AS(write_annotated(dir.file("a.jsonl"), {response}), ValidationError);
  }
}

TEST_CASE("round-trip is field-exact for random valid traces") {
  TempDir dir;
  std::mt19937_64 rng(42);
  std::vector<InferenceTrace> traces;
  for (int i = 0; i < 40; ++i) {
    traces.push_back(random_trace(rng, "t" + std::to_string(i)));
  }
  const std::string path = dir.file("random.jsonl");
  write_traces(path, traces);
  const auto back = read_traces(path);
  REQUIRE(back.size() == traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    CHECK(back[i] == traces[i]);
  }
}

TEST_CASE("reference chains validate and round-trip") {
  TempDir dir;
  ReferenceChain chain;
  chain.id = "q1";
  chain.perception = {"The image shows a red drum."};
  chain.reasoning = {"Drums are percussion instruments.", "So the answer is a drum."};

  const std::string path = dir.file("refs.jsonl");
  write_reference_chains(path, {chain});
  const auto back = read_reference_chains(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0] == chain);
  CHECK(back[0].all_sentences().size() == 3);

  ReferenceChain empty_chain;
  empty_chain.id = "q2";
  CHECK_THROWS_AS(write_reference_chains(dir.file("bad.jsonl"), {empty_chain}), ValidationError);
}

}  // TEST_SUITE
