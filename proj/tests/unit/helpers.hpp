#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "stepconf/trace.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("stepconf_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline stepconf::TokenRecord make_token(const std::string& text, double logprob,
                                        double entropy) {
  stepconf::TokenRecord token;
  token.text = text;
  token.logprob = logprob;
  token.entropy = entropy;
  return token;
}

// One token per whitespace word, all with the given logprob and entropy.
inline stepconf::SentenceSpan make_sentence(int index, const std::string& text, double logprob,
                                            double entropy) {
  stepconf::SentenceSpan sentence;
  sentence.index = index;
  sentence.text = text;
  std::istringstream words(text);
  std::string word;
  while (words >> word) {
    sentence.tokens.push_back(make_token(word, logprob, entropy));
  }
  return sentence;
}

inline std::string random_words(std::mt19937_64& rng, int min_words = 1, int max_words = 8) {
  static const std::vector<std::string> vocab = {
      "red",   "drum",  "sky",   "cat",  "tower", "river", "green", "ball",
      "stone", "light", "cloud", "road", "sound", "glass", "field", "wing"};
  std::uniform_int_distribution<int> count(min_words, max_words);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  const int n = count(rng);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (!out.empty()) out.push_back(' ');
    out += vocab[pick(rng)];
  }
  return out;
}

}  // namespace testutil
