#include "stepconf/scorer.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "stepconf/error.hpp"

namespace stepconf {

namespace {

constexpr char kSidecarMagic[8] = {'S', 'T', 'E', 'P', 'E', 'M', 'B', '1'};

std::map<std::string, int> count_tokens(const std::string& text) {
  std::map<std::string, int> counts;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      ++counts[current];
      current.clear();
    }
  }
  if (!current.empty()) ++counts[current];
  return counts;
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                   static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ValidationError("cosine: dimension mismatch (" + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()) + ")");
  }
  double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    norm_a += static_cast<double>(a[i]) * a[i];
    norm_b += static_cast<double>(b[i]) * b[i];
  }
  if (norm_a == 0.0 || norm_b == 0.0) {
    throw ValidationError("cosine: zero vector");
  }
  return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

double bow_score(const std::string& a, const std::string& b) {
  const auto ca = count_tokens(a);
  const auto cb = count_tokens(b);
  if (ca.empty() && cb.empty()) return 0.0;
  if (ca.empty() || cb.empty()) return 0.0;
  double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
  for (const auto& [tok, n] : ca) {
    norm_a += static_cast<double>(n) * n;
    if (auto it = cb.find(tok); it != cb.end()) {
      dot += static_cast<double>(n) * it->second;
    }
  }
  for (const auto& [tok, n] : cb) norm_b += static_cast<double>(n) * n;
  const double value = dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
  return std::clamp(value, 0.0, 1.0);
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding sidecar: " + path);

  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kSidecarMagic)) {
    throw ValidationError("embedding sidecar " + path + ": bad magic, expected STEPEMB1");
  }
  const std::uint32_t header_len = read_u32_le(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), header_len);
  if (!in) throw ValidationError("embedding sidecar " + path + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("embedding sidecar " + path + ": malformed header: " + e.what());
  }

  EmbeddingStore store;
  const std::size_t dim = header.at("dim").get<std::size_t>();
  const std::size_t count = header.at("count").get<std::size_t>();
  if (dim < 1) throw ValidationError("embedding sidecar " + path + ": dim must be >= 1");

  std::vector<float> flat(count * dim);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const std::uint32_t bits = read_u32_le(in);
    flat[i] = std::bit_cast<float>(bits);
  }
  if (!in) throw ValidationError("embedding sidecar " + path + ": truncated vector data");

  for (const auto& [ref, slot_json] : header.at("refs").items()) {
    const std::size_t slot = slot_json.get<std::size_t>();
    if (slot >= count) {
      throw ValidationError("embedding sidecar " + path + ": ref \"" + ref +
                            "\" points at slot " + std::to_string(slot) + " >= count");
    }
    std::vector<float> values(flat.begin() + slot * dim, flat.begin() + (slot + 1) * dim);
    store.insert(ref, std::move(values));
  }
  return store;
}

void EmbeddingStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open embedding sidecar for writing: " + path);

  nlohmann::json refs = nlohmann::json::object();
  std::size_t slot = 0;
  for (const auto& [ref, _] : vectors_) refs[ref] = slot++;
  const nlohmann::json header = {
      {"dim", dim_}, {"count", vectors_.size()}, {"refs", std::move(refs)}};
  const std::string header_text = header.dump();

  out.write(kSidecarMagic, 8);
  write_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& [_, values] : vectors_) {
    for (float x : values) {
      write_u32_le(out, std::bit_cast<std::uint32_t>(x));
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

void EmbeddingStore::insert(const std::string& ref, std::vector<float> values) {
  if (values.empty()) {
    throw ValidationError("embedding \"" + ref + "\" is empty");
  }
  for (float x : values) {
    if (!std::isfinite(x)) {
      throw ValidationError("embedding \"" + ref + "\" contains a non-finite value");
    }
  }
  if (dim_ == 0) {
    dim_ = values.size();
  } else if (values.size() != dim_) {
    throw ValidationError("embedding \"" + ref + "\" has dimension " +
                          std::to_string(values.size()) + ", store dimension is " +
                          std::to_string(dim_));
  }
  vectors_[ref] = std::move(values);
}

std::span<const float> EmbeddingStore::get(const std::string& ref) const {
  auto it = vectors_.find(ref);
  if (it == vectors_.end()) {
    throw ValidationError("missing embedding ref \"" + ref + "\"");
  }
  return it->second;
}

std::span<const float> EmbeddingStore::resolve(const EmbeddingRef& ref) const {
  if (ref.is_inline()) return ref.inline_values;
  return get(ref.name);
}

double embedding_score(const EmbeddingStore& store, const EmbeddingRef& a,
                       const EmbeddingRef& b) {
  return std::max(cosine(store.resolve(a), store.resolve(b)), 0.0);
}

double BowScorer::score(const std::string& a, const std::string& b) const {
  if (!a.empty() && a == b) return 1.0;  // exact self-match, no float residue
  return bow_score(a, b);
}

double EmbeddingScorer::score(const std::string& a, const std::string& b) const {
  if (!a.empty() && a == b) return 1.0;
  return std::max(cosine(store_.get(a), store_.get(b)), 0.0);
}

std::unique_ptr<SentenceScorer> make_scorer(const std::string& selection) {
  if (selection == "bow") return std::make_unique<BowScorer>();
  if (selection.rfind("embed:", 0) == 0) {
    const std::string path = selection.substr(6);
    if (path.empty()) {
      throw ValidationError("scorer selection \"embed:\" is missing a sidecar path");
    }
    return std::make_unique<EmbeddingScorer>(EmbeddingStore::load(path));
  }
  throw ValidationError("unknown scorer \"" + selection + "\", expected bow or embed:<path>");
}

}  // namespace stepconf
