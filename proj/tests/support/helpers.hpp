#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "haf/model.hpp"

namespace haf::testing {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(HAF_FIXTURE_DIR) / rel; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "haf") {
    static std::atomic<unsigned> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

/// Splits text into tokens of leading whitespace plus a run of non-space
/// bytes; trailing whitespace joins the last token.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i;
    while (j < text.size() && (text[j] == ' ' || text[j] == '\n' || text[j] == '\t')) ++j;
    while (j < text.size() && !(text[j] == ' ' || text[j] == '\n' || text[j] == '\t')) ++j;
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Like word_tokens, but runs of '*' become tokens of their own, as
/// subword tokenizers emit markdown emphasis.
inline std::vector<std::string> subword_tokens(std::string_view text) {
  std::vector<std::string> out;
  auto space = [](char c) { return c == ' ' || c == '\n' || c == '\t'; };
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i;
    while (j < text.size() && space(text[j])) ++j;
    if (j < text.size() && text[j] == '*') {
      while (j < text.size() && text[j] == '*') ++j;
    } else {
      while (j < text.size() && !space(text[j]) && text[j] != '*') ++j;
    }
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Trace over `text` with every token at the same logprob.
inline GenerationTrace make_trace(std::string_view text, double logprob = -0.1, bool subword = false) {
  GenerationTrace t;
  t.full_text = std::string(text);
  for (auto& w : subword ? subword_tokens(text) : word_tokens(text)) t.tokens.push_back({std::move(w), logprob, false});
  return t;
}

inline std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace haf::testing
