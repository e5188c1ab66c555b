#pragma once

// Tokenized corpus ingestion: vocabulary construction, OOV mapping and
// sentence framing.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "snm/error.hpp"

namespace snm {

using WordId = std::uint32_t;

inline constexpr std::string_view kSentenceBegin = "<S>";
inline constexpr std::string_view kSentenceEnd = "</S>";
inline constexpr std::string_view kUnknown = "<UNK>";

/// Word <-> id map. Ids are dense; the three specials always occupy ids 0..2
/// and the remaining words follow in byte-lexicographic order.
class Vocabulary {
 public:
  static constexpr WordId kBos = 0;
  static constexpr WordId kEos = 1;
  static constexpr WordId kUnk = 2;

  Vocabulary() : Vocabulary(std::vector<std::string>{}, 1) {}

  /// `words` holds the non-special words; they are sorted and deduplicated.
  Vocabulary(std::vector<std::string> words, int min_count) : min_count_(min_count) {
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    words_.reserve(words.size() + 3);
    words_.emplace_back(kSentenceBegin);
    words_.emplace_back(kSentenceEnd);
    words_.emplace_back(kUnknown);
    for (auto& w : words) {
      if (w == kSentenceBegin || w == kSentenceEnd || w == kUnknown) continue;
      words_.push_back(std::move(w));
    }
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<WordId>(i));
  }

  std::size_t size() const noexcept { return words_.size(); }
  int min_count() const noexcept { return min_count_; }
  const std::vector<std::string>& words() const noexcept { return words_; }

  const std::string& word(WordId id) const {
    if (id >= words_.size()) throw DataError("word id " + std::to_string(id) + " out of range");
    return words_[id];
  }

  std::optional<WordId> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Id of `token`, or the `<UNK>` id for out-of-vocabulary tokens.
  WordId lookup(std::string_view token) const { return find(token).value_or(kUnk); }

  bool contains(std::string_view token) const { return find(token).has_value(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> index_;
  int min_count_ = 1;
};

inline bool is_special(std::string_view token) {
  return token == kSentenceBegin || token == kSentenceEnd || token == kUnknown;
}

/// Whitespace tokenization.
inline std::vector<std::string> split_tokens(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; };
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Token counter; counting can be sharded and merged.
class TokenCounter {
 public:
  void add(std::string_view token, std::uint64_t n = 1) {
    if (is_special(token)) return;
    counts_[std::string(token)] += n;
  }

  void add_line(std::string_view line) {
    for (const auto& t : split_tokens(line)) add(t);
  }

  void add_stream(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) add_line(line);
  }

  void merge(const TokenCounter& other) {
    for (const auto& [w, c] : other.counts_) counts_[w] += c;
  }

  const std::map<std::string, std::uint64_t>& counts() const noexcept { return counts_; }

  Vocabulary finish(int min_count) const {
    if (min_count < 1) throw UsageError("min_count must be >= 1");
    std::vector<std::string> kept;
    for (const auto& [w, c] : counts_)
      if (c >= static_cast<std::uint64_t>(min_count)) kept.push_back(w);
    return Vocabulary(std::move(kept), min_count);
  }

 private:
  std::map<std::string, std::uint64_t> counts_;
};

/// Vocabulary of every token with count >= min_count, plus the specials.
inline Vocabulary build_vocab(std::span<const std::string> tokens, int min_count) {
  TokenCounter counter;
  for (const auto& t : tokens) counter.add(t);
  return counter.finish(min_count);
}

/// Maps tokens to ids and frames the result with <S> ... </S>. A leading <S>
/// or trailing </S> already present is kept rather than duplicated; an <S>
/// anywhere else maps to <UNK>.
inline std::vector<WordId> map_tokens(std::span<const std::string> raw, const Vocabulary& vocab) {
  std::vector<WordId> out;
  out.reserve(raw.size() + 2);
  out.push_back(Vocabulary::kBos);
  std::size_t begin = 0;
  std::size_t end = raw.size();
  if (begin < end && raw[begin] == kSentenceBegin) ++begin;
  bool framed_end = end > begin && raw[end - 1] == kSentenceEnd;
  if (framed_end) --end;
  for (std::size_t i = begin; i < end; ++i) {
    WordId id = vocab.lookup(raw[i]);
    out.push_back(id == Vocabulary::kBos ? Vocabulary::kUnk : id);
  }
  out.push_back(Vocabulary::kEos);
  return out;
}

inline std::vector<WordId> map_line(std::string_view line, const Vocabulary& vocab) {
  auto tokens = split_tokens(line);
  return map_tokens(tokens, vocab);
}

/// Out-of-vocabulary accounting over predicted tokens (everything but <S>).
struct OovStats {
  std::uint64_t predicted = 0;
  std::uint64_t unknown = 0;

  void add(std::span<const WordId> framed) {
    for (std::size_t i = 1; i < framed.size(); ++i) {
      ++predicted;
      if (framed[i] == Vocabulary::kUnk) ++unknown;
    }
  }

  double rate() const { return predicted == 0 ? 0.0 : static_cast<double>(unknown) / static_cast<double>(predicted); }
};

/// Sentences of one training source. `tag` is empty for untagged data.
struct TaggedCorpus {
  std::vector<std::vector<WordId>> sentences;
  std::string tag;
  OovStats oov;
};

inline TaggedCorpus read_corpus(std::istream& in, const Vocabulary& vocab, std::string tag = {}) {
  TaggedCorpus corpus;
  corpus.tag = std::move(tag);
  std::string line;
  while (std::getline(in, line)) {
    corpus.sentences.push_back(map_line(line, vocab));
    corpus.oov.add(corpus.sentences.back());
  }
  return corpus;
}

// Vocabulary file: one token per line, line number (0-based) = id.

inline void write_vocab(std::ostream& out, const Vocabulary& vocab) {
  for (const auto& w : vocab.words()) out << w << '\n';
}

inline Vocabulary read_vocab(std::istream& in) {
  std::vector<std::string> words;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || split_tokens(line).size() != 1 || split_tokens(line).front() != line)
      throw ParseError("vocabulary entry must be a single token", lineno);
    words.push_back(line);
  }
  if (words.size() < 3 || words[0] != kSentenceBegin || words[1] != kSentenceEnd || words[2] != kUnknown)
    throw DataError("vocabulary file must start with <S>, </S>, <UNK>");
  std::vector<std::string> rest(words.begin() + 3, words.end());
  if (!std::is_sorted(rest.begin(), rest.end()) ||
      std::adjacent_find(rest.begin(), rest.end()) != rest.end())
    throw DataError("vocabulary words after the specials must be unique and sorted");
  return Vocabulary(std::move(rest), 0);
}

}  // namespace snm
