#pragma once

// Feature extraction: the n-gram / skip-n-gram configuration grammar, the
// Feature and Event types, and the canonical feature string form.
//
// Feature strings:
//   []                         empty feature (order 0, present in every event)
//   [w1 ... wn]                n-gram context, oldest word first
//   [r1 .. skip-S a1 .. aA]    skip-gram; S is the skip length or '*' when tied
//   tag:[...]                  any of the above, corpus-tagged
// Words beginning with "skip-" or '\' are written with a leading '\'.

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snm/corpus.hpp"
#include "snm/error.hpp"
#include "snm/hash.hpp"

namespace snm {

// ---------------------------------------------------------------------------
// Configuration

struct NGramBlock {
  int min_n = 0;
  int max_n = 0;
  friend bool operator==(const NGramBlock&, const NGramBlock&) = default;
};

/// One skip_ngram_extractor block. A feature (r, s, a) with r remote words,
/// s skipped words and a adjacent words is admissible when
///   min_remote_words <= r <= max_remote_words,
///   min_skip_length  <= s <= max_skip_length,
///   a >= 1 and r + a <= max_context_words.
struct SkipBlock {
  int max_context_words = 0;
  int min_remote_words = 1;
  int max_remote_words = 0;
  int min_skip_length = 1;
  int max_skip_length = 0;
  bool tie_skip_length = false;
  friend bool operator==(const SkipBlock&, const SkipBlock&) = default;
};

struct ExtractorConfig {
  std::optional<NGramBlock> ngram;
  std::vector<SkipBlock> skip_ngram;
  friend bool operator==(const ExtractorConfig&, const ExtractorConfig&) = default;
};

namespace detail {

struct ConfigToken {
  std::string text;
  std::size_t line;
};

inline std::vector<ConfigToken> tokenize_config(std::string_view text) {
  std::vector<ConfigToken> out;
  std::size_t line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
    } else if (c == '/' && i + 1 < text.size() && text[i + 1] == '/') {
      while (i < text.size() && text[i] != '\n') ++i;
    } else if (c == '{' || c == '}' || c == ':') {
      out.push_back({std::string(1, c), line});
      ++i;
    } else {
      std::size_t j = i;
      while (j < text.size() && std::string_view(" \t\r\n{}:").find(text[j]) == std::string_view::npos &&
             !(text[j] == '/' && j + 1 < text.size() && text[j + 1] == '/'))
        ++j;
      out.push_back({std::string(text.substr(i, j - i)), line});
      i = j;
    }
  }
  return out;
}

inline int parse_config_int(const ConfigToken& tok, std::string_view key) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
  if (ec != std::errc{} || ptr != tok.text.data() + tok.text.size())
    throw ParseError("key '" + std::string(key) + "' expects an integer, got '" + tok.text + "'", tok.line);
  return value;
}

inline bool parse_config_bool(const ConfigToken& tok, std::string_view key) {
  if (tok.text == "true") return true;
  if (tok.text == "false") return false;
  throw ParseError("key '" + std::string(key) + "' expects true or false, got '" + tok.text + "'", tok.line);
}

}  // namespace detail

/// Parses the block grammar `name { key: value ... }` with `//` comments.
inline ExtractorConfig parse_config(std::string_view text) {
  using detail::ConfigToken;
  auto tokens = detail::tokenize_config(text);
  ExtractorConfig cfg;
  std::size_t pos = 0;
  auto expect = [&](std::string_view what, std::size_t line) -> const ConfigToken& {
    if (pos >= tokens.size()) throw ParseError("unexpected end of config, expected '" + std::string(what) + "'", line);
    return tokens[pos++];
  };

  while (pos < tokens.size()) {
    const ConfigToken& name = tokens[pos++];
    const std::size_t block_line = name.line;
    if (name.text != "ngram_extractor" && name.text != "skip_ngram_extractor")
      throw ParseError("unknown block '" + name.text + "'", name.line);
    if (const auto& open = expect("{", name.line); open.text != "{")
      throw ParseError("expected '{' after '" + name.text + "'", open.line);

    std::vector<std::pair<std::string, ConfigToken>> entries;
    while (true) {
      const ConfigToken& key = expect("}", name.line);
      if (key.text == "}") break;
      if (key.text == "{" || key.text == ":") throw ParseError("unexpected '" + key.text + "'", key.line);
      if (const auto& colon = expect(":", key.line); colon.text != ":")
        throw ParseError("expected ':' after key '" + key.text + "'", colon.line);
      const ConfigToken& value = expect("value", key.line);
      if (value.text == "{" || value.text == "}" || value.text == ":")
        throw ParseError("missing value for key '" + key.text + "'", value.line);
      for (const auto& [k, v] : entries)
        if (k == key.text) throw ParseError("duplicate key '" + key.text + "'", key.line);
      entries.emplace_back(key.text, value);
    }

    auto find = [&](std::string_view k) -> const ConfigToken* {
      for (const auto& [key, v] : entries)
        if (key == k) return &v;
      return nullptr;
    };

    if (name.text == "ngram_extractor") {
      if (cfg.ngram) throw ParseError("duplicate ngram_extractor block", block_line);
      for (const auto& [k, v] : entries)
        if (k != "min_n" && k != "max_n") throw ParseError("unknown key '" + k + "' in ngram_extractor", v.line);
      NGramBlock b;
      const ConfigToken* max_n = find("max_n");
      if (!max_n) throw ParseError("ngram_extractor requires key 'max_n'", block_line);
      b.max_n = detail::parse_config_int(*max_n, "max_n");
      if (const auto* t = find("min_n")) b.min_n = detail::parse_config_int(*t, "min_n");
      if (b.min_n < 0) throw ParseError("min_n < 0", find("min_n")->line);
      if (b.min_n > b.max_n) throw ParseError("min_n > max_n", block_line);
      cfg.ngram = b;
    } else {
      static constexpr std::string_view kKeys[] = {"max_context_words", "min_remote_words", "max_remote_words",
                                                   "min_skip_length",   "max_skip_length",  "tie_skip_length"};
      for (const auto& [k, v] : entries)
        if (std::find(std::begin(kKeys), std::end(kKeys), k) == std::end(kKeys))
          throw ParseError("unknown key '" + k + "' in skip_ngram_extractor", v.line);
      SkipBlock b;
      const ConfigToken* ctx = find("max_context_words");
      if (!ctx) throw ParseError("skip_ngram_extractor requires key 'max_context_words'", block_line);
      const ConfigToken* max_skip = find("max_skip_length");
      if (!max_skip) throw ParseError("skip_ngram_extractor requires key 'max_skip_length'", block_line);
      b.max_context_words = detail::parse_config_int(*ctx, "max_context_words");
      b.max_skip_length = detail::parse_config_int(*max_skip, "max_skip_length");
      if (const auto* t = find("min_remote_words")) b.min_remote_words = detail::parse_config_int(*t, "min_remote_words");
      b.max_remote_words = b.max_context_words - 1;
      if (const auto* t = find("max_remote_words")) b.max_remote_words = detail::parse_config_int(*t, "max_remote_words");
      if (const auto* t = find("min_skip_length")) b.min_skip_length = detail::parse_config_int(*t, "min_skip_length");
      if (const auto* t = find("tie_skip_length")) b.tie_skip_length = detail::parse_config_bool(*t, "tie_skip_length");

      if (b.min_remote_words < 0) throw ParseError("min_remote_words < 0", block_line);
      if (b.min_remote_words > b.max_remote_words) throw ParseError("min_remote_words > max_remote_words", block_line);
      if (b.min_skip_length < 1) throw ParseError("min_skip_length < 1", block_line);
      if (b.min_skip_length > b.max_skip_length) throw ParseError("min_skip_length > max_skip_length", block_line);
      if (b.max_context_words < b.min_remote_words + 1)
        throw ParseError("max_context_words < min_remote_words + 1", block_line);
      cfg.skip_ngram.push_back(b);
    }
  }
  if (!cfg.ngram && cfg.skip_ngram.empty()) throw ParseError("config defines no extractor block");
  return cfg;
}

// ---------------------------------------------------------------------------
// Features and events

enum class FeatureKind : std::uint8_t { Empty, NGram, SkipGram };

struct SkipSpec {
  std::uint32_t position = 0;               // number of remote words before the gap
  std::optional<std::uint32_t> length;      // nullopt: tied ("skip-*")
  friend auto operator<=>(const SkipSpec&, const SkipSpec&) = default;
  friend bool operator==(const SkipSpec&, const SkipSpec&) = default;
};

/// A context equivalence class: a row of the sparse matrix.
struct Feature {
  FeatureKind kind = FeatureKind::Empty;
  std::vector<WordId> words;  // context words, oldest first (remote then adjacent)
  std::optional<SkipSpec> skip;
  std::string tag;

  static Feature empty() { return {}; }

  static Feature ngram(std::vector<WordId> context) {
    if (context.empty()) return empty();
    Feature f;
    f.kind = FeatureKind::NGram;
    f.words = std::move(context);
    return f;
  }

  static Feature skipgram(std::span<const WordId> remote, std::optional<std::uint32_t> length,
                          std::span<const WordId> adjacent) {
    Feature f;
    f.kind = FeatureKind::SkipGram;
    f.words.assign(remote.begin(), remote.end());
    f.words.insert(f.words.end(), adjacent.begin(), adjacent.end());
    f.skip = SkipSpec{static_cast<std::uint32_t>(remote.size()), length};
    return f;
  }

  std::size_t remote_words() const { return skip ? skip->position : 0; }
  std::size_t adjacent_words() const { return skip ? words.size() - skip->position : words.size(); }

  /// "n-gram" for n-gram features (n = context length), "skip-(r,s,a)" for
  /// skip-grams. The tag does not participate.
  std::string type() const {
    if (kind != FeatureKind::SkipGram) return std::to_string(words.size()) + "-gram";
    std::string s = skip->length ? std::to_string(*skip->length) : std::string("*");
    return "skip-(" + std::to_string(remote_words()) + "," + s + "," + std::to_string(adjacent_words()) + ")";
  }

  Feature with_tag(std::string t) const {
    Feature f = *this;
    f.tag = std::move(t);
    return f;
  }

  friend auto operator<=>(const Feature&, const Feature&) = default;
  friend bool operator==(const Feature&, const Feature&) = default;
};

struct FeatureHash {
  std::size_t operator()(const Feature& f) const noexcept {
    std::uint64_t h = hash_integer(static_cast<std::int64_t>(f.kind));
    for (WordId w : f.words) h = hash_integer(w, h);
    if (f.skip) {
      h = hash_integer(f.skip->position, h);
      h = hash_integer(f.skip->length ? static_cast<std::int64_t>(*f.skip->length) : -1, h);
    }
    if (!f.tag.empty()) h = conjoin(h, fingerprint(f.tag));
    return static_cast<std::size_t>(conjoin(h, f.words.size()));
  }
};

/// One prediction: a target word and the features of its left context.
struct Event {
  std::vector<Feature> features;
  WordId target = Vocabulary::kEos;
  friend bool operator==(const Event&, const Event&) = default;
};

inline void validate_tag(std::string_view tag) {
  if (tag.empty()) throw UsageError("corpus tag must not be empty");
  for (char c : tag)
    if (c == '[' || c == ']' || c == ':' || c == ' ' || c == '\t' || c == '\n' || c == '\r')
      throw UsageError("corpus tag '" + std::string(tag) + "' contains a reserved character");
}

/// (r, s, a) triple of a skip-gram.
struct SkipTuple {
  int remote;
  int skip;
  int adjacent;
  friend bool operator==(const SkipTuple&, const SkipTuple&) = default;
};

/// Every (r, s, a) admitted by `block` whose words fit in a left context of
/// `context_length` tokens (counting <S>). Ordered by r, then s, then a.
inline std::vector<SkipTuple> admissible_skip_tuples(const SkipBlock& block, int context_length) {
  std::vector<SkipTuple> out;
  for (int r = block.min_remote_words; r <= block.max_remote_words; ++r) {
    for (int s = block.min_skip_length; s <= block.max_skip_length; ++s) {
      for (int a = 1; r + a <= block.max_context_words; ++a) {
        if (r + s + a > context_length) break;
        out.push_back({r, s, a});
      }
      if (r + s + 1 > context_length) break;
    }
  }
  return out;
}

inline void check_framed(std::span<const WordId> sentence) {
  if (sentence.size() < 2 || sentence.front() != Vocabulary::kBos || sentence.back() != Vocabulary::kEos)
    throw DataError("sentence must be framed by <S> ... </S>");
  if (std::find(sentence.begin() + 1, sentence.end(), Vocabulary::kBos) != sentence.end())
    throw DataError("<S> may only appear at the start of a sentence");
}

/// One event per position k >= 1 of a framed sentence, in sentence order.
/// N-gram features come first (ascending order), then skip-grams block by
/// block; duplicates (possible with tied skips) are emitted once.
inline std::vector<Event> extract_events(std::span<const WordId> sentence, const ExtractorConfig& config,
                                         std::string_view tag = {}) {
  check_framed(sentence);
  if (!tag.empty()) validate_tag(tag);
  std::vector<Event> events;
  events.reserve(sentence.size() - 1);
  for (std::size_t k = 1; k < sentence.size(); ++k) {
    Event e;
    e.target = sentence[k];
    const int context = static_cast<int>(k);
    if (config.ngram) {
      const int top = std::min(config.ngram->max_n, context);
      for (int n = config.ngram->min_n; n <= top; ++n)
        e.features.push_back(Feature::ngram({sentence.begin() + (context - n), sentence.begin() + context}));
    }
    const std::size_t first_skip = e.features.size();
    for (const auto& block : config.skip_ngram) {
      for (const auto& [r, s, a] : admissible_skip_tuples(block, context)) {
        auto adj_begin = sentence.begin() + (context - a);
        auto rem_begin = sentence.begin() + (context - a - s - r);
        std::optional<std::uint32_t> length;
        if (!block.tie_skip_length) length = static_cast<std::uint32_t>(s);
        Feature f = Feature::skipgram({rem_begin, rem_begin + r}, length, {adj_begin, adj_begin + a});
        if (std::find(e.features.begin() + first_skip, e.features.end(), f) == e.features.end())
          e.features.push_back(std::move(f));
      }
    }
    if (!tag.empty())
      for (auto& f : e.features) f.tag = tag;
    events.push_back(std::move(e));
  }
  return events;
}

/// Replaces every feature f by tag:f for each tag, feature-major.
inline Event expand_tags(const Event& event, std::span<const std::string> tags) {
  if (tags.empty()) throw UsageError("tag expansion needs at least one tag");
  for (const auto& t : tags) validate_tag(t);
  Event out;
  out.target = event.target;
  out.features.reserve(event.features.size() * tags.size());
  for (const auto& f : event.features) {
    if (!f.tag.empty()) throw DataError("feature is already tagged with '" + f.tag + "'");
    for (const auto& t : tags) out.features.push_back(f.with_tag(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// String form

namespace detail {

inline bool needs_escape(std::string_view w) { return w.starts_with("skip-") || w.starts_with('\\'); }

inline bool is_skip_token(std::string_view t) {
  if (!t.starts_with("skip-") || t.size() == 5) return false;
  auto rest = t.substr(5);
  if (rest == "*") return true;
  return std::all_of(rest.begin(), rest.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace detail

inline std::string render_feature(const Feature& f, const Vocabulary& vocab) {
  std::string out;
  if (!f.tag.empty()) {
    out += f.tag;
    out += ':';
  }
  out += '[';
  bool first = true;
  auto put = [&](std::string_view token) {
    if (!first) out += ' ';
    out += token;
    first = false;
  };
  for (std::size_t i = 0; i <= f.words.size(); ++i) {
    if (f.skip && f.skip->position == i)
      put(f.skip->length ? "skip-" + std::to_string(*f.skip->length) : std::string("skip-*"));
    if (i == f.words.size()) break;
    const std::string& w = vocab.word(f.words[i]);
    put(detail::needs_escape(w) ? "\\" + w : w);
  }
  out += ']';
  return out;
}

inline Feature parse_feature(std::string_view s, const Vocabulary& vocab) {
  const std::string original(s);
  auto fail = [&](std::string_view why) -> ParseError {
    return ParseError("malformed feature '" + original + "': " + std::string(why));
  };
  const auto open = s.find('[');
  if (open == std::string_view::npos || s.empty() || s.back() != ']') throw fail("expected [...]");
  Feature f;
  if (open > 0) {
    if (s[open - 1] != ':' || open == 1) throw fail("bad tag prefix");
    f.tag = std::string(s.substr(0, open - 1));
    try {
      validate_tag(f.tag);
    } catch (const UsageError& e) {
      throw fail(e.what());
    }
  }
  const auto inner = s.substr(open + 1, s.size() - open - 2);
  for (const auto& tok : split_tokens(inner)) {
    if (detail::is_skip_token(tok)) {
      if (f.skip) throw fail("more than one skip marker");
      SkipSpec spec;
      spec.position = static_cast<std::uint32_t>(f.words.size());
      if (tok != "skip-*") {
        std::uint32_t len = 0;
        auto [p, ec] = std::from_chars(tok.data() + 5, tok.data() + tok.size(), len);
        if (ec != std::errc{} || len == 0) throw fail("bad skip length");
        spec.length = len;
      }
      f.skip = spec;
      continue;
    }
    std::string_view word = tok;
    if (word.starts_with('\\')) word.remove_prefix(1);
    auto id = vocab.find(word);
    if (!id) throw fail("unknown word '" + std::string(word) + "'");
    f.words.push_back(*id);
  }
  if (f.skip) {
    f.kind = FeatureKind::SkipGram;
    if (f.skip->position == f.words.size()) throw fail("skip-gram needs adjacent words");
  } else {
    f.kind = f.words.empty() ? FeatureKind::Empty : FeatureKind::NGram;
  }
  if (render_feature(f, vocab) != original) throw fail("not in canonical form");
  return f;
}

}  // namespace snm
