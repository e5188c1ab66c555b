#pragma once

// Link counts C_fw, feature counts C_f*, relative frequencies c(w|f), and the
// sorted count file used for desk-scale merge joins.
//
// Count file:
//   #snm-counts v1
//   <feature>\t<word>\t<count>
// rows sorted by (feature string, word string), byte-lexicographically.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "snm/corpus.hpp"
#include "snm/error.hpp"
#include "snm/extraction.hpp"

namespace snm {

inline constexpr std::string_view kCountsHeader = "#snm-counts v1";

using FeatureSet = std::unordered_set<Feature, FeatureHash>;

/// One matrix row: links sorted by word id; `total` is always the row sum.
struct CountRow {
  std::uint64_t total = 0;
  std::vector<std::pair<WordId, std::uint64_t>> links;

  std::uint64_t count(WordId w) const {
    auto it = std::lower_bound(links.begin(), links.end(), w,
                               [](const auto& link, WordId x) { return link.first < x; });
    return (it != links.end() && it->first == w) ? it->second : 0;
  }

  void add(WordId w, std::uint64_t n) {
    auto it = std::lower_bound(links.begin(), links.end(), w,
                               [](const auto& link, WordId x) { return link.first < x; });
    if (it != links.end() && it->first == w)
      it->second += n;
    else
      links.insert(it, {w, n});
    total += n;
  }

  friend bool operator==(const CountRow&, const CountRow&) = default;
};

class CountStore {
 public:
  using Rows = std::unordered_map<Feature, CountRow, FeatureHash>;

  void add(const Feature& f, WordId w, std::uint64_t n = 1) {
    if (n == 0) return;
    rows_[f].add(w, n);
  }

  void add_event(const Event& e) {
    for (const auto& f : e.features) add(f, e.target);
    ++total_events_;
  }

  /// Associative, commutative merge of another shard.
  void merge(const CountStore& other) {
    for (const auto& [f, row] : other.rows_) {
      auto& mine = rows_[f];
      for (const auto& [w, c] : row.links) mine.add(w, c);
    }
    total_events_ += other.total_events_;
  }

  const CountRow* find(const Feature& f) const {
    auto it = rows_.find(f);
    return it == rows_.end() ? nullptr : &it->second;
  }

  std::uint64_t feature_count(const Feature& f) const {
    const auto* row = find(f);
    return row ? row->total : 0;
  }

  std::uint64_t link_count(const Feature& f, WordId w) const {
    const auto* row = find(f);
    return row ? row->count(w) : 0;
  }

  const Rows& rows() const noexcept { return rows_; }
  std::size_t num_features() const noexcept { return rows_.size(); }
  std::size_t num_links() const {
    std::size_t n = 0;
    for (const auto& [f, row] : rows_) n += row.links.size();
    return n;
  }
  std::uint64_t total_events() const noexcept { return total_events_; }
  void set_total_events(std::uint64_t n) noexcept { total_events_ = n; }

  void insert_row(const Feature& f, CountRow row) { rows_[f] = std::move(row); }

  /// Rows ordered by feature string, for deterministic iteration.
  std::vector<std::pair<std::string, const Feature*>> sorted_features(const Vocabulary& vocab) const {
    std::vector<std::pair<std::string, const Feature*>> out;
    out.reserve(rows_.size());
    for (const auto& [f, row] : rows_) out.emplace_back(render_feature(f, vocab), &f);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

  friend bool operator==(const CountStore& a, const CountStore& b) { return a.rows_ == b.rows_; }

 private:
  Rows rows_;
  std::uint64_t total_events_ = 0;
};

inline CountStore accumulate(std::span<const Event> events) {
  CountStore store;
  for (const auto& e : events) store.add_event(e);
  return store;
}

/// c(w|f) = C_fw / C_f*; 0 for an absent link of a known feature.
inline double rel_freq(const CountStore& store, const Feature& f, WordId w) {
  const auto* row = store.find(f);
  if (!row || row->total == 0) throw DataError("no counts for feature");
  return static_cast<double>(row->count(w)) / static_cast<double>(row->total);
}

/// Full rows of every feature in `dev_features` that has training counts.
inline CountStore intersect_dev(const CountStore& store, const FeatureSet& dev_features) {
  CountStore out;
  for (const auto& f : dev_features)
    if (const auto* row = store.find(f)) out.insert_row(f, *row);
  out.set_total_events(store.total_events());
  return out;
}

// ---------------------------------------------------------------------------
// Sorted file form

struct CountLine {
  std::string feature;
  std::string word;
  std::uint64_t count = 0;
};

namespace detail {

inline bool parse_count_line(const std::string& line, CountLine& out, std::size_t lineno) {
  if (line.empty()) return false;
  const auto t1 = line.find('\t');
  const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
  if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
    throw ParseError("count line must have three tab-separated fields", lineno);
  out.feature = line.substr(0, t1);
  out.word = line.substr(t1 + 1, t2 - t1 - 1);
  const auto num = std::string_view(line).substr(t2 + 1);
  std::uint64_t c = 0;
  auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), c);
  if (ec != std::errc{} || p != num.data() + num.size() || c == 0)
    throw ParseError("count must be a positive integer", lineno);
  out.count = c;
  return true;
}

inline void expect_header(std::istream& in, std::string_view header) {
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw DataError("missing header '" + std::string(header) + "'");
}

/// Sequential reader over a sorted count file.
class CountLineReader {
 public:
  explicit CountLineReader(std::istream& in) : in_(in) {
    expect_header(in_, kCountsHeader);
    lineno_ = 1;
    advance();
  }

  bool done() const { return done_; }
  const CountLine& current() const { return cur_; }

  void advance() {
    std::string line;
    while (std::getline(in_, line)) {
      ++lineno_;
      CountLine next;
      if (!parse_count_line(line, next, lineno_)) continue;
      if (have_prev_ && std::tie(next.feature, next.word) <= std::tie(cur_.feature, cur_.word))
        throw ParseError("count file is not strictly sorted", lineno_);
      cur_ = std::move(next);
      have_prev_ = true;
      return;
    }
    done_ = true;
  }

 private:
  std::istream& in_;
  CountLine cur_;
  std::size_t lineno_ = 0;
  bool have_prev_ = false;
  bool done_ = false;
};

}  // namespace detail

inline void save_counts(std::ostream& out, const CountStore& store, const Vocabulary& vocab) {
  out << kCountsHeader << '\n';
  for (const auto& [name, feature] : store.sorted_features(vocab)) {
    const auto& row = *store.find(*feature);
    std::vector<std::pair<std::string_view, std::uint64_t>> links;
    links.reserve(row.links.size());
    for (const auto& [w, c] : row.links) links.emplace_back(vocab.word(w), c);
    std::sort(links.begin(), links.end());
    for (const auto& [w, c] : links) out << name << '\t' << w << '\t' << c << '\n';
  }
}

/// Loads a count file; with `verify_sorted` unsorted or duplicate keys are an
/// error. The event total is recovered from the empty-feature rows (every
/// event carries exactly one), so it is 0 for configs without order 0.
inline CountStore load_counts(std::istream& in, const Vocabulary& vocab, bool verify_sorted = true) {
  CountStore store;
  std::uint64_t events = 0;
  auto add_line = [&](const CountLine& l, std::size_t lineno) {
    Feature f;
    try {
      f = parse_feature(l.feature, vocab);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
    auto w = vocab.find(l.word);
    if (!w) throw ParseError("word '" + l.word + "' not in vocabulary", lineno);
    if (f.kind == FeatureKind::Empty) events += l.count;
    store.add(f, *w, l.count);
  };
  if (verify_sorted) {
    detail::CountLineReader reader(in);
    for (std::size_t n = 2; !reader.done(); reader.advance(), ++n) add_line(reader.current(), n);
  } else {
    detail::expect_header(in, kCountsHeader);
    std::string line;
    std::size_t lineno = 1;
    CountLine l;
    while (std::getline(in, line)) {
      ++lineno;
      if (detail::parse_count_line(line, l, lineno)) add_line(l, lineno);
    }
  }
  store.set_total_events(events);
  return store;
}

/// Merges two sorted count files by sequential scan, summing equal keys.
inline void merge_count_files(std::istream& a, std::istream& b, std::ostream& out) {
  detail::CountLineReader ra(a), rb(b);
  out << kCountsHeader << '\n';
  auto emit = [&](const CountLine& l, std::uint64_t c) { out << l.feature << '\t' << l.word << '\t' << c << '\n'; };
  while (!ra.done() || !rb.done()) {
    if (rb.done()) {
      emit(ra.current(), ra.current().count);
      ra.advance();
    } else if (ra.done()) {
      emit(rb.current(), rb.current().count);
      rb.advance();
    } else {
      const auto& x = ra.current();
      const auto& y = rb.current();
      auto kx = std::tie(x.feature, x.word);
      auto ky = std::tie(y.feature, y.word);
      if (kx < ky) {
        emit(x, x.count);
        ra.advance();
      } else if (ky < kx) {
        emit(y, y.count);
        rb.advance();
      } else {
        emit(x, x.count + y.count);
        ra.advance();
        rb.advance();
      }
    }
  }
}

/// Sorted, deduplicated feature strings, one per line.
inline void write_feature_list(std::ostream& out, const FeatureSet& features, const Vocabulary& vocab) {
  std::vector<std::string> names;
  names.reserve(features.size());
  for (const auto& f : features) names.push_back(render_feature(f, vocab));
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  for (const auto& n : names) out << n << '\n';
}

/// Merge join of a sorted count file with a sorted feature list: copies the
/// full rows of listed features.
inline void intersect_count_file(std::istream& counts, std::istream& feature_list, std::ostream& out) {
  detail::CountLineReader reader(counts);
  out << kCountsHeader << '\n';
  std::string wanted;
  std::string prev;
  bool have = false;
  std::size_t lineno = 0;
  auto next_wanted = [&]() {
    while (std::getline(feature_list, wanted)) {
      ++lineno;
      if (wanted.empty()) continue;
      if (have && wanted <= prev) throw ParseError("feature list is not strictly sorted", lineno);
      prev = wanted;
      have = true;
      return true;
    }
    return false;
  };
  bool more = next_wanted();
  while (more && !reader.done()) {
    const auto& l = reader.current();
    if (l.feature < wanted) {
      reader.advance();
    } else if (wanted < l.feature) {
      more = next_wanted();
    } else {
      out << l.feature << '\t' << l.word << '\t' << l.count << '\n';
      reader.advance();
    }
  }
}

}  // namespace snm
