#pragma once

// The adjusted sparse matrix M_fw = c(w|f) * exp(A(f, w; theta)), its row
// normalizers M_f*, event scoring and perplexity.
//
// Model file:
//   #snm-model v1
//   #vocab-size\t<V>
//   <feature>\t<word>\t<M_fw>      sorted by (feature string, word string)
//   #normalizers
//   <feature>\t<M_f*>              sorted by feature string

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <system_error>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "snm/adjustment_model.hpp"
#include "snm/corpus.hpp"
#include "snm/counts.hpp"
#include "snm/error.hpp"
#include "snm/extraction.hpp"
#include "snm/metafeatures.hpp"

namespace snm {

using RowId = std::uint32_t;

/// Adjustments beyond this magnitude indicate a diverged adjustment model.
inline constexpr double kMaxAdjustment = 50.0;

/// Probability assigned to an event whose target has no link in any of its
/// features.
inline constexpr double kProbabilityFloor = 1e-10;

/// Count rows (normally dev-intersected) laid out for training: dense row
/// ids in feature-string order, with the per-row and per-word hashes that
/// meta-feature construction needs precomputed.
class LinkTable {
 public:
  struct Link {
    WordId word;
    std::uint64_t count;
    double rel_freq;
    std::uint64_t target_fp;
  };

  struct Row {
    Feature feature;
    std::uint64_t count;
    FeatureSide side;
    std::vector<Link> links;  // sorted by word id
  };

  LinkTable(const CountStore& counts, const Vocabulary& vocab) : vocab_(&vocab) {
    std::vector<std::uint64_t> word_fp(vocab.size());
    for (std::size_t w = 0; w < vocab.size(); ++w) word_fp[w] = fingerprint(vocab.word(static_cast<WordId>(w)));
    const auto order = counts.sorted_features(vocab);
    rows_.reserve(order.size());
    for (const auto& [name, feature] : order) {
      const CountRow& cr = *counts.find(*feature);
      Row row{*feature, cr.total, feature_side(*feature, cr.total, vocab), {}};
      row.links.reserve(cr.links.size());
      for (const auto& [w, c] : cr.links)
        row.links.push_back({w, c, static_cast<double>(c) / static_cast<double>(cr.total), word_fp.at(w)});
      index_.emplace(row.feature, static_cast<RowId>(rows_.size()));
      rows_.push_back(std::move(row));
    }
  }

  std::size_t size() const noexcept { return rows_.size(); }
  const Row& row(RowId r) const { return rows_[r]; }
  const std::vector<Row>& rows() const noexcept { return rows_; }
  const Vocabulary& vocab() const noexcept { return *vocab_; }

  std::optional<RowId> find(const Feature& f) const {
    auto it = index_.find(f);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> find_link(RowId r, WordId w) const {
    const auto& links = rows_[r].links;
    auto it = std::lower_bound(links.begin(), links.end(), w, [](const Link& l, WordId x) { return l.word < x; });
    if (it == links.end() || it->word != w) return std::nullopt;
    return static_cast<std::size_t>(it - links.begin());
  }

  void metafeatures(RowId r, std::size_t link, MetaFeatureMode mode, std::vector<MetaFeature>& out) const {
    const auto& row = rows_[r];
    const auto& l = row.links[link];
    append_link_metafeatures(row.side, l.target_fp, l.count, mode, out);
  }

  /// A(f, w) for one stored link. `scratch` is reused between calls.
  double adjustment(RowId r, std::size_t link, const AdjustmentModel& adj, std::vector<MetaFeature>& scratch) const {
    scratch.clear();
    metafeatures(r, link, adj.mode, scratch);
    return adjust(scratch, adj);
  }

 private:
  const Vocabulary* vocab_;
  std::vector<Row> rows_;
  std::unordered_map<Feature, RowId, FeatureHash> index_;
};

struct ModelRow {
  Feature feature;
  std::vector<std::pair<WordId, double>> links;  // sorted by word id
  long double norm = 0.0L;                        // sum of links, kept in extended precision
};

class SnmModel {
 public:
  explicit SnmModel(std::size_t vocab_size = 0) : vocab_size_(vocab_size) {}

  RowId add_row(ModelRow row) {
    const auto id = static_cast<RowId>(rows_.size());
    if (!index_.emplace(row.feature, id).second) throw DataError("duplicate model row");
    rows_.push_back(std::move(row));
    return id;
  }

  std::optional<RowId> find(const Feature& f) const {
    auto it = index_.find(f);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const ModelRow& row(RowId r) const { return rows_[r]; }
  ModelRow& row(RowId r) { return rows_[r]; }
  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  const std::vector<ModelRow>& rows() const noexcept { return rows_; }

  /// M_fw, or 0 when the link is absent.
  double value(RowId r, WordId w) const {
    const auto& links = rows_[r].links;
    auto it = std::lower_bound(links.begin(), links.end(), w,
                               [](const auto& l, WordId x) { return l.first < x; });
    return (it != links.end() && it->first == w) ? it->second : 0.0;
  }

  bool tagged() const {
    return std::any_of(rows_.begin(), rows_.end(), [](const ModelRow& r) { return !r.feature.tag.empty(); });
  }

 private:
  std::size_t vocab_size_;
  std::vector<ModelRow> rows_;
  std::unordered_map<Feature, RowId, FeatureHash> index_;
};

/// M_f* as the extended-precision sum of the row's stored entries, so that
/// y_t / y is as exact as the stored M_fw allow.
inline long double row_sum(std::span<const std::pair<WordId, double>> links) {
  long double sum = 0.0L;
  for (const auto& l : links) sum += l.second;
  return sum;
}

namespace detail {

inline void fill_links(const LinkTable& table, RowId r, const AdjustmentModel& adj, ModelRow& out,
                       std::vector<MetaFeature>& scratch) {
  const auto& row = table.row(r);
  out.links.resize(row.links.size());
  const double total = static_cast<double>(row.count);
  for (std::size_t i = 0; i < row.links.size(); ++i) {
    const double a = table.adjustment(r, i, adj, scratch);
    if (!(std::abs(a) <= kMaxAdjustment))
      throw DataError("adjustment " + std::to_string(a) + " out of range on link " + row.side.identity_text + " -> " +
                      table.vocab().word(row.links[i].word) + " (training diverged)");
    out.links[i] = {row.links[i].word, static_cast<double>(row.links[i].count) * std::exp(a) / total};
  }
}

inline void fill_row(const LinkTable& table, RowId r, const AdjustmentModel& adj, ModelRow& out,
                     std::vector<MetaFeature>& scratch) {
  fill_links(table, r, adj, out, scratch);
  out.norm = row_sum(out.links);
}

}  // namespace detail

/// Builds M from counts and the current adjustment; row ids match `table`.
inline SnmModel materialize(const LinkTable& table, const AdjustmentModel& adj) {
  SnmModel model(table.vocab().size());
  std::vector<MetaFeature> scratch;
  for (RowId r = 0; r < table.size(); ++r) {
    ModelRow row;
    row.feature = table.row(r).feature;
    detail::fill_row(table, r, adj, row, scratch);
    model.add_row(std::move(row));
  }
  return model;
}

/// Recomputes every M_fw from the current theta, then every M_f*.
inline void renormalize(SnmModel& model, const AdjustmentModel& adj, const LinkTable& table) {
  if (model.size() != table.size()) throw DataError("model rows do not match the link table");
  std::vector<MetaFeature> scratch;
  for (RowId r = 0; r < table.size(); ++r) detail::fill_row(table, r, adj, model.row(r), scratch);
}

/// Recomputes M_fw of the given rows from the current theta, leaving their
/// normalizers M_f* as they were (stale until the next renormalize).
inline void refresh_links(SnmModel& model, const AdjustmentModel& adj, const LinkTable& table,
                          std::span<const RowId> rows) {
  std::vector<MetaFeature> scratch;
  for (RowId r : rows) detail::fill_links(table, r, adj, model.row(r), scratch);
}

// ---------------------------------------------------------------------------
// Scoring

struct EventScore {
  long double y_t = 0.0L;
  long double y = 0.0L;
  double log_prob = 0.0;
  bool floored = false;
};

/// An event with its features resolved to model rows; unknown features are
/// dropped.
struct IndexedEvent {
  std::vector<RowId> rows;
  WordId target = Vocabulary::kEos;
};

template <class Index>
IndexedEvent index_event(const Index& index, const Event& e) {
  IndexedEvent out;
  out.target = e.target;
  out.rows.reserve(e.features.size());
  for (const auto& f : e.features)
    if (auto r = index.find(f)) out.rows.push_back(*r);
  return out;
}

inline EventScore score_rows(const SnmModel& model, std::span<const RowId> rows, WordId target) {
  EventScore s;
  for (RowId r : rows) {
    s.y_t += model.value(r, target);
    s.y += model.row(r).norm;
  }
  if (!(s.y > 0.0)) throw DataError("event has no known feature with positive mass");
  if (s.y_t > 0.0) {
    s.log_prob = static_cast<double>(std::log(s.y_t) - std::log(s.y));
  } else {
    s.log_prob = std::log(kProbabilityFloor);
    s.floored = true;
  }
  return s;
}

inline EventScore score_event(const SnmModel& model, const IndexedEvent& e) {
  return score_rows(model, e.rows, e.target);
}

/// P(t(e) | e) = y_t / y over the event's features present in the model.
inline EventScore score_event(const SnmModel& model, const Event& e) {
  return score_event(model, index_event(model, e));
}

struct EvalReport {
  std::size_t events = 0;
  double log_prob_sum = 0.0;  // natural log
  double perplexity = 0.0;
  std::size_t oov_targets = 0;
  std::size_t floored = 0;

  double oov_rate() const { return events == 0 ? 0.0 : static_cast<double>(oov_targets) / static_cast<double>(events); }
};

namespace detail {

// Log-probabilities are summed in extended precision so that identities such
// as "a uniform model over V words has perplexity V" hold to the last bit.
inline long double extended_log_prob(const EventScore& s) {
  if (s.floored) return std::log(static_cast<long double>(kProbabilityFloor));
  return std::log(s.y_t) - std::log(s.y);
}

/// Neumaier-compensated running sum.
class LogProbSum {
 public:
  void add(long double x) {
    const long double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  long double value() const { return sum_ + comp_; }

 private:
  long double sum_ = 0.0L;
  long double comp_ = 0.0L;
};

inline double perplexity_of_sum(long double log_prob_sum, std::size_t n) {
  return static_cast<double>(std::exp(-log_prob_sum / static_cast<long double>(n)));
}

}  // namespace detail

/// exp(-(1/N) sum ln P(e)).
inline double perplexity_from_log_probs(std::span<const double> log_probs) {
  if (log_probs.empty()) throw DataError("perplexity of an empty event set");
  detail::LogProbSum sum;
  for (double lp : log_probs) sum.add(lp);
  return detail::perplexity_of_sum(sum.value(), log_probs.size());
}

/// Scores `events` on up to `threads` workers; the log-probability sum is
/// reduced in event order so the result does not depend on `threads`.
inline EvalReport perplexity(const SnmModel& model, std::span<const Event> events, unsigned threads = 1) {
  if (events.empty()) throw DataError("perplexity of an empty event set");
  std::vector<EventScore> scores(events.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) scores[i] = score_event(model, events[i]);
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(events.size())));
  if (threads == 1) {
    work(0, events.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (events.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk;
      const std::size_t e = std::min(events.size(), b + chunk);
      pool.emplace_back([&, b, e, t] {
        try {
          work(b, e);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
      if (err) std::rethrow_exception(err);
  }
  EvalReport report;
  detail::LogProbSum acc;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    acc.add(detail::extended_log_prob(scores[i]));
    if (scores[i].floored) ++report.floored;
    if (events[i].target == Vocabulary::kUnk) ++report.oov_targets;
  }
  report.events = scores.size();
  report.log_prob_sum = static_cast<double>(acc.value());
  report.perplexity = detail::perplexity_of_sum(acc.value(), scores.size());
  return report;
}

// ---------------------------------------------------------------------------
// Model file

inline constexpr std::string_view kModelHeader = "#snm-model v1";
inline constexpr std::string_view kNormalizerMarker = "#normalizers";

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline double parse_double(std::string_view s, std::size_t lineno) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
    throw ParseError("bad number '" + std::string(s) + "'", lineno);
  return v;
}

}  // namespace detail

inline void save_model(std::ostream& out, const SnmModel& model, const Vocabulary& vocab) {
  std::vector<std::pair<std::string, RowId>> order;
  order.reserve(model.size());
  for (RowId r = 0; r < model.size(); ++r) order.emplace_back(render_feature(model.row(r).feature, vocab), r);
  std::sort(order.begin(), order.end());
  out << kModelHeader << '\n' << "#vocab-size\t" << model.vocab_size() << '\n';
  for (const auto& [name, r] : order) {
    std::vector<std::pair<std::string_view, double>> links;
    for (const auto& [w, m] : model.row(r).links) links.emplace_back(vocab.word(w), m);
    std::sort(links.begin(), links.end());
    for (const auto& [w, m] : links) out << name << '\t' << w << '\t' << detail::format_double(m) << '\n';
  }
  out << kNormalizerMarker << '\n';
  for (const auto& [name, r] : order)
    out << name << '\t' << detail::format_double(static_cast<double>(model.row(r).norm)) << '\n';
}

inline SnmModel load_model(std::istream& in, const Vocabulary& vocab) {
  std::string line;
  if (!std::getline(in, line) || line != kModelHeader) throw DataError("missing header '#snm-model v1'");
  if (!std::getline(in, line) || !line.starts_with("#vocab-size\t")) throw DataError("missing #vocab-size line");
  const auto declared = line.substr(12);
  if (declared != std::to_string(vocab.size()))
    throw DataError("model/vocab mismatch: model built for vocabulary size " + declared + ", vocabulary has " +
                    std::to_string(vocab.size()));

  struct Pending {
    std::vector<std::pair<WordId, double>> links;
    std::optional<double> norm;
  };
  std::vector<std::pair<std::string, Pending>> rows;
  std::unordered_map<std::string, std::size_t> index;
  auto row_for = [&](const std::string& name) -> Pending& {
    auto [it, inserted] = index.emplace(name, rows.size());
    if (inserted) rows.emplace_back(name, Pending{});
    return rows[it->second].second;
  };

  std::size_t lineno = 2;
  bool normalizers = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line == kNormalizerMarker) {
      normalizers = true;
      continue;
    }
    std::vector<std::string_view> cols;
    std::string_view rest = line;
    while (true) {
      auto t = rest.find('\t');
      cols.push_back(rest.substr(0, t));
      if (t == std::string_view::npos) break;
      rest.remove_prefix(t + 1);
    }
    if (!normalizers) {
      if (cols.size() != 3) throw ParseError("model link line needs 3 fields", lineno);
      auto w = vocab.find(cols[1]);
      if (!w) throw DataError("model/vocab mismatch: word '" + std::string(cols[1]) + "' not in vocabulary");
      const double m = detail::parse_double(cols[2], lineno);
      if (!(m > 0.0)) throw ParseError("M_fw must be positive", lineno);
      row_for(std::string(cols[0])).links.emplace_back(*w, m);
    } else {
      if (cols.size() != 2) throw ParseError("normalizer line needs 2 fields", lineno);
      auto& p = row_for(std::string(cols[0]));
      if (p.norm) throw ParseError("duplicate normalizer", lineno);
      p.norm = detail::parse_double(cols[1], lineno);
    }
  }

  SnmModel model(vocab.size());
  for (auto& [name, p] : rows) {
    if (!p.norm) throw DataError("row " + name + " has no normalizer");
    ModelRow row;
    row.feature = parse_feature(name, vocab);
    row.links = std::move(p.links);
    std::sort(row.links.begin(), row.links.end());
    row.norm = row_sum(row.links);
    if (!(std::abs(*p.norm - static_cast<double>(row.norm)) <= 1e-9 * *p.norm))
      throw DataError("normalizer of row " + name + " does not match the sum of its entries");
    model.add_row(std::move(row));
  }
  return model;
}

}  // namespace snm
