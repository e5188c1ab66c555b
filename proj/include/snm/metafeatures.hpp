#pragma once

// Meta-features of a link (f, w): identity strings, feature type and
// log2-bucketed counts, plus their conjunctions, each hashed into a flat
// weight table.
//
// Construction order for a link in Full mode:
//   L = [feature identity, feature type, C_f* bucket(s)]
//   Concat(L, |L|, target identity)
//   e = |L|; Concat(L, e, C_fw floor bucket); Concat(L, e, C_fw ceil bucket)
// where Concat(L, end, m) appends m and then m conjoined with each of L[0..end).

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snm/corpus.hpp"
#include "snm/error.hpp"
#include "snm/extraction.hpp"
#include "snm/hash.hpp"

namespace snm {

enum class MetaFeatureMode : std::uint8_t { Full = 0, FeatureOnly = 1, Unlexicalized = 2 };

inline std::string_view to_string(MetaFeatureMode m) {
  switch (m) {
    case MetaFeatureMode::Full: return "full";
    case MetaFeatureMode::FeatureOnly: return "feature-only";
    case MetaFeatureMode::Unlexicalized: return "unlexicalized";
  }
  return "?";
}

inline MetaFeatureMode parse_mode(std::string_view s) {
  if (s == "full") return MetaFeatureMode::Full;
  if (s == "feature-only") return MetaFeatureMode::FeatureOnly;
  if (s == "unlexicalized") return MetaFeatureMode::Unlexicalized;
  throw UsageError("unknown meta-feature mode '" + std::string(s) + "' (full, feature-only, unlexicalized)");
}

struct MetaFeature {
  std::uint64_t hash = 0;
  double weight = 1.0;
  friend bool operator==(const MetaFeature&, const MetaFeature&) = default;
};

struct CountBucket {
  int bucket = 0;
  double weight = 1.0;
};

/// One or two buckets; weights are positive and sum to one.
struct BucketSplit {
  std::array<CountBucket, 2> items{};
  std::size_t size = 0;

  const CountBucket* begin() const { return items.data(); }
  const CountBucket* end() const { return items.data() + size; }
  const CountBucket& operator[](std::size_t i) const { return items[i]; }
};

/// Floored and ceiled log2 buckets of `count`, each weighted by the fraction
/// lost to the opposite rounding. Powers of two yield a single bucket.
inline BucketSplit buckets(std::uint64_t count) {
  if (count == 0) throw DataError("count buckets need a positive count");
  BucketSplit out;
  if (std::has_single_bit(count)) {
    out.items[0] = {std::countr_zero(count), 1.0};
    out.size = 1;
    return out;
  }
  const double ln = std::log2(static_cast<double>(count));
  const double lo = std::floor(ln);
  const double hi = std::ceil(ln);
  out.items[0] = {static_cast<int>(lo), hi - ln};
  out.items[1] = {static_cast<int>(hi), ln - lo};
  out.size = 2;
  return out;
}

inline std::size_t hash_index(std::uint64_t hash, std::size_t table_size) {
  return static_cast<std::size_t>(hash % table_size);
}

inline std::size_t hash_index(const MetaFeature& mf, std::size_t table_size) {
  return hash_index(mf.hash, table_size);
}

// Feature-count and link-count buckets live in different hash namespaces so
// that "C_f* in bucket 3" and "C_fw in bucket 3" are distinct meta-features.
inline constexpr std::uint64_t kFeatureCountSalt = fingerprint("feature-count");
inline constexpr std::uint64_t kLinkCountSalt = fingerprint("link-count");

inline std::uint64_t feature_count_bucket_hash(int bucket) { return hash_integer(bucket, kFeatureCountSalt); }
inline std::uint64_t link_count_bucket_hash(int bucket) { return hash_integer(bucket, kLinkCountSalt); }

/// The feature-side part of every link in a row; computed once per row.
struct FeatureSide {
  std::uint64_t identity = 0;
  std::uint64_t type = 0;
  BucketSplit count_buckets;
  std::string identity_text;  // for debug dumps
  std::string type_text;
};

inline FeatureSide feature_side(const Feature& f, std::uint64_t feature_count, const Vocabulary& vocab) {
  FeatureSide side;
  side.identity_text = render_feature(f, vocab);
  side.type_text = f.type();
  side.identity = fingerprint(side.identity_text);
  side.type = fingerprint(side.type_text);
  side.count_buckets = buckets(feature_count);
  return side;
}

namespace detail {

struct NoLabels {
  static constexpr bool kEnabled = false;
  void push(std::string) {}
  const std::string& at(std::size_t) const {
    static const std::string empty;
    return empty;
  }
};

struct Labels {
  static constexpr bool kEnabled = true;
  std::vector<std::string>* out;
  void push(std::string s) { out->push_back(std::move(s)); }
  const std::string& at(std::size_t i) const { return (*out)[i]; }
};

template <class LabelSink>
void build_link_metafeatures(const FeatureSide& side, std::uint64_t target_fp, std::string_view target_text,
                             std::uint64_t link_count, MetaFeatureMode mode, std::vector<MetaFeature>& out,
                             LabelSink labels) {
  const std::size_t base = out.size();
  // `label` is only invoked when labels are collected.
  auto push = [&](std::uint64_t h, double w, auto&& label) {
    out.push_back({h, w});
    if constexpr (LabelSink::kEnabled) labels.push(label());
  };
  auto concat = [&](std::size_t end_pos, std::uint64_t h, double w, auto&& label) {
    push(h, w, label);
    for (std::size_t i = base; i < base + end_pos; ++i) {
      const MetaFeature prior = out[i];
      push(conjoin(prior.hash, h), prior.weight * w, [&] { return labels.at(i - base) + " & " + label(); });
    }
  };

  if (mode != MetaFeatureMode::Unlexicalized)
    push(side.identity, 1.0, [&] { return "feature=" + side.identity_text; });
  push(side.type, 1.0, [&] { return "type=" + side.type_text; });
  for (const auto& b : side.count_buckets)
    push(feature_count_bucket_hash(b.bucket), b.weight,
         [&] { return "feature-count-bucket=" + std::to_string(b.bucket); });

  if (mode == MetaFeatureMode::FeatureOnly) return;

  if (mode == MetaFeatureMode::Full)
    concat(out.size() - base, target_fp, 1.0, [&] { return "target=" + std::string(target_text); });

  // Both link-count buckets conjoin only with what preceded the first one.
  const std::size_t end_pos = out.size() - base;
  for (const auto& b : buckets(link_count))
    concat(end_pos, link_count_bucket_hash(b.bucket), b.weight,
           [&] { return "link-count-bucket=" + std::to_string(b.bucket); });
}

}  // namespace detail

/// Appends the meta-features of link (f, w) to `out`. `target_fp` is the
/// fingerprint of w's string.
inline void append_link_metafeatures(const FeatureSide& side, std::uint64_t target_fp, std::uint64_t link_count,
                                     MetaFeatureMode mode, std::vector<MetaFeature>& out) {
  detail::build_link_metafeatures(side, target_fp, {}, link_count, mode, out, detail::NoLabels{});
}

inline std::vector<MetaFeature> compute_metafeatures(const Feature& f, WordId w, const Vocabulary& vocab,
                                                     std::uint64_t feature_count, std::uint64_t link_count,
                                                     MetaFeatureMode mode) {
  std::vector<MetaFeature> out;
  append_link_metafeatures(feature_side(f, feature_count, vocab), fingerprint(vocab.word(w)), link_count, mode, out);
  return out;
}

struct DescribedMetaFeature {
  std::string label;
  MetaFeature mf;
};

/// Same list as compute_metafeatures, with a readable label for each entry.
inline std::vector<DescribedMetaFeature> describe_metafeatures(const Feature& f, WordId w, const Vocabulary& vocab,
                                                              std::uint64_t feature_count, std::uint64_t link_count,
                                                              MetaFeatureMode mode) {
  std::vector<MetaFeature> mfs;
  std::vector<std::string> labels;
  const auto& word = vocab.word(w);
  detail::build_link_metafeatures(feature_side(f, feature_count, vocab), fingerprint(word), word, link_count, mode,
                                  mfs, detail::Labels{&labels});
  std::vector<DescribedMetaFeature> out;
  out.reserve(mfs.size());
  for (std::size_t i = 0; i < mfs.size(); ++i) out.push_back({labels[i], mfs[i]});
  return out;
}

}  // namespace snm
