#pragma once

// Test-only helpers: a portable PRNG wrapper, synthetic Markov corpora and
// random small model instances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "snm/snm.hpp"

namespace snm::testing {

/// mt19937_64 with hand-rolled distributions so that generated data is the
/// same on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
  double range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return weights.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
};

inline std::string word_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%03zu", i);
  return buf;
}

/// Second-order Markov chain over `vocab_size` words plus an end-of-sentence
/// outcome. Each (u, v) context has `fanout` successors with Zipf-like
/// probabilities.
class MarkovSource {
 public:
  MarkovSource(std::size_t vocab_size, std::size_t fanout, double end_prob, std::uint64_t seed)
      : vocab_size_(vocab_size), end_prob_(end_prob) {
    Rng rng(seed);
    const std::size_t contexts = (vocab_size + 1) * (vocab_size + 1);
    successors_.resize(contexts);
    weights_.resize(contexts);
    for (std::size_t c = 0; c < contexts; ++c) {
      for (std::size_t j = 0; j < fanout; ++j) {
        successors_[c].push_back(rng.below(vocab_size));
        weights_[c].push_back(1.0 / static_cast<double>(j + 1) * rng.range(0.5, 1.5));
      }
    }
  }

  /// Words of one sentence (no framing); `max_len` caps the length.
  std::vector<std::string> sentence(Rng& rng, std::size_t max_len = 30) const {
    std::vector<std::string> out;
    std::size_t u = vocab_size_, v = vocab_size_;  // vocab_size_ stands for <S>
    while (out.size() < max_len) {
      if (!out.empty() && rng.uniform() < end_prob_) break;
      const std::size_t c = u * (vocab_size_ + 1) + v;
      const std::size_t w = successors_[c][rng.categorical(weights_[c])];
      out.push_back(word_name(w));
      u = v;
      v = w;
    }
    return out;
  }

  std::string corpus_text(std::size_t sentences, std::uint64_t seed) const {
    Rng rng(seed);
    std::string text;
    for (std::size_t i = 0; i < sentences; ++i) {
      const auto s = sentence(rng);
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (j) text += ' ';
        text += s[j];
      }
      text += '\n';
    }
    return text;
  }

 private:
  std::size_t vocab_size_;
  double end_prob_;
  std::vector<std::vector<std::size_t>> successors_;
  std::vector<std::vector<double>> weights_;
};

inline Vocabulary numbered_vocab(std::size_t n) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) words.push_back(word_name(i));
  return Vocabulary(std::move(words), 1);
}

inline TaggedCorpus corpus_from_text(const std::string& text, const Vocabulary& vocab, std::string tag = {}) {
  std::istringstream in(text);
  return read_corpus(in, vocab, std::move(tag));
}

inline std::vector<Event> events_of(const TaggedCorpus& corpus, const ExtractorConfig& config) {
  std::vector<Event> out;
  for (const auto& s : corpus.sentences)
    for (auto& e : extract_events(s, config, corpus.tag)) out.push_back(std::move(e));
  return out;
}

inline ExtractorConfig ngram_config(int max_n) {
  ExtractorConfig c;
  c.ngram = NGramBlock{0, max_n};
  return c;
}

/// A random small instance: up to `max_features` features over a vocabulary
/// of `vocab_words` words, random counts, and events drawn over them. Every
/// event contains the empty feature, so it always has positive mass.
struct RandomInstance {
  Vocabulary vocab;
  CountStore counts;
  std::vector<Feature> features;
  std::vector<IndexedEvent> events;
};

inline RandomInstance random_instance(Rng& rng, std::size_t vocab_words, std::size_t max_features) {
  RandomInstance inst;
  inst.vocab = numbered_vocab(vocab_words);
  const std::size_t v = inst.vocab.size();
  const std::size_t nf = 1 + rng.below(max_features);
  inst.features.push_back(Feature::empty());
  while (inst.features.size() < nf) {
    std::vector<WordId> ctx;
    const std::size_t len = 1 + rng.below(3);
    for (std::size_t i = 0; i < len; ++i) ctx.push_back(static_cast<WordId>(3 + rng.below(v - 3)));
    auto f = Feature::ngram(ctx);
    if (std::find(inst.features.begin(), inst.features.end(), f) == inst.features.end())
      inst.features.push_back(std::move(f));
  }
  for (const auto& f : inst.features) {
    // The empty row links every predictable word; other rows are sparse.
    const bool dense = f.kind == FeatureKind::Empty;
    for (WordId w = 1; w < v; ++w) {
      if (!dense && rng.uniform() < 0.6) continue;
      inst.counts.add(f, w, 1 + rng.below(40));
    }
    if (!inst.counts.find(f)) inst.counts.add(f, 1 + static_cast<WordId>(rng.below(v - 1)), 1 + rng.below(5));
  }
  return inst;
}

/// Attaches events over the instance's features (row ids from `table`).
inline void add_random_events(RandomInstance& inst, const LinkTable& table, Rng& rng, std::size_t num_events) {
  const std::size_t v = inst.vocab.size();
  for (std::size_t i = 0; i < num_events; ++i) {
    IndexedEvent e;
    e.rows.push_back(*table.find(Feature::empty()));
    for (std::size_t k = 1; k < inst.features.size(); ++k)
      if (rng.uniform() < 0.5) e.rows.push_back(*table.find(inst.features[k]));
    e.target = static_cast<WordId>(1 + rng.below(v - 1));
    inst.events.push_back(std::move(e));
  }
}

inline void randomize_theta(AdjustmentModel& adj, Rng& rng, double scale) {
  for (auto& t : adj.theta) t = rng.range(-scale, scale);
}

}  // namespace snm::testing
