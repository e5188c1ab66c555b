#pragma once

// File-level pipeline stages behind the `snm` command-line tool:
// build-vocab -> count -> (intersect) -> train -> eval, plus inspect.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ios>
#include <sstream>
#include <string>
#include <vector>

#include "snm/adjustment.hpp"
#include "snm/adjustment_model.hpp"
#include "snm/corpus.hpp"
#include "snm/counts.hpp"
#include "snm/error.hpp"
#include "snm/extraction.hpp"
#include "snm/metafeatures.hpp"
#include "snm/model.hpp"

namespace snm {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::vector<fs::path> corpora;
  std::vector<std::string> tags;
  fs::path vocab;
  fs::path extractor_config;
  fs::path counts;
  fs::path dev;
  fs::path test;
  fs::path model;
  fs::path adjustment;
  fs::path log;
  int min_count = 1;
  std::size_t table_size = std::size_t{1} << 20;
  double gamma = 0.1;
  double delta0 = 1.0;
  std::size_t batch_size = 2048;
  std::size_t epochs = 1;
  MetaFeatureMode mode = MetaFeatureMode::Full;
  bool renormalize_every_batch = false;
  unsigned threads = 1;

  void validate() const {
    if (min_count < 1) throw UsageError("--min-count must be >= 1");
    if (table_size < 1) throw UsageError("--table-size must be >= 1");
    if (batch_size < 1) throw UsageError("--batch-size must be >= 1");
    if (!(gamma > 0.0)) throw UsageError("--gamma must be > 0");
    if (!(delta0 > 0.0)) throw UsageError("--delta0 must be > 0");
    if (threads < 1) throw UsageError("--threads must be >= 1");
    for (const auto& t : tags) validate_tag(t);
  }
};

inline std::ifstream open_input(const fs::path& p, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(p, mode);
  if (!in) throw DataError("cannot open '" + p.string() + "' for reading");
  return in;
}

inline std::string read_file(const fs::path& p) {
  auto in = open_input(p, std::ios::in | std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::out | std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + p.string() + "' for writing");
  out << content;
  if (!out) throw DataError("write to '" + p.string() + "' failed");
}

inline Vocabulary load_vocab_file(const fs::path& p) {
  auto in = open_input(p);
  return read_vocab(in);
}

inline ExtractorConfig load_config_file(const fs::path& p) {
  try {
    return parse_config(read_file(p));
  } catch (const ParseError& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

inline TaggedCorpus load_corpus_file(const fs::path& p, const Vocabulary& vocab, std::string tag = {}) {
  auto in = open_input(p);
  return read_corpus(in, vocab, std::move(tag));
}

/// Events of a corpus file; with tags, every feature is expanded to each tag.
inline std::vector<Event> corpus_events(const TaggedCorpus& corpus, const ExtractorConfig& config,
                                        std::span<const std::string> expand_with = {}) {
  std::vector<Event> out;
  for (const auto& s : corpus.sentences)
    for (auto& e : extract_events(s, config, corpus.tag))
      out.push_back(expand_with.empty() ? std::move(e) : expand_tags(e, expand_with));
  return out;
}

// ---------------------------------------------------------------------------

inline Vocabulary cmd_build_vocab(const std::vector<fs::path>& corpora, int min_count, const fs::path& out) {
  if (min_count < 1) throw UsageError("--min-count must be >= 1");
  TokenCounter counter;
  for (const auto& p : corpora) {
    auto in = open_input(p);
    counter.add_stream(in);
  }
  auto vocab = counter.finish(min_count);
  std::ostringstream ss;
  write_vocab(ss, vocab);
  write_file(out, ss.str());
  return vocab;
}

/// Training counts for `corpora`; `tags` is empty (untagged) or one per file.
inline CountStore count_corpora(const std::vector<fs::path>& corpora, const std::vector<std::string>& tags,
                                const ExtractorConfig& config, const Vocabulary& vocab) {
  if (!tags.empty() && tags.size() != corpora.size())
    throw UsageError("got " + std::to_string(tags.size()) + " tags for " + std::to_string(corpora.size()) +
                     " corpus files; give one tag per file or none");
  CountStore store;
  for (std::size_t i = 0; i < corpora.size(); ++i) {
    const auto corpus = load_corpus_file(corpora[i], vocab, tags.empty() ? std::string{} : tags[i]);
    for (const auto& s : corpus.sentences)
      for (const auto& e : extract_events(s, config, corpus.tag)) store.add_event(e);
  }
  return store;
}

inline CountStore cmd_count(const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.corpora.empty()) throw UsageError("count needs at least one corpus file");
  const auto vocab = load_vocab_file(cfg.vocab);
  const auto config = load_config_file(cfg.extractor_config);
  auto store = count_corpora(cfg.corpora, cfg.tags, config, vocab);
  std::ostringstream ss;
  save_counts(ss, store, vocab);
  write_file(cfg.counts, ss.str());
  return store;
}

/// Dev features joined against the sorted count file; returns the count file
/// text of the intersected rows.
inline std::string intersect_with_events(const fs::path& counts_path, std::span<const Event> events,
                                         const Vocabulary& vocab) {
  FeatureSet features;
  for (const auto& e : events)
    for (const auto& f : e.features) features.insert(f);
  std::stringstream list;
  write_feature_list(list, features, vocab);
  auto counts_in = open_input(counts_path);
  std::ostringstream out;
  intersect_count_file(counts_in, list, out);
  return out.str();
}

inline std::vector<Event> load_dev_events(const fs::path& path, const PipelineConfig& cfg, const Vocabulary& vocab,
                                          const ExtractorConfig& config) {
  const auto corpus = load_corpus_file(path, vocab);
  return corpus_events(corpus, config, cfg.tags);
}

inline void cmd_intersect(const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  const auto vocab = load_vocab_file(cfg.vocab);
  const auto config = load_config_file(cfg.extractor_config);
  const auto events = load_dev_events(cfg.dev, cfg, vocab, config);
  write_file(out, intersect_with_events(cfg.counts, events, vocab));
}

inline std::string format_epoch(const EpochStats& s) {
  std::ostringstream ss;
  ss << "epoch " << s.epoch << "\tevents " << s.events << "\tloglik " << std::setprecision(17)
     << s.log_likelihood << "\tppl " << s.perplexity << "\tfloored " << s.floored << "\tnonzero_params "
     << s.nonzero_params;
  return ss.str();
}

struct TrainOutcome {
  AdjustmentModel adjustment;
  SnmModel model;
  std::vector<EpochStats> epochs;
  std::string log;
};

/// Intersects counts with the dev features, trains the adjustment model and
/// writes the adjustment file, the model file and the run log.
inline TrainOutcome cmd_train(const PipelineConfig& cfg) {
  cfg.validate();
  const auto vocab = load_vocab_file(cfg.vocab);
  const auto config = load_config_file(cfg.extractor_config);
  const auto dev_events = load_dev_events(cfg.dev, cfg, vocab, config);
  if (dev_events.empty()) throw DataError("development set '" + cfg.dev.string() + "' has no events");

  std::istringstream intersected(intersect_with_events(cfg.counts, dev_events, vocab));
  const auto store = load_counts(intersected, vocab);
  const LinkTable table(store, vocab);
  if (table.size() == 0)
    throw DataError("no development feature has training counts" +
                    std::string(cfg.tags.empty() ? "; corpus-tagged counts need --tags" : ""));

  std::vector<IndexedEvent> dev;
  dev.reserve(dev_events.size());
  for (const auto& e : dev_events) dev.push_back(index_event(table, e));

  TrainOutcome out{AdjustmentModel(cfg.table_size, cfg.mode, cfg.gamma, cfg.delta0, cfg.batch_size),
                   SnmModel{}, {}, {}};
  std::ostringstream log;
  log << "# table_size " << cfg.table_size << "\tgamma " << cfg.gamma << "\tdelta0 " << cfg.delta0
      << "\tbatch_size " << cfg.batch_size << "\tepochs " << cfg.epochs << "\tmode " << to_string(cfg.mode)
      << "\trenormalize " << (cfg.renormalize_every_batch ? "batch" : "epoch") << '\n';
  log << "# dev_events " << dev.size() << "\trows " << table.size() << '\n';

  if (cfg.epochs == 0) {
    out.model = materialize(table, out.adjustment);
    out.epochs.push_back(evaluate_dev(0, dev, out.model, out.adjustment));
  } else {
    TrainOptions opts;
    opts.epochs = cfg.epochs;
    opts.renormalize_every_batch = cfg.renormalize_every_batch;
    auto result = train(dev, table, out.adjustment, opts);
    out.model = std::move(result.model);
    out.epochs = std::move(result.epochs);
  }
  for (const auto& s : out.epochs) log << format_epoch(s) << '\n';
  out.log = log.str();

  {
    std::ostringstream ss(std::ios::out | std::ios::binary);
    save_adjustment(ss, out.adjustment);
    write_file(cfg.adjustment, ss.str());
  }
  {
    std::ostringstream ss;
    save_model(ss, out.model, vocab);
    write_file(cfg.model, ss.str());
  }
  if (!cfg.log.empty()) write_file(cfg.log, out.log);
  return out;
}

inline EvalReport cmd_eval(const PipelineConfig& cfg) {
  cfg.validate();
  const auto vocab = load_vocab_file(cfg.vocab);
  const auto config = load_config_file(cfg.extractor_config);
  SnmModel model = [&] {
    auto in = open_input(cfg.model);
    return load_model(in, vocab);
  }();
  if (model.tagged() && cfg.tags.empty())
    throw UsageError("model has corpus-tagged features; pass the training tags with --tags to expand test features");
  if (!model.tagged() && !cfg.tags.empty()) throw UsageError("--tags given but the model is not corpus-tagged");
  const auto events = load_dev_events(cfg.test, cfg, vocab, config);
  return perplexity(model, events, cfg.threads);
}

inline std::string format_report(const EvalReport& r) {
  std::ostringstream ss;
  ss << std::setprecision(10) << "events\t" << r.events << "\nperplexity\t" << r.perplexity << "\noov_rate\t"
     << r.oov_rate() << "\nfloored\t" << r.floored << '\n';
  return ss.str();
}

/// Human-readable dump of one row (and optionally one link) from a count file
/// and/or model file. Unknown features produce a message, not an error.
inline std::string cmd_inspect(const PipelineConfig& cfg, const std::string& feature_text, const std::string& word) {
  const auto vocab = load_vocab_file(cfg.vocab);
  if (cfg.counts.empty() && cfg.model.empty()) throw UsageError("inspect needs --counts and/or --model");
  const Feature f = parse_feature(feature_text, vocab);
  std::optional<WordId> w;
  if (!word.empty()) {
    w = vocab.find(word);
    if (!w) return "word '" + word + "' is not in the vocabulary\n";
  }
  std::ostringstream ss;
  ss << std::setprecision(10);
  bool found = false;
  if (!cfg.counts.empty()) {
    auto in = open_input(cfg.counts);
    const auto store = load_counts(in, vocab);
    if (const auto* row = store.find(f)) {
      found = true;
      ss << "feature " << feature_text << "\ttype " << f.type() << "\tC_f* " << row->total << '\n';
      if (!w) {
        for (const auto& [id, c] : row->links)
          ss << "  " << vocab.word(id) << "\tC_fw " << c << "\tc(w|f) " << rel_freq(store, f, id) << '\n';
      } else if (const auto c = row->count(*w); c > 0) {
        ss << "link " << feature_text << " -> " << word << "\tC_fw " << c << "\tc(w|f) " << rel_freq(store, f, *w)
           << "\nmeta-features (" << to_string(cfg.mode) << "):\n";
        for (const auto& d : describe_metafeatures(f, *w, vocab, row->total, c, cfg.mode)) {
          char hex[24];
          std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(d.mf.hash));
          ss << "  " << hex << "\tindex " << hash_index(d.mf, cfg.table_size) << "\tweight " << d.mf.weight << '\t'
             << d.label << '\n';
        }
      } else {
        ss << "link " << feature_text << " -> " << word << " has no count\n";
      }
    }
  }
  if (!cfg.model.empty()) {
    auto in = open_input(cfg.model);
    const auto model = load_model(in, vocab);
    if (auto r = model.find(f)) {
      found = true;
      const auto& row = model.row(*r);
      ss << "model row " << feature_text << "\tM_f* " << row.norm << '\n';
      for (const auto& [id, m] : row.links)
        if (!w || *w == id) ss << "  " << vocab.word(id) << "\tM_fw " << m << "\tP " << m / row.norm << '\n';
    }
  }
  if (!found) return "feature " + feature_text + " not found\n";
  return ss.str();
}

}  // namespace snm
