#pragma once

// Held-out training of the adjustment model by multinomial log-likelihood:
// per-link gradients, mini-batch accumulation with per-feature alpha sums,
// AdaGrad updates and epoch-end renormalization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "snm/adjustment_model.hpp"
#include "snm/error.hpp"
#include "snm/metafeatures.hpp"
#include "snm/model.hpp"

namespace snm {

/// d log P(e) / d A_fw for a feature f present in e:
///   M_fw * (1_w(e) / y_t(e) - 1 / y(e)).
inline double event_link_gradient(double m_fw, bool is_target, double y_t, double y) {
  return m_fw * ((is_target ? 1.0 / y_t : 0.0) - 1.0 / y);
}

/// The two maps of one mini-batch. `first_term` holds, per link (f, t(e))
/// seen in the batch, sum_e M_fw / y_t(e); `alpha` holds, per feature,
/// sum_e 1 / y(e).
class BatchAccumulator {
 public:
  static std::uint64_t link_key(RowId r, std::size_t link) { return (static_cast<std::uint64_t>(r) << 32) | link; }

  /// Adds one event scored against M. Events whose target is unreachable
  /// (y_t = 0) carry no gradient and are only counted.
  EventScore add(const IndexedEvent& e, const SnmModel& m, const LinkTable& table) {
    const EventScore s = score_event(m, e);
    ++events_;
    log_prob_sum_ += s.log_prob;
    if (s.floored) {
      ++floored_;
      return s;
    }
    for (RowId r : e.rows) {
      auto [it, inserted] = alpha_.try_emplace(r, 0.0);
      if (inserted) order_.push_back(r);
      it->second += 1.0 / s.y;
      if (auto li = table.find_link(r, e.target)) first_term_[link_key(r, *li)] += m.row(r).links[*li].second / s.y_t;
    }
    return s;
  }

  const std::vector<RowId>& features() const noexcept { return order_; }
  double alpha(RowId r) const {
    auto it = alpha_.find(r);
    return it == alpha_.end() ? 0.0 : it->second;
  }
  double first_term(RowId r, std::size_t link) const {
    auto it = first_term_.find(link_key(r, link));
    return it == first_term_.end() ? 0.0 : it->second;
  }
  const std::unordered_map<std::uint64_t, double>& first_terms() const noexcept { return first_term_; }

  std::size_t events() const noexcept { return events_; }
  std::size_t floored() const noexcept { return floored_; }
  double log_prob_sum() const noexcept { return log_prob_sum_; }

 private:
  std::vector<RowId> order_;
  std::unordered_map<RowId, double> alpha_;
  std::unordered_map<std::uint64_t, double> first_term_;
  std::size_t events_ = 0;
  std::size_t floored_ = 0;
  double log_prob_sum_ = 0.0;
};

/// Sparse gradient over theta, sorted by index.
using ThetaGradient = std::vector<std::pair<std::size_t, double>>;

/// Back-propagates a link-level gradient map into theta space.
class ThetaGradientBuilder {
 public:
  explicit ThetaGradientBuilder(const AdjustmentModel& adj) : adj_(adj) {}

  void add_link(const LinkTable& table, RowId r, std::size_t link, double g) {
    if (g == 0.0) return;
    scratch_.clear();
    table.metafeatures(r, link, adj_.mode, scratch_);
    for (const auto& mf : scratch_) grad_[hash_index(mf, adj_.table_size())] += g * mf.weight;
  }

  ThetaGradient finish() const {
    ThetaGradient out(grad_.begin(), grad_.end());
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  const AdjustmentModel& adj_;
  std::vector<MetaFeature> scratch_;
  std::unordered_map<std::size_t, double> grad_;
};

/// sum_{e in B} d log P(e) / d theta_k for the batch held in `acc`:
/// per link, first_term(f, w) - M_fw * alpha_f, spread over the link's
/// meta-features.
inline ThetaGradient theta_gradient(const BatchAccumulator& acc, const SnmModel& m, const LinkTable& table,
                                    const AdjustmentModel& adj) {
  ThetaGradientBuilder builder(adj);
  for (RowId r : acc.features()) {
    const double alpha = acc.alpha(r);
    const auto& links = m.row(r).links;
    for (std::size_t i = 0; i < links.size(); ++i)
      builder.add_link(table, r, i, acc.first_term(r, i) - links[i].second * alpha);
  }
  return builder.finish();
}

/// theta_k += gamma / sqrt(delta0 + sum of squared batch gradients) * g_k,
/// with the current batch included in the history (gradient ascent).
inline void apply_adagrad(AdjustmentModel& adj, const ThetaGradient& grad) {
  for (const auto& [k, g] : grad) {
    adj.grad_sq_accum[k] += g * g;
    adj.theta[k] += adj.learning_rate(k) * g;
  }
}

struct BatchStats {
  std::size_t events = 0;
  std::size_t floored = 0;
  double log_prob_sum = 0.0;
  std::size_t updated_weights = 0;
};

/// Rows touched by a batch, in first-seen order.
inline std::vector<RowId> batch_rows(std::span<const IndexedEvent> batch, std::size_t num_rows) {
  std::vector<RowId> rows;
  std::vector<bool> seen(num_rows, false);
  for (const auto& e : batch)
    for (RowId r : e.rows)
      if (!seen[r]) {
        seen[r] = true;
        rows.push_back(r);
      }
  return rows;
}

/// One mini-batch step. The batch's rows get M_fw from the current theta;
/// their normalizers M_f* stay as last renormalized, so y(e) is stale
/// within an epoch.
inline BatchStats process_batch(std::span<const IndexedEvent> batch, SnmModel& m, const LinkTable& table,
                                AdjustmentModel& adj) {
  if (batch.empty()) throw DataError("empty mini-batch");
  refresh_links(m, adj, table, batch_rows(batch, m.size()));
  BatchAccumulator acc;
  for (const auto& e : batch) acc.add(e, m, table);
  const auto grad = theta_gradient(acc, m, table, adj);
  apply_adagrad(adj, grad);
  return {acc.events(), acc.floored(), acc.log_prob_sum(), grad.size()};
}

struct EpochStats {
  std::size_t epoch = 0;  // 0 = before training
  std::size_t events = 0;
  double log_likelihood = 0.0;  // natural log, summed over dev events
  double perplexity = std::numeric_limits<double>::quiet_NaN();
  std::size_t floored = 0;
  std::size_t nonzero_params = 0;
};

struct TrainOptions {
  std::size_t epochs = 1;
  bool renormalize_every_batch = false;
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  SnmModel model;
  std::vector<EpochStats> epochs;  // epochs[0] is the unadjusted starting point
};

inline EpochStats evaluate_dev(std::size_t epoch, std::span<const IndexedEvent> dev, const SnmModel& m,
                               const AdjustmentModel& adj) {
  EpochStats s;
  s.epoch = epoch;
  s.nonzero_params = adj.nonzero();
  detail::LogProbSum ll;
  for (const auto& e : dev) {
    const auto score = score_event(m, e);
    ll.add(detail::extended_log_prob(score));
    if (score.floored) ++s.floored;
    ++s.events;
  }
  s.log_likelihood = static_cast<double>(ll.value());
  if (s.events > 0) s.perplexity = detail::perplexity_of_sum(ll.value(), s.events);
  return s;
}

/// Trains `adj` on dev events in corpus order, `adj.batch_size` events per
/// step, recomputing every M_f* at the end of each epoch.
inline TrainResult train(std::span<const IndexedEvent> dev, const LinkTable& table, AdjustmentModel& adj,
                         const TrainOptions& options) {
  if (options.epochs < 1) throw UsageError("epochs must be >= 1");
  TrainResult result{materialize(table, adj), {}};
  auto report = [&](std::size_t epoch) {
    result.epochs.push_back(evaluate_dev(epoch, dev, result.model, adj));
    if (options.on_epoch) options.on_epoch(result.epochs.back());
  };
  report(0);
  if (dev.empty()) return result;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    for (std::size_t begin = 0; begin < dev.size(); begin += adj.batch_size) {
      const std::size_t end = std::min(dev.size(), begin + adj.batch_size);
      process_batch(dev.subspan(begin, end - begin), result.model, table, adj);
      if (options.renormalize_every_batch) renormalize(result.model, adj, table);
    }
    if (!options.renormalize_every_batch) renormalize(result.model, adj, table);
    report(epoch);
  }
  return result;
}

}  // namespace snm
