#pragma once

// Hashed linear adjustment function A(f, w; theta) and its binary file.
//
// Adjustment file (little-endian):
//   char[8]  magic "SNMADJ\0\1"
//   u32      version (1)
//   u8       meta-feature mode
//   u8[3]    zero padding
//   u64      hash scheme id
//   u64      table size
//   f64      gamma
//   f64      delta0
//   f64[n]   theta

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "snm/error.hpp"
#include "snm/hash.hpp"
#include "snm/metafeatures.hpp"

namespace snm {

struct AdjustmentModel {
  std::vector<double> theta;
  std::vector<double> grad_sq_accum;  // AdaGrad history, sum of squared batch gradients
  double gamma = 0.1;
  double delta0 = 1.0;
  std::size_t batch_size = 2048;
  MetaFeatureMode mode = MetaFeatureMode::Full;

  AdjustmentModel() = default;

  explicit AdjustmentModel(std::size_t table_size, MetaFeatureMode m = MetaFeatureMode::Full, double gamma_ = 0.1,
                           double delta0_ = 1.0, std::size_t batch = 2048)
      : theta(table_size, 0.0), grad_sq_accum(table_size, 0.0), gamma(gamma_), delta0(delta0_), batch_size(batch),
        mode(m) {
    if (table_size < 1) throw UsageError("table_size must be >= 1");
    if (batch < 1) throw UsageError("batch_size must be >= 1");
    if (!(gamma_ > 0.0)) throw UsageError("gamma must be > 0");
    if (!(delta0_ > 0.0)) throw UsageError("delta0 must be > 0");
  }

  std::size_t table_size() const noexcept { return theta.size(); }

  /// AdaGrad learning rate of weight k given the history so far.
  double learning_rate(std::size_t k) const { return gamma / std::sqrt(delta0 + grad_sq_accum[k]); }

  std::size_t nonzero() const {
    return static_cast<std::size_t>(std::count_if(theta.begin(), theta.end(), [](double t) { return t != 0.0; }));
  }
};

/// A(f, w) = sum_k theta[index(h_k)] * weight(h_k).
inline double adjust(std::span<const MetaFeature> metafeatures, const AdjustmentModel& model) {
  double a = 0.0;
  for (const auto& mf : metafeatures) a += model.theta[hash_index(mf, model.table_size())] * mf.weight;
  return a;
}

namespace detail {

inline constexpr std::array<char, 8> kAdjustmentMagic = {'S', 'N', 'M', 'A', 'D', 'J', '\0', '\1'};

template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  T value{};
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw DataError("truncated adjustment file");
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace detail

inline void save_adjustment(std::ostream& out, const AdjustmentModel& m) {
  out.write(detail::kAdjustmentMagic.data(), detail::kAdjustmentMagic.size());
  detail::write_le<std::uint32_t>(out, 1);
  detail::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(m.mode));
  for (int i = 0; i < 3; ++i) detail::write_le<std::uint8_t>(out, 0);
  detail::write_le<std::uint64_t>(out, scheme_id());
  detail::write_le<std::uint64_t>(out, m.table_size());
  detail::write_le<double>(out, m.gamma);
  detail::write_le<double>(out, m.delta0);
  for (double t : m.theta) detail::write_le<double>(out, t);
}

inline AdjustmentModel load_adjustment(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != detail::kAdjustmentMagic)
    throw DataError("not an adjustment file (bad magic)");
  if (detail::read_le<std::uint32_t>(in) != 1) throw DataError("unsupported adjustment file version");
  const auto mode = detail::read_le<std::uint8_t>(in);
  if (mode > 2) throw DataError("bad meta-feature mode in adjustment file");
  for (int i = 0; i < 3; ++i) detail::read_le<std::uint8_t>(in);
  if (detail::read_le<std::uint64_t>(in) != scheme_id()) throw DataError("adjustment file uses another hash scheme");
  const auto size = detail::read_le<std::uint64_t>(in);
  const double gamma = detail::read_le<double>(in);
  const double delta0 = detail::read_le<double>(in);
  if (size < 1 || size > (std::uint64_t{1} << 40)) throw DataError("bad table size in adjustment file");
  if (!(gamma > 0.0) || !(delta0 > 0.0)) throw DataError("bad AdaGrad settings in adjustment file");
  AdjustmentModel m(size, static_cast<MetaFeatureMode>(mode), gamma, delta0);
  for (auto& t : m.theta) t = detail::read_le<double>(in);
  return m;
}

}  // namespace snm
