#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace tfr {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile (inverse CDF), accurate to full double
/// precision (Wichura's PPND16 algorithm). p must lie strictly in (0, 1).
double normal_quantile(double p);

/// 64-bit FNV-1a hash, used to derive stable stream labels from strings.
std::uint64_t fnv1a64(std::string_view text);

/// Deterministic random stream.
///
/// All draws are produced from a mt19937_64 engine through fixed
/// transformations owned by this class (no std::*_distribution), so a given
/// seed yields the same sequence on every build of this library on one
/// platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t state) : gen_(state) {}

  /// Uniform draw strictly inside (0, 1).
  double u01();

  /// Standard normal draw (inverse-CDF method; consumes one uniform).
  double normal();

  double normal(double mean, double sd);

  /// Draw from a normal truncated to [lo, hi] by inverse-CDF sampling.
  /// sd == 0 degenerates to clamp(mean, lo, hi).
  double truncated_normal(double mean, double sd, double lo, double hi);

  std::uint64_t next_u64() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

/// Derive an independent stream from a root seed and a label path.
/// Streams with different labels are decorrelated; adding one label never
/// perturbs streams derived under another.
RngStream derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> labels);

}  // namespace tfr
