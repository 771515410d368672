#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace rgcl {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

double dot(std::span<const double> a, std::span<const double> b);
/// Elementwise sum; shapes must match.
Matrix add(const Matrix& a, const Matrix& b);
double squared_norm(std::span<const double> a);

/// log(sum(exp(v))) with max-shift. Throws std::invalid_argument("empty reduction")
/// on empty input and on non-finite entries.
double log_sum_exp(std::span<const double> values);

/// exp(v_j - lse(v)); entries strictly positive for finite input.
Vector softmax_shifted(std::span<const double> values);

/// 1-based ranks, ties receive the average of the positions they span.
Vector average_ranks(std::span<const double> values);

/// Spearman correlation with average-rank ties. Returns 0 when either side has
/// zero rank variance (correlation undefined).
double spearman_rank_corr(std::span<const double> a, std::span<const double> b);

/// Counter-based generator: draw k of a stream is splitmix64_mix(seed + k * golden),
/// so the sequence depends only on (seed, position). Sub-streams get a new seed
/// mixed from the parent seed and a purpose key; the parent is not advanced.
class RandomStream {
 public:
  static constexpr std::string_view algorithm = "splitmix64-counter-v1";

  explicit RandomStream(std::uint64_t seed, std::uint64_t position = 0) noexcept
      : seed_(seed), position_(position) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t position() const noexcept { return position_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  /// Uniform integer in [0, bound), unbiased. bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound) noexcept;
  /// Box-Muller, consumes two draws per value.
  double gaussian() noexcept;

  RandomStream split(std::string_view purpose) const noexcept;
  RandomStream split(std::uint64_t key) const noexcept;
  RandomStream split(std::string_view purpose, std::uint64_t key) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t position_;
};

std::uint64_t splitmix64_mix(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// n independent standard normal draws; advances the stream.
Vector draw_gaussian(RandomStream& stream, std::size_t n);

/// Worker cap from RGCL_THREADS (falls back to hardware concurrency).
std::size_t worker_count();

/// Runs body(i) for i in [0, count) over contiguous blocks. body must only
/// write state owned by index i.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t min_per_worker = 32);

}  // namespace rgcl
