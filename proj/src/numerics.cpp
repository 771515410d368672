#include "rgcl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

namespace rgcl {

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("add: shape mismatch");
  Matrix out = a;
  auto o = out.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("empty reduction");
  double vmax = values[0];
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("log_sum_exp: non-finite input");
    vmax = std::max(vmax, v);
  }
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - vmax);
  return vmax + std::log(acc);
}

Vector softmax_shifted(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("empty reduction");
  const double lse = log_sum_exp(values);
  Vector out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::exp(values[i] - lse);
  return out;
}

Vector average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  Vector ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share rank mean((i+1)..(j+1))
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_rank_corr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman_rank_corr: length mismatch");
  if (a.size() < 3) throw std::invalid_argument("spearman_rank_corr: need at least 3 values");
  const Vector ra = average_ranks(a);
  const Vector rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t RandomStream::next_u64() noexcept {
  ++position_;
  return splitmix64_mix(seed_ + position_ * kGolden);
}

double RandomStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::uniform_below(std::uint64_t bound) noexcept {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

double RandomStream::gaussian() noexcept {
  // (k + 0.5) * 2^-53 keeps u1 strictly inside (0, 1)
  const double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RandomStream RandomStream::split(std::string_view purpose) const noexcept {
  return RandomStream(splitmix64_mix(seed_ ^ splitmix64_mix(fnv1a64(purpose))));
}

RandomStream RandomStream::split(std::uint64_t key) const noexcept {
  return RandomStream(splitmix64_mix(seed_ + splitmix64_mix(key ^ kGolden)));
}

RandomStream RandomStream::split(std::string_view purpose, std::uint64_t key) const noexcept {
  return split(purpose).split(key);
}

Vector draw_gaussian(RandomStream& stream, std::size_t n) {
  Vector out(n);
  for (auto& v : out) v = stream.gaussian();
  return out;
}

std::size_t worker_count() {
  std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RGCL_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) hw = std::min<std::size_t>(hw, static_cast<std::size_t>(cap));
    } catch (const std::exception&) {
      // unparsable values are ignored
    }
  }
  return hw;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t min_per_worker) {
  const std::size_t workers =
      std::min(worker_count(), std::max<std::size_t>(1, count / std::max<std::size_t>(1, min_per_worker)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(count, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&body, &errors, w, lo, hi] {
        try {
          for (std::size_t i = lo; i < hi; ++i) body(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace rgcl
