#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "rgcl/numerics.hpp"

namespace rgcl {

enum class Activation { identity, tanh };

/// Two-layer encoder x -> normalize(W2 act(W1 x + b1) + b2).
struct EncoderParams {
  Matrix w1;  // hidden x input
  Vector b1;  // hidden
  Matrix w2;  // embed x hidden
  Vector b2;  // embed
  Activation activation = Activation::identity;

  std::size_t input_dim() const noexcept { return w1.cols(); }
  std::size_t hidden_dim() const noexcept { return w1.rows(); }
  std::size_t embed_dim() const noexcept { return w2.rows(); }
  std::size_t param_count() const noexcept;

  /// Throws std::invalid_argument if the four blocks disagree on shape.
  void check_shapes() const;

  /// Layout: w1 (row-major), b1, w2 (row-major), b2.
  Vector flatten() const;
  void assign_flat(std::span<const double> flat);

  static EncoderParams zeros(std::size_t input, std::size_t hidden, std::size_t embed,
                             Activation activation = Activation::identity);

  bool operator==(const EncoderParams&) const = default;
};

/// Entries uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn from stream.split("encoder_init").
EncoderParams init_encoder(std::size_t input, std::size_t hidden, std::size_t embed,
                           Activation activation, const RandomStream& stream);

struct EmbeddingBatch {
  Matrix rows;                     // unit-norm rows
  std::vector<std::size_t> index;  // dataset index of each row
};

/// Pre-normalization vectors with norm < 1e-12 raise std::domain_error("degenerate embedding").
EmbeddingBatch encode(const EncoderParams& params, const Matrix& inputs);

/// Gradient of sum_r <grad_embeddings[r], encode(inputs)[r]> with respect to params.
EncoderParams encode_backward(const EncoderParams& params, const Matrix& inputs,
                              const Matrix& grad_embeddings);

/// Inner product of two unit vectors.
double cosine_sim(std::span<const double> a, std::span<const double> b);

/// Binary checkpoint, little-endian:
///   char[8] "RGCLENC1" | u32 version=1 | u32 activation (0 identity, 1 tanh)
///   | u64 input | u64 hidden | u64 embed | f64[param_count] flatten()
void save_encoder(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_encoder(const std::filesystem::path& path);

nlohmann::json encoder_to_json(const EncoderParams& params);

}  // namespace rgcl
