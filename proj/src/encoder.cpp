#include "rgcl/encoder.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"

namespace rgcl {

namespace {

constexpr double kDegenerateNorm = 1e-12;

struct Forward {
  Vector pre_hidden;  // W1 x + b1
  Vector hidden;      // act(pre_hidden)
  Vector pre_norm;    // W2 h + b2
  double norm = 0.0;
};

Forward forward_row(const EncoderParams& p, std::span<const double> x) {
  Forward f;
  const std::size_t hidden = p.hidden_dim();
  const std::size_t embed = p.embed_dim();
  f.pre_hidden.resize(hidden);
  f.hidden.resize(hidden);
  for (std::size_t h = 0; h < hidden; ++h) {
    f.pre_hidden[h] = dot(p.w1.row(h), x) + p.b1[h];
    f.hidden[h] = p.activation == Activation::tanh ? std::tanh(f.pre_hidden[h]) : f.pre_hidden[h];
  }
  f.pre_norm.resize(embed);
  for (std::size_t e = 0; e < embed; ++e) f.pre_norm[e] = dot(p.w2.row(e), f.hidden) + p.b2[e];
  f.norm = std::sqrt(squared_norm(f.pre_norm));
  if (!(f.norm >= kDegenerateNorm)) throw std::domain_error("degenerate embedding");
  return f;
}

}  // namespace

std::size_t EncoderParams::param_count() const noexcept {
  return w1.size() + b1.size() + w2.size() + b2.size();
}

void EncoderParams::check_shapes() const {
  if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows())
    throw std::invalid_argument("encoder parameter shapes are inconsistent");
}

Vector EncoderParams::flatten() const {
  Vector flat;
  flat.reserve(param_count());
  flat.insert(flat.end(), w1.values().begin(), w1.values().end());
  flat.insert(flat.end(), b1.begin(), b1.end());
  flat.insert(flat.end(), w2.values().begin(), w2.values().end());
  flat.insert(flat.end(), b2.begin(), b2.end());
  return flat;
}

void EncoderParams::assign_flat(std::span<const double> flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("flat parameter length " + std::to_string(flat.size()) +
                                " does not match " + std::to_string(param_count()));
  auto it = flat.begin();
  auto take = [&it](std::span<double> dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  take(w1.values());
  take(b1);
  take(w2.values());
  take(b2);
}

EncoderParams EncoderParams::zeros(std::size_t input, std::size_t hidden, std::size_t embed,
                                   Activation activation) {
  EncoderParams p;
  p.w1 = Matrix(hidden, input);
  p.b1 = Vector(hidden, 0.0);
  p.w2 = Matrix(embed, hidden);
  p.b2 = Vector(embed, 0.0);
  p.activation = activation;
  return p;
}

EncoderParams init_encoder(std::size_t input, std::size_t hidden, std::size_t embed,
                           Activation activation, const RandomStream& stream) {
  if (input == 0 || hidden == 0 || embed == 0)
    throw std::invalid_argument("encoder dimensions must be positive");
  EncoderParams p = EncoderParams::zeros(input, hidden, embed, activation);
  RandomStream rs = stream.split("encoder_init");
  auto fill = [&rs](std::span<double> dst, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : dst) v = (2.0 * rs.uniform() - 1.0) * bound;
  };
  fill(p.w1.values(), input);
  fill(p.b1, input);
  fill(p.w2.values(), hidden);
  fill(p.b2, hidden);
  return p;
}

EmbeddingBatch encode(const EncoderParams& params, const Matrix& inputs) {
  params.check_shapes();
  if (inputs.cols() != params.input_dim())
    throw std::invalid_argument("encode: input has " + std::to_string(inputs.cols()) +
                                " columns, encoder expects " + std::to_string(params.input_dim()));
  EmbeddingBatch out;
  out.rows = Matrix(inputs.rows(), params.embed_dim());
  out.index.resize(inputs.rows());
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    const Forward f = forward_row(params, inputs.row(r));
    auto y = out.rows.row(r);
    for (std::size_t e = 0; e < y.size(); ++e) y[e] = f.pre_norm[e] / f.norm;
    out.index[r] = r;
  }
  return out;
}

EncoderParams encode_backward(const EncoderParams& params, const Matrix& inputs,
                              const Matrix& grad_embeddings) {
  params.check_shapes();
  if (inputs.cols() != params.input_dim())
    throw std::invalid_argument("encode_backward: input width mismatch");
  if (grad_embeddings.rows() != inputs.rows() || grad_embeddings.cols() != params.embed_dim())
    throw std::invalid_argument("encode_backward: gradient shape mismatch");

  EncoderParams grad = EncoderParams::zeros(params.input_dim(), params.hidden_dim(),
                                            params.embed_dim(), params.activation);
  const std::size_t hidden = params.hidden_dim();
  const std::size_t embed = params.embed_dim();
  Vector d_pre_norm(embed);
  Vector d_hidden(hidden);

  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    const auto gy = grad_embeddings.row(r);
    bool zero_row = true;
    for (double v : gy) zero_row = zero_row && v == 0.0;
    if (zero_row) continue;

    const auto x = inputs.row(r);
    const Forward f = forward_row(params, x);
    // (I - y y^T) gy / |a|
    double y_dot_g = 0.0;
    for (std::size_t e = 0; e < embed; ++e) y_dot_g += (f.pre_norm[e] / f.norm) * gy[e];
    for (std::size_t e = 0; e < embed; ++e)
      d_pre_norm[e] = (gy[e] - (f.pre_norm[e] / f.norm) * y_dot_g) / f.norm;

    std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
    for (std::size_t e = 0; e < embed; ++e) {
      const double d = d_pre_norm[e];
      grad.b2[e] += d;
      auto gw2 = grad.w2.row(e);
      const auto w2 = params.w2.row(e);
      for (std::size_t h = 0; h < hidden; ++h) {
        gw2[h] += d * f.hidden[h];
        d_hidden[h] += w2[h] * d;
      }
    }
    for (std::size_t h = 0; h < hidden; ++h) {
      double d = d_hidden[h];
      if (params.activation == Activation::tanh) d *= 1.0 - f.hidden[h] * f.hidden[h];
      grad.b1[h] += d;
      auto gw1 = grad.w1.row(h);
      for (std::size_t c = 0; c < x.size(); ++c) gw1[c] += d * x[c];
    }
  }
  return grad;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) { return dot(a, b); }

void save_encoder(const EncoderParams& params, const std::filesystem::path& path) {
  params.check_shapes();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  detail::write_magic(os, "RGCLENC1");
  detail::write_pod<std::uint32_t>(os, 1);
  detail::write_pod<std::uint32_t>(os, params.activation == Activation::tanh ? 1 : 0);
  detail::write_pod<std::uint64_t>(os, params.input_dim());
  detail::write_pod<std::uint64_t>(os, params.hidden_dim());
  detail::write_pod<std::uint64_t>(os, params.embed_dim());
  detail::write_doubles(os, params.flatten());
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

EncoderParams load_encoder(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  detail::expect_magic(is, "RGCLENC1");
  if (detail::read_pod<std::uint32_t>(is) != 1) throw std::runtime_error("unsupported encoder checkpoint version");
  const auto act = detail::read_pod<std::uint32_t>(is);
  if (act > 1) throw std::runtime_error("unknown activation tag in encoder checkpoint");
  const auto input = detail::read_pod<std::uint64_t>(is);
  const auto hidden = detail::read_pod<std::uint64_t>(is);
  const auto embed = detail::read_pod<std::uint64_t>(is);
  EncoderParams p = EncoderParams::zeros(input, hidden, embed,
                                         act == 1 ? Activation::tanh : Activation::identity);
  Vector flat(p.param_count());
  detail::read_doubles(is, flat);
  p.assign_flat(flat);
  return p;
}

nlohmann::json encoder_to_json(const EncoderParams& params) {
  auto matrix_json = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row(r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
  };
  return {
      {"activation", params.activation == Activation::tanh ? "tanh" : "identity"},
      {"input_dim", params.input_dim()},
      {"hidden_dim", params.hidden_dim()},
      {"embed_dim", params.embed_dim()},
      {"w1", matrix_json(params.w1)},
      {"b1", params.b1},
      {"w2", matrix_json(params.w2)},
      {"b2", params.b2},
  };
}

}  // namespace rgcl
