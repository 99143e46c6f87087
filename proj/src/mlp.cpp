#include "maln/mlp.hpp"

#include <cmath>
#include <random>
#include <string>

#include "maln/errors.hpp"

namespace maln {

namespace {

// y = W x + b for one row.
void affine(std::span<const double> params, const Mlp::Layer& layer, const double* x, double* y) {
  const double* w = params.data() + layer.weight_offset;
  const double* b = params.data() + layer.bias_offset;
  for (std::size_t o = 0; o < layer.out; ++o) {
    double acc = b[o];
    const double* wr = w + o * layer.in;
    for (std::size_t i = 0; i < layer.in; ++i) acc += wr[i] * x[i];
    y[o] = acc;
  }
}

}  // namespace

Mlp::Mlp(const MlpShape& shape) : shape_(shape) {
  if (shape.vocab == 0 || shape.embed_dim == 0 || shape.output_dim == 0 ||
      (shape.hidden_layers > 0 && shape.hidden_dim == 0)) {
    throw ConfigError("mlp shape sizes must be positive");
  }
  std::size_t offset = shape.vocab * shape.embed_dim;
  std::size_t in = shape.embed_dim;
  for (std::size_t l = 0; l <= shape.hidden_layers; ++l) {
    const std::size_t out = l == shape.hidden_layers ? shape.output_dim : shape.hidden_dim;
    layers_.push_back({in, out, offset, offset + in * out});
    offset += in * out + out;
    in = out;
  }
  params_.assign(offset, 0.0);
}

Mlp Mlp::he_init(const MlpShape& shape, std::uint64_t seed) {
  Mlp net(shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < shape.vocab * shape.embed_dim; ++i) net.params_[i] = unit(rng);
  for (const auto& layer : net.layers_) {
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.in));
    for (std::size_t i = 0; i < layer.in * layer.out; ++i) {
      net.params_[layer.weight_offset + i] = scale * unit(rng);
    }
  }
  return net;
}

std::span<double> Mlp::embedding(std::size_t id) {
  if (id >= shape_.vocab) throw InputError("embedding id out of range");
  return std::span<double>(params_).subspan(id * shape_.embed_dim, shape_.embed_dim);
}

std::span<double> Mlp::weights(std::size_t layer) {
  const auto& l = layers_.at(layer);
  return std::span<double>(params_).subspan(l.weight_offset, l.in * l.out);
}

std::span<double> Mlp::bias(std::size_t layer) {
  const auto& l = layers_.at(layer);
  return std::span<double>(params_).subspan(l.bias_offset, l.out);
}

void Mlp::check_ids(std::span<const std::size_t> ids) const {
  if (ids.empty()) throw InputError("mlp: empty id sequence");
  for (std::size_t id : ids) {
    if (id >= shape_.vocab) {
      throw InputError("mlp: token id " + std::to_string(id) + " out of range for vocab " +
                       std::to_string(shape_.vocab));
    }
  }
}

Tensor Mlp::forward(std::span<const std::size_t> ids) const {
  check_ids(ids);
  std::vector<double> out(ids.size() * shape_.output_dim);
  std::vector<double> x, y;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const double* emb = params_.data() + ids[r] * shape_.embed_dim;
    x.assign(emb, emb + shape_.embed_dim);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      y.resize(layers_[l].out);
      affine(params_, layers_[l], x.data(), y.data());
      if (l + 1 < layers_.size()) {
        for (double& v : y) v = v > 0.0 ? v : 0.0;
      }
      std::swap(x, y);
    }
    std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(r * shape_.output_dim));
  }
  return Tensor({ids.size(), shape_.output_dim}, std::move(out));
}

std::vector<double> Mlp::backward(std::span<const std::size_t> ids, const Tensor& d_output) const {
  check_ids(ids);
  if (d_output.rank() != 2 || d_output.dim(0) != ids.size() || d_output.dim(1) != shape_.output_dim) {
    throw ShapeError("mlp backward: upstream gradient must be (ids, output_dim)");
  }
  std::vector<double> grad(params_.size(), 0.0);
  const std::size_t depth = layers_.size();

  // inputs[l] is the input to layer l; pre[l] its pre-activation output.
  std::vector<std::vector<double>> inputs(depth), pre(depth);
  std::vector<double> delta, next;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const double* emb = params_.data() + ids[r] * shape_.embed_dim;
    inputs[0].assign(emb, emb + shape_.embed_dim);
    for (std::size_t l = 0; l < depth; ++l) {
      pre[l].resize(layers_[l].out);
      affine(params_, layers_[l], inputs[l].data(), pre[l].data());
      if (l + 1 < depth) {
        inputs[l + 1].resize(layers_[l].out);
        for (std::size_t o = 0; o < layers_[l].out; ++o) inputs[l + 1][o] = std::max(pre[l][o], 0.0);
      }
    }

    const auto up = d_output.row(r);
    delta.assign(up.begin(), up.end());
    for (std::size_t l = depth; l-- > 0;) {
      const auto& layer = layers_[l];
      if (l + 1 < depth) {
        for (std::size_t o = 0; o < layer.out; ++o) {
          if (pre[l][o] <= 0.0) delta[o] = 0.0;
        }
      }
      double* gw = grad.data() + layer.weight_offset;
      double* gb = grad.data() + layer.bias_offset;
      const double* w = params_.data() + layer.weight_offset;
      next.assign(layer.in, 0.0);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double g = delta[o];
        gb[o] += g;
        if (g == 0.0) continue;
        for (std::size_t i = 0; i < layer.in; ++i) {
          gw[o * layer.in + i] += g * inputs[l][i];
          next[i] += g * w[o * layer.in + i];
        }
      }
      std::swap(delta, next);
    }
    double* gemb = grad.data() + ids[r] * shape_.embed_dim;
    for (std::size_t i = 0; i < shape_.embed_dim; ++i) gemb[i] += delta[i];
  }
  return grad;
}

}  // namespace maln
