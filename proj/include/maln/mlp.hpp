#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "maln/tensor.hpp"

namespace maln {

struct MlpShape {
  std::size_t vocab = 1;          // rows of the embedding table
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 32;
  std::size_t hidden_layers = 1;  // affine+ReLU layers before the output affine
  std::size_t output_dim = 1;
};

/// Embedding lookup followed by `hidden_layers` affine+ReLU layers and a
/// final affine layer. All parameters live in one flat vector:
///
///   [embedding (vocab x embed_dim)] [W0 (out x in)] [b0 (out)] ... [W_L] [b_L]
///
/// so optimizers and finite-difference checks can treat them uniformly.
class Mlp {
 public:
  struct Layer {
    std::size_t in;
    std::size_t out;
    std::size_t weight_offset;  // row-major (out, in)
    std::size_t bias_offset;
  };

  /// All parameters zero.
  explicit Mlp(const MlpShape& shape);
  /// Embedding ~ N(0, 1), weights ~ N(0, 2 / fan_in), biases zero.
  static Mlp he_init(const MlpShape& shape, std::uint64_t seed);

  const MlpShape& shape() const noexcept { return shape_; }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::span<double> embedding(std::size_t id);
  std::span<double> weights(std::size_t layer);
  std::span<double> bias(std::size_t layer);

  /// (ids.size(), output_dim) outputs. Throws InputError on an id >= vocab.
  Tensor forward(std::span<const std::size_t> ids) const;

  /// Reverse-mode gradient of sum(d_output * forward(ids)) with respect to
  /// every parameter, in the flat layout above.
  std::vector<double> backward(std::span<const std::size_t> ids, const Tensor& d_output) const;

 private:
  void check_ids(std::span<const std::size_t> ids) const;

  MlpShape shape_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

}  // namespace maln
