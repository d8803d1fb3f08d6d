#pragma once

// Minimal feed-forward network: dense, conv2d, relu, max-pool and flatten
// layers with reverse-mode gradients seeded by a loss gradient on the logits.

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "sosr/matrix.hpp"
#include "sosr/tensor.hpp"

namespace sosr {

struct DenseSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  friend bool operator==(const DenseSpec&, const DenseSpec&) = default;
};

struct Conv2dSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  friend bool operator==(const Conv2dSpec&, const Conv2dSpec&) = default;
};

struct ReluSpec {
  friend bool operator==(const ReluSpec&, const ReluSpec&) = default;
};

struct MaxPool2dSpec {
  std::size_t size = 2;
  friend bool operator==(const MaxPool2dSpec&, const MaxPool2dSpec&) = default;
};

struct FlattenSpec {
  friend bool operator==(const FlattenSpec&, const FlattenSpec&) = default;
};

using LayerSpec = std::variant<DenseSpec, Conv2dSpec, ReluSpec, MaxPool2dSpec, FlattenSpec>;

std::string describe(const LayerSpec& layer);

/// Per-sample output shape of `layer` applied to per-sample `input`.
/// Throws InvalidInput when the layer cannot consume that shape.
Shape output_shape(const LayerSpec& layer, const Shape& input);

/// Parses a compact layer list such as
/// "conv:8:3:1:1,relu,pool:2,flatten,dense:64,relu,dense:10", inferring
/// input widths from `input_shape`. conv takes out_channels:kernel[:stride[:pad]].
std::vector<LayerSpec> parse_layers(const std::string& text, const Shape& input_shape);
std::string format_layers(const std::vector<LayerSpec>& layers);

template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
};

template <typename T>
class Model {
 public:
  Model() = default;

  /// Validates that `layers` compose on `input_shape` (per sample, no batch
  /// dimension) and initializes weights He-uniform in +-sqrt(6/fan_in) with
  /// zero biases.
  static Model build(std::vector<LayerSpec> layers, Shape input_shape, std::uint64_t seed);

  /// Builds the layer structure with zero parameters.
  static Model zeros(std::vector<LayerSpec> layers, Shape input_shape);

  /// Input is [M, input_shape...]. With record=true the activations needed by
  /// backward() are kept; record=false drops any previous recording.
  Tensor<T> forward(const Tensor<T>& input, bool record);

  /// Forward pass through the first `layer_count` layers without touching
  /// recorded state.
  Tensor<T> infer(const Tensor<T>& input, std::size_t layer_count) const;
  Tensor<T> infer(const Tensor<T>& input) const { return infer(input, layers_.size()); }

  /// Overwrites parameter grads with d(loss)/d(param) given d(loss)/d(logits).
  void backward(const Matrix& grad_logits);

  void zero_grad();

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  /// Per-sample shape after the first `layer_count` layers.
  Shape shape_after(std::size_t layer_count) const;
  std::size_t num_outputs() const;

  /// Weight then bias for each parametric layer, in layer order.
  std::vector<Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  bool has_recording() const noexcept { return !tape_.empty(); }

  template <typename U>
  Model<U> cast() const {
    Model<U> out = Model<U>::zeros(layers_, input_shape_);
    for (std::size_t p = 0; p < params_.size(); ++p) {
      auto& dst = out.parameters()[p].value;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<U>(params_[p].value[i]);
    }
    return out;
  }

 private:
  struct Record {
    Tensor<T> input;
    std::vector<std::size_t> pool_index;
  };

  Tensor<T> apply(std::size_t layer, const Tensor<T>& x, Record* record) const;
  Tensor<T> apply_backward(std::size_t layer, const Tensor<T>& grad_out, const Record& record);

  std::vector<LayerSpec> layers_;
  Shape input_shape_;
  std::vector<Parameter<T>> params_;
  std::vector<int> param_slot_;  // first parameter index per layer, -1 if none
  std::vector<Record> tape_;
};

extern template class Model<float>;
extern template class Model<double>;

template <typename T>
Model<T> build_model(std::vector<LayerSpec> layers, Shape input_shape, std::uint64_t seed) {
  return Model<T>::build(std::move(layers), std::move(input_shape), seed);
}

/// Copies a rank-2 [M, K] tensor into a double matrix.
template <typename T>
Matrix to_matrix(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw InvalidInput("logits must be a rank-2 tensor");
  Matrix out(logits.dim(0), logits.dim(1));
  for (std::size_t i = 0; i < logits.size(); ++i) out.data()[i] = static_cast<double>(logits[i]);
  return out;
}

}  // namespace sosr
