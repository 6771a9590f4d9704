// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace probsr::ad
{

struct Shape4
{
  int batch = 0;
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const
  {
    return static_cast<std::size_t>(batch) * channels * height * width;
  }
  std::string str() const;
  bool operator==(const Shape4 &) const = default;
};

/// Dense (batch, channels, height, width) tensor, row-major.
class Tensor4
{
public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, double value = 0.0);
  Tensor4(Shape4 shape, std::vector<double> data);

  const Shape4 &shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double> &values() { return data_; }
  const std::vector<double> &values() const { return data_; }

  double &operator()(int b, int c, int y, int x) { return data_[offset(b, c, y, x)]; }
  double operator()(int b, int c, int y, int x) const { return data_[offset(b, c, y, x)]; }

  /// Contiguous (height * width) plane for one (batch, channel) pair.
  std::span<double> plane(int b, int c);
  std::span<const double> plane(int b, int c) const;

private:
  std::size_t offset(int b, int c, int y, int x) const
  {
    return ((static_cast<std::size_t>(b) * shape_.channels + c) * shape_.height + y) * shape_.width + x;
  }

  Shape4 shape_;
  std::vector<double> data_;
};

/// 3x3 convolution kernel layout (out_channels, in_channels, kh, kw).
struct KernelShape
{
  int out_channels = 0;
  int in_channels = 0;
  int kh = 3;
  int kw = 3;

  std::size_t weight_count() const
  {
    return static_cast<std::size_t>(out_channels) * in_channels * kh * kw;
  }
  bool operator==(const KernelShape &) const = default;
};

/// A convolution layer whose weights and bias live at fixed offsets of a flat
/// parameter vector (weights first, then `out_channels` biases).
struct ConvLayer
{
  KernelShape kernel;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

// --- Stateless kernels -----------------------------------------------------

/// Zero-padded (pad 1, stride 1) 3x3 cross-correlation.
Tensor4 conv2d(const Tensor4 &input, const KernelShape &kernel, std::span<const double> weights,
               std::span<const double> bias);

Tensor4 relu(const Tensor4 &input);

/// 2x2 max pooling, stride 2. `argmax`, when given, receives the flat input
/// index chosen for every output entry (first maximum in row-major scan).
Tensor4 maxpool2(const Tensor4 &input, std::vector<std::size_t> *argmax = nullptr);

/// Separable cubic-convolution resampling (a = -0.75), corner-aligned
/// (src = dst (in - 1) / (out - 1)), edge samples clamped.
Tensor4 bicubic_resample(const Tensor4 &input, int out_h, int out_w);

/// Exact adjoint of bicubic_resample: maps an (out_h, out_w) gradient back to
/// the (in_h, in_w) input lattice.
Tensor4 bicubic_resample_transpose(const Tensor4 &grad_output, int in_h, int in_w);

// --- Tape ------------------------------------------------------------------

struct Gradients
{
  Tensor4 input;
  std::vector<double> params;
};

/// Records a linear chain of ops for one reverse pass. The tape keeps a view
/// of the parameter vector, which must outlive it.
class Tape
{
public:
  explicit Tape(std::span<const double> params, bool want_param_grads = true);

  Tensor4 conv2d(const Tensor4 &input, const ConvLayer &layer);
  Tensor4 relu(const Tensor4 &input);
  Tensor4 maxpool2(const Tensor4 &input);
  Tensor4 bicubic_resample(const Tensor4 &input, int out_h, int out_w);

  /// Reverse pass from `seed` (gradient w.r.t. the last recorded output).
  /// Throws TapeReuseError on a second call.
  Gradients backward(const Tensor4 &seed);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// ReLU activation masks and pooling argmax choices of the recorded pass.
  /// Two inputs with equal signatures lie on the same smooth piece.
  std::vector<std::uint64_t> kink_signature() const;

private:
  struct ConvNode
  {
    Tensor4 input;
    ConvLayer layer;
    Shape4 output_shape;
  };
  struct ReluNode
  {
    Tensor4 input;
  };
  struct PoolNode
  {
    Shape4 input_shape;
    Shape4 output_shape;
    std::vector<std::size_t> argmax;
  };
  struct ResampleNode
  {
    Shape4 input_shape;
    Shape4 output_shape;
  };
  using Node = std::variant<ConvNode, ReluNode, PoolNode, ResampleNode>;

  Shape4 last_output_shape() const;

  std::span<const double> params_;
  bool want_param_grads_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

}  // namespace probsr::ad
