// SPDX-License-Identifier: Apache-2.0

#include "probsr/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "probsr/errors.hpp"

namespace probsr::ad
{

std::string Shape4::str() const
{
  return "(" + std::to_string(batch) + ", " + std::to_string(channels) + ", " + std::to_string(height) +
         ", " + std::to_string(width) + ")";
}

Tensor4::Tensor4(Shape4 shape, double value) : shape_(shape), data_(shape.size(), value) {}

Tensor4::Tensor4(Shape4 shape, std::vector<double> data) : shape_(shape), data_(std::move(data))
{
  if (data_.size() != shape_.size())
  {
    throw ShapeError("tensor of shape " + shape_.str() + " needs " + std::to_string(shape_.size()) +
                     " values, got " + std::to_string(data_.size()));
  }
}

std::span<double> Tensor4::plane(int b, int c)
{
  const std::size_t hw = static_cast<std::size_t>(shape_.height) * shape_.width;
  return std::span<double>(data_).subspan(offset(b, c, 0, 0), hw);
}

std::span<const double> Tensor4::plane(int b, int c) const
{
  const std::size_t hw = static_cast<std::size_t>(shape_.height) * shape_.width;
  return std::span<const double>(data_).subspan(offset(b, c, 0, 0), hw);
}

namespace
{

void check_conv(const Shape4 &in, const KernelShape &k, std::size_t nweights, std::size_t nbias)
{
  if (k.kh != 3 || k.kw != 3)
  {
    throw ShapeError("conv2d supports 3x3 kernels only, got " + std::to_string(k.kh) + "x" +
                     std::to_string(k.kw));
  }
  if (in.channels != k.in_channels)
  {
    throw ShapeError("conv2d: input has " + std::to_string(in.channels) + " channels, kernel expects " +
                     std::to_string(k.in_channels));
  }
  if (nweights != k.weight_count())
  {
    throw ShapeError("conv2d: kernel needs " + std::to_string(k.weight_count()) + " weights, got " +
                     std::to_string(nweights));
  }
  if (nbias != static_cast<std::size_t>(k.out_channels))
  {
    throw ShapeError("conv2d: kernel needs " + std::to_string(k.out_channels) + " biases, got " +
                     std::to_string(nbias));
  }
}

// Valid output range [first, last) along one axis for a tap offset d in {-1, 0, 1}.
inline int range_first(int d) { return d < 0 ? 1 : 0; }
inline int range_last(int d, int extent) { return d > 0 ? extent - 1 : extent; }

// out_plane += w * shift(in_plane, dy, dx)
inline void accumulate_shifted(double *out, const double *in, double w, int dy, int dx, int H, int W)
{
  const int y0 = range_first(dy), y1 = range_last(dy, H);
  const int x0 = range_first(dx), x1 = range_last(dx, W);
  for (int y = y0; y < y1; ++y)
  {
    double *orow = out + static_cast<std::ptrdiff_t>(y) * W;
    const double *irow = in + static_cast<std::ptrdiff_t>(y + dy) * W + dx;
    for (int x = x0; x < x1; ++x)
    {
      orow[x] += w * irow[x];
    }
  }
}

// in_plane_grad[shifted] += w * out_grad
inline void scatter_shifted(double *gin, const double *gout, double w, int dy, int dx, int H, int W)
{
  const int y0 = range_first(dy), y1 = range_last(dy, H);
  const int x0 = range_first(dx), x1 = range_last(dx, W);
  for (int y = y0; y < y1; ++y)
  {
    const double *grow = gout + static_cast<std::ptrdiff_t>(y) * W;
    double *irow = gin + static_cast<std::ptrdiff_t>(y + dy) * W + dx;
    for (int x = x0; x < x1; ++x)
    {
      irow[x] += w * grow[x];
    }
  }
}

inline double correlate_shifted(const double *gout, const double *in, int dy, int dx, int H, int W)
{
  const int y0 = range_first(dy), y1 = range_last(dy, H);
  const int x0 = range_first(dx), x1 = range_last(dx, W);
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  for (int y = y0; y < y1; ++y)
  {
    const double *grow = gout + static_cast<std::ptrdiff_t>(y) * W;
    const double *irow = in + static_cast<std::ptrdiff_t>(y + dy) * W + dx;
    int x = x0;
    for (; x + 4 <= x1; x += 4)
    {
      acc[0] += grow[x] * irow[x];
      acc[1] += grow[x + 1] * irow[x + 1];
      acc[2] += grow[x + 2] * irow[x + 2];
      acc[3] += grow[x + 3] * irow[x + 3];
    }
    for (; x < x1; ++x)
    {
      acc[0] += grow[x] * irow[x];
    }
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

void conv2d_backward(const Tensor4 &input, const KernelShape &k, std::span<const double> weights,
                     const Tensor4 &grad_out, Tensor4 *grad_in, std::span<double> grad_w,
                     std::span<double> grad_b)
{
  const Shape4 &s = input.shape();
  const int H = s.height, W = s.width;
  for (int b = 0; b < s.batch; ++b)
  {
    for (int o = 0; o < k.out_channels; ++o)
    {
      const double *gout = grad_out.plane(b, o).data();
      if (!grad_b.empty())
      {
        double acc = 0.0;
        for (std::size_t q = 0; q < static_cast<std::size_t>(H) * W; ++q)
        {
          acc += gout[q];
        }
        grad_b[static_cast<std::size_t>(o)] += acc;
      }
      for (int c = 0; c < k.in_channels; ++c)
      {
        const std::size_t wbase = (static_cast<std::size_t>(o) * k.in_channels + c) * 9;
        const double *in = input.plane(b, c).data();
        double *gin = grad_in ? grad_in->plane(b, c).data() : nullptr;
        for (int t = 0; t < 9; ++t)
        {
          const int dy = t / 3 - 1, dx = t % 3 - 1;
          if (gin)
          {
            scatter_shifted(gin, gout, weights[wbase + static_cast<std::size_t>(t)], dy, dx, H, W);
          }
          if (!grad_w.empty())
          {
            grad_w[wbase + static_cast<std::size_t>(t)] += correlate_shifted(gout, in, dy, dx, H, W);
          }
        }
      }
    }
  }
}

// Cubic convolution kernel with a = -0.75.
constexpr double kCubicA = -0.75;

inline double cubic_inner(double x)  // |x| <= 1
{
  return ((kCubicA + 2.0) * x - (kCubicA + 3.0)) * x * x + 1.0;
}

inline double cubic_outer(double x)  // 1 < |x| < 2
{
  return ((kCubicA * x - 5.0 * kCubicA) * x + 8.0 * kCubicA) * x - 4.0 * kCubicA;
}

struct CubicAxis
{
  std::vector<std::array<int, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

CubicAxis cubic_axis(int in, int out)
{
  CubicAxis axis;
  axis.index.resize(static_cast<std::size_t>(out));
  axis.weight.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in - 1) / static_cast<double>(out - 1);
  for (int dst = 0; dst < out; ++dst)
  {
    const double src = scale * dst;
    const int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
    const double t = std::clamp(src - i0, 0.0, 1.0);
    auto &w = axis.weight[static_cast<std::size_t>(dst)];
    w = {cubic_outer(t + 1.0), cubic_inner(t), cubic_inner(1.0 - t), cubic_outer(2.0 - t)};
    auto &ix = axis.index[static_cast<std::size_t>(dst)];
    for (int k = 0; k < 4; ++k)
    {
      ix[static_cast<std::size_t>(k)] = std::clamp(i0 - 1 + k, 0, in - 1);
    }
  }
  return axis;
}

void check_resample_dims(int h, int w, const char *what)
{
  if (h < 2 || w < 2)
  {
    throw ShapeError(std::string("bicubic_resample: ") + what + " dimensions must be >= 2, got " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
}

}  // namespace

Tensor4 conv2d(const Tensor4 &input, const KernelShape &k, std::span<const double> weights,
               std::span<const double> bias)
{
  check_conv(input.shape(), k, weights.size(), bias.size());
  const Shape4 &s = input.shape();
  const int H = s.height, W = s.width;
  Tensor4 out(Shape4{s.batch, k.out_channels, H, W});
  for (int b = 0; b < s.batch; ++b)
  {
    for (int o = 0; o < k.out_channels; ++o)
    {
      auto oplane = out.plane(b, o);
      std::fill(oplane.begin(), oplane.end(), bias[static_cast<std::size_t>(o)]);
      for (int c = 0; c < k.in_channels; ++c)
      {
        const std::size_t wbase = (static_cast<std::size_t>(o) * k.in_channels + c) * 9;
        const double *in = input.plane(b, c).data();
        for (int t = 0; t < 9; ++t)
        {
          const double w = weights[wbase + static_cast<std::size_t>(t)];
          if (w != 0.0)
          {
            accumulate_shifted(oplane.data(), in, w, t / 3 - 1, t % 3 - 1, H, W);
          }
        }
      }
    }
  }
  return out;
}

Tensor4 relu(const Tensor4 &input)
{
  Tensor4 out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t k = 0; k < src.size(); ++k)
  {
    dst[k] = src[k] > 0.0 ? src[k] : 0.0;
  }
  return out;
}

Tensor4 maxpool2(const Tensor4 &input, std::vector<std::size_t> *argmax)
{
  const Shape4 &s = input.shape();
  if (s.height % 2 != 0 || s.width % 2 != 0)
  {
    throw ShapeError("maxpool2: height and width must be even, got " + s.str());
  }
  const int Ho = s.height / 2, Wo = s.width / 2;
  Tensor4 out(Shape4{s.batch, s.channels, Ho, Wo});
  if (argmax)
  {
    argmax->assign(out.size(), 0);
  }
  const auto src = input.data();
  std::size_t q = 0;
  for (int b = 0; b < s.batch; ++b)
  {
    for (int c = 0; c < s.channels; ++c)
    {
      const std::size_t base = (static_cast<std::size_t>(b) * s.channels + c) * s.height * s.width;
      for (int y = 0; y < Ho; ++y)
      {
        for (int x = 0; x < Wo; ++x, ++q)
        {
          const std::size_t r0 = base + static_cast<std::size_t>(2 * y) * s.width + 2 * x;
          const std::size_t r1 = r0 + static_cast<std::size_t>(s.width);
          const std::array<std::size_t, 4> cand = {r0, r0 + 1, r1, r1 + 1};
          std::size_t best = cand[0];
          for (int k = 1; k < 4; ++k)
          {
            if (src[cand[static_cast<std::size_t>(k)]] > src[best])
            {
              best = cand[static_cast<std::size_t>(k)];
            }
          }
          out.values()[q] = src[best];
          if (argmax)
          {
            (*argmax)[q] = best;
          }
        }
      }
    }
  }
  return out;
}

Tensor4 bicubic_resample(const Tensor4 &input, int out_h, int out_w)
{
  const Shape4 &s = input.shape();
  check_resample_dims(s.height, s.width, "input");
  check_resample_dims(out_h, out_w, "output");
  const CubicAxis ax = cubic_axis(s.width, out_w);
  const CubicAxis ay = cubic_axis(s.height, out_h);

  Tensor4 out(Shape4{s.batch, s.channels, out_h, out_w});
  std::vector<double> tmp(static_cast<std::size_t>(s.height) * out_w);
  for (int b = 0; b < s.batch; ++b)
  {
    for (int c = 0; c < s.channels; ++c)
    {
      const auto in = input.plane(b, c);
      for (int y = 0; y < s.height; ++y)
      {
        const double *row = in.data() + static_cast<std::ptrdiff_t>(y) * s.width;
        for (int x = 0; x < out_w; ++x)
        {
          const auto &ix = ax.index[static_cast<std::size_t>(x)];
          const auto &w = ax.weight[static_cast<std::size_t>(x)];
          tmp[static_cast<std::size_t>(y) * out_w + x] =
              row[ix[0]] * w[0] + row[ix[1]] * w[1] + row[ix[2]] * w[2] + row[ix[3]] * w[3];
        }
      }
      auto o = out.plane(b, c);
      for (int y = 0; y < out_h; ++y)
      {
        const auto &iy = ay.index[static_cast<std::size_t>(y)];
        const auto &w = ay.weight[static_cast<std::size_t>(y)];
        for (int x = 0; x < out_w; ++x)
        {
          auto t = [&](int k) {
            return tmp[static_cast<std::size_t>(iy[static_cast<std::size_t>(k)]) * out_w + x];
          };
          o[static_cast<std::size_t>(y) * out_w + x] = t(0) * w[0] + t(1) * w[1] + t(2) * w[2] + t(3) * w[3];
        }
      }
    }
  }
  return out;
}

Tensor4 bicubic_resample_transpose(const Tensor4 &grad_output, int in_h, int in_w)
{
  const Shape4 &s = grad_output.shape();
  check_resample_dims(in_h, in_w, "input");
  check_resample_dims(s.height, s.width, "output");
  const int out_h = s.height, out_w = s.width;
  const CubicAxis ax = cubic_axis(in_w, out_w);
  const CubicAxis ay = cubic_axis(in_h, out_h);

  Tensor4 gin(Shape4{s.batch, s.channels, in_h, in_w});
  std::vector<double> tmp(static_cast<std::size_t>(in_h) * out_w);
  for (int b = 0; b < s.batch; ++b)
  {
    for (int c = 0; c < s.channels; ++c)
    {
      std::fill(tmp.begin(), tmp.end(), 0.0);
      const auto g = grad_output.plane(b, c);
      for (int y = 0; y < out_h; ++y)
      {
        const auto &iy = ay.index[static_cast<std::size_t>(y)];
        const auto &w = ay.weight[static_cast<std::size_t>(y)];
        for (int k = 0; k < 4; ++k)
        {
          double *trow = tmp.data() + static_cast<std::ptrdiff_t>(iy[static_cast<std::size_t>(k)]) * out_w;
          const double wk = w[static_cast<std::size_t>(k)];
          const double *grow = g.data() + static_cast<std::ptrdiff_t>(y) * out_w;
          for (int x = 0; x < out_w; ++x)
          {
            trow[x] += wk * grow[x];
          }
        }
      }
      auto o = gin.plane(b, c);
      for (int y = 0; y < in_h; ++y)
      {
        double *orow = o.data() + static_cast<std::ptrdiff_t>(y) * in_w;
        const double *trow = tmp.data() + static_cast<std::ptrdiff_t>(y) * out_w;
        for (int x = 0; x < out_w; ++x)
        {
          const auto &ix = ax.index[static_cast<std::size_t>(x)];
          const auto &w = ax.weight[static_cast<std::size_t>(x)];
          for (int k = 0; k < 4; ++k)
          {
            orow[ix[static_cast<std::size_t>(k)]] += w[static_cast<std::size_t>(k)] * trow[x];
          }
        }
      }
    }
  }
  return gin;
}

// --- Tape --------------------------------------------------------------------

Tape::Tape(std::span<const double> params, bool want_param_grads)
  : params_(params), want_param_grads_(want_param_grads)
{
}

Shape4 Tape::last_output_shape() const
{
  return std::visit(
      [](const auto &node) -> Shape4 {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, ReluNode>)
        {
          return node.input.shape();
        }
        else
        {
          return node.output_shape;
        }
      },
      nodes_.back());
}

Tensor4 Tape::conv2d(const Tensor4 &input, const ConvLayer &layer)
{
  const auto &k = layer.kernel;
  if (layer.weight_offset + k.weight_count() > params_.size() ||
      layer.bias_offset + static_cast<std::size_t>(k.out_channels) > params_.size())
  {
    throw ShapeError("conv2d: layer parameters exceed the parameter vector");
  }
  Tensor4 out = ad::conv2d(input, k, params_.subspan(layer.weight_offset, k.weight_count()),
                           params_.subspan(layer.bias_offset, static_cast<std::size_t>(k.out_channels)));
  nodes_.emplace_back(ConvNode{input, layer, out.shape()});
  return out;
}

Tensor4 Tape::relu(const Tensor4 &input)
{
  Tensor4 out = ad::relu(input);
  nodes_.emplace_back(ReluNode{input});
  return out;
}

Tensor4 Tape::maxpool2(const Tensor4 &input)
{
  PoolNode node{input.shape(), {}, {}};
  Tensor4 out = ad::maxpool2(input, &node.argmax);
  node.output_shape = out.shape();
  nodes_.emplace_back(std::move(node));
  return out;
}

Tensor4 Tape::bicubic_resample(const Tensor4 &input, int out_h, int out_w)
{
  Tensor4 out = ad::bicubic_resample(input, out_h, out_w);
  nodes_.emplace_back(ResampleNode{input.shape(), out.shape()});
  return out;
}

Gradients Tape::backward(const Tensor4 &seed)
{
  if (consumed_)
  {
    throw TapeReuseError("tape already consumed by a previous backward pass");
  }
  if (nodes_.empty())
  {
    throw TapeReuseError("backward on an empty tape");
  }
  if (!(seed.shape() == last_output_shape()))
  {
    throw ShapeError("backward: seed shape " + seed.shape().str() + " does not match output " +
                     last_output_shape().str());
  }
  consumed_ = true;

  Gradients result;
  if (want_param_grads_)
  {
    result.params.assign(params_.size(), 0.0);
  }
  Tensor4 grad = seed;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
  {
    grad = std::visit(
        [&](auto &node) -> Tensor4 {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, ConvNode>)
          {
            const auto &k = node.layer.kernel;
            Tensor4 gin(node.input.shape());
            std::span<double> gw, gb;
            if (want_param_grads_)
            {
              gw = std::span<double>(result.params).subspan(node.layer.weight_offset, k.weight_count());
              gb = std::span<double>(result.params)
                       .subspan(node.layer.bias_offset, static_cast<std::size_t>(k.out_channels));
            }
            conv2d_backward(node.input, k, params_.subspan(node.layer.weight_offset, k.weight_count()),
                            grad, &gin, gw, gb);
            node.input = Tensor4();
            return gin;
          }
          else if constexpr (std::is_same_v<T, ReluNode>)
          {
            Tensor4 gin(node.input.shape());
            const auto x = node.input.data();
            const auto g = grad.data();
            auto out = gin.data();
            for (std::size_t q = 0; q < x.size(); ++q)
            {
              out[q] = x[q] > 0.0 ? g[q] : 0.0;
            }
            node.input = Tensor4();
            return gin;
          }
          else if constexpr (std::is_same_v<T, PoolNode>)
          {
            Tensor4 gin(node.input_shape);
            const auto g = grad.data();
            for (std::size_t q = 0; q < node.argmax.size(); ++q)
            {
              gin.values()[node.argmax[q]] += g[q];
            }
            return gin;
          }
          else
          {
            return bicubic_resample_transpose(grad, node.input_shape.height, node.input_shape.width);
          }
        },
        *it);
  }
  result.input = std::move(grad);
  return result;
}

std::vector<std::uint64_t> Tape::kink_signature() const
{
  std::vector<std::uint64_t> sig;
  for (const auto &node : nodes_)
  {
    if (const auto *r = std::get_if<ReluNode>(&node))
    {
      std::uint64_t word = 0;
      int bit = 0;
      for (double v : r->input.data())
      {
        word |= static_cast<std::uint64_t>(v > 0.0) << bit;
        if (++bit == 64)
        {
          sig.push_back(word);
          word = 0;
          bit = 0;
        }
      }
      sig.push_back(word);
    }
    else if (const auto *p = std::get_if<PoolNode>(&node))
    {
      sig.insert(sig.end(), p->argmax.begin(), p->argmax.end());
    }
  }
  return sig;
}

}  // namespace probsr::ad
