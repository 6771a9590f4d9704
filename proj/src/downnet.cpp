// SPDX-License-Identifier: Apache-2.0

#include "probsr/downnet.hpp"

#include <cmath>

#include "probsr/errors.hpp"
#include "probsr/field_io.hpp"
#include "probsr/rng.hpp"

namespace probsr
{

void NetConfig::validate() const
{
  if (channels < 1)
  {
    throw ConfigError("network needs at least one hidden channel");
  }
  if (downscale_factor != 4)
  {
    throw ConfigError("only a downscale factor of 4 is supported");
  }
  if (!(epsilon > 0.0))
  {
    throw ConfigError("epsilon must be positive");
  }
}

NetParams NetParams::from_kernels(const std::vector<ad::KernelShape> &kernels)
{
  NetParams p;
  std::size_t offset = 0;
  for (const auto &k : kernels)
  {
    ad::ConvLayer layer{k, offset, offset + k.weight_count()};
    offset = layer.bias_offset + static_cast<std::size_t>(k.out_channels);
    p.layers.push_back(layer);
  }
  p.values.assign(offset, 0.0);
  return p;
}

NetParams NetParams::architecture(int channels)
{
  return from_kernels({{channels, 1, 3, 3}, {channels, channels, 3, 3}, {1, channels, 3, 3}});
}

std::size_t NetParams::expected_size() const
{
  std::size_t n = 0;
  for (const auto &l : layers)
  {
    n += l.kernel.weight_count() + static_cast<std::size_t>(l.kernel.out_channels);
  }
  return n;
}

int NetParams::channels() const
{
  return layers.empty() ? 0 : layers.front().kernel.out_channels;
}

std::span<double> NetParams::final_weights()
{
  const auto &l = layers.back();
  return std::span<double>(values).subspan(l.weight_offset, l.kernel.weight_count());
}

NetParams init_params(std::uint64_t seed, const NetConfig &config)
{
  config.validate();
  NetParams p = NetParams::architecture(config.channels);
  Rng rng(splitmix64(seed));
  for (std::size_t li = 0; li + 1 < p.layers.size(); ++li)
  {
    const auto &layer = p.layers[li];
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.kernel.in_channels * 9));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t k = 0; k < layer.kernel.weight_count(); ++k)
    {
      p.values[layer.weight_offset + k] = u(rng);
    }
  }
  return p;
}

Grid lr_grid_for(const Grid &hr)
{
  if (hr.n % 4 != 0 || hr.n < 8)
  {
    throw ShapeError("HR grid must have 4l nodes per side (l >= 2), got " + std::to_string(hr.n));
  }
  return Grid(hr.n / 4, hr.lo, hr.hi);
}

Grid hr_grid_for(const Grid &lr)
{
  return Grid(4 * lr.n, lr.lo, lr.hi);
}

namespace
{

ad::Tensor4 as_tensor(const Field &f)
{
  return ad::Tensor4(ad::Shape4{1, 1, f.grid.n, f.grid.n}, f.data);
}

void check_params(const NetParams &params)
{
  if (params.layers.size() != 3 || params.values.size() != params.expected_size())
  {
    throw ShapeError("network parameters do not describe the three-layer downscaling architecture");
  }
}

// Records F(hr) on the tape and returns its LR-sized output.
ad::Tensor4 residual_branch(ad::Tape &tape, const NetParams &params, const ad::Tensor4 &x, int l)
{
  ad::Tensor4 h = tape.conv2d(x, params.layers[0]);
  h = tape.relu(h);
  h = tape.maxpool2(h);
  h = tape.conv2d(h, params.layers[1]);
  h = tape.relu(h);
  h = tape.maxpool2(h);
  h = tape.conv2d(h, params.layers[2]);
  return tape.bicubic_resample(h, l, l);
}

struct ForwardPass
{
  ad::Tape tape;
  Field output;
};

ForwardPass run_forward(const NetParams &params, const Field &hr, bool want_param_grads)
{
  check_params(params);
  const Grid lr = lr_grid_for(hr.grid);
  ForwardPass pass{ad::Tape(params.values, want_param_grads), Field(lr)};
  const ad::Tensor4 x = as_tensor(hr);
  const ad::Tensor4 linear = ad::bicubic_resample(x, lr.n, lr.n);
  const ad::Tensor4 res = residual_branch(pass.tape, params, x, lr.n);
  for (std::size_t k = 0; k < pass.output.size(); ++k)
  {
    pass.output[k] = linear.values()[k] + res.values()[k];
  }
  return pass;
}

void check_pair(const Field &hr, const Field &lr)
{
  if (!(lr.grid == lr_grid_for(hr.grid)))
  {
    throw ShapeError("LR field has " + std::to_string(lr.grid.n) + " nodes per side, expected " +
                     std::to_string(hr.grid.n / 4));
  }
}

void check_epsilon(double epsilon)
{
  if (!(epsilon > 0.0))
  {
    throw ConfigError("epsilon must be positive");
  }
}

}  // namespace

Field resample_field(const Field &field, const Grid &target)
{
  const ad::Tensor4 out = ad::bicubic_resample(as_tensor(field), target.n, target.n);
  return Field(target, out.values());
}

Field forward(const NetParams &params, const Field &hr)
{
  return run_forward(params, hr, false).output;
}

double log_likelihood(const NetParams &params, const Field &hr, const Field &lr, double epsilon)
{
  check_epsilon(epsilon);
  check_pair(hr, lr);
  const Field h = forward(params, hr);
  double ss = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k)
  {
    const double r = lr[k] - h[k];
    ss += r * r;
  }
  return -0.5 * ss / (epsilon * epsilon);
}

LikelihoodGradients likelihood_gradients(const NetParams &params, const Field &hr, const Field &lr,
                                         double epsilon, bool want_params)
{
  check_epsilon(epsilon);
  check_pair(hr, lr);
  ForwardPass pass = run_forward(params, hr, want_params);
  const double inv_eps2 = 1.0 / (epsilon * epsilon);

  ad::Tensor4 seed(ad::Shape4{1, 1, lr.grid.n, lr.grid.n});
  double ss = 0.0;
  for (std::size_t k = 0; k < lr.size(); ++k)
  {
    const double r = lr[k] - pass.output[k];
    ss += r * r;
    seed.values()[k] = r * inv_eps2;
  }

  ad::Gradients g = pass.tape.backward(seed);
  const ad::Tensor4 linear_t = ad::bicubic_resample_transpose(seed, hr.grid.n, hr.grid.n);

  LikelihoodGradients out;
  out.log_likelihood = -0.5 * ss * inv_eps2;
  out.grad_hr = Field(hr.grid);
  for (std::size_t k = 0; k < hr.size(); ++k)
  {
    out.grad_hr[k] = linear_t.values()[k] + g.input.values()[k];
  }
  if (want_params)
  {
    out.grad_params = std::move(g.params);
  }
  return out;
}

Field grad_loglik_wrt_hr(const NetParams &params, const Field &hr, const Field &lr, double epsilon)
{
  return likelihood_gradients(params, hr, lr, epsilon, false).grad_hr;
}

std::vector<double> grad_loglik_wrt_params(const NetParams &params, const Field &hr, const Field &lr,
                                           double epsilon)
{
  return likelihood_gradients(params, hr, lr, epsilon, true).grad_params;
}

std::vector<std::uint64_t> kink_signature(const NetParams &params, const Field &hr)
{
  return run_forward(params, hr, false).tape.kink_signature();
}

std::vector<std::uint8_t> encode_checkpoint(const NetParams &params)
{
  check_params(params);
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'P', 'S', 'R', 'N'});
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto &l : params.layers)
  {
    put_u32(out, static_cast<std::uint32_t>(l.kernel.out_channels));
    put_u32(out, static_cast<std::uint32_t>(l.kernel.in_channels));
    put_u32(out, static_cast<std::uint32_t>(l.kernel.kh));
    put_u32(out, static_cast<std::uint32_t>(l.kernel.kw));
  }
  put_u64(out, params.values.size());
  for (double v : params.values)
  {
    put_f64(out, v);
  }
  return out;
}

NetParams decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string &origin)
{
  ByteReader in(bytes, origin);
  in.magic("PSRN");
  const std::uint32_t version = in.u32();
  if (version != 1)
  {
    throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t nlayers = in.u32();
  if (nlayers == 0 || nlayers > 64)
  {
    throw FormatError(origin + ": implausible layer count " + std::to_string(nlayers));
  }
  std::vector<ad::KernelShape> kernels;
  for (std::uint32_t k = 0; k < nlayers; ++k)
  {
    ad::KernelShape s;
    s.out_channels = static_cast<int>(in.u32());
    s.in_channels = static_cast<int>(in.u32());
    s.kh = static_cast<int>(in.u32());
    s.kw = static_cast<int>(in.u32());
    kernels.push_back(s);
  }
  NetParams p = NetParams::from_kernels(kernels);
  const std::uint64_t count = in.u64();
  if (count != p.values.size())
  {
    throw LengthMismatchError(origin + ": layer shapes need " + std::to_string(p.values.size()) +
                              " parameters, header declares " + std::to_string(count));
  }
  if (in.remaining() != 8 * count)
  {
    throw LengthMismatchError(origin + ": expected " + std::to_string(8 * count) +
                              " parameter bytes, found " + std::to_string(in.remaining()));
  }
  for (auto &v : p.values)
  {
    v = in.f64();
  }
  return p;
}

void save_checkpoint(const NetParams &params, const std::filesystem::path &path)
{
  write_file_bytes(path, encode_checkpoint(params));
}

NetParams load_checkpoint(const std::filesystem::path &path)
{
  return decode_checkpoint(read_file_bytes(path), path.string());
}

}  // namespace probsr
