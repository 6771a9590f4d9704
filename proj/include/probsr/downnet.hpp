// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "probsr/autodiff.hpp"
#include "probsr/fem.hpp"

namespace probsr
{

struct NetConfig
{
  int channels = 16;
  int downscale_factor = 4;
  double epsilon = 1e-2;

  void validate() const;
};

/// Parameters of the downscaling network H(u) = bicubic(u) + F(u), where
/// F = conv3x3(C->1) . pool . relu . conv3x3(C->C) . pool . relu . conv3x3(1->C)
/// followed by a corner-aligned resample to the LR lattice (the identity when
/// the pooled size already matches).
///
/// `values` stores, per layer in declaration order, the weights followed by
/// the biases.
struct NetParams
{
  std::vector<ad::ConvLayer> layers;
  std::vector<double> values;

  /// Zero-initialized parameters for the standard three-layer architecture.
  static NetParams architecture(int channels);
  /// Rebuild layer offsets from kernel shapes (weights then biases per layer).
  static NetParams from_kernels(const std::vector<ad::KernelShape> &kernels);

  std::size_t expected_size() const;
  int channels() const;
  /// Offsets of the final layer's weights within `values`.
  std::span<double> final_weights();
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); final-layer weights and all
/// biases zero, so the network starts as exact bicubic downscaling.
NetParams init_params(std::uint64_t seed, const NetConfig &config = {});

/// Grid of the LR lattice for an HR grid with 4l nodes per side.
Grid lr_grid_for(const Grid &hr);
Grid hr_grid_for(const Grid &lr);

/// Corner-aligned bicubic resampling of a field onto another lattice.
Field resample_field(const Field &field, const Grid &target);

Field forward(const NetParams &params, const Field &hr);

/// Unnormalized log-likelihood -||lr - H(hr)||^2 / (2 eps^2).
double log_likelihood(const NetParams &params, const Field &hr, const Field &lr, double epsilon);

struct LikelihoodGradients
{
  double log_likelihood = 0.0;
  Field grad_hr;
  std::vector<double> grad_params;  // empty unless requested
};

/// Value plus gradients from a single forward/backward pass.
LikelihoodGradients likelihood_gradients(const NetParams &params, const Field &hr, const Field &lr,
                                         double epsilon, bool want_params);

/// J^T (lr - H(hr)) / eps^2.
Field grad_loglik_wrt_hr(const NetParams &params, const Field &hr, const Field &lr, double epsilon);

std::vector<double> grad_loglik_wrt_params(const NetParams &params, const Field &hr, const Field &lr,
                                           double epsilon);

/// Kink signature of F at `hr` (see ad::Tape::kink_signature).
std::vector<std::uint64_t> kink_signature(const NetParams &params, const Field &hr);

// PSRN checkpoints: "PSRN", u32 version (1), u32 layer count, per layer u32 x 4
// kernel shape, u64 parameter count, then little-endian f64 parameters.
std::vector<std::uint8_t> encode_checkpoint(const NetParams &params);
NetParams decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string &origin = "<memory>");
void save_checkpoint(const NetParams &params, const std::filesystem::path &path);
NetParams load_checkpoint(const std::filesystem::path &path);

}  // namespace probsr
