// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probsr/dataset.hpp"
#include "probsr/downnet.hpp"
#include "probsr/langevin.hpp"
#include "probsr/prior.hpp"

namespace probsr
{

enum class Optimizer
{
  kSgd,
  kAdam
};

std::string to_string(Optimizer opt);
Optimizer parse_optimizer(const std::string &text);

struct TrainConfig
{
  int epochs = 30;
  double learning_rate = 1e-3;
  int batch_size = 16;
  int samples_per_datum = 10;
  std::int64_t chain_steps = 200;
  /// Negative: half of chain_steps.
  std::int64_t burn_in = -1;
  /// Non-positive: default_step_size of the HR prior.
  double gamma = 0.0;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Write an intermediate checkpoint every k epochs (0: final only).
  int checkpoint_every = 0;
  std::uint64_t seed = 0;
  double sigma = 1e-2;
  double epsilon = 1e-2;
  int channels = 16;
  /// Empty: no files are written.
  std::filesystem::path out_dir;

  void validate() const;
  nlohmann::json to_json() const;
  /// Chain settings for one training datum; retains at least M samples.
  LangevinConfig chain_config(double resolved_gamma) const;
};

/// One LR observation with its prior and the seed of its posterior chain.
struct Datum
{
  Field lr;
  PriorModel prior;
  std::uint64_t chain_seed = 0;
};

/// Draws posterior samples for batch element `index`.
using PosteriorSampler = std::function<std::vector<Field>(const Datum &datum, std::size_t index)>;

struct McGradient
{
  std::vector<double> gradient;
  /// Mean of -||lr - H(u)||^2 / (2 eps^2) over all samples in the batch.
  double mean_log_likelihood = 0.0;
};

/// (1/m) sum_i (1/M) sum_m grad_phi log p(lr_i | u_{i,m}, phi) for samples
/// drawn by `sampler`.
McGradient mc_gradient(const NetParams &net, std::span<const Datum> batch, double epsilon,
                       const PosteriorSampler &sampler);

/// Same with the Langevin sampler: a fresh chain per datum, warm-started at
/// the bicubic upscaling of its LR field, keeping the last M retained samples.
McGradient mc_gradient(const NetParams &net, std::span<const Datum> batch, const LangevinConfig &chain,
                       int samples_per_datum, double epsilon);

/// Optimizer state carried across epochs.
struct TrainState
{
  int next_epoch = 0;
  NetParams params;
  std::int64_t adam_step = 0;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
};

void save_train_state(const TrainState &state, const std::filesystem::path &path);
TrainState load_train_state(const std::filesystem::path &path);

struct EpochRecord
{
  int epoch = 0;
  double mean_log_likelihood = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;
};

struct TrainReport
{
  std::vector<EpochRecord> epochs;
  std::filesystem::path checkpoint;
};

struct TrainResult
{
  TrainReport report;
  NetParams params;
  TrainState state;
};

/// Maximum marginal likelihood training of the downscaling network on the
/// train split. `resume` continues from a saved state.
TrainResult train(const Dataset &data, const TrainConfig &config, const TrainState *resume = nullptr,
                  const nlohmann::json &run_config = nlohmann::json::object());

}  // namespace probsr
