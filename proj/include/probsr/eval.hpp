// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "probsr/dataset.hpp"
#include "probsr/downnet.hpp"
#include "probsr/langevin.hpp"

namespace probsr
{

/// Mean of squared nodal differences. Throws ShapeError on grid mismatch.
double mse(const Field &a, const Field &b);

/// Flat indices of the HR nodes nearest to each LR node (ties go to the
/// lowest index), in LR row-major order. All l^2 entries are distinct.
std::vector<std::size_t> near_lr_nodes(const Grid &hr, int l);

struct UqSummary
{
  double mean_std_near_lr = 0.0;
  double mean_std_far = 0.0;
};

UqSummary uq_analysis(const Field &std_field, int l);

/// Binary PPM (P6) with a blue-white-red map over [min, max] of the field;
/// the top image row is the y = hi edge.
void write_heatmap_ppm(const std::filesystem::path &path, const Field &field);

/// Elementwise log, with values floored at the smallest positive entry.
Field log_field(const Field &field);

struct InferenceConfig
{
  double sigma = 1e-2;
  double epsilon = 1e-2;
  /// gamma <= 0 selects default_step_size.
  LangevinConfig chain = inference_chain_defaults();
};

struct InferenceResult
{
  ChainResult chain;
  double gamma = 0.0;
};

/// Posterior sampling of the HR field for one LR observation with known theta.
InferenceResult super_resolve(const NetParams &net, const Field &lr, const ForcingParams &theta,
                              const InferenceConfig &config);

struct CaseResult
{
  int id = 0;
  ForcingParams params;
  double mse_bicubic = 0.0;
  double mse_probsr = 0.0;
  UqSummary uq;
};

struct BenchRow
{
  int resolution = 0;
  std::string method;  // "direct" or "probsr"
  double seconds = 0.0;
};

struct EvalReport
{
  std::vector<CaseResult> cases;
  double mean_mse_bicubic = 0.0;
  double mean_mse_probsr = 0.0;
  UqSummary mean_uq;
  std::vector<BenchRow> timing;
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json() const;
};

struct EvalConfig
{
  InferenceConfig inference;
  /// Heatmaps and field dumps are written for the first k test cases.
  int max_heatmaps = 4;
  /// Empty: nothing is written.
  std::filesystem::path out_dir;
  nlohmann::json run_config = nlohmann::json::object();
};

/// Bicubic baseline and ProbSR posterior mean against HR truth on the test
/// split. Throws ConfigError for an empty test split or missing HR truth.
EvalReport evaluate(const Dataset &data, const NetParams &net, const EvalConfig &config);

struct BenchConfig
{
  std::vector<int> resolutions;
  int repeats = 3;
  std::int64_t steps = 500;
  std::uint64_t seed = 0;
  int channels = 16;
  double sigma = 1e-2;
  double epsilon = 1e-2;
};

/// Median wall time (after one warm-up run) of a direct HR solve and of an
/// LR solve followed by a K-step inference chain, per resolution.
std::vector<BenchRow> bench(const BenchConfig &config);

std::string bench_csv(const std::vector<BenchRow> &rows);

}  // namespace probsr
