// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "probsr/downnet.hpp"
#include "probsr/fem.hpp"
#include "probsr/prior.hpp"
#include "probsr/rng.hpp"

namespace probsr
{

struct LangevinConfig
{
  /// Step size; must be positive (see default_step_size).
  double gamma = 0.0;
  std::int64_t steps = 5000;
  std::int64_t burn_in = 2000;
  std::int64_t thin = 10;
  std::uint64_t seed = 0;
  /// Keep every retained position, not just the moments.
  bool keep_samples = true;

  void validate() const;
  /// Number of positions retained by run_chain.
  std::int64_t retained_count() const;
};

/// Training chains: K = 200, burn-in 100, thin 10.
LangevinConfig training_chain_defaults();
/// Inference chains: K = 5000, burn-in 2000, thin 10.
LangevinConfig inference_chain_defaults();

/// Score of p(u | lr, phi, theta) = likelihood score + prior score. With
/// `net == nullptr` the likelihood is disabled and the prior is sampled.
class PosteriorTarget
{
public:
  PosteriorTarget(const PriorModel &prior, const NetParams *net, const Field *lr, double epsilon);

  Field gradient(const Field &u) const;
  const PriorModel &prior() const { return *prior_; }
  bool has_likelihood() const { return net_ != nullptr; }

private:
  const PriorModel *prior_;
  const NetParams *net_;
  const Field *lr_;
  double epsilon_;
};

Field grad_log_posterior(const PriorModel &prior, const NetParams &net, const Field &lr, const Field &u,
                         double epsilon);

/// Chain position plus Welford accumulators for the retained samples.
struct ChainState
{
  ChainState(Field init, std::uint64_t seed);

  Field position;
  std::int64_t step_count = 0;
  Rng rng;
  std::int64_t count = 0;
  Field mean;
  Field m2;

  void accumulate();
  Field mean_field() const;
  /// Population standard deviation (divisor = count).
  Field std_field() const;
};

/// position += gamma * gradient + sqrt(2 gamma) * w, w ~ N(0, I) from the
/// chain's own generator. Throws DivergenceError on a non-finite gradient.
void step(ChainState &state, const Field &gradient, double gamma);

struct ChainResult
{
  std::vector<Field> samples;
  Field mean;
  Field std;
  std::int64_t retained = 0;
};

/// Run `config.steps` unadjusted Langevin steps from `init`, retaining every
/// thin-th position after burn-in.
ChainResult run_chain(const PosteriorTarget &target, const Field &init, const LangevinConfig &config);

/// Corner-aligned bicubic upscaling of the LR field onto the HR grid.
Field init_chain(const Field &lr, const Grid &grid_hr);

/// Largest eigenvalue of A^T A by power iteration.
double stiffness_gram_norm(const SparseMatrix &A, int iterations = 100);

/// Largest eigenvalue of R^T R for the HR -> LR bicubic map, by power iteration.
double bicubic_gram_norm(const Grid &hr, int iterations = 100);

/// fraction / L with L = lambda_max(A^T A) / sigma^2 + lambda_max(R^T R) / eps^2,
/// the Lipschitz constant of the posterior score with the residual branch off.
double default_step_size(const PriorModel &prior, double epsilon, double fraction = 0.5);

}  // namespace probsr
