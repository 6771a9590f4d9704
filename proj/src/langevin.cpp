// SPDX-License-Identifier: Apache-2.0

#include "probsr/langevin.hpp"

#include <cmath>
#include <string>

#include "probsr/errors.hpp"

namespace probsr
{

void LangevinConfig::validate() const
{
  if (!(gamma > 0.0) || !std::isfinite(gamma))
  {
    throw ConfigError("Langevin step size must be positive and finite");
  }
  if (steps < 1)
  {
    throw ConfigError("Langevin chain needs at least one step");
  }
  if (burn_in < 0 || burn_in >= steps)
  {
    throw ConfigError("burn-in must satisfy 0 <= burn_in < steps (burn_in = " + std::to_string(burn_in) +
                      ", steps = " + std::to_string(steps) + ")");
  }
  if (thin < 1)
  {
    throw ConfigError("thin must be at least 1");
  }
}

std::int64_t LangevinConfig::retained_count() const
{
  return (steps - burn_in) / thin;
}

LangevinConfig training_chain_defaults()
{
  LangevinConfig c;
  c.steps = 200;
  c.burn_in = 100;
  c.thin = 10;
  return c;
}

LangevinConfig inference_chain_defaults()
{
  return LangevinConfig{};
}

PosteriorTarget::PosteriorTarget(const PriorModel &prior, const NetParams *net, const Field *lr,
                                 double epsilon)
  : prior_(&prior), net_(net), lr_(lr), epsilon_(epsilon)
{
  if (net_ && !lr_)
  {
    throw ConfigError("posterior target with a likelihood needs LR data");
  }
  if (net_ && !(epsilon_ > 0.0))
  {
    throw ConfigError("epsilon must be positive");
  }
}

Field PosteriorTarget::gradient(const Field &u) const
{
  Field g = grad_log_prior(*prior_, u);
  if (net_)
  {
    const Field gl = grad_loglik_wrt_hr(*net_, u, *lr_, epsilon_);
    for (std::size_t k = 0; k < g.size(); ++k)
    {
      g[k] += gl[k];
    }
  }
  return g;
}

Field grad_log_posterior(const PriorModel &prior, const NetParams &net, const Field &lr, const Field &u,
                         double epsilon)
{
  return PosteriorTarget(prior, &net, &lr, epsilon).gradient(u);
}

ChainState::ChainState(Field init, std::uint64_t seed)
  : position(std::move(init)), rng(splitmix64(seed)), mean(position.grid), m2(position.grid)
{
}

void ChainState::accumulate()
{
  ++count;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t k = 0; k < position.size(); ++k)
  {
    const double delta = position[k] - mean[k];
    mean[k] += delta * inv;
    m2[k] += delta * (position[k] - mean[k]);
  }
}

Field ChainState::mean_field() const
{
  return mean;
}

Field ChainState::std_field() const
{
  Field s(position.grid);
  if (count == 0)
  {
    return s;
  }
  for (std::size_t k = 0; k < s.size(); ++k)
  {
    s[k] = std::sqrt(std::max(m2[k], 0.0) / static_cast<double>(count));
  }
  return s;
}

void step(ChainState &state, const Field &gradient, double gamma)
{
  if (!(gamma > 0.0))
  {
    throw ConfigError("Langevin step size must be positive");
  }
  if (gradient.size() != state.position.size())
  {
    throw ShapeError("Langevin step: gradient and position sizes differ");
  }
  if (!gradient.all_finite())
  {
    throw DivergenceError("non-finite posterior gradient at step " + std::to_string(state.step_count),
                          state.step_count);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise = std::sqrt(2.0 * gamma);
  for (std::size_t k = 0; k < gradient.size(); ++k)
  {
    state.position[k] += gamma * gradient[k] + noise * normal(state.rng);
  }
  ++state.step_count;
}

ChainResult run_chain(const PosteriorTarget &target, const Field &init, const LangevinConfig &config)
{
  config.validate();
  if (config.retained_count() < 1)
  {
    throw ConfigError("chain configuration retains no samples");
  }
  if (init.size() != target.prior().load().size())
  {
    throw ShapeError("chain initial state does not match the prior grid");
  }
  ChainState state(init, config.seed);
  ChainResult result;
  if (config.keep_samples)
  {
    result.samples.reserve(static_cast<std::size_t>(config.retained_count()));
  }
  for (std::int64_t k = 1; k <= config.steps; ++k)
  {
    step(state, target.gradient(state.position), config.gamma);
    if (!state.position.all_finite())
    {
      throw DivergenceError("chain diverged at step " + std::to_string(k), k);
    }
    if (k > config.burn_in && (k - config.burn_in) % config.thin == 0)
    {
      state.accumulate();
      if (config.keep_samples)
      {
        result.samples.push_back(state.position);
      }
    }
  }
  result.mean = state.mean_field();
  result.std = state.std_field();
  result.retained = state.count;
  return result;
}

Field init_chain(const Field &lr, const Grid &grid_hr)
{
  return resample_field(lr, grid_hr);
}

namespace
{

double normalize(std::vector<double> &v)
{
  double s = 0.0;
  for (double x : v)
  {
    s += x * x;
  }
  s = std::sqrt(s);
  for (double &x : v)
  {
    x /= s;
  }
  return s;
}

std::vector<double> power_start(std::size_t n)
{
  std::vector<double> v(n);
  Rng rng(0x5eed);
  std::normal_distribution<double> normal;
  for (double &x : v)
  {
    x = normal(rng);
  }
  normalize(v);
  return v;
}

}  // namespace

double stiffness_gram_norm(const SparseMatrix &A, int iterations)
{
  std::vector<double> v = power_start(A.ncols), w(A.nrows);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it)
  {
    A.multiply(v, w);
    A.multiply_transpose(w, v);
    lambda = normalize(v);
  }
  return lambda;
}

double bicubic_gram_norm(const Grid &hr, int iterations)
{
  const Grid lr = lr_grid_for(hr);
  std::vector<double> v = power_start(hr.size());
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it)
  {
    const ad::Tensor4 x(ad::Shape4{1, 1, hr.n, hr.n}, v);
    const ad::Tensor4 y = ad::bicubic_resample(x, lr.n, lr.n);
    v = ad::bicubic_resample_transpose(y, hr.n, hr.n).values();
    lambda = normalize(v);
  }
  return lambda;
}

double default_step_size(const PriorModel &prior, double epsilon, double fraction)
{
  const double s2 = prior.sigma() * prior.sigma();
  double lipschitz = stiffness_gram_norm(prior.stiffness()) / s2;
  if (epsilon > 0.0 && prior.grid().n % 4 == 0 && prior.grid().n >= 8)
  {
    lipschitz += bicubic_gram_norm(prior.grid()) / (epsilon * epsilon);
  }
  return fraction / lipschitz;
}

}  // namespace probsr
