// SPDX-License-Identifier: Apache-2.0

#include "probsr/prior.hpp"

#include <cmath>
#include <string>

#include "probsr/errors.hpp"

namespace probsr
{

PriorModel::PriorModel(std::shared_ptr<const SparseMatrix> A, Field b, double sigma)
  : A_(std::move(A)), b_(std::move(b)), sigma_(sigma)
{
  if (!A_)
  {
    throw ConfigError("prior needs a stiffness matrix");
  }
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_))
  {
    throw ConfigError("prior sigma must be positive and finite, got " + std::to_string(sigma_));
  }
  if (A_->nrows != A_->ncols || A_->nrows != b_.size())
  {
    throw ShapeError("prior: stiffness is " + std::to_string(A_->nrows) + "x" + std::to_string(A_->ncols) +
                     ", load has " + std::to_string(b_.size()) + " entries");
  }
}

PriorModel build_prior(const Grid &grid_hr, const ForcingParams &params, double sigma)
{
  return build_prior(std::make_shared<const SparseMatrix>(assemble_stiffness(grid_hr)), grid_hr, params,
                     sigma);
}

PriorModel build_prior(std::shared_ptr<const SparseMatrix> A, const Grid &grid_hr,
                       const ForcingParams &params, double sigma)
{
  if (!(sigma > 0.0))
  {
    throw ConfigError("prior sigma must be positive, got " + std::to_string(sigma));
  }
  return PriorModel(std::move(A), assemble_load(grid_hr, params), sigma);
}

namespace
{

void check_field(const PriorModel &model, const Field &u)
{
  if (u.size() != model.load().size())
  {
    throw ShapeError("prior: field has " + std::to_string(u.size()) + " entries, expected " +
                     std::to_string(model.load().size()));
  }
}

}  // namespace

Field grad_log_prior(const PriorModel &model, const Field &u)
{
  check_field(model, u);
  const SparseMatrix &A = model.stiffness();
  const std::size_t N = u.size();
  std::vector<double> r(N);
  A.multiply(u.data, r);
  const double scale = -1.0 / (model.sigma() * model.sigma());
  const auto &b = model.load().data;
  for (std::size_t k = 0; k < N; ++k)
  {
    r[k] = scale * (r[k] - b[k]);
  }
  Field g(u.grid);
  A.multiply_transpose(r, g.data);
  return g;
}

double log_prior_unnorm(const PriorModel &model, const Field &u)
{
  check_field(model, u);
  std::vector<double> r(u.size());
  model.stiffness().multiply(u.data, r);
  double ss = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k)
  {
    const double d = r[k] - model.load()[k];
    ss += d * d;
  }
  return -0.5 * ss / (model.sigma() * model.sigma());
}

Field prior_mean(const PriorModel &model, double tol)
{
  return solve(model.stiffness(), model.load(), tol);
}

}  // namespace probsr
