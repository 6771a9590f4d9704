// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>

#include "probsr/fem.hpp"

namespace probsr
{

/// Gaussian prior N(A^{-1} b, sigma^2 A^{-1} A^{-T}) over HR coefficients,
/// held in precision form so that no inverse of A is ever formed.
class PriorModel
{
public:
  PriorModel(std::shared_ptr<const SparseMatrix> A, Field b, double sigma);

  const SparseMatrix &stiffness() const { return *A_; }
  std::shared_ptr<const SparseMatrix> shared_stiffness() const { return A_; }
  const Field &load() const { return b_; }
  const Grid &grid() const { return b_.grid; }
  double sigma() const { return sigma_; }

private:
  std::shared_ptr<const SparseMatrix> A_;
  Field b_;
  double sigma_;
};

/// Assemble A and b_theta on the HR grid. No factorization is performed.
PriorModel build_prior(const Grid &grid_hr, const ForcingParams &params, double sigma);

/// Same, reusing an already assembled stiffness for `grid_hr`.
PriorModel build_prior(std::shared_ptr<const SparseMatrix> A, const Grid &grid_hr,
                       const ForcingParams &params, double sigma);

/// -A^T (A u - b) / sigma^2: two sparse mat-vecs and one axpy.
Field grad_log_prior(const PriorModel &model, const Field &u);

/// -||A u - b||^2 / (2 sigma^2), normalizing constant excluded.
double log_prior_unnorm(const PriorModel &model, const Field &u);

/// A^{-1} b via the CG solver.
Field prior_mean(const PriorModel &model, double tol = 1e-10);

}  // namespace probsr
