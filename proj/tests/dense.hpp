// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include "probsr/fem.hpp"

namespace probsr::testutil
{

inline Eigen::MatrixXd to_dense(const SparseMatrix &A)
{
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<long>(A.nrows), static_cast<long>(A.ncols));
  for (std::size_t r = 0; r < A.nrows; ++r)
  {
    for (std::size_t p = A.row_ptr[r]; p < A.row_ptr[r + 1]; ++p)
    {
      D(static_cast<long>(r), static_cast<long>(A.col_idx[p])) += A.values[p];
    }
  }
  return D;
}

inline Eigen::VectorXd to_vec(const Field &f)
{
  return Eigen::Map<const Eigen::VectorXd>(f.data.data(), static_cast<long>(f.size()));
}

inline Field to_field(const Grid &g, const Eigen::VectorXd &v)
{
  return Field(g, std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace probsr::testutil
