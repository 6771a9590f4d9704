// SPDX-License-Identifier: Apache-2.0

#include "probsr/fem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "probsr/errors.hpp"
#include "probsr/rng.hpp"

namespace probsr
{

void check_grid(const Grid &grid)
{
  if (grid.n < 3)
  {
    throw InvalidGridError("grid needs at least 3 nodes per side, got " + std::to_string(grid.n));
  }
  if (!(grid.hi > grid.lo) || !std::isfinite(grid.hi - grid.lo))
  {
    throw InvalidGridError("grid extent must be positive and finite");
  }
}

Field::Field(const Grid &g, std::vector<double> values) : grid(g), data(std::move(values))
{
  if (data.size() != grid.size())
  {
    throw ShapeError("field has " + std::to_string(data.size()) + " values, grid expects " +
                     std::to_string(grid.size()));
  }
}

bool Field::all_finite() const
{
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

double SparseMatrix::at(std::size_t r, std::size_t c) const
{
  const auto first = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
  const auto last = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
  const auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c)
  {
    return 0.0;
  }
  return values[static_cast<std::size_t>(it - col_idx.begin())];
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const
{
  for (std::size_t r = 0; r < nrows; ++r)
  {
    double acc = 0.0;
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
    {
      acc += values[k] * x[col_idx[k]];
    }
    y[r] = acc;
  }
}

void SparseMatrix::multiply_transpose(std::span<const double> x, std::span<double> y) const
{
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t r = 0; r < nrows; ++r)
  {
    const double xr = x[r];
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
    {
      y[col_idx[k]] += values[k] * xr;
    }
  }
}

std::vector<double> SparseMatrix::diagonal() const
{
  std::vector<double> d(nrows, 0.0);
  for (std::size_t r = 0; r < nrows; ++r)
  {
    d[r] = at(r, r);
  }
  return d;
}

SparseMatrix SparseMatrix::identity(std::size_t n)
{
  SparseMatrix A;
  A.nrows = A.ncols = n;
  A.row_ptr.resize(n + 1);
  A.col_idx.resize(n);
  A.values.assign(n, 1.0);
  for (std::size_t r = 0; r <= n; ++r)
  {
    A.row_ptr[r] = r;
  }
  for (std::size_t r = 0; r < n; ++r)
  {
    A.col_idx[r] = r;
  }
  return A;
}

double eval_forcing(const ForcingParams &p, double x, double y)
{
  const double t1 = p.a * std::sin(p.b * x) * std::cos(p.c * y);
  const double t2 = p.b * std::cos(p.a * x) * std::sin(p.c * y);
  const double t3 = p.c * std::exp(p.a * std::cos(p.b * x) * std::sin(p.c * y));
  const double t4 = (p.a * x * x * x - p.b * y * y * y) / (x * x + p.c * y * y + 1.0);
  return t1 + t2 + t3 + t4;
}

namespace
{

// Q1 element stiffness on a square (independent of h in 2D). Local node order
// (0,0), (0,1), (1,0), (1,1) in (row, col) offsets.
constexpr std::array<std::array<double, 4>, 4> kElementStiffness = {{
    {2.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0},
    {-1.0 / 6.0, 2.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0},
    {-1.0 / 6.0, -1.0 / 3.0, 2.0 / 3.0, -1.0 / 6.0},
    {-1.0 / 3.0, -1.0 / 6.0, -1.0 / 6.0, 2.0 / 3.0},
}};

constexpr std::array<int, 4> kLocalRow = {0, 0, 1, 1};
constexpr std::array<int, 4> kLocalCol = {0, 1, 0, 1};

}  // namespace

SparseMatrix assemble_stiffness_raw(const Grid &grid)
{
  check_grid(grid);
  const int n = grid.n;
  const std::size_t N = grid.size();

  // Per-node 3x3 neighbour stencil, indexed by (di + 1) * 3 + (dj + 1).
  std::vector<std::array<double, 9>> stencil(N);
  for (auto &s : stencil)
  {
    s.fill(0.0);
  }
  for (int ei = 0; ei + 1 < n; ++ei)
  {
    for (int ej = 0; ej + 1 < n; ++ej)
    {
      for (int a = 0; a < 4; ++a)
      {
        const std::size_t row = grid.index(ei + kLocalRow[a], ej + kLocalCol[a]);
        for (int b = 0; b < 4; ++b)
        {
          const int di = kLocalRow[b] - kLocalRow[a];
          const int dj = kLocalCol[b] - kLocalCol[a];
          stencil[row][static_cast<std::size_t>((di + 1) * 3 + (dj + 1))] += kElementStiffness[a][b];
        }
      }
    }
  }

  SparseMatrix A;
  A.nrows = A.ncols = N;
  A.row_ptr.reserve(N + 1);
  A.col_idx.reserve(9 * N);
  A.values.reserve(9 * N);
  A.row_ptr.push_back(0);
  for (int i = 0; i < n; ++i)
  {
    for (int j = 0; j < n; ++j)
    {
      const auto &s = stencil[grid.index(i, j)];
      for (int di = -1; di <= 1; ++di)
      {
        for (int dj = -1; dj <= 1; ++dj)
        {
          const int ii = i + di;
          const int jj = j + dj;
          if (ii < 0 || ii >= n || jj < 0 || jj >= n)
          {
            continue;
          }
          A.col_idx.push_back(grid.index(ii, jj));
          A.values.push_back(s[static_cast<std::size_t>((di + 1) * 3 + (dj + 1))]);
        }
      }
      A.row_ptr.push_back(A.col_idx.size());
    }
  }
  return A;
}

SparseMatrix assemble_stiffness(const Grid &grid)
{
  const SparseMatrix raw = assemble_stiffness_raw(grid);
  const int n = grid.n;

  SparseMatrix A;
  A.nrows = A.ncols = raw.nrows;
  A.row_ptr.reserve(raw.nrows + 1);
  A.col_idx.reserve(raw.nnz());
  A.values.reserve(raw.nnz());
  A.row_ptr.push_back(0);
  for (int i = 0; i < n; ++i)
  {
    for (int j = 0; j < n; ++j)
    {
      const std::size_t r = grid.index(i, j);
      if (grid.is_dirichlet_row(i))
      {
        A.col_idx.push_back(r);
        A.values.push_back(1.0);
      }
      else
      {
        for (std::size_t k = raw.row_ptr[r]; k < raw.row_ptr[r + 1]; ++k)
        {
          A.col_idx.push_back(raw.col_idx[k]);
          A.values.push_back(raw.values[k]);
        }
      }
      A.row_ptr.push_back(A.col_idx.size());
    }
  }
  return A;
}

Field assemble_load(const Grid &grid, const ScalarFunction &f, double dirichlet_value)
{
  check_grid(grid);
  const int n = grid.n;
  const double h = grid.spacing();
  const double g = 1.0 / std::sqrt(3.0);
  // Gauss points on [0, 1]; each of the four points carries weight h^2 / 4.
  const std::array<double, 2> xi = {0.5 * (1.0 - g), 0.5 * (1.0 + g)};
  const double w = 0.25 * h * h;

  Field b(grid);
  for (int ei = 0; ei + 1 < n; ++ei)
  {
    const double y0 = grid.y(ei);
    for (int ej = 0; ej + 1 < n; ++ej)
    {
      const double x0 = grid.x(ej);
      std::array<double, 4> local{};
      for (double sy : xi)
      {
        for (double sx : xi)
        {
          const double fv = f(x0 + sx * h, y0 + sy * h) * w;
          local[0] += fv * (1.0 - sy) * (1.0 - sx);
          local[1] += fv * (1.0 - sy) * sx;
          local[2] += fv * sy * (1.0 - sx);
          local[3] += fv * sy * sx;
        }
      }
      for (int a = 0; a < 4; ++a)
      {
        b[grid.index(ei + kLocalRow[a], ej + kLocalCol[a])] += local[static_cast<std::size_t>(a)];
      }
    }
  }
  for (int j = 0; j < n; ++j)
  {
    b.at(0, j) = dirichlet_value;
    b.at(n - 1, j) = dirichlet_value;
  }
  return b;
}

Field assemble_load(const Grid &grid, const ForcingParams &params)
{
  return assemble_load(grid, [&params](double x, double y) { return eval_forcing(params, x, y); },
                       params.d);
}

namespace
{

double norm2(std::span<const double> v)
{
  double s = 0.0;
  for (double x : v)
  {
    s += x * x;
  }
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b)
{
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
  {
    s += a[k] * b[k];
  }
  return s;
}

}  // namespace

double relative_residual(const SparseMatrix &A, const Field &u, const Field &b)
{
  std::vector<double> r(A.nrows);
  A.multiply(u.data, r);
  for (std::size_t k = 0; k < r.size(); ++k)
  {
    r[k] -= b[k];
  }
  const double bn = norm2(b.data);
  const double rn = norm2(r);
  return bn > 0.0 ? rn / bn : rn;
}

Field solve(const SparseMatrix &A, const Field &b, double tol, std::int64_t max_iterations,
            SolveStats *stats)
{
  if (A.nrows != A.ncols || A.nrows != b.size())
  {
    throw ShapeError("solve: matrix is " + std::to_string(A.nrows) + "x" + std::to_string(A.ncols) +
                     ", rhs has " + std::to_string(b.size()) + " entries");
  }
  if (!(tol > 0.0))
  {
    throw ConfigError("solve: tolerance must be positive");
  }
  const std::size_t N = A.nrows;
  if (max_iterations < 0)
  {
    max_iterations = static_cast<std::int64_t>(10 * N);
  }

  // Pinned rows: a single stored entry on the diagonal.
  std::vector<char> pinned(N, 0);
  for (std::size_t r = 0; r < N; ++r)
  {
    if (A.row_ptr[r + 1] - A.row_ptr[r] == 1 && A.col_idx[A.row_ptr[r]] == r)
    {
      pinned[r] = 1;
    }
  }

  Field u(b.grid);
  for (std::size_t r = 0; r < N; ++r)
  {
    if (pinned[r])
    {
      u[r] = b[r] / A.values[A.row_ptr[r]];
    }
  }

  const double bnorm = norm2(b.data);
  if (bnorm == 0.0)
  {
    if (stats)
    {
      *stats = {0, 0.0};
    }
    return Field(b.grid);
  }
  const double target = tol * bnorm;

  // Reduced operator: A restricted to free rows and columns.
  auto apply_free = [&](std::span<const double> x, std::span<double> y) {
    for (std::size_t r = 0; r < N; ++r)
    {
      if (pinned[r])
      {
        y[r] = 0.0;
        continue;
      }
      double acc = 0.0;
      for (std::size_t k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k)
      {
        const std::size_t c = A.col_idx[k];
        if (!pinned[c])
        {
          acc += A.values[k] * x[c];
        }
      }
      y[r] = acc;
    }
  };

  const std::vector<double> diag = A.diagonal();
  std::vector<double> inv_diag(N, 0.0);
  for (std::size_t r = 0; r < N; ++r)
  {
    if (!pinned[r])
    {
      if (!(diag[r] > 0.0))
      {
        throw SolverError("solve: non-positive diagonal in row " + std::to_string(r), 0.0, 0);
      }
      inv_diag[r] = 1.0 / diag[r];
    }
  }

  std::vector<double> res(N), z(N), p(N), q(N), full(N);
  auto true_residual = [&]() {
    A.multiply(u.data, full);
    for (std::size_t r = 0; r < N; ++r)
    {
      res[r] = pinned[r] ? 0.0 : b[r] - full[r];
    }
    return norm2(res);
  };

  std::int64_t it = 0;
  double rnorm = true_residual();
  while (rnorm > target)
  {
    for (std::size_t r = 0; r < N; ++r)
    {
      z[r] = inv_diag[r] * res[r];
    }
    p = z;
    double rz = dot(res, z);
    while (rnorm > target && it < max_iterations)
    {
      apply_free(p, q);
      const double pq = dot(p, q);
      if (!(pq > 0.0))
      {
        throw SolverError("solve: operator is not positive definite on the free nodes", rnorm / bnorm,
                          it);
      }
      const double alpha = rz / pq;
      for (std::size_t r = 0; r < N; ++r)
      {
        u[r] += alpha * p[r];
        res[r] -= alpha * q[r];
      }
      rnorm = norm2(res);
      for (std::size_t r = 0; r < N; ++r)
      {
        z[r] = inv_diag[r] * res[r];
      }
      const double rz_next = dot(res, z);
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t r = 0; r < N; ++r)
      {
        p[r] = z[r] + beta * p[r];
      }
      ++it;
    }
    // The recursive residual drifts; confirm against the true one and restart if needed.
    rnorm = true_residual();
    if (rnorm > target && it >= max_iterations)
    {
      throw SolverError("solve: no convergence after " + std::to_string(it) +
                            " iterations, relative residual " + std::to_string(rnorm / bnorm),
                        rnorm / bnorm, it);
    }
  }
  if (stats)
  {
    *stats = {it, rnorm / bnorm};
  }
  return u;
}

Field solve_poisson(const Grid &grid, const ForcingParams &params, double tol)
{
  return solve(assemble_stiffness(grid), assemble_load(grid, params), tol);
}

ForcingParams sample_forcing(std::uint64_t seed)
{
  Rng rng(splitmix64(seed));
  std::uniform_real_distribution<double> ua(-4.0, 4.0), ub(-3.0, 3.0), uc(0.0, 3.0), ud(-2.0, 2.0);
  ForcingParams p;
  p.a = ua(rng);
  p.b = ub(rng);
  p.c = uc(rng);
  p.d = ud(rng);
  return p;
}

}  // namespace probsr
