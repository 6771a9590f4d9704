// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace probsr
{

// Structured node lattice over [lo, hi]^2. Node (i, j) sits at x = lo + j h,
// y = lo + i h and has row-major index i n + j. Rows i = 0 and i = n - 1 carry
// Dirichlet data; columns j = 0 and j = n - 1 are natural (zero-flux) edges.
struct Grid
{
  int n = 0;
  double lo = -3.0;
  double hi = 3.0;

  Grid() = default;
  explicit Grid(int nodes_per_side, double lo_ = -3.0, double hi_ = 3.0)
    : n(nodes_per_side), lo(lo_), hi(hi_)
  {
  }

  double spacing() const { return (hi - lo) / (n - 1); }
  std::size_t size() const { return static_cast<std::size_t>(n) * static_cast<std::size_t>(n); }
  std::size_t index(int i, int j) const
  {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j);
  }
  double x(int j) const { return lo + j * spacing(); }
  double y(int i) const { return lo + i * spacing(); }
  bool is_dirichlet_row(int i) const { return i == 0 || i == n - 1; }

  bool operator==(const Grid &) const = default;
};

/// Throws InvalidGridError unless n >= 3 and the extent is positive.
void check_grid(const Grid &grid);

/// Row-major nodal field on a Grid.
struct Field
{
  Grid grid;
  std::vector<double> data;

  Field() = default;
  explicit Field(const Grid &g, double value = 0.0) : grid(g), data(g.size(), value) {}
  Field(const Grid &g, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  double &operator[](std::size_t k) { return data[k]; }
  double operator[](std::size_t k) const { return data[k]; }
  double &at(int i, int j) { return data[grid.index(i, j)]; }
  double at(int i, int j) const { return data[grid.index(i, j)]; }
  std::span<double> span() { return data; }
  std::span<const double> span() const { return data; }

  bool all_finite() const;
};

/// Compressed sparse row matrix.
struct SparseMatrix
{
  std::size_t nrows = 0;
  std::size_t ncols = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return values.size(); }

  /// Stored entry (r, c), or 0 if not in the pattern.
  double at(std::size_t r, std::size_t c) const;

  /// y = A x
  void multiply(std::span<const double> x, std::span<double> y) const;
  /// y = A^T x
  void multiply_transpose(std::span<const double> x, std::span<double> y) const;

  std::vector<double> diagonal() const;

  /// Identity matrix of size n (used for degenerate test systems).
  static SparseMatrix identity(std::size_t n);
};

/// Parameters theta = (a, b, c, d) of the benchmark forcing and Dirichlet data.
struct ForcingParams
{
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;

  bool operator==(const ForcingParams &) const = default;
};

/// a sin(bx) cos(cy) + b cos(ax) sin(cy) + c exp(a cos(bx) sin(cy)) + (a x^3 - b y^3) / (x^2 + c y^2 + 1)
double eval_forcing(const ForcingParams &params, double x, double y);

/// Q1 stiffness on the grid with no boundary treatment (symmetric).
SparseMatrix assemble_stiffness_raw(const Grid &grid);

/// Q1 stiffness with Dirichlet rows replaced by identity rows.
SparseMatrix assemble_stiffness(const Grid &grid);

using ScalarFunction = std::function<double(double, double)>;

/// Load vector <f, phi_j> with 2x2 Gauss quadrature per element; Dirichlet
/// entries are overwritten with `dirichlet_value`.
Field assemble_load(const Grid &grid, const ScalarFunction &f, double dirichlet_value);

/// Load vector for the benchmark forcing f_theta with Dirichlet value d.
Field assemble_load(const Grid &grid, const ForcingParams &params);

struct SolveStats
{
  std::int64_t iterations = 0;
  double relative_residual = 0.0;
};

/// Jacobi-preconditioned CG on A u = b. Rows whose only stored entry is the
/// diagonal are treated as pinned; their values are eliminated from the other
/// rows before iterating so the reduced system stays symmetric.
///
/// Returns u with ||A u - b|| / ||b|| <= tol. Throws SolverError after
/// `max_iterations` (default 10 N) without convergence.
Field solve(const SparseMatrix &A, const Field &b, double tol = 1e-10,
            std::int64_t max_iterations = -1, SolveStats *stats = nullptr);

/// Assemble and solve the benchmark problem on `grid`.
Field solve_poisson(const Grid &grid, const ForcingParams &params, double tol = 1e-10);

/// Uniform draw of theta: a ~ U(-4,4), b ~ U(-3,3), c ~ U(0,3), d ~ U(-2,2).
ForcingParams sample_forcing(std::uint64_t seed);

double relative_residual(const SparseMatrix &A, const Field &u, const Field &b);

}  // namespace probsr
