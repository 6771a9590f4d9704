// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "probsr/fem.hpp"

namespace probsr::testutil
{

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name)
{
  const auto *info = ::testing::UnitTest::GetInstance()->current_test_info();
  std::string tag = name;
  if (info)
  {
    tag = std::string(info->test_suite_name()) + "_" + info->name() + "_" + name;
  }
  const auto dir = std::filesystem::temp_directory_path() / "probsr_tests" / tag;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double &x : v)
  {
    x = normal(rng);
  }
  return v;
}

inline Field random_field(const Grid &grid, std::uint64_t seed, double scale = 1.0)
{
  return Field(grid, random_vector(grid.size(), seed, scale));
}

inline double rel_err(double a, double b)
{
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline double max_abs_diff(const std::vector<double> &a, const std::vector<double> &b)
{
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
  {
    m = std::max(m, std::abs(a[k] - b[k]));
  }
  return m;
}

}  // namespace probsr::testutil
