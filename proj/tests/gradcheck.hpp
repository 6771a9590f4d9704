// SPDX-License-Identifier: Apache-2.0

// Central-difference checks of the likelihood gradients, skipping
// coordinates whose +-h perturbation changes the ReLU/pooling pattern.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "probsr/downnet.hpp"

namespace probsr::testutil
{

struct FdReport
{
  int checked = 0;
  int skipped = 0;
  double max_rel = 0.0;
};

inline double fd_relative(double analytic, double fd, double floor)
{
  return std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), floor});
}

inline std::vector<std::size_t> pick_coordinates(std::size_t n, int count, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out;
  for (int k = 0; k < count; ++k)
  {
    out.push_back(pick(rng));
  }
  return out;
}

/// Checks grad_loglik_wrt_hr at the given flat HR indices, stopping once
/// `want` coordinates have been compared (all of them when negative).
inline FdReport check_hr_gradient(const NetParams &net, const Field &hr, const Field &lr, double eps,
                                  const std::vector<std::size_t> &coords, double h = 1e-5, int want = -1)
{
  const Field g = grad_loglik_wrt_hr(net, hr, lr, eps);
  double gmax = 0.0;
  for (double v : g.data)
  {
    gmax = std::max(gmax, std::abs(v));
  }
  const auto base = kink_signature(net, hr);
  FdReport r;
  Field x = hr;
  for (std::size_t k : coords)
  {
    if (want >= 0 && r.checked >= want)
    {
      break;
    }
    x[k] = hr[k] + h;
    const bool same_p = kink_signature(net, x) == base;
    const double fp = log_likelihood(net, x, lr, eps);
    x[k] = hr[k] - h;
    const bool same_m = kink_signature(net, x) == base;
    const double fm = log_likelihood(net, x, lr, eps);
    x[k] = hr[k];
    if (!same_p || !same_m)
    {
      ++r.skipped;
      continue;
    }
    const double fd = (fp - fm) / (2.0 * h);
    r.max_rel = std::max(r.max_rel, fd_relative(g[k], fd, 1e-12 * gmax));
    ++r.checked;
  }
  return r;
}

/// Checks grad_loglik_wrt_params at the given parameter indices; `want` as above.
inline FdReport check_param_gradient(const NetParams &net, const Field &hr, const Field &lr, double eps,
                                     const std::vector<std::size_t> &coords, double h = 1e-5, int want = -1)
{
  const std::vector<double> g = grad_loglik_wrt_params(net, hr, lr, eps);
  double gmax = 0.0;
  for (double v : g)
  {
    gmax = std::max(gmax, std::abs(v));
  }
  const auto base = kink_signature(net, hr);
  FdReport r;
  NetParams p = net;
  for (std::size_t k : coords)
  {
    if (want >= 0 && r.checked >= want)
    {
      break;
    }
    p.values[k] = net.values[k] + h;
    const bool same_p = kink_signature(p, hr) == base;
    const double fp = log_likelihood(p, hr, lr, eps);
    p.values[k] = net.values[k] - h;
    const bool same_m = kink_signature(p, hr) == base;
    const double fm = log_likelihood(p, hr, lr, eps);
    p.values[k] = net.values[k];
    if (!same_p || !same_m)
    {
      ++r.skipped;
      continue;
    }
    const double fd = (fp - fm) / (2.0 * h);
    r.max_rel = std::max(r.max_rel, fd_relative(g[k], fd, 1e-12 * gmax));
    ++r.checked;
  }
  return r;
}

/// Random network with every weight nonzero and moderately sized.
inline NetParams random_net(int channels, std::uint64_t seed, double scale = 0.3)
{
  NetParams p = NetParams::architecture(channels);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double &v : p.values)
  {
    v = u(rng);
  }
  return p;
}

}  // namespace probsr::testutil
