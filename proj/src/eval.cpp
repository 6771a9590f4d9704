// SPDX-License-Identifier: Apache-2.0

#include "probsr/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "probsr/errors.hpp"
#include "probsr/field_io.hpp"
#include "probsr/prior.hpp"
#include "probsr/rng.hpp"

namespace probsr
{

using nlohmann::json;

double mse(const Field &a, const Field &b)
{
  if (!(a.grid == b.grid) || a.size() != b.size())
  {
    throw ShapeError("mse: fields live on different grids");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
  {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

namespace
{

// Nearest HR index to LR index j along one axis, lowest index on ties.
int nearest_axis(int j, int l, int n)
{
  const long num = static_cast<long>(j) * (n - 1);
  const long den = l - 1;
  const long q = num / den;
  const long r = num % den;
  return static_cast<int>(2 * r > den ? q + 1 : q);
}

}  // namespace

std::vector<std::size_t> near_lr_nodes(const Grid &hr, int l)
{
  if (l < 2 || l > hr.n)
  {
    throw InvalidGridError("near_lr_nodes: LR size must lie in [2, " + std::to_string(hr.n) + "]");
  }
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(l) * static_cast<std::size_t>(l));
  for (int i = 0; i < l; ++i)
  {
    for (int j = 0; j < l; ++j)
    {
      out.push_back(hr.index(nearest_axis(i, l, hr.n), nearest_axis(j, l, hr.n)));
    }
  }
  return out;
}

UqSummary uq_analysis(const Field &std_field, int l)
{
  std::vector<char> near(std_field.size(), 0);
  for (std::size_t k : near_lr_nodes(std_field.grid, l))
  {
    near[k] = 1;
  }
  double s_near = 0.0, s_far = 0.0;
  std::size_t c_near = 0, c_far = 0;
  for (std::size_t k = 0; k < std_field.size(); ++k)
  {
    if (near[k])
    {
      s_near += std_field[k];
      ++c_near;
    }
    else
    {
      s_far += std_field[k];
      ++c_far;
    }
  }
  UqSummary u;
  u.mean_std_near_lr = c_near ? s_near / static_cast<double>(c_near) : 0.0;
  u.mean_std_far = c_far ? s_far / static_cast<double>(c_far) : 0.0;
  return u;
}

void write_heatmap_ppm(const std::filesystem::path &path, const Field &field)
{
  const int n = field.grid.n;
  const auto [lo_it, hi_it] = std::minmax_element(field.data.begin(), field.data.end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = hi > lo ? hi - lo : 1.0;

  const std::string header = "P6\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + 3 * field.size());
  for (int i = n - 1; i >= 0; --i)
  {
    for (int j = 0; j < n; ++j)
    {
      const double t = std::clamp((field.at(i, j) - lo) / span, 0.0, 1.0);
      double r, g, b;
      if (t < 0.5)
      {
        const double s = 2.0 * t;  // blue -> white
        r = s;
        g = s;
        b = 1.0;
      }
      else
      {
        const double s = 2.0 * (1.0 - t);  // white -> red
        r = 1.0;
        g = s;
        b = s;
      }
      out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * r)));
      out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * g)));
      out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * b)));
    }
  }
  write_file_bytes(path, out);
}

Field log_field(const Field &field)
{
  double floor = 0.0;
  for (double v : field.data)
  {
    if (v > 0.0 && (floor == 0.0 || v < floor))
    {
      floor = v;
    }
  }
  if (floor == 0.0)
  {
    floor = 1e-300;
  }
  Field out(field.grid);
  for (std::size_t k = 0; k < field.size(); ++k)
  {
    out[k] = std::log(std::max(field[k], floor));
  }
  return out;
}

namespace
{

InferenceResult run_inference(const NetParams &net, const Field &lr, const PriorModel &prior, double gamma,
                              const InferenceConfig &config)
{
  LangevinConfig chain = config.chain;
  chain.gamma = gamma;
  const PosteriorTarget target(prior, &net, &lr, config.epsilon);
  InferenceResult r;
  r.gamma = gamma;
  r.chain = run_chain(target, init_chain(lr, prior.grid()), chain);
  return r;
}

}  // namespace

InferenceResult super_resolve(const NetParams &net, const Field &lr, const ForcingParams &theta,
                              const InferenceConfig &config)
{
  const Grid hr = hr_grid_for(lr.grid);
  const PriorModel prior = build_prior(hr, theta, config.sigma);
  const double gamma = config.chain.gamma > 0.0 ? config.chain.gamma : default_step_size(prior, config.epsilon);
  return run_inference(net, lr, prior, gamma, config);
}

json EvalReport::to_json() const
{
  json j;
  j["cases"] = json::array();
  for (const auto &c : cases)
  {
    j["cases"].push_back({{"id", c.id},
                          {"theta", {c.params.a, c.params.b, c.params.c, c.params.d}},
                          {"mse_bicubic", c.mse_bicubic},
                          {"mse_probsr", c.mse_probsr},
                          {"mean_std_near_lr", c.uq.mean_std_near_lr},
                          {"mean_std_far", c.uq.mean_std_far}});
  }
  j["mean_mse_bicubic"] = mean_mse_bicubic;
  j["mean_mse_probsr"] = mean_mse_probsr;
  j["uq"] = {{"mean_std_near_lr", mean_uq.mean_std_near_lr}, {"mean_std_far", mean_uq.mean_std_far}};
  j["timing"] = json::array();
  for (const auto &row : timing)
  {
    j["timing"].push_back({{"resolution", row.resolution}, {"method", row.method}, {"seconds", row.seconds}});
  }
  j["metadata"] = metadata;
  return j;
}

EvalReport evaluate(const Dataset &data, const NetParams &net, const EvalConfig &config)
{
  const std::vector<std::size_t> test = data.indices(Split::kTest);
  if (test.empty())
  {
    throw ConfigError("evaluation needs a non-empty test split");
  }
  for (std::size_t idx : test)
  {
    if (!data.entry(idx).hr_path)
    {
      throw ConfigError("test sample " + std::to_string(data.entry(idx).id) +
                        " has no HR ground truth (generate with --with-hr)");
    }
  }

  const Grid hr_grid = data.hr_grid();
  const int l = data.manifest().l;
  const auto A = std::make_shared<const SparseMatrix>(assemble_stiffness(hr_grid));
  const double gamma = config.inference.chain.gamma > 0.0
                           ? config.inference.chain.gamma
                           : default_step_size(PriorModel(A, Field(hr_grid), config.inference.sigma),
                                               config.inference.epsilon);
  const bool write_files = !config.out_dir.empty();
  if (write_files)
  {
    std::filesystem::create_directories(config.out_dir);
  }

  EvalReport report;
  report.cases.resize(test.size());
  std::vector<std::string> errors(test.size());

#pragma omp parallel for schedule(dynamic)
  for (std::size_t t = 0; t < test.size(); ++t)
  {
    try
    {
      const auto &e = data.entry(test[t]);
      const Field lr = data.lr(test[t]);
      const Field truth = data.hr(test[t]);
      const PriorModel prior = build_prior(A, hr_grid, e.params, config.inference.sigma);
      InferenceConfig ic = config.inference;
      ic.chain.seed = derive_seed(config.inference.chain.seed, {static_cast<std::uint64_t>(e.id)});
      ic.chain.keep_samples = false;
      const InferenceResult r = run_inference(net, lr, prior, gamma, ic);

      CaseResult &c = report.cases[t];
      c.id = e.id;
      c.params = e.params;
      c.mse_bicubic = mse(init_chain(lr, hr_grid), truth);
      c.mse_probsr = mse(r.chain.mean, truth);
      c.uq = uq_analysis(r.chain.std, l);

      if (write_files && static_cast<int>(t) < config.max_heatmaps)
      {
        char stem[64];
        std::snprintf(stem, sizeof stem, "case_%06d", e.id);
        const auto base = config.out_dir / stem;
        write_field(base.string() + "_mean.psrf", r.chain.mean);
        write_field(base.string() + "_std.psrf", r.chain.std);
        write_heatmap_ppm(base.string() + "_logstd.ppm", log_field(r.chain.std));
      }
    }
    catch (const std::exception &ex)
    {
      errors[t] = ex.what();
    }
  }
  for (std::size_t t = 0; t < test.size(); ++t)
  {
    if (!errors[t].empty())
    {
      throw Error("test sample " + std::to_string(data.entry(test[t]).id) + ": " + errors[t]);
    }
  }

  for (const auto &c : report.cases)
  {
    report.mean_mse_bicubic += c.mse_bicubic;
    report.mean_mse_probsr += c.mse_probsr;
    report.mean_uq.mean_std_near_lr += c.uq.mean_std_near_lr;
    report.mean_uq.mean_std_far += c.uq.mean_std_far;
  }
  const double inv = 1.0 / static_cast<double>(report.cases.size());
  report.mean_mse_bicubic *= inv;
  report.mean_mse_probsr *= inv;
  report.mean_uq.mean_std_near_lr *= inv;
  report.mean_uq.mean_std_far *= inv;

  const auto &chain = config.inference.chain;
  report.metadata = {{"run_config", config.run_config},
                     {"manifest_seed", data.manifest().seed},
                     {"l", l},
                     {"sigma", config.inference.sigma},
                     {"epsilon", config.inference.epsilon},
                     {"gamma", gamma},
                     {"steps", chain.steps},
                     {"burn_in", chain.burn_in},
                     {"thin", chain.thin},
                     {"chain_seed", chain.seed},
                     {"point_estimate", "posterior mean"}};
  if (write_files)
  {
    const std::string text = report.to_json().dump(2) + "\n";
    write_file_bytes(config.out_dir / "eval_report.json",
                     std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
  }
  return report;
}

namespace
{

template <typename F>
double median_seconds(int repeats, F &&work)
{
  work();  // warm-up
  std::vector<double> t;
  for (int k = 0; k < repeats; ++k)
  {
    const auto t0 = std::chrono::steady_clock::now();
    work();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  const std::size_t m = t.size() / 2;
  return t.size() % 2 ? t[m] : 0.5 * (t[m - 1] + t[m]);
}

}  // namespace

std::vector<BenchRow> bench(const BenchConfig &config)
{
  if (config.repeats < 1)
  {
    throw ConfigError("bench needs at least one repeat");
  }
  if (config.steps < 1)
  {
    throw ConfigError("bench chain needs at least one step");
  }
  for (int r : config.resolutions)
  {
    if (r < 12 || r % 4 != 0)
    {
      throw ConfigError("bench resolution " + std::to_string(r) + " is not a multiple of 4 (>= 12)");
    }
  }
  const ForcingParams theta = sample_forcing(config.seed);
  NetConfig nc;
  nc.channels = config.channels;
  nc.epsilon = config.epsilon;
  const NetParams net = init_params(config.seed, nc);

  std::vector<BenchRow> rows;
  for (int r : config.resolutions)
  {
    const Grid hr(r);
    const Grid lr(r / 4);
    volatile double sink = 0.0;

    const double t_direct = median_seconds(config.repeats, [&] {
      const Field u = solve(assemble_stiffness(hr), assemble_load(hr, theta), 1e-10);
      sink = sink + u[u.size() / 2];
    });
    rows.push_back({r, "direct", t_direct});

    const double t_probsr = median_seconds(config.repeats, [&] {
      const Field u_lr = solve(assemble_stiffness(lr), assemble_load(lr, theta), 1e-10);
      const PriorModel prior = build_prior(hr, theta, config.sigma);
      LangevinConfig chain;
      chain.gamma = default_step_size(prior, config.epsilon);
      chain.steps = config.steps;
      chain.burn_in = 0;
      chain.thin = 1;
      chain.seed = config.seed;
      chain.keep_samples = false;
      const PosteriorTarget target(prior, &net, &u_lr, config.epsilon);
      const ChainResult res = run_chain(target, init_chain(u_lr, hr), chain);
      sink = sink + res.mean[res.mean.size() / 2];
    });
    rows.push_back({r, "probsr", t_probsr});
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow> &rows)
{
  std::ostringstream out;
  out.precision(9);
  out << "resolution,method,seconds\n";
  for (const auto &row : rows)
  {
    out << row.resolution << ',' << row.method << ',' << row.seconds << '\n';
  }
  return out.str();
}

}  // namespace probsr
