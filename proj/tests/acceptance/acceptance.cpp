// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance checks. Usage: probsr_acceptance [criterion ...]
// (default: all). Prints one PASS/FAIL line per criterion and exits non-zero
// if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "dense.hpp"
#include "support.hpp"
#include "fisher_fixture.hpp"
#include "gradcheck.hpp"
#include "probsr/cli.hpp"
#include "probsr/dataset.hpp"
#include "probsr/eval.hpp"
#include "probsr/field_io.hpp"
#include "probsr/langevin.hpp"
#include "probsr/prior.hpp"
#include "probsr/train.hpp"

using namespace probsr;
namespace fs = std::filesystem;

namespace
{

struct Outcome
{
  bool pass = false;
  std::string detail;
};

std::string fmt(const char *f, double a, double b = 0.0, double c = 0.0, double d = 0.0)
{
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

fs::path work_dir(const std::string &name)
{
  const fs::path dir = fs::temp_directory_path() / "probsr_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// L-infinity error of the FE function against (9 - y^2) / 2, sampled at nodes
// and element centres.
double fe_linf_error(int n)
{
  const Grid g(n);
  const Field u = solve(assemble_stiffness(g), assemble_load(g, [](double, double) { return 1.0; }, 0.0), 1e-12);
  auto exact = [](double y) { return 0.5 * (9.0 - y * y); };
  double e = 0.0;
  for (int i = 0; i < n; ++i)
  {
    for (int j = 0; j < n; ++j)
    {
      e = std::max(e, std::abs(u.at(i, j) - exact(g.y(i))));
    }
  }
  for (int i = 0; i + 1 < n; ++i)
  {
    for (int j = 0; j + 1 < n; ++j)
    {
      const double mid = 0.25 * (u.at(i, j) + u.at(i + 1, j) + u.at(i, j + 1) + u.at(i + 1, j + 1));
      e = std::max(e, std::abs(mid - exact(0.5 * (g.y(i) + g.y(i + 1)))));
    }
  }
  return e;
}

Outcome fem_convergence()
{
  const double coarse = fe_linf_error(20), fine = fe_linf_error(40);
  const double ratio = coarse / fine;
  return {ratio >= 3.5 && ratio <= 4.5, fmt("L-inf error %.3e (l=20) / %.3e (l=40) = %.3f, want [3.5, 4.5]",
                                            coarse, fine, ratio)};
}

Outcome prior_gradient()
{
  const Grid g(5);
  const PriorModel m = build_prior(g, {-2.5, -2.5, 1.0, 0.0}, 1e-2);
  const Eigen::MatrixXd A = testutil::to_dense(m.stiffness());
  const Eigen::MatrixXd Ainv = A.inverse();
  const Eigen::VectorXd mean = Ainv * testutil::to_vec(m.load());
  const Eigen::MatrixXd precision = (m.sigma() * m.sigma() * Ainv * Ainv.transpose()).inverse();
  auto logp = [&](const Eigen::VectorXd &u) { return -0.5 * (u - mean).dot(precision * (u - mean)); };

  const Field u = testutil::random_field(g, 17, 0.5);
  const Field grad = grad_log_prior(m, u);
  Eigen::VectorXd x = testutil::to_vec(u);
  double worst = 0.0;
  for (long k = 0; k < x.size(); ++k)
  {
    const double h = 1e-5, x0 = x(k);
    x(k) = x0 + h;
    const double fp = logp(x);
    x(k) = x0 - h;
    const double fm = logp(x);
    x(k) = x0;
    worst = std::max(worst, testutil::rel_err(grad[static_cast<std::size_t>(k)], (fp - fm) / (2 * h)));
  }
  const Field at_mean = grad_log_prior(m, prior_mean(m, 1e-14));
  double norm = 0.0;
  for (double v : at_mean.data)
  {
    norm += v * v;
  }
  norm = std::sqrt(norm);
  return {worst < 1e-6 && norm < 1e-6,
          fmt("max FD relative error %.2e (want < 1e-6); |grad| at CG mean %.2e (want < 1e-6)", worst, norm)};
}

Outcome autodiff_exactness()
{
  const Grid hr(32), lr(8);
  const NetParams net = testutil::random_net(16, 23, 0.3);
  const Field u = testutil::random_field(hr, 5);
  const Field y = testutil::random_field(lr, 6);
  const double eps = 1e-2;
  const auto hr_rep =
      testutil::check_hr_gradient(net, u, y, eps, testutil::pick_coordinates(hr.size(), 400, 1), 1e-5, 100);
  const auto p_rep = testutil::check_param_gradient(net, u, y, eps,
                                                    testutil::pick_coordinates(net.values.size(), 400, 2), 1e-5, 100);
  const bool pass = hr_rep.checked == 100 && p_rep.checked == 100 && hr_rep.max_rel < 1e-5 && p_rep.max_rel < 1e-5;
  return {pass, fmt("d/du max rel %.2e over %.0f coords, d/dphi max rel %.2e over %.0f coords (want < 1e-5)",
                    hr_rep.max_rel, hr_rep.checked, p_rep.max_rel, p_rep.checked) +
                    " (" + std::to_string(hr_rep.skipped + p_rep.skipped) + " kink-crossing draws skipped)"};
}

Outcome ula_sanity()
{
  const Grid g(5);
  const PriorModel m(std::make_shared<const SparseMatrix>(SparseMatrix::identity(g.size())), Field(g), 1.0);
  const PosteriorTarget target(m, nullptr, nullptr, 1.0);
  LangevinConfig c;
  c.gamma = 0.05;
  c.steps = 200000;
  c.burn_in = 0;
  c.thin = 1;
  c.seed = 2024;
  c.keep_samples = false;
  const ChainResult r = run_chain(target, Field(g), c);
  double lo = 1e9, hi = 0.0;
  for (double s : r.std.data)
  {
    lo = std::min(lo, s * s);
    hi = std::max(hi, s * s);
  }
  return {lo >= 0.90 && hi <= 1.15,
          fmt("per-coordinate variance in [%.4f, %.4f], want within [0.90, 1.15] (ULA limit %.4f)", lo, hi,
              1.0 / (1.0 - 0.025))};
}

struct SrResults
{
  bool ran = false;
  std::string error;
  EvalReport report;
};

SrResults &sr_results()
{
  static SrResults r;
  if (!r.ran)
  {
    r.ran = true;
    try
    {
      const fs::path dir = work_dir("sr");
      generate(200, 16, 2024, true, dir / "data");
      const Dataset ds = Dataset::load(dir / "data" / "manifest.jsonl");
      TrainConfig tc;
      tc.seed = 2024;
      tc.out_dir = dir / "model";
      const TrainResult trained = train(ds, tc);
      std::printf("  trained %zu epochs; mean -|r|^2/(2 eps^2): first %.4g, last %.4g\n",
                  trained.report.epochs.size(), trained.report.epochs.front().mean_log_likelihood,
                  trained.report.epochs.back().mean_log_likelihood);
      EvalConfig ec;
      ec.inference.chain.seed = 2024;
      ec.out_dir = dir / "eval";
      r.report = evaluate(ds, trained.params, ec);
    }
    catch (const std::exception &e)
    {
      r.error = e.what();
    }
  }
  return r;
}

Outcome sr_improvement()
{
  const SrResults &r = sr_results();
  if (!r.error.empty())
  {
    return {false, "pipeline failed: " + r.error};
  }
  const double bic = r.report.mean_mse_bicubic, psr = r.report.mean_mse_probsr;
  const double gain = (bic - psr) / bic;
  return {psr <= bic && gain >= 0.01,
          fmt("mean MSE over %.0f cases: bicubic %.5g, ProbSR %.5g, improvement %.2f%% (want >= 1%%)",
              static_cast<double>(r.report.cases.size()), bic, psr, 100.0 * gain)};
}

Outcome uq_structure()
{
  const SrResults &r = sr_results();
  if (!r.error.empty() || r.report.cases.empty())
  {
    return {false, "pipeline failed: " + r.error};
  }
  const CaseResult &c = r.report.cases.front();
  int holds = 0;
  for (const auto &k : r.report.cases)
  {
    holds += k.uq.mean_std_near_lr < k.uq.mean_std_far ? 1 : 0;
  }
  return {c.uq.mean_std_near_lr < c.uq.mean_std_far,
          fmt("case %.0f: mean std near LR nodes %.5g < elsewhere %.5g", c.id, c.uq.mean_std_near_lr,
              c.uq.mean_std_far) +
              " (holds in " + std::to_string(holds) + "/" + std::to_string(r.report.cases.size()) + " cases)"};
}

Outcome scaling_trend()
{
  BenchConfig bc;
  bc.resolutions = {64, 96, 128, 160, 192};
  bc.repeats = 3;
  bc.steps = 500;
  bc.seed = 7;
  const auto rows = bench(bc);
  std::map<int, std::pair<double, double>> t;
  for (const auto &row : rows)
  {
    (row.method == "direct" ? t[row.resolution].first : t[row.resolution].second) = row.seconds;
  }
  std::ostringstream table;
  for (const auto &[r, p] : t)
  {
    std::printf("  r=%d direct %.4fs probsr %.4fs ratio %.4f\n", r, p.first, p.second, p.first / p.second);
  }
  const double lo = t[64].first / t[64].second, hi = t[192].first / t[192].second;
  return {hi > lo, fmt("T_direct/T_probsr: %.4f at r=64, %.4f at r=192 (want larger at 192)", lo, hi)};
}

// Every regular file under `root`, relative path -> bytes.
std::map<std::string, std::vector<std::uint8_t>> tree(const fs::path &root, const std::set<std::string> &skip)
{
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto &e : fs::recursive_directory_iterator(root))
  {
    if (e.is_regular_file() && !skip.count(e.path().filename().string()))
    {
      out[fs::relative(e.path(), root).string()] = read_file_bytes(e.path());
    }
  }
  return out;
}

Outcome determinism()
{
  const fs::path base = work_dir("determinism");
  const fs::path saved = fs::current_path();
  std::ostringstream sink;
  int failures = 0;
  for (const char *run : {"a", "b"})
  {
    fs::create_directories(base / run);
    fs::current_path(base / run);
    const std::vector<std::vector<std::string>> steps = {
        {"gen-data", "--n", "8", "--l", "8", "--seed", "11", "--with-hr", "--out", "data"},
        {"train", "--data", "data", "--epochs", "1", "--batch", "4", "--seed", "11", "--out", "model"},
        {"superres", "--input", "data/fields/000000_lr.psrf", "--model", "model/model.psrn", "--theta",
         "1.5,-2,0.7,0.2", "--steps", "600", "--burnin", "200", "--seed", "11", "--save-samples", "--out", "sr"}};
    for (const auto &args : steps)
    {
      failures += run_cli(args, sink, sink) != 0 ? 1 : 0;
    }
  }
  fs::current_path(saved);
  if (failures)
  {
    return {false, std::to_string(failures) + " CLI invocations failed: " + sink.str()};
  }
  // The training log records wall-clock seconds and is excluded.
  const auto a = tree(base / "a", {"train_log.csv"});
  const auto b = tree(base / "b", {"train_log.csv"});
  int differing = 0;
  for (const auto &[name, bytes] : a)
  {
    const auto it = b.find(name);
    differing += it == b.end() || it->second != bytes ? 1 : 0;
  }
  return {differing == 0 && a.size() == b.size() && !a.empty(),
          std::to_string(a.size()) + " artifacts compared (gen-data, train, superres), " + std::to_string(differing) +
              " differ"};
}

Outcome fisher_fidelity()
{
  const testutil::FisherFixture fx(4, 11);
  const McGradient g = mc_gradient(fx.net, fx.batch, fx.epsilon,
                                   [&](const Datum &, std::size_t i) { return fx.exact_samples(i, 256, 3); });
  const double cos = testutil::cosine(fx.restrict(g.gradient), fx.closed_form_gradient());
  return {cos > 0.9, fmt("cosine(MC gradient, closed-form gradient) = %.6f over %.0f parameters (want > 0.9)", cos,
                         static_cast<double>(fx.free_params.size()))};
}

}  // namespace

int main(int argc, char **argv)
{
  const std::map<int, std::pair<const char *, std::function<Outcome()>>> criteria = {
      {1, {"FEM second-order convergence", fem_convergence}},
      {2, {"prior gradient exactness", prior_gradient}},
      {3, {"autodiff exactness", autodiff_exactness}},
      {4, {"ULA stationary variance", ula_sanity}},
      {5, {"end-to-end SR improvement", sr_improvement}},
      {6, {"UQ structure", uq_structure}},
      {7, {"scaling trend", scaling_trend}},
      {8, {"determinism", determinism}},
      {9, {"MC gradient fidelity", fisher_fidelity}},
  };
  std::vector<int> selected;
  for (int k = 1; k < argc; ++k)
  {
    selected.push_back(std::atoi(argv[k]));
  }
  if (selected.empty())
  {
    for (const auto &[id, c] : criteria)
    {
      selected.push_back(id);
    }
  }

  int failed = 0;
  for (int id : selected)
  {
    const auto it = criteria.find(id);
    if (it == criteria.end())
    {
      std::printf("criterion %d: unknown\n", id);
      ++failed;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try
    {
      o = it->second.second();
    }
    catch (const std::exception &e)
    {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d (%s): %s - %s [%.1fs]\n", id, it->second.first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
