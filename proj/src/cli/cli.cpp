// SPDX-License-Identifier: Apache-2.0

#include "probsr/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "probsr/dataset.hpp"
#include "probsr/downnet.hpp"
#include "probsr/errors.hpp"
#include "probsr/eval.hpp"
#include "probsr/field_io.hpp"
#include "probsr/train.hpp"

namespace probsr
{

namespace fs = std::filesystem;
using nlohmann::json;

namespace
{

struct GenDataArgs
{
  int n = 1000;
  int l = 40;
  std::uint64_t seed = 0;
  std::string out;
  bool with_hr = false;
  bool hr_all = false;
};

struct TrainArgs
{
  std::string data;
  TrainConfig config;
  std::string optimizer = "adam";
  std::string out;
  std::string resume;
};

struct ChainArgs
{
  std::int64_t steps = 5000;
  std::int64_t burn_in = 2000;
  std::int64_t thin = 10;
  double gamma = 0.0;
  double sigma = 1e-2;
  double epsilon = 1e-2;
  std::uint64_t seed = 0;
};

struct SuperresArgs
{
  std::string input;
  std::string model;
  std::vector<double> theta;
  std::string out;
  bool save_samples = false;
  ChainArgs chain;
};

struct EvalArgs
{
  std::string data;
  std::string model;
  std::string out;
  int heatmaps = 4;
  ChainArgs chain;
};

struct BenchArgs
{
  std::vector<int> resolutions{64, 96, 128, 160, 192};
  int repeats = 3;
  std::int64_t steps = 500;
  std::uint64_t seed = 0;
  std::string out;
};

// Options that only locate inputs/outputs or tune the host are left out of
// embedded configs so that artifacts from different directories compare equal.
bool is_location_option(const std::string &name)
{
  return name == "help" || name == "out" || name == "config" || name == "threads";
}

json options_json(const CLI::App &sub)
{
  json j = json::object();
  for (const CLI::Option *opt : sub.get_options())
  {
    const std::string name = opt->get_single_name();
    if (name.empty() || is_location_option(name))
    {
      continue;
    }
    if (opt->get_expected_max() == 0)
    {
      j[name] = opt->count() > 0 && opt->as<bool>();
      continue;
    }
    if (opt->count() > 0)
    {
      std::string joined;
      for (const auto &r : opt->results())
      {
        joined += (joined.empty() ? "" : ",") + r;
      }
      j[name] = joined;
    }
    else if (const std::string def = opt->get_default_str(); !def.empty())
    {
      j[name] = def;
    }
    else
    {
      j[name] = nullptr;  // unset, resolved at run time (e.g. the step size)
    }
  }
  j["command"] = sub.get_name();
  return j;
}

fs::path manifest_path(const std::string &data)
{
  const fs::path p(data);
  return fs::is_directory(p) ? p / "manifest.jsonl" : p;
}

void write_text(const fs::path &path, const std::string &text)
{
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

void add_chain_options(CLI::App *sub, ChainArgs &c)
{
  sub->add_option("--steps", c.steps, "Langevin steps")->check(CLI::PositiveNumber);
  sub->add_option("--burnin", c.burn_in, "Burn-in steps")->check(CLI::NonNegativeNumber);
  sub->add_option("--thin", c.thin, "Keep every k-th step after burn-in")->check(CLI::PositiveNumber);
  sub->add_option("--gamma", c.gamma, "Langevin step size (default: from the Lipschitz estimate)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--sigma", c.sigma, "Prior noise scale")->check(CLI::PositiveNumber);
  sub->add_option("--epsilon", c.epsilon, "Observation noise scale")->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.seed, "Chain seed")->envname("PROBSR_SEED");
}

InferenceConfig inference_config(const ChainArgs &c)
{
  InferenceConfig ic;
  ic.sigma = c.sigma;
  ic.epsilon = c.epsilon;
  ic.chain.steps = c.steps;
  ic.chain.burn_in = c.burn_in;
  ic.chain.thin = c.thin;
  ic.chain.gamma = c.gamma;
  ic.chain.seed = c.seed;
  return ic;
}

int cmd_gen_data(const GenDataArgs &a, const json &run_config, std::ostream &out)
{
  const HrPolicy policy = a.hr_all ? HrPolicy::kAll : (a.with_hr ? HrPolicy::kTestOnly : HrPolicy::kNone);
  const Manifest m = generate(a.n, a.l, a.seed, policy, a.out, run_config);
  out << (fs::path(a.out) / "manifest.jsonl").string() << "\n";
  out << m.entries.size() - static_cast<std::size_t>(test_count(m.n)) << " train / " << test_count(m.n)
      << " test samples\n";
  return 0;
}

int cmd_train(TrainArgs &a, const json &run_config, std::ostream &out)
{
  const Dataset data = Dataset::load(manifest_path(a.data));
  a.config.optimizer = parse_optimizer(a.optimizer);
  a.config.out_dir = a.out;
  TrainState resume;
  const TrainState *resume_ptr = nullptr;
  if (!a.resume.empty())
  {
    resume = load_train_state(a.resume);
    resume_ptr = &resume;
  }
  const TrainResult r = train(data, a.config, resume_ptr, run_config);
  for (const auto &e : r.report.epochs)
  {
    out << "epoch " << e.epoch << "  mean_neg_resid " << e.mean_log_likelihood << "  grad_norm " << e.grad_norm
        << "  " << e.seconds << " s\n";
  }
  out << r.report.checkpoint.string() << "\n";
  return 0;
}

int cmd_superres(const SuperresArgs &a, const json &run_config, std::ostream &out)
{
  if (a.theta.size() != 4)
  {
    throw CLI::ValidationError("--theta", "expects exactly four values a,b,c,d");
  }
  const Field lr = read_field(a.input);
  const NetParams net = load_checkpoint(a.model);
  const ForcingParams theta{a.theta[0], a.theta[1], a.theta[2], a.theta[3]};
  InferenceConfig ic = inference_config(a.chain);
  ic.chain.keep_samples = a.save_samples;
  const InferenceResult r = super_resolve(net, lr, theta, ic);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_field(dir / "mean.psrf", r.chain.mean);
  write_field(dir / "std.psrf", r.chain.std);
  const Field log_std = log_field(r.chain.std);
  write_field(dir / "logstd.psrf", log_std);
  write_heatmap_ppm(dir / "logstd.ppm", log_std);
  if (a.save_samples)
  {
    fs::create_directories(dir / "samples");
    for (std::size_t k = 0; k < r.chain.samples.size(); ++k)
    {
      char name[48];
      std::snprintf(name, sizeof name, "sample_%06zu.psrf", k);
      write_field(dir / "samples" / name, r.chain.samples[k]);
    }
  }
  const json meta = {{"run_config", run_config},
                     {"gamma", r.gamma},
                     {"retained", r.chain.retained},
                     {"lr_nodes", lr.grid.n},
                     {"hr_nodes", r.chain.mean.grid.n}};
  write_text(dir / "metadata.json", meta.dump(2) + "\n");
  out << dir.string() << "\n";
  return 0;
}

int cmd_eval(const EvalArgs &a, const json &run_config, std::ostream &out)
{
  const Dataset data = Dataset::load(manifest_path(a.data));
  const NetParams net = load_checkpoint(a.model);
  EvalConfig ec;
  ec.inference = inference_config(a.chain);
  ec.max_heatmaps = a.heatmaps;
  ec.out_dir = a.out;
  ec.run_config = run_config;
  const EvalReport report = evaluate(data, net, ec);
  out << "cases " << report.cases.size() << "  mse_bicubic " << report.mean_mse_bicubic << "  mse_probsr "
      << report.mean_mse_probsr << "\n";
  out << "mean std near LR " << report.mean_uq.mean_std_near_lr << "  elsewhere " << report.mean_uq.mean_std_far
      << "\n";
  return 0;
}

int cmd_bench(const BenchArgs &a, const json &run_config, std::ostream &out)
{
  BenchConfig bc;
  bc.resolutions = a.resolutions;
  bc.repeats = a.repeats;
  bc.steps = a.steps;
  bc.seed = a.seed;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  std::vector<BenchRow> rows;
  try
  {
    rows = bench(bc);
  }
  catch (...)
  {
    omp_set_num_threads(saved);
    throw;
  }
  omp_set_num_threads(saved);
  const std::string csv = bench_csv(rows);
  if (a.out.empty())
  {
    out << csv;
    return 0;
  }
  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "bench.csv", csv);
  const json meta = {{"run_config", run_config}, {"chain_steps", a.steps}, {"includes_burn_in", true},
                     {"excludes_io", true}};
  write_text(dir / "bench.json", meta.dump(2) + "\n");
  out << (dir / "bench.csv").string() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
  CLI::App app{"Probabilistic super-resolution of Poisson solution fields"};
  app.name("probsr");
  app.require_subcommand(1);
  app.set_config("--config", "", "Key = value config file; [subcommand] sections apply per command");
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (default: available parallelism)")
      ->check(CLI::NonNegativeNumber);

  GenDataArgs gen;
  CLI::App *gen_cmd = app.add_subcommand("gen-data", "Generate an LR corpus with optional HR truth");
  gen_cmd->add_option("--n", gen.n, "Number of samples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--l", gen.l, "LR nodes per side")->check(CLI::Range(8, 4096));
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed")->envname("PROBSR_SEED");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_flag("--with-hr", gen.with_hr, "Solve HR truth for the test split");
  gen_cmd->add_flag("--hr-all", gen.hr_all, "Solve HR truth for every sample");

  TrainArgs tr;
  CLI::App *train_cmd = app.add_subcommand("train", "Train the downscaling network");
  train_cmd->add_option("--data", tr.data, "Manifest file or dataset directory")->required();
  train_cmd->add_option("--epochs", tr.config.epochs, "Epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.config.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tr.config.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--samples", tr.config.samples_per_datum, "Posterior samples per datum")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--langevin-steps", tr.config.chain_steps, "Training chain length")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--burnin", tr.config.burn_in, "Training chain burn-in (default: half the chain)")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--gamma", tr.config.gamma, "Langevin step size (default: from the Lipschitz estimate)")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--optimizer", tr.optimizer, "sgd or adam")->check(CLI::IsMember({"sgd", "adam"}));
  train_cmd->add_option("--seed", tr.config.seed, "Training seed")->envname("PROBSR_SEED");
  train_cmd->add_option("--sigma", tr.config.sigma, "Prior noise scale")->check(CLI::PositiveNumber);
  train_cmd->add_option("--epsilon", tr.config.epsilon, "Observation noise scale")->check(CLI::PositiveNumber);
  train_cmd->add_option("--channels", tr.config.channels, "Hidden channels")->check(CLI::PositiveNumber);
  train_cmd->add_option("--checkpoint-every", tr.config.checkpoint_every, "Checkpoint cadence in epochs")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--resume", tr.resume, "Training state file to continue from");
  train_cmd->add_option("--out", tr.out, "Output directory")->required();

  SuperresArgs sr;
  CLI::App *sr_cmd = app.add_subcommand("superres", "Sample the HR posterior for one LR field");
  sr_cmd->add_option("--input", sr.input, "LR field (PSRF)")->required();
  sr_cmd->add_option("--model", sr.model, "Network checkpoint (PSRN)")->required();
  sr_cmd->add_option("--theta", sr.theta, "Forcing parameters a,b,c,d")->required()->delimiter(',');
  sr_cmd->add_option("--out", sr.out, "Output directory")->required();
  sr_cmd->add_flag("--save-samples", sr.save_samples, "Also write every retained sample");
  add_chain_options(sr_cmd, sr.chain);

  EvalArgs ev;
  CLI::App *eval_cmd = app.add_subcommand("eval", "Compare ProbSR with bicubic upscaling on the test split");
  eval_cmd->add_option("--data", ev.data, "Manifest file or dataset directory")->required();
  eval_cmd->add_option("--model", ev.model, "Network checkpoint (PSRN)")->required();
  eval_cmd->add_option("--out", ev.out, "Output directory");
  eval_cmd->add_option("--heatmaps", ev.heatmaps, "Cases with heatmaps and field dumps")
      ->check(CLI::NonNegativeNumber);
  add_chain_options(eval_cmd, ev.chain);

  BenchArgs be;
  CLI::App *bench_cmd = app.add_subcommand("bench", "Time direct HR solves against ProbSR inference");
  bench_cmd->add_option("--resolutions", be.resolutions, "HR nodes per side, multiples of 4")
      ->delimiter(',')
      ->check(CLI::Validator(
          [](std::string &v) -> std::string {
            int r = 0;
            try
            {
              r = std::stoi(v);
            }
            catch (const std::exception &)
            {
              return "not an integer: " + v;
            }
            return r >= 12 && r % 4 == 0 ? std::string() : "resolution " + v + " is not a multiple of 4 (>= 12)";
          },
          "MULTIPLE OF 4"));
  bench_cmd->add_option("--repeats", be.repeats, "Timed repeats after one warm-up")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--steps", be.steps, "Inference chain length")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", be.seed, "Seed")->envname("PROBSR_SEED");
  bench_cmd->add_option("--out", be.out, "Output directory (default: CSV on stdout)");

  for (CLI::App *sub : {gen_cmd, train_cmd, sr_cmd, eval_cmd, bench_cmd})
  {
    sub->option_defaults()->always_capture_default();
  }

  try
  {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  }
  catch (const CLI::ParseError &e)
  {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try
  {
    if (threads > 0)
    {
      omp_set_num_threads(threads);
    }
    if (gen_cmd->parsed())
    {
      return cmd_gen_data(gen, options_json(*gen_cmd), out);
    }
    if (train_cmd->parsed())
    {
      return cmd_train(tr, options_json(*train_cmd), out);
    }
    if (sr_cmd->parsed())
    {
      return cmd_superres(sr, options_json(*sr_cmd), out);
    }
    if (eval_cmd->parsed())
    {
      return cmd_eval(ev, options_json(*eval_cmd), out);
    }
    if (bench_cmd->parsed())
    {
      return cmd_bench(be, options_json(*bench_cmd), out);
    }
  }
  catch (const CLI::ParseError &e)
  {
    err << "probsr: " << e.what() << "\n";
    return 2;
  }
  catch (const std::exception &e)
  {
    err << "probsr: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace probsr
