// SPDX-License-Identifier: Apache-2.0

#include "probsr/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "probsr/errors.hpp"
#include "probsr/field_io.hpp"
#include "probsr/rng.hpp"

namespace probsr
{

using nlohmann::json;

std::string to_string(Optimizer opt)
{
  return opt == Optimizer::kSgd ? "sgd" : "adam";
}

Optimizer parse_optimizer(const std::string &text)
{
  if (text == "sgd")
  {
    return Optimizer::kSgd;
  }
  if (text == "adam")
  {
    return Optimizer::kAdam;
  }
  throw ConfigError("unknown optimizer \"" + text + "\" (expected sgd or adam)");
}

void TrainConfig::validate() const
{
  if (epochs < 1)
  {
    throw ConfigError("epochs must be at least 1");
  }
  if (!(learning_rate > 0.0))
  {
    throw ConfigError("learning rate must be positive");
  }
  if (batch_size < 1 || samples_per_datum < 1)
  {
    throw ConfigError("batch size and samples per datum must be at least 1");
  }
  if (chain_steps < 1)
  {
    throw ConfigError("chain needs at least one step");
  }
  if (!(sigma > 0.0) || !(epsilon > 0.0))
  {
    throw ConfigError("sigma and epsilon must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0))
  {
    throw ConfigError("invalid Adam hyperparameters");
  }
  if (checkpoint_every < 0)
  {
    throw ConfigError("checkpoint cadence must be non-negative");
  }
  (void)chain_config(1.0);
}

json TrainConfig::to_json() const
{
  return {{"epochs", epochs},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"samples_per_datum", samples_per_datum},
          {"chain_steps", chain_steps},
          {"burn_in", burn_in},
          {"gamma", gamma},
          {"optimizer", to_string(optimizer)},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_eps", adam_eps},
          {"checkpoint_every", checkpoint_every},
          {"seed", seed},
          {"sigma", sigma},
          {"epsilon", epsilon},
          {"channels", channels}};
}

LangevinConfig TrainConfig::chain_config(double resolved_gamma) const
{
  LangevinConfig c;
  c.gamma = resolved_gamma;
  c.steps = chain_steps;
  c.burn_in = burn_in < 0 ? chain_steps / 2 : burn_in;
  c.thin = std::max<std::int64_t>(1, (c.steps - c.burn_in) / samples_per_datum);
  c.keep_samples = true;
  c.validate();
  if (c.retained_count() < samples_per_datum)
  {
    throw ConfigError("training chain retains " + std::to_string(c.retained_count()) +
                      " samples, fewer than the requested " + std::to_string(samples_per_datum));
  }
  return c;
}

McGradient mc_gradient(const NetParams &net, std::span<const Datum> batch, double epsilon,
                       const PosteriorSampler &sampler)
{
  if (batch.empty())
  {
    throw ConfigError("mc_gradient needs a non-empty batch");
  }
  const std::size_t m = batch.size();
  std::vector<std::vector<double>> per_datum(m);
  std::vector<double> loglik(m, 0.0);
  std::vector<std::string> errors(m);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < m; ++i)
  {
    try
    {
      const std::vector<Field> samples = sampler(batch[i], i);
      if (samples.empty())
      {
        throw ConfigError("sampler returned no samples");
      }
      std::vector<double> acc(net.values.size(), 0.0);
      double ll = 0.0;
      for (const Field &u : samples)
      {
        const auto g = likelihood_gradients(net, u, batch[i].lr, epsilon, true);
        for (std::size_t k = 0; k < acc.size(); ++k)
        {
          acc[k] += g.grad_params[k];
        }
        ll += g.log_likelihood;
      }
      const double inv = 1.0 / static_cast<double>(samples.size());
      for (double &v : acc)
      {
        v *= inv;
      }
      per_datum[i] = std::move(acc);
      loglik[i] = ll * inv;
    }
    catch (const std::exception &ex)
    {
      errors[i] = ex.what();
    }
  }
  for (std::size_t i = 0; i < m; ++i)
  {
    if (!errors[i].empty())
    {
      throw Error("batch element " + std::to_string(i) + ": " + errors[i]);
    }
  }

  // Ordered reduction by datum index.
  McGradient out;
  out.gradient.assign(net.values.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i)
  {
    for (std::size_t k = 0; k < out.gradient.size(); ++k)
    {
      out.gradient[k] += per_datum[i][k];
    }
    out.mean_log_likelihood += loglik[i];
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  for (double &v : out.gradient)
  {
    v *= inv_m;
  }
  out.mean_log_likelihood *= inv_m;
  return out;
}

McGradient mc_gradient(const NetParams &net, std::span<const Datum> batch, const LangevinConfig &chain,
                       int samples_per_datum, double epsilon)
{
  if (samples_per_datum < 1)
  {
    throw ConfigError("samples per datum must be at least 1");
  }
  chain.validate();
  if (chain.retained_count() < samples_per_datum)
  {
    throw ConfigError("chain retains fewer samples than requested");
  }
  PosteriorSampler langevin = [&](const Datum &d, std::size_t) {
    LangevinConfig c = chain;
    c.seed = d.chain_seed;
    c.keep_samples = true;
    const PosteriorTarget target(d.prior, &net, &d.lr, epsilon);
    ChainResult r = run_chain(target, init_chain(d.lr, d.prior.grid()), c);
    std::vector<Field> last(r.samples.end() - samples_per_datum, r.samples.end());
    return last;
  };
  return mc_gradient(net, batch, epsilon, langevin);
}

void save_train_state(const TrainState &state, const std::filesystem::path &path)
{
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'P', 'S', 'R', 'S'});
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(state.next_epoch));
  put_u64(out, static_cast<std::uint64_t>(state.adam_step));
  const auto ckpt = encode_checkpoint(state.params);
  put_u64(out, ckpt.size());
  out.insert(out.end(), ckpt.begin(), ckpt.end());
  put_u64(out, state.adam_m.size());
  for (double v : state.adam_m)
  {
    put_f64(out, v);
  }
  for (double v : state.adam_v)
  {
    put_f64(out, v);
  }
  write_file_bytes(path, out);
}

TrainState load_train_state(const std::filesystem::path &path)
{
  const auto bytes = read_file_bytes(path);
  ByteReader in(bytes, path.string());
  in.magic("PSRS");
  if (in.u32() != 1)
  {
    throw FormatError(path.string() + ": unsupported training state version");
  }
  TrainState s;
  s.next_epoch = static_cast<int>(in.u32());
  s.adam_step = static_cast<std::int64_t>(in.u64());
  const std::uint64_t ckpt_size = in.u64();
  if (in.remaining() < ckpt_size)
  {
    throw LengthMismatchError(path.string() + ": truncated training state");
  }
  s.params = decode_checkpoint(in.bytes(ckpt_size), path.string());
  const std::uint64_t n = in.u64();
  if (n != 0 && n != s.params.values.size())
  {
    throw LengthMismatchError(path.string() + ": optimizer moments do not match the parameters");
  }
  s.adam_m.resize(n);
  s.adam_v.resize(n);
  for (auto &v : s.adam_m)
  {
    v = in.f64();
  }
  for (auto &v : s.adam_v)
  {
    v = in.f64();
  }
  if (in.remaining() != 0)
  {
    throw LengthMismatchError(path.string() + ": trailing bytes in training state");
  }
  return s;
}

namespace
{

double l2norm(const std::vector<double> &v)
{
  double s = 0.0;
  for (double x : v)
  {
    s += x * x;
  }
  return std::sqrt(s);
}

void write_json(const std::filesystem::path &path, const json &j)
{
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

void write_checkpoint_bundle(const std::filesystem::path &stem, const TrainState &state, const json &meta)
{
  save_checkpoint(state.params, stem.string() + ".psrn");
  save_train_state(state, stem.string() + ".state");
  write_json(stem.string() + ".json", meta);
}

}  // namespace

TrainResult train(const Dataset &data, const TrainConfig &config, const TrainState *resume, const json &run_config)
{
  config.validate();
  const std::vector<std::size_t> train_ids = data.indices(Split::kTrain);
  if (train_ids.size() < static_cast<std::size_t>(config.batch_size))
  {
    throw ConfigError("train split has " + std::to_string(train_ids.size()) + " samples, batch size is " +
                      std::to_string(config.batch_size));
  }

  const Grid hr_grid = data.hr_grid();
  const auto A = std::make_shared<const SparseMatrix>(assemble_stiffness(hr_grid));
  double gamma = config.gamma;
  if (!(gamma > 0.0))
  {
    gamma = default_step_size(PriorModel(A, Field(hr_grid), config.sigma), config.epsilon);
  }
  const LangevinConfig chain = config.chain_config(gamma);

  TrainState state;
  if (resume)
  {
    state = *resume;
    if (state.params.values.size() != NetParams::architecture(config.channels).values.size())
    {
      throw ConfigError("resume state does not match the configured architecture");
    }
  }
  else
  {
    NetConfig nc;
    nc.channels = config.channels;
    nc.epsilon = config.epsilon;
    state.params = init_params(config.seed, nc);
  }
  if (config.optimizer == Optimizer::kAdam && state.adam_m.empty())
  {
    state.adam_m.assign(state.params.values.size(), 0.0);
    state.adam_v.assign(state.params.values.size(), 0.0);
  }

  std::vector<Field> lr_fields(data.size());
  for (std::size_t idx : train_ids)
  {
    lr_fields[idx] = data.lr(idx);
  }

  json meta = {{"train", config.to_json()}, {"resolved_gamma", gamma}, {"run_config", run_config},
               {"manifest_seed", data.manifest().seed}, {"l", data.manifest().l}};

  const bool write_files = !config.out_dir.empty();
  std::ofstream log;
  if (write_files)
  {
    std::filesystem::create_directories(config.out_dir);
    log.open(config.out_dir / "train_log.csv", resume ? std::ios::app : std::ios::trunc);
    if (!log)
    {
      throw IoError("cannot write training log in " + config.out_dir.string());
    }
    if (!resume)
    {
      log << "epoch,mean_neg_resid,grad_norm,seconds\n";
    }
  }

  TrainResult result;
  const std::size_t m = static_cast<std::size_t>(config.batch_size);
  for (int epoch = state.next_epoch; epoch < config.epochs; ++epoch)
  {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = train_ids;
    Rng shuffle_rng(derive_seed(config.seed, {0xE90C, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double ll_sum = 0.0, gn_sum = 0.0;
    int nbatches = 0;
    for (std::size_t start = 0; start < order.size(); start += m)
    {
      const std::size_t stop = std::min(order.size(), start + m);
      std::vector<Datum> batch;
      batch.reserve(stop - start);
      for (std::size_t k = start; k < stop; ++k)
      {
        const auto &e = data.entry(order[k]);
        batch.push_back(Datum{lr_fields[order[k]], build_prior(A, hr_grid, e.params, config.sigma),
                              derive_seed(config.seed, {static_cast<std::uint64_t>(epoch),
                                                        static_cast<std::uint64_t>(e.id)})});
      }
      McGradient g;
      try
      {
        g = mc_gradient(state.params, batch, chain, config.samples_per_datum, config.epsilon);
      }
      catch (const Error &ex)
      {
        throw Error("epoch " + std::to_string(epoch) + ": " + ex.what());
      }

      auto &phi = state.params.values;
      if (config.optimizer == Optimizer::kSgd)
      {
        for (std::size_t k = 0; k < phi.size(); ++k)
        {
          phi[k] += config.learning_rate * g.gradient[k];
        }
      }
      else
      {
        ++state.adam_step;
        const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.adam_step));
        const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.adam_step));
        for (std::size_t k = 0; k < phi.size(); ++k)
        {
          const double gk = g.gradient[k];
          state.adam_m[k] = config.beta1 * state.adam_m[k] + (1.0 - config.beta1) * gk;
          state.adam_v[k] = config.beta2 * state.adam_v[k] + (1.0 - config.beta2) * gk * gk;
          const double mhat = state.adam_m[k] / c1;
          const double vhat = state.adam_v[k] / c2;
          phi[k] += config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
        }
      }
      if (!std::all_of(phi.begin(), phi.end(), [](double v) { return std::isfinite(v); }))
      {
        throw Error("epoch " + std::to_string(epoch) + ": parameters became non-finite (gradient norm " +
                    std::to_string(l2norm(g.gradient)) + ")");
      }
      ll_sum += g.mean_log_likelihood;
      gn_sum += l2norm(g.gradient);
      ++nbatches;
    }

    state.next_epoch = epoch + 1;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochRecord rec{epoch, ll_sum / nbatches, gn_sum / nbatches, secs};
    result.report.epochs.push_back(rec);
    if (write_files)
    {
      log << rec.epoch << ',' << std::setprecision(17) << rec.mean_log_likelihood << ',' << rec.grad_norm << ','
          << rec.seconds << '\n'
          << std::flush;
      if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 && epoch + 1 < config.epochs)
      {
        json m2 = meta;
        m2["epoch"] = epoch + 1;
        write_checkpoint_bundle(config.out_dir / ("checkpoint_epoch" + std::to_string(epoch + 1)), state, m2);
      }
    }
  }

  if (write_files)
  {
    json m2 = meta;
    m2["epoch"] = state.next_epoch;
    write_checkpoint_bundle(config.out_dir / "model", state, m2);
    result.report.checkpoint = config.out_dir / "model.psrn";
  }
  result.params = state.params;
  result.state = std::move(state);
  return result;
}

}  // namespace probsr
