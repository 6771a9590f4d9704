// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <fstream>

#include "fisher_fixture.hpp"
#include "gradcheck.hpp"
#include "probsr/errors.hpp"
#include "probsr/field_io.hpp"
#include "probsr/train.hpp"
#include "support.hpp"

using namespace probsr;

namespace
{

Datum make_datum(int l, std::uint64_t seed)
{
  const Grid lr(l), hr(4 * l);
  const ForcingParams theta = sample_forcing(seed);
  return Datum{solve(assemble_stiffness(lr), assemble_load(lr, theta)), build_prior(hr, theta, 1e-2), seed};
}

TrainConfig tiny_config(const std::filesystem::path &out = {})
{
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.samples_per_datum = 2;
  c.chain_steps = 20;
  c.seed = 13;
  c.out_dir = out;
  return c;
}

std::filesystem::path tiny_corpus(int n = 8, int l = 8, std::uint64_t seed = 3)
{
  const auto dir = testutil::scratch_dir("corpus");
  generate(n, l, seed, false, dir);
  return dir / "manifest.jsonl";
}

bool bit_equal(const std::vector<double> &a, const std::vector<double> &b)
{
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Optimizer, NamesRoundTrip)
{
  EXPECT_EQ(parse_optimizer("sgd"), Optimizer::kSgd);
  EXPECT_EQ(parse_optimizer(to_string(Optimizer::kAdam)), Optimizer::kAdam);
  EXPECT_THROW(parse_optimizer("rmsprop"), ConfigError);
}

TEST(TrainConfig, Validation)
{
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig();
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig();
  c.samples_per_datum = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig();
  c.samples_per_datum = 150;  // more than the 100 post-burn-in steps
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainConfig, DefaultChainRetainsLastSamples)
{
  const LangevinConfig c = TrainConfig().chain_config(0.1);
  EXPECT_EQ(c.steps, 200);
  EXPECT_EQ(c.burn_in, 100);
  EXPECT_EQ(c.thin, 10);
  EXPECT_EQ(c.retained_count(), 10);
}

TEST(McGradient, ZeroResidualGivesZeroGradient)
{
  const NetParams net = init_params(4);  // residual branch output is exactly zero
  const Grid hr(32), lr(8);
  const Field u = testutil::random_field(hr, 1);
  Datum d{resample_field(u, lr), build_prior(hr, {1, 1, 1, 0}, 1e-2), 0};
  const std::vector<Datum> batch{d};
  const McGradient g = mc_gradient(net, batch, 1e-2, [&](const Datum &, std::size_t) {
    return std::vector<Field>{u, u, u};
  });
  for (double v : g.gradient)
  {
    EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(g.mean_log_likelihood, 0.0);
}

TEST(McGradient, SingleSampleIsOneLikelihoodGradient)
{
  const NetParams net = testutil::random_net(4, 2);
  const Datum d = make_datum(8, 5);
  const Field u = testutil::random_field(d.prior.grid(), 6, 0.5);
  const std::vector<Datum> batch{d};
  const McGradient g =
      mc_gradient(net, batch, 1e-2, [&](const Datum &, std::size_t) { return std::vector<Field>{u}; });
  EXPECT_EQ(g.gradient, grad_loglik_wrt_params(net, u, d.lr, 1e-2));
  EXPECT_DOUBLE_EQ(g.mean_log_likelihood, log_likelihood(net, u, d.lr, 1e-2));
}

TEST(McGradient, DuplicatedDatumMatchesSingle)
{
  const NetParams net = testutil::random_net(4, 3);
  const Datum d = make_datum(8, 9);
  const LangevinConfig chain = TrainConfig().chain_config(default_step_size(d.prior, 1e-2));
  const std::vector<Datum> one{d}, two{d, d};
  const McGradient a = mc_gradient(net, one, chain, 10, 1e-2);
  const McGradient b = mc_gradient(net, two, chain, 10, 1e-2);
  ASSERT_EQ(a.gradient.size(), b.gradient.size());
  for (std::size_t k = 0; k < a.gradient.size(); ++k)
  {
    EXPECT_NEAR(a.gradient[k], b.gradient[k], 1e-12 * std::max(1.0, std::abs(a.gradient[k])));
  }
}

TEST(McGradient, LangevinSamplerIsDeterministic)
{
  const NetParams net = testutil::random_net(4, 8);
  const Datum d = make_datum(8, 2);
  LangevinConfig chain = TrainConfig().chain_config(default_step_size(d.prior, 1e-2));
  const std::vector<Datum> batch{d, make_datum(8, 3)};
  EXPECT_TRUE(bit_equal(mc_gradient(net, batch, chain, 10, 1e-2).gradient,
                        mc_gradient(net, batch, chain, 10, 1e-2).gradient));
}

TEST(McGradient, Errors)
{
  const NetParams net = init_params(0);
  const std::vector<Datum> empty;
  EXPECT_THROW(mc_gradient(net, empty, 1e-2, [](const Datum &, std::size_t) { return std::vector<Field>{}; }),
               ConfigError);
  const std::vector<Datum> batch{make_datum(8, 1), make_datum(8, 2)};
  LangevinConfig chain = TrainConfig().chain_config(1e3);  // far above the stability limit
  try
  {
    mc_gradient(net, batch, chain, 10, 1e-2);
    FAIL() << "expected a divergence";
  }
  catch (const Error &e)
  {
    EXPECT_NE(std::string(e.what()).find("batch element 0"), std::string::npos) << e.what();
  }
}

TEST(McGradient, ExactPosteriorSamplesFollowTheMarginalGradient)
{
  const testutil::FisherFixture fx(2);
  const McGradient g = mc_gradient(fx.net, fx.batch, fx.epsilon,
                                   [&](const Datum &, std::size_t i) { return fx.exact_samples(i, 256, 1); });
  const double cos = testutil::cosine(fx.restrict(g.gradient), fx.closed_form_gradient());
  EXPECT_GT(cos, 0.9);
  RecordProperty("cosine", std::to_string(cos));
}

TEST(TrainState, RoundTrip)
{
  TrainState s;
  s.next_epoch = 3;
  s.params = testutil::random_net(4, 1);
  s.adam_step = 17;
  s.adam_m = testutil::random_vector(s.params.values.size(), 2);
  s.adam_v = testutil::random_vector(s.params.values.size(), 3);
  const auto dir = testutil::scratch_dir("s");
  save_train_state(s, dir / "x.state");
  const TrainState t = load_train_state(dir / "x.state");
  EXPECT_EQ(t.next_epoch, 3);
  EXPECT_EQ(t.adam_step, 17);
  EXPECT_TRUE(bit_equal(t.params.values, s.params.values));
  EXPECT_TRUE(bit_equal(t.adam_m, s.adam_m));
  EXPECT_TRUE(bit_equal(t.adam_v, s.adam_v));

  auto bytes = read_file_bytes(dir / "x.state");
  bytes.pop_back();
  write_file_bytes(dir / "y.state", bytes);
  EXPECT_THROW(load_train_state(dir / "y.state"), LengthMismatchError);
  bytes[0] = 'X';
  write_file_bytes(dir / "z.state", bytes);
  EXPECT_THROW(load_train_state(dir / "z.state"), FormatError);
}

TEST(Train, TinyCorpusSmoke)
{
  const Dataset ds = Dataset::load(tiny_corpus());
  const auto out = testutil::scratch_dir("out");
  TrainConfig c = tiny_config(out);
  c.epochs = 1;
  const TrainResult r = train(ds, c);
  ASSERT_EQ(r.report.epochs.size(), 1u);
  EXPECT_EQ(r.report.epochs[0].epoch, 0);
  for (double v : r.params.values)
  {
    ASSERT_TRUE(std::isfinite(v));
  }
  EXPECT_NE(r.params.values, init_params(c.seed).values);
  EXPECT_EQ(r.report.checkpoint, out / "model.psrn");
  EXPECT_TRUE(bit_equal(load_checkpoint(out / "model.psrn").values, r.params.values));
  EXPECT_TRUE(std::filesystem::exists(out / "model.state"));
  EXPECT_TRUE(std::filesystem::exists(out / "model.json"));
  std::ifstream log(out / "train_log.csv");
  std::string header, row, extra;
  std::getline(log, header);
  std::getline(log, row);
  EXPECT_EQ(header, "epoch,mean_neg_resid,grad_norm,seconds");
  EXPECT_EQ(row.rfind("0,", 0), 0u);
  EXPECT_FALSE(std::getline(log, extra));
}

TEST(Train, RejectsBatchLargerThanTrainSplit)
{
  const Dataset ds = Dataset::load(tiny_corpus());
  TrainConfig c = tiny_config();
  c.batch_size = 7;  // 8 samples, 2 held out
  EXPECT_THROW(train(ds, c), ConfigError);
}

TEST(Train, IsDeterministic)
{
  const Dataset ds = Dataset::load(tiny_corpus());
  for (Optimizer opt : {Optimizer::kAdam, Optimizer::kSgd})
  {
    TrainConfig c = tiny_config();
    c.optimizer = opt;
    c.learning_rate = opt == Optimizer::kSgd ? 1e-9 : 1e-3;
    EXPECT_TRUE(bit_equal(train(ds, c).params.values, train(ds, c).params.values)) << to_string(opt);
  }
}

TEST(Train, ResumeIsBitExact)
{
  const Dataset ds = Dataset::load(tiny_corpus());
  const auto out = testutil::scratch_dir("out");
  TrainConfig c = tiny_config(out);
  c.epochs = 3;
  c.checkpoint_every = 1;
  const TrainResult full = train(ds, c);
  EXPECT_TRUE(std::filesystem::exists(out / "checkpoint_epoch1.state"));
  EXPECT_TRUE(std::filesystem::exists(out / "checkpoint_epoch2.psrn"));
  EXPECT_FALSE(std::filesystem::exists(out / "checkpoint_epoch3.psrn"));

  const TrainState mid = load_train_state(out / "checkpoint_epoch1.state");
  EXPECT_EQ(mid.next_epoch, 1);
  TrainConfig c2 = c;
  c2.out_dir.clear();
  const TrainResult resumed = train(ds, c2, &mid);
  ASSERT_EQ(resumed.report.epochs.size(), 2u);
  EXPECT_EQ(resumed.report.epochs.front().epoch, 1);
  EXPECT_TRUE(bit_equal(resumed.params.values, full.params.values));
  EXPECT_TRUE(bit_equal(resumed.state.adam_m, full.state.adam_m));
}

TEST(Train, ResidualDoesNotGrowOverTwentyEpochs)
{
  const Dataset ds = Dataset::load(tiny_corpus(12, 16, 8));
  TrainConfig c;
  c.epochs = 20;
  c.batch_size = 5;
  c.seed = 2;
  const TrainResult r = train(ds, c);
  ASSERT_EQ(r.report.epochs.size(), 20u);
  EXPECT_GE(r.report.epochs.back().mean_log_likelihood, r.report.epochs.front().mean_log_likelihood);
}

TEST(McGradient, UnconditionedSamplesMissTheMarginalGradient)
{
  // Negative control for the fixture above: draws centred on the prior mean
  // ignore the observation and point elsewhere.
  const testutil::FisherFixture fx(2);
  const McGradient g = mc_gradient(fx.net, fx.batch, fx.epsilon, [&](const Datum &d, std::size_t) {
    return std::vector<Field>{prior_mean(d.prior, 1e-12)};
  });
  const double cos = testutil::cosine(fx.restrict(g.gradient), fx.closed_form_gradient());
  RecordProperty("cosine", std::to_string(cos));
  EXPECT_LT(cos, 0.9);
}
