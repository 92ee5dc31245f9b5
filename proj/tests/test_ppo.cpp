#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "imdesign/catalog.hpp"
#include "imdesign/evaluation.hpp"
#include "imdesign/ppo.hpp"

using namespace imdesign;
using namespace imdesign::ppo;

namespace {

const std::vector<BaseMachine>& machines() {
  static const auto ms = catalog::builtin_catalog();
  return ms;
}

const std::vector<MachineVariant>& train_set() {
  static const auto vs = catalog::select(catalog::standard_split(machines(), 2023), false);
  return vs;
}

Hyperparams small_hyper() {
  Hyperparams hp;
  hp.horizon = 64;
  hp.env_count = 2;
  hp.minibatch = 32;
  hp.epochs = 2;
  hp.hidden = 16;
  hp.total_steps = 128;
  hp.seed = 5;
  return hp;
}

// Explicit sum_k (gamma lambda)^k delta_{t+k}, stopping after a terminal step.
std::vector<double> brute_force_gae(const std::vector<double>& r, const std::vector<double>& v,
                                    const std::vector<bool>& done, double bootstrap, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : bootstrap;
    delta[t] = r[t] + gamma * (done[t] ? 0.0 : next) - v[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      adv[t] += weight * delta[k];
      if (done[k]) break;
      weight *= gamma * lambda;
    }
  }
  return adv;
}

AdvantageEstimate run_gae(const std::vector<double>& r, const std::vector<double>& v, const std::vector<bool>& d,
                          double bootstrap, double gamma, double lambda) {
  std::unique_ptr<bool[]> flags(new bool[d.size()]);
  for (std::size_t i = 0; i < d.size(); ++i) flags[i] = d[i];
  return gae(r, v, std::span<const bool>(flags.get(), d.size()), bootstrap, gamma, lambda);
}

}  // namespace

TEST(Hyperparams, Defaults) {
  const Hyperparams hp;
  EXPECT_EQ(hp.gamma, 0.99);
  EXPECT_EQ(hp.gae_lambda, 0.95);
  EXPECT_EQ(hp.clip_ratio, 0.2);
  EXPECT_EQ(hp.learning_rate, 3e-4);
  EXPECT_EQ(hp.epochs, 4);
  EXPECT_EQ(hp.minibatch, 64);
  EXPECT_EQ(hp.horizon, 1024);
  EXPECT_EQ(hp.env_count, 8);
  EXPECT_EQ(hp.value_coef, 0.5);
  EXPECT_EQ(hp.entropy_coef, 0.01);
  EXPECT_EQ(hp.total_steps, 400000);
  EXPECT_EQ(hp.max_grad_norm, 0.5);
  EXPECT_NO_THROW(hp.validate());
  Hyperparams bad = hp;
  bad.gamma = 0.0;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = hp;
  bad.minibatch = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Gae, GammaZeroIsOneStep) {
  const auto est = run_gae({1.0, -2.0, 3.0}, {0.5, 0.25, 1.0}, {false, false, false}, 9.0, 0.0, 0.7);
  EXPECT_EQ(est.advantages, (std::vector<double>{0.5, -2.25, 2.0}));
}

TEST(Gae, HandDerivedTwoSteps) {
  const auto est = run_gae({1.0, 1.0}, {0.5, 0.5}, {false, true}, 123.0, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(est.advantages[0], 1.5);
  EXPECT_DOUBLE_EQ(est.advantages[1], 0.5);
  EXPECT_DOUBLE_EQ(est.returns[0], 2.0);
  EXPECT_DOUBLE_EQ(est.returns[1], 1.0);
}

TEST(Gae, BootstrapMaskedOnTerminal) {
  const auto a = run_gae({1.0}, {0.0}, {true}, 50.0, 0.9, 0.9);
  const auto b = run_gae({1.0}, {0.0}, {true}, -50.0, 0.9, 0.9);
  EXPECT_EQ(a.advantages, b.advantages);
  const auto c = run_gae({1.0}, {0.0}, {false}, 10.0, 0.5, 0.9);
  EXPECT_DOUBLE_EQ(c.advantages[0], 6.0);
}

TEST(Gae, MatchesBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.uniform_int(1, 6);
    std::vector<double> r(n), v(n);
    std::vector<bool> d(n);
    for (int i = 0; i < n; ++i) {
      r[i] = rng.uniform(-5, 5);
      v[i] = rng.uniform(-5, 5);
      d[i] = rng.uniform() < 0.3;
    }
    const double boot = rng.uniform(-5, 5), gamma = rng.uniform(0.5, 1.0), lambda = rng.uniform();
    const auto est = run_gae(r, v, d, boot, gamma, lambda);
    const auto ref = brute_force_gae(r, v, d, boot, gamma, lambda);
    for (int i = 0; i < n; ++i) {
      EXPECT_NEAR(est.advantages[i], ref[i], 1e-10);
      EXPECT_NEAR(est.returns[i], ref[i] + v[i], 1e-10);
    }
  }
}

TEST(Gae, LengthMismatchThrows) {
  EXPECT_THROW(run_gae({1.0, 2.0}, {0.0}, {false, false}, 0.0, 0.9, 0.9), ContractViolation);
}

TEST(ClippedSurrogate, HandCases) {
  const double adv = 1.7;
  const auto identity = clipped_surrogate(1.0, adv, 0.2);
  EXPECT_NEAR(identity.objective, adv, 1e-12);
  EXPECT_FALSE(identity.clipped);

  const auto high = clipped_surrogate(2.0, adv, 0.2);
  EXPECT_NEAR(high.objective, 1.2 * adv, 1e-12);
  EXPECT_TRUE(high.clipped);
  EXPECT_EQ(high.d_ratio, 0.0);

  // Negative advantage below the band: 0.8*A is the smaller term, so the clip binds.
  const auto low = clipped_surrogate(0.5, -adv, 0.2);
  EXPECT_NEAR(low.objective, 0.8 * -adv, 1e-12);
  EXPECT_TRUE(low.clipped);
  EXPECT_EQ(low.d_ratio, 0.0);

  // Negative advantage above the band: the unclipped term is the worse one.
  const auto worse = clipped_surrogate(1.5, -adv, 0.2);
  EXPECT_NEAR(worse.objective, 1.5 * -adv, 1e-12);
  EXPECT_FALSE(worse.clipped);
  EXPECT_EQ(worse.d_ratio, -adv);
}

TEST(ClippedSurrogate, MinProperty) {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double ratio = rng.uniform(0.0, 3.0), adv = rng.uniform(-4, 4), eps = rng.uniform(0.05, 0.5);
    const auto t = clipped_surrogate(ratio, adv, eps);
    EXPECT_LE(t.objective, ratio * adv + 1e-15);
    if (adv > 0) {
      EXPECT_LE(t.objective, (1 + eps) * adv + 1e-15);
    }
  }
}

TEST(NormalizeAdvantages, ZeroMeanUnitVariance) {
  Rng rng(4);
  std::vector<double> a(257);
  for (double& x : a) x = rng.uniform(-30, 80);
  const auto n = normalize_advantages(a);
  double mean = 0.0, var = 0.0;
  for (double x : n) mean += x;
  mean /= static_cast<double>(n.size());
  for (double x : n) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n.size());
  EXPECT_LT(std::abs(mean), 1e-9);
  EXPECT_NEAR(var, 1.0, 1e-6);
  const auto single = normalize_advantages(std::vector<double>{4.0});
  EXPECT_EQ(single[0], 0.0);
}

TEST(CollectRollout, SizesAndDeterminism) {
  const Hyperparams hp = small_hyper();
  const Learner learner = Learner::create(hp.hidden, hp.learning_rate, 1);
  auto collect = [&](int horizon, int envs_n, std::uint64_t seed) {
    EnvPool envs(machines(), train_set(), envs_n, RewardConfig{});
    Rng rng(seed);
    return collect_rollout(envs, learner.actor, learner.critic, horizon, rng);
  };
  EXPECT_EQ(collect(1, 1, 1).transitions.size(), 1u);
  const auto a = collect(50, 3, 2);
  const auto b = collect(50, 3, 2);
  ASSERT_EQ(a.transitions.size(), 150u);
  ASSERT_EQ(a.bootstrap.size(), 3u);
  for (std::size_t i = 0; i < a.transitions.size(); ++i) {
    EXPECT_EQ(a.transitions[i].action, b.transitions[i].action);
    EXPECT_EQ(a.transitions[i].reward, b.transitions[i].reward);
    EXPECT_EQ(a.transitions[i].log_prob, b.transitions[i].log_prob);
  }
  EXPECT_EQ(a.bootstrap, b.bootstrap);
}

TEST(CollectRollout, RewardsAndLogProbsAreConsistent) {
  const Hyperparams hp = small_hyper();
  const Learner learner = Learner::create(hp.hidden, hp.learning_rate, 2);
  EnvPool envs(machines(), train_set(), 4, RewardConfig{});
  Rng rng(8);
  const RolloutBuffer buf = collect_rollout(envs, learner.actor, learner.critic, 300, rng);
  const RewardConfig cfg;
  nn::Cache cache;
  for (std::size_t i = 0; i < buf.transitions.size(); ++i) {
    const auto& tr = buf.transitions[i];
    const auto& info = buf.infos[i];
    EXPECT_LE(tr.log_prob, 0.0);
    const double rederived = info.shaping + (info.revisit ? cfg.w_v : 0.0) +
                             (info.cause == EpisodeCause::Win ? cfg.w_win : 0.0);
    EXPECT_EQ(tr.reward, rederived);
    nn::forward(learner.actor, tr.observation, cache);
    EXPECT_NEAR(nn::Categorical(cache.output()).log_prob(static_cast<std::size_t>(tr.action)), tr.log_prob, 1e-12);
  }
  EXPECT_FALSE(buf.finished.empty());
}

TEST(EnvPool, RoundRobinOverVariants) {
  std::vector<MachineVariant> two(train_set().begin(), train_set().begin() + 2);
  EnvPool envs(machines(), two, 3, RewardConfig{});
  EXPECT_EQ(envs.game(0).variant(), two[0]);
  EXPECT_EQ(envs.game(1).variant(), two[1]);
  EXPECT_EQ(envs.game(2).variant(), two[0]);
}

TEST(PpoUpdate, IdentityRatioGivesZeroPolicyLoss) {
  Hyperparams hp = small_hyper();
  Learner learner = Learner::create(hp.hidden, hp.learning_rate, 3);
  EnvPool envs(machines(), train_set(), 2, RewardConfig{});
  Rng rng(1);
  RolloutBuffer buf = collect_rollout(envs, learner.actor, learner.critic, 40, rng);
  compute_advantages(buf, hp.gamma, hp.gae_lambda);
  hp.epochs = 1;
  hp.minibatch = static_cast<int>(buf.transitions.size());
  const UpdateStats st = ppo_update(learner, buf, hp, rng);
  EXPECT_NEAR(st.policy_loss, 0.0, 1e-12);
  EXPECT_EQ(st.clip_fraction, 0.0);
  EXPECT_GT(st.value_loss, 0.0);
}

TEST(PpoUpdate, RequiresAdvantages) {
  const Hyperparams hp = small_hyper();
  Learner learner = Learner::create(hp.hidden, hp.learning_rate, 3);
  EnvPool envs(machines(), train_set(), 1, RewardConfig{});
  Rng rng(1);
  const RolloutBuffer buf = collect_rollout(envs, learner.actor, learner.critic, 8, rng);
  EXPECT_THROW(ppo_update(learner, buf, hp, rng), ContractViolation);
}

TEST(PpoUpdate, NonFiniteRewardDiverges) {
  const Hyperparams hp = small_hyper();
  Learner learner = Learner::create(hp.hidden, hp.learning_rate, 3);
  EnvPool envs(machines(), train_set(), 1, RewardConfig{});
  Rng rng(1);
  RolloutBuffer buf = collect_rollout(envs, learner.actor, learner.critic, 8, rng);
  buf.transitions[3].reward = std::numeric_limits<double>::infinity();
  compute_advantages(buf, hp.gamma, hp.gae_lambda);
  EXPECT_THROW(ppo_update(learner, buf, hp, rng, 7), TrainingDiverged);
}

TEST(Train, OneUpdateAccounting) {
  const Hyperparams hp = small_hyper();
  const auto res = train(machines(), train_set(), hp, RewardConfig{});
  EXPECT_EQ(res.report.rows.size(), 1u);
  EXPECT_EQ(res.checkpoint.updates, 1);
  EXPECT_EQ(res.checkpoint.env_steps, 128);
}

TEST(Train, DeterministicCheckpoints) {
  Hyperparams hp = small_hyper();
  hp.total_steps = 384;
  const auto a = train(machines(), train_set(), hp, RewardConfig{});
  const auto b = train(machines(), train_set(), hp, RewardConfig{});
  std::stringstream sa, sb;
  write_checkpoint(sa, a.checkpoint);
  write_checkpoint(sb, b.checkpoint);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.report.rows.size(), 3u);
  for (const auto& row : a.report.rows) {
    EXPECT_GE(row.win_rate, 0.0);
    EXPECT_LE(row.win_rate, 1.0);
    EXPECT_LE(row.mean_steps_to_win, 300.0);
  }
}

TEST(Train, ResumeContinuesNumbering) {
  const Hyperparams hp = small_hyper();
  const auto first = train(machines(), train_set(), hp, RewardConfig{});
  const auto second = train(machines(), train_set(), hp, RewardConfig{}, first.checkpoint);
  ASSERT_EQ(second.report.rows.size(), 1u);
  EXPECT_EQ(second.report.rows[0].update, 2);
  EXPECT_EQ(second.checkpoint.updates, 2);
  EXPECT_EQ(second.checkpoint.env_steps, 256);
}

TEST(Checkpoint, RoundTripBitExact) {
  Hyperparams hp = small_hyper();
  const auto res = train(machines(), train_set(), hp, RewardConfig{});
  std::stringstream ss;
  write_checkpoint(ss, res.checkpoint);
  const Checkpoint back = read_checkpoint(ss);
  EXPECT_EQ(back.learner.actor, res.checkpoint.learner.actor);
  EXPECT_EQ(back.learner.critic, res.checkpoint.learner.critic);
  EXPECT_EQ(back.learner.actor_opt.m.layers, res.checkpoint.learner.actor_opt.m.layers);
  EXPECT_EQ(back.learner.critic_opt.v.layers, res.checkpoint.learner.critic_opt.v.layers);
  EXPECT_EQ(back.learner.actor_opt.step, res.checkpoint.learner.actor_opt.step);
  EXPECT_EQ(back.updates, 1);
  EXPECT_EQ(back.seed, hp.seed);
}

TEST(Checkpoint, VersionMismatchAndTruncation) {
  std::stringstream v2("motor-design-ckpt v2\n");
  EXPECT_THROW(read_checkpoint(v2), VersionMismatch);
  std::stringstream truncated("motor-design-ckpt v1\n[training]\nupdates = 1\nenv_steps = 2\nseed = 3\n");
  EXPECT_THROW(read_checkpoint(truncated), MalformedFile);
}

TEST(Evaluate, GreedyIsDeterministic) {
  const Hyperparams hp = small_hyper();
  const auto res = train(machines(), train_set(), hp, RewardConfig{});
  const auto held = catalog::select(catalog::standard_split(machines(), 2023), true);
  const auto a = eval::evaluate(res.checkpoint, machines(), held, 2, eval::PolicyMode::Greedy, RewardConfig{}, 1);
  const auto b = eval::evaluate(res.checkpoint, machines(), held, 2, eval::PolicyMode::Greedy, RewardConfig{}, 2);
  ASSERT_EQ(a.episodes.size(), 30u);
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].steps, b.episodes[i].steps);
    EXPECT_EQ(a.episodes[i].win, b.episodes[i].win);
  }
  const auto s1 = eval::evaluate(res.checkpoint, machines(), held, 2, eval::PolicyMode::Stochastic, RewardConfig{}, 4);
  const auto s2 = eval::evaluate(res.checkpoint, machines(), held, 2, eval::PolicyMode::Stochastic, RewardConfig{}, 4);
  for (std::size_t i = 0; i < s1.episodes.size(); ++i) EXPECT_EQ(s1.episodes[i].steps, s2.episodes[i].steps);
}

TEST(Evaluate, FeasibleStartTakesOneStep) {
  const BaseMachine& m = machines()[0];
  MachineVariant v;
  v.base_id = m.id;
  v.initial_design = m.base_design;
  v.bands = {Band{0.9, 1.1}, Band{0.9, 1.1}, Band{0.9, 1.1}, Band{0.9, 1.1}, Band{1.2, 4.4}};
  v.feasible_exists = true;
  const std::vector<MachineVariant> one{v};
  const auto orc = eval::evaluate_oracle(machines(), one, 1);
  EXPECT_EQ(orc.episodes[0].steps, 0);
  const auto res = train(machines(), train_set(), small_hyper(), RewardConfig{});
  const auto rep = eval::evaluate(res.checkpoint, machines(), one, 3, eval::PolicyMode::Stochastic, RewardConfig{}, 1);
  for (const auto& e : rep.episodes) {
    EXPECT_LE(e.steps, 1);
    EXPECT_TRUE(e.win);
  }
}

TEST(Evaluate, ReportShape) {
  const auto held = catalog::select(catalog::standard_split(machines(), 2023), true);
  const auto rep = eval::run_policy(machines(), held, 3, eval::greedy_policy(), RewardConfig{}, 1);
  EXPECT_EQ(rep.machines.size(), 3u);
  EXPECT_EQ(rep.episodes.size(), 45u);
  std::ostringstream table, series;
  eval::print_table(table, rep, "greedy");
  eval::write_episode_series(series, rep);
  EXPECT_NE(table.str().find("2500"), std::string::npos);
  EXPECT_NE(table.str().find("published_steps"), std::string::npos);
  int lines = 0;
  for (char c : series.str()) lines += c == '\n';
  EXPECT_EQ(lines, 46);
}
