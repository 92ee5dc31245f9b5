#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "imdesign/catalog.hpp"
#include "imdesign/env.hpp"
#include "imdesign/neural.hpp"
#include "imdesign/rng.hpp"

namespace imdesign::ppo {

struct Hyperparams {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double learning_rate = 3e-4;
  int epochs = 4;
  int minibatch = 64;
  int horizon = 1024;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  long long total_steps = 400000;
  int env_count = 8;
  std::uint64_t seed = 1;
  double max_grad_norm = 0.5;
  int hidden = 64;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("gamma must be in (0, 1]");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ValidationError("gae_lambda must be in [0, 1]");
    if (!(clip_ratio > 0.0)) throw ValidationError("clip_ratio must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (!(max_grad_norm > 0.0)) throw ValidationError("max_grad_norm must be positive");
    if (!(value_coef >= 0.0) || !(entropy_coef >= 0.0)) throw ValidationError("loss coefficients must be >= 0");
    if (epochs < 1 || minibatch < 1 || horizon < 1 || env_count < 1 || total_steps < 1 || hidden < 1)
      throw ValidationError("epochs, minibatch, horizon, env_count, total_steps and hidden must be >= 1");
  }

  long long steps_per_update() const { return static_cast<long long>(horizon) * env_count; }
};

struct Transition {
  Observation observation{};
  int action = 0;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
  EpisodeCause cause = EpisodeCause::Running;
};

struct EpisodeSummary {
  int base_id = 0;
  int variant_index = 0;
  int steps = 0;
  bool win = false;
  double total_reward = 0.0;
};

/// Rollout storage, time-major: entry t * env_count + e is env e at time t.
struct RolloutBuffer {
  int horizon = 0;
  int env_count = 0;
  std::vector<Transition> transitions;
  std::vector<StepInfo> infos;   // parallel to transitions
  std::vector<double> bootstrap;  // V(s_T) per env; unused when the last transition ended an episode
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<EpisodeSummary> finished;

  const Transition& at(int t, int e) const { return transitions[static_cast<std::size_t>(t) * env_count + e]; }
};

inline std::vector<int> actor_sizes(int hidden) { return {static_cast<int>(kObservationSize), hidden, hidden,
                                                          static_cast<int>(kActionCount)}; }
inline std::vector<int> critic_sizes(int hidden) { return {static_cast<int>(kObservationSize), hidden, hidden, 1}; }

/// Independent design games that restart on the training variants in round-robin order.
class EnvPool {
 public:
  EnvPool(std::vector<BaseMachine> machines, std::vector<MachineVariant> variants, int env_count,
          const RewardConfig& reward)
      : machines_(std::move(machines)), variants_(std::move(variants)) {
    if (variants_.empty()) throw ContractViolation("EnvPool needs at least one variant");
    if (env_count < 1) throw ContractViolation("EnvPool needs at least one env");
    catalog::check_against(variants_, machines_);
    games_.reserve(static_cast<std::size_t>(env_count));
    for (int e = 0; e < env_count; ++e) {
      games_.emplace_back(reward);
      observations_.push_back(restart(games_.back()));
      episode_rewards_.push_back(0.0);
    }
  }

  int size() const { return static_cast<int>(games_.size()); }
  DesignGame& game(int e) { return games_[static_cast<std::size_t>(e)]; }
  const Observation& observation(int e) const { return observations_[static_cast<std::size_t>(e)]; }

  /// Steps env e; on episode end records a summary and restarts on the next variant.
  StepResult step(int e, Action a, std::vector<EpisodeSummary>* finished) {
    auto& g = games_[static_cast<std::size_t>(e)];
    StepResult r = g.step(a);
    episode_rewards_[static_cast<std::size_t>(e)] += r.reward;
    if (r.done) {
      if (finished)
        finished->push_back(EpisodeSummary{g.variant().base_id, g.variant().index, r.info.step,
                                           r.info.cause == EpisodeCause::Win,
                                           episode_rewards_[static_cast<std::size_t>(e)]});
      episode_rewards_[static_cast<std::size_t>(e)] = 0.0;
      observations_[static_cast<std::size_t>(e)] = restart(g);
    } else {
      observations_[static_cast<std::size_t>(e)] = r.observation;
    }
    return r;
  }

 private:
  Observation restart(DesignGame& g) {
    const MachineVariant& v = variants_[next_variant_];
    next_variant_ = (next_variant_ + 1) % variants_.size();
    return g.reset(v, catalog::find_machine(machines_, v.base_id));
  }

  std::vector<BaseMachine> machines_;
  std::vector<MachineVariant> variants_;
  std::vector<DesignGame> games_;
  std::vector<Observation> observations_;
  std::vector<double> episode_rewards_;
  std::size_t next_variant_ = 0;
};

inline double value_of(const nn::Mlp& critic, const Observation& obs, nn::Cache& cache) {
  nn::forward(critic, obs, cache);
  return cache.output()[0];
}

/// Runs every env for `horizon` steps with the current actor. Envs are stepped in index order.
inline RolloutBuffer collect_rollout(EnvPool& envs, const nn::Mlp& actor, const nn::Mlp& critic, int horizon,
                                     Rng& rng) {
  if (horizon < 1) throw ContractViolation("collect_rollout: horizon must be >= 1");
  RolloutBuffer buf;
  buf.horizon = horizon;
  buf.env_count = envs.size();
  buf.transitions.reserve(static_cast<std::size_t>(horizon) * envs.size());
  buf.infos.reserve(buf.transitions.capacity());
  nn::Cache ac, cc;
  for (int t = 0; t < horizon; ++t) {
    for (int e = 0; e < envs.size(); ++e) {
      Transition tr;
      tr.observation = envs.observation(e);
      nn::forward(actor, tr.observation, ac);
      const nn::Categorical dist(ac.output());
      tr.action = static_cast<int>(dist.sample(rng));
      tr.log_prob = dist.log_prob(static_cast<std::size_t>(tr.action));
      tr.value = value_of(critic, tr.observation, cc);
      const StepResult r = envs.step(e, action_from_index(static_cast<std::size_t>(tr.action)), &buf.finished);
      tr.reward = r.reward;
      tr.done = r.done;
      tr.cause = r.info.cause;
      buf.transitions.push_back(tr);
      buf.infos.push_back(r.info);
    }
  }
  buf.bootstrap.resize(static_cast<std::size_t>(envs.size()));
  for (int e = 0; e < envs.size(); ++e)
    buf.bootstrap[static_cast<std::size_t>(e)] = value_of(critic, envs.observation(e), cc);
  return buf;
}

struct AdvantageEstimate {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Generalized advantage estimation over one trajectory segment.
/// `bootstrap` is V of the state after the last step; it is masked when that step ended an episode.
inline AdvantageEstimate gae(std::span<const double> rewards, std::span<const double> values,
                             std::span<const bool> dones, double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ContractViolation("gae: sequence lengths differ");
  AdvantageEstimate out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap;
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    out.advantages[t] = delta + gamma * lambda * live * next_adv;
    out.returns[t] = out.advantages[t] + values[t];
    next_value = values[t];
    next_adv = out.advantages[t];
  }
  return out;
}

/// Fills buf.advantages / buf.returns env by env.
inline void compute_advantages(RolloutBuffer& buf, double gamma, double lambda) {
  const std::size_t total = buf.transitions.size();
  buf.advantages.assign(total, 0.0);
  buf.returns.assign(total, 0.0);
  std::vector<double> r(static_cast<std::size_t>(buf.horizon)), v(r.size());
  // std::vector<bool> is not contiguous, so dones live in a plain array.
  const auto d = std::make_unique<bool[]>(r.size());
  for (int e = 0; e < buf.env_count; ++e) {
    for (int t = 0; t < buf.horizon; ++t) {
      const auto& tr = buf.at(t, e);
      r[static_cast<std::size_t>(t)] = tr.reward;
      v[static_cast<std::size_t>(t)] = tr.value;
      d[static_cast<std::size_t>(t)] = tr.done;
    }
    const auto est = gae(r, v, std::span<const bool>(d.get(), r.size()),
                         buf.bootstrap[static_cast<std::size_t>(e)], gamma, lambda);
    for (int t = 0; t < buf.horizon; ++t) {
      const std::size_t i = static_cast<std::size_t>(t) * buf.env_count + e;
      buf.advantages[i] = est.advantages[static_cast<std::size_t>(t)];
      buf.returns[i] = est.returns[static_cast<std::size_t>(t)];
    }
  }
}

/// Zero mean, unit variance (population), guarded by eps.
inline std::vector<double> normalize_advantages(std::span<const double> adv, double eps = 1e-8) {
  std::vector<double> out(adv.begin(), adv.end());
  if (out.empty()) return out;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  double var = 0.0;
  for (double a : out) var += (a - mean) * (a - mean);
  var /= static_cast<double>(out.size());
  const double sd = std::sqrt(var);
  for (double& a : out) a = (a - mean) / (sd + eps);
  return out;
}

/// Per-sample clipped surrogate min(r A, clip(r, 1-eps, 1+eps) A) and its slope in r.
struct ClippedTerm {
  double objective = 0.0;
  double d_ratio = 0.0;  // zero when the clipped branch is active
  bool clipped = false;
};

inline ClippedTerm clipped_surrogate(double ratio, double advantage, double clip) {
  const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  const double unclipped = ratio * advantage;
  const double bounded = clipped_ratio * advantage;
  ClippedTerm t;
  if (unclipped <= bounded) {
    t.objective = unclipped;
    t.d_ratio = advantage;
  } else {
    t.objective = bounded;
    t.clipped = true;
  }
  return t;
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
};

/// Optimizer state for both networks.
struct Learner {
  nn::Mlp actor;
  nn::Mlp critic;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;

  static Learner create(int hidden, double lr, std::uint64_t seed) {
    Learner l;
    const auto as = actor_sizes(hidden);
    const auto cs = critic_sizes(hidden);
    l.actor = nn::init(as, mix_seed(seed, 0xAC7));
    l.critic = nn::init(cs, mix_seed(seed, 0xC417));
    l.actor_opt = nn::AdamState::for_network(l.actor, lr);
    l.critic_opt = nn::AdamState::for_network(l.critic, lr);
    return l;
  }
};

/// Clipped-surrogate PPO epochs over a rollout whose advantages are already computed.
inline UpdateStats ppo_update(Learner& learner, const RolloutBuffer& buf, const Hyperparams& hp, Rng& rng,
                              long long update_index = 0) {
  const std::size_t n = buf.transitions.size();
  if (n == 0) throw ContractViolation("ppo_update: empty buffer");
  if (buf.advantages.size() != n || buf.returns.size() != n)
    throw ContractViolation("ppo_update: advantages not computed");
  const std::vector<double> adv = normalize_advantages(buf.advantages);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  nn::Grads ga = nn::Grads::zeros_like(learner.actor);
  nn::Grads gc = nn::Grads::zeros_like(learner.critic);
  nn::Cache ac, cc;
  std::vector<double> logit_grad(kActionCount);
  UpdateStats stats;
  long long samples = 0, batches = 0;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hp.minibatch)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(hp.minibatch));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      ga.set_zero();
      gc.set_zero();
      double pl = 0.0, vl = 0.0, ent = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const Transition& tr = buf.transitions[i];
        const auto a = static_cast<std::size_t>(tr.action);

        nn::forward(learner.actor, tr.observation, ac);
        const nn::Categorical dist(ac.output());
        const double logp = dist.log_prob(a);
        const double ratio = std::exp(logp - tr.log_prob);
        const ClippedTerm term = clipped_surrogate(ratio, adv[i], hp.clip_ratio);
        const double h = dist.entropy();
        pl -= term.objective * inv_b;
        ent += h * inv_b;
        if (std::abs(ratio - 1.0) > hp.clip_ratio) stats.clip_fraction += 1.0;
        stats.approx_kl += tr.log_prob - logp;

        // loss = -obj/B - c_e H/B; d obj / d logp = d_ratio * ratio.
        const auto dlogp = dist.log_prob_grad(a);
        const auto dh = dist.entropy_grad();
        const double coef = -term.d_ratio * ratio * inv_b;
        for (std::size_t j = 0; j < kActionCount; ++j)
          logit_grad[j] = coef * dlogp[j] - hp.entropy_coef * inv_b * dh[j];
        nn::accumulate_backward(learner.actor, ac, logit_grad, ga);

        const double v = value_of(learner.critic, tr.observation, cc);
        const double err = v - buf.returns[i];
        vl += err * err * inv_b;
        const double dv = 2.0 * hp.value_coef * err * inv_b;
        nn::accumulate_backward(learner.critic, cc, std::span<const double>(&dv, 1), gc);
      }
      const double loss = pl + hp.value_coef * vl - hp.entropy_coef * ent;
      if (!std::isfinite(loss) || !ga.all_finite() || !gc.all_finite()) {
        std::ostringstream os;
        os << "non-finite loss at update " << update_index << ", epoch " << epoch << ", minibatch "
           << start / static_cast<std::size_t>(hp.minibatch) << " (policy " << pl << ", value " << vl
           << ", entropy " << ent << ")";
        throw TrainingDiverged(os.str());
      }
      nn::Grads* both[] = {&ga, &gc};
      stats.grad_norm += nn::clip_global_norm(both, hp.max_grad_norm);
      nn::adam_step(learner.actor, ga, learner.actor_opt);
      nn::adam_step(learner.critic, gc, learner.critic_opt);
      stats.policy_loss += pl;
      stats.value_loss += vl;
      stats.entropy += ent;
      samples += static_cast<long long>(end - start);
      ++batches;
    }
  }
  stats.policy_loss /= static_cast<double>(batches);
  stats.value_loss /= static_cast<double>(batches);
  stats.entropy /= static_cast<double>(batches);
  stats.grad_norm /= static_cast<double>(batches);
  stats.clip_fraction /= static_cast<double>(samples);
  stats.approx_kl /= static_cast<double>(samples);
  return stats;
}

// --- checkpoints ---------------------------------------------------------------

inline constexpr std::string_view kCheckpointMagic = "motor-design-ckpt";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Learner learner;
  long long updates = 0;
  long long env_steps = 0;
  std::uint64_t seed = 0;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << kCheckpointMagic << " v" << kCheckpointVersion << "\n";
  os << "[training]\nupdates = " << ck.updates << "\nenv_steps = " << ck.env_steps << "\nseed = " << ck.seed
     << "\n";
  const auto& l = ck.learner;
  os << "\n[actor]\n";
  nn::write_tensors(os, "net", l.actor.layers);
  os << "\n[critic]\n";
  nn::write_tensors(os, "net", l.critic.layers);
  auto write_opt = [&](const char* name, const nn::AdamState& s) {
    os << "\n[" << name << "]\nstep = " << s.step << "\nlr = " << text::format_double(s.lr)
       << "\nbeta1 = " << text::format_double(s.beta1) << "\nbeta2 = " << text::format_double(s.beta2)
       << "\neps = " << text::format_double(s.eps) << "\n";
    nn::write_tensors(os, "m", s.m.layers);
    nn::write_tensors(os, "v", s.v.layers);
  };
  write_opt("actor_adam", l.actor_opt);
  write_opt("critic_adam", l.critic_opt);
}

inline Checkpoint read_checkpoint(std::istream& in) {
  const text::Document doc = text::parse(in, kCheckpointMagic, kCheckpointVersion);
  auto section = [&](std::string_view name) -> const text::Section& {
    for (const auto& s : doc.sections)
      if (s.name == name) return s;
    throw MalformedFile("checkpoint is missing section [" + std::string(name) + "]", 1);
  };
  Checkpoint ck;
  const auto& tr = section("training");
  ck.updates = text::parse_int<long long>(tr.require("updates").value, tr.require("updates").line);
  ck.env_steps = text::parse_int<long long>(tr.require("env_steps").value, tr.require("env_steps").line);
  ck.seed = text::parse_int<std::uint64_t>(tr.require("seed").value, tr.require("seed").line);
  ck.learner.actor.layers = nn::read_tensors(section("actor"), "net");
  ck.learner.critic.layers = nn::read_tensors(section("critic"), "net");
  auto read_opt = [&](std::string_view name, const nn::Mlp& net) {
    const auto& s = section(name);
    nn::AdamState st;
    st.step = text::parse_int<long long>(s.require("step").value, s.require("step").line);
    st.lr = text::parse_double(s.require("lr").value, s.require("lr").line);
    st.beta1 = text::parse_double(s.require("beta1").value, s.require("beta1").line);
    st.beta2 = text::parse_double(s.require("beta2").value, s.require("beta2").line);
    st.eps = text::parse_double(s.require("eps").value, s.require("eps").line);
    st.m.layers = nn::read_tensors(s, "m");
    st.v.layers = nn::read_tensors(s, "v");
    if (!nn::congruent(net, st.m) || !nn::congruent(net, st.v))
      throw MalformedFile("optimizer state does not match its network", s.line);
    return st;
  };
  ck.learner.actor_opt = read_opt("actor_adam", ck.learner.actor);
  ck.learner.critic_opt = read_opt("critic_adam", ck.learner.critic);
  if (ck.learner.actor.input_size() != static_cast<int>(kObservationSize) ||
      ck.learner.actor.output_size() != static_cast<int>(kActionCount) ||
      ck.learner.critic.input_size() != static_cast<int>(kObservationSize) || ck.learner.critic.output_size() != 1)
    throw MalformedFile("checkpoint networks have the wrong input/output sizes", 1);
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open '" + path + "' for writing");
  write_checkpoint(os, ck);
  if (!os) throw ValidationError("failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_checkpoint(in);
}

// --- training loop ---------------------------------------------------------------

/// One metrics row per update.
struct UpdateRow {
  long long update = 0;  // 1-based, continues across resumed runs
  long long env_steps = 0;
  int episodes = 0;
  double mean_episode_reward = 0.0;
  double win_rate = 0.0;
  double mean_steps_to_win = 0.0;
  UpdateStats stats;
};

struct TrainReport {
  std::vector<UpdateRow> rows;
};

inline std::string format_update_row(const UpdateRow& r) {
  std::ostringstream os;
  os << "update=" << r.update << " env_steps=" << r.env_steps << " episodes=" << r.episodes
     << " mean_episode_reward=" << text::format_double(r.mean_episode_reward)
     << " win_rate=" << text::format_double(r.win_rate)
     << " mean_steps_to_win=" << text::format_double(r.mean_steps_to_win)
     << " policy_loss=" << text::format_double(r.stats.policy_loss)
     << " value_loss=" << text::format_double(r.stats.value_loss)
     << " entropy=" << text::format_double(r.stats.entropy)
     << " clip_fraction=" << text::format_double(r.stats.clip_fraction)
     << " approx_kl=" << text::format_double(r.stats.approx_kl);
  return os.str();
}

struct TrainResult {
  Checkpoint checkpoint;
  TrainReport report;
};

/// Collect/update cycles until `hp.total_steps` further environment steps have been taken.
/// A resumed run continues the checkpoint's update numbering and optimizer state.
inline TrainResult train(const std::vector<BaseMachine>& machines, const std::vector<MachineVariant>& variants,
                         const Hyperparams& hp, const RewardConfig& reward,
                         std::optional<Checkpoint> resume = std::nullopt,
                         const std::function<void(const UpdateRow&)>& on_update = {}) {
  hp.validate();
  reward.validate();
  if (variants.empty()) throw ContractViolation("train: no variants");
  TrainResult res;
  Checkpoint& ck = res.checkpoint;
  if (resume) {
    ck = std::move(*resume);
  } else {
    ck.learner = Learner::create(hp.hidden, hp.learning_rate, hp.seed);
    ck.seed = hp.seed;
  }
  EnvPool envs(machines, variants, hp.env_count, reward);
  const long long per_update = hp.steps_per_update();
  const long long updates = (hp.total_steps + per_update - 1) / per_update;
  for (long long u = 0; u < updates; ++u) {
    const long long index = ck.updates + 1;
    Rng rollout_rng(mix_seed(hp.seed, static_cast<std::uint64_t>(index), 1));
    Rng shuffle_rng(mix_seed(hp.seed, static_cast<std::uint64_t>(index), 2));
    RolloutBuffer buf = collect_rollout(envs, ck.learner.actor, ck.learner.critic, hp.horizon, rollout_rng);
    compute_advantages(buf, hp.gamma, hp.gae_lambda);
    UpdateRow row;
    try {
      row.stats = ppo_update(ck.learner, buf, hp, shuffle_rng, index);
    } catch (const TrainingDiverged& e) {
      throw TrainingDiverged("update " + std::to_string(index) + ": " + e.what());
    }
    ck.updates = index;
    ck.env_steps += per_update;
    row.update = index;
    row.env_steps = ck.env_steps;
    row.episodes = static_cast<int>(buf.finished.size());
    int wins = 0;
    double reward_sum = 0.0, win_steps = 0.0;
    for (const auto& ep : buf.finished) {
      reward_sum += ep.total_reward;
      if (ep.win) {
        ++wins;
        win_steps += ep.steps;
      }
    }
    if (row.episodes > 0) {
      row.mean_episode_reward = reward_sum / row.episodes;
      row.win_rate = static_cast<double>(wins) / row.episodes;
    }
    if (wins > 0) row.mean_steps_to_win = win_steps / wins;
    res.report.rows.push_back(row);
    if (on_update) on_update(row);
  }
  return res;
}

}  // namespace imdesign::ppo
