#pragma once

#include <array>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "imdesign/agents.hpp"
#include "imdesign/catalog.hpp"
#include "imdesign/env.hpp"
#include "imdesign/ppo.hpp"

namespace imdesign::eval {

/// Published mean PPO steps for machines 1..3, printed for comparison only.
inline constexpr std::array<double, 3> kPublishedSteps = {11.0, 12.0, 5.0};

inline std::optional<double> published_steps(int machine_id) {
  if (machine_id < 1 || machine_id > 3) return std::nullopt;
  return kPublishedSteps[static_cast<std::size_t>(machine_id - 1)];
}

enum class PolicyMode { Greedy, Stochastic };

struct EpisodeRow {
  int episode_index = 0;
  int base_id = 0;
  int variant_index = 0;
  int steps = 0;
  bool win = false;
};

struct MachineSummary {
  int base_id = 0;
  double rated_power_kw = 0.0;
  double line_voltage_v = 0.0;
  int episodes = 0;
  int wins = 0;
  double win_rate = 0.0;
  double mean_steps = 0.0;      // over winning episodes
  double mean_steps_all = 0.0;  // losses counted at the step cap
  std::vector<int> steps;       // per episode, in order
};

struct EvalReport {
  std::vector<MachineSummary> machines;
  std::vector<EpisodeRow> episodes;

  const MachineSummary& machine(int id) const {
    for (const auto& m : machines)
      if (m.base_id == id) return m;
    throw ContractViolation("no summary for machine " + std::to_string(id));
  }
};

/// Chooses the next action from the live game and its current observation.
using Policy = std::function<Action(const DesignGame&, const Observation&, Rng&)>;

inline EvalReport summarize(std::span<const BaseMachine> machines, std::vector<EpisodeRow> rows) {
  EvalReport rep;
  for (const auto& m : machines) {
    MachineSummary s;
    s.base_id = m.id;
    s.rated_power_kw = m.rated_power_kw;
    s.line_voltage_v = m.line_voltage_v;
    double win_sum = 0.0, all_sum = 0.0;
    for (const auto& r : rows) {
      if (r.base_id != m.id) continue;
      ++s.episodes;
      s.steps.push_back(r.steps);
      all_sum += r.steps;
      if (r.win) {
        ++s.wins;
        win_sum += r.steps;
      }
    }
    if (s.episodes == 0) continue;
    s.win_rate = static_cast<double>(s.wins) / s.episodes;
    s.mean_steps = s.wins > 0 ? win_sum / s.wins : 0.0;
    s.mean_steps_all = all_sum / s.episodes;
    rep.machines.push_back(std::move(s));
  }
  rep.episodes = std::move(rows);
  return rep;
}

/// Plays `episodes_per_variant` episodes on every variant. Episode e of a variant uses an
/// RNG seeded from (seed, machine, variant index, e).
inline EvalReport run_policy(std::span<const BaseMachine> machines, std::span<const MachineVariant> variants,
                             int episodes_per_variant, const Policy& policy, const RewardConfig& reward,
                             std::uint64_t seed) {
  if (episodes_per_variant < 1) throw ValidationError("episodes per variant must be >= 1");
  DesignGame game(reward);
  std::vector<EpisodeRow> rows;
  int episode_index = 0;
  for (const auto& v : variants) {
    const BaseMachine& m = catalog::find_machine(machines, v.base_id);
    for (int e = 0; e < episodes_per_variant; ++e) {
      Rng rng(mix_seed(seed, mix_seed(static_cast<std::uint64_t>(v.base_id), static_cast<std::uint64_t>(v.index)),
                       static_cast<std::uint64_t>(e)));
      Observation obs = game.reset(v, m);
      StepResult last;
      while (!game.done()) {
        last = game.step(policy(game, obs, rng));
        obs = last.observation;
      }
      rows.push_back(EpisodeRow{episode_index++, v.base_id, v.index, last.info.step,
                                last.info.cause == EpisodeCause::Win});
    }
  }
  return summarize(machines, std::move(rows));
}

inline Policy actor_policy(const nn::Mlp& actor, PolicyMode mode) {
  return [&actor, mode, cache = std::make_shared<nn::Cache>()](const DesignGame&, const Observation& obs,
                                                                 Rng& rng) {
    nn::forward(actor, obs, *cache);
    const nn::Categorical dist(cache->output());
    return action_from_index(mode == PolicyMode::Greedy ? dist.argmax() : dist.sample(rng));
  };
}

inline Policy random_policy() {
  return [](const DesignGame&, const Observation&, Rng& rng) {
    return action_from_index(static_cast<std::size_t>(rng.uniform_int(0, kActionCount - 1)));
  };
}

inline Policy greedy_policy() {
  return [](const DesignGame& g, const Observation&, Rng&) {
    return agents::greedy_choice(g.base(), g.design(), g.variant().bands);
  };
}

/// Frozen-parameter evaluation of a trained actor.
inline EvalReport evaluate(const ppo::Checkpoint& ck, std::span<const BaseMachine> machines,
                           std::span<const MachineVariant> variants, int episodes_per_variant, PolicyMode mode,
                           const RewardConfig& reward, std::uint64_t seed) {
  return run_policy(machines, variants, episodes_per_variant, actor_policy(ck.learner.actor, mode), reward, seed);
}

/// BFS shortest paths reported in the same shape (one row per variant per episode).
inline EvalReport evaluate_oracle(std::span<const BaseMachine> machines, std::span<const MachineVariant> variants,
                                  int episodes_per_variant) {
  std::vector<EpisodeRow> rows;
  int episode_index = 0;
  for (const auto& v : variants) {
    const auto res = agents::oracle_shortest(v, catalog::find_machine(machines, v.base_id));
    for (int e = 0; e < episodes_per_variant; ++e)
      rows.push_back(EpisodeRow{episode_index++, v.base_id, v.index, res.shortest_steps.value_or(0),
                                res.shortest_steps.has_value()});
  }
  return summarize(machines, std::move(rows));
}

/// Table with one row per machine and the published step counts alongside.
inline void print_table(std::ostream& os, const EvalReport& rep, std::string_view agent) {
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-10s %-10s %-12s %-10s %-14s %s\n", "machine", "power_kW", "voltage_V",
                "mean_steps", "win_rate", "mean_steps_all", "published_steps");
  os << "agent: " << agent << "\n" << line;
  for (const auto& m : rep.machines) {
    const auto pub = published_steps(m.base_id);
    std::snprintf(line, sizeof line, "%-8d %-10.0f %-10.0f %-12.2f %-10.3f %-14.2f %s\n", m.base_id,
                  m.rated_power_kw, m.line_voltage_v, m.mean_steps, m.win_rate, m.mean_steps_all,
                  pub ? std::to_string(static_cast<int>(*pub)).c_str() : "-");
    os << line;
  }
}

/// Comma-separated per-episode series: episode_index,machine,variant,steps,win.
inline void write_episode_series(std::ostream& os, const EvalReport& rep) {
  os << "episode_index,machine,variant,steps,win\n";
  for (const auto& r : rep.episodes)
    os << r.episode_index << "," << r.base_id << "," << r.variant_index << "," << r.steps << ","
       << (r.win ? 1 : 0) << "\n";
}

}  // namespace imdesign::eval
