#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

#include "imdesign/env.hpp"
#include "imdesign/rng.hpp"

namespace imdesign::agents {

struct EpisodeRecord {
  std::vector<Action> actions;
  std::vector<double> rewards;
  bool win = false;
  int steps = 0;
  double total_reward = 0.0;
};

namespace detail {

inline void record(EpisodeRecord& rec, Action a, const StepResult& r) {
  rec.actions.push_back(a);
  rec.rewards.push_back(r.reward);
  rec.total_reward += r.reward;
  rec.steps = r.info.step;
  rec.win = r.info.cause == EpisodeCause::Win;
}

}  // namespace detail

/// Uniform random actions until the episode ends. Expects a freshly reset game.
inline EpisodeRecord random_agent(DesignGame& game, Rng& rng) {
  EpisodeRecord rec;
  while (!game.done()) {
    const Action a = action_from_index(static_cast<std::size_t>(rng.uniform_int(0, kActionCount - 1)));
    detail::record(rec, a, game.step(a));
  }
  return rec;
}

/// Distance of a value outside its band to the nearest band edge (0 inside).
inline double band_violation(double value, const Band& band) {
  if (value > band.high) return value - band.high;
  if (value < band.low) return band.low - value;
  return 0.0;
}

/// The move a rule-following designer would make: fix the highest-priority violated
/// requirement with whichever one-step change shrinks its violation most.
/// Returns LengthUp when nothing is violated (the next step then wins).
inline Action greedy_choice(const BaseMachine& base, const DesignPoint& design, const TargetBands& bands) {
  const Performance perf = surrogate::evaluate(design, base);
  const FlagVector f = flags(perf, bands);
  std::size_t slot = kSlotCount;
  for (std::size_t i = 0; i < kSlotCount; ++i)
    if (f[i] != Flag::InBand) {
      slot = i;
      break;
    }
  if (slot == kSlotCount) return Action::LengthUp;

  const double current = band_violation(perf.values()[slot], bands[slot]);
  Action best = Action::LengthUp;
  double best_reduction = -std::numeric_limits<double>::infinity();
  for (Action a : kAllActions) {
    const DesignPoint next = apply(a, design);
    if (!base.contains(next)) continue;
    const double v = band_violation(surrogate::evaluate(next, base).values()[slot], bands[slot]);
    const double reduction = current - v;
    if (reduction > best_reduction) {
      best_reduction = reduction;
      best = a;
    }
  }
  return best;
}

/// Deterministic rule-based baseline. Expects a freshly reset game.
inline EpisodeRecord greedy_agent(DesignGame& game) {
  EpisodeRecord rec;
  while (!game.done()) {
    const Action a = greedy_choice(game.base(), game.design(), game.variant().bands);
    detail::record(rec, a, game.step(a));
  }
  return rec;
}

struct OracleResult {
  int base_id = 0;
  int variant_index = 0;
  std::optional<int> shortest_steps;  // absent: no feasible point reachable
  std::vector<Action> witness;
};

/// Breadth-first search over the design lattice for the fewest actions to feasibility.
/// Edges that would leave the bounds are absent.
inline OracleResult oracle_shortest(const MachineVariant& variant, const BaseMachine& base) {
  if (!base.contains(variant.initial_design)) throw ContractViolation("initial design outside machine bounds");
  OracleResult res;
  res.base_id = variant.base_id;
  res.variant_index = variant.index;

  constexpr std::size_t kUnseen = std::numeric_limits<std::size_t>::max();
  const std::size_t n = base.lattice_size();
  std::vector<std::size_t> parent(n, kUnseen);
  std::vector<std::uint8_t> via(n, 0);
  std::vector<int> depth(n, 0);
  std::deque<std::size_t> frontier;

  const std::size_t start = base.lattice_index(variant.initial_design);
  parent[start] = start;
  frontier.push_back(start);
  while (!frontier.empty()) {
    const std::size_t cur = frontier.front();
    frontier.pop_front();
    const DesignPoint d = base.lattice_point(cur);
    if (satisfies(surrogate::evaluate(d, base), variant.bands)) {
      res.shortest_steps = depth[cur];
      for (std::size_t at = cur; at != start; at = parent[at]) res.witness.push_back(action_from_index(via[at]));
      std::reverse(res.witness.begin(), res.witness.end());
      return res;
    }
    for (Action a : kAllActions) {
      const DesignPoint next = apply(a, d);
      if (!base.contains(next)) continue;
      const std::size_t ni = base.lattice_index(next);
      if (parent[ni] != kUnseen) continue;
      parent[ni] = cur;
      via[ni] = static_cast<std::uint8_t>(index_of(a));
      depth[ni] = depth[cur] + 1;
      frontier.push_back(ni);
    }
  }
  return res;
}

}  // namespace imdesign::agents
