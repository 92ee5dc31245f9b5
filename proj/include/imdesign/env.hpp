#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "imdesign/catalog.hpp"
#include "imdesign/machine.hpp"
#include "imdesign/surrogate.hpp"
#include "imdesign/text_format.hpp"

namespace imdesign {

enum class Flag : std::int8_t { TooLow = -1, InBand = 0, TooHigh = 1 };

/// Flags in slot priority order (b_gap, t_break, i_start, d_temp, tooth_tip).
using FlagVector = std::array<Flag, kSlotCount>;

inline bool all_zero(const FlagVector& f) {
  for (Flag x : f)
    if (x != Flag::InBand) return false;
  return true;
}

enum class Action : std::uint8_t { LengthUp = 0, LengthDown, TurnsUp, TurnsDown, ToothTipUp, ToothTipDown };
inline constexpr std::size_t kActionCount = 6;
inline constexpr std::array<Action, kActionCount> kAllActions = {Action::LengthUp,   Action::LengthDown,
                                                                 Action::TurnsUp,    Action::TurnsDown,
                                                                 Action::ToothTipUp, Action::ToothTipDown};
inline constexpr std::array<std::string_view, kActionCount> kActionNames = {
    "LengthUp", "LengthDown", "TurnsUp", "TurnsDown", "ToothTipUp", "ToothTipDown"};

inline std::size_t index_of(Action a) { return static_cast<std::size_t>(a); }

inline Action action_from_index(std::size_t i) {
  if (i >= kActionCount) throw ContractViolation("action index out of range");
  return static_cast<Action>(i);
}

inline std::string_view name_of(Action a) { return kActionNames[index_of(a)]; }

/// The design point one lattice step away in the action's direction (unclamped).
inline DesignPoint apply(Action a, DesignPoint d) {
  switch (a) {
    case Action::LengthUp: ++d.length; break;
    case Action::LengthDown: --d.length; break;
    case Action::TurnsUp: ++d.turns; break;
    case Action::TurnsDown: --d.turns; break;
    case Action::ToothTipUp: ++d.tooth_tip; break;
    case Action::ToothTipDown: --d.tooth_tip; break;
  }
  return d;
}

inline constexpr std::size_t kObservationSize = kSlotCount + kActionCount;
using Observation = std::array<double, kObservationSize>;

struct RewardConfig {
  double w_p = 1.0;
  double w_n = -1.0;
  double w_v = -2.0;
  double w_win = 100.0;
  std::array<double, kSlotCount> priority = {5.0, 4.0, 3.0, 2.0, 1.0};
  int max_steps = 300;

  void validate() const {
    double prio_sum = 0.0;
    for (double p : priority) {
      if (!(p > 0.0)) throw ValidationError("priority weights must be positive");
      prio_sum += p;
    }
    if (!(w_p > 0.0) || !(w_n < 0.0)) throw ValidationError("reward weights need w_p > 0 > w_n");
    if (!(w_v < 0.0)) throw ValidationError("revisit penalty w_v must be negative");
    // The win bonus must outweigh the best possible single shaping step.
    if (!(w_win > w_p * prio_sum)) throw ValidationError("w_win must exceed w_p * sum(priority)");
    if (max_steps < 1) throw ValidationError("max_steps must be >= 1");
  }

  bool operator==(const RewardConfig&) const = default;
};

/// 0 inside the inclusive band, +1 above it (decrease wanted), -1 below it (increase wanted).
inline Flag flag_of(double value, const Band& band) {
  if (value > band.high) return Flag::TooHigh;
  if (value < band.low) return Flag::TooLow;
  return Flag::InBand;
}

inline FlagVector flags(const Performance& perf, const TargetBands& bands) {
  const auto v = perf.values();
  FlagVector f{};
  for (std::size_t i = 0; i < kSlotCount; ++i) f[i] = flag_of(v[i], bands[i]);
  return f;
}

inline Observation encode(const FlagVector& f, std::optional<Action> prev_action) {
  Observation obs{};
  for (std::size_t i = 0; i < kSlotCount; ++i) obs[i] = static_cast<double>(static_cast<int>(f[i]));
  if (prev_action) obs[kSlotCount + index_of(*prev_action)] = 1.0;
  return obs;
}

/// Directional shaping term for one slot.
inline double slot_reward(Flag prev_flag, double prev_value, double new_value, const Band& band,
                          const RewardConfig& cfg) {
  switch (prev_flag) {
    case Flag::TooHigh: return new_value < prev_value ? cfg.w_p : cfg.w_n;
    case Flag::TooLow: return new_value > prev_value ? cfg.w_p : cfg.w_n;
    case Flag::InBand: return band.contains(new_value) ? 0.0 : cfg.w_n;
  }
  return 0.0;
}

/// Priority-weighted sum of the per-slot shaping terms. Excludes revisit and win terms.
inline double reward_for(const Performance& prev_perf, const Performance& new_perf, const FlagVector& prev_flags,
                         const TargetBands& bands, const RewardConfig& cfg) {
  const auto pv = prev_perf.values();
  const auto nv = new_perf.values();
  double total = 0.0;
  for (std::size_t i = 0; i < kSlotCount; ++i)
    total += cfg.priority[i] * slot_reward(prev_flags[i], pv[i], nv[i], bands[i], cfg);
  return total;
}

enum class EpisodeCause : std::uint8_t { Running = 0, Win, Truncation };

inline std::string_view name_of(EpisodeCause c) {
  switch (c) {
    case EpisodeCause::Running: return "running";
    case EpisodeCause::Win: return "win";
    case EpisodeCause::Truncation: return "truncation";
  }
  return "?";
}

struct StepInfo {
  int step = 0;  // 1-based index of this step within the episode
  Action action = Action::LengthUp;
  DesignPoint design;
  Performance performance;
  FlagVector flags{};
  double shaping = 0.0;
  bool clamped = false;
  bool revisit = false;
  EpisodeCause cause = EpisodeCause::Running;
};

struct StepResult {
  Observation observation{};
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// The design game for one machine variant.
///
/// Single-threaded; independent instances share nothing.
class DesignGame {
 public:
  explicit DesignGame(RewardConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  Observation reset(const MachineVariant& variant, const BaseMachine& base) {
    if (variant.base_id != base.id) throw ContractViolation("variant does not belong to this base machine");
    if (!base.contains(variant.initial_design)) throw ContractViolation("initial design outside machine bounds");
    if (base_.id != base.id || visited_.size() != base.lattice_size()) {
      visited_.assign(base.lattice_size(), 0);
      visited_list_.clear();
    }
    base_ = base;
    variant_ = variant;
    for (std::size_t i : visited_list_) visited_[i] = 0;
    visited_list_.clear();
    design_ = variant.initial_design;
    performance_ = surrogate::evaluate(design_, base_);
    flags_ = flags(performance_, variant_.bands);
    steps_ = 0;
    prev_action_.reset();
    done_ = false;
    started_ = true;
    mark_visited(design_);
    return observation();
  }

  StepResult step(Action action) {
    if (!started_) throw ContractViolation("step before reset");
    if (done_) throw ContractViolation("step after episode end");
    StepResult out;
    StepInfo& info = out.info;
    info.action = action;
    info.step = ++steps_;

    if (all_zero(flags_)) {
      // Started on a feasible design: the first step accepts it without moving.
      info.design = design_;
      info.performance = performance_;
      info.flags = flags_;
      info.cause = EpisodeCause::Win;
      prev_action_ = action;
      done_ = true;
      out.reward = cfg_.w_win;
      out.done = true;
      out.observation = observation();
      return out;
    }

    const DesignPoint candidate = apply(action, design_);
    info.clamped = !base_.contains(candidate);
    const DesignPoint next = info.clamped ? design_ : candidate;
    const Performance next_perf = surrogate::evaluate(next, base_);
    const FlagVector next_flags = flags(next_perf, variant_.bands);

    info.shaping = reward_for(performance_, next_perf, flags_, variant_.bands, cfg_);
    info.revisit = visited_[base_.lattice_index(next)] != 0;
    const bool win = all_zero(next_flags);
    out.reward = info.shaping + (info.revisit ? cfg_.w_v : 0.0) + (win ? cfg_.w_win : 0.0);

    design_ = next;
    performance_ = next_perf;
    flags_ = next_flags;
    mark_visited(design_);
    prev_action_ = action;

    if (win)
      info.cause = EpisodeCause::Win;
    else if (steps_ >= cfg_.max_steps)
      info.cause = EpisodeCause::Truncation;
    done_ = info.cause != EpisodeCause::Running;

    info.design = design_;
    info.performance = performance_;
    info.flags = flags_;
    out.done = done_;
    out.observation = observation();
    return out;
  }

  Observation observation() const { return encode(flags_, prev_action_); }

  const RewardConfig& config() const { return cfg_; }
  const BaseMachine& base() const { return base_; }
  const MachineVariant& variant() const { return variant_; }
  const DesignPoint& design() const { return design_; }
  const Performance& performance() const { return performance_; }
  const FlagVector& current_flags() const { return flags_; }
  std::optional<Action> previous_action() const { return prev_action_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  std::size_t visited_count() const { return visited_list_.size(); }
  bool visited(const DesignPoint& d) const {
    return base_.contains(d) && visited_.size() == base_.lattice_size() && visited_[base_.lattice_index(d)] != 0;
  }

 private:
  void mark_visited(const DesignPoint& d) {
    const std::size_t i = base_.lattice_index(d);
    if (!visited_[i]) {
      visited_[i] = 1;
      visited_list_.push_back(i);
    }
  }

  RewardConfig cfg_;
  BaseMachine base_;
  MachineVariant variant_;
  DesignPoint design_;
  Performance performance_;
  FlagVector flags_{};
  int steps_ = 0;
  std::optional<Action> prev_action_;
  bool done_ = false;
  bool started_ = false;
  std::vector<std::uint8_t> visited_;
  std::vector<std::size_t> visited_list_;
};

/// One line of the per-step episode log.
inline std::string format_step_record(int episode, const StepInfo& info, double reward) {
  std::ostringstream os;
  os << "episode=" << episode << " step=" << info.step << " length_index=" << info.design.length
     << " turns=" << info.design.turns << " tooth_tip_index=" << info.design.tooth_tip;
  const auto v = info.performance.values();
  for (std::size_t i = 0; i < kSlotCount; ++i) os << " " << kSlotNames[i] << "=" << text::format_double(v[i]);
  os << " flags=";
  for (std::size_t i = 0; i < kSlotCount; ++i) os << (i ? "," : "") << static_cast<int>(info.flags[i]);
  os << " action=" << name_of(info.action) << " reward=" << text::format_double(reward)
     << " cause=" << name_of(info.cause);
  return os.str();
}

}  // namespace imdesign
