#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "imdesign/env.hpp"
#include "imdesign/ppo.hpp"
#include "imdesign/text_format.hpp"

namespace imdesign {

/// Everything a CLI run depends on. Keys are listed by RunConfig::keys().
struct RunConfig {
  ppo::Hyperparams hyper;
  RewardConfig reward;
  std::uint64_t catalog_seed = 2023;
  std::string catalog_path;  // empty: generate from catalog_seed
  std::string out_dir = ".";
  int episodes = 20;
  std::string eval_mode = "greedy";
  std::uint64_t eval_seed = 7;

  void validate() const {
    hyper.validate();
    reward.validate();
    if (episodes < 1) throw ValidationError("episodes must be >= 1");
    if (eval_mode != "greedy" && eval_mode != "stochastic")
      throw ValidationError("eval_mode must be greedy or stochastic");
  }
};

namespace config {

inline constexpr std::string_view kMagic = "motor-design-config";
inline constexpr int kVersion = 1;

struct Key {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

namespace detail {

inline double to_double(const std::string& k, const std::string& v) {
  try {
    return text::parse_double(v, 0);
  } catch (const MalformedFile&) {
    throw ValidationError("config key '" + k + "' expects a number, got '" + v + "'");
  }
}

template <class Int>
Int to_int(const std::string& k, const std::string& v) {
  try {
    return text::parse_int<Int>(v, 0);
  } catch (const MalformedFile&) {
    throw ValidationError("config key '" + k + "' expects an integer, got '" + v + "'");
  }
}

template <class T>
Key real(T RunConfig::*group, double T::*field, std::string name) {
  return Key{[=](RunConfig& c, const std::string& v) { (c.*group).*field = to_double(name, v); },
             [=](const RunConfig& c) { return text::format_double((c.*group).*field); }};
}

template <class T, class Int>
Key integer(T RunConfig::*group, Int T::*field, std::string name) {
  return Key{[=](RunConfig& c, const std::string& v) { (c.*group).*field = to_int<Int>(name, v); },
             [=](const RunConfig& c) { return std::to_string((c.*group).*field); }};
}

}  // namespace detail

/// The documented key set, in the order --print-config emits it.
inline const std::map<std::string, Key>& keys() {
  using detail::integer;
  using detail::real;
  using H = ppo::Hyperparams;
  using R = RewardConfig;
  static const std::map<std::string, Key> table = [] {
    std::map<std::string, Key> t;
    t["gamma"] = real(&RunConfig::hyper, &H::gamma, "gamma");
    t["gae_lambda"] = real(&RunConfig::hyper, &H::gae_lambda, "gae_lambda");
    t["clip_ratio"] = real(&RunConfig::hyper, &H::clip_ratio, "clip_ratio");
    t["learning_rate"] = real(&RunConfig::hyper, &H::learning_rate, "learning_rate");
    t["epochs"] = integer(&RunConfig::hyper, &H::epochs, "epochs");
    t["minibatch"] = integer(&RunConfig::hyper, &H::minibatch, "minibatch");
    t["horizon"] = integer(&RunConfig::hyper, &H::horizon, "horizon");
    t["value_coef"] = real(&RunConfig::hyper, &H::value_coef, "value_coef");
    t["entropy_coef"] = real(&RunConfig::hyper, &H::entropy_coef, "entropy_coef");
    t["total_steps"] = integer(&RunConfig::hyper, &H::total_steps, "total_steps");
    t["env_count"] = integer(&RunConfig::hyper, &H::env_count, "env_count");
    t["seed"] = integer(&RunConfig::hyper, &H::seed, "seed");
    t["max_grad_norm"] = real(&RunConfig::hyper, &H::max_grad_norm, "max_grad_norm");
    t["hidden"] = integer(&RunConfig::hyper, &H::hidden, "hidden");
    t["reward.w_p"] = real(&RunConfig::reward, &R::w_p, "reward.w_p");
    t["reward.w_n"] = real(&RunConfig::reward, &R::w_n, "reward.w_n");
    t["reward.w_v"] = real(&RunConfig::reward, &R::w_v, "reward.w_v");
    t["reward.w_win"] = real(&RunConfig::reward, &R::w_win, "reward.w_win");
    t["reward.max_steps"] = integer(&RunConfig::reward, &R::max_steps, "reward.max_steps");
    t["reward.priority"] = Key{
        [](RunConfig& c, const std::string& v) {
          std::vector<double> p;
          try {
            p = text::parse_doubles(v, 0);
          } catch (const MalformedFile&) {
            throw ValidationError("reward.priority expects five numbers");
          }
          if (p.size() != kSlotCount) throw ValidationError("reward.priority expects five numbers");
          std::copy(p.begin(), p.end(), c.reward.priority.begin());
        },
        [](const RunConfig& c) {
          std::string s;
          for (double p : c.reward.priority) s += (s.empty() ? "" : " ") + text::format_double(p);
          return s;
        }};
    t["catalog_seed"] = Key{
        [](RunConfig& c, const std::string& v) { c.catalog_seed = detail::to_int<std::uint64_t>("catalog_seed", v); },
        [](const RunConfig& c) { return std::to_string(c.catalog_seed); }};
    t["catalog"] = Key{[](RunConfig& c, const std::string& v) { c.catalog_path = v; },
                       [](const RunConfig& c) { return c.catalog_path; }};
    t["out_dir"] = Key{[](RunConfig& c, const std::string& v) { c.out_dir = v; },
                       [](const RunConfig& c) { return c.out_dir; }};
    t["episodes"] = Key{[](RunConfig& c, const std::string& v) { c.episodes = detail::to_int<int>("episodes", v); },
                        [](const RunConfig& c) { return std::to_string(c.episodes); }};
    t["eval_mode"] = Key{[](RunConfig& c, const std::string& v) { c.eval_mode = v; },
                         [](const RunConfig& c) { return c.eval_mode; }};
    t["eval_seed"] = Key{
        [](RunConfig& c, const std::string& v) { c.eval_seed = detail::to_int<std::uint64_t>("eval_seed", v); },
        [](const RunConfig& c) { return std::to_string(c.eval_seed); }};
    return t;
  }();
  return table;
}

inline void set(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = keys().find(key);
  if (it == keys().end()) throw ValidationError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

/// Applies "key=value" (as given on the command line).
inline void apply_assignment(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ValidationError("expected key=value, got '" + assignment + "'");
  set(cfg, std::string(text::trim(assignment.substr(0, eq))), std::string(text::trim(assignment.substr(eq + 1))));
}

inline void apply_file(RunConfig& cfg, std::istream& in) {
  text::Document doc;
  try {
    doc = text::parse(in, kMagic, kVersion);
  } catch (const MalformedFile& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (!doc.sections.empty()) throw ValidationError("config files take no [sections]");
  for (const auto& e : doc.preamble) {
    try {
      set(cfg, e.key, e.value);
    } catch (const ValidationError& err) {
      throw ValidationError("config line " + std::to_string(e.line) + ": " + err.what());
    }
  }
}

inline void apply_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  apply_file(cfg, in);
}

/// Fully resolved configuration in the config-file format.
inline void write(std::ostream& os, const RunConfig& cfg) {
  os << kMagic << " v" << kVersion << "\n";
  for (const auto& [name, key] : keys()) os << name << " = " << key.get(cfg) << "\n";
}

}  // namespace config
}  // namespace imdesign
