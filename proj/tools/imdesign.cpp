// Command-line front end: catalog, train, eval, oracle, inspect.
//
// Exit codes: 0 success, 1 validation error, 2 runtime or divergence error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "imdesign/agents.hpp"
#include "imdesign/catalog.hpp"
#include "imdesign/config.hpp"
#include "imdesign/env.hpp"
#include "imdesign/evaluation.hpp"
#include "imdesign/ppo.hpp"
#include "imdesign/surrogate.hpp"

namespace fs = std::filesystem;
using namespace imdesign;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct ConfigOptions {
  std::string file;
  std::vector<std::string> overrides;
  bool print = false;
};

void add_config_options(CLI::App* cmd, ConfigOptions& opts) {
  cmd->add_option("--config", opts.file, "config file (motor-design-config v1)");
  cmd->add_option("--set", opts.overrides, "override a config key: --set key=value (repeatable)");
  cmd->add_flag("--print-config", opts.print, "echo the resolved configuration before running");
}

/// File keys first, then --set overrides, then dedicated flags (applied by the caller).
RunConfig resolve(const ConfigOptions& opts) {
  RunConfig cfg;
  if (!opts.file.empty()) config::apply_file(cfg, opts.file);
  for (const auto& kv : opts.overrides) config::apply_assignment(cfg, kv);
  return cfg;
}

void finish_config(RunConfig& cfg, const ConfigOptions& opts) {
  cfg.validate();
  if (opts.print) config::write(std::cout, cfg);
}

std::vector<MachineVariant> load_or_generate(const RunConfig& cfg, const std::vector<BaseMachine>& machines) {
  auto vs = cfg.catalog_path.empty() ? catalog::standard_split(machines, cfg.catalog_seed)
                                     : catalog::load_catalog(cfg.catalog_path);
  catalog::check_against(vs, machines);
  return vs;
}

std::vector<MachineVariant> pick_split(const std::vector<MachineVariant>& vs, const std::string& split) {
  if (split == "all") return vs;
  if (split == "train") return catalog::select(vs, false);
  if (split == "held_out") return catalog::select(vs, true);
  throw ValidationError("split must be train, held_out or all");
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ValidationError("cannot open '" + p.string() + "' for writing");
  return os;
}

std::vector<int> parse_machine_list(const std::string& s) {
  std::vector<int> ids;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) ids.push_back(text::parse_int<int>(tok, 0));
  return ids;
}

int run_catalog(std::uint64_t seed, const std::string& out, const std::string& machine_filter) {
  const auto machines = catalog::builtin_catalog();
  std::set<int> wanted;
  if (!machine_filter.empty()) {
    std::vector<int> ids;
    try {
      ids = parse_machine_list(machine_filter);
    } catch (const MalformedFile&) {
      throw ValidationError("--machines expects a comma-separated list of ids");
    }
    for (int id : ids) wanted.insert(catalog::find_machine(machines, id).id);
  }
  std::vector<BaseMachine> chosen;
  for (const auto& m : machines)
    if (wanted.empty() || wanted.count(m.id)) chosen.push_back(m);
  const auto vs = catalog::standard_split(chosen, seed);
  auto os = open_out(out);
  catalog::write(os, vs);
  for (const auto& m : chosen) {
    int train = 0, held = 0;
    for (const auto& v : vs)
      if (v.base_id == m.id) (v.held_out ? held : train)++;
    std::cout << "machine " << m.id << ": " << train << " train + " << held << " held-out variants\n";
  }
  std::cout << "wrote " << vs.size() << " variants to " << out << "\n";
  return kExitOk;
}

int run_train(RunConfig cfg, const ConfigOptions& opts, const std::string& resume_path) {
  finish_config(cfg, opts);
  const auto machines = catalog::builtin_catalog();
  const auto train_set = catalog::select(load_or_generate(cfg, machines), false);
  if (train_set.empty()) throw ValidationError("catalog has no training variants");

  std::optional<ppo::Checkpoint> resume;
  if (!resume_path.empty()) resume = ppo::load_checkpoint(resume_path);

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  {
    auto os = open_out(dir / "config.resolved");
    config::write(os, cfg);
  }
  auto metrics = std::ofstream(dir / "metrics.log", resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw ValidationError("cannot open metrics log in '" + dir.string() + "'");

  const auto result = ppo::train(machines, train_set, cfg.hyper, cfg.reward, std::move(resume),
                                 [&](const ppo::UpdateRow& row) {
                                   const auto line = ppo::format_update_row(row);
                                   metrics << line << "\n";
                                   metrics.flush();
                                   std::printf("update %lld  steps %lld  win_rate %.3f  mean_steps_to_win %.2f\n",
                                               row.update, row.env_steps, row.win_rate, row.mean_steps_to_win);
                                   std::fflush(stdout);
                                 });
  ppo::save_checkpoint(result.checkpoint, (dir / "checkpoint.ckpt").string());
  std::cout << "checkpoint: " << (dir / "checkpoint.ckpt").string() << " (update " << result.checkpoint.updates
            << ")\n";
  return kExitOk;
}

int run_eval(RunConfig cfg, const ConfigOptions& opts, const std::string& agent, const std::string& ckpt,
             const std::string& split) {
  finish_config(cfg, opts);
  const auto machines = catalog::builtin_catalog();
  const auto variants = pick_split(load_or_generate(cfg, machines), split);
  if (variants.empty()) throw ValidationError("no variants in split '" + split + "'");

  eval::EvalReport rep;
  if (agent == "ppo") {
    if (ckpt.empty()) throw ValidationError("--checkpoint is required for the ppo agent");
    const auto ck = ppo::load_checkpoint(ckpt);
    const auto mode = cfg.eval_mode == "greedy" ? eval::PolicyMode::Greedy : eval::PolicyMode::Stochastic;
    rep = eval::evaluate(ck, machines, variants, cfg.episodes, mode, cfg.reward, cfg.eval_seed);
  } else if (agent == "greedy") {
    rep = eval::run_policy(machines, variants, cfg.episodes, eval::greedy_policy(), cfg.reward, cfg.eval_seed);
  } else if (agent == "random") {
    rep = eval::run_policy(machines, variants, cfg.episodes, eval::random_policy(), cfg.reward, cfg.eval_seed);
  } else if (agent == "oracle") {
    rep = eval::evaluate_oracle(machines, variants, cfg.episodes);
  } else {
    throw ValidationError("--agent must be ppo, greedy, random or oracle");
  }
  eval::print_table(std::cout, rep, agent);
  const fs::path series = fs::path(cfg.out_dir) / ("episodes_" + agent + ".csv");
  auto os = open_out(series);
  eval::write_episode_series(os, rep);
  std::cout << "per-episode steps: " << series.string() << " (" << rep.episodes.size() << " rows)\n";
  return kExitOk;
}

int run_oracle(RunConfig cfg, const ConfigOptions& opts, const std::string& split) {
  finish_config(cfg, opts);
  const auto machines = catalog::builtin_catalog();
  const auto variants = pick_split(load_or_generate(cfg, machines), split);
  const fs::path path = fs::path(cfg.out_dir) / "oracle.log";
  auto os = open_out(path);
  int missing = 0;
  for (const auto& v : variants) {
    const auto res = agents::oracle_shortest(v, catalog::find_machine(machines, v.base_id));
    std::ostringstream line;
    line << "oracle machine=" << v.base_id << " variant=" << v.index
         << " split=" << (v.held_out ? "held_out" : "train") << " shortest_steps=";
    if (res.shortest_steps) {
      line << *res.shortest_steps << " witness=";
      for (std::size_t i = 0; i < res.witness.size(); ++i) line << (i ? "," : "") << name_of(res.witness[i]);
    } else {
      line << "none";
      ++missing;
    }
    std::cout << line.str() << "\n";
    os << line.str() << "\n";
  }
  if (missing > 0) {
    std::cerr << "error: " << missing << " certified variants have no feasible path\n";
    return kExitRuntime;
  }
  return kExitOk;
}

struct InspectArgs {
  int machine = 1;
  double length = 0.0;
  double turns = 0.0;
  double tooth_tip = 0.0;
  std::vector<std::string> bands;
};

int run_inspect(const InspectArgs& a) {
  const auto machines = catalog::builtin_catalog();
  const BaseMachine& m = catalog::find_machine(machines, a.machine);
  if (a.turns != std::floor(a.turns)) throw ValidationError("turns must be an integer");
  DesignPoint d{m.length.index_of(a.length, "length"), static_cast<int>(a.turns),
                m.tooth_tip.index_of(a.tooth_tip, "tooth tip")};
  if (!m.turns.contains(d.turns)) throw ValidationError("turns is outside the machine bounds");

  // Default bands: unit centers with the sampler half-widths.
  const catalog::SamplerConfig sc;
  TargetBands bands{};
  for (std::size_t i = 0; i < 4; ++i) bands[i] = Band{1.0 - sc.half_width[i], 1.0 + sc.half_width[i]};
  bands[4] = Band{m.tooth_tip.physical(sc.tip_band_lo), m.tooth_tip.physical(sc.tip_band_hi)};
  for (const auto& arg : a.bands) {
    const auto eq = arg.find('=');
    const auto colon = arg.find(':', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || colon == std::string::npos)
      throw ValidationError("--band expects slot=low:high, got '" + arg + "'");
    const std::string slot = arg.substr(0, eq);
    std::size_t idx = kSlotCount;
    for (std::size_t i = 0; i < kSlotCount; ++i)
      if (kSlotNames[i] == slot) idx = i;
    if (idx == kSlotCount) throw ValidationError("unknown band slot '" + slot + "'");
    double lo = 0.0, hi = 0.0;
    try {
      lo = text::parse_double(arg.substr(eq + 1, colon - eq - 1), 0);
      hi = text::parse_double(arg.substr(colon + 1), 0);
    } catch (const MalformedFile&) {
      throw ValidationError("--band bounds must be numbers");
    }
    if (!(lo <= hi)) throw ValidationError("--band low exceeds high");
    bands[idx] = Band{lo, hi};
  }

  const auto pu = surrogate::normalize(d, m);
  const Performance perf = surrogate::evaluate(d, m);
  const Performance si = surrogate::to_si(perf, m);
  const FlagVector f = flags(perf, bands);
  std::printf("machine %d (%.0f kW, %.0f V)\n", m.id, m.rated_power_kw, m.line_voltage_v);
  std::printf("design: length %.4g m, turns %d, tooth tip %.4g mm (pu %.4g, %.4g, %.4g)\n", m.length_m(d), d.turns,
              m.tooth_tip_mm(d), pu.length, pu.turns, pu.tooth_tip);
  const char* units[] = {"T", "N*m", "A", "K", "mm"};
  const auto pv = perf.values();
  const auto sv = si.values();
  std::printf("%-10s %-12s %-14s %-20s %s\n", "quantity", "pu", "si", "band", "flag");
  for (std::size_t i = 0; i < kSlotCount; ++i) {
    char band[48];
    std::snprintf(band, sizeof band, "[%.4g, %.4g]", bands[i].low, bands[i].high);
    char si_text[32];
    std::snprintf(si_text, sizeof si_text, "%.5g %s", sv[i], units[i]);
    std::printf("%-10s %-12.6g %-14s %-20s %+d\n", std::string(kSlotNames[i]).c_str(), pv[i], si_text, band,
                static_cast<int>(f[i]));
  }
  std::printf("feasible: %s\n", all_zero(f) ? "yes" : "no");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Induction machine design game: catalog generation, PPO training and evaluation"};
  app.require_subcommand(1);

  std::uint64_t cat_seed = 2023;
  std::string cat_out = "catalog.txt";
  std::string cat_machines;
  auto* cat = app.add_subcommand("catalog", "generate 25 training + 5 held-out variants per machine");
  cat->add_option("--seed", cat_seed, "catalog seed");
  cat->add_option("--out", cat_out, "output catalog file");
  cat->add_option("--machines", cat_machines, "comma-separated machine ids (default: all)");

  ConfigOptions train_cfg;
  std::string resume;
  std::optional<long long> total_steps;
  std::optional<std::uint64_t> train_seed;
  std::string train_catalog, train_out;
  auto* train = app.add_subcommand("train", "train the PPO design agent");
  add_config_options(train, train_cfg);
  train->add_option("--catalog", train_catalog, "catalog file (default: generate from catalog_seed)");
  train->add_option("--out-dir", train_out, "directory for checkpoint, metrics and resolved config");
  train->add_option("--total-steps", total_steps, "environment steps for this run");
  train->add_option("--seed", train_seed, "training seed");
  train->add_option("--resume", resume, "continue from a checkpoint");

  ConfigOptions eval_cfg;
  std::string agent = "ppo", ckpt, split = "held_out", eval_catalog, eval_out, mode;
  std::optional<int> episodes;
  auto* ev = app.add_subcommand("eval", "evaluate an agent and write a per-episode steps series");
  add_config_options(ev, eval_cfg);
  ev->add_option("--agent", agent, "ppo | greedy | random | oracle");
  ev->add_option("--checkpoint", ckpt, "checkpoint for the ppo agent");
  ev->add_option("--catalog", eval_catalog, "catalog file (default: generate from catalog_seed)");
  ev->add_option("--split", split, "train | held_out | all");
  ev->add_option("--episodes", episodes, "episodes per variant");
  ev->add_option("--mode", mode, "ppo action selection: greedy | stochastic");
  ev->add_option("--out-dir", eval_out, "directory for the per-episode series");

  ConfigOptions oracle_cfg;
  std::string oracle_split = "all", oracle_catalog, oracle_out;
  auto* orc = app.add_subcommand("oracle", "breadth-first shortest paths to feasibility");
  add_config_options(orc, oracle_cfg);
  orc->add_option("--catalog", oracle_catalog, "catalog file (default: generate from catalog_seed)");
  orc->add_option("--split", oracle_split, "train | held_out | all");
  orc->add_option("--out-dir", oracle_out, "directory for oracle.log");

  InspectArgs ia;
  auto* insp = app.add_subcommand("inspect", "print performance values and flags for one design point");
  insp->add_option("--machine", ia.machine, "base machine id")->required();
  insp->add_option("--length", ia.length, "stack length [m]")->required();
  insp->add_option("--turns", ia.turns, "coil turns")->required();
  insp->add_option("--tooth-tip", ia.tooth_tip, "rotor tooth tip height [mm]")->required();
  insp->add_option("--band", ia.bands, "override a band: slot=low:high (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*cat) return run_catalog(cat_seed, cat_out, cat_machines);
    if (*train) {
      RunConfig cfg = resolve(train_cfg);
      if (!train_catalog.empty()) cfg.catalog_path = train_catalog;
      if (!train_out.empty()) cfg.out_dir = train_out;
      if (total_steps) cfg.hyper.total_steps = *total_steps;
      if (train_seed) cfg.hyper.seed = *train_seed;
      return run_train(cfg, train_cfg, resume);
    }
    if (*ev) {
      RunConfig cfg = resolve(eval_cfg);
      if (!eval_catalog.empty()) cfg.catalog_path = eval_catalog;
      if (!eval_out.empty()) cfg.out_dir = eval_out;
      if (episodes) cfg.episodes = *episodes;
      if (!mode.empty()) cfg.eval_mode = mode;
      return run_eval(cfg, eval_cfg, agent, ckpt, split);
    }
    if (*orc) {
      RunConfig cfg = resolve(oracle_cfg);
      if (!oracle_catalog.empty()) cfg.catalog_path = oracle_catalog;
      if (!oracle_out.empty()) cfg.out_dir = oracle_out;
      return run_oracle(cfg, oracle_cfg, oracle_split);
    }
    if (*insp) return run_inspect(ia);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const MalformedFile& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const VersionMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
