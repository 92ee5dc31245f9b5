#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "imdesign/machine.hpp"
#include "imdesign/rng.hpp"
#include "imdesign/surrogate.hpp"
#include "imdesign/text_format.hpp"

namespace imdesign {

/// A base machine plus a customer requirement: where the search starts and which bands to hit.
struct MachineVariant {
  int base_id = 0;
  int index = 0;  // position within its base machine's draw sequence
  bool held_out = false;
  std::uint64_t variant_seed = 0;
  DesignPoint initial_design;
  TargetBands bands{};
  bool feasible_exists = false;

  bool operator==(const MachineVariant&) const = default;
};

namespace catalog {

inline constexpr std::string_view kMagic = "motor-design-catalog";
inline constexpr int kVersion = 1;

inline constexpr int kTrainPerMachine = 25;
inline constexpr int kHeldOutPerMachine = 5;
inline constexpr int kMaxConsecutiveRejections = 1000;

/// The three machines of the reference study (power, voltage), with chosen base designs.
inline std::vector<BaseMachine> builtin_catalog() {
  return {
      make_base_machine(1, 2500.0, 10000.0, 1.2, 20, 2.0),
      make_base_machine(2, 600.0, 6000.0, 0.6, 28, 1.5),
      make_base_machine(3, 2100.0, 6000.0, 1.0, 18, 2.0),
  };
}

inline const BaseMachine& find_machine(std::span<const BaseMachine> machines, int id) {
  for (const auto& m : machines)
    if (m.id == id) return m;
  throw ValidationError("unknown base machine id " + std::to_string(id));
}

/// Checks the structural invariants of a base machine; throws ContractViolation.
inline void validate(const BaseMachine& m) {
  if (!(m.rated_power_kw > 0.0) || !(m.line_voltage_v > 0.0))
    throw ContractViolation("rated power and line voltage must be positive");
  for (auto v : {Variable::Length, Variable::Turns, Variable::ToothTip}) {
    const auto& a = m.axis(v);
    if (!(a.anchor > 0.0) || a.denom <= 0 || a.lo > a.hi || a.lo <= 0)
      throw ContractViolation("malformed lattice axis");
  }
  if (!m.contains(m.base_design)) throw ContractViolation("bounds do not contain the base design");
}

/// First lattice point (in dense index order) whose performance satisfies all bands.
inline std::optional<DesignPoint> find_feasible_point(const BaseMachine& base, const TargetBands& bands) {
  for (std::size_t i = 0; i < base.lattice_size(); ++i) {
    const DesignPoint d = base.lattice_point(i);
    if (satisfies(surrogate::evaluate(d, base), bands)) return d;
  }
  return std::nullopt;
}

/// Per-variant seed derived from the catalog seed, machine id and draw index.
inline std::uint64_t variant_seed(std::uint64_t catalog_seed, int base_id, int index) {
  return mix_seed(catalog_seed, static_cast<std::uint64_t>(base_id), static_cast<std::uint64_t>(index));
}

/// Sampler ranges. Centers are drawn uniformly in [1 - spread, 1 + spread].
struct SamplerConfig {
  int length_lo = 16, length_hi = 26;  // lambda0 in [0.8, 1.3]
  int turns_offset = 5;                // N0 -5 .. +5
  int tip_lo = 7, tip_hi = 16;         // eta0 in [0.7, 1.6]
  std::array<double, 4> center_spread = {0.03, 0.05, 0.05, 0.03};
  std::array<double, 4> half_width = {0.08, 0.15, 0.15, 0.10};
  int tip_band_lo = 6, tip_band_hi = 22;  // [0.6, 2.2] * h0
};

inline MachineVariant draw_variant(const BaseMachine& base, Rng& rng, const SamplerConfig& cfg) {
  MachineVariant v;
  v.base_id = base.id;
  v.initial_design.length = rng.uniform_int(cfg.length_lo, cfg.length_hi);
  v.initial_design.turns =
      rng.uniform_int(base.base_design.turns - cfg.turns_offset, base.base_design.turns + cfg.turns_offset);
  v.initial_design.tooth_tip = rng.uniform_int(cfg.tip_lo, cfg.tip_hi);
  for (std::size_t i = 0; i < 4; ++i) {
    const double center = rng.uniform(1.0 - cfg.center_spread[i], 1.0 + cfg.center_spread[i]);
    v.bands[i] = Band{center - cfg.half_width[i], center + cfg.half_width[i]};
  }
  v.bands[4] = Band{base.tooth_tip.physical(cfg.tip_band_lo), base.tooth_tip.physical(cfg.tip_band_hi)};
  return v;
}

/// Draws `count` certified-feasible variants. Deterministic in (base, count, seed).
inline std::vector<MachineVariant> generate_variants(const BaseMachine& base, int count, std::uint64_t seed,
                                                     const SamplerConfig& cfg = {}) {
  if (count < 1) throw ContractViolation("generate_variants: count must be >= 1");
  validate(base);
  std::vector<MachineVariant> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t vseed = variant_seed(seed, base.id, i);
    Rng rng(vseed);
    int rejections = 0;
    for (;;) {
      MachineVariant v = draw_variant(base, rng, cfg);
      if (base.contains(v.initial_design) && find_feasible_point(base, v.bands)) {
        v.index = i;
        v.variant_seed = vseed;
        v.feasible_exists = true;
        out.push_back(v);
        break;
      }
      if (++rejections >= kMaxConsecutiveRejections)
        throw GenerationExhausted("machine " + std::to_string(base.id) + ": " +
                                  std::to_string(kMaxConsecutiveRejections) +
                                  " consecutive infeasible draws; check the band configuration");
    }
  }
  return out;
}

/// 25 training + 5 held-out variants per machine, in machine order.
inline std::vector<MachineVariant> standard_split(std::span<const BaseMachine> machines, std::uint64_t seed) {
  std::vector<MachineVariant> all;
  for (const auto& m : machines) {
    auto vs = generate_variants(m, kTrainPerMachine + kHeldOutPerMachine, seed);
    for (auto& v : vs) {
      v.held_out = v.index >= kTrainPerMachine;
      all.push_back(v);
    }
  }
  return all;
}

inline std::vector<MachineVariant> select(std::span<const MachineVariant> vs, bool held_out) {
  std::vector<MachineVariant> out;
  for (const auto& v : vs)
    if (v.held_out == held_out) out.push_back(v);
  return out;
}

// --- persistence -----------------------------------------------------------

inline void write(std::ostream& os, std::span<const MachineVariant> variants) {
  os << kMagic << " v" << kVersion << "\n";
  os << "# " << variants.size() << " variants; design coordinates are lattice indices\n";
  for (const auto& v : variants) {
    os << "\n[variant]\n";
    os << "base_id = " << v.base_id << "\n";
    os << "index = " << v.index << "\n";
    os << "split = " << (v.held_out ? "held_out" : "train") << "\n";
    os << "variant_seed = " << v.variant_seed << "\n";
    os << "length_index = " << v.initial_design.length << "\n";
    os << "turns = " << v.initial_design.turns << "\n";
    os << "tooth_tip_index = " << v.initial_design.tooth_tip << "\n";
    for (std::size_t s = 0; s < kSlotCount; ++s)
      os << "band." << kSlotNames[s] << " = " << text::format_double(v.bands[s].low) << " "
         << text::format_double(v.bands[s].high) << "\n";
    os << "feasible_exists = " << (v.feasible_exists ? "true" : "false") << "\n";
  }
}

inline std::vector<MachineVariant> read(std::istream& in) {
  const text::Document doc = text::parse(in, kMagic, kVersion);
  if (!doc.preamble.empty()) throw MalformedFile("entry outside a [variant] section", doc.preamble.front().line);
  std::vector<MachineVariant> out;
  for (const auto& sec : doc.sections) {
    if (sec.name != "variant") throw MalformedFile("unknown section [" + sec.name + "]", sec.line);
    MachineVariant v;
    std::size_t consumed = 0;
    auto get = [&](std::string_view key) -> const text::Entry& {
      ++consumed;
      return sec.require(key);
    };
    v.base_id = text::parse_int<int>(get("base_id").value, sec.line);
    v.index = text::parse_int<int>(get("index").value, sec.line);
    const auto& split = get("split");
    if (split.value != "train" && split.value != "held_out")
      throw MalformedFile("split must be train or held_out", split.line);
    v.held_out = split.value == "held_out";
    const auto& seed = get("variant_seed");
    v.variant_seed = text::parse_int<std::uint64_t>(seed.value, seed.line);
    const auto& l = get("length_index");
    v.initial_design.length = text::parse_int<int>(l.value, l.line);
    const auto& n = get("turns");
    v.initial_design.turns = text::parse_int<int>(n.value, n.line);
    const auto& h = get("tooth_tip_index");
    v.initial_design.tooth_tip = text::parse_int<int>(h.value, h.line);
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      const auto& e = get("band." + std::string(kSlotNames[s]));
      const auto nums = text::parse_doubles(e.value, e.line);
      if (nums.size() != 2) throw MalformedFile("band needs 'low high'", e.line);
      if (!(nums[0] <= nums[1])) throw MalformedFile("band low exceeds high", e.line);
      v.bands[s] = Band{nums[0], nums[1]};
    }
    const auto& f = get("feasible_exists");
    v.feasible_exists = text::parse_bool(f.value, f.line);
    if (consumed != sec.entries.size()) throw MalformedFile("unexpected key in [variant]", sec.line);
    out.push_back(v);
  }
  if (out.empty()) throw MalformedFile("catalog contains no variants", 1);
  return out;
}

inline void save_catalog(std::span<const MachineVariant> variants, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open '" + path + "' for writing");
  write(os, variants);
  if (!os) throw ValidationError("failed writing '" + path + "'");
}

inline std::vector<MachineVariant> load_catalog(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read(in);
}

/// Throws ValidationError when a variant does not fit its base machine.
inline void check_against(std::span<const MachineVariant> vs, std::span<const BaseMachine> machines) {
  for (const auto& v : vs) {
    const auto& m = find_machine(machines, v.base_id);
    if (!m.contains(v.initial_design))
      throw ValidationError("variant " + std::to_string(v.index) + " of machine " + std::to_string(v.base_id) +
                            " starts outside the machine bounds");
  }
}

}  // namespace catalog
}  // namespace imdesign
