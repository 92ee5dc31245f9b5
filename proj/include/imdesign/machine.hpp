#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "imdesign/errors.hpp"

namespace imdesign {

/// One design variable discretized on an integer lattice.
///
/// Lattice coordinate `i` maps to the per-unit value i / denom and to the physical
/// value anchor * i / denom. Keeping the coordinate integral makes the base design
/// normalize to exactly 1.0 and keeps revisit detection exact.
struct LatticeAxis {
  double anchor = 1.0;  // physical value at per-unit 1 (L0 meters, N0 turns, h0 mm)
  int denom = 1;
  int lo = 0;
  int hi = 0;

  double per_unit(int i) const { return static_cast<double>(i) / denom; }
  double physical(int i) const { return anchor * static_cast<double>(i) / denom; }
  double step() const { return anchor / denom; }
  bool contains(int i) const { return lo <= i && i <= hi; }
  int size() const { return hi - lo + 1; }

  /// Lattice coordinate of a physical value; throws ValidationError when it is off-lattice.
  int index_of(double value, std::string_view name) const {
    const double raw = value * denom / anchor;
    const double rounded = std::round(raw);
    if (!std::isfinite(raw) || std::abs(raw - rounded) > 1e-6)
      throw ValidationError(std::string(name) + " is not on the design lattice");
    const int idx = static_cast<int>(rounded);
    if (!contains(idx)) throw ValidationError(std::string(name) + " is outside the machine bounds");
    return idx;
  }

  bool operator==(const LatticeAxis&) const = default;
};

/// A point of the design lattice: length, coil turns and rotor tooth-tip height.
/// `turns` is the physical turn count; the other two are lattice coordinates.
struct DesignPoint {
  int length = 0;
  int turns = 0;
  int tooth_tip = 0;

  bool operator==(const DesignPoint&) const = default;
};

enum class Variable : std::uint8_t { Length = 0, Turns = 1, ToothTip = 2 };

/// Reporting-only SI magnitudes that correspond to per-unit 1.
struct SiAnchors {
  double b_gap_tesla = 0.85;
  double torque_nm = 0.0;
  double current_a = 0.0;
  double temp_rise_k = 80.0;

  bool operator==(const SiAnchors&) const = default;
};

struct BaseMachine {
  int id = 0;
  double rated_power_kw = 0.0;
  double line_voltage_v = 0.0;
  double frequency_hz = 50.0;
  int pole_pairs = 2;
  LatticeAxis length;     // meters
  LatticeAxis turns;      // turns (anchor = N0, denom = N0)
  LatticeAxis tooth_tip;  // millimeters
  DesignPoint base_design;
  SiAnchors si;

  const LatticeAxis& axis(Variable v) const {
    switch (v) {
      case Variable::Length: return length;
      case Variable::Turns: return turns;
      case Variable::ToothTip: return tooth_tip;
    }
    throw ContractViolation("unknown design variable");
  }

  bool contains(const DesignPoint& d) const {
    return length.contains(d.length) && turns.contains(d.turns) && tooth_tip.contains(d.tooth_tip);
  }

  std::size_t lattice_size() const {
    return static_cast<std::size_t>(length.size()) * turns.size() * tooth_tip.size();
  }

  /// Dense row-major index of a lattice point, in [0, lattice_size()).
  std::size_t lattice_index(const DesignPoint& d) const {
    return (static_cast<std::size_t>(d.length - length.lo) * turns.size() + (d.turns - turns.lo)) *
               tooth_tip.size() +
           (d.tooth_tip - tooth_tip.lo);
  }

  DesignPoint lattice_point(std::size_t index) const {
    const auto nh = static_cast<std::size_t>(tooth_tip.size());
    const auto nn = static_cast<std::size_t>(turns.size());
    DesignPoint d;
    d.tooth_tip = tooth_tip.lo + static_cast<int>(index % nh);
    index /= nh;
    d.turns = turns.lo + static_cast<int>(index % nn);
    d.length = length.lo + static_cast<int>(index / nn);
    return d;
  }

  double length_m(const DesignPoint& d) const { return length.physical(d.length); }
  double tooth_tip_mm(const DesignPoint& d) const { return tooth_tip.physical(d.tooth_tip); }

  bool operator==(const BaseMachine&) const = default;
};

/// Performance slots in priority order, highest first.
enum class Slot : std::uint8_t { BGap = 0, TBreak = 1, IStart = 2, DTemp = 3, ToothTip = 4 };
inline constexpr std::size_t kSlotCount = 5;
inline constexpr std::array<std::string_view, kSlotCount> kSlotNames = {"b_gap", "t_break", "i_start",
                                                                       "d_temp", "tooth_tip"};

struct Performance {
  double b_gap = 0.0;    // pu
  double t_break = 0.0;  // pu
  double i_start = 0.0;  // pu
  double d_temp = 0.0;   // pu
  double tooth_tip = 0.0;  // mm

  std::array<double, kSlotCount> values() const { return {b_gap, t_break, i_start, d_temp, tooth_tip}; }
  double operator[](Slot s) const { return values()[static_cast<std::size_t>(s)]; }

  bool operator==(const Performance&) const = default;
};

/// Inclusive target interval.
struct Band {
  double low = 0.0;
  double high = 0.0;

  bool contains(double v) const { return low <= v && v <= high; }
  bool operator==(const Band&) const = default;
};

using TargetBands = std::array<Band, kSlotCount>;

inline bool satisfies(const Performance& p, const TargetBands& bands) {
  const auto v = p.values();
  for (std::size_t i = 0; i < kSlotCount; ++i)
    if (!bands[i].contains(v[i])) return false;
  return true;
}

/// Builds a machine on the default lattice around (L0, N0, h0):
/// L in [0.5, 2.0]*L0 step 0.05*L0, N in [N0-10, N0+10], h in [0.5, 2.5]*h0 step 0.1*h0.
inline BaseMachine make_base_machine(int id, double power_kw, double voltage_v, double l0_m, int n0,
                                     double h0_mm) {
  BaseMachine m;
  m.id = id;
  m.rated_power_kw = power_kw;
  m.line_voltage_v = voltage_v;
  m.frequency_hz = 50.0;
  m.pole_pairs = 2;
  m.length = LatticeAxis{l0_m, 20, 10, 40};
  m.turns = LatticeAxis{static_cast<double>(n0), n0, n0 - 10, n0 + 10};
  m.tooth_tip = LatticeAxis{h0_mm, 10, 5, 25};
  m.base_design = DesignPoint{20, n0, 10};
  // Rated torque at synchronous speed; rated current assumes unity power factor and efficiency.
  const double sync_rad_s = 2.0 * std::numbers::pi * m.frequency_hz / m.pole_pairs;
  m.si.torque_nm = power_kw * 1e3 / sync_rad_s;
  m.si.current_a = 5.0 * power_kw * 1e3 / (std::numbers::sqrt3 * voltage_v);
  return m;
}

}  // namespace imdesign
