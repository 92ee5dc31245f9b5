#pragma once

#include "imdesign/machine.hpp"

namespace imdesign::surrogate {

/// Tooth-tip leakage gain.
inline constexpr double kLeakageGain = 0.4;
/// Copper / iron split of the stator temperature rise at the unit design.
inline constexpr double kCopperShare = 0.7;
inline constexpr double kIronShare = 0.3;

/// Design variables relative to the base design.
struct PerUnit {
  double length = 1.0;     // lambda = L / L0
  double turns = 1.0;      // nu = N / N0
  double tooth_tip = 1.0;  // eta = h / h0

  bool operator==(const PerUnit&) const = default;
};

inline PerUnit normalize(const DesignPoint& design, const BaseMachine& base) {
  if (!base.contains(design)) throw ContractViolation("design point outside machine bounds");
  return PerUnit{base.length.per_unit(design.length), base.turns.per_unit(design.turns),
                 base.tooth_tip.per_unit(design.tooth_tip)};
}

inline double leakage_factor(double eta) { return 1.0 + kLeakageGain * (eta - 1.0); }

/// Closed-form per-unit scaling model.
///
/// Flux per pole follows V/(f N) and spreads over a pole area proportional to L, so
/// B ~ 1/(nu lambda). Leakage reactance grows with N^2 L and with the rotor tooth tip
/// (sigma), which lowers both breakdown torque and starting current. Temperature rise is
/// copper loss (N^2) plus iron loss (B^2) over a cooling surface.
inline Performance evaluate(const PerUnit& pu, double tooth_tip_mm) {
  const double lambda = pu.length;
  const double nu = pu.turns;
  const double nu2 = nu * nu;
  const double sigma = leakage_factor(pu.tooth_tip);
  Performance p;
  p.b_gap = 1.0 / (nu * lambda);
  p.t_break = lambda / (nu2 * sigma);
  p.i_start = 1.0 / (nu2 * lambda * sigma);
  p.d_temp = kCopperShare * nu2 + kIronShare / (nu2 * lambda * lambda);
  p.tooth_tip = tooth_tip_mm;
  return p;
}

inline Performance evaluate(const DesignPoint& design, const BaseMachine& base) {
  return evaluate(normalize(design, base), base.tooth_tip_mm(design));
}

/// Multiplies the per-unit values by the machine's SI anchors (reporting only).
inline Performance to_si(const Performance& pu, const BaseMachine& base) {
  return Performance{pu.b_gap * base.si.b_gap_tesla, pu.t_break * base.si.torque_nm,
                     pu.i_start * base.si.current_a, pu.d_temp * base.si.temp_rise_k, pu.tooth_tip};
}

}  // namespace imdesign::surrogate
