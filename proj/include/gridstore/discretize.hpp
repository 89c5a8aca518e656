#pragma once

// Time integration of the energy buffer.
//
// Step k (0-based here) has duration T_k, charge/discharge powers Pc_k, Pd_k
// and ends with energy E_k. The endpoint rule gives
//   E_k - E_{k-1} = T_k (eta_c Pc_k - Pd_k / eta_d),
// with E_{-1} = E^init. The trapezoid rule averages the net stored power of
// steps k and k-1 for k >= 1 and falls back to the endpoint form at k = 0.

#include <vector>

#include "gridstore/datamodel.hpp"

namespace gridstore {

enum class Quadrature { trapezoid, endpoint_initial, endpoint_final };

/// Approximates the integral of P over one step of length t from the samples
/// at its two ends.
inline double integrate_step(Quadrature rule, double p_k, double p_k1, double t) {
  if (!(t > 0.0)) throw Error("integrate_step: step length must be > 0");
  switch (rule) {
    case Quadrature::trapezoid: return 0.5 * (p_k + p_k1) * t;
    case Quadrature::endpoint_initial: return p_k * t;
    case Quadrature::endpoint_final: return p_k1 * t;
  }
  return 0.0;
}

/// Net power entering the buffer (MW) for a charge/discharge pair.
inline double stored_power(const StorageDevice& dev, double p_c, double p_d) {
  return dev.eta_c * p_c - p_d / dev.eta_d;
}

struct StepPowers {
  double p_c = 0.0;
  double p_d = 0.0;
};

/// Energy after one step. `prev` carries the powers of the preceding step and
/// is only read by the trapezoid rule; pass nullptr for the first step.
inline double energy_update(const StorageDevice& dev, DiscretizationRule rule, double e_prev, double p_c,
                            double p_d, double t, const StepPowers* prev = nullptr) {
  if (!(t > 0.0)) throw Error("energy_update: step length must be > 0");
  if (p_c < 0.0 || p_d < 0.0) throw Error("energy_update: charge and discharge powers must be >= 0");
  const double now = stored_power(dev, p_c, p_d);
  if (rule == DiscretizationRule::trapezoid && prev != nullptr)
    return e_prev + integrate_step(Quadrature::trapezoid, stored_power(dev, prev->p_c, prev->p_d), now, t);
  return e_prev + integrate_step(Quadrature::endpoint_final, 0.0, now, t);
}

/// Linear coefficients of one energy-update row:
///   E_k - E_{k-1} = c_now Pc_k + d_now Pd_k + c_prev Pc_{k-1} + d_prev Pd_{k-1}
struct EnergyStepCoefficients {
  double c_now = 0.0;
  double d_now = 0.0;
  double c_prev = 0.0;
  double d_prev = 0.0;
};

struct EnergyDynamics {
  DiscretizationRule rule = DiscretizationRule::endpoint;
  double e_init = 0.0;  // MWh, anchors the first step
  std::vector<EnergyStepCoefficients> steps;
};

inline EnergyDynamics energy_dynamics(const StorageDevice& dev, const TimeGrid& grid) {
  EnergyDynamics dyn;
  dyn.rule = grid.rule;
  dyn.e_init = dev.e_init;
  dyn.steps.resize(grid.steps());
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const double t = grid.durations[k];
    auto& s = dyn.steps[k];
    if (grid.rule == DiscretizationRule::trapezoid && k > 0) {
      s.c_now = s.c_prev = 0.5 * t * dev.eta_c;
      s.d_now = s.d_prev = -0.5 * t / dev.eta_d;
    } else {
      s.c_now = t * dev.eta_c;
      s.d_now = -t / dev.eta_d;
    }
  }
  return dyn;
}

/// Extra row tying the final energy E_{n-1} to a reference.
struct BoundaryConstraint {
  enum class Kind { none, final_ge_initial, final_fixed };
  Kind kind = Kind::none;
  double rhs_mwh = 0.0;  // E_final >= rhs or E_final == rhs
};

inline BoundaryConstraint boundary_constraint(const StorageDevice& dev, std::size_t n) {
  if (n == 0) throw Error("boundary_constraint: horizon must have at least one step");
  switch (dev.terminal.kind) {
    case TerminalCondition::Kind::fixed_init: return {};
    case TerminalCondition::Kind::terminal_ge_initial:
      return {BoundaryConstraint::Kind::final_ge_initial, dev.e_init};
    case TerminalCondition::Kind::terminal_fixed:
      if (dev.terminal.value_mwh > dev.e_max)
        throw ValidationError("storage '" + dev.id + "': terminal_fixed value exceeds e_max");
      if (dev.terminal.value_mwh < 0.0)
        throw ValidationError("storage '" + dev.id + "': terminal_fixed value must be >= 0");
      return {BoundaryConstraint::Kind::final_fixed, dev.terminal.value_mwh};
  }
  return {};
}

}  // namespace gridstore
