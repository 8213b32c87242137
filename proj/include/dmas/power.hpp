// SPDX-License-Identifier: Apache-2.0
//
// Step-2 power allocation for a fixed access decision: successive convex
// approximation (DC) outer loop, projected-subgradient dual ascent inner
// loop, and closed-form primal updates per subcarrier.
//
// Rates and reported objectives are in the instance's log base. Internally
// the Lagrangian, its gradient, the dual variables gamma/zeta/eta and the
// closed forms work in natural logs (lambda is scale-free and the optimizing
// powers are identical in any base); R_s is converted by ln(base).
#pragma once

#include <vector>

#include "dmas/netmodel.hpp"

namespace dmas {

struct PowerConfig {
  double eps_power = 1e-4;   // DC stop: ||p^t2 - p^(t2-1)|| <= eps_power
  double eps_inner = 1e-4;   // inner stop on max primal/dual change
  int max_dc_iters = 50;
  int max_dual_iters = 2000;
  double step_a = 1.0;  // subgradient step a/(b+t)
  double step_b = 10.0;
  bool collect_trace = false;
};

/// Lagrange multipliers of the surrogate power problem. All nonnegative.
struct DualVariables {
  std::vector<double> lambda;  // per SP, rate floors
  std::vector<double> gamma;   // per subcarrier, SIC separation
  std::vector<double> zeta;    // per (k,n), power-assignment linkage
  double eta = 0.0;            // total power budget
};

/// Everything the per-subcarrier closed form needs. For OMA only the `first`
/// user fields apply. D coefficients collect the gradient terms that do not
/// depend on the current powers (evaluated at the expansion point).
struct ClosedFormContext {
  int subcarrier = -1;
  SubcarrierMode mode = SubcarrierMode::Idle;
  int first = -1, second = -1;
  int sp_first = -1, sp_second = -1;
  double gain_first = 0.0, gain_second = 0.0;
  double exp_first = 0.0, exp_second = 0.0;  // expansion-point powers
  double noise_var = 1.0;
  double power_cap = 0.0;  // P_max
  double cost_sinr = 0.0;  // V
  double d_first = 0.0, d_second = 0.0;
  double q = 0.0;  // d_first - d_second
};

struct SubcarrierPowers {
  double first = 0.0, second = 0.0;
  bool boundary_fallback = false;  // no quadratic root survived (0, p_n)
};

struct PowerTraceRow {
  int dc_iter = 0;
  long inner_iter = 0;
  double surrogate = 0.0;       // J(P), log-base units
  double objective = 0.0;       // true power objective, log-base units
  double max_violation = 0.0;   // worst constraint violation at P
  double dual_norm = 0.0;       // inf-norm of all multipliers
};

struct PowerResult {
  PowerMatrix powers;
  DualVariables duals;
  bool converged = false;
  int dc_iters = 0;
  long inner_iters = 0;
  double objective = 0.0;  // true power objective at `powers`, log-base units
  std::vector<PowerTraceRow> trace;
};

/// True Step-2 objective (rate minus V-scaled cost part; the constant A term
/// plays no role in power optimization), log-base units.
double power_objective(const NetworkInstance& inst, const ChannelRealization& h,
                       const AccessDecision& decision, const PowerMatrix& powers);

/// DC surrogate J(P): concave terms kept, each subtracted log replaced by its
/// first-order expansion at `expansion`. Tangent to power_objective at
/// P == expansion and a global minorant of it.
double surrogate_objective(const NetworkInstance& inst, const ChannelRealization& h,
                           const AccessDecision& decision, const PowerMatrix& powers,
                           const PowerMatrix& expansion);

/// Linearized SP-rate LHS; a minorant of sp_rate, so surrogate-feasible
/// implies truly feasible. Log-base units.
double surrogate_sp_rate(const NetworkInstance& inst, const ChannelRealization& h,
                         const AccessDecision& decision, const PowerMatrix& powers,
                         const PowerMatrix& expansion, int s);

/// Lagrangian of the surrogate problem (natural-log units; constant terms
/// that do not involve P are included only where they carry multipliers).
double power_lagrangian(const NetworkInstance& inst, const ChannelRealization& h,
                        const AccessDecision& decision, const PowerMatrix& powers,
                        const PowerMatrix& expansion, const DualVariables& duals);

/// Analytic gradient of power_lagrangian w.r.t. each assigned power entry
/// (zero rows for unassigned entries). Natural-log units.
PowerMatrix power_lagrangian_gradient(const NetworkInstance& inst, const ChannelRealization& h,
                                      const AccessDecision& decision, const PowerMatrix& powers,
                                      const PowerMatrix& expansion, const DualVariables& duals);

/// Builds the closed-form context for subcarrier n at the given expansion
/// point and duals.
ClosedFormContext make_closed_form_context(const NetworkInstance& inst,
                                           const ChannelRealization& h,
                                           const SubcarrierAssignment& assignment, int n,
                                           const PowerMatrix& expansion,
                                           const DualVariables& duals);

/// Water-filling form for OMA; for NOMA the second-user water-filling total
/// followed by the quadratic split. Roots outside (0, p_n) fall back to the
/// boundary candidates {p_min, p_n - p_min}; of the surviving candidates the
/// one with the larger inner Lagrangian value wins.
SubcarrierPowers closed_form_update(const ClosedFormContext& ctx, const DualVariables& duals,
                                    SubcarrierMode mode);

/// One projected-subgradient step on every multiplier; multipliers grow on
/// violation and are clamped at zero. The SP-rate slack uses the surrogate
/// rate at `expansion` (pass expansion == P, the default, for the plain
/// rate).
DualVariables dual_ascent_step(const NetworkInstance& inst, const ChannelRealization& h,
                               const AccessDecision& decision, const PowerMatrix& powers,
                               const DualVariables& duals, double step_size,
                               const PowerMatrix* expansion = nullptr);

/// Full Step-2 solve: DC outer loop with a monotone-ascent guard (an inner
/// solve that fails to improve the true objective is replaced by one
/// backtracking projected-gradient step on the surrogate), dual ascent inner
/// loop. Returned powers are exactly zero on unassigned entries; the
/// returned duals are the ones the final primal update used.
PowerResult dc_power_allocation(const NetworkInstance& inst, const ChannelRealization& h,
                                const AccessDecision& decision, const PowerMatrix& init,
                                const PowerConfig& cfg);

/// Writes the iteration trace as plain text, one line per row.
void write_trace(std::ostream& os, const std::vector<PowerTraceRow>& trace);

}  // namespace dmas
