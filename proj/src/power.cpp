// SPDX-License-Identifier: Apache-2.0

#include "dmas/power.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace dmas {

namespace {

double floored(double p) { return std::max(p, kMinActivePower); }

// Per-subcarrier view used by every hot loop.
struct CompiledSubc {
  SubcarrierMode mode = SubcarrierMode::Idle;
  int first = -1, second = -1;
  int sp_first = -1, sp_second = -1;
  double gain_first = 0.0, gain_second = 0.0;
};

struct Compiled {
  std::vector<CompiledSubc> subc;
  int active_entries = 0;
};

Compiled compile(const NetworkInstance& inst, const ChannelRealization& h,
                 const AccessDecision& decision) {
  Compiled c;
  const auto assignments = decision.assignments();
  c.subc.resize(assignments.size());
  for (int n = 0; n < static_cast<int>(assignments.size()); ++n) {
    const SubcarrierAssignment& a = assignments[n];
    CompiledSubc& s = c.subc[n];
    s.mode = a.mode;
    s.first = a.first;
    s.second = a.second;
    if (a.first >= 0) {
      s.sp_first = inst.sp_of[a.first];
      s.gain_first = h.at(a.first, n);
      ++c.active_entries;
    }
    if (a.second >= 0) {
      s.sp_second = inst.sp_of[a.second];
      s.gain_second = h.at(a.second, n);
      ++c.active_entries;
    }
  }
  return c;
}

// True Step-2 objective in nats (A excluded; it is constant in P).
double true_objective_nats(const NetworkInstance& inst, const Compiled& c,
                           const PowerMatrix& p) {
  const double s2 = inst.noise_var;
  const double v = inst.cost_sinr;
  double total = 0.0;
  for (int n = 0; n < static_cast<int>(c.subc.size()); ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.mode == SubcarrierMode::Idle) continue;
    const double pf = p.at(sc.first, n);
    total += std::log1p(pf * sc.gain_first / s2);
    if (sc.mode != SubcarrierMode::Noma) continue;
    const double ps = p.at(sc.second, n);
    total += std::log1p(ps * sc.gain_second / (pf * sc.gain_second + s2));
    total -= v * (std::log(sc.gain_first * floored(ps) + s2) -
                  std::log(sc.gain_first * floored(pf)));
  }
  return total;
}

// Surrogate J in nats at expansion point e.
double surrogate_nats(const NetworkInstance& inst, const Compiled& c, const PowerMatrix& p,
                      const PowerMatrix& e) {
  const double s2 = inst.noise_var;
  const double v = inst.cost_sinr;
  double total = 0.0;
  for (int n = 0; n < static_cast<int>(c.subc.size()); ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.mode == SubcarrierMode::Idle) continue;
    const double pf = p.at(sc.first, n);
    total += std::log1p(pf * sc.gain_first / s2);
    if (sc.mode != SubcarrierMode::Noma) continue;
    const double ps = p.at(sc.second, n);
    const double ef = e.at(sc.first, n);
    const double es = floored(e.at(sc.second, n));
    const double hs = sc.gain_second, hf = sc.gain_first;
    total += std::log(pf * hs + s2 + ps * hs) -
             (std::log(ef * hs + s2) + (pf - ef) * hs / (ef * hs + s2));
    total += v * (-(std::log(es * hf + s2) + (ps - es) * hf / (es * hf + s2)) +
                  std::log(floored(pf) * hf));
  }
  return total;
}

// Surrogate per-SP rates in nats, all providers at once.
void surrogate_sp_rates_nats(const NetworkInstance& inst, const Compiled& c,
                             const PowerMatrix& p, const PowerMatrix& e,
                             std::vector<double>& out) {
  const double s2 = inst.noise_var;
  out.assign(inst.num_providers, 0.0);
  for (int n = 0; n < static_cast<int>(c.subc.size()); ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.mode == SubcarrierMode::Idle) continue;
    const double pf = p.at(sc.first, n);
    out[sc.sp_first] += std::log1p(pf * sc.gain_first / s2);
    if (sc.mode != SubcarrierMode::Noma) continue;
    const double ps = p.at(sc.second, n);
    const double ef = e.at(sc.first, n);
    const double hs = sc.gain_second;
    out[sc.sp_second] += std::log(pf * hs + s2 + ps * hs) -
                         (std::log(ef * hs + s2) + (pf - ef) * hs / (ef * hs + s2));
  }
}

void true_sp_rates_nats(const NetworkInstance& inst, const Compiled& c, const PowerMatrix& p,
                        std::vector<double>& out) {
  const double s2 = inst.noise_var;
  out.assign(inst.num_providers, 0.0);
  for (int n = 0; n < static_cast<int>(c.subc.size()); ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.mode == SubcarrierMode::Idle) continue;
    const double pf = p.at(sc.first, n);
    out[sc.sp_first] += std::log1p(pf * sc.gain_first / s2);
    if (sc.mode != SubcarrierMode::Noma) continue;
    const double ps = p.at(sc.second, n);
    out[sc.sp_second] += std::log1p(ps * sc.gain_second / (pf * sc.gain_second + s2));
  }
}

double assigned_total_power(const Compiled& c, const PowerMatrix& p) {
  double total = 0.0;
  for (int n = 0; n < static_cast<int>(c.subc.size()); ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.first >= 0) total += p.at(sc.first, n);
    if (sc.second >= 0) total += p.at(sc.second, n);
  }
  return total;
}

ClosedFormContext make_ctx(const NetworkInstance& inst, const CompiledSubc& sc, int n,
                           const PowerMatrix& e, const DualVariables& duals) {
  ClosedFormContext ctx;
  ctx.subcarrier = n;
  ctx.mode = sc.mode;
  ctx.noise_var = inst.noise_var;
  ctx.power_cap = inst.power_budget;
  ctx.cost_sinr = inst.cost_sinr;
  if (sc.mode == SubcarrierMode::Idle) return ctx;
  ctx.first = sc.first;
  ctx.sp_first = sc.sp_first;
  ctx.gain_first = sc.gain_first;
  ctx.exp_first = e.at(sc.first, n);
  const double zeta_f = duals.zeta.empty() ? 0.0 : duals.zeta[ctx.first * e.num_subcarriers + n];
  if (sc.mode == SubcarrierMode::Oma) {
    ctx.d_first = -zeta_f - duals.eta;
    return ctx;
  }
  ctx.second = sc.second;
  ctx.sp_second = sc.sp_second;
  ctx.gain_second = sc.gain_second;
  ctx.exp_second = e.at(sc.second, n);
  const double s2 = inst.noise_var;
  const double hf = sc.gain_first, hs = sc.gain_second;
  const double gamma_n = duals.gamma.empty() ? 0.0 : duals.gamma[n];
  const double zeta_s = duals.zeta.empty() ? 0.0 : duals.zeta[ctx.second * e.num_subcarriers + n];
  const double lam_s = duals.lambda.empty() ? 0.0 : duals.lambda[ctx.sp_second];
  ctx.d_first = -(1.0 + lam_s) * hs / (ctx.exp_first * hs + s2) - gamma_n * hf / s2 - zeta_f -
                duals.eta;
  ctx.d_second = -inst.cost_sinr * hf / (floored(ctx.exp_second) * hf + s2) +
                 gamma_n * hf / s2 - zeta_s - duals.eta;
  ctx.q = ctx.d_first - ctx.d_second;
  return ctx;
}

// Inner 1-D Lagrangian along p_first at fixed pair total (terms constant in
// p_first dropped).
double pair_split_value(const ClosedFormContext& ctx, double lam_f, double p_first) {
  const double s2 = ctx.noise_var;
  return (1.0 + lam_f) * std::log1p(p_first * ctx.gain_first / s2) +
         ctx.cost_sinr * std::log(floored(p_first) * ctx.gain_first) + ctx.q * p_first;
}

void primal_update(const NetworkInstance& inst, const Compiled& c, const PowerMatrix& e,
                   const DualVariables& duals, PowerMatrix& p) {
  for (int n = 0; n < static_cast<int>(c.subc.size()); ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.mode == SubcarrierMode::Idle) continue;
    ClosedFormContext ctx = make_ctx(inst, sc, n, e, duals);
    SubcarrierPowers sp = closed_form_update(ctx, duals, sc.mode);
    p.at(sc.first, n) = sp.first;
    if (sc.mode == SubcarrierMode::Noma) p.at(sc.second, n) = sp.second;
  }
}

void dual_step_inplace(const NetworkInstance& inst, const Compiled& c, const PowerMatrix& p,
                       const PowerMatrix& e, double step, double inv_ln_base,
                       std::vector<double>& sp_scratch, DualVariables& duals) {
  surrogate_sp_rates_nats(inst, c, p, e, sp_scratch);
  for (int s = 0; s < inst.num_providers; ++s) {
    const double slack = sp_scratch[s] * inv_ln_base - inst.min_rate[s];
    duals.lambda[s] = std::max(0.0, duals.lambda[s] - step * slack);
  }
  const double s2 = inst.noise_var;
  for (int n = 0; n < static_cast<int>(c.subc.size()); ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.mode != SubcarrierMode::Noma) continue;
    const double sep = sc.gain_first / s2 * (p.at(sc.second, n) - p.at(sc.first, n)) -
                       inst.sic_separation;
    duals.gamma[n] = std::max(0.0, duals.gamma[n] - step * sep);
  }
  for (int n = 0; n < static_cast<int>(c.subc.size()); ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.first >= 0) {
      double& z = duals.zeta[sc.first * p.num_subcarriers + n];
      z = std::max(0.0, z + step * (p.at(sc.first, n) - inst.power_budget));
    }
    if (sc.second >= 0) {
      double& z = duals.zeta[sc.second * p.num_subcarriers + n];
      z = std::max(0.0, z + step * (p.at(sc.second, n) - inst.power_budget));
    }
  }
  duals.eta = std::max(0.0, duals.eta + step * (assigned_total_power(c, p) - inst.power_budget));
}

double max_violation(const NetworkInstance& inst, const Compiled& c, const PowerMatrix& p,
                     double inv_ln_base, std::vector<double>& sp_scratch) {
  true_sp_rates_nats(inst, c, p, sp_scratch);
  double worst = 0.0;
  for (int s = 0; s < inst.num_providers; ++s)
    worst = std::max(worst, inst.min_rate[s] - sp_scratch[s] * inv_ln_base);
  const double s2 = inst.noise_var;
  for (int n = 0; n < static_cast<int>(c.subc.size()); ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.mode != SubcarrierMode::Noma) continue;
    worst = std::max(worst, inst.sic_separation - sc.gain_first / s2 *
                                                      (p.at(sc.second, n) - p.at(sc.first, n)));
  }
  worst = std::max(worst, assigned_total_power(c, p) - inst.power_budget);
  return std::max(worst, 0.0);
}

double dual_inf_norm(const DualVariables& d) {
  double v = d.eta;
  for (double x : d.lambda) v = std::max(v, x);
  for (double x : d.gamma) v = std::max(v, x);
  for (double x : d.zeta) v = std::max(v, x);
  return v;
}

// Gradient of J (duals zero) on assigned entries; used by the fallback step.
void surrogate_gradient(const NetworkInstance& inst, const Compiled& c, const PowerMatrix& p,
                        const PowerMatrix& e, PowerMatrix& g) {
  const double s2 = inst.noise_var;
  const double v = inst.cost_sinr;
  std::fill(g.p.begin(), g.p.end(), 0.0);
  for (int n = 0; n < static_cast<int>(c.subc.size()); ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.mode == SubcarrierMode::Idle) continue;
    const double hf = sc.gain_first;
    const double pf = p.at(sc.first, n);
    double gf = hf / (pf * hf + s2);
    if (sc.mode == SubcarrierMode::Noma) {
      const double hs = sc.gain_second;
      const double ps = p.at(sc.second, n);
      const double pn = pf + ps;
      const double ef = e.at(sc.first, n);
      const double es = floored(e.at(sc.second, n));
      gf += hs / (pn * hs + s2) - hs / (ef * hs + s2) + v / floored(pf);
      g.at(sc.second, n) = hs / (pn * hs + s2) - v * hf / (es * hf + s2);
    }
    g.at(sc.first, n) = gf;
  }
}

// Projection onto { p >= 0 entrywise, sum <= P_max } by clamping then scaling.
void project_budget(const Compiled& c, double budget, PowerMatrix& p) {
  for (double& x : p.p) x = std::max(x, 0.0);
  const double total = assigned_total_power(c, p);
  if (total > budget && total > 0.0) {
    const double f = budget / total;
    for (double& x : p.p) x *= f;
  }
}

}  // namespace

double power_objective(const NetworkInstance& inst, const ChannelRealization& h,
                       const AccessDecision& decision, const PowerMatrix& powers) {
  const Compiled c = compile(inst, h, decision);
  return true_objective_nats(inst, c, powers) / std::log(inst.log_base);
}

double surrogate_objective(const NetworkInstance& inst, const ChannelRealization& h,
                           const AccessDecision& decision, const PowerMatrix& powers,
                           const PowerMatrix& expansion) {
  const Compiled c = compile(inst, h, decision);
  return surrogate_nats(inst, c, powers, expansion) / std::log(inst.log_base);
}

double surrogate_sp_rate(const NetworkInstance& inst, const ChannelRealization& h,
                         const AccessDecision& decision, const PowerMatrix& powers,
                         const PowerMatrix& expansion, int s) {
  const Compiled c = compile(inst, h, decision);
  std::vector<double> rates;
  surrogate_sp_rates_nats(inst, c, powers, expansion, rates);
  return rates[s] / std::log(inst.log_base);
}

double power_lagrangian(const NetworkInstance& inst, const ChannelRealization& h,
                        const AccessDecision& decision, const PowerMatrix& powers,
                        const PowerMatrix& expansion, const DualVariables& duals) {
  const Compiled c = compile(inst, h, decision);
  const double ln_base = std::log(inst.log_base);
  double value = surrogate_nats(inst, c, powers, expansion);
  std::vector<double> rates;
  surrogate_sp_rates_nats(inst, c, powers, expansion, rates);
  for (int s = 0; s < inst.num_providers; ++s)
    value += duals.lambda[s] * (rates[s] - inst.min_rate[s] * ln_base);
  const double s2 = inst.noise_var;
  for (int n = 0; n < inst.num_subcarriers; ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.mode != SubcarrierMode::Noma) continue;
    const double sep = sc.gain_first / s2 *
                           (powers.at(sc.second, n) - powers.at(sc.first, n)) -
                       inst.sic_separation;
    value += duals.gamma[n] * sep;
  }
  for (int n = 0; n < inst.num_subcarriers; ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.first >= 0)
      value -= duals.zeta[sc.first * inst.num_subcarriers + n] *
               (powers.at(sc.first, n) - inst.power_budget);
    if (sc.second >= 0)
      value -= duals.zeta[sc.second * inst.num_subcarriers + n] *
               (powers.at(sc.second, n) - inst.power_budget);
  }
  value -= duals.eta * (assigned_total_power(c, powers) - inst.power_budget);
  return value;
}

PowerMatrix power_lagrangian_gradient(const NetworkInstance& inst, const ChannelRealization& h,
                                      const AccessDecision& decision, const PowerMatrix& powers,
                                      const PowerMatrix& expansion, const DualVariables& duals) {
  const Compiled c = compile(inst, h, decision);
  PowerMatrix g(inst.num_users, inst.num_subcarriers);
  const double s2 = inst.noise_var;
  const double v = inst.cost_sinr;
  for (int n = 0; n < inst.num_subcarriers; ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.mode == SubcarrierMode::Idle) continue;
    const double hf = sc.gain_first;
    const double pf = powers.at(sc.first, n);
    const double lam_f = duals.lambda[sc.sp_first];
    const double zeta_f = duals.zeta[sc.first * inst.num_subcarriers + n];
    if (sc.mode == SubcarrierMode::Oma) {
      g.at(sc.first, n) = (1.0 + lam_f) * hf / (pf * hf + s2) - zeta_f - duals.eta;
      continue;
    }
    const double hs = sc.gain_second;
    const double ps = powers.at(sc.second, n);
    const double pn = pf + ps;
    const double ef = expansion.at(sc.first, n);
    const double es = floored(expansion.at(sc.second, n));
    const double lam_s = duals.lambda[sc.sp_second];
    const double zeta_s = duals.zeta[sc.second * inst.num_subcarriers + n];
    const double gamma_n = duals.gamma[n];
    g.at(sc.first, n) = (1.0 + lam_f) * hf / (pf * hf + s2) +
                        (1.0 + lam_s) * (hs / (pn * hs + s2) - hs / (ef * hs + s2)) +
                        v / floored(pf) - gamma_n * hf / s2 - zeta_f - duals.eta;
    g.at(sc.second, n) = (1.0 + lam_s) * hs / (pn * hs + s2) - v * hf / (es * hf + s2) +
                         gamma_n * hf / s2 - zeta_s - duals.eta;
  }
  return g;
}

ClosedFormContext make_closed_form_context(const NetworkInstance& inst,
                                           const ChannelRealization& h,
                                           const SubcarrierAssignment& assignment, int n,
                                           const PowerMatrix& expansion,
                                           const DualVariables& duals) {
  CompiledSubc sc;
  sc.mode = assignment.mode;
  sc.first = assignment.first;
  sc.second = assignment.second;
  if (sc.first >= 0) {
    sc.sp_first = inst.sp_of[sc.first];
    sc.gain_first = h.at(sc.first, n);
  }
  if (sc.second >= 0) {
    sc.sp_second = inst.sp_of[sc.second];
    sc.gain_second = h.at(sc.second, n);
  }
  return make_ctx(inst, sc, n, expansion, duals);
}

SubcarrierPowers closed_form_update(const ClosedFormContext& ctx, const DualVariables& duals,
                                    SubcarrierMode mode) {
  SubcarrierPowers out;
  if (mode == SubcarrierMode::Idle) return out;
  const double s2 = ctx.noise_var;
  const double cap = ctx.power_cap;
  auto lam = [&](int sp) {
    return (sp >= 0 && sp < static_cast<int>(duals.lambda.size())) ? duals.lambda[sp] : 0.0;
  };

  if (mode == SubcarrierMode::Oma) {
    const double d = ctx.d_first;
    if (d >= -1e-18) {
      out.first = cap;  // no binding multiplier: the log always wants more power
    } else {
      out.first = std::clamp(-(1.0 + lam(ctx.sp_first)) / d - s2 / ctx.gain_first, 0.0, cap);
    }
    return out;
  }

  // Pair total from the second user's water-filling form.
  const double lam_s = lam(ctx.sp_second);
  double pair_total;
  if (ctx.d_second >= -1e-18) {
    pair_total = cap;
  } else {
    pair_total = std::clamp(-(1.0 + lam_s) / ctx.d_second - s2 / ctx.gain_second, 0.0, cap);
  }
  if (pair_total <= 2.0 * kMinActivePower) {
    out.first = out.second = 0.5 * pair_total;
    return out;
  }

  // Split: quadratic stationarity for the first user's share.
  const double lam_f = lam(ctx.sp_first);
  const double hf = ctx.gain_first;
  const double v = ctx.cost_sinr;
  const double qa = ctx.q * hf;
  const double qb = hf * (1.0 + lam_f + v) + s2 * ctx.q;
  const double qc = v * s2;
  const double lo = kMinActivePower;
  const double hi = pair_total - kMinActivePower;

  double roots[2];
  int num_roots = 0;
  if (std::abs(qa) < 1e-12 * std::max(1.0, std::abs(qb))) {
    if (qb != 0.0) roots[num_roots++] = -qc / qb;
  } else {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double qq = -0.5 * (qb + (qb >= 0.0 ? sq : -sq));
      if (qq != 0.0) {
        roots[num_roots++] = qq / qa;
        if (qc != 0.0) roots[num_roots++] = qc / qq;
      } else {
        roots[num_roots++] = 0.0;
      }
    }
  }

  double best_p = -1.0, best_val = 0.0;
  for (int i = 0; i < num_roots; ++i) {
    const double r = roots[i];
    if (!(r > lo && r < hi)) continue;
    const double val = pair_split_value(ctx, lam_f, r);
    if (best_p < 0.0 || val > best_val + 1e-15 ||
        (std::abs(val - best_val) <= 1e-15 && r < best_p)) {
      best_p = r;
      best_val = val;
    }
  }
  if (best_p < 0.0) {
    out.boundary_fallback = true;
    const double v_lo = pair_split_value(ctx, lam_f, lo);
    const double v_hi = pair_split_value(ctx, lam_f, hi);
    best_p = v_lo >= v_hi ? lo : hi;
  }
  out.first = best_p;
  out.second = pair_total - best_p;
  return out;
}

DualVariables dual_ascent_step(const NetworkInstance& inst, const ChannelRealization& h,
                               const AccessDecision& decision, const PowerMatrix& powers,
                               const DualVariables& duals, double step_size,
                               const PowerMatrix* expansion) {
  const Compiled c = compile(inst, h, decision);
  DualVariables next = duals;
  if (next.lambda.empty()) next.lambda.assign(inst.num_providers, 0.0);
  if (next.gamma.empty()) next.gamma.assign(inst.num_subcarriers, 0.0);
  if (next.zeta.empty())
    next.zeta.assign(static_cast<std::size_t>(inst.num_users) * inst.num_subcarriers, 0.0);
  std::vector<double> scratch;
  dual_step_inplace(inst, c, powers, expansion ? *expansion : powers, step_size,
                    1.0 / std::log(inst.log_base), scratch, next);
  return next;
}

PowerResult dc_power_allocation(const NetworkInstance& inst, const ChannelRealization& h,
                                const AccessDecision& decision, const PowerMatrix& init,
                                const PowerConfig& cfg) {
  const Compiled c = compile(inst, h, decision);
  const int num_users = inst.num_users;
  const int num_subc = inst.num_subcarriers;
  const double inv_ln_base = 1.0 / std::log(inst.log_base);

  PowerResult result;
  result.powers = PowerMatrix(num_users, num_subc);
  PowerMatrix& p = result.powers;

  // Warm start: previous powers on assigned entries, a uniform share where
  // the entry is new, scaled into the budget.
  const double fresh = inst.power_budget / (2.0 * num_subc);
  for (int n = 0; n < num_subc; ++n) {
    const CompiledSubc& sc = c.subc[n];
    if (sc.first >= 0) {
      double w = sc.first < init.num_users && n < init.num_subcarriers ? init.at(sc.first, n) : 0.0;
      p.at(sc.first, n) = w > 0.0 ? w : fresh;
    }
    if (sc.second >= 0) {
      double w = sc.second < init.num_users && n < init.num_subcarriers ? init.at(sc.second, n) : 0.0;
      p.at(sc.second, n) = w > 0.0 ? w : fresh;
    }
  }
  project_budget(c, inst.power_budget, p);
  if (c.active_entries == 0) {
    result.converged = true;
    result.duals.lambda.assign(inst.num_providers, 0.0);
    result.duals.gamma.assign(num_subc, 0.0);
    result.duals.zeta.assign(static_cast<std::size_t>(num_users) * num_subc, 0.0);
    return result;
  }

  DualVariables duals;
  duals.lambda.assign(inst.num_providers, 0.0);
  duals.gamma.assign(num_subc, 0.0);
  duals.zeta.assign(static_cast<std::size_t>(num_users) * num_subc, 0.0);
  {
    // All-entries-active water-level estimate keeps the first subgradient
    // sweeps from overshooting.
    double denom = inst.power_budget;
    for (int n = 0; n < num_subc; ++n) {
      const CompiledSubc& sc = c.subc[n];
      if (sc.first >= 0) denom += inst.noise_var / sc.gain_first;
      if (sc.second >= 0) denom += inst.noise_var / sc.gain_second;
    }
    duals.eta = c.active_entries / denom;
  }

  PowerMatrix expansion = p;
  PowerMatrix p_before(num_users, num_subc);
  PowerMatrix gradient(num_users, num_subc);
  std::vector<double> sp_scratch;
  DualVariables duals_before = duals;

  double current_obj = true_objective_nats(inst, c, p);

  for (int t2 = 1; t2 <= cfg.max_dc_iters; ++t2) {
    long inner = 0;
    for (inner = 1; inner <= cfg.max_dual_iters; ++inner) {
      const double step = cfg.step_a / (cfg.step_b + inner);
      p_before.p = p.p;
      duals_before = duals;
      primal_update(inst, c, expansion, duals, p);
      dual_step_inplace(inst, c, p, expansion, step, inv_ln_base, sp_scratch, duals);

      double delta = std::abs(duals.eta - duals_before.eta);
      for (std::size_t i = 0; i < p.p.size(); ++i)
        delta = std::max(delta, std::abs(p.p[i] - p_before.p[i]));
      for (std::size_t i = 0; i < duals.lambda.size(); ++i)
        delta = std::max(delta, std::abs(duals.lambda[i] - duals_before.lambda[i]));
      for (std::size_t i = 0; i < duals.gamma.size(); ++i)
        delta = std::max(delta, std::abs(duals.gamma[i] - duals_before.gamma[i]));

      if (cfg.collect_trace) {
        PowerTraceRow row;
        row.dc_iter = t2;
        row.inner_iter = inner;
        row.surrogate = surrogate_nats(inst, c, p, expansion) * inv_ln_base;
        row.objective = true_objective_nats(inst, c, p) * inv_ln_base;
        row.max_violation = max_violation(inst, c, p, inv_ln_base, sp_scratch);
        row.dual_norm = dual_inf_norm(duals);
        result.trace.push_back(row);
      }
      if (delta < cfg.eps_inner) break;
    }
    result.inner_iters += std::min<long>(inner, cfg.max_dual_iters);
    // Leave the primal consistent with the final multipliers.
    primal_update(inst, c, expansion, duals, p);

    double cand_obj = true_objective_nats(inst, c, p);
    if (cand_obj + 1e-12 < current_obj) {
      // The inner solve lost ground on the true objective; take one ascending
      // surrogate step from the expansion point instead.
      surrogate_gradient(inst, c, expansion, expansion, gradient);
      const double j0 = surrogate_nats(inst, c, expansion, expansion);
      bool improved = false;
      double t = 1.0;
      for (int bt = 0; bt < 40; ++bt, t *= 0.5) {
        p.p = expansion.p;
        for (std::size_t i = 0; i < p.p.size(); ++i) p.p[i] += t * gradient.p[i];
        project_budget(c, inst.power_budget, p);
        if (surrogate_nats(inst, c, p, expansion) > j0 + 1e-12) {
          improved = true;
          break;
        }
      }
      if (!improved) {
        p.p = expansion.p;
        result.dc_iters = t2;
        result.converged = true;
        break;
      }
      cand_obj = true_objective_nats(inst, c, p);
    }

    double diff = 0.0;
    for (std::size_t i = 0; i < p.p.size(); ++i)
      diff = std::max(diff, std::abs(p.p[i] - expansion.p[i]));
    current_obj = cand_obj;
    result.dc_iters = t2;
    if (diff <= cfg.eps_power) {
      result.converged = true;
      break;
    }
    expansion.p = p.p;
  }

  result.duals = duals;
  result.objective = current_obj * inv_ln_base;
  return result;
}

void write_trace(std::ostream& os, const std::vector<PowerTraceRow>& trace) {
  char buf[160];
  for (const PowerTraceRow& r : trace) {
    std::snprintf(buf, sizeof buf, "dc %d inner %ld objective %.10g surrogate %.10g violation %.3e duals %.3e",
                  r.dc_iter, r.inner_iter, r.objective, r.surrogate, r.max_violation, r.dual_norm);
    os << buf << '\n';
  }
}

}  // namespace dmas
