// SPDX-License-Identifier: Apache-2.0

#include "dmas/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dmas {

namespace {

double floored(double p) { return std::max(p, kMinActivePower); }

}  // namespace

const char* to_string(AccessMode mode) {
  switch (mode) {
    case AccessMode::Hybrid: return "hybrid";
    case AccessMode::PureOma: return "oma";
    case AccessMode::PureNoma: return "noma";
  }
  return "?";
}

Step1Problem build_step1(const NetworkInstance& inst, const ChannelRealization& h,
                         const PowerMatrix& prev_powers, AccessMode mode) {
  inst.validate();
  const int num_users = inst.num_users, num_subc = inst.num_subcarriers;

  Step1Problem prob;
  prob.num_users = num_users;
  prob.num_subcarriers = num_subc;
  prob.num_providers = inst.num_providers;
  prob.mode = mode;
  prob.sp_of = inst.sp_of;
  prob.min_rate = inst.min_rate;
  prob.cost_const = inst.cost_const;
  prob.gains = h.gain;
  prob.oma_rate.assign(static_cast<std::size_t>(num_users) * num_subc, 0.0);
  prob.pair_rate.assign(static_cast<std::size_t>(num_users) * num_users * num_subc, 0.0);
  prob.pair_cost.assign(prob.pair_rate.size(), 0.0);
  prob.pair_valid.assign(prob.pair_rate.size(), 0);
  prob.noma_capable.assign(num_subc, 0);

  // An all-zero previous power matrix would zero every coefficient; fall
  // back to a uniform share per potential user.
  bool all_zero = true;
  for (double v : prev_powers.p)
    if (v != 0.0) {
      all_zero = false;
      break;
    }
  const double uniform = inst.power_budget / (2.0 * num_subc);
  auto prev = [&](int k, int n) { return all_zero ? uniform : prev_powers.at(k, n); };

  const double inv_ln_base = 1.0 / std::log(inst.log_base);
  const double s2 = inst.noise_var;
  for (int k = 0; k < num_users; ++k)
    for (int n = 0; n < num_subc; ++n)
      prob.oma_rate[prob.kn(k, n)] = std::log1p(prev(k, n) * h.at(k, n) / s2) * inv_ln_base;

  for (int n = 0; n < num_subc; ++n) {
    for (int k = 0; k < num_users; ++k) {
      for (int k2 = 0; k2 < num_users; ++k2) {
        if (k2 == k) continue;
        if (h.at(k2, n) > h.at(k, n)) continue;  // ordering-violating pair eliminated
        const std::size_t idx = prob.kkn(k, k2, n);
        prob.pair_valid[idx] = 1;
        prob.noma_capable[n] = 1;
        const double p1 = prev(k, n), p2 = prev(k2, n);
        prob.pair_rate[idx] =
            std::log1p(p2 * h.at(k2, n) / (p1 * h.at(k2, n) + s2)) * inv_ln_base;
        prob.pair_cost[idx] =
            inst.cost_sinr *
            std::log((h.at(k, n) * floored(p2) + s2) / (h.at(k, n) * floored(p1))) * inv_ln_base;
        if (!std::isfinite(prob.pair_rate[idx]) || !std::isfinite(prob.pair_cost[idx]))
          throw std::invalid_argument("step-1 coefficient is not finite");
      }
    }
  }

  // Variable numbering: alpha_kk blocks, then surviving u's, then beta.
  prob.alpha_var.assign(static_cast<std::size_t>(num_users) * num_subc, -1);
  prob.u_var.assign(prob.pair_rate.size(), -1);
  prob.beta_var.assign(num_subc, -1);
  int next = 0;
  for (int k = 0; k < num_users; ++k)
    for (int n = 0; n < num_subc; ++n) prob.alpha_var[prob.kn(k, n)] = next++;
  for (int k = 0; k < num_users; ++k)
    for (int k2 = 0; k2 < num_users; ++k2)
      for (int n = 0; n < num_subc; ++n)
        if (k != k2 && prob.pair_valid[prob.kkn(k, k2, n)]) prob.u_var[prob.kkn(k, k2, n)] = next++;
  for (int n = 0; n < num_subc; ++n) prob.beta_var[n] = next++;
  prob.num_vars = next;
  return prob;
}

milp::MilpProblem Step1Problem::to_milp() const {
  milp::MilpProblem mp;
  milp::LinearProgram& lp = mp.lp;
  lp.num_vars = num_vars;
  lp.objective.assign(num_vars, 0.0);
  lp.lower.assign(num_vars, 0.0);
  lp.upper.assign(num_vars, 1.0);
  mp.binary_vars.resize(num_vars);
  for (int j = 0; j < num_vars; ++j) mp.binary_vars[j] = j;

  for (int k = 0; k < num_users; ++k)
    for (int n = 0; n < num_subcarriers; ++n)
      lp.objective[alpha_var[kn(k, n)]] = oma_rate[kn(k, n)];
  for (int k = 0; k < num_users; ++k)
    for (int k2 = 0; k2 < num_users; ++k2)
      for (int n = 0; n < num_subcarriers; ++n) {
        if (k == k2) continue;
        const std::size_t idx = kkn(k, k2, n);
        if (u_var[idx] >= 0) lp.objective[u_var[idx]] = pair_rate[idx] - pair_cost[idx];
      }
  for (int n = 0; n < num_subcarriers; ++n) lp.objective[beta_var[n]] = -cost_const;

  auto add_ub = [&](std::vector<double> row, double rhs) {
    lp.a_ub.push_back(std::move(row));
    lp.b_ub.push_back(rhs);
  };

  // u <= alpha_kk and u <= beta linking rows, per surviving pair.
  for (int k = 0; k < num_users; ++k)
    for (int k2 = 0; k2 < num_users; ++k2)
      for (int n = 0; n < num_subcarriers; ++n) {
        if (k == k2) continue;
        const std::size_t idx = kkn(k, k2, n);
        if (u_var[idx] < 0) continue;
        std::vector<double> row(num_vars, 0.0);
        row[u_var[idx]] = 1.0;
        row[alpha_var[kn(k, n)]] = -1.0;
        add_ub(std::move(row), 0.0);
        std::vector<double> row2(num_vars, 0.0);
        row2[u_var[idx]] = 1.0;
        row2[beta_var[n]] = -1.0;
        add_ub(std::move(row2), 0.0);
      }

  // Per-SP rate floors (>= rows negated), skipped when trivially satisfied.
  for (int s = 0; s < num_providers; ++s) {
    if (min_rate[s] <= 0.0) continue;
    std::vector<double> row(num_vars, 0.0);
    for (int k = 0; k < num_users; ++k) {
      if (sp_of[k] != s) continue;
      for (int n = 0; n < num_subcarriers; ++n) {
        row[alpha_var[kn(k, n)]] -= oma_rate[kn(k, n)];
        for (int k1 = 0; k1 < num_users; ++k1) {
          if (k1 == k) continue;
          const std::size_t idx = kkn(k1, k, n);
          if (u_var[idx] >= 0) row[u_var[idx]] -= pair_rate[idx];
        }
      }
    }
    add_ub(std::move(row), -min_rate[s]);
  }

  // Gain-ordering rows survive only for exact ties, where they are
  // permissive; kept for completeness of the encoding.
  for (int k = 0; k < num_users; ++k)
    for (int k2 = 0; k2 < num_users; ++k2)
      for (int n = 0; n < num_subcarriers; ++n) {
        if (k == k2) continue;
        const std::size_t idx = kkn(k, k2, n);
        if (u_var[idx] < 0) continue;
        const double hk = gains[kn(k, n)], hk2 = gains[kn(k2, n)];
        if (hk2 == hk) {
          std::vector<double> row(num_vars, 0.0);
          row[u_var[idx]] = hk2 / hk;
          add_ub(std::move(row), 1.0);
        }
      }

  for (int n = 0; n < num_subcarriers; ++n) {
    std::vector<double> one_pair(num_vars, 0.0);
    std::vector<double> beta_link(num_vars, 0.0);
    std::vector<double> one_first(num_vars, 0.0);
    for (int k = 0; k < num_users; ++k) {
      one_first[alpha_var[kn(k, n)]] = 1.0;
      for (int k2 = 0; k2 < num_users; ++k2) {
        if (k == k2) continue;
        const std::size_t idx = kkn(k, k2, n);
        if (u_var[idx] < 0) continue;
        one_pair[u_var[idx]] = 1.0;
        beta_link[u_var[idx]] = 1.0;
      }
    }
    add_ub(std::move(one_pair), 1.0);
    beta_link[beta_var[n]] = -1.0;  // sum u - beta = 0
    lp.a_eq.push_back(std::move(beta_link));
    lp.b_eq.push_back(0.0);
    add_ub(std::move(one_first), 1.0);
  }

  // Mode forcing via bounds.
  if (mode == AccessMode::PureOma) {
    for (int n = 0; n < num_subcarriers; ++n) lp.upper[beta_var[n]] = 0.0;
    for (int v : u_var)
      if (v >= 0) lp.upper[v] = 0.0;
  } else if (mode == AccessMode::PureNoma) {
    for (int n = 0; n < num_subcarriers; ++n) {
      if (noma_capable[n]) lp.lower[beta_var[n]] = 1.0;
      else lp.upper[beta_var[n]] = 0.0;
    }
  }
  return mp;
}

Step1Result solve_step1(const Step1Problem& prob, double milp_tol, long node_limit) {
  const int num_users = prob.num_users, num_subc = prob.num_subcarriers;
  const int num_sp = prob.num_providers;

  // The (alpha, u, beta) program picks at most one option per subcarrier:
  // an OMA user or an ordered pair (idle = the choice row's slack). Solve
  // that equivalent multiple-choice form; only the per-SP rate rows couple
  // subcarriers.
  struct Option {
    int first, second;  // second = -1 for OMA
    double value;
  };
  std::vector<std::vector<Option>> options(num_subc);
  Step1Result result;

  for (int n = 0; n < num_subc; ++n) {
    const bool pure_noma_here = prob.mode == AccessMode::PureNoma && prob.noma_capable[n];
    if (prob.mode == AccessMode::PureNoma && !prob.noma_capable[n]) ++result.forced_oma_fallbacks;
    if (!pure_noma_here) {
      for (int k = 0; k < num_users; ++k)
        options[n].push_back({k, -1, prob.oma_rate[prob.kn(k, n)]});
    }
    if (prob.mode != AccessMode::PureOma) {
      for (int k = 0; k < num_users; ++k)
        for (int k2 = 0; k2 < num_users; ++k2) {
          if (k == k2) continue;
          const std::size_t idx = prob.kkn(k, k2, n);
          if (!prob.pair_valid[idx]) continue;
          options[n].push_back({k, k2,
                                prob.oma_rate[prob.kn(k, n)] + prob.pair_rate[idx] -
                                    prob.pair_cost[idx] - prob.cost_const});
        }
    }
  }

  milp::MilpProblem mp;
  milp::LinearProgram& lp = mp.lp;
  int total = 0;
  std::vector<int> offset(num_subc, 0);
  for (int n = 0; n < num_subc; ++n) {
    offset[n] = total;
    total += static_cast<int>(options[n].size());
  }
  lp.num_vars = total;
  lp.objective.assign(total, 0.0);
  lp.lower.assign(total, 0.0);
  lp.upper.assign(total, 1.0);
  mp.binary_vars.resize(total);
  for (int j = 0; j < total; ++j) mp.binary_vars[j] = j;

  for (int n = 0; n < num_subc; ++n)
    for (std::size_t i = 0; i < options[n].size(); ++i)
      lp.objective[offset[n] + i] = options[n][i].value;

  for (int n = 0; n < num_subc; ++n) {
    std::vector<double> row(total, 0.0);
    for (std::size_t i = 0; i < options[n].size(); ++i) row[offset[n] + i] = 1.0;
    const bool exactly_one = prob.mode == AccessMode::PureNoma && prob.noma_capable[n];
    if (exactly_one) {
      lp.a_eq.push_back(std::move(row));
      lp.b_eq.push_back(1.0);
    } else {
      lp.a_ub.push_back(std::move(row));
      lp.b_ub.push_back(1.0);
    }
  }
  for (int s = 0; s < num_sp; ++s) {
    if (prob.min_rate[s] <= 0.0) continue;
    std::vector<double> row(total, 0.0);
    for (int n = 0; n < num_subc; ++n) {
      for (std::size_t i = 0; i < options[n].size(); ++i) {
        const Option& o = options[n][i];
        double contrib = 0.0;
        if (prob.sp_of[o.first] == s) contrib += prob.oma_rate[prob.kn(o.first, n)];
        if (o.second >= 0 && prob.sp_of[o.second] == s)
          contrib += prob.pair_rate[prob.kkn(o.first, o.second, n)];
        if (contrib != 0.0) row[offset[n] + i] = -contrib;
      }
    }
    lp.a_ub.push_back(std::move(row));
    lp.b_ub.push_back(-prob.min_rate[s]);
  }

  milp::MilpSolution sol = milp::solve_milp(mp, milp_tol, node_limit);
  result.status = sol.status;
  result.nodes = sol.node_count;
  result.lp_iterations = sol.lp_iterations;
  if (sol.status != milp::SolveStatus::Optimal && sol.status != milp::SolveStatus::IterationLimit)
    return result;
  if (sol.x.empty()) {
    result.status = milp::SolveStatus::Infeasible;
    return result;
  }

  std::vector<SubcarrierAssignment> chosen(num_subc);
  for (int n = 0; n < num_subc; ++n) {
    for (std::size_t i = 0; i < options[n].size(); ++i) {
      if (sol.x[offset[n] + i] < 0.5) continue;
      const Option& o = options[n][i];
      chosen[n].mode = o.second >= 0 ? SubcarrierMode::Noma : SubcarrierMode::Oma;
      chosen[n].first = o.first;
      chosen[n].second = o.second;
      break;
    }
  }
  result.decision = AccessDecision::from_assignments(num_users, chosen);
  result.objective = sol.objective;

  ChannelRealization view;
  view.num_users = num_users;
  view.num_subcarriers = num_subc;
  view.gain = prob.gains;
  result.decision.validate(view);
  return result;
}

}  // namespace dmas
