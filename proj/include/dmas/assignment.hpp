// SPDX-License-Identifier: Apache-2.0
//
// Step-1 technology selection and subcarrier assignment: builds the linear
// integer program over (alpha, u, beta) for powers fixed at the previous
// iteration, and solves it exactly.
#pragma once

#include <vector>

#include "dmas/milp.hpp"
#include "dmas/netmodel.hpp"

namespace dmas {

enum class AccessMode { Hybrid, PureOma, PureNoma };

const char* to_string(AccessMode mode);

/// Linearized Step-1 problem: rate/cost coefficient tables at the previous
/// powers plus variable index maps of the (alpha, u, beta) integer program.
/// Pairs violating the gain ordering (h_second > h_first) are eliminated.
struct Step1Problem {
  int num_users = 0, num_subcarriers = 0, num_providers = 0;
  AccessMode mode = AccessMode::Hybrid;
  std::vector<int> sp_of;
  std::vector<double> min_rate;
  double cost_const = 0.0;  // A, charged per NOMA subcarrier

  std::vector<double> oma_rate;     // K*N: Y1 at previous powers
  std::vector<double> pair_rate;    // K*K*N: Y2(first k, second k2)
  std::vector<double> pair_cost;    // K*K*N: V*log((h1 p2 + s2)/(h1 p1))
  std::vector<std::uint8_t> pair_valid;  // K*K*N
  std::vector<double> gains;        // K*N copy, for ordering checks / tie rows
  std::vector<std::uint8_t> noma_capable;  // per subcarrier: any valid pair

  // Variable index maps of the paper-variable MILP.
  std::vector<int> alpha_var;  // K*N
  std::vector<int> u_var;      // K*K*N, -1 when eliminated
  std::vector<int> beta_var;   // N
  int num_vars = 0;

  std::size_t kkn(int k, int k2, int n) const {
    return (static_cast<std::size_t>(k) * num_users + k2) * num_subcarriers + n;
  }
  std::size_t kn(int k, int n) const {
    return static_cast<std::size_t>(k) * num_subcarriers + n;
  }

  /// Materializes the full (alpha, u, beta) binary program: the linearized
  /// objective plus the u-alpha and u-beta linking rows, the per-SP rate
  /// floors, gain-ordering rows for exactly-tied pairs, the one-pair and
  /// one-first-user cardinality rows and the beta linkage equalities.
  milp::MilpProblem to_milp() const;
};

/// Builds the Step-1 problem at prev_powers (iteration t-1). An all-zero
/// power matrix would zero every rate coefficient, so it is replaced by a
/// uniform P_max/(2N) per potential user. The mode fixes beta: PureOma
/// forces beta = 0 everywhere, PureNoma forces beta = 1 wherever a valid
/// pair exists (subcarriers without one fall back to OMA).
Step1Problem build_step1(const NetworkInstance& inst, const ChannelRealization& h,
                         const PowerMatrix& prev_powers, AccessMode mode = AccessMode::Hybrid);

struct Step1Result {
  milp::SolveStatus status = milp::SolveStatus::Infeasible;
  AccessDecision decision;
  double objective = 0.0;
  long nodes = 0;
  long lp_iterations = 0;
  int forced_oma_fallbacks = 0;  // PureNoma subcarriers that had no valid pair
};

/// Exact solve. The paper-variable program decomposes into one choice per
/// subcarrier (idle, an OMA user, or an ordered pair) coupled only by the
/// per-SP rate rows, so the solver runs branch-and-bound on that equivalent
/// multiple-choice form and expands the winner back to (alpha, u, beta).
Step1Result solve_step1(const Step1Problem& prob, double milp_tol = 1e-7,
                        long node_limit = 200000);

}  // namespace dmas
