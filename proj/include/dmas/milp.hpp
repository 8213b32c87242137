// SPDX-License-Identifier: Apache-2.0
//
// Dense linear programming (two-phase primal simplex, bounded variables) and
// branch-and-bound binary integer programming. General-purpose: nothing in
// here knows about subcarriers or power.
#pragma once

#include <iosfwd>
#include <limits>
#include <vector>

namespace dmas::milp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// max c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lower <= x <= upper.
/// Lower bounds must be finite; upper bounds may be +inf. Encode >= rows by
/// negating them into A_ub.
struct LinearProgram {
  int num_vars = 0;
  std::vector<double> objective;
  std::vector<std::vector<double>> a_ub;
  std::vector<double> b_ub;
  std::vector<std::vector<double>> a_eq;
  std::vector<double> b_eq;
  std::vector<double> lower, upper;

  void validate() const;  // throws std::invalid_argument on shape errors
};

struct MilpProblem {
  LinearProgram lp;
  std::vector<int> binary_vars;  // indices constrained to {0,1}
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct MilpSolution {
  SolveStatus status = SolveStatus::Infeasible;
  std::vector<double> x;
  double objective = -kInf;
  long node_count = 0;     // LP relaxations solved (1 means root only)
  long lp_iterations = 0;  // simplex pivots, accumulated
  // Row duals from the final basis (LP solves only; empty for MILP results).
  std::vector<double> duals_ub, duals_eq;
};

/// Optimal basic solution of the LP, or Infeasible/Unbounded. Primal simplex
/// with Bland's rule engaged after a degeneracy streak.
MilpSolution solve_lp(const LinearProgram& lp, double tol = 1e-9, long max_iters = 200000);

/// Best-first branch-and-bound on LP relaxations. Branches on the most
/// fractional binary (ties: lowest index); prunes nodes whose bound is at
/// most incumbent + tol. Exhausting node_limit returns the best incumbent
/// flagged IterationLimit.
MilpSolution solve_milp(const MilpProblem& mp, double tol = 1e-7, long node_limit = 200000);

/// Plain-text dump of (c, A, b) and bounds for external cross-checking.
void dump_problem(std::ostream& os, const MilpProblem& mp);

}  // namespace dmas::milp
