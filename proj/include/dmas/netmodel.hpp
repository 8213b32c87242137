// SPDX-License-Identifier: Apache-2.0
//
// Domain model for joint OMA/NOMA access selection, user assignment and
// downlink power allocation: problem data, channel generation, and exact
// evaluators for rates, NOMA processing cost, utility and every constraint
// of the master problem.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace dmas {

/// Smallest power treated as "on" inside logarithmic cost terms. Assigned
/// powers are floored at this value when a log argument would otherwise
/// vanish; it is a numerical guard, not a physical parameter.
inline constexpr double kMinActivePower = 1e-9;

/// Static problem data. Rates and both cost coefficients are expressed in
/// log_base units (base 2 by default, so rates read as bps/Hz). The cost
/// coefficients A and V are stored already scaled by the utility weight.
struct NetworkInstance {
  int num_users = 0;        // K
  int num_subcarriers = 0;  // N
  int num_providers = 0;    // S
  std::vector<int> sp_of;   // user -> service-provider index, size K
  std::vector<double> min_rate;  // per-SP rate floor R_s, size S
  double power_budget = 0.0;     // P_max [W]
  double sic_separation = 0.0;   // P_d, (h/sigma^2)-scaled received-power gap
  double noise_var = 1.0;        // sigma^2
  double cost_const = 0.0;       // A, charged once per NOMA subcarrier
  double cost_sinr = 0.0;        // V, scales the inverse-SINR log cost
  double log_base = 2.0;

  /// Throws std::invalid_argument on any violated structural invariant.
  void validate() const;

  /// Users grouped by provider (each group non-empty after validate()).
  std::vector<std::vector<int>> users_by_provider() const;
};

/// Path-loss + Rayleigh channel model parameters.
struct ChannelModelParams {
  double pathloss_exp = 3.0;   // alpha in d^-alpha
  double area_side = 1.0;      // square cell side length
  double edge_fraction = 0.0;  // fraction of users confined to the cell edge
  std::uint64_t seed = 0;

  void validate() const;
};

/// One channel draw: per-user/per-subcarrier power gains, plus the user
/// positions they were derived from (kept for serialization and debugging).
struct ChannelRealization {
  int num_users = 0;
  int num_subcarriers = 0;
  std::vector<double> gain;  // K*N, row-major
  std::vector<double> user_x, user_y;

  double at(int k, int n) const { return gain[static_cast<std::size_t>(k) * num_subcarriers + n]; }
  double& at(int k, int n) { return gain[static_cast<std::size_t>(k) * num_subcarriers + n]; }
};

/// Nonnegative transmit powers, K x N.
struct PowerMatrix {
  int num_users = 0;
  int num_subcarriers = 0;
  std::vector<double> p;  // K*N, row-major

  PowerMatrix() = default;
  PowerMatrix(int users, int subcarriers, double fill = 0.0)
      : num_users(users),
        num_subcarriers(subcarriers),
        p(static_cast<std::size_t>(users) * subcarriers, fill) {}

  double at(int k, int n) const { return p[static_cast<std::size_t>(k) * num_subcarriers + n]; }
  double& at(int k, int n) { return p[static_cast<std::size_t>(k) * num_subcarriers + n]; }
};

enum class SubcarrierMode { Idle, Oma, Noma };

/// Compact per-subcarrier view of an AccessDecision.
struct SubcarrierAssignment {
  SubcarrierMode mode = SubcarrierMode::Idle;
  int first = -1;   // OMA user, or NOMA first (SIC-capable, higher-gain) user
  int second = -1;  // NOMA second user, -1 otherwise
};

/// Binary decision variables: alpha (assignment/pairing), beta (technology
/// per subcarrier) and the auxiliary product u = beta * alpha_kk * alpha_kk2.
struct AccessDecision {
  int num_users = 0;
  int num_subcarriers = 0;
  std::vector<std::uint8_t> alpha;  // K*K*N
  std::vector<std::uint8_t> u;      // K*K*N
  std::vector<std::uint8_t> beta;   // N

  bool alpha_at(int k, int k2, int n) const { return alpha[tensor_index(k, k2, n)] != 0; }
  bool u_at(int k, int k2, int n) const { return u[tensor_index(k, k2, n)] != 0; }
  bool beta_at(int n) const { return beta[static_cast<std::size_t>(n)] != 0; }

  std::size_t tensor_index(int k, int k2, int n) const {
    return (static_cast<std::size_t>(k) * num_users + k2) * num_subcarriers + n;
  }

  static AccessDecision from_assignments(int num_users,
                                         const std::vector<SubcarrierAssignment>& per_subcarrier);

  /// Per-subcarrier view; throws std::logic_error if the tensors do not
  /// encode a valid one-option-per-subcarrier structure.
  std::vector<SubcarrierAssignment> assignments() const;

  /// Full invariant check (cardinality, u reconstruction, gain ordering).
  /// Throws std::logic_error with a description of the first violation.
  void validate(const ChannelRealization& h) const;
};

/// Slack bookkeeping for the master problem's constraint set. A slack is the
/// amount by which a constraint is satisfied; feasible means every slack is
/// >= -tolerance and every discrete violation count is zero.
struct ConstraintReport {
  std::vector<double> sp_rate_slack;  // per SP: rate_s - R_s
  std::vector<double> sic_slack;      // per subcarrier: beta*((h1/s2)(p2-p1) - Pd)
  int ordering_violations = 0;        // pairs with h_second > h_first
  int cardinality_violations = 0;     // one-first-user / one-pair / beta linkage
  int power_link_violations = 0;      // positive power on unassigned (k,n)
  double total_power_slack = 0.0;     // P_max - assigned power total
  double tolerance = 0.0;
  bool feasible = false;
};

/// Draws user positions and Rayleigh fading, returning h_{k,n} = d_k^-alpha * s_{k,n}.
/// round(edge_fraction*K) users are confined to the edge region (outside the
/// centered half-side square), the rest to the central square. Deterministic
/// given params.seed.
ChannelRealization generate_instance(const ChannelModelParams& params,
                                     const NetworkInstance& topology);

/// Per-subcarrier rate R_n: OMA/first-user term plus beta-gated second-user
/// term, logs in inst.log_base.
double subcarrier_rate(const NetworkInstance& inst, const ChannelRealization& h,
                       const AccessDecision& decision, const PowerMatrix& powers, int n);

/// Aggregate rate of provider s's users (first-user and second-user roles).
double sp_rate(const NetworkInstance& inst, const ChannelRealization& h,
               const AccessDecision& decision, const PowerMatrix& powers, int s);

/// NOMA processing cost F_n = A + V*sum log((h1 p2 + s2)/(h1 p1)) for the
/// active pair; the caller gates by beta_n. Active powers are floored at
/// kMinActivePower inside the log.
double noma_cost(const NetworkInstance& inst, const ChannelRealization& h,
                 const AccessDecision& decision, const PowerMatrix& powers, int n);

/// sum_n R_n - sum_n beta_n F_n.
double total_utility(const NetworkInstance& inst, const ChannelRealization& h,
                     const AccessDecision& decision, const PowerMatrix& powers);

/// sum_n R_n.
double total_rate(const NetworkInstance& inst, const ChannelRealization& h,
                  const AccessDecision& decision, const PowerMatrix& powers);

/// Evaluates every master-problem constraint at (decision, powers).
/// Infeasibility is data, not an error.
ConstraintReport check_feasibility(const NetworkInstance& inst, const ChannelRealization& h,
                                   const AccessDecision& decision, const PowerMatrix& powers,
                                   double tol);

/// Line-oriented text serialization of an instance plus one realization.
/// Header `K N S sigma2 Pmax Pd A V logbase`, then S lines `s R_s`, K lines
/// `k sp x y`, and K*N lines `k n h`; decimals use 17 significant digits so
/// doubles round-trip exactly.
void save_instance(std::ostream& os, const NetworkInstance& inst, const ChannelRealization& h);
std::pair<NetworkInstance, ChannelRealization> load_instance(std::istream& is);

namespace rng {

/// SplitMix64 step; used for seed derivation so parallel trials get
/// independent streams from (master seed, trial index).
std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministic stream mixer: child seed from a parent seed and indices.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

/// xoshiro256** generator with explicit, platform-independent uniform and
/// exponential transforms (std:: distributions are not reproducible across
/// standard libraries).
class Stream {
 public:
  explicit Stream(std::uint64_t seed);
  std::uint64_t next_u64();
  double next_uniform();      // [0, 1)
  double next_exponential();  // Exp(1), unit mean

 private:
  std::uint64_t s_[4];
};

}  // namespace rng

}  // namespace dmas
