// SPDX-License-Identifier: Apache-2.0

#include "dmas/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dmas {

namespace {

[[noreturn]] void fail_invalid(const std::string& msg) { throw std::invalid_argument(msg); }
[[noreturn]] void fail_logic(const std::string& msg) { throw std::logic_error(msg); }

double floored(double power) { return std::max(power, kMinActivePower); }

}  // namespace

void NetworkInstance::validate() const {
  if (num_users < 1 || num_subcarriers < 1 || num_providers < 1)
    fail_invalid("instance requires K >= 1, N >= 1, S >= 1");
  if (static_cast<int>(sp_of.size()) != num_users)
    fail_invalid("sp_of must map every user to a provider");
  if (static_cast<int>(min_rate.size()) != num_providers)
    fail_invalid("min_rate must hold one entry per provider");
  std::vector<int> members(num_providers, 0);
  for (int k = 0; k < num_users; ++k) {
    if (sp_of[k] < 0 || sp_of[k] >= num_providers) fail_invalid("sp_of entry out of range");
    ++members[sp_of[k]];
  }
  for (int s = 0; s < num_providers; ++s)
    if (members[s] == 0) fail_invalid("every provider needs at least one user");
  if (!(power_budget > 0.0)) fail_invalid("power_budget must be positive");
  if (sic_separation < 0.0) fail_invalid("sic_separation must be nonnegative");
  if (!(noise_var > 0.0)) fail_invalid("noise_var must be positive");
  if (cost_const < 0.0 || cost_sinr < 0.0) fail_invalid("cost coefficients must be nonnegative");
  for (double r : min_rate)
    if (r < 0.0) fail_invalid("min_rate entries must be nonnegative");
  if (!(log_base > 1.0)) fail_invalid("log_base must exceed 1");
}

std::vector<std::vector<int>> NetworkInstance::users_by_provider() const {
  std::vector<std::vector<int>> groups(num_providers);
  for (int k = 0; k < num_users; ++k) groups[sp_of[k]].push_back(k);
  return groups;
}

void ChannelModelParams::validate() const {
  if (!(pathloss_exp > 0.0)) fail_invalid("pathloss_exp must be positive");
  if (!(area_side > 0.0)) fail_invalid("area_side must be positive");
  if (edge_fraction < 0.0 || edge_fraction > 1.0) fail_invalid("edge_fraction must be in [0,1]");
}

namespace rng {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  std::uint64_t state = master;
  std::uint64_t x = splitmix64(state);
  state = x ^ (a * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL);
  x = splitmix64(state);
  state = x ^ (b * 0xbf58476d1ce4e5b9ULL + 0x1ce4e5b9ULL);
  return splitmix64(state);
}

Stream::Stream(std::uint64_t seed) {
  // Seed expansion via SplitMix64, the reference-recommended init.
  for (auto& word : s_) word = splitmix64(seed);
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

static inline std::uint64_t rotl64(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t Stream::next_u64() {
  const std::uint64_t result = rotl64(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl64(s_[3], 45);
  return result;
}

double Stream::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Stream::next_exponential() {
  // -log(1-u) with u in [0,1): argument stays in (0,1].
  return -std::log1p(-next_uniform());
}

}  // namespace rng

ChannelRealization generate_instance(const ChannelModelParams& params,
                                     const NetworkInstance& topology) {
  params.validate();
  topology.validate();
  const int num_users = topology.num_users;
  const int num_subcarriers = topology.num_subcarriers;
  const double side = params.area_side;
  const double cx = 0.5 * side, cy = 0.5 * side;  // base station at the cell center
  const double half_central = 0.25 * side;        // central square has side/2

  ChannelRealization out;
  out.num_users = num_users;
  out.num_subcarriers = num_subcarriers;
  out.gain.resize(static_cast<std::size_t>(num_users) * num_subcarriers);
  out.user_x.resize(num_users);
  out.user_y.resize(num_users);

  rng::Stream stream(params.seed);
  const int edge_users = static_cast<int>(std::llround(params.edge_fraction * num_users));

  for (int k = 0; k < num_users; ++k) {
    const bool want_edge = k < edge_users;
    double x = cx, y = cy, dist = 0.0;
    // Rejection sample into the requested region; redraw the measure-zero
    // case of a user exactly at the base station.
    for (;;) {
      x = stream.next_uniform() * side;
      y = stream.next_uniform() * side;
      const bool central = std::abs(x - cx) <= half_central && std::abs(y - cy) <= half_central;
      if (central == want_edge) continue;
      dist = std::hypot(x - cx, y - cy);
      if (dist > 0.0) break;
    }
    out.user_x[k] = x;
    out.user_y[k] = y;
    const double pathloss = std::pow(dist, -params.pathloss_exp);
    for (int n = 0; n < num_subcarriers; ++n) {
      out.at(k, n) = pathloss * stream.next_exponential();
    }
  }
  return out;
}

AccessDecision AccessDecision::from_assignments(
    int num_users, const std::vector<SubcarrierAssignment>& per_subcarrier) {
  AccessDecision d;
  d.num_users = num_users;
  d.num_subcarriers = static_cast<int>(per_subcarrier.size());
  d.alpha.assign(static_cast<std::size_t>(num_users) * num_users * d.num_subcarriers, 0);
  d.u.assign(d.alpha.size(), 0);
  d.beta.assign(d.num_subcarriers, 0);
  for (int n = 0; n < d.num_subcarriers; ++n) {
    const SubcarrierAssignment& a = per_subcarrier[n];
    switch (a.mode) {
      case SubcarrierMode::Idle:
        break;
      case SubcarrierMode::Oma:
        d.alpha[d.tensor_index(a.first, a.first, n)] = 1;
        break;
      case SubcarrierMode::Noma:
        d.alpha[d.tensor_index(a.first, a.first, n)] = 1;
        d.alpha[d.tensor_index(a.first, a.second, n)] = 1;
        d.u[d.tensor_index(a.first, a.second, n)] = 1;
        d.beta[n] = 1;
        break;
    }
  }
  return d;
}

std::vector<SubcarrierAssignment> AccessDecision::assignments() const {
  std::vector<SubcarrierAssignment> out(num_subcarriers);
  for (int n = 0; n < num_subcarriers; ++n) {
    SubcarrierAssignment a;
    for (int k = 0; k < num_users; ++k) {
      if (!alpha_at(k, k, n)) continue;
      if (a.first >= 0) fail_logic("more than one first user on a subcarrier");
      a.first = k;
      a.mode = SubcarrierMode::Oma;
    }
    if (beta_at(n)) {
      if (a.first < 0) fail_logic("NOMA subcarrier without a first user");
      for (int k2 = 0; k2 < num_users; ++k2) {
        if (k2 == a.first || !u_at(a.first, k2, n)) continue;
        if (a.second >= 0) fail_logic("more than one second user on a subcarrier");
        a.second = k2;
        a.mode = SubcarrierMode::Noma;
      }
      if (a.second < 0) fail_logic("beta set without an active pair");
    }
    out[n] = a;
  }
  return out;
}

void AccessDecision::validate(const ChannelRealization& h) const {
  if (h.num_users != num_users || h.num_subcarriers != num_subcarriers)
    fail_logic("decision/realization shape mismatch");
  for (int n = 0; n < num_subcarriers; ++n) {
    int first_users = 0, pairs = 0;
    for (int k = 0; k < num_users; ++k) first_users += alpha_at(k, k, n) ? 1 : 0;
    if (first_users > 1) fail_logic("more than one first user on a subcarrier");
    for (int k = 0; k < num_users; ++k) {
      for (int k2 = 0; k2 < num_users; ++k2) {
        if (k == k2) continue;
        const bool u_set = u_at(k, k2, n);
        const bool expected =
            beta_at(n) && alpha_at(k, k, n) && alpha_at(k, k2, n);
        if (u_set != expected) fail_logic("u does not match beta*alpha*alpha");
        if (u_set) {
          ++pairs;
          if (h.at(k2, n) > h.at(k, n)) fail_logic("pair violates the gain ordering");
        }
      }
    }
    if (pairs > 1) fail_logic("more than one pair on a subcarrier");
    if ((beta_at(n) ? 1 : 0) != pairs) fail_logic("beta inconsistent with pair count");
  }
}

double subcarrier_rate(const NetworkInstance& inst, const ChannelRealization& h,
                       const AccessDecision& decision, const PowerMatrix& powers, int n) {
  const double inv_ln_base = 1.0 / std::log(inst.log_base);
  const double s2 = inst.noise_var;
  double rate = 0.0;
  for (int k = 0; k < inst.num_users; ++k) {
    if (!decision.alpha_at(k, k, n)) continue;
    rate += std::log1p(powers.at(k, n) * h.at(k, n) / s2) * inv_ln_base;
    if (!decision.beta_at(n)) continue;
    for (int k2 = 0; k2 < inst.num_users; ++k2) {
      if (k2 == k || !decision.alpha_at(k, k2, n)) continue;
      const double interference = powers.at(k, n) * h.at(k2, n) + s2;
      rate += std::log1p(powers.at(k2, n) * h.at(k2, n) / interference) * inv_ln_base;
    }
  }
  return rate;
}

double sp_rate(const NetworkInstance& inst, const ChannelRealization& h,
               const AccessDecision& decision, const PowerMatrix& powers, int s) {
  const double inv_ln_base = 1.0 / std::log(inst.log_base);
  const double s2 = inst.noise_var;
  double rate = 0.0;
  for (int k = 0; k < inst.num_users; ++k) {
    if (inst.sp_of[k] != s) continue;
    for (int n = 0; n < inst.num_subcarriers; ++n) {
      if (decision.alpha_at(k, k, n))
        rate += std::log1p(powers.at(k, n) * h.at(k, n) / s2) * inv_ln_base;
      if (!decision.beta_at(n)) continue;
      for (int k1 = 0; k1 < inst.num_users; ++k1) {
        if (k1 == k) continue;
        if (!decision.alpha_at(k1, k, n) || !decision.alpha_at(k1, k1, n)) continue;
        const double interference = powers.at(k1, n) * h.at(k, n) + s2;
        rate += std::log1p(powers.at(k, n) * h.at(k, n) / interference) * inv_ln_base;
      }
    }
  }
  return rate;
}

double noma_cost(const NetworkInstance& inst, const ChannelRealization& h,
                 const AccessDecision& decision, const PowerMatrix& powers, int n) {
  const double inv_ln_base = 1.0 / std::log(inst.log_base);
  double cost = inst.cost_const;
  for (int k = 0; k < inst.num_users; ++k) {
    if (!decision.alpha_at(k, k, n)) continue;
    for (int k2 = 0; k2 < inst.num_users; ++k2) {
      if (k2 == k || !decision.alpha_at(k, k2, n)) continue;
      const double num = h.at(k, n) * floored(powers.at(k2, n)) + inst.noise_var;
      const double den = h.at(k, n) * floored(powers.at(k, n));
      cost += inst.cost_sinr * std::log(num / den) * inv_ln_base;
    }
  }
  return cost;
}

double total_rate(const NetworkInstance& inst, const ChannelRealization& h,
                  const AccessDecision& decision, const PowerMatrix& powers) {
  double sum = 0.0;
  for (int n = 0; n < inst.num_subcarriers; ++n) sum += subcarrier_rate(inst, h, decision, powers, n);
  return sum;
}

double total_utility(const NetworkInstance& inst, const ChannelRealization& h,
                     const AccessDecision& decision, const PowerMatrix& powers) {
  double sum = 0.0;
  for (int n = 0; n < inst.num_subcarriers; ++n) {
    sum += subcarrier_rate(inst, h, decision, powers, n);
    if (decision.beta_at(n)) sum -= noma_cost(inst, h, decision, powers, n);
  }
  return sum;
}

ConstraintReport check_feasibility(const NetworkInstance& inst, const ChannelRealization& h,
                                   const AccessDecision& decision, const PowerMatrix& powers,
                                   double tol) {
  ConstraintReport report;
  report.tolerance = tol;
  report.sp_rate_slack.resize(inst.num_providers);
  for (int s = 0; s < inst.num_providers; ++s)
    report.sp_rate_slack[s] = sp_rate(inst, h, decision, powers, s) - inst.min_rate[s];

  report.sic_slack.assign(inst.num_subcarriers, 0.0);
  double assigned_power = 0.0;
  for (int n = 0; n < inst.num_subcarriers; ++n) {
    int first_users = 0, pairs = 0;
    for (int k = 0; k < inst.num_users; ++k) {
      if (decision.alpha_at(k, k, n)) {
        ++first_users;
        assigned_power += powers.at(k, n);
      }
      for (int k2 = 0; k2 < inst.num_users; ++k2) {
        if (k2 == k) continue;
        if (decision.u_at(k, k2, n)) {
          ++pairs;
          if (h.at(k2, n) > h.at(k, n)) ++report.ordering_violations;
          if (decision.alpha_at(k, k, n)) assigned_power += powers.at(k2, n);
          // Eq-style SIC separation slack for the active pair.
          report.sic_slack[n] = h.at(k, n) / inst.noise_var *
                                    (powers.at(k2, n) - powers.at(k, n)) -
                                inst.sic_separation;
          if (!decision.alpha_at(k, k, n) || !decision.alpha_at(k, k2, n) ||
              !decision.beta_at(n))
            ++report.cardinality_violations;  // u without its supporting alphas/beta
        }
      }
    }
    if (first_users > 1) ++report.cardinality_violations;
    if (pairs > 1) ++report.cardinality_violations;
    if ((decision.beta_at(n) ? 1 : 0) != pairs) ++report.cardinality_violations;
    if (!decision.beta_at(n)) report.sic_slack[n] = 0.0;
  }

  for (int k = 0; k < inst.num_users; ++k) {
    for (int n = 0; n < inst.num_subcarriers; ++n) {
      bool assigned = false;
      for (int k1 = 0; k1 < inst.num_users; ++k1) {
        if ((k1 == k && decision.alpha_at(k, k, n)) ||
            (k1 != k && decision.alpha_at(k1, k, n))) {
          assigned = true;
          break;
        }
      }
      if (!assigned && powers.at(k, n) > tol) ++report.power_link_violations;
      if (assigned && powers.at(k, n) > inst.power_budget + tol) ++report.power_link_violations;
      if (powers.at(k, n) < -tol) ++report.power_link_violations;
    }
  }

  report.total_power_slack = inst.power_budget - assigned_power;

  bool ok = report.ordering_violations == 0 && report.cardinality_violations == 0 &&
            report.power_link_violations == 0 && report.total_power_slack >= -tol;
  for (double slack : report.sp_rate_slack) ok = ok && slack >= -tol;
  for (int n = 0; n < inst.num_subcarriers; ++n)
    if (decision.beta_at(n)) ok = ok && report.sic_slack[n] >= -tol;
  report.feasible = ok;
  return report;
}

namespace {

void put(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

}  // namespace

void save_instance(std::ostream& os, const NetworkInstance& inst, const ChannelRealization& h) {
  os << inst.num_users << ' ' << inst.num_subcarriers << ' ' << inst.num_providers << ' ';
  put(os, inst.noise_var);
  os << ' ';
  put(os, inst.power_budget);
  os << ' ';
  put(os, inst.sic_separation);
  os << ' ';
  put(os, inst.cost_const);
  os << ' ';
  put(os, inst.cost_sinr);
  os << ' ';
  put(os, inst.log_base);
  os << '\n';
  for (int s = 0; s < inst.num_providers; ++s) {
    os << s << ' ';
    put(os, inst.min_rate[s]);
    os << '\n';
  }
  for (int k = 0; k < inst.num_users; ++k) {
    os << k << ' ' << inst.sp_of[k] << ' ';
    put(os, k < static_cast<int>(h.user_x.size()) ? h.user_x[k] : 0.0);
    os << ' ';
    put(os, k < static_cast<int>(h.user_y.size()) ? h.user_y[k] : 0.0);
    os << '\n';
  }
  for (int k = 0; k < inst.num_users; ++k) {
    for (int n = 0; n < inst.num_subcarriers; ++n) {
      os << k << ' ' << n << ' ';
      put(os, h.at(k, n));
      os << '\n';
    }
  }
}

std::pair<NetworkInstance, ChannelRealization> load_instance(std::istream& is) {
  NetworkInstance inst;
  ChannelRealization h;
  if (!(is >> inst.num_users >> inst.num_subcarriers >> inst.num_providers >> inst.noise_var >>
        inst.power_budget >> inst.sic_separation >> inst.cost_const >> inst.cost_sinr >>
        inst.log_base))
    fail_invalid("instance header is malformed");
  if (inst.num_users < 1 || inst.num_subcarriers < 1 || inst.num_providers < 1)
    fail_invalid("instance header has nonpositive dimensions");
  inst.min_rate.resize(inst.num_providers);
  for (int i = 0; i < inst.num_providers; ++i) {
    int s;
    double r;
    if (!(is >> s >> r) || s < 0 || s >= inst.num_providers)
      fail_invalid("provider line is malformed");
    inst.min_rate[s] = r;
  }
  inst.sp_of.resize(inst.num_users);
  h.num_users = inst.num_users;
  h.num_subcarriers = inst.num_subcarriers;
  h.user_x.resize(inst.num_users);
  h.user_y.resize(inst.num_users);
  h.gain.assign(static_cast<std::size_t>(inst.num_users) * inst.num_subcarriers, 0.0);
  for (int i = 0; i < inst.num_users; ++i) {
    int k, s;
    double x, y;
    if (!(is >> k >> s >> x >> y) || k < 0 || k >= inst.num_users)
      fail_invalid("user line is malformed");
    inst.sp_of[k] = s;
    h.user_x[k] = x;
    h.user_y[k] = y;
  }
  const long entries = static_cast<long>(inst.num_users) * inst.num_subcarriers;
  for (long i = 0; i < entries; ++i) {
    int k, n;
    double g;
    if (!(is >> k >> n >> g) || k < 0 || k >= inst.num_users || n < 0 ||
        n >= inst.num_subcarriers)
      fail_invalid("gain line is malformed");
    h.at(k, n) = g;
  }
  inst.validate();
  return {std::move(inst), std::move(h)};
}

}  // namespace dmas
