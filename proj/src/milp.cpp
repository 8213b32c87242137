// SPDX-License-Identifier: Apache-2.0

#include "dmas/milp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <utility>

namespace dmas::milp {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kDegenerateStep = 1e-11;
constexpr int kBlandTrigger = 24;  // consecutive degenerate pivots before Bland's rule
constexpr int kRefactorInterval = 128;

enum VarStatus : unsigned char { kAtLower, kAtUpper, kBasic };

struct LpOutcome {
  SolveStatus status = SolveStatus::Infeasible;
  std::vector<double> x;  // structural variables only
  double objective = -kInf;
  long iterations = 0;
  std::vector<double> row_duals;  // one per canonical row, original order
};

// Canonical equality form: structural columns, then one slack per a_ub row,
// then one artificial per row. Bounded-variable revised simplex with an
// explicit dense basis inverse.
class Simplex {
 public:
  explicit Simplex(const LinearProgram& lp) : n_struct_(lp.num_vars) {
    const int m_ub = static_cast<int>(lp.a_ub.size());
    const int m_eq = static_cast<int>(lp.a_eq.size());
    m_ = m_ub + m_eq;
    n_real_ = n_struct_ + m_ub;
    n_total_ = n_real_ + m_;
    cols_.assign(static_cast<std::size_t>(n_total_) * m_, 0.0);
    b_.resize(m_);
    for (int i = 0; i < m_ub; ++i) {
      for (int j = 0; j < n_struct_; ++j) col(j)[i] = lp.a_ub[i][j];
      col(n_struct_ + i)[i] = 1.0;  // slack
      b_[i] = lp.b_ub[i];
    }
    for (int i = 0; i < m_eq; ++i) {
      for (int j = 0; j < n_struct_; ++j) col(j)[m_ub + i] = lp.a_eq[i][j];
      b_[m_ub + i] = lp.b_eq[i];
    }
    for (int i = 0; i < m_; ++i) col(n_real_ + i)[i] = 1.0;  // artificial slots
    obj_ = lp.objective;
    obj_.resize(n_total_, 0.0);
    base_lo_.assign(n_total_, 0.0);
    base_up_.assign(n_total_, kInf);
    for (int j = 0; j < n_struct_; ++j) {
      base_lo_[j] = lp.lower[j];
      base_up_[j] = lp.upper[j];
    }
  }

  /// Solves with structural bounds overridden by (lower, upper).
  LpOutcome solve(const std::vector<double>& lower, const std::vector<double>& upper, double tol,
                  long max_iters) {
    lo_ = base_lo_;
    up_ = base_up_;
    for (int j = 0; j < n_struct_; ++j) {
      lo_[j] = lower[j];
      up_[j] = upper[j];
    }
    LpOutcome out;
    for (int j = 0; j < n_struct_; ++j) {
      if (!(lo_[j] <= up_[j]) || !std::isfinite(lo_[j])) return out;  // Infeasible
    }

    status_.assign(n_total_, kAtLower);
    basis_.resize(m_);
    xb_.assign(m_, 0.0);
    binv_.assign(static_cast<std::size_t>(m_) * m_, 0.0);

    // Start from all real columns at lower bound, artificials carrying the
    // residuals with unit +/- columns so the initial basis inverse is diagonal.
    std::vector<double> residual = b_;
    for (int j = 0; j < n_real_; ++j) {
      if (lo_[j] == 0.0) continue;
      const double* a = col(j);
      for (int i = 0; i < m_; ++i) residual[i] -= a[i] * lo_[j];
    }
    double b_scale = 1.0;
    for (int i = 0; i < m_; ++i) b_scale += std::abs(b_[i]);
    for (int i = 0; i < m_; ++i) {
      const int art = n_real_ + i;
      col(art)[i] = residual[i] >= 0.0 ? 1.0 : -1.0;
      lo_[art] = 0.0;
      up_[art] = kInf;
      basis_[i] = art;
      status_[art] = kBasic;
      xb_[i] = std::abs(residual[i]);
      binv_[static_cast<std::size_t>(i) * m_ + i] = col(art)[i];
    }

    // Phase 1: maximize -sum(artificials).
    std::vector<double> phase1_obj(n_total_, 0.0);
    for (int i = 0; i < m_; ++i) phase1_obj[n_real_ + i] = -1.0;
    long iters = 0;
    SolveStatus st = iterate(phase1_obj, tol, max_iters, iters);
    out.iterations = iters;
    if (st == SolveStatus::IterationLimit) {
      out.status = st;
      return out;
    }
    double artificial_sum = 0.0;
    for (int i = 0; i < m_; ++i)
      if (basis_[i] >= n_real_) artificial_sum += xb_[i];
    if (artificial_sum > 1e-7 * b_scale) {
      out.status = SolveStatus::Infeasible;
      return out;
    }
    drive_out_artificials();
    for (int i = 0; i < m_; ++i) {
      const int art = n_real_ + i;
      up_[art] = 0.0;  // never let an artificial re-enter
    }

    // Phase 2: the real objective.
    long iters2 = 0;
    st = iterate(obj_, tol, max_iters - iters, iters2);
    out.iterations += iters2;
    out.status = st;
    if (st != SolveStatus::Optimal && st != SolveStatus::IterationLimit) return out;

    refactorize();
    out.x.assign(n_struct_, 0.0);
    for (int j = 0; j < n_struct_; ++j)
      out.x[j] = status_[j] == kAtUpper ? up_[j] : lo_[j];
    for (int i = 0; i < m_; ++i)
      if (basis_[i] < n_struct_) out.x[basis_[i]] = xb_[i];
    out.objective = 0.0;
    for (int j = 0; j < n_struct_; ++j) out.objective += obj_[j] * out.x[j];
    out.row_duals = row_duals(obj_);
    return out;
  }

 private:
  double* col(int j) { return cols_.data() + static_cast<std::size_t>(j) * m_; }
  const double* col(int j) const { return cols_.data() + static_cast<std::size_t>(j) * m_; }

  std::vector<double> row_duals(const std::vector<double>& c) const {
    std::vector<double> y(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      const double cb = c[basis_[i]];
      if (cb == 0.0) continue;
      const double* row = binv_.data() + static_cast<std::size_t>(i) * m_;
      for (int r = 0; r < m_; ++r) y[r] += cb * row[r];
    }
    return y;
  }

  SolveStatus iterate(const std::vector<double>& c, double tol, long max_iters, long& iters) {
    int degenerate_streak = 0;
    for (iters = 0; iters < max_iters; ++iters) {
      if (iters > 0 && iters % kRefactorInterval == 0) refactorize();
      const bool bland = degenerate_streak > kBlandTrigger;
      std::vector<double> y = row_duals(c);

      int enter = -1;
      double best_score = tol;
      for (int j = 0; j < n_total_; ++j) {
        const VarStatus st = static_cast<VarStatus>(status_[j]);
        if (st == kBasic || lo_[j] == up_[j]) continue;
        const double* a = col(j);
        double d = c[j];
        for (int i = 0; i < m_; ++i) d -= y[i] * a[i];
        double score = 0.0;
        if (st == kAtLower && d > tol) score = d;
        else if (st == kAtUpper && d < -tol && std::isfinite(up_[j])) score = -d;
        else continue;
        if (bland) { enter = j; break; }
        if (score > best_score) { best_score = score; enter = j; }
      }
      if (enter < 0) return SolveStatus::Optimal;

      // w = B^-1 a_enter
      std::vector<double> w(m_, 0.0);
      const double* a = col(enter);
      for (int r = 0; r < m_; ++r) {
        if (a[r] == 0.0) continue;
        for (int i = 0; i < m_; ++i) w[i] += binv_[static_cast<std::size_t>(i) * m_ + r] * a[r];
      }
      const double sigma = status_[enter] == kAtLower ? 1.0 : -1.0;

      double best_t = up_[enter] - lo_[enter];  // bound-flip limit (may be inf)
      int leave = -1;
      bool leave_to_upper = false;
      for (int i = 0; i < m_; ++i) {
        const double delta = sigma * w[i];
        double limit;
        bool to_upper;
        if (delta > kPivotTol) {
          limit = (xb_[i] - lo_[basis_[i]]) / delta;
          to_upper = false;
        } else if (delta < -kPivotTol && std::isfinite(up_[basis_[i]])) {
          limit = (up_[basis_[i]] - xb_[i]) / (-delta);
          to_upper = true;
        } else {
          continue;
        }
        if (limit < -1e-12) limit = 0.0;
        const bool better = limit < best_t - 1e-12;
        const bool tie = !better && limit <= best_t + 1e-12 && leave >= 0;
        if (better || (tie && (bland ? basis_[i] < basis_[leave]
                                     : std::abs(w[i]) > std::abs(w[leave])))) {
          best_t = std::max(limit, 0.0);
          leave = i;
          leave_to_upper = to_upper;
        }
      }
      if (!std::isfinite(best_t) && leave < 0) return SolveStatus::Unbounded;

      degenerate_streak = best_t <= kDegenerateStep ? degenerate_streak + 1 : 0;

      if (leave < 0) {
        // Bound flip: the entering variable traverses its whole range.
        for (int i = 0; i < m_; ++i) xb_[i] -= sigma * w[i] * best_t;
        status_[enter] = status_[enter] == kAtLower ? kAtUpper : kAtLower;
        continue;
      }

      for (int i = 0; i < m_; ++i) xb_[i] -= sigma * w[i] * best_t;
      const int leaving_var = basis_[leave];
      status_[leaving_var] = leave_to_upper ? kAtUpper : kAtLower;
      const double enter_start = status_[enter] == kAtLower ? lo_[enter] : up_[enter];
      xb_[leave] = enter_start + sigma * best_t;
      basis_[leave] = enter;
      status_[enter] = kBasic;

      // Rank-1 update of the explicit inverse.
      double* pr = binv_.data() + static_cast<std::size_t>(leave) * m_;
      const double inv_piv = 1.0 / w[leave];
      for (int r = 0; r < m_; ++r) pr[r] *= inv_piv;
      for (int i = 0; i < m_; ++i) {
        if (i == leave || w[i] == 0.0) continue;
        double* pi = binv_.data() + static_cast<std::size_t>(i) * m_;
        const double f = w[i];
        for (int r = 0; r < m_; ++r) pi[r] -= f * pr[r];
      }
    }
    return SolveStatus::IterationLimit;
  }

  // Pivot zero-valued artificials out of the basis where a real column can
  // replace them; dependent rows keep their artificial pinned at zero.
  void drive_out_artificials() {
    for (int i = 0; i < m_; ++i) {
      if (basis_[i] < n_real_) continue;
      int replacement = -1;
      double best = kPivotTol;
      const double* bi = binv_.data() + static_cast<std::size_t>(i) * m_;
      for (int j = 0; j < n_real_; ++j) {
        if (status_[j] == kBasic || lo_[j] == up_[j]) continue;
        const double* a = col(j);
        double wij = 0.0;
        for (int r = 0; r < m_; ++r) wij += bi[r] * a[r];
        if (std::abs(wij) > best) {
          best = std::abs(wij);
          replacement = j;
        }
      }
      if (replacement < 0) continue;
      std::vector<double> w(m_, 0.0);
      const double* a = col(replacement);
      for (int r = 0; r < m_; ++r) {
        if (a[r] == 0.0) continue;
        for (int k = 0; k < m_; ++k) w[k] += binv_[static_cast<std::size_t>(k) * m_ + r] * a[r];
      }
      status_[basis_[i]] = kAtLower;
      basis_[i] = replacement;
      const double enter_start = status_[replacement] == kAtLower ? lo_[replacement] : up_[replacement];
      status_[replacement] = kBasic;
      xb_[i] = enter_start;  // degenerate swap, values unchanged
      double* pr = binv_.data() + static_cast<std::size_t>(i) * m_;
      const double inv_piv = 1.0 / w[i];
      for (int r = 0; r < m_; ++r) pr[r] *= inv_piv;
      for (int k = 0; k < m_; ++k) {
        if (k == i || w[k] == 0.0) continue;
        double* pk = binv_.data() + static_cast<std::size_t>(k) * m_;
        const double f = w[k];
        for (int r = 0; r < m_; ++r) pk[r] -= f * pr[r];
      }
    }
  }

  void refactorize() {
    // Gauss-Jordan inverse of the current basis, then exact basic values.
    const int m = m_;
    std::vector<double> a(static_cast<std::size_t>(m) * 2 * m, 0.0);
    for (int i = 0; i < m; ++i) {
      const double* bc = col(basis_[i]);
      for (int r = 0; r < m; ++r) a[static_cast<std::size_t>(r) * 2 * m + i] = bc[r];
      a[static_cast<std::size_t>(i) * 2 * m + m + i] = 1.0;
    }
    for (int piv = 0; piv < m; ++piv) {
      int prow = piv;
      double best = std::abs(a[static_cast<std::size_t>(piv) * 2 * m + piv]);
      for (int r = piv + 1; r < m; ++r) {
        const double v = std::abs(a[static_cast<std::size_t>(r) * 2 * m + piv]);
        if (v > best) { best = v; prow = r; }
      }
      if (best < 1e-13) return;  // singular; keep the updated inverse
      if (prow != piv)
        for (int cidx = 0; cidx < 2 * m; ++cidx)
          std::swap(a[static_cast<std::size_t>(prow) * 2 * m + cidx],
                    a[static_cast<std::size_t>(piv) * 2 * m + cidx]);
      double* prowp = a.data() + static_cast<std::size_t>(piv) * 2 * m;
      const double inv = 1.0 / prowp[piv];
      for (int cidx = 0; cidx < 2 * m; ++cidx) prowp[cidx] *= inv;
      for (int r = 0; r < m; ++r) {
        if (r == piv) continue;
        double* rp = a.data() + static_cast<std::size_t>(r) * 2 * m;
        const double f = rp[piv];
        if (f == 0.0) continue;
        for (int cidx = 0; cidx < 2 * m; ++cidx) rp[cidx] -= f * prowp[cidx];
      }
    }
    for (int i = 0; i < m; ++i)
      for (int r = 0; r < m; ++r)
        binv_[static_cast<std::size_t>(i) * m + r] = a[static_cast<std::size_t>(i) * 2 * m + m + r];

    std::vector<double> rhs = b_;
    for (int j = 0; j < n_total_; ++j) {
      if (status_[j] == kBasic) continue;
      const double v = status_[j] == kAtUpper ? up_[j] : lo_[j];
      if (v == 0.0) continue;
      const double* aj = col(j);
      for (int r = 0; r < m; ++r) rhs[r] -= aj[r] * v;
    }
    for (int i = 0; i < m; ++i) {
      double v = 0.0;
      const double* bi = binv_.data() + static_cast<std::size_t>(i) * m;
      for (int r = 0; r < m; ++r) v += bi[r] * rhs[r];
      xb_[i] = v;
    }
  }

  int n_struct_, n_real_, n_total_ = 0, m_ = 0;
  std::vector<double> cols_;  // column-major, m_ per column
  std::vector<double> b_, obj_, base_lo_, base_up_;
  // per-solve state
  std::vector<double> lo_, up_, xb_, binv_;
  std::vector<unsigned char> status_;
  std::vector<int> basis_;
};

bool nearly_integral(double v, double tol) { return std::abs(v - std::round(v)) <= tol; }

}  // namespace

void LinearProgram::validate() const {
  auto bad = [](const char* msg) { throw std::invalid_argument(msg); };
  if (num_vars <= 0) bad("LinearProgram: num_vars must be positive");
  if (static_cast<int>(objective.size()) != num_vars) bad("LinearProgram: objective size");
  if (static_cast<int>(lower.size()) != num_vars || static_cast<int>(upper.size()) != num_vars)
    bad("LinearProgram: bounds size");
  if (a_ub.size() != b_ub.size() || a_eq.size() != b_eq.size())
    bad("LinearProgram: row/rhs count mismatch");
  for (const auto& row : a_ub)
    if (static_cast<int>(row.size()) != num_vars) bad("LinearProgram: a_ub row size");
  for (const auto& row : a_eq)
    if (static_cast<int>(row.size()) != num_vars) bad("LinearProgram: a_eq row size");
  for (int j = 0; j < num_vars; ++j) {
    if (!std::isfinite(lower[j])) bad("LinearProgram: lower bounds must be finite");
    if (lower[j] > upper[j]) bad("LinearProgram: lower > upper");
  }
}

MilpSolution solve_lp(const LinearProgram& lp, double tol, long max_iters) {
  lp.validate();
  Simplex simplex(lp);
  LpOutcome o = simplex.solve(lp.lower, lp.upper, tol, max_iters);
  MilpSolution sol;
  sol.status = o.status;
  sol.x = std::move(o.x);
  sol.objective = o.objective;
  sol.node_count = 0;
  sol.lp_iterations = o.iterations;
  const int m_ub = static_cast<int>(lp.a_ub.size());
  if (!o.row_duals.empty()) {
    sol.duals_ub.assign(o.row_duals.begin(), o.row_duals.begin() + m_ub);
    sol.duals_eq.assign(o.row_duals.begin() + m_ub, o.row_duals.end());
  }
  return sol;
}

MilpSolution solve_milp(const MilpProblem& mp, double tol, long node_limit) {
  mp.lp.validate();
  for (int j : mp.binary_vars)
    if (j < 0 || j >= mp.lp.num_vars)
      throw std::invalid_argument("MilpProblem: binary index out of range");

  Simplex simplex(mp.lp);
  MilpSolution best;
  best.status = SolveStatus::Infeasible;

  struct Node {
    double bound;
    long id;
    std::vector<std::pair<int, unsigned char>> fixings;
  };
  auto worse = [](const Node& a, const Node& b) {
    if (a.bound != b.bound) return a.bound < b.bound;  // max-heap on bound
    return a.id > b.id;                                // then FIFO
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);

  long next_id = 0;
  open.push({kInf, next_id++, {}});
  std::vector<double> lo = mp.lp.lower, up = mp.lp.upper;
  const double int_tol = 1e-7;

  auto verify_and_accept = [&](const std::vector<double>& x_relaxed, long nodes_so_far) {
    std::vector<double> x = x_relaxed;
    for (int j : mp.binary_vars) x[j] = std::round(x[j]);
    for (std::size_t i = 0; i < mp.lp.a_ub.size(); ++i) {
      double lhs = 0.0;
      for (int j = 0; j < mp.lp.num_vars; ++j) lhs += mp.lp.a_ub[i][j] * x[j];
      if (lhs > mp.lp.b_ub[i] + 1e-6 * (1.0 + std::abs(mp.lp.b_ub[i]))) return;
    }
    for (std::size_t i = 0; i < mp.lp.a_eq.size(); ++i) {
      double lhs = 0.0;
      for (int j = 0; j < mp.lp.num_vars; ++j) lhs += mp.lp.a_eq[i][j] * x[j];
      if (std::abs(lhs - mp.lp.b_eq[i]) > 1e-6 * (1.0 + std::abs(mp.lp.b_eq[i]))) return;
    }
    double obj = 0.0;
    for (int j = 0; j < mp.lp.num_vars; ++j) obj += mp.lp.objective[j] * x[j];
    if (best.status == SolveStatus::Infeasible || obj > best.objective) {
      best.status = SolveStatus::Optimal;
      best.objective = obj;
      best.x = std::move(x);
      best.node_count = nodes_so_far;
    }
  };

  long nodes = 0;
  bool hit_limit = false;
  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (best.status == SolveStatus::Optimal && node.bound <= best.objective + tol) break;
    if (nodes >= node_limit) {
      hit_limit = true;
      break;
    }

    lo = mp.lp.lower;
    up = mp.lp.upper;
    for (auto [var, value] : node.fixings) {
      lo[var] = value;
      up[var] = value;
    }
    LpOutcome relax = simplex.solve(lo, up, 1e-9, 200000);
    ++nodes;
    best.lp_iterations += relax.iterations;
    if (relax.status != SolveStatus::Optimal) continue;
    if (best.status == SolveStatus::Optimal && relax.objective <= best.objective + tol) continue;

    int branch_var = -1;
    double most_fractional = int_tol;
    for (int j : mp.binary_vars) {
      const double frac = std::min(relax.x[j] - std::floor(relax.x[j]),
                                   std::ceil(relax.x[j]) - relax.x[j]);
      if (frac > most_fractional + 1e-12) {
        most_fractional = frac;
        branch_var = j;
      }
    }
    if (branch_var < 0) {
      bool clean = true;
      for (int j : mp.binary_vars) clean = clean && nearly_integral(relax.x[j], int_tol);
      if (clean) {
        verify_and_accept(relax.x, nodes);
        continue;
      }
    }
    if (branch_var < 0) continue;

    Node up_child{relax.objective, next_id++, node.fixings};
    up_child.fixings.emplace_back(branch_var, static_cast<unsigned char>(1));
    Node down_child{relax.objective, next_id++, node.fixings};
    down_child.fixings.emplace_back(branch_var, static_cast<unsigned char>(0));
    open.push(std::move(up_child));
    open.push(std::move(down_child));
  }

  best.node_count = nodes;
  if (hit_limit && best.status == SolveStatus::Optimal) best.status = SolveStatus::IterationLimit;
  return best;
}

void dump_problem(std::ostream& os, const MilpProblem& mp) {
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  const LinearProgram& lp = mp.lp;
  os << "vars " << lp.num_vars << " ub_rows " << lp.a_ub.size() << " eq_rows " << lp.a_eq.size()
     << "\nc";
  for (double v : lp.objective) {
    os << ' ';
    put(v);
  }
  os << '\n';
  for (std::size_t i = 0; i < lp.a_ub.size(); ++i) {
    os << "ub";
    for (double v : lp.a_ub[i]) {
      os << ' ';
      put(v);
    }
    os << " <= ";
    put(lp.b_ub[i]);
    os << '\n';
  }
  for (std::size_t i = 0; i < lp.a_eq.size(); ++i) {
    os << "eq";
    for (double v : lp.a_eq[i]) {
      os << ' ';
      put(v);
    }
    os << " = ";
    put(lp.b_eq[i]);
    os << '\n';
  }
  os << "lb";
  for (double v : lp.lower) {
    os << ' ';
    put(v);
  }
  os << "\nub";
  for (double v : lp.upper) {
    os << ' ';
    put(v);
  }
  os << "\nbinary";
  for (int j : mp.binary_vars) os << ' ' << j;
  os << '\n';
}

}  // namespace dmas::milp
