#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepirl/error.hpp"
#include "deepirl/grid_world.hpp"
#include "deepirl/random.hpp"

namespace deepirl {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Deterministic 8-connected grid MDP with an absorbing goal.
///
/// A transition out of state s under action a earns `reward[s] - step_cost`
/// (the reward is attached to the departed state). Off-grid moves are
/// invalid and excluded from every softmax.
class Mdp {
public:
  Mdp(int rows, int cols, int goal, double gamma = 1.0, double step_cost = 0.0)
      : rows_(rows), cols_(cols), goal_(goal), gamma_(gamma), step_cost_(step_cost) {
    if (rows < 1 || cols < 1 || rows * cols < 2) throw std::invalid_argument("mdp needs at least two states");
    if (goal < 0 || goal >= rows * cols) throw std::invalid_argument("goal outside the grid");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0,1]");
    if (!std::isfinite(step_cost)) throw std::invalid_argument("step cost must be finite");
    succ_.assign(static_cast<std::size_t>(rows * cols) * kNumActions, -1);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        for (int a = 0; a < kNumActions; ++a) {
          const int nr = r + kActionDRow[a], nc = c + kActionDCol[a];
          if (nr >= 0 && nc >= 0 && nr < rows && nc < cols)
            succ_[static_cast<std::size_t>(r * cols + c) * kNumActions + a] = nr * cols + nc;
        }
  }

  static Mdp on_grid(const GridSpec& spec, int goal, double gamma = 1.0, double step_cost = 0.0) {
    return Mdp(spec.height_cells, spec.width_cells, goal, gamma, step_cost);
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int num_states() const { return rows_ * cols_; }
  int goal() const { return goal_; }
  double gamma() const { return gamma_; }
  double step_cost() const { return step_cost_; }

  /// Successor cell, or -1 for an off-grid move.
  int successor(int s, int a) const { return succ_[static_cast<std::size_t>(s) * kNumActions + a]; }

  /// Action moving s to t, or -1 if t is not a king move away.
  int action_to(int s, int t) const {
    for (int a = 0; a < kNumActions; ++a)
      if (successor(s, a) == t) return a;
    return -1;
  }

  int default_max_iters() const { return 4 * (rows_ + cols_); }
  int default_horizon() const { return 2 * (rows_ + cols_); }

private:
  int rows_, cols_, goal_;
  double gamma_, step_cost_;
  std::vector<int> succ_;
};

/// Stochastic policy pi(a|s). Rows of the goal state are all zero.
struct Policy {
  int num_states = 0;
  std::vector<double> probs;  // [S x 8]

  double operator()(int s, int a) const { return probs[static_cast<std::size_t>(s) * kNumActions + a]; }
  double& at(int s, int a) { return probs[static_cast<std::size_t>(s) * kNumActions + a]; }
};

struct SoftValueResult {
  std::vector<double> value;  // V(s); -inf where the goal is unreachable
  std::vector<double> q;      // Q(s,a) [S x 8]; -inf for invalid actions
  Policy policy;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline double logsumexp(const double* x, int n) {
  double m = kNegInf;
  for (int i = 0; i < n; ++i) m = std::max(m, x[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    if (x[i] != kNegInf) s += std::exp(x[i] - m);
  return m + std::log(s);
}

}  // namespace detail

/// Soft (log-sum-exp) value iteration towards the absorbing goal.
///
/// Starts from V(goal) = 0 and V = -inf elsewhere, so after k sweeps V(s) is
/// the log of the summed path weights of all paths to the goal with at most
/// k steps. Sweeps are synchronous; iteration stops once the max-norm change
/// drops below `tol` or after `max_iters` sweeps, in which case the result is
/// flagged as not converged. For gamma = 1 the series only converges when
/// transitions are costly enough relative to the branching factor.
inline SoftValueResult soft_value_iteration(std::span<const double> reward, const Mdp& mdp,
                                            int max_iters, double tol) {
  const int S = mdp.num_states();
  if (static_cast<int>(reward.size()) != S) throw std::invalid_argument("reward size does not match the mdp");
  for (double r : reward)
    if (!std::isfinite(r)) throw NumericalError("reward map contains non-finite values");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be positive");

  const double gamma = mdp.gamma();
  const int goal = mdp.goal();
  std::vector<double> v(S, kNegInf), next(S, kNegInf);
  v[goal] = 0.0;

  SoftValueResult res;
  res.q.assign(static_cast<std::size_t>(S) * kNumActions, kNegInf);
  for (int it = 1; it <= max_iters; ++it) {
    double delta = 0.0;
    for (int s = 0; s < S; ++s) {
      if (s == goal) {
        next[s] = 0.0;
        continue;
      }
      double* q = &res.q[static_cast<std::size_t>(s) * kNumActions];
      const double base = reward[s] - mdp.step_cost();
      for (int a = 0; a < kNumActions; ++a) {
        const int t = mdp.successor(s, a);
        q[a] = (t < 0 || v[t] == kNegInf) ? kNegInf : base + gamma * v[t];
      }
      next[s] = detail::logsumexp(q, kNumActions);
      if (next[s] != v[s]) {
        const double d = (next[s] == kNegInf || v[s] == kNegInf)
                             ? std::numeric_limits<double>::infinity()
                             : std::abs(next[s] - v[s]);
        delta = std::max(delta, d);
      }
    }
    v.swap(next);
    res.iterations = it;
    if (delta < tol) {
      res.converged = true;
      break;
    }
  }

  // V and Q come from the same (last) sweep, so pi = exp(Q - V) is
  // normalized exactly.
  res.value = v;
  res.policy.num_states = S;
  res.policy.probs.assign(static_cast<std::size_t>(S) * kNumActions, 0.0);
  for (int s = 0; s < S; ++s) {
    if (s == goal) continue;
    const double* qs = &res.q[static_cast<std::size_t>(s) * kNumActions];
    int n_valid = 0;
    for (int a = 0; a < kNumActions; ++a) n_valid += mdp.successor(s, a) >= 0;
    for (int a = 0; a < kNumActions; ++a) {
      if (mdp.successor(s, a) < 0) continue;
      // Unreachable states get a uniform row so that every row is a
      // distribution; their value stays -inf.
      res.policy.at(s, a) = v[s] == kNegInf ? 1.0 / n_valid : std::exp(qs[a] - v[s]);
    }
  }
  return res;
}

inline SoftValueResult soft_value_iteration(std::span<const double> reward, const Mdp& mdp) {
  return soft_value_iteration(reward, mdp, mdp.default_max_iters(), 1e-6);
}

struct Visitation {
  std::vector<double> mu;       // expected visits per state
  double residual_mass = 0.0;   // mass not absorbed by the goal after the horizon
};

/// Forward propagation of a unit start mass through the policy. Mass that
/// reaches the goal is counted once and removed.
inline Visitation propagate_policy(const Policy& policy, const Mdp& mdp, int start, int horizon) {
  const int S = mdp.num_states();
  if (policy.num_states != S) throw std::invalid_argument("policy size does not match the mdp");
  if (start < 0 || start >= S) throw std::invalid_argument("start outside the grid");
  if (horizon < 0) throw std::invalid_argument("horizon must be nonnegative");
  const int goal = mdp.goal();

  Visitation out;
  out.mu.assign(S, 0.0);
  std::vector<double> d(S, 0.0), dn(S, 0.0);
  d[start] = 1.0;
  out.mu[start] = 1.0;
  for (int t = 0; t < horizon; ++t) {
    std::fill(dn.begin(), dn.end(), 0.0);
    bool any = false;
    for (int s = 0; s < S; ++s) {
      const double m = d[s];
      if (s == goal || m == 0.0) continue;
      any = true;
      for (int a = 0; a < kNumActions; ++a) {
        const int nxt = mdp.successor(s, a);
        if (nxt >= 0) dn[nxt] += m * policy(s, a);
      }
    }
    if (!any) {
      std::fill(d.begin(), d.end(), 0.0);
      break;
    }
    for (int s = 0; s < S; ++s) out.mu[s] += dn[s];
    d.swap(dn);
  }
  for (int s = 0; s < S; ++s)
    if (s != goal) out.residual_mass += d[s];
  return out;
}

/// Expert (mu_D) and expected (E[mu]) visitation statistics. The terminal
/// state of each demonstration has no outgoing action, so
/// mu_d = sum_a mu_d_sa + mu_d_end.
struct VisitationStats {
  std::vector<double> mu_d;
  std::vector<double> mu_d_sa;  // [S x 8]
  std::vector<double> mu_d_end;
  std::vector<double> expected_mu;
};

inline VisitationStats empirical_visitation(std::span<const Trajectory> demos, int num_states) {
  VisitationStats st;
  st.mu_d.assign(num_states, 0.0);
  st.mu_d_sa.assign(static_cast<std::size_t>(num_states) * kNumActions, 0.0);
  st.mu_d_end.assign(num_states, 0.0);
  if (demos.empty()) return st;
  const double w = 1.0 / static_cast<double>(demos.size());
  for (const auto& d : demos) {
    if (d.states.empty() || d.actions.size() + 1 != d.states.size())
      throw std::invalid_argument("malformed trajectory");
    for (std::size_t i = 0; i < d.states.size(); ++i) {
      const int s = d.states[i];
      if (s < 0 || s >= num_states) throw std::invalid_argument("trajectory state outside the grid");
      st.mu_d[s] += w;
      if (i < d.actions.size())
        st.mu_d_sa[static_cast<std::size_t>(s) * kNumActions + d.actions[i]] += w;
      else
        st.mu_d_end[s] += w;
    }
  }
  return st;
}

/// dL_D/dr = mu_D - E[mu], the ascent direction on the demonstration
/// log-likelihood.
inline std::vector<double> maxent_gradient(std::span<const double> mu_d, std::span<const double> expected_mu) {
  if (mu_d.size() != expected_mu.size()) throw std::invalid_argument("visitation shapes differ");
  std::vector<double> g(mu_d.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = mu_d[i] - expected_mu[i];
  return g;
}

inline std::vector<double> maxent_gradient(const VisitationStats& st) {
  return maxent_gradient(st.mu_d, st.expected_mu);
}

/// Negative log-likelihood of the demonstrated actions in nats; +inf when
/// any demonstrated action has zero probability.
inline double demo_nll(const Policy& policy, const Trajectory& demo) {
  double nll = 0.0;
  for (std::size_t i = 0; i < demo.actions.size(); ++i) {
    const double p = policy(demo.states[i], demo.actions[i]);
    if (!(p > 0.0)) return std::numeric_limits<double>::infinity();
    nll -= std::log(p);
  }
  return nll;
}

struct SampledTrajectory {
  Trajectory trajectory;
  bool truncated = false;
};

/// Rolls out the policy from `start` until the goal or `max_steps` actions.
inline SampledTrajectory sample_trajectory(const Policy& policy, const Mdp& mdp, int start, int max_steps,
                                           Rng& rng) {
  SampledTrajectory out;
  out.trajectory.states.push_back(start);
  int s = start;
  while (s != mdp.goal()) {
    if (static_cast<int>(out.trajectory.actions.size()) >= max_steps) {
      out.truncated = true;
      break;
    }
    const double u = uniform01(rng);
    double acc = 0.0;
    int chosen = -1;
    for (int a = 0; a < kNumActions; ++a) {
      const double p = policy(s, a);
      if (p <= 0.0) continue;
      chosen = a;
      acc += p;
      if (u < acc) break;
    }
    if (chosen < 0) throw NumericalError("policy row has no valid action");
    s = mdp.successor(s, chosen);
    out.trajectory.actions.push_back(chosen);
    out.trajectory.states.push_back(s);
  }
  return out;
}

inline SampledTrajectory sample_trajectory(const Policy& policy, const Mdp& mdp, int start, int max_steps,
                                           std::uint64_t seed) {
  Rng rng(seed);
  return sample_trajectory(policy, mdp, start, max_steps, rng);
}

}  // namespace deepirl
