#pragma once
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "oprl/bases.hpp"
#include "oprl/model.hpp"

// Value recursion over full histories: the full-memory conditional-expectation
// operator, the three-observation kernel tensor, and the finite-memory
// operator built from it.
namespace oprl {

// Full histories at step h (0-based, h+1 observations, h actions) are indexed
// by idx_0 = o_0, idx_j = (idx_{j-1} * A + a_{j-1}) * O + o_j; every action
// interleaving is indexed, reachable or not.
inline long fh_size(int h, int O, int A) {
  long n = O;
  for (int j = 0; j < h; ++j) n *= static_cast<long>(A) * O;
  return n;
}

inline long fh_child(long idx, int a, int o, int O, int A) {
  return (idx * A + a) * O + o;
}

inline long fh_index(const FullHistory& tau, int O, int A) {
  long idx = tau.obs[0];
  for (size_t j = 1; j < tau.obs.size(); ++j)
    idx = fh_child(idx, tau.act[j - 1], tau.obs[j], O, A);
  return idx;
}

inline FullHistory fh_decode(long idx, int h, int O, int A) {
  FullHistory tau;
  tau.obs.resize(h + 1);
  tau.act.resize(h);
  for (int j = h; j >= 1; --j) {
    tau.obs[j] = static_cast<int>(idx % O);
    idx /= O;
    tau.act[j - 1] = static_cast<int>(idx % A);
    idx /= A;
  }
  tau.obs[0] = static_cast<int>(idx);
  return tau;
}

// Real-valued function on the step-h full-history tree.
struct HistoryFunction {
  int h = 0;  // 0-based step; the vector covers all fh_size(h, O, A) indices
  Vec v;
};

// Total reward of a complete episode history (step H, last observation is the
// virtual one and carries no reward).
inline double total_reward(const TabularModel& m, const FullHistory& tau) {
  if (tau.step() != m.H) throw IndexError("total_reward wants a step-H history");
  double total = 0.0;
  for (int j = 0; j < m.H; ++j) total += m.r(tau.obs[j], tau.act[j]);
  return total;
}

// Full-memory operator: conditional expectation of f over the next
// observation given the history and the policy action. Zero-mass branches
// map to 0.
inline HistoryFunction apply_P(const TabularModel& m, const Policy& policy, int h,
                               const HistoryFunction& f) {
  if (f.h != h + 1) throw IndexError("apply_P input step");
  HistoryFunction out;
  out.h = h;
  long n = fh_size(h, m.O, m.A);
  out.v = Vec::Zero(n);
  for (long idx = 0; idx < n; ++idx) {
    FullHistory tau = fh_decode(idx, h, m.O, m.A);
    Vec b = forward_belief(m, tau);
    double mass = b.sum();
    if (mass <= 0.0) continue;
    long obs_idx = 0;
    for (int o : tau.obs) obs_idx = obs_idx * m.O + o;
    int a = policy.action_at(h, obs_idx);
    if (h + 1 < m.H) {
      Vec w = m.E[h + 1] * (m.T[h][a] * b) / mass;  // next-observation conditional
      double acc = 0.0;
      for (int o2 = 0; o2 < m.O; ++o2)
        acc += f.v[fh_child(idx, a, o2, m.O, m.A)] * w[o2];
      out.v[idx] = acc;
    } else {
      out.v[idx] = f.v[fh_child(idx, a, kDummyObs, m.O, m.A)];
    }
  }
  return out;
}

// Three-observation kernel of the finite-memory operator at (h, a):
// flat(o, ot * O + otp) carries the weight of replacing the observed o by the
// replicate pair (ot, otp).
struct BTensor {
  int h = 0, a = 0;
  Mat flat;  // O x O^2

  double value(int o, int ot, int otp, int O) const { return flat(o, ot * O + otp); }
};

inline BTensor build_B_tensor(const TabularModel& m, const Bridge& bridge, int h, int a) {
  if (h < 0 || h >= m.H) throw IndexError("tensor step");
  Mat W(m.S, m.O * m.O);  // row s: joint law of (o_h, o_{h+1}) given s_h = s, a_h = a
  for (int s = 0; s < m.S; ++s) {
    Vec next = (h + 1 < m.H) ? Vec(m.E[h + 1] * (m.T[h][a].col(s))) : dummy_emission(m.O);
    for (int ot = 0; ot < m.O; ++ot)
      for (int otp = 0; otp < m.O; ++otp)
        W(s, ot * m.O + otp) = m.E[h](ot, s) * next[otp];
  }
  BTensor t;
  t.h = h;
  t.a = a;
  t.flat = bridge.Z[h].transpose() * W;  // O x O^2
  return t;
}

// Finite-memory operator: swaps the last observation for a replicate pair and
// weighs by the (h, policy-action) tensor. btensors_h holds one tensor per
// action at step h.
inline HistoryFunction apply_B(const TabularModel& m, const Policy& policy,
                               const std::vector<BTensor>& btensors_h, int h,
                               const HistoryFunction& f) {
  if (f.h != h + 1) throw IndexError("apply_B input step");
  HistoryFunction out;
  out.h = h;
  long n = fh_size(h, m.O, m.A);
  out.v = Vec::Zero(n);
  for (long idx = 0; idx < n; ++idx) {
    long rest = idx / m.O;       // prefix-and-action part, empty at h = 0
    int o_last = static_cast<int>(idx % m.O);
    FullHistory tau = fh_decode(idx, h, m.O, m.A);
    long obs_prefix = 0;
    for (int j = 0; j < h; ++j) obs_prefix = obs_prefix * m.O + tau.obs[j];
    double acc = 0.0;
    for (int ot = 0; ot < m.O; ++ot) {
      long mirror = rest * m.O + ot;                                 // same prefix, swapped o_h
      int at = policy.action_at(h, obs_prefix * m.O + ot);           // action at the mirrored history
      const BTensor& bt = btensors_h[at];
      for (int otp = 0; otp < m.O; ++otp)
        acc += f.v[fh_child(mirror, at, otp, m.O, m.A)] * bt.flat(o_last, ot * m.O + otp);
    }
    out.v[idx] = acc;
  }
  return out;
}

// Backward recursion from the total reward. Returns V[0..H]; V[H] is the
// reward functional on complete histories, V[h] = (finite-memory op) V[h+1].
inline std::vector<HistoryFunction> compute_values(
    const TabularModel& m, const Policy& policy,
    const std::vector<std::vector<BTensor>>& btensors) {
  std::vector<HistoryFunction> V(m.H + 1);
  V[m.H].h = m.H;
  long n = fh_size(m.H, m.O, m.A);
  V[m.H].v = Vec::Zero(n);
  for (long idx = 0; idx < n; ++idx)
    V[m.H].v[idx] = total_reward(m, fh_decode(idx, m.H, m.O, m.A));
  for (int h = m.H - 1; h >= 0; --h) V[h] = apply_B(m, policy, btensors[h], h, V[h + 1]);
  return V;
}

// Exact policy value by enumeration of observation branches.
inline double evaluate_J(const TabularModel& m, const Policy& policy) {
  double J = 0.0;
  // depth-first over observation sequences; belief is the unnormalized joint
  std::function<void(int, long, const Vec&, double)> walk =
      [&](int h, long obs_idx, const Vec& b, double reward_prefix) {
        double mass = b.sum();
        if (mass <= 0.0) return;
        int o_cur = static_cast<int>(obs_idx % m.O);
        int a = policy.action_at(h, obs_idx);
        double acc = reward_prefix + m.r(o_cur, a);
        if (h + 1 == m.H) {
          J += mass * acc;
          return;
        }
        Vec through = m.T[h][a] * b;
        for (int o = 0; o < m.O; ++o) {
          Vec nb = through.cwiseProduct(m.E[h + 1].row(o).transpose());
          walk(h + 1, obs_idx * m.O + o, nb, acc);
        }
      };
  for (int o = 0; o < m.O; ++o) {
    Vec b0 = m.mu.cwiseProduct(m.E[0].row(o).transpose());
    walk(0, o, b0, 0.0);
  }
  return J;
}

inline double evaluate_J(const TabularModel& m, const MixingPolicy& mixing) {
  double J = 0.0;
  for (const Policy& p : mixing.components) J += evaluate_J(m, p);
  return J / mixing.components.size();
}

}  // namespace oprl
