#pragma once
#include <array>
#include <vector>

#include <Eigen/Dense>

#include "oprl/errors.hpp"
#include "oprl/rng.hpp"

// Finite episodic POMDP with hidden states, per-step emission matrices and a
// known reward table on observation-action pairs. Steps are 0-based in code:
// states s_0..s_{H-1}, observations o_0..o_{H-1}, actions a_0..a_{H-1}.
// A virtual step H emits the fixed observation 0 with probability 1 so that
// three-step observation windows are well defined at the last step.
namespace oprl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr int kDummyObs = 0;  // emitted at the virtual step H

struct TabularModel {
  int H = 0, S = 0, A = 0, O = 0;
  Vec mu;                          // S, initial state distribution
  std::vector<std::vector<Mat>> T; // T[h][a] is S x S, column s -> next-state distribution; h in [0, H-1)
  std::vector<Mat> E;              // E[h] is O x S, column s -> observation distribution; h in [0, H)
  Mat r;                           // O x A, entries in [0, 1]
};

inline void validate(const TabularModel& m, double tol = 1e-12) {
  if (m.H < 1 || m.S < 1 || m.A < 1 || m.O < 1) throw InvalidModel("nonpositive dimensions");
  if (m.mu.size() != m.S) throw InvalidModel("mu size");
  if (m.mu.minCoeff() < 0.0 || std::abs(m.mu.sum() - 1.0) > tol) throw InvalidModel("mu not a distribution");
  if (static_cast<int>(m.T.size()) != m.H - 1) throw InvalidModel("T step count");
  for (int h = 0; h < m.H - 1; ++h) {
    if (static_cast<int>(m.T[h].size()) != m.A) throw InvalidModel("T action count");
    for (int a = 0; a < m.A; ++a) {
      const Mat& t = m.T[h][a];
      if (t.rows() != m.S || t.cols() != m.S) throw InvalidModel("T shape");
      if (t.minCoeff() < 0.0) throw InvalidModel("T negative entry");
      for (int s = 0; s < m.S; ++s)
        if (std::abs(t.col(s).sum() - 1.0) > tol) throw InvalidModel("T column not a distribution");
    }
  }
  if (static_cast<int>(m.E.size()) != m.H) throw InvalidModel("E step count");
  for (int h = 0; h < m.H; ++h) {
    const Mat& e = m.E[h];
    if (e.rows() != m.O || e.cols() != m.S) throw InvalidModel("E shape");
    if (e.minCoeff() < 0.0) throw InvalidModel("E negative entry");
    for (int s = 0; s < m.S; ++s)
      if (std::abs(e.col(s).sum() - 1.0) > tol) throw InvalidModel("E column not a distribution");
  }
  if (m.r.rows() != m.O || m.r.cols() != m.A) throw InvalidModel("r shape");
  if (m.r.minCoeff() < -tol || m.r.maxCoeff() > 1.0 + tol) throw InvalidModel("r out of [0,1]");
}

// Emission distribution of the virtual step H: point mass on kDummyObs.
inline Vec dummy_emission(int O) {
  Vec e = Vec::Zero(O);
  e[kDummyObs] = 1.0;
  return e;
}

// Linear kernel parametrization: T_h(s'|s,a) = u(s')^T M_{h,a} v(s) and
// E_h(o|s) = q(o)^T g_h(s), with u and q columns probability vectors.
struct LinearKernelModel {
  int H = 0, S = 0, A = 0, O = 0;
  Mat u, v;                        // S x d_u, S x d_v
  Mat q;                           // O x d_q
  std::vector<std::vector<Mat>> M; // M[h][a] is d_u x d_v, nonnegative
  std::vector<Mat> g;              // g[h] is d_q x S, nonnegative
  Vec mu;
  Mat r;

  Mat transition(int h, int a) const { return u * M[h][a] * v.transpose(); }  // S x S, (s', s)
  Mat emission(int h) const { return q * g[h]; }                              // O x S
};

// One-hot embedding: d_u = d_v = S, d_q = O, exact reconstruction.
inline LinearKernelModel embed_tabular(const TabularModel& m) {
  validate(m);
  LinearKernelModel lk;
  lk.H = m.H; lk.S = m.S; lk.A = m.A; lk.O = m.O;
  lk.u = Mat::Identity(m.S, m.S);
  lk.v = Mat::Identity(m.S, m.S);
  lk.q = Mat::Identity(m.O, m.O);
  lk.M = m.T;
  lk.g = m.E;
  lk.mu = m.mu;
  lk.r = m.r;
  return lk;
}

// Candidate grid sharing the spaces, initial distribution and rewards.
// true_index identifies the environment parameter; learners never read it.
struct ParameterFamily {
  std::vector<TabularModel> candidates;
  int true_index = 0;

  const TabularModel& truth() const { return candidates[true_index]; }
  int size() const { return static_cast<int>(candidates.size()); }
};

inline void validate(const ParameterFamily& fam, double tol = 1e-12) {
  if (fam.candidates.empty()) throw InvalidModel("empty candidate list");
  if (fam.true_index < 0 || fam.true_index >= fam.size()) throw InvalidModel("true_index out of range");
  const TabularModel& ref = fam.candidates.front();
  for (const TabularModel& m : fam.candidates) {
    validate(m, tol);
    if (m.H != ref.H || m.S != ref.S || m.A != ref.A || m.O != ref.O)
      throw InvalidModel("candidates disagree on spaces");
    if ((m.mu - ref.mu).cwiseAbs().maxCoeff() > tol) throw InvalidModel("candidates disagree on mu");
    if ((m.r - ref.r).cwiseAbs().maxCoeff() > tol) throw InvalidModel("candidates disagree on r");
  }
}

// Full history at step h (0-based): h+1 observations interleaved with h actions.
struct FullHistory {
  std::vector<int> obs;  // o_0..o_h
  std::vector<int> act;  // a_0..a_{h-1}

  int step() const { return static_cast<int>(obs.size()) - 1; }
};

// Deterministic policy: one action per observation history of each length.
// Level d holds O^(d+1) actions; history (o_0..o_d) indexes level d.
struct Policy {
  int H = 0, O = 0, A = 0;
  std::vector<std::vector<int>> act;

  static Policy constant(int H, int O, int A, int a) {
    Policy p;
    p.H = H; p.O = O; p.A = A;
    p.act.resize(H);
    long n = 1;
    for (int d = 0; d < H; ++d) {
      n *= O;
      p.act[d].assign(n, a);
    }
    return p;
  }

  int action_at(int level, long obs_index) const { return act[level][obs_index]; }

  int operator()(const std::vector<int>& obs_hist) const {
    long idx = 0;
    for (int o : obs_hist) idx = idx * O + o;
    return act[obs_hist.size() - 1][idx];
  }
};

struct MixingPolicy {
  std::vector<Policy> components;  // chosen uniformly at random per episode

  const Policy& pick(Rng& rng) const { return components[rng.uniform_int(components.size())]; }
};

inline MixingPolicy mix(const std::vector<Policy>& policies) {
  if (policies.empty()) throw Error("empty-list: mix needs at least one policy");
  return MixingPolicy{policies};
}

// Unnormalized filter: entry s equals the joint p_theta(obs, actions-as-given, s_h = s).
// Summing over s gives the history mass under the given action sequence.
inline Vec forward_belief(const TabularModel& m, const FullHistory& tau) {
  int h = tau.step();
  if (h < 0 || h >= m.H) throw IndexError("history step");
  if (static_cast<int>(tau.act.size()) != h) throw IndexError("history action count");
  for (int o : tau.obs)
    if (o < 0 || o >= m.O) throw IndexError("observation index");
  for (int a : tau.act)
    if (a < 0 || a >= m.A) throw IndexError("action index");
  Vec b = m.mu.cwiseProduct(m.E[0].row(tau.obs[0]).transpose());
  for (int j = 1; j <= h; ++j) {
    b = m.T[j - 1][tau.act[j - 1]] * b;
    b = b.cwiseProduct(m.E[j].row(tau.obs[j]).transpose());
  }
  return b;
}

struct Trajectory {
  std::vector<int> states;   // s_0..s_{H-1}
  std::vector<int> obs;      // o_0..o_{H-1}
  std::vector<int> actions;  // a_0..a_{H-1}
  Vec rewards;               // H
};

inline Trajectory sample_episode(const TabularModel& m, const Policy& policy, Rng& rng) {
  Trajectory t;
  t.rewards = Vec::Zero(m.H);
  int s = rng.categorical(m.mu);
  long obs_idx = 0;
  for (int h = 0; h < m.H; ++h) {
    int o = rng.categorical(m.E[h].col(s));
    obs_idx = obs_idx * m.O + o;
    int a = policy.action_at(h, obs_idx);
    t.states.push_back(s);
    t.obs.push_back(o);
    t.actions.push_back(a);
    t.rewards[h] = m.r(o, a);
    if (h + 1 < m.H) s = rng.categorical(m.T[h][a].col(s));
  }
  return t;
}

inline Trajectory sample_episode(const ParameterFamily& fam, const Policy& policy, Rng& rng) {
  return sample_episode(fam.truth(), policy, rng);
}

struct ObsTriple {
  int o_prev = 0, o_cur = 0, o_next = 0;  // (o_{h-1}, o_h, o_{h+1}); dummy at the end of the episode
};

// Runs policy actions up to step h-2, then forces a at step h-1 and a2 at
// step h (0-based: forced actions at code steps h-1 and h for h in [1, H)).
inline ObsTriple sample_intervention_triple(const TabularModel& m, const Policy& policy,
                                            int h, int a, int a2, Rng& rng) {
  if (h < 1 || h >= m.H) throw IndexError("intervention step");
  int s = rng.categorical(m.mu);
  ObsTriple out;
  long obs_idx = 0;
  for (int j = 0; j <= h; ++j) {
    int o = rng.categorical(m.E[j].col(s));
    obs_idx = obs_idx * m.O + o;
    if (j == h - 1) out.o_prev = o;
    if (j == h) out.o_cur = o;
    int action;
    if (j < h - 1) action = policy.action_at(j, obs_idx);
    else if (j == h - 1) action = a;
    else action = a2;
    if (j + 1 < m.H) s = rng.categorical(m.T[j][action].col(s));
  }
  if (h + 1 < m.H) {
    out.o_next = rng.categorical(m.E[h + 1].col(s));
  } else {
    out.o_next = kDummyObs;
  }
  return out;
}

inline ObsTriple sample_intervention_triple(const TabularModel& m, const MixingPolicy& policy,
                                            int h, int a, int a2, Rng& rng) {
  const Policy& p = policy.pick(rng);
  return sample_intervention_triple(m, p, h, a, a2, rng);
}

inline ObsTriple sample_intervention_triple(const ParameterFamily& fam, const Policy& policy,
                                            int h, int a, int a2, Rng& rng) {
  return sample_intervention_triple(fam.truth(), policy, h, a, a2, rng);
}

}  // namespace oprl
