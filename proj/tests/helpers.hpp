#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <oprl/oprl.hpp>

// Shared fixtures and independent oracles. Every oracle here enumerates state
// paths or solves a small dense problem directly; none calls the recursion it
// is used to check.
namespace testutil {

using oprl::Mat;
using oprl::Vec;

inline oprl::TabularModel random_model(std::uint64_t seed, int S, int A, int O, int H) {
  oprl::Rng rng(seed);
  oprl::TabularModel m;
  m.H = H;
  m.S = S;
  m.A = A;
  m.O = O;
  m.mu = oprl::random_simplex(S, rng);
  m.T.assign(H - 1, std::vector<Mat>(A, Mat::Zero(S, S)));
  for (int h = 0; h < H - 1; ++h)
    for (int a = 0; a < A; ++a)
      for (int s = 0; s < S; ++s) m.T[h][a].col(s) = oprl::random_simplex(S, rng);
  m.E.assign(H, Mat::Zero(O, S));
  for (int h = 0; h < H; ++h)
    for (int s = 0; s < S; ++s) m.E[h].col(s) = oprl::random_simplex(O, rng);
  m.r = Mat::Zero(O, A);
  for (int o = 0; o < O; ++o)
    for (int a = 0; a < A; ++a) m.r(o, a) = rng.uniform();
  oprl::validate(m);
  return m;
}

// Random model whose emission columns are well separated at every step, so
// bridges build with comfortable conditioning. Needs O >= S.
inline oprl::TabularModel random_bridgeable_model(std::uint64_t seed, int S, int A, int O,
                                                  int H) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    oprl::Rng sub = oprl::Rng::substream(seed, {1000u + static_cast<std::uint64_t>(attempt)});
    oprl::TabularModel m = random_model(sub.uniform_int(1 << 30), S, A, O, H);
    bool ok = true;
    for (int h = 0; h < H && ok; ++h) {
      Eigen::SelfAdjointEigenSolver<Mat> es(m.E[h].transpose() * m.E[h]);
      ok = es.eigenvalues().minCoeff() > 1e-3;
    }
    if (ok) return m;
  }
  throw oprl::GenerationError("no well-conditioned emission found");
}

inline oprl::TabularModel identity_emission_model(std::uint64_t seed, int S, int A, int H) {
  oprl::TabularModel m = random_model(seed, S, A, S, H);
  for (int h = 0; h < H; ++h) m.E[h] = Mat::Identity(S, S);
  return m;
}

// Point-mass dynamics: state s0 -> s0+a (mod S) deterministically, emission o = s.
inline oprl::TabularModel deterministic_model(int S, int A, int H) {
  oprl::TabularModel m;
  m.H = H;
  m.S = S;
  m.A = A;
  m.O = S;
  m.mu = Vec::Zero(S);
  m.mu[0] = 1.0;
  m.T.assign(H - 1, std::vector<Mat>(A, Mat::Zero(S, S)));
  for (int h = 0; h < H - 1; ++h)
    for (int a = 0; a < A; ++a)
      for (int s = 0; s < S; ++s) m.T[h][a]((s + a) % S, s) = 1.0;
  m.E.assign(H, Mat::Identity(S, S));
  m.r = Mat::Zero(S, A);
  for (int o = 0; o < S; ++o)
    for (int a = 0; a < A; ++a) m.r(o, a) = (o + a * 2) % 7 / 7.0;
  oprl::validate(m);
  return m;
}

inline oprl::Policy random_policy(std::uint64_t seed, int H, int O, int A) {
  oprl::Rng rng(seed);
  oprl::Policy p = oprl::Policy::constant(H, O, A, 0);
  for (int d = 0; d < H; ++d)
    for (std::size_t i = 0; i < p.act[d].size(); ++i) p.act[d][i] = rng.uniform_int(A);
  return p;
}

// Joint probability of one full history (observations with given actions),
// by explicit sum over all state paths.
inline double path_prob(const oprl::TabularModel& m, const std::vector<int>& obs,
                        const std::vector<int>& act) {
  int steps = static_cast<int>(obs.size());
  std::vector<int> sp(steps, 0);
  double total = 0.0;
  for (;;) {
    double p = m.mu[sp[0]] * m.E[0](obs[0], sp[0]);
    for (int j = 1; j < steps; ++j)
      p *= m.T[j - 1][act[j - 1]](sp[j], sp[j - 1]) * m.E[j](obs[j], sp[j]);
    total += p;
    int j = steps - 1;
    while (j >= 0 && ++sp[j] == m.S) sp[j--] = 0;
    if (j < 0) break;
  }
  return total;
}

// Probabilities of every full history at step h (inclusive), indexed like
// HistoryFunction, with actions read off the policy.
inline Vec oracle_history_probs(const oprl::TabularModel& m, const oprl::Policy& policy,
                                int h) {
  long n = oprl::fh_size(h, m.O, m.A);
  Vec out = Vec::Zero(n);
  for (long idx = 0; idx < n; ++idx) {
    oprl::FullHistory tau = oprl::fh_decode(idx, h, m.O, m.A);
    bool consistent = true;
    long obs_idx = tau.obs[0];
    for (int j = 0; j < h && consistent; ++j) {
      consistent = policy.act[j][obs_idx] == tau.act[j];
      obs_idx = obs_idx * m.O + tau.obs[j + 1];
    }
    if (consistent) out[idx] = path_prob(m, tau.obs, tau.act);
  }
  return out;
}

// Expected total reward by enumerating complete histories.
inline double oracle_J(const oprl::TabularModel& m, const oprl::Policy& policy) {
  Vec probs = oracle_history_probs(m, policy, m.H - 1);
  double J = 0.0;
  for (long idx = 0; idx < probs.size(); ++idx) {
    if (probs[idx] == 0.0) continue;
    oprl::FullHistory tau = oprl::fh_decode(idx, m.H - 1, m.O, m.A);
    double reward = 0.0;
    long obs_idx = tau.obs[0];
    for (int j = 0; j < m.H; ++j) {
      reward += m.r(tau.obs[j], policy.act[j][obs_idx]);
      if (j + 1 < m.H) obs_idx = obs_idx * m.O + tau.obs[j + 1];
    }
    J += probs[idx] * reward;
  }
  return J;
}

// Conditional expectation of Sigma r over steps j..H-1 given a prefix
// history, by direct continuation enumeration (assumes the prefix actions
// match the policy; rewards before the prefix end are included).
inline double oracle_conditional_reward(const oprl::TabularModel& m,
                                        const oprl::Policy& policy,
                                        const oprl::FullHistory& prefix) {
  int h = prefix.step();
  double mass = path_prob(m, prefix.obs, prefix.act);
  if (mass == 0.0) return 0.0;
  double acc = 0.0;
  std::function<void(oprl::FullHistory&, long)> walk = [&](oprl::FullHistory& tau,
                                                           long obs_idx) {
    int step = tau.step();
    if (step == m.H - 1) {
      double reward = 0.0;
      long oi = tau.obs[0];
      for (int j = 0; j < m.H; ++j) {
        int a = j < static_cast<int>(tau.act.size()) ? tau.act[j] : policy.act[j][oi];
        reward += m.r(tau.obs[j], a);
        if (j + 1 < m.H) oi = oi * m.O + tau.obs[j + 1];
      }
      acc += path_prob(m, tau.obs, tau.act) * reward;
      return;
    }
    int a = policy.act[step][obs_idx];
    for (int o = 0; o < m.O; ++o) {
      tau.act.push_back(a);
      tau.obs.push_back(o);
      walk(tau, obs_idx * m.O + o);
      tau.obs.pop_back();
      tau.act.pop_back();
    }
  };
  oprl::FullHistory tau = prefix;
  long obs_idx = tau.obs[0];
  for (int j = 1; j <= h; ++j) obs_idx = obs_idx * m.O + tau.obs[j];
  walk(tau, obs_idx);
  return acc / mass;
}

// Interventional triple law by prefix enumeration: policy actions to step
// h-2, forced a at h-1 and a2 at h, dummy observation past the horizon.
inline Vec oracle_triple_law(const oprl::TabularModel& m, const oprl::Policy& policy, int h,
                             int a, int a2) {
  Vec rho = Vec::Zero(static_cast<long>(m.O) * m.O * m.O);
  std::vector<int> obs, act;
  // obs holds o_0..o_j on entry; j counts the last materialized step
  std::function<void(int, long)> extend = [&](int j, long obs_idx) {
    if (j == h - 1) {
      int op = obs.back();
      for (int oc = 0; oc < m.O; ++oc) {
        act.push_back(a);
        obs.push_back(oc);
        if (h + 1 < m.H) {
          for (int on = 0; on < m.O; ++on) {
            act.push_back(a2);
            obs.push_back(on);
            rho[oprl::triple_index(op, oc, on, m.O)] += path_prob(m, obs, act);
            obs.pop_back();
            act.pop_back();
          }
        } else {
          rho[oprl::triple_index(op, oc, oprl::kDummyObs, m.O)] += path_prob(m, obs, act);
        }
        obs.pop_back();
        act.pop_back();
      }
      return;
    }
    int aj = policy.act[j][obs_idx];
    for (int o = 0; o < m.O; ++o) {
      act.push_back(aj);
      obs.push_back(o);
      extend(j + 1, obs_idx * m.O + o);
      obs.pop_back();
      act.pop_back();
    }
  };
  for (int o = 0; o < m.O; ++o) {
    obs.assign(1, o);
    act.clear();
    extend(0, o);
  }
  return rho;
}

inline Vec oracle_triple_law(const oprl::TabularModel& m, const oprl::MixingPolicy& mixing,
                             int h, int a, int a2) {
  Vec rho = Vec::Zero(static_cast<long>(m.O) * m.O * m.O);
  for (const oprl::Policy& p : mixing.components) rho += oracle_triple_law(m, p, h, a, a2);
  return rho / static_cast<double>(mixing.components.size());
}

// Finite-horizon MDP value iteration for identity-emission models.
inline double mdp_optimal_value(const oprl::TabularModel& m) {
  Vec V = Vec::Zero(m.S);
  for (int h = m.H - 1; h >= 0; --h) {
    Vec next(m.S);
    for (int s = 0; s < m.S; ++s) {
      double best = -1e300;
      for (int a = 0; a < m.A; ++a) {
        double q = m.r(s, a);
        if (h + 1 < m.H) q += m.T[h][a].col(s).dot(V);
        best = std::max(best, q);
      }
      next[s] = best;
    }
    V = next;
  }
  return m.mu.dot(V);
}

// Least-squares projection onto span(phi) in the K metric, solved through an
// explicit square-root factor and QR instead of the Gram inverse.
inline Vec qp_project(const Mat& kernel, const Mat& phi, const Vec& rho) {
  Eigen::SelfAdjointEigenSolver<Mat> es(kernel);
  Mat half = es.operatorSqrt();
  Vec coef = (half * phi).colPivHouseholderQr().solve(half * rho);
  return phi * coef;
}

// Lawson-Hanson style nonnegative least squares for small systems.
inline Vec nnls(const Mat& A, const Vec& b, int max_iter = 200) {
  int n = static_cast<int>(A.cols());
  std::vector<bool> active(n, false);
  Vec x = Vec::Zero(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    Vec grad = A.transpose() * (b - A * x);
    int best = -1;
    double best_g = 1e-12;
    for (int j = 0; j < n; ++j)
      if (!active[j] && grad[j] > best_g) {
        best_g = grad[j];
        best = j;
      }
    if (best < 0) break;
    active[best] = true;
    for (;;) {
      std::vector<int> idx;
      for (int j = 0; j < n; ++j)
        if (active[j]) idx.push_back(j);
      Mat Ap(A.rows(), idx.size());
      for (std::size_t c = 0; c < idx.size(); ++c) Ap.col(c) = A.col(idx[c]);
      Vec z = Ap.colPivHouseholderQr().solve(b);
      if (z.minCoeff() > 0) {
        x.setZero();
        for (std::size_t c = 0; c < idx.size(); ++c) x[idx[c]] = z[c];
        break;
      }
      double alpha = 1.0;
      for (std::size_t c = 0; c < idx.size(); ++c)
        if (z[c] <= 0) alpha = std::min(alpha, x[idx[c]] / (x[idx[c]] - z[c]));
      for (std::size_t c = 0; c < idx.size(); ++c) {
        x[idx[c]] += alpha * (z[c] - x[idx[c]]);
        if (x[idx[c]] <= 1e-14) {
          x[idx[c]] = 0.0;
          active[idx[c]] = false;
        }
      }
    }
  }
  return x;
}

// Convex-hull membership: min ||Ax - b|| with x >= 0, sum x = 1, via a
// sum-to-one penalty row inside nnls.
inline bool in_convex_hull(const Mat& cols, const Vec& target, double tol) {
  const double w = 1e4;
  Mat A(cols.rows() + 1, cols.cols());
  A.topRows(cols.rows()) = cols;
  A.bottomRows(1).setConstant(w);
  Vec b(target.size() + 1);
  b.head(target.size()) = target;
  b[target.size()] = w;
  Vec x = nnls(A, b);
  double resid = (cols * x - target).norm() + std::abs(x.sum() - 1.0);
  return resid <= tol;
}

inline oprl::ParameterFamily singleton_family(const oprl::TabularModel& m) {
  oprl::ParameterFamily fam;
  fam.candidates.push_back(m);
  fam.true_index = 0;
  return fam;
}

inline std::vector<oprl::TripleDataset> collect_data(const oprl::TabularModel& m,
                                                     const oprl::Policy& policy, int per_tuple,
                                                     std::uint64_t seed) {
  std::vector<oprl::TripleDataset> data(oprl::tuple_count(m.H, m.A));
  for (int k = 1; k <= per_tuple; ++k)
    for (int h = 1; h < m.H; ++h)
      for (int a = 0; a < m.A; ++a)
        for (int a2 = 0; a2 < m.A; ++a2) {
          oprl::Rng rng = oprl::Rng::substream(
              seed, {(std::uint64_t)k, (std::uint64_t)h, (std::uint64_t)a, (std::uint64_t)a2});
          data[oprl::tuple_index(h, a, a2, m.A)].samples.push_back(
              oprl::sample_intervention_triple(m, policy, h, a, a2, rng));
        }
  return data;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  for (double x : xs) out.mean += x;
  out.mean /= xs.size();
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  if (xs.size() > 1) var /= (xs.size() - 1);
  out.se = std::sqrt(var / xs.size());
  return out;
}

}  // namespace testutil
