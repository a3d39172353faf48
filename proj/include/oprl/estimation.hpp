#pragma once
#include <algorithm>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "oprl/bellman.hpp"
#include "oprl/model.hpp"
#include "oprl/rkhs.hpp"

// Datasets of observation triples, the forward and adjoint triple operators,
// the projected discrepancy loss, and confidence sets over candidates.
namespace oprl {

// Experiment tuples (h, a, a2) with h in [1, H): first forced action a at
// step h-1, second forced action a2 at step h.
inline int tuple_index(int h, int a, int a2, int A) { return ((h - 1) * A + a) * A + a2; }
inline int tuple_count(int H, int A) { return (H - 1) * A * A; }

struct TripleDataset {
  std::vector<ObsTriple> samples;
};

inline Vec empirical_distribution(const TripleDataset& data, int O) {
  if (data.samples.empty()) throw EmptyDataset("no triples collected");
  Vec rho = Vec::Zero(static_cast<long>(O) * O * O);
  for (const ObsTriple& t : data.samples) rho[triple_index(t.o_prev, t.o_cur, t.o_next, O)] += 1.0;
  return rho / static_cast<double>(data.samples.size());
}

// Forward triple operator: contract f against the step tensor in the
// replicate pair, leaving a function constant in the third coordinate.
inline Vec apply_F(const BTensor& bt, int O, const Vec& f) {
  Vec out(static_cast<long>(O) * O * O);
  for (int o1 = 0; o1 < O; ++o1)
    for (int o2 = 0; o2 < O; ++o2) {
      double acc = 0.0;
      for (int m = 0; m < O * O; ++m)
        acc += f[static_cast<long>(o1) * O * O + m] * bt.flat(o2, m);
      for (int o3 = 0; o3 < O; ++o3) out[triple_index(o1, o2, o3, O)] = acc;
    }
  return out;
}

// Adjoint of apply_F on (signed) measures over triples.
inline Vec apply_F_adjoint(const BTensor& bt, int O, const Vec& rho) {
  Vec out = Vec::Zero(static_cast<long>(O) * O * O);
  for (int o1 = 0; o1 < O; ++o1) {
    Vec marg = Vec::Zero(O);  // sum over the third coordinate
    for (int o2 = 0; o2 < O; ++o2)
      for (int o3 = 0; o3 < O; ++o3) marg[o2] += rho[triple_index(o1, o2, o3, O)];
    for (int m = 0; m < O * O; ++m) {
      double acc = 0.0;
      for (int o2 = 0; o2 < O; ++o2) acc += marg[o2] * bt.flat(o2, m);
      out[static_cast<long>(o1) * O * O + m] = acc;
    }
  }
  return out;
}

// Exact law of the intervention triple at (h, a, a2) under the policy:
// policy actions before step h-1, then the two forced actions.
inline Vec exact_triple_law(const TabularModel& m, const Policy& policy, int h, int a, int a2) {
  if (h < 1 || h >= m.H) throw IndexError("triple step must be in [1, H)");
  Vec rho = Vec::Zero(static_cast<long>(m.O) * m.O * m.O);
  std::function<void(int, long, const Vec&)> walk = [&](int j, long obs_idx, const Vec& b) {
    if (b.sum() <= 0.0) return;
    if (j == h - 1) {
      int o_prev = static_cast<int>(obs_idx % m.O);
      Vec through = m.T[h - 1][a] * b;
      for (int o_cur = 0; o_cur < m.O; ++o_cur) {
        Vec b2 = through.cwiseProduct(m.E[h].row(o_cur).transpose());
        if (h + 1 < m.H) {
          Vec next = m.E[h + 1] * (m.T[h][a2] * b2);
          for (int o_next = 0; o_next < m.O; ++o_next)
            rho[triple_index(o_prev, o_cur, o_next, m.O)] += next[o_next];
        } else {
          rho[triple_index(o_prev, o_cur, kDummyObs, m.O)] += b2.sum();
        }
      }
      return;
    }
    int act = policy.action_at(j, obs_idx);
    Vec through = m.T[j][act] * b;
    for (int o = 0; o < m.O; ++o)
      walk(j + 1, obs_idx * m.O + o, through.cwiseProduct(m.E[j + 1].row(o).transpose()));
  };
  for (int o = 0; o < m.O; ++o)
    walk(0, o, m.mu.cwiseProduct(m.E[0].row(o).transpose()));
  return rho;
}

inline Vec exact_triple_law(const TabularModel& m, const MixingPolicy& mixing, int h, int a,
                            int a2) {
  Vec rho = Vec::Zero(static_cast<long>(m.O) * m.O * m.O);
  for (const Policy& p : mixing.components) rho += exact_triple_law(m, p, h, a, a2);
  return rho / mixing.components.size();
}

// Projected discrepancy of a candidate against the collected datasets:
// per tuple, the l1 norm of (adjoint - identity) applied to the projected
// empirical law; the best bounded discriminator is its sign pattern.
struct LossReport {
  double value = 0.0;              // max over tuples
  std::vector<double> per_tuple;   // tuple_index order
  std::vector<Vec> residual;       // per tuple: projected adjoint residual c
  std::vector<Vec> f_star;         // per tuple: sign(c), the maximizing discriminator
  std::vector<int> argmax_tuples;  // every tuple attaining the max
};

inline LossReport compute_loss(const TabularModel& m, const Bridge& bridge,
                               const std::vector<TripleDataset>& data, const Mat& kernel,
                               const ObsBases& bases, const GramG& gram) {
  LossReport report;
  int n_t = tuple_count(m.H, m.A);
  report.per_tuple.assign(n_t, 0.0);
  report.residual.resize(n_t);
  report.f_star.resize(n_t);
  for (int h = 1; h < m.H; ++h)
    for (int a2 = 0; a2 < m.A; ++a2) {
      BTensor bt = build_B_tensor(m, bridge, h, a2);
      for (int a = 0; a < m.A; ++a) {
        int t = tuple_index(h, a, a2, m.A);
        Vec rho_hat = project_distribution(kernel, bases, gram,
                                           empirical_distribution(data[t], m.O));
        Vec c = apply_F_adjoint(bt, m.O, rho_hat) - rho_hat;
        report.per_tuple[t] = c.lpNorm<1>();
        report.f_star[t] = c.array().sign();
        report.residual[t] = std::move(c);
      }
    }
  report.value = *std::max_element(report.per_tuple.begin(), report.per_tuple.end());
  for (int t = 0; t < n_t; ++t)
    if (report.per_tuple[t] == report.value) report.argmax_tuples.push_back(t);
  return report;
}

// Candidates whose loss clears the threshold; never empty, falls back to the
// single best candidate (lowest index on ties).
inline std::vector<int> confidence_set(const std::vector<double>& losses, double threshold) {
  std::vector<int> keep;
  for (size_t i = 0; i < losses.size(); ++i)
    if (losses[i] <= threshold) keep.push_back(static_cast<int>(i));
  if (keep.empty()) {
    int best = static_cast<int>(std::min_element(losses.begin(), losses.end()) - losses.begin());
    keep.push_back(best);
  }
  return keep;
}

// Conditional bias of a step function given the previous latent state under
// the model and policy: e[s] = |E[X | s_{h-1} = s]|, zero where the state is
// unreachable. At h = 0 the vector has one unconditional entry.
struct StepError {
  Vec per_state;   // |conditional mean| per state at step h-1 (size 1 at h = 0)
  Vec state_prob;  // marginal of s_{h-1} under the model and policy
  double mean = 0.0;
};

inline StepError step_error(const TabularModel& m, const Policy& policy, int h,
                            const HistoryFunction& X) {
  if (X.h != h) throw IndexError("step_error function level");
  StepError out;
  if (h == 0) {
    Vec p0 = m.E[0] * m.mu;  // law of the first observation
    double num = 0.0;
    for (int o = 0; o < m.O; ++o) num += X.v[o] * p0[o];
    out.per_state = Vec::Constant(1, std::abs(num));
    out.state_prob = Vec::Constant(1, 1.0);
    out.mean = std::abs(num);
    return out;
  }
  Vec num = Vec::Zero(m.S), den = Vec::Zero(m.S);
  std::function<void(int, long, long, const Vec&)> walk =
      [&](int j, long obs_idx, long fh_idx, const Vec& b) {
        if (j == h - 1) {
          int act = policy.action_at(j, obs_idx);
          for (int o = 0; o < m.O; ++o) {
            long child = fh_child(fh_idx, act, o, m.O, m.A);
            double x = X.v[child];
            // weight of reaching (history, s_{h-1} = s) then emitting o at step h
            for (int s = 0; s < m.S; ++s) {
              double w = b[s] * m.E[h].row(o).dot(m.T[h - 1][act].col(s));
              num[s] += x * w;
              den[s] += w;
            }
          }
          return;
        }
        int act = policy.action_at(j, obs_idx);
        Vec through = m.T[j][act] * b;
        for (int o = 0; o < m.O; ++o)
          walk(j + 1, obs_idx * m.O + o, fh_child(fh_idx, act, o, m.O, m.A),
               through.cwiseProduct(m.E[j + 1].row(o).transpose()));
      };
  for (int o = 0; o < m.O; ++o)
    walk(0, o, o, m.mu.cwiseProduct(m.E[0].row(o).transpose()));
  out.per_state = Vec::Zero(m.S);
  out.state_prob = den;
  for (int s = 0; s < m.S; ++s)
    if (den[s] > 0.0) out.per_state[s] = std::abs(num[s]) / den[s];
  out.mean = out.per_state.dot(out.state_prob);
  return out;
}

}  // namespace oprl
