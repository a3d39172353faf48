#pragma once
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "oprl/bellman.hpp"
#include "oprl/estimation.hpp"
#include "oprl/model.hpp"
#include "oprl/planner.hpp"
#include "oprl/rkhs.hpp"
#include "oprl/rng.hpp"

// Lagrangian relaxation of the confidence constraint with stochastic
// gradients: a softmax model family, bounded discriminators, unbiased
// estimators for the dual, discriminator, and model gradients, and the
// primal-dual loop tying them together.
namespace oprl {

// Differentiable model family: every transition and emission column is the
// softmax of its own logit block; mu and r are fixed by the base model.
struct SmoothFamily {
  TabularModel base;

  int dim() const {
    return (base.H - 1) * base.A * base.S * base.S + base.H * base.S * base.O;
  }
  // logit block offsets; transition blocks first, then emission blocks
  int t_block(int h, int a, int s) const {
    return ((h * base.A + a) * base.S + s) * base.S;
  }
  int e_block(int h, int s) const {
    return (base.H - 1) * base.A * base.S * base.S + (h * base.S + s) * base.O;
  }

  static Vec softmax(const Vec& z) {
    Vec e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
  }

  TabularModel model(const Vec& theta) const {
    if (theta.size() != dim()) throw IndexError("smooth parameter size");
    TabularModel m = base;
    for (int h = 0; h < base.H - 1; ++h)
      for (int a = 0; a < base.A; ++a)
        for (int s = 0; s < base.S; ++s)
          m.T[h][a].col(s) = softmax(theta.segment(t_block(h, a, s), base.S));
    for (int h = 0; h < base.H; ++h)
      for (int s = 0; s < base.S; ++s)
        m.E[h].col(s) = softmax(theta.segment(e_block(h, s), base.O));
    return m;
  }

  // logits whose softmax recovers the given model's columns
  Vec theta_at(const TabularModel& m) const {
    Vec theta(dim());
    for (int h = 0; h < base.H - 1; ++h)
      for (int a = 0; a < base.A; ++a)
        for (int s = 0; s < base.S; ++s)
          theta.segment(t_block(h, a, s), base.S) =
              m.T[h][a].col(s).cwiseMax(1e-12).array().log();
    for (int h = 0; h < base.H; ++h)
      for (int s = 0; s < base.S; ++s)
        theta.segment(e_block(h, s), base.O) = m.E[h].col(s).cwiseMax(1e-12).array().log();
    return theta;
  }

  struct ParamRef {
    bool is_emission = false;
    int h = 0, a = 0, s = 0, idx = 0;  // idx: the coordinate within the column
  };

  ParamRef decode(int j) const {
    ParamRef p;
    int nt = (base.H - 1) * base.A * base.S * base.S;
    if (j < nt) {
      p.idx = j % base.S;
      j /= base.S;
      p.s = j % base.S;
      j /= base.S;
      p.a = j % base.A;
      p.h = j / base.A;
    } else {
      j -= nt;
      p.is_emission = true;
      p.idx = j % base.O;
      j /= base.O;
      p.s = j % base.S;
      p.h = j / base.S;
    }
    return p;
  }
};

// d(softmax column p) in the direction of its idx-th logit
inline Vec dsoftmax_col(const Vec& p, int idx) {
  Vec d = -p[idx] * p;
  d[idx] += p[idx];
  return d;
}

// Bounded discriminators per tuple: f^w(x) = tanh(w[t][x]) over indicator
// triple features; the sup-norm bound holds for every w.
inline Vec discriminator(const Mat& w, int t) {
  return w.row(t).transpose().array().tanh();
}

inline Vec discriminator_slope(const Mat& w, int t) {
  Vec f = discriminator(w, t);
  return (1.0 - f.array().square()).matrix();
}

struct DualState {
  Vec lambda;  // one multiplier per tuple, kept nonnegative by projection
  double eta_theta = 1e-2, eta_lambda = 1e-2, eta_w = 1e-2;
  int N_dual = 50, N_primal = 1;
};

inline Bridge bridge_for(const TabularModel& m, const Mat& kernel_obs) {
  LinearKernelModel lin = embed_tabular(m);
  StateBases sb = build_state_bases(lin);
  return build_bridge(m, sb, kernel_obs);
}

// Exact per-tuple constraint values: the projected discrepancy of the model
// against each dataset, tested by the current discriminator, minus the
// shrinking radius.
inline Vec exact_constraints(const TabularModel& m, const Bridge& bridge, const Mat& w,
                             const std::vector<TripleDataset>& data, const Mat& kernel_triples,
                             const ObsBases& bases, const GramG& gram, double beta, int k) {
  double shrink = beta / std::sqrt(static_cast<double>(k));
  Vec out(tuple_count(m.H, m.A));
  for (int h = 1; h < m.H; ++h)
    for (int a2 = 0; a2 < m.A; ++a2) {
      BTensor bt = build_B_tensor(m, bridge, h, a2);
      for (int a = 0; a < m.A; ++a) {
        int t = tuple_index(h, a, a2, m.A);
        Vec f = discriminator(w, t);
        Vec diff = apply_S(kernel_triples, bases, gram, apply_F(bt, m.O, f)) -
                   apply_S(kernel_triples, bases, gram, f);
        Vec emp = empirical_distribution(data[t], m.O);
        out[t] = emp.dot(diff) - shrink;
      }
    }
  return out;
}

// Exact Lagrangian: minus the planned value plus the multiplier-weighted
// constraint values.
inline double lagrangian(const SmoothFamily& fam, const Vec& theta, const Vec& lambda,
                         const Mat& w, const std::vector<TripleDataset>& data,
                         const Mat& kernel_obs, const Mat& kernel_triples, const ObsBases& bases,
                         const GramG& gram, double beta, int k, long plan_budget = 1000000) {
  TabularModel m = fam.model(theta);
  Bridge bridge = bridge_for(m, kernel_obs);
  double L = -plan_exact(m, plan_budget).value;
  Vec c = exact_constraints(m, bridge, w, data, kernel_triples, bases, gram, beta, k);
  return L + lambda.dot(c);
}

// One importance-sampling term of the smoothed-operator estimators: draws
// feature-law points Y, Y2 and a uniform replicate pair per Gram entry.
// The estimators below average batch single-draw estimates; each is unbiased
// for its exact partial derivative of the Lagrangian.

inline Vec grad_lambda_hat(const TabularModel& m, const Bridge& bridge, const Mat& w,
                           const std::vector<TripleDataset>& data, const Mat& kernel_triples,
                           const ObsBases& bases, const GramG& gram, double beta, int k,
                           int batch, Rng& rng) {
  if (batch < 1) throw ValidationError("gradient batch must be positive");
  const int O = m.O, d = bases.dim();
  const double pair_weight = static_cast<double>(O) * O;  // inverse uniform proposal
  double shrink = beta / std::sqrt(static_cast<double>(k));
  Vec g(tuple_count(m.H, m.A));
  for (int h = 1; h < m.H; ++h)
    for (int a2 = 0; a2 < m.A; ++a2) {
      BTensor bt = build_B_tensor(m, bridge, h, a2);
      for (int a = 0; a < m.A; ++a) {
        int t = tuple_index(h, a, a2, m.A);
        if (data[t].samples.empty()) throw EmptyDataset("gradient draw from empty dataset");
        Vec f = discriminator(w, t);
        double acc = 0.0;
        for (int b = 0; b < batch; ++b) {
          const ObsTriple& xt = data[t].samples[rng.uniform_int(data[t].samples.size())];
          long x = triple_index(xt.o_prev, xt.o_cur, xt.o_next, O);
          for (int i = 0; i < d; ++i)
            for (int jj = 0; jj < d; ++jj) {
              long Y = rng.categorical(bases.phi.col(i));
              long Y2 = rng.categorical(bases.phi.col(jj));
              int ot = rng.uniform_int(O), otp = rng.uniform_int(O);
              int y1 = static_cast<int>(Y2 / (O * O)), y2 = static_cast<int>((Y2 / O) % O);
              double base = gram.Ginv(i, jj) * kernel_triples(x, Y);
              acc += base * (f[triple_index(y1, ot, otp, O)] * bt.flat(y2, ot * O + otp) *
                                 pair_weight -
                             f[Y2]);
            }
        }
        g[t] = acc / batch - shrink;
      }
    }
  return g;
}

inline Mat grad_w_hat(const TabularModel& m, const Bridge& bridge, const Vec& lambda,
                      const Mat& w, const std::vector<TripleDataset>& data,
                      const Mat& kernel_triples, const ObsBases& bases, const GramG& gram,
                      int batch, Rng& rng) {
  if (batch < 1) throw ValidationError("gradient batch must be positive");
  const int O = m.O, d = bases.dim();
  const double pair_weight = static_cast<double>(O) * O;
  Mat g = Mat::Zero(w.rows(), w.cols());
  for (int h = 1; h < m.H; ++h)
    for (int a2 = 0; a2 < m.A; ++a2) {
      BTensor bt = build_B_tensor(m, bridge, h, a2);
      for (int a = 0; a < m.A; ++a) {
        int t = tuple_index(h, a, a2, m.A);
        if (data[t].samples.empty()) throw EmptyDataset("gradient draw from empty dataset");
        Vec slope = discriminator_slope(w, t);
        double scale = lambda[t] / batch;
        for (int b = 0; b < batch; ++b) {
          const ObsTriple& xt = data[t].samples[rng.uniform_int(data[t].samples.size())];
          long x = triple_index(xt.o_prev, xt.o_cur, xt.o_next, O);
          for (int i = 0; i < d; ++i)
            for (int jj = 0; jj < d; ++jj) {
              long Y = rng.categorical(bases.phi.col(i));
              long Y2 = rng.categorical(bases.phi.col(jj));
              int ot = rng.uniform_int(O), otp = rng.uniform_int(O);
              int y1 = static_cast<int>(Y2 / (O * O)), y2 = static_cast<int>((Y2 / O) % O);
              double base = scale * gram.Ginv(i, jj) * kernel_triples(x, Y);
              long rep = triple_index(y1, ot, otp, O);
              g(t, rep) += base * slope[rep] * bt.flat(y2, ot * O + otp) * pair_weight;
              g(t, Y2) -= base * slope[Y2];
            }
        }
      }
    }
  return g;
}

// Derivative of the step tensor in the direction of one logit; the identity
// state embedding makes the bridge depend on the emissions only.
inline Mat btensor_derivative(const SmoothFamily& fam, const TabularModel& m,
                              const Bridge& bridge, const Mat& kernel_obs, int h, int a2,
                              int j) {
  const int S = m.S, O = m.O;
  SmoothFamily::ParamRef p = fam.decode(j);
  Mat dE_h = Mat::Zero(O, S), dE_n = Mat::Zero(O, S), dT = Mat::Zero(S, S);
  bool touches = false;
  if (p.is_emission) {
    if (p.h == h) {
      dE_h.col(p.s) = dsoftmax_col(m.E[h].col(p.s), p.idx);
      touches = true;
    }
    if (p.h == h + 1 && h + 1 < m.H) {
      dE_n.col(p.s) = dsoftmax_col(m.E[h + 1].col(p.s), p.idx);
      touches = true;
    }
  } else if (p.h == h && p.a == a2 && h + 1 < m.H) {
    dT.col(p.s) = dsoftmax_col(m.T[h][a2].col(p.s), p.idx);
    touches = true;
  }
  if (!touches) return Mat::Zero(O, O * O);
  const Mat& E = m.E[h];
  Mat next, dnext;
  if (h + 1 < m.H) {
    next = m.E[h + 1] * m.T[h][a2];
    dnext = dE_n * m.T[h][a2] + m.E[h + 1] * dT;
  } else {
    next = dummy_emission(O) * Vec::Ones(S).transpose();
    dnext = Mat::Zero(O, S);
  }
  const Mat& Z = bridge.Z[h];  // S x O
  Mat lam_inv = bridge.Lambda[h].inverse();
  Mat dLam = dE_h.transpose() * kernel_obs * E + E.transpose() * kernel_obs * dE_h;
  Mat dZ = -lam_inv * dLam * Z + lam_inv * dE_h.transpose() * kernel_obs;
  Mat W(S, O * O), dW(S, O * O);
  for (int s = 0; s < S; ++s)
    for (int ot = 0; ot < O; ++ot)
      for (int otp = 0; otp < O; ++otp) {
        W(s, ot * O + otp) = E(ot, s) * next(otp, s);
        dW(s, ot * O + otp) = dE_h(ot, s) * next(otp, s) + E(ot, s) * dnext(otp, s);
      }
  return dZ.transpose() * W + Z.transpose() * dW;
}

// Model-parameter gradient: score-function estimator for the planned value
// (policy held fixed by the envelope argument, trajectories from a simulator
// at theta) plus the importance-sampling term through the tensor derivative.
inline Vec grad_theta_hat(const SmoothFamily& fam, const Vec& theta, const Vec& lambda,
                          const Mat& w, const std::vector<TripleDataset>& data,
                          const Mat& kernel_obs, const Mat& kernel_triples,
                          const ObsBases& bases, const GramG& gram, int batch, Rng& rng,
                          long plan_budget = 1000000) {
  if (batch < 1) throw ValidationError("gradient batch must be positive");
  TabularModel m = fam.model(theta);
  Bridge bridge = bridge_for(m, kernel_obs);
  PlanResult plan = plan_exact(m, plan_budget);
  const int O = m.O, P = fam.dim(), d = bases.dim();
  const double pair_weight = static_cast<double>(O) * O;
  Vec g = Vec::Zero(P);
  for (int b = 0; b < batch; ++b) {
    Trajectory tr = sample_episode(m, plan.policy, rng);
    double R = tr.rewards.sum();
    if (R == 0.0) continue;  // zero-return draws contribute nothing
    Vec score = Vec::Zero(P);
    for (int h = 0; h < m.H; ++h) {
      int s = tr.states[h], o = tr.obs[h];
      int off = fam.e_block(h, s);
      score.segment(off, O) -= m.E[h].col(s);
      score[off + o] += 1.0;
      if (h + 1 < m.H) {
        int a = tr.actions[h], s2 = tr.states[h + 1];
        int toff = fam.t_block(h, a, s);
        score.segment(toff, m.S) -= m.T[h][a].col(s);
        score[toff + s2] += 1.0;
      }
    }
    g -= (R / batch) * score;
  }
  for (int h = 1; h < m.H; ++h)
    for (int a2 = 0; a2 < m.A; ++a2) {
      std::vector<Mat> dflat(P);
      for (int j = 0; j < P; ++j)
        dflat[j] = btensor_derivative(fam, m, bridge, kernel_obs, h, a2, j);
      for (int a = 0; a < m.A; ++a) {
        int t = tuple_index(h, a, a2, m.A);
        if (data[t].samples.empty()) throw EmptyDataset("gradient draw from empty dataset");
        Vec f = discriminator(w, t);
        double scale = lambda[t] / batch;
        for (int b = 0; b < batch; ++b) {
          const ObsTriple& xt = data[t].samples[rng.uniform_int(data[t].samples.size())];
          long x = triple_index(xt.o_prev, xt.o_cur, xt.o_next, O);
          for (int i = 0; i < d; ++i)
            for (int jj = 0; jj < d; ++jj) {
              long Y = rng.categorical(bases.phi.col(i));
              long Y2 = rng.categorical(bases.phi.col(jj));
              int ot = rng.uniform_int(O), otp = rng.uniform_int(O);
              int y1 = static_cast<int>(Y2 / (O * O)), y2 = static_cast<int>((Y2 / O) % O);
              double coef = scale * gram.Ginv(i, jj) * kernel_triples(x, Y) *
                            f[triple_index(y1, ot, otp, O)] * pair_weight;
              if (coef == 0.0) continue;
              int col = ot * O + otp;
              for (int j = 0; j < P; ++j) g[j] += coef * dflat[j](y2, col);
            }
        }
      }
    }
  return g;
}

struct TraceRow {
  int step = 0;
  double lagrangian = 0.0;
  double grad_theta_norm = 0.0, grad_lambda_norm = 0.0, grad_w_norm = 0.0;
  double max_residual = 0.0;  // largest exact constraint value
  bool policy_switched = false;
};

struct SolveResult {
  Vec theta;
  Vec lambda;
  Mat w;
  std::vector<TraceRow> trace;
};

// Primal-dual loop: N_dual ascent steps on (lambda, w), then N_primal
// descent steps on theta, per outer iteration.
inline SolveResult solve_minimax(const SmoothFamily& fam, const Vec& theta0,
                                 const std::vector<TripleDataset>& data, const Mat& kernel_obs,
                                 const Mat& kernel_triples, const ObsBases& bases,
                                 const GramG& gram, double beta, int k, DualState dual,
                                 int iterations, int batch, Rng& rng,
                                 long plan_budget = 1000000) {
  SolveResult out;
  out.theta = theta0;
  int n_t = tuple_count(fam.base.H, fam.base.A);
  if (dual.lambda.size() == 0) dual.lambda = Vec::Zero(n_t);
  out.w = Mat::Zero(n_t, static_cast<long>(fam.base.O) * fam.base.O * fam.base.O);
  std::vector<std::vector<int>> prev_plan;
  for (int step = 0; step < iterations; ++step) {
    TabularModel m = fam.model(out.theta);
    Bridge bridge = bridge_for(m, kernel_obs);
    TraceRow row;
    row.step = step;
    for (int n = 0; n < dual.N_dual; ++n) {
      Vec gl = grad_lambda_hat(m, bridge, out.w, data, kernel_triples, bases, gram, beta, k,
                               batch, rng);
      dual.lambda = (dual.lambda + dual.eta_lambda * gl).cwiseMax(0.0);
      Mat gw = grad_w_hat(m, bridge, dual.lambda, out.w, data, kernel_triples, bases, gram,
                          batch, rng);
      out.w += dual.eta_w * gw;
      row.grad_lambda_norm = gl.norm();
      row.grad_w_norm = gw.norm();
    }
    for (int n = 0; n < dual.N_primal; ++n) {
      Vec gt = grad_theta_hat(fam, out.theta, dual.lambda, out.w, data, kernel_obs,
                              kernel_triples, bases, gram, batch, rng, plan_budget);
      out.theta -= dual.eta_theta * gt;
      row.grad_theta_norm = gt.norm();
    }
    TabularModel m2 = fam.model(out.theta);
    Bridge bridge2 = bridge_for(m2, kernel_obs);
    PlanResult plan = plan_exact(m2, plan_budget);
    row.policy_switched = !prev_plan.empty() && plan.policy.act != prev_plan;
    prev_plan = plan.policy.act;
    row.lagrangian = -plan.value;
    Vec c = exact_constraints(m2, bridge2, out.w, data, kernel_triples, bases, gram, beta, k);
    row.lagrangian += dual.lambda.dot(c);
    row.max_residual = c.maxCoeff();
    out.trace.push_back(row);
  }
  out.lambda = dual.lambda;
  return out;
}

}  // namespace oprl
