#pragma once
#include <vector>

#include <Eigen/Dense>

#include "oprl/errors.hpp"
#include "oprl/model.hpp"

// Basis distributions over states and observation triples, the observation
// operator, and its left inverse on the state-basis span.
namespace oprl {

struct StateBases {
  Mat psi;  // S x d_s, columns are probability vectors

  int dim() const { return static_cast<int>(psi.cols()); }
};

struct ObsBases {
  Mat phi;  // O^3 x d_o, columns are probability vectors over triples

  int dim() const { return static_cast<int>(phi.cols()); }
};

// Triple index convention used everywhere: (o_prev, o_cur, o_next) flattens to
// (o_prev * O + o_cur) * O + o_next.
inline long triple_index(int o_prev, int o_cur, int o_next, int O) {
  return (static_cast<long>(o_prev) * O + o_cur) * O + o_next;
}

// Columns are the u columns plus every normalized elementwise product
// u_i .* v_j with nonzero mass; duplicates within l1 distance 1e-12 dropped.
inline StateBases build_state_bases(const LinearKernelModel& m) {
  std::vector<Vec> cols;
  auto push_unique = [&](const Vec& c) {
    for (const Vec& have : cols)
      if ((have - c).lpNorm<1>() <= 1e-12) return;
    cols.push_back(c);
  };
  for (int i = 0; i < m.u.cols(); ++i) push_unique(m.u.col(i));
  for (int i = 0; i < m.u.cols(); ++i)
    for (int j = 0; j < m.v.cols(); ++j) {
      Vec prod = m.u.col(i).cwiseProduct(m.v.col(j));
      double mass = prod.sum();
      if (mass <= 0.0) continue;  // zero-mass product, dropped
      push_unique(prod / mass);
    }
  StateBases b;
  b.psi.resize(m.S, cols.size());
  for (size_t c = 0; c < cols.size(); ++c) b.psi.col(c) = cols[c];
  return b;
}

// Triple products q_i (x) q_j (x) q_l in the triple_index layout; d_o = d_q^3.
inline ObsBases build_obs_bases(const LinearKernelModel& m) {
  int dq = static_cast<int>(m.q.cols());
  int O = m.O;
  ObsBases b;
  b.phi.resize(static_cast<long>(O) * O * O, static_cast<long>(dq) * dq * dq);
  for (int i = 0; i < dq; ++i)
    for (int j = 0; j < dq; ++j)
      for (int l = 0; l < dq; ++l) {
        long c = (static_cast<long>(i) * dq + j) * dq + l;
        for (int o1 = 0; o1 < O; ++o1)
          for (int o2 = 0; o2 < O; ++o2)
            for (int o3 = 0; o3 < O; ++o3)
              b.phi(triple_index(o1, o2, o3, O), c) = m.q(o1, i) * m.q(o2, j) * m.q(o3, l);
      }
  return b;
}

// Observation operator at step h: maps a signed measure over states to the
// induced signed measure over observations.
inline Vec apply_O(const TabularModel& m, int h, const Vec& f) {
  if (h < 0 || h >= m.H) throw IndexError("emission step");
  return m.E[h] * f;
}

// Left inverse of the observation operator on span(psi), its per-step
// ingredients, and the l1 operator-norm bound gamma.
struct Bridge {
  std::vector<Mat> nu;      // per step: O x d_s, column i is the image of psi_i
  std::vector<Mat> Lambda;  // per step: d_s x d_s, symmetric positive definite
  std::vector<Mat> Z;       // per step: S x O
  double gamma = 0.0;       // d_s * max_h ||Lambda_h^{-1}||_{1->1}
  std::vector<double> lambda_min;  // per step, smallest eigenvalue of Lambda_h
  std::vector<double> cond;        // per step, condition number of Lambda_h
};

// kernel_tilde is an O x O symmetric kernel matrix with |entries| <= 1.
inline Bridge build_bridge(const TabularModel& m, const StateBases& bases, const Mat& kernel_tilde,
                           double pd_tol = 1e-10) {
  if (kernel_tilde.rows() != m.O || kernel_tilde.cols() != m.O)
    throw InvalidModel("kernel_tilde shape");
  if (kernel_tilde.cwiseAbs().maxCoeff() > 1.0 + 1e-12)
    throw InvalidModel("kernel_tilde entries exceed 1 in magnitude");
  int ds = bases.dim();
  Bridge br;
  double max_inv_norm = 0.0;
  for (int h = 0; h < m.H; ++h) {
    Mat nu = m.E[h] * bases.psi;                       // O x d_s
    Mat lambda = nu.transpose() * kernel_tilde * nu;   // d_s x d_s
    lambda = 0.5 * (lambda + lambda.transpose());      // symmetrize round-off
    Eigen::SelfAdjointEigenSolver<Mat> eig(lambda);
    double lmin = eig.eigenvalues().minCoeff();
    double lmax = eig.eigenvalues().maxCoeff();
    if (lmin <= pd_tol)
      throw SingularLambda("step " + std::to_string(h) + " min eigenvalue " + std::to_string(lmin));
    Mat inv = eig.eigenvectors() *
              eig.eigenvalues().cwiseInverse().asDiagonal() *
              eig.eigenvectors().transpose();
    // ||.||_{1->1} of the inverse: max over columns of the absolute column sum
    double inv_norm = inv.cwiseAbs().colwise().sum().maxCoeff();
    max_inv_norm = std::max(max_inv_norm, inv_norm);
    br.nu.push_back(nu);
    br.Lambda.push_back(lambda);
    br.Z.push_back(bases.psi * inv * nu.transpose() * kernel_tilde);  // S x O
    br.lambda_min.push_back(lmin);
    br.cond.push_back(lmax / lmin);
  }
  br.gamma = ds * max_inv_norm;
  return br;
}

inline Mat delta_kernel(int n) { return Mat::Identity(n, n); }

// RBF kernel on integer-embedded observations.
inline Mat rbf_kernel_obs(int O, double sigma) {
  Mat k(O, O);
  for (int i = 0; i < O; ++i)
    for (int j = 0; j < O; ++j)
      k(i, j) = std::exp(-0.5 * (i - j) * (i - j) / (sigma * sigma));
  return k;
}

// RBF kernel on triples embedded as integer coordinate vectors.
inline Mat rbf_kernel_triples(int O, double sigma) {
  long n = static_cast<long>(O) * O * O;
  Mat k(n, n);
  for (int x1 = 0; x1 < O; ++x1)
    for (int x2 = 0; x2 < O; ++x2)
      for (int x3 = 0; x3 < O; ++x3)
        for (int y1 = 0; y1 < O; ++y1)
          for (int y2 = 0; y2 < O; ++y2)
            for (int y3 = 0; y3 < O; ++y3) {
              double d2 = double((x1 - y1) * (x1 - y1) + (x2 - y2) * (x2 - y2) +
                                 (x3 - y3) * (x3 - y3));
              k(triple_index(x1, x2, x3, O), triple_index(y1, y2, y3, O)) =
                  std::exp(-0.5 * d2 / (sigma * sigma));
            }
  return k;
}

}  // namespace oprl
