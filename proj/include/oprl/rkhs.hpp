#pragma once
#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "oprl/bases.hpp"
#include "oprl/errors.hpp"

// Kernel-space projection onto the span of the triple features: smoothing of
// discriminators, projection of laws, and the kernel metric between laws.
namespace oprl {

// Gram matrix of the triple features under a kernel, with its smallest
// eigenvalue (the conditioning constant of every projection step).
struct GramG {
  Mat G;
  Mat Ginv;
  double alpha = 0.0;  // smallest eigenvalue of G
};

// Kernel embedding of a signed measure: the function x -> sum_y K(x,y) p(y).
inline Vec embed(const Mat& kernel, const Vec& p) { return kernel * p; }

inline GramG compute_G(const Mat& kernel, const ObsBases& bases, double pd_tol = 1e-10) {
  Mat G = bases.phi.transpose() * kernel * bases.phi;
  G = ((G + G.transpose()) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  GramG out;
  out.G = G;
  out.alpha = es.eigenvalues().minCoeff();
  if (out.alpha <= pd_tol)
    throw SingularGram("gram smallest eigenvalue " + std::to_string(out.alpha));
  Mat inv_diag = es.eigenvalues().cwiseInverse().asDiagonal();
  out.Ginv = es.eigenvectors() * inv_diag * es.eigenvectors().transpose();
  return out;
}

// Smoothing operator on functions of triples: project onto the feature span
// in the kernel geometry, then evaluate through the kernel.
inline Vec apply_S(const Mat& kernel, const ObsBases& bases, const GramG& gram, const Vec& f) {
  return kernel * (bases.phi * (gram.Ginv * (bases.phi.transpose() * f)));
}

// Adjoint projection on laws: the projected law pairs with any f exactly as
// the original law pairs with the smoothed f.
inline Vec project_distribution(const Mat& kernel, const ObsBases& bases, const GramG& gram,
                                const Vec& rho) {
  return bases.phi * (gram.Ginv * (bases.phi.transpose() * (kernel * rho)));
}

// Kernel distance between two (signed) measures on triples.
inline double mmd(const Mat& kernel, const Vec& p1, const Vec& p2) {
  Vec d = p1 - p2;
  double q = d.dot(kernel * d);
  return std::sqrt(std::max(0.0, q));
}

}  // namespace oprl
