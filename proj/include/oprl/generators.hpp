#pragma once
#include <cmath>

#include "oprl/bases.hpp"
#include "oprl/config.hpp"
#include "oprl/model.hpp"
#include "oprl/rng.hpp"

// Seeded environment families. Candidates share the initial distribution,
// the first transition, the first two emissions, and the rewards; they
// differ in the remaining components, so telling them apart needs H >= 3.
namespace oprl {

inline Vec random_simplex(int n, Rng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = -std::log(std::max(rng.uniform(), 1e-300));
  return v / v.sum();
}

// Ring-walk transition: dir steps around the ring (0 stays put), with a
// random slip spread over every state.
inline Mat ring_transition(int S, int dir, Rng& rng) {
  Mat T = Mat::Zero(S, S);
  for (int s = 0; s < S; ++s) {
    double slip = 0.05 + 0.25 * rng.uniform();
    int target = ((s + dir) % S + S) % S;
    for (int s2 = 0; s2 < S; ++s2) T(s2, s) = slip / S;
    T(target, s) += 1.0 - slip;
  }
  return T;
}

// Peaked emission: state s reads as observation s more than half the time,
// the rest spread with jitter. Peaks need O >= S.
inline Mat ring_emission(int O, int S, Rng& rng) {
  Mat E(O, S);
  for (int s = 0; s < S; ++s) {
    double peak = 0.5 + 0.3 * rng.uniform();
    Vec rest(O);
    for (int o = 0; o < O; ++o) rest[o] = rng.uniform() + 0.2;
    rest[s] = 0.0;
    rest *= (1.0 - peak) / rest.sum();
    E.col(s) = rest;
    E(s, s) = peak;
  }
  return E;
}

// Rejection sampling keeps emissions whose columns are solidly independent.
inline Mat accepted_ring_emission(int O, int S, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Mat E = ring_emission(O, S, rng);
    Eigen::SelfAdjointEigenSolver<Mat> es(E.transpose() * E);
    if (es.eigenvalues().minCoeff() >= 1e-6) return E;
  }
  throw GenerationError("no well-conditioned emission in 1000 tries");
}

inline ParameterFamily generate_family(const GeneratorSpec& g) {
  if (g.S < 1 || g.A < 1 || g.O < 1 || g.H < 1 || g.candidates < 1)
    throw ValidationError("generator sizes must be positive");
  if (g.candidates > 1 && g.H < 3)
    throw ValidationError(
        "multiple candidates need H >= 3: the shared components pin everything shorter");
  Rng rng(g.seed);
  ParameterFamily fam;
  if (g.name == "mdp") {
    if (g.O != g.S) throw ValidationError("mdp generator wants O == S (identity emission)");
    TabularModel shared;
    shared.H = g.H;
    shared.S = g.S;
    shared.A = g.A;
    shared.O = g.O;
    shared.mu = random_simplex(g.S, rng);
    shared.T.assign(g.H - 1, std::vector<Mat>(g.A, Mat::Zero(g.S, g.S)));
    if (g.H > 1)
      for (int a = 0; a < g.A; ++a)
        for (int s = 0; s < g.S; ++s) shared.T[0][a].col(s) = random_simplex(g.S, rng);
    shared.E.assign(g.H, Mat::Identity(g.O, g.S));
    shared.r = Mat::Zero(g.O, g.A);
    for (int o = 0; o < g.O; ++o)
      for (int a = 0; a < g.A; ++a) shared.r(o, a) = rng.uniform();
    for (int i = 0; i < g.candidates; ++i) {
      TabularModel m = shared;
      for (int h = 1; h < g.H - 1; ++h)
        for (int a = 0; a < g.A; ++a)
          for (int s = 0; s < g.S; ++s) m.T[h][a].col(s) = random_simplex(g.S, rng);
      validate(m);
      fam.candidates.push_back(std::move(m));
    }
  } else if (g.name == "noisy-ring") {
    if (g.O < g.S) throw GenerationError("undercomplete emission impossible with O < S");
    TabularModel shared;
    shared.H = g.H;
    shared.S = g.S;
    shared.A = g.A;
    shared.O = g.O;
    shared.mu = random_simplex(g.S, rng);
    shared.T.assign(g.H - 1, std::vector<Mat>(g.A, Mat::Zero(g.S, g.S)));
    if (g.H > 1)
      for (int a = 0; a < g.A; ++a)
        shared.T[0][a] = ring_transition(g.S, a % 2 == 0 ? 1 : 0, rng);
    shared.E.assign(g.H, Mat::Zero(g.O, g.S));
    shared.E[0] = accepted_ring_emission(g.O, g.S, rng);
    if (g.H > 1) shared.E[1] = accepted_ring_emission(g.O, g.S, rng);
    shared.r = Mat::Zero(g.O, g.A);
    for (int o = 0; o < g.O; ++o)
      for (int a = 0; a < g.A; ++a) shared.r(o, a) = rng.uniform();
    for (int i = 0; i < g.candidates; ++i) {
      TabularModel m = shared;
      // Each candidate hypothesizes which actions advance the ring at the
      // unknown steps; the slip draws differ per candidate as well.
      for (int h = 1; h < g.H - 1; ++h)
        for (int a = 0; a < g.A; ++a)
          m.T[h][a] = ring_transition(g.S, rng.uniform_int(2), rng);
      for (int h = 2; h < g.H; ++h) m.E[h] = accepted_ring_emission(g.O, g.S, rng);
      validate(m);
      fam.candidates.push_back(std::move(m));
    }
  } else {
    throw ValidationError("unknown generator '" + g.name + "'");
  }
  fam.true_index = g.candidates == 1 ? 0 : static_cast<int>(rng.uniform_int(g.candidates));
  validate(fam);
  return fam;
}

}  // namespace oprl
