#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace oprl;
using testutil::identity_emission_model;
using testutil::oracle_conditional_reward;
using testutil::random_bridgeable_model;
using testutil::random_model;
using testutil::random_policy;

namespace {

TabularModel trivial_model(int H) {
  TabularModel m;
  m.H = H;
  m.S = 1;
  m.A = 1;
  m.O = 1;
  m.mu = Vec::Ones(1);
  m.T.assign(H - 1, {Mat::Ones(1, 1)});
  m.E.assign(H, Mat::Ones(1, 1));
  m.r = Mat::Ones(1, 1) * 0.25;
  validate(m);
  return m;
}

// p(o_h | history through h-1 and this step's action); h = 0 uses the prior
Vec obs_conditional(const TabularModel& m, const FullHistory& tau, int a, int h) {
  Vec through = h == 0 ? m.mu : Vec(m.T[h - 1][a] * forward_belief(m, tau));
  Vec p = m.E[h] * through;
  return p / p.sum();
}

HistoryFunction random_history_function(int h, int O, int A, Rng& rng) {
  HistoryFunction f;
  f.h = h;
  f.v = Vec(fh_size(h, O, A));
  for (long i = 0; i < f.v.size(); ++i) f.v[i] = rng.normal();
  return f;
}

}  // namespace

TEST_CASE("total reward sums the per-step rewards of a complete history") {
  TabularModel m = random_model(3, 3, 2, 3, 3);
  FullHistory tau;
  tau.obs = {2, 0, 1, kDummyObs};
  tau.act = {1, 0, 1};
  REQUIRE(total_reward(m, tau) == m.r(2, 1) + m.r(0, 0) + m.r(1, 1));

  m.r = Mat::Ones(m.O, m.A);
  REQUIRE(total_reward(m, tau) == 3.0);
  m.r = Mat::Zero(m.O, m.A);
  REQUIRE(total_reward(m, tau) == 0.0);

  FullHistory partial;
  partial.obs = {2, 0};
  partial.act = {1};
  REQUIRE_THROWS_AS(total_reward(m, partial), IndexError);
}

TEST_CASE("full-memory operator preserves constants") {
  TabularModel m = random_model(5, 2, 2, 3, 3);
  Policy pol = random_policy(7, m.H, m.O, m.A);
  for (int h = 0; h < m.H; ++h) {
    HistoryFunction f;
    f.h = h + 1;
    f.v = Vec::Constant(fh_size(h + 1, m.O, m.A), 0.625);
    HistoryFunction out = apply_P(m, pol, h, f);
    REQUIRE(out.h == h);
    REQUIRE((out.v.array() - 0.625).abs().maxCoeff() <= 1e-12);
    REQUIRE_THROWS_AS(apply_P(m, pol, h, out), IndexError);
  }
}

TEST_CASE("composing the full-memory operator yields conditional total rewards") {
  TabularModel m = random_model(11, 2, 2, 3, 3);
  Policy pol = random_policy(13, m.H, m.O, m.A);
  HistoryFunction f;
  f.h = m.H;
  f.v = Vec(fh_size(m.H, m.O, m.A));
  for (long idx = 0; idx < f.v.size(); ++idx)
    f.v[idx] = total_reward(m, fh_decode(idx, m.H, m.O, m.A));
  for (int h = m.H - 1; h >= 0; --h) {
    f = apply_P(m, pol, h, f);
    for (long idx = 0; idx < f.v.size(); ++idx) {
      FullHistory tau = fh_decode(idx, h, m.O, m.A);
      REQUIRE(f.v[idx] == Catch::Approx(oracle_conditional_reward(m, pol, tau)).margin(1e-10));
    }
  }
  double J = 0.0;
  Vec p0 = m.E[0] * m.mu;
  for (int o = 0; o < m.O; ++o) J += p0[o] * f.v[o];
  REQUIRE(J == Catch::Approx(evaluate_J(m, pol)).margin(1e-12));
}

TEST_CASE("full-memory operator steps a deterministic chain to its successor") {
  TabularModel m = testutil::deterministic_model(3, 2, 3);
  Policy pol = random_policy(17, m.H, m.O, m.A);
  Rng rng(19);
  HistoryFunction f = random_history_function(1, m.O, m.A, rng);
  HistoryFunction out = apply_P(m, pol, 0, f);
  int a = pol.act[0][0];
  REQUIRE(out.v[0] == f.v[fh_child(0, a, (0 + a) % m.S, m.O, m.A)]);
  // chain starts at state 0, so any other first observation has zero mass
  REQUIRE(out.v[1] == 0.0);
  REQUIRE(out.v[2] == 0.0);
}

TEST_CASE("tensor rows carry the pair law given the state") {
  TabularModel m = testutil::identity_emission_model(23, 3, 2, 3);
  StateBases sb = build_state_bases(embed_tabular(m));
  Bridge br = build_bridge(m, sb, delta_kernel(m.O));
  for (int h = 0; h < m.H; ++h)
    for (int a = 0; a < m.A; ++a) {
      BTensor t = build_B_tensor(m, br, h, a);
      for (int o = 0; o < m.O; ++o) {
        Vec next = h + 1 < m.H ? Vec(m.E[h + 1] * m.T[h][a].col(o)) : dummy_emission(m.O);
        for (int ot = 0; ot < m.O; ++ot)
          for (int otp = 0; otp < m.O; ++otp) {
            double expect = (ot == o ? 1.0 : 0.0) * next[otp];
            REQUIRE(t.value(o, ot, otp, m.O) == Catch::Approx(expect).margin(1e-12));
          }
      }
    }
  REQUIRE_THROWS_AS(build_B_tensor(m, br, m.H, 0), IndexError);
}

TEST_CASE("one-state one-observation tensor is the unit scalar") {
  TabularModel m = trivial_model(2);
  StateBases sb = build_state_bases(embed_tabular(m));
  Bridge br = build_bridge(m, sb, delta_kernel(m.O));
  for (int h = 0; h < m.H; ++h) {
    BTensor t = build_B_tensor(m, br, h, 0);
    REQUIRE(t.flat.rows() == 1);
    REQUIRE(t.flat.cols() == 1);
    REQUIRE(t.value(0, 0, 0, 1) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("tensor contraction matches the state-conditioned pair expectation") {
  TabularModel m = random_bridgeable_model(29, 3, 2, 4, 3);
  StateBases sb = build_state_bases(embed_tabular(m));
  Bridge br = build_bridge(m, sb, delta_kernel(m.O));
  Rng rng(31);
  for (int h = 0; h < m.H; ++h)
    for (int a = 0; a < m.A; ++a) {
      BTensor t = build_B_tensor(m, br, h, a);
      Mat W(m.S, m.O * m.O);
      for (int s = 0; s < m.S; ++s) {
        Vec next = h + 1 < m.H ? Vec(m.E[h + 1] * m.T[h][a].col(s)) : dummy_emission(m.O);
        for (int ot = 0; ot < m.O; ++ot)
          for (int otp = 0; otp < m.O; ++otp) W(s, ot * m.O + otp) = m.E[h](ot, s) * next[otp];
      }
      for (int rep = 0; rep < 10; ++rep) {
        Vec p = random_simplex(m.S, rng);
        Vec lhs = t.flat.transpose() * (m.E[h] * p);
        Vec rhs = W.transpose() * p;
        REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-10);
      }
    }
}

TEST_CASE("finite-memory operator returns constants in conditional expectation") {
  TabularModel m = random_bridgeable_model(37, 2, 2, 3, 3);
  StateBases sb = build_state_bases(embed_tabular(m));
  Bridge br = build_bridge(m, sb, delta_kernel(m.O));
  Policy pol = random_policy(41, m.H, m.O, m.A);
  const double c = 0.7;
  for (int h = 0; h < m.H; ++h) {
    std::vector<BTensor> bts;
    for (int a = 0; a < m.A; ++a) bts.push_back(build_B_tensor(m, br, h, a));
    HistoryFunction f;
    f.h = h + 1;
    f.v = Vec::Constant(fh_size(h + 1, m.O, m.A), c);
    HistoryFunction out = apply_B(m, pol, bts, h, f);
    if (h == 0) {
      Vec p0 = m.E[0] * m.mu;
      REQUIRE(p0.dot(out.v) == Catch::Approx(c).margin(1e-9));
    } else {
      long n = fh_size(h - 1, m.O, m.A);
      for (long idx = 0; idx < n; ++idx) {
        FullHistory tau = fh_decode(idx, h - 1, m.O, m.A);
        for (int a = 0; a < m.A; ++a) {
          Vec p = obs_conditional(m, tau, a, h);
          double avg = 0.0;
          for (int o = 0; o < m.O; ++o) avg += p[o] * out.v[fh_child(idx, a, o, m.O, m.A)];
          REQUIRE(avg == Catch::Approx(c).margin(1e-9));
        }
      }
    }
  }
}

TEST_CASE("identity emission collapses the finite-memory operator to full memory") {
  TabularModel m = identity_emission_model(43, 3, 2, 3);
  StateBases sb = build_state_bases(embed_tabular(m));
  Bridge br = build_bridge(m, sb, delta_kernel(m.O));
  Policy pol = random_policy(47, m.H, m.O, m.A);
  Rng rng(53);
  for (int h = 0; h < m.H; ++h) {
    std::vector<BTensor> bts;
    for (int a = 0; a < m.A; ++a) bts.push_back(build_B_tensor(m, br, h, a));
    HistoryFunction f = random_history_function(h + 1, m.O, m.A, rng);
    HistoryFunction via_b = apply_B(m, pol, bts, h, f);
    HistoryFunction via_p = apply_P(m, pol, h, f);
    REQUIRE((via_b.v - via_p.v).cwiseAbs().maxCoeff() <= 1e-12);
    REQUIRE_THROWS_AS(apply_B(m, pol, bts, h, via_b), IndexError);
  }
}

TEST_CASE("one-point spaces reduce the finite-memory operator to a shift") {
  TabularModel m = trivial_model(3);
  StateBases sb = build_state_bases(embed_tabular(m));
  Bridge br = build_bridge(m, sb, delta_kernel(m.O));
  Policy pol;
  pol.O = 1;
  pol.A = 1;
  pol.act.assign(m.H, std::vector<int>(1, 0));
  for (int h = 0; h < m.H; ++h) {
    HistoryFunction f;
    f.h = h + 1;
    f.v = Vec::Constant(1, 0.5 + h);
    HistoryFunction out = apply_B(m, pol, {build_B_tensor(m, br, h, 0)}, h, f);
    REQUIRE(out.v[0] == Catch::Approx(f.v[0]).margin(1e-12));
  }
}

TEST_CASE("both operators agree after averaging the current observation") {
  for (std::uint64_t seed : {59u, 61u, 67u}) {
    TabularModel m = random_bridgeable_model(seed, 2, 2, 3, 3);
    StateBases sb = build_state_bases(embed_tabular(m));
    Bridge br = build_bridge(m, sb, delta_kernel(m.O));
    Policy pol = random_policy(seed + 1, m.H, m.O, m.A);
    Rng rng(seed + 2);
    for (int h = 0; h < m.H; ++h) {
      std::vector<BTensor> bts;
      for (int a = 0; a < m.A; ++a) bts.push_back(build_B_tensor(m, br, h, a));
      for (int rep = 0; rep < 20; ++rep) {
        HistoryFunction f = random_history_function(h + 1, m.O, m.A, rng);
        HistoryFunction via_b = apply_B(m, pol, bts, h, f);
        HistoryFunction via_p = apply_P(m, pol, h, f);
        if (h == 0) {
          Vec p0 = m.E[0] * m.mu;
          REQUIRE(p0.dot(via_b.v) == Catch::Approx(p0.dot(via_p.v)).margin(1e-9));
        } else {
          long n = fh_size(h - 1, m.O, m.A);
          for (long idx = 0; idx < n; ++idx) {
            FullHistory tau = fh_decode(idx, h - 1, m.O, m.A);
            for (int a = 0; a < m.A; ++a) {
              Vec p = obs_conditional(m, tau, a, h);
              double avg_b = 0.0, avg_p = 0.0;
              for (int o = 0; o < m.O; ++o) {
                long child = fh_child(idx, a, o, m.O, m.A);
                avg_b += p[o] * via_b.v[child];
                avg_p += p[o] * via_p.v[child];
              }
              REQUIRE(avg_b == Catch::Approx(avg_p).margin(1e-9));
            }
          }
        }
      }
    }
  }
}

TEST_CASE("zero reward collapses every value level to zero") {
  TabularModel m = random_bridgeable_model(71, 2, 2, 3, 3);
  m.r = Mat::Zero(m.O, m.A);
  StateBases sb = build_state_bases(embed_tabular(m));
  Bridge br = build_bridge(m, sb, delta_kernel(m.O));
  Policy pol = random_policy(73, m.H, m.O, m.A);
  std::vector<std::vector<BTensor>> bts(m.H);
  for (int h = 0; h < m.H; ++h)
    for (int a = 0; a < m.A; ++a) bts[h].push_back(build_B_tensor(m, br, h, a));
  std::vector<HistoryFunction> V = compute_values(m, pol, bts);
  for (int h = 0; h <= m.H; ++h) REQUIRE(V[h].v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity emission values equal conditional total rewards") {
  TabularModel m = identity_emission_model(79, 3, 2, 3);
  StateBases sb = build_state_bases(embed_tabular(m));
  Bridge br = build_bridge(m, sb, delta_kernel(m.O));
  Policy pol = random_policy(83, m.H, m.O, m.A);
  std::vector<std::vector<BTensor>> bts(m.H);
  for (int h = 0; h < m.H; ++h)
    for (int a = 0; a < m.A; ++a) bts[h].push_back(build_B_tensor(m, br, h, a));
  std::vector<HistoryFunction> V = compute_values(m, pol, bts);
  for (int h = 0; h < m.H; ++h)
    for (long idx = 0; idx < V[h].v.size(); ++idx) {
      FullHistory tau = fh_decode(idx, h, m.O, m.A);
      REQUIRE(V[h].v[idx] ==
              Catch::Approx(oracle_conditional_reward(m, pol, tau)).margin(1e-9));
    }
}

TEST_CASE("values stay inside the bridge amplification bound") {
  for (std::uint64_t seed : {89u, 97u}) {
    TabularModel m = random_bridgeable_model(seed, 3, 2, 4, 3);
    StateBases sb = build_state_bases(embed_tabular(m));
    Bridge br = build_bridge(m, sb, delta_kernel(m.O));
    Policy pol = random_policy(seed + 1, m.H, m.O, m.A);
    std::vector<std::vector<BTensor>> bts(m.H);
    for (int h = 0; h < m.H; ++h)
      for (int a = 0; a < m.A; ++a) bts[h].push_back(build_B_tensor(m, br, h, a));
    std::vector<HistoryFunction> V = compute_values(m, pol, bts);
    for (int h = 0; h <= m.H; ++h)
      REQUIRE(V[h].v.cwiseAbs().maxCoeff() <= br.gamma * m.H + 1e-9);
  }
}

TEST_CASE("first-step values average to the policy value") {
  for (std::uint64_t seed : {101u, 103u, 107u}) {
    TabularModel m = random_bridgeable_model(seed, 2, 2, 3, 3);
    StateBases sb = build_state_bases(embed_tabular(m));
    Bridge br = build_bridge(m, sb, delta_kernel(m.O));
    Policy pol = random_policy(seed + 1, m.H, m.O, m.A);
    std::vector<std::vector<BTensor>> bts(m.H);
    for (int h = 0; h < m.H; ++h)
      for (int a = 0; a < m.A; ++a) bts[h].push_back(build_B_tensor(m, br, h, a));
    std::vector<HistoryFunction> V = compute_values(m, pol, bts);
    Vec p0 = m.E[0] * m.mu;
    REQUIRE(p0.dot(V[0].v) == Catch::Approx(evaluate_J(m, pol)).margin(1e-9));
  }
}

TEST_CASE("unit reward makes every policy worth the horizon") {
  TabularModel m = random_model(109, 3, 2, 4, 3);
  m.r = Mat::Ones(m.O, m.A);
  Policy pol = random_policy(113, m.H, m.O, m.A);
  REQUIRE(evaluate_J(m, pol) == Catch::Approx(3.0).margin(1e-12));
}

TEST_CASE("single-state models price like independent bandits") {
  Rng rng(127);
  TabularModel m;
  m.H = 3;
  m.S = 1;
  m.A = 2;
  m.O = 3;
  m.mu = Vec::Ones(1);
  m.T.assign(2, std::vector<Mat>(2, Mat::Ones(1, 1)));
  m.E.assign(3, Mat());
  for (int h = 0; h < 3; ++h) m.E[h] = random_simplex(3, rng);
  m.r = Mat::Zero(3, 2);
  for (int o = 0; o < 3; ++o)
    for (int a = 0; a < 2; ++a) m.r(o, a) = rng.uniform();
  validate(m);
  std::vector<int> level_action = {1, 0, 1};
  Policy pol;
  pol.O = 3;
  pol.A = 2;
  long n = 1;
  for (int h = 0; h < 3; ++h) {
    n *= 3;
    pol.act.push_back(std::vector<int>(n, level_action[h]));
  }
  double expect = 0.0;
  for (int h = 0; h < 3; ++h)
    for (int o = 0; o < 3; ++o) expect += m.E[h](o, 0) * m.r(o, level_action[h]);
  REQUIRE(evaluate_J(m, pol) == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("a final-step emission change moves the value by its reward marginal") {
  TabularModel m1 = random_model(131, 3, 2, 4, 3);
  TabularModel m2 = m1;
  Rng rng(137);
  m2.E[2] = Mat(4, 3);
  for (int s = 0; s < 3; ++s) m2.E[2].col(s) = random_simplex(4, rng);
  std::vector<int> level_action = {0, 1, 1};
  Policy pol;
  pol.O = 4;
  pol.A = 2;
  long n = 1;
  for (int h = 0; h < 3; ++h) {
    n *= 4;
    pol.act.push_back(std::vector<int>(n, level_action[h]));
  }
  Vec marg = m1.T[1][level_action[1]] * (m1.T[0][level_action[0]] * m1.mu);
  double expect = 0.0;
  for (int s = 0; s < 3; ++s)
    for (int o = 0; o < 4; ++o)
      expect += marg[s] * (m2.E[2](o, s) - m1.E[2](o, s)) * m1.r(o, level_action[2]);
  REQUIRE(evaluate_J(m2, pol) - evaluate_J(m1, pol) == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("a mixed policy is worth the average of its components") {
  TabularModel m = random_model(139, 2, 2, 3, 3);
  Policy p1 = random_policy(149, m.H, m.O, m.A);
  Policy p2 = random_policy(151, m.H, m.O, m.A);
  double j = evaluate_J(m, mix({p1, p2}));
  REQUIRE(j == Catch::Approx(0.5 * (evaluate_J(m, p1) + evaluate_J(m, p2))).margin(1e-12));
}
