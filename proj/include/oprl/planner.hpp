#pragma once
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oprl/bellman.hpp"
#include "oprl/estimation.hpp"
#include "oprl/model.hpp"
#include "oprl/rng.hpp"

// Exact planning oracle, optimistic selection over a confidence set, the
// confidence-level formula, and the optimistic exploration loop.
namespace oprl {

struct PlanResult {
  Policy policy;
  double value = 0.0;
};

inline long plan_node_budget_needed(const TabularModel& m) {
  long n = 1;
  for (int h = 0; h < m.H; ++h) {
    if (n > 1000000000L / (m.O * m.A)) return -1;  // overflow guard, report as too large
    n *= static_cast<long>(m.O) * m.A;
  }
  return n;
}

// Exact optimal policy by backward induction over the observation-history
// tree, carrying unnormalized beliefs. Ties pick the lowest action index.
inline PlanResult plan_exact(const TabularModel& m, long budget = 1000000) {
  long need = plan_node_budget_needed(m);
  if (need < 0 || need > budget) throw BudgetExceeded("planning tree exceeds node budget");
  PlanResult out;
  out.policy.H = m.H;
  out.policy.O = m.O;
  out.policy.A = m.A;
  out.policy.act.resize(m.H);
  long width = 1;
  for (int h = 0; h < m.H; ++h) {
    width *= m.O;
    out.policy.act[h].assign(width, 0);
  }
  // Best actions are keyed by the full history: sibling action branches carry
  // different beliefs, so an observation-keyed table would be overwritten by
  // whichever branch was evaluated last.
  std::vector<std::vector<int>> best_act(m.H);
  for (int h = 0; h < m.H; ++h) best_act[h].assign(fh_size(h, m.O, m.A), 0);
  // returns the unnormalized value contribution of the branch
  std::function<double(int, long, long, const Vec&)> backup = [&](int h, long obs_idx,
                                                                  long fh_idx, const Vec& b) {
    int o_cur = static_cast<int>(obs_idx % m.O);
    double mass = b.sum();
    if (mass <= 0.0) return 0.0;  // dead branch, any action does
    double best = -std::numeric_limits<double>::infinity();
    int best_a = 0;
    for (int a = 0; a < m.A; ++a) {
      double val = m.r(o_cur, a) * mass;
      if (h + 1 < m.H) {
        Vec through = m.T[h][a] * b;
        for (int o = 0; o < m.O; ++o)
          val += backup(h + 1, obs_idx * m.O + o, fh_child(fh_idx, a, o, m.O, m.A),
                        through.cwiseProduct(m.E[h + 1].row(o).transpose()));
      }
      if (val > best) {
        best = val;
        best_a = a;
      }
    }
    best_act[h][fh_idx] = best_a;
    return best;
  };
  double J = 0.0;
  for (int o = 0; o < m.O; ++o)
    J += backup(0, o, o, m.mu.cwiseProduct(m.E[0].row(o).transpose()));
  // The deterministic policy takes one action path per observation sequence;
  // commit the table entries along that realized branch only.
  std::function<void(int, long, long)> commit = [&](int h, long obs_idx, long fh_idx) {
    int a = best_act[h][fh_idx];
    out.policy.act[h][obs_idx] = a;
    if (h + 1 < m.H)
      for (int o = 0; o < m.O; ++o)
        commit(h + 1, obs_idx * m.O + o, fh_child(fh_idx, a, o, m.O, m.A));
  };
  for (int o = 0; o < m.O; ++o) commit(0, o, o);
  out.value = J;
  return out;
}

struct OptimisticPlan {
  int index = 0;  // chosen candidate
  Policy policy;
  double value = 0.0;  // optimistic value J(theta_k, pi_k)
};

// Largest planned value over the given candidates; ties pick the lowest
// candidate index (indices are scanned in the given order).
inline OptimisticPlan optimistic_plan(const ParameterFamily& family,
                                      const std::vector<int>& indices, long budget = 1000000) {
  if (indices.empty()) throw ValidationError("optimistic_plan needs a nonempty candidate set");
  OptimisticPlan out;
  bool first = true;
  for (int i : indices) {
    PlanResult pr = plan_exact(family.candidates[i], budget);
    if (first || pr.value > out.value) {
      out.index = i;
      out.policy = pr.policy;
      out.value = pr.value;
      first = false;
    }
  }
  return out;
}

// Smallest confidence level that the sample-efficiency guarantee admits.
inline double beta_min(double d_o, double gamma, double alpha, int K, int H, int A,
                       double delta) {
  if (d_o <= 0 || alpha <= 0 || K < 1 || H < 1 || A < 1)
    throw ValidationError("beta_min wants positive sizes");
  if (gamma < 0) throw ValidationError("beta_min wants gamma >= 0");
  if (delta <= 0 || delta >= 1) throw ValidationError("beta_min wants delta in (0,1)");
  return std::pow(d_o, 1.5) * (gamma + 1.0) / alpha *
         std::sqrt(8.0 * std::log(2.0 * K * H * A * A / delta));
}

// Average-suboptimality ceiling implied by the guarantee at confidence beta.
inline double average_regret_bound(double d_s, double gamma, double beta, int H, int A, int K) {
  return 4.0 * d_s * gamma * gamma * beta * H * H * A * A * std::log(static_cast<double>(K)) /
             std::sqrt(static_cast<double>(K)) +
         4.0 * d_s * gamma * H * H / K;
}

// Shared estimation machinery for a candidate family: kernels, feature
// bases, Gram inverse, and one bridge per candidate.
struct EstimationContext {
  Mat kernel_obs;      // O x O, bridge construction
  Mat kernel_triples;  // O^3 x O^3, projection metric
  ObsBases bases;
  GramG gram;
  std::vector<StateBases> state_bases;  // per candidate
  std::vector<Bridge> bridges;          // per candidate
  double gamma = 0.0;                   // max over candidates
  int d_s = 0, d_o = 0;
};

inline EstimationContext build_context(const ParameterFamily& family, const Mat& kernel_obs,
                                       const Mat& kernel_triples) {
  EstimationContext ctx;
  ctx.kernel_obs = kernel_obs;
  ctx.kernel_triples = kernel_triples;
  for (const TabularModel& cand : family.candidates) {
    LinearKernelModel lin = embed_tabular(cand);
    StateBases sb = build_state_bases(lin);
    Bridge br = build_bridge(cand, sb, kernel_obs);
    ctx.d_s = std::max(ctx.d_s, sb.dim());
    ctx.gamma = std::max(ctx.gamma, br.gamma);
    ctx.state_bases.push_back(std::move(sb));
    ctx.bridges.push_back(std::move(br));
  }
  ctx.bases = build_obs_bases(embed_tabular(family.truth()));
  ctx.d_o = ctx.bases.dim();
  ctx.gram = compute_G(kernel_triples, ctx.bases);
  return ctx;
}

struct IterationRow {
  int k = 0;  // 1-based iteration
  int theta_index = 0;
  int policy_id = 0;  // distinct policies get increasing ids in first-seen order
  int set_size = 0;
  bool truth_in_set = false;
  double loss_true = 0.0;       // loss of the true candidate
  double optimistic_value = 0.0;
  double suboptimality = 0.0;   // J(theta*, pi*) - J(theta*, pi_k)
  double decomposition_sum = 0.0;  // sum over steps of the conditional-bias bound
  bool decomposition_ok = true;    // suboptimality <= decomposition_sum + 1e-8 when in set
  double wall_ms = 0.0;            // excluded from emitted CSVs
};

// One candidate scoring inside one iteration, kept for the loss log.
struct LossLogRow {
  int k = 0;           // 1-based iteration
  int theta_index = 0;
  double loss = 0.0;
  std::string argmax;  // attaining tuples as h:a:a2, ';'-joined on ties
};

inline std::string format_argmax_tuples(const std::vector<int>& tuples, int A) {
  std::string out;
  for (int t : tuples) {
    int a2 = t % A, a = (t / A) % A, h = t / (A * A) + 1;
    if (!out.empty()) out += ';';
    out += std::to_string(h) + ":" + std::to_string(a) + ":" + std::to_string(a2);
  }
  return out;
}

struct RunRecord {
  double beta = 0.0;
  int K = 0;
  uint64_t seed = 0;
  double gamma = 0.0, alpha = 0.0;
  int d_s = 0, d_o = 0;
  double J_star = 0.0;
  double average_suboptimality = 0.0;
  double membership_rate = 0.0;  // fraction of iterations with the truth in the set
  double bound = 0.0;            // guarantee ceiling on average suboptimality
  long episodes = 0;
  std::vector<IterationRow> rows;
  std::vector<LossLogRow> loss_log;     // one row per (iteration, candidate)
  std::vector<TripleDataset> datasets;  // tuple_index order, sizes K at the end
};

struct RunOptions {
  int K = 100;
  double beta = 0.0;
  uint64_t seed = 0;
  long plan_budget = 1000000;
  bool check_decomposition = true;
};

// Optimistic exploration loop: collect one intervention triple per tuple with
// the previous policy, score every candidate, keep the confident ones, plan
// optimistically. Episode count is (H-1) * A^2 * K.
inline RunRecord run_optimistic(const ParameterFamily& family, const EstimationContext& ctx,
                                const RunOptions& opt) {
  if (opt.K < 1) throw ValidationError("run wants K >= 1");
  const TabularModel& truth = family.truth();
  const int H = truth.H, A = truth.A, O = truth.O;
  RunRecord rec;
  rec.beta = opt.beta;
  rec.K = opt.K;
  rec.seed = opt.seed;
  rec.gamma = ctx.gamma;
  rec.alpha = ctx.gram.alpha;
  rec.d_s = ctx.d_s;
  rec.d_o = ctx.d_o;
  PlanResult star = plan_exact(truth, opt.plan_budget);
  rec.J_star = star.value;
  rec.datasets.assign(tuple_count(H, A), TripleDataset{});

  std::map<std::vector<std::vector<int>>, int> policy_ids;
  auto id_of = [&](const Policy& p) {
    auto it = policy_ids.find(p.act);
    if (it != policy_ids.end()) return it->second;
    int id = static_cast<int>(policy_ids.size());
    policy_ids.emplace(p.act, id);
    return id;
  };

  Policy prev = Policy::constant(H, O, A, 0);
  double subopt_sum = 0.0;
  int member_count = 0;
  for (int k = 1; k <= opt.K; ++k) {
    auto t0 = std::chrono::steady_clock::now();
    for (int h = 1; h < H; ++h)
      for (int a = 0; a < A; ++a)
        for (int a2 = 0; a2 < A; ++a2) {
          Rng rng = Rng::substream(opt.seed, {static_cast<uint64_t>(k), static_cast<uint64_t>(h),
                                              static_cast<uint64_t>(a), static_cast<uint64_t>(a2)});
          ObsTriple t = sample_intervention_triple(truth, prev, h, a, a2, rng);
          rec.datasets[tuple_index(h, a, a2, A)].samples.push_back(t);
          ++rec.episodes;
        }
    std::vector<double> losses(family.size());
    for (int i = 0; i < family.size(); ++i) {
      LossReport lr = compute_loss(family.candidates[i], ctx.bridges[i], rec.datasets,
                                   ctx.kernel_triples, ctx.bases, ctx.gram);
      losses[i] = lr.value;
      rec.loss_log.push_back(
          LossLogRow{k, i, lr.value, format_argmax_tuples(lr.argmax_tuples, A)});
    }
    double threshold = opt.beta / std::sqrt(static_cast<double>(k));
    std::vector<int> keep = confidence_set(losses, threshold);
    OptimisticPlan pick = optimistic_plan(family, keep, opt.plan_budget);

    IterationRow row;
    row.k = k;
    row.theta_index = pick.index;
    row.policy_id = id_of(pick.policy);
    row.set_size = static_cast<int>(keep.size());
    row.loss_true = losses[family.true_index];
    row.truth_in_set = losses[family.true_index] <= threshold;
    row.optimistic_value = pick.value;
    row.suboptimality = rec.J_star - evaluate_J(truth, pick.policy);
    if (opt.check_decomposition && row.truth_in_set) {
      const TabularModel& chosen = family.candidates[pick.index];
      std::vector<std::vector<BTensor>> tk(H), tstar(H);
      for (int h = 0; h < H; ++h)
        for (int a = 0; a < A; ++a) {
          tk[h].push_back(build_B_tensor(chosen, ctx.bridges[pick.index], h, a));
          tstar[h].push_back(build_B_tensor(truth, ctx.bridges[family.true_index], h, a));
        }
      std::vector<HistoryFunction> V = compute_values(chosen, pick.policy, tk);
      double sum = 0.0;
      for (int h = 0; h < H; ++h) {
        HistoryFunction diff = V[h];
        diff.v -= apply_B(truth, pick.policy, tstar[h], h, V[h + 1]).v;
        sum += step_error(truth, pick.policy, h, diff).mean;
      }
      row.decomposition_sum = sum;
      row.decomposition_ok = row.suboptimality <= sum + 1e-8;
    }
    auto t1 = std::chrono::steady_clock::now();
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    subopt_sum += row.suboptimality;
    member_count += row.truth_in_set ? 1 : 0;
    rec.rows.push_back(row);
    prev = pick.policy;
  }
  rec.average_suboptimality = subopt_sum / opt.K;
  rec.membership_rate = static_cast<double>(member_count) / opt.K;
  rec.bound = average_regret_bound(rec.d_s, rec.gamma, rec.beta, H, A, opt.K);
  return rec;
}

}  // namespace oprl
