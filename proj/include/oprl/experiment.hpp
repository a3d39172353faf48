#pragma once
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "oprl/config.hpp"
#include "oprl/generators.hpp"
#include "oprl/io.hpp"
#include "oprl/planner.hpp"
#include "oprl/solver.hpp"

// End-to-end seeded experiments: family loading, kernel selection, the
// per-seed loops, CSV emission, and the aggregate pass. Outputs carry no
// timing, so reruns are byte-identical.
namespace oprl {

inline ParameterFamily family_from_config(const RunConfig& c) {
  if (c.use_generator) return generate_family(c.generator);
  return load_family(c.family_path);
}

inline Mat obs_kernel_from_config(const RunConfig& c, int O) {
  if (c.kernel_obs == "rbf") return rbf_kernel_obs(O, c.rbf_sigma);
  return delta_kernel(O);
}

inline Mat triple_kernel_from_config(const RunConfig& c, int O) {
  if (c.kernel_triples == "rbf") return rbf_kernel_triples(O, c.rbf_sigma);
  return delta_kernel(O * O * O);
}

inline double resolve_beta(const RunConfig& c, const EstimationContext& ctx, int H, int A) {
  if (c.beta_override >= 0.0) return c.beta_override;
  return beta_min(ctx.d_o, ctx.gamma, ctx.gram.alpha, c.K, H, A, c.delta);
}

// Stochastic-solver variant of the loop: the iterate model comes from the
// primal-dual solver over the softmax family instead of the candidate grid.
// Grid losses are still logged for membership diagnostics; theta_index is -1
// because the iterate is not a grid member.
inline RunRecord run_stochastic(const ParameterFamily& family, const EstimationContext& ctx,
                                const RunOptions& opt, const SolverOptions& so,
                                std::vector<TraceRow>* trace_out = nullptr) {
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
  rec.J_star = plan_exact(truth, opt.plan_budget).value;
  rec.datasets.assign(tuple_count(H, A), TripleDataset{});

  SmoothFamily smooth{truth};
  // uniform logits are degenerate (equal emission columns), so start at the
  // lowest-index candidate, mirroring the lowest-action initial policy
  Vec theta = smooth.theta_at(family.candidates[0]);
  Policy prev = Policy::constant(H, O, A, 0);
  double subopt_sum = 0.0;
  int member_count = 0;
  for (int k = 1; k <= opt.K; ++k) {
    for (int h = 1; h < H; ++h)
      for (int a = 0; a < A; ++a)
        for (int a2 = 0; a2 < A; ++a2) {
          Rng rng = Rng::substream(opt.seed, {static_cast<uint64_t>(k), static_cast<uint64_t>(h),
                                              static_cast<uint64_t>(a), static_cast<uint64_t>(a2)});
          rec.datasets[tuple_index(h, a, a2, A)].samples.push_back(
              sample_intervention_triple(truth, prev, h, a, a2, rng));
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

    DualState dual;
    dual.eta_theta = so.eta_theta;
    dual.eta_lambda = so.eta_lambda;
    dual.eta_w = so.eta_w;
    dual.N_dual = so.N_dual;
    dual.N_primal = so.N_primal;
    Rng solver_rng = Rng::substream(opt.seed, {0x50u, static_cast<uint64_t>(k)});
    SolveResult sr = solve_minimax(smooth, theta, rec.datasets, ctx.kernel_obs,
                                   ctx.kernel_triples, ctx.bases, ctx.gram, opt.beta, k, dual,
                                   so.iterations, so.batch, solver_rng, opt.plan_budget);
    theta = sr.theta;
    if (trace_out)
      for (TraceRow row : sr.trace) {
        row.step += (k - 1) * so.iterations;  // global step numbering across iterations
        trace_out->push_back(row);
      }
    TabularModel iterate = smooth.model(theta);
    PlanResult plan = plan_exact(iterate, opt.plan_budget);

    IterationRow row;
    row.k = k;
    row.theta_index = -1;
    row.policy_id = 0;
    row.set_size = static_cast<int>(confidence_set(losses, threshold).size());
    row.loss_true = losses[family.true_index];
    row.truth_in_set = losses[family.true_index] <= threshold;
    row.optimistic_value = plan.value;
    row.suboptimality = rec.J_star - evaluate_J(truth, plan.policy);
    subopt_sum += row.suboptimality;
    member_count += row.truth_in_set ? 1 : 0;
    rec.rows.push_back(row);
    prev = plan.policy;
  }
  rec.average_suboptimality = subopt_sum / opt.K;
  rec.membership_rate = static_cast<double>(member_count) / opt.K;
  rec.bound = average_regret_bound(rec.d_s, rec.gamma, rec.beta, H, A, opt.K);
  return rec;
}

inline void write_record_csv(std::ostream& out, const RunRecord& rec) {
  out << "k,theta_index,policy_id,set_size,truth_in_set,loss_true,optimistic_value,"
         "suboptimality,decomposition_sum,decomposition_ok\n";
  for (const IterationRow& r : rec.rows)
    out << r.k << "," << r.theta_index << "," << r.policy_id << "," << r.set_size << ","
        << (r.truth_in_set ? 1 : 0) << "," << format_double(r.loss_true) << ","
        << format_double(r.optimistic_value) << "," << format_double(r.suboptimality) << ","
        << format_double(r.decomposition_sum) << "," << (r.decomposition_ok ? 1 : 0) << "\n";
}

inline void write_losses_csv(std::ostream& out, const RunRecord& rec) {
  out << "iter,theta_index,L,argmax_tuple\n";
  for (const LossLogRow& r : rec.loss_log)
    out << r.k << "," << r.theta_index << "," << format_double(r.loss) << "," << r.argmax
        << "\n";
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "step,lagrangian,grad_theta_norm,grad_lambda_norm,grad_w_norm,max_residual,"
         "policy_switched\n";
  for (const TraceRow& r : trace)
    out << r.step << "," << format_double(r.lagrangian) << ","
        << format_double(r.grad_theta_norm) << "," << format_double(r.grad_lambda_norm) << ","
        << format_double(r.grad_w_norm) << "," << format_double(r.max_residual) << ","
        << (r.policy_switched ? 1 : 0) << "\n";
}

inline double sorted_quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double pos = q * (v.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - lo;
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<const RunRecord*>& recs,
                                int K) {
  out << "k,subopt_q25,subopt_median,subopt_q75,membership_rate\n";
  for (int k = 1; k <= K; ++k) {
    std::vector<double> sub;
    double members = 0.0;
    for (const RunRecord* rec : recs) {
      if (k > static_cast<int>(rec->rows.size())) continue;
      const IterationRow& r = rec->rows[k - 1];
      sub.push_back(r.suboptimality);
      members += r.truth_in_set ? 1.0 : 0.0;
    }
    double rate = sub.empty() ? 0.0 : members / sub.size();
    out << k << "," << format_double(sorted_quantile(sub, 0.25)) << ","
        << format_double(sorted_quantile(sub, 0.5)) << ","
        << format_double(sorted_quantile(sub, 0.75)) << "," << format_double(rate) << "\n";
  }
}

struct SeedOutcome {
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunRecord rec;
  std::vector<TraceRow> trace;
};

struct ExperimentResult {
  RunConfig config;
  double beta = 0.0;
  std::vector<SeedOutcome> seeds;
  int exit_code = 0;
};

inline void write_summary(std::ostream& out, const ParameterFamily& family,
                          const EstimationContext& ctx, const ExperimentResult& res) {
  const TabularModel& truth = family.truth();
  out << "candidates " << family.size() << " true_index " << family.true_index << "\n";
  out << "sizes H " << truth.H << " S " << truth.S << " A " << truth.A << " O " << truth.O
      << "\n";
  out << "d_s " << ctx.d_s << " d_o " << ctx.d_o << " gamma " << format_double(ctx.gamma)
      << " alpha " << format_double(ctx.gram.alpha) << "\n";
  out << "K " << res.config.K << " beta " << format_double(res.beta) << " delta "
      << format_double(res.config.delta) << " solver " << res.config.solver << "\n";
  out << "episodes_per_seed " << static_cast<long>(truth.H - 1) * truth.A * truth.A * res.config.K
      << "\n";
  int ok_count = 0;
  std::vector<double> avg_subopts;
  double membership_total = 0.0;
  for (const SeedOutcome& so : res.seeds) {
    if (!so.ok) {
      out << "seed " << so.seed << " FAILED " << so.error << "\n";
      continue;
    }
    ++ok_count;
    avg_subopts.push_back(so.rec.average_suboptimality);
    membership_total += so.rec.membership_rate;
    bool decomposition_all = true;
    for (const IterationRow& r : so.rec.rows) decomposition_all = decomposition_all && r.decomposition_ok;
    out << "seed " << so.seed << " J_star " << format_double(so.rec.J_star) << " avg_subopt "
        << format_double(so.rec.average_suboptimality) << " membership "
        << format_double(so.rec.membership_rate) << " episodes " << so.rec.episodes << " bound "
        << format_double(so.rec.bound) << " within_bound "
        << (so.rec.average_suboptimality <= so.rec.bound ? 1 : 0) << " decomposition_ok "
        << (decomposition_all ? 1 : 0) << "\n";
  }
  out << "seeds_ok " << ok_count << "/" << res.seeds.size() << "\n";
  if (ok_count > 0) {
    out << "mean_membership " << format_double(membership_total / ok_count) << "\n";
    out << "median_avg_subopt " << format_double(sorted_quantile(avg_subopts, 0.5)) << "\n";
  }
}

inline ExperimentResult run_experiment(const RunConfig& config) {
  validate(config);
  ParameterFamily family = family_from_config(config);
  const TabularModel& truth = family.truth();
  EstimationContext ctx = build_context(family, obs_kernel_from_config(config, truth.O),
                                        triple_kernel_from_config(config, truth.O));
  ExperimentResult res;
  res.config = config;
  res.beta = resolve_beta(config, ctx, truth.H, truth.A);

  std::filesystem::create_directories(config.out_dir);
  for (uint64_t seed : config.seeds) {
    SeedOutcome outcome;
    outcome.seed = seed;
    RunOptions opt;
    opt.K = config.K;
    opt.beta = res.beta;
    opt.seed = seed;
    opt.plan_budget = config.plan_budget;
    opt.check_decomposition = config.check_decomposition;
    try {
      if (config.solver == "stochastic")
        outcome.rec = run_stochastic(family, ctx, opt, config.solver_options, &outcome.trace);
      else
        outcome.rec = run_optimistic(family, ctx, opt);
      outcome.ok = true;
    } catch (const std::exception& e) {
      outcome.error = e.what();
      res.exit_code = 1;
    }
    if (outcome.ok) {
      std::ofstream rec_out(config.out_dir + "/record_" + std::to_string(seed) + ".csv");
      write_record_csv(rec_out, outcome.rec);
      std::ofstream tri_out(config.out_dir + "/triples_" + std::to_string(seed) + ".csv");
      write_triples_csv(tri_out, outcome.rec.datasets, truth.H, truth.A);
      std::ofstream loss_out(config.out_dir + "/losses_" + std::to_string(seed) + ".csv");
      write_losses_csv(loss_out, outcome.rec);
      if (config.solver == "stochastic") {
        std::ofstream trace_out(config.out_dir + "/trace_" + std::to_string(seed) + ".csv");
        write_trace_csv(trace_out, outcome.trace);
      }
    }
    res.seeds.push_back(std::move(outcome));
  }
  std::vector<const RunRecord*> ok_recs;
  for (const SeedOutcome& so : res.seeds)
    if (so.ok) ok_recs.push_back(&so.rec);
  std::ofstream agg_out(config.out_dir + "/aggregate.csv");
  write_aggregate_csv(agg_out, ok_recs, config.K);
  std::ofstream sum_out(config.out_dir + "/summary.txt");
  write_summary(sum_out, family, ctx, res);
  std::ofstream cfg_out(config.out_dir + "/config_used.json");
  cfg_out << save_config(config);
  return res;
}

}  // namespace oprl
