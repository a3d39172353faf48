// Command-line front end: validate families, run seeded experiments, plan a
// single model exactly, and score candidates against a saved dataset.
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "oprl/oprl.hpp"

namespace {

long plan_budget_from_env(long fallback) {
  const char* raw = std::getenv("OPRL_PLAN_BUDGET");
  if (raw == nullptr || *raw == '\0') return fallback;
  try {
    size_t pos = 0;
    long v = std::stol(raw, &pos);
    if (pos != std::string(raw).size() || v < 1)
      throw oprl::ValidationError("OPRL_PLAN_BUDGET must be a positive integer");
    return v;
  } catch (const oprl::Error&) {
    throw;
  } catch (const std::exception&) {
    throw oprl::ValidationError("OPRL_PLAN_BUDGET must be a positive integer");
  }
}

void print_policy(const oprl::Policy& policy) {
  for (int h = 0; h < policy.H; ++h) {
    long width = 1;
    for (int j = 0; j <= h; ++j) width *= policy.O;
    for (long idx = 0; idx < width; ++idx) {
      // decode the observation history for readability
      std::string obs;
      long rest = idx;
      for (int j = h; j >= 0; --j) {
        obs = std::to_string(rest % policy.O) + (obs.empty() ? "" : ",") + obs;
        rest /= policy.O;
      }
      std::cout << "h=" << h << " obs=" << obs << " a=" << policy.action_at(h, idx) << "\n";
    }
  }
}

int cmd_validate(const std::string& config_path) {
  oprl::RunConfig config = oprl::load_config(config_path);
  std::cout << "config:\n" << oprl::save_config(config);
  oprl::ParameterFamily family = oprl::family_from_config(config);
  const oprl::TabularModel& truth = family.truth();
  std::cout << "candidates " << family.size() << " true_index " << family.true_index << "\n";
  std::cout << "sizes H " << truth.H << " S " << truth.S << " A " << truth.A << " O " << truth.O
            << "\n";
  oprl::EstimationContext ctx =
      oprl::build_context(family, oprl::obs_kernel_from_config(config, truth.O),
                          oprl::triple_kernel_from_config(config, truth.O));
  for (int i = 0; i < family.size(); ++i) {
    const oprl::Bridge& br = ctx.bridges[i];
    double min_eig = *std::min_element(br.lambda_min.begin(), br.lambda_min.end());
    double max_cond = *std::max_element(br.cond.begin(), br.cond.end());
    std::cout << "candidate " << i << " d_s " << ctx.state_bases[i].dim() << " gamma "
              << oprl::format_double(br.gamma) << " min_lambda_eig "
              << oprl::format_double(min_eig) << " max_lambda_cond "
              << oprl::format_double(max_cond) << "\n";
  }
  std::cout << "d_o " << ctx.d_o << " alpha " << oprl::format_double(ctx.gram.alpha)
            << " gamma " << oprl::format_double(ctx.gamma) << "\n";
  double beta = oprl::resolve_beta(config, ctx, truth.H, truth.A);
  std::cout << "beta " << oprl::format_double(beta)
            << (config.beta_override >= 0.0 ? " (override)" : " (from the guarantee)") << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, bool have_seed, uint64_t seed,
            const std::string& out_dir) {
  oprl::RunConfig config = oprl::load_config(config_path);
  if (have_seed) config.seeds = {seed};
  if (!out_dir.empty()) config.out_dir = out_dir;
  config.plan_budget = plan_budget_from_env(config.plan_budget);
  std::cout << "config:\n" << oprl::save_config(config);
  oprl::ExperimentResult res = oprl::run_experiment(config);
  for (const oprl::SeedOutcome& so : res.seeds) {
    if (!so.ok) {
      std::cout << "seed " << so.seed << " FAILED " << so.error << "\n";
      continue;
    }
    double wall = 0.0;
    for (const oprl::IterationRow& row : so.rec.rows) wall += row.wall_ms;
    std::cout << "seed " << so.seed << " avg_subopt "
              << oprl::format_double(so.rec.average_suboptimality) << " membership "
              << oprl::format_double(so.rec.membership_rate) << " wall_ms "
              << oprl::format_double(wall) << "\n";
  }
  std::cout << "outputs in " << config.out_dir << "\n";
  return res.exit_code;
}

int cmd_plan(const std::string& config_path, const std::string& model_path) {
  long budget = 1000000;
  oprl::TabularModel m;
  if (!model_path.empty()) {
    m = oprl::load_model(model_path);
  } else if (!config_path.empty()) {
    oprl::RunConfig config = oprl::load_config(config_path);
    budget = config.plan_budget;
    m = oprl::family_from_config(config).truth();
  } else {
    throw oprl::ValidationError("plan needs --model or --config");
  }
  budget = plan_budget_from_env(budget);
  oprl::PlanResult pr = oprl::plan_exact(m, budget);
  std::cout << "J_star " << oprl::format_double(pr.value) << "\n";
  print_policy(pr.policy);
  return 0;
}

int cmd_loss(const std::string& config_path, const std::string& data_path,
             const std::string& out_dir) {
  oprl::RunConfig config = oprl::load_config(config_path);
  oprl::ParameterFamily family = oprl::family_from_config(config);
  const oprl::TabularModel& truth = family.truth();
  std::vector<oprl::TripleDataset> data = oprl::load_triples(data_path, truth.H, truth.A);
  for (const oprl::TripleDataset& d : data)
    for (const oprl::ObsTriple& t : d.samples)
      if (t.o_prev < 0 || t.o_prev >= truth.O || t.o_cur < 0 || t.o_cur >= truth.O ||
          t.o_next < 0 || t.o_next >= truth.O)
        throw oprl::ValidationError("triple observation out of range for this family");
  oprl::EstimationContext ctx =
      oprl::build_context(family, oprl::obs_kernel_from_config(config, truth.O),
                          oprl::triple_kernel_from_config(config, truth.O));
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    file.open(out_dir + "/losses.csv");
    out = &file;
  }
  *out << "candidate,h,a,a2,loss\n";
  int best = 0;
  double best_loss = 0.0;
  for (int i = 0; i < family.size(); ++i) {
    oprl::LossReport rep = oprl::compute_loss(family.candidates[i], ctx.bridges[i], data,
                                              ctx.kernel_triples, ctx.bases, ctx.gram);
    for (int h = 1; h < truth.H; ++h)
      for (int a = 0; a < truth.A; ++a)
        for (int a2 = 0; a2 < truth.A; ++a2)
          *out << i << "," << h << "," << a << "," << a2 << ","
               << oprl::format_double(rep.per_tuple[oprl::tuple_index(h, a, a2, truth.A)])
               << "\n";
    if (i == 0 || rep.value < best_loss) {
      best = i;
      best_loss = rep.value;
    }
    std::cout << "candidate " << i << " loss " << oprl::format_double(rep.value) << "\n";
  }
  std::cout << "best_candidate " << best << " loss " << oprl::format_double(best_loss) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"finite POMDP families: validation, optimistic runs, exact planning, losses"};
  app.require_subcommand(1);

  std::string config_path, model_path, data_path, out_dir;
  uint64_t seed = 0;

  CLI::App* validate = app.add_subcommand("validate", "check a family and report its constants");
  validate->add_option("--config", config_path, "config file")->required();

  CLI::App* run = app.add_subcommand("run", "run the seeded experiment from a config");
  run->add_option("--config", config_path, "config file")->required();
  CLI::Option* seed_opt = run->add_option("--seed", seed, "replace the config seed list");
  run->add_option("--out", out_dir, "replace the config output directory");

  CLI::App* plan = app.add_subcommand("plan", "exact planning for one model");
  plan->add_option("--config", config_path, "config file (plans the true candidate)");
  plan->add_option("--model", model_path, "model file (takes precedence)");

  CLI::App* loss = app.add_subcommand("loss", "score every candidate against saved triples");
  loss->add_option("--config", config_path, "config file")->required();
  loss->add_option("--data", data_path, "triples CSV")->required();
  loss->add_option("--out", out_dir, "write losses.csv here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(config_path);
    if (run->parsed()) return cmd_run(config_path, seed_opt->count() > 0, seed, out_dir);
    if (plan->parsed()) return cmd_plan(config_path, model_path);
    if (loss->parsed()) return cmd_loss(config_path, data_path, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
