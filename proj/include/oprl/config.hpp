#pragma once
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oprl/errors.hpp"

// Run configuration: JSON on disk, validated struct in memory. Saving an
// effective config echoes every default explicitly.
namespace oprl {

struct SolverOptions {
  int iterations = 20;
  int batch = 32;
  double eta_theta = 1e-2, eta_lambda = 1e-2, eta_w = 1e-2;
  int N_dual = 50, N_primal = 1;
};

struct GeneratorSpec {
  std::string name = "noisy-ring";  // "mdp" | "noisy-ring"
  int S = 2, A = 2, O = 3, H = 3;
  int candidates = 4;
  uint64_t seed = 1;
};

struct RunConfig {
  std::string family_path;  // used when use_generator is false
  bool use_generator = false;
  GeneratorSpec generator;
  std::string kernel_obs = "delta";      // "delta" | "rbf"
  std::string kernel_triples = "delta";  // "delta" | "rbf"
  double rbf_sigma = 1.0;
  int K = 0;
  double delta = 0.05;
  double beta_override = -1.0;  // negative: use the guarantee formula
  std::vector<uint64_t> seeds = {1};
  std::string out_dir = "out";
  std::string solver = "exact";  // "exact" | "stochastic"
  long plan_budget = 1000000;
  bool check_decomposition = true;
  SolverOptions solver_options;
};

inline void validate(const RunConfig& c) {
  if (c.family_path.empty() && !c.use_generator)
    throw ValidationError("config needs a family: file path or generator");
  if (!c.family_path.empty() && c.use_generator)
    throw ValidationError("config family must be a file path or a generator, not both");
  if (c.K < 1) throw ValidationError("config K must be >= 1");
  if (c.delta <= 0.0 || c.delta >= 1.0) throw ValidationError("config delta must be in (0,1)");
  if (c.seeds.empty()) throw ValidationError("config seeds must be nonempty");
  if (c.solver != "exact" && c.solver != "stochastic")
    throw ValidationError("config solver must be exact or stochastic");
  for (const std::string& k : {c.kernel_obs, c.kernel_triples})
    if (k != "delta" && k != "rbf") throw ValidationError("config kernel must be delta or rbf");
  if (c.rbf_sigma <= 0.0) throw ValidationError("config rbf sigma must be positive");
  if (c.plan_budget < 1) throw ValidationError("config plan budget must be positive");
  if (c.use_generator) {
    const GeneratorSpec& g = c.generator;
    if (g.S < 1 || g.A < 1 || g.O < 1 || g.H < 1 || g.candidates < 1)
      throw ValidationError("generator sizes must be positive");
  }
  const SolverOptions& so = c.solver_options;
  if (so.iterations < 1 || so.batch < 1 || so.N_dual < 0 || so.N_primal < 0)
    throw ValidationError("solver options must be positive");
  if (so.eta_theta < 0 || so.eta_lambda < 0 || so.eta_w < 0)
    throw ValidationError("solver step sizes must be nonnegative");
}

namespace detail {

template <typename T>
T json_get(const nlohmann::ordered_json& j, const char* field, const T& fallback) {
  if (!j.contains(field)) return fallback;
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("config field '") + field + "' has the wrong type");
  }
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::ordered_json& j) {
  RunConfig c;
  if (j.contains("family")) {
    const auto& fam = j.at("family");
    if (fam.is_string()) {
      c.family_path = fam.get<std::string>();
    } else if (fam.is_object()) {
      c.use_generator = true;
      c.generator.name = detail::json_get<std::string>(fam, "generator", c.generator.name);
      c.generator.S = detail::json_get<int>(fam, "S", c.generator.S);
      c.generator.A = detail::json_get<int>(fam, "A", c.generator.A);
      c.generator.O = detail::json_get<int>(fam, "O", c.generator.O);
      c.generator.H = detail::json_get<int>(fam, "H", c.generator.H);
      c.generator.candidates = detail::json_get<int>(fam, "candidates", c.generator.candidates);
      c.generator.seed = detail::json_get<uint64_t>(fam, "seed", c.generator.seed);
    } else {
      throw ParseError("config field 'family' must be a path or a generator object");
    }
  }
  if (j.contains("kernel")) {
    const auto& k = j.at("kernel");
    if (!k.is_object()) throw ParseError("config field 'kernel' must be an object");
    c.kernel_obs = detail::json_get<std::string>(k, "obs", c.kernel_obs);
    c.kernel_triples = detail::json_get<std::string>(k, "triples", c.kernel_triples);
    c.rbf_sigma = detail::json_get<double>(k, "sigma", c.rbf_sigma);
  }
  c.K = detail::json_get<int>(j, "K", c.K);
  c.delta = detail::json_get<double>(j, "delta", c.delta);
  c.beta_override = detail::json_get<double>(j, "beta", c.beta_override);
  c.seeds = detail::json_get<std::vector<uint64_t>>(j, "seeds", c.seeds);
  c.out_dir = detail::json_get<std::string>(j, "out", c.out_dir);
  c.solver = detail::json_get<std::string>(j, "solver", c.solver);
  c.plan_budget = detail::json_get<long>(j, "plan_budget", c.plan_budget);
  c.check_decomposition = detail::json_get<bool>(j, "check_decomposition", c.check_decomposition);
  if (j.contains("solver_options")) {
    const auto& so = j.at("solver_options");
    if (!so.is_object()) throw ParseError("config field 'solver_options' must be an object");
    c.solver_options.iterations =
        detail::json_get<int>(so, "iterations", c.solver_options.iterations);
    c.solver_options.batch = detail::json_get<int>(so, "batch", c.solver_options.batch);
    c.solver_options.eta_theta =
        detail::json_get<double>(so, "eta_theta", c.solver_options.eta_theta);
    c.solver_options.eta_lambda =
        detail::json_get<double>(so, "eta_lambda", c.solver_options.eta_lambda);
    c.solver_options.eta_w = detail::json_get<double>(so, "eta_w", c.solver_options.eta_w);
    c.solver_options.N_dual = detail::json_get<int>(so, "N_dual", c.solver_options.N_dual);
    c.solver_options.N_primal = detail::json_get<int>(so, "N_primal", c.solver_options.N_primal);
  }
  validate(c);
  return c;
}

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  if (c.use_generator) {
    j["family"] = {{"generator", c.generator.name}, {"S", c.generator.S},
                   {"A", c.generator.A},           {"O", c.generator.O},
                   {"H", c.generator.H},           {"candidates", c.generator.candidates},
                   {"seed", c.generator.seed}};
  } else {
    j["family"] = c.family_path;
  }
  j["kernel"] = {{"obs", c.kernel_obs}, {"triples", c.kernel_triples}, {"sigma", c.rbf_sigma}};
  j["K"] = c.K;
  j["delta"] = c.delta;
  j["beta"] = c.beta_override;
  j["seeds"] = c.seeds;
  j["out"] = c.out_dir;
  j["solver"] = c.solver;
  j["plan_budget"] = c.plan_budget;
  j["check_decomposition"] = c.check_decomposition;
  j["solver_options"] = {{"iterations", c.solver_options.iterations},
                         {"batch", c.solver_options.batch},
                         {"eta_theta", c.solver_options.eta_theta},
                         {"eta_lambda", c.solver_options.eta_lambda},
                         {"eta_w", c.solver_options.eta_w},
                         {"N_dual", c.solver_options.N_dual},
                         {"N_primal", c.solver_options.N_primal}};
  return j;
}

inline std::string save_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path);
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config parse: ") + e.what());
  }
  return config_from_json(j);
}

inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config parse: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace oprl
