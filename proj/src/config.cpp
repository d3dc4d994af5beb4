#include "commgate/config.hpp"

#include <fstream>
#include <set>

namespace commgate {

using nlohmann::json;

std::string run_mode_name(RunMode m) {
  switch (m) {
    case RunMode::FixedCts: return "fixed-cts";
    case RunMode::FixedProto: return "fixed-proto";
    case RunMode::GatedCts: return "gated-cts";
    case RunMode::GatedProto: return "gated-proto";
    case RunMode::Enforcer: return "enforcer";
  }
  return "?";
}

RunMode run_mode_from_name(const std::string& s) {
  for (RunMode m : {RunMode::FixedCts, RunMode::FixedProto, RunMode::GatedCts,
                    RunMode::GatedProto, RunMode::Enforcer})
    if (run_mode_name(m) == s) return m;
  throw ConfigError("unknown mode: " + s +
                    " (expected fixed-cts|fixed-proto|gated-cts|gated-proto|enforcer)");
}

std::string enforcer_mode_name(EnforcerMode m) {
  switch (m) {
    case EnforcerMode::None: return "none";
    case EnforcerMode::CommMax: return "commmax";
    case EnforcerMode::Soft: return "soft";
    case EnforcerMode::Hard: return "hard";
  }
  return "?";
}

EnforcerMode enforcer_mode_from_name(const std::string& s) {
  for (EnforcerMode m : {EnforcerMode::None, EnforcerMode::CommMax, EnforcerMode::Soft,
                         EnforcerMode::Hard})
    if (enforcer_mode_name(m) == s) return m;
  throw ConfigError("unknown enforcer: " + s + " (expected none|commmax|soft|hard)");
}

void TrainConfig::validate() const {
  if (workers < 1) throw ConfigError("train.workers must be >= 1");
  if (batch_steps < 1) throw ConfigError("train.batch_steps must be >= 1");
  if (mini_updates < 1) throw ConfigError("train.mini_updates must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (lr <= 0.0) throw ConfigError("train.lr must be positive");
  if (grad_clip <= 0.0) throw ConfigError("train.grad_clip must be positive");
  if (value_coef < 0.0 || entropy_coef < 0.0)
    throw ConfigError("train coefficients must be nonnegative");
  if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
}

TrafficJunctionConfig EnvConfig::tj_config() const {
  TrafficJunctionConfig cfg;
  if (tag == "tj-easy")
    cfg = TrafficJunctionConfig::easy();
  else if (tag == "tj-medium")
    cfg = TrafficJunctionConfig::medium();
  else
    throw ConfigError("env tag is not a traffic junction: " + tag);
  if (n_max > 0) cfg.n_max = n_max;
  if (p_arrive >= 0.0) cfg.p_arrive = p_arrive;
  if (max_steps > 0) cfg.max_steps = max_steps;
  if (gamma > 0.0) cfg.gamma = gamma;
  return cfg;
}

std::unique_ptr<Env> EnvConfig::instantiate() const {
  if (is_tj()) return std::make_unique<TrafficJunctionEnv>(tj_config());
  PredatorPreyConfig cfg;
  if (tag == "pp-5x5")
    cfg = PredatorPreyConfig::small5x5();
  else if (tag == "pp-10x10")
    cfg = PredatorPreyConfig::large10x10();
  else
    throw ConfigError("unknown env tag: " + tag);
  if (grid > 0) cfg.grid = grid;
  if (n_predators > 0) cfg.n_predators = n_predators;
  if (max_steps > 0) cfg.max_steps = max_steps;
  if (gamma > 0.0) cfg.gamma = gamma;
  return std::make_unique<PredatorPreyEnv>(cfg);
}

void ExperimentConfig::validate() const {
  train.validate();
  budget.validate();
  curriculum.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (mode == RunMode::Enforcer && budget.mode == EnforcerMode::None)
    throw ConfigError("enforcer mode requires budget.enforcer to be set");
  // Env & policy dims are validated at instantiation.
  auto env = this->env.instantiate();
  (void)env;
}

namespace {

void require_keys(const json& j, const std::string& block,
                  const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config block '" + block + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + block + "." + it.key() + "'");
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json ExperimentConfig::to_json() const {
  json j;
  j["env"] = {{"tag", env.tag}};
  if (env.n_max > 0) j["env"]["n_max"] = env.n_max;
  if (env.p_arrive >= 0.0) j["env"]["p_arrive"] = env.p_arrive;
  if (env.max_steps > 0) j["env"]["max_steps"] = env.max_steps;
  if (env.grid > 0) j["env"]["grid"] = env.grid;
  if (env.n_predators > 0) j["env"]["n_predators"] = env.n_predators;
  if (env.gamma > 0.0) j["env"]["gamma"] = env.gamma;
  j["mode"] = run_mode_name(mode);
  j["policy"] = {{"hidden", policy.hidden},
                 {"msg_dim", policy.msg_dim},
                 {"n_protos", policy.n_protos},
                 {"proto_tau", policy.proto_tau},
                 {"discrete", policy.discrete},
                 {"comm_enabled", policy.comm_enabled},
                 {"dropout_rate", policy.dropout_rate}};
  j["budget"] = {{"b", budget.b},
                 {"enforcer", enforcer_mode_name(budget.mode)},
                 {"lambda_outer", budget.lambda_outer},
                 {"gain_p", budget.gain_p},
                 {"gain_d", budget.gain_d},
                 {"gain_i", budget.gain_i},
                 {"clamp_k", budget.clamp_k},
                 {"epsilon", budget.epsilon},
                 {"mask_lo", budget.mask_lo},
                 {"mask_hi", budget.mask_hi},
                 {"p_term", budget.p_mode == PTermMode::Symmetric ? "symmetric" : "paper"}};
  j["train"] = {{"workers", train.workers},
                {"batch_steps", train.batch_steps},
                {"mini_updates", train.mini_updates},
                {"epochs", train.epochs},
                {"value_coef", train.value_coef},
                {"entropy_coef", train.entropy_coef},
                {"grad_clip", train.grad_clip},
                {"adv_norm", train.adv_norm},
                {"env_ramp_start", train.env_ramp_start},
                {"env_ramp_step", train.env_ramp_step},
                {"env_ramp_threshold", train.env_ramp_threshold},
                {"env_ramp_window", train.env_ramp_window},
                {"lr", train.lr},
                {"rms_alpha", train.rms_alpha},
                {"rms_eps", train.rms_eps},
                {"checkpoint_every", train.checkpoint_every}};
  j["curriculum"] = {{"success_threshold", curriculum.success_threshold},
                     {"reward_threshold_frac", curriculum.reward_threshold_frac},
                     {"window", curriculum.window},
                     {"comm_floor", curriculum.comm_floor},
                     {"plateau_dc", curriculum.plateau_dc},
                     {"plateau_dreward", curriculum.plateau_dreward},
                     {"taper_factor", curriculum.taper_factor},
                     {"taper_floor", curriculum.taper_floor},
                     {"taper_epochs", curriculum.taper_epochs}};
  j["seeds"] = seeds;
  j["out_dir"] = out_dir;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  require_keys(j, "config",
               {"env", "mode", "policy", "budget", "train", "curriculum", "seeds",
                "out_dir"});
  if (!j.contains("env")) throw ConfigError("config is missing required block 'env'");
  ExperimentConfig cfg;

  const json& je = j.at("env");
  require_keys(je, "env",
               {"tag", "n_max", "p_arrive", "max_steps", "grid", "n_predators", "gamma"});
  if (!je.contains("tag")) throw ConfigError("env.tag is required");
  cfg.env.tag = je.at("tag").get<std::string>();
  maybe(je, "n_max", cfg.env.n_max);
  maybe(je, "p_arrive", cfg.env.p_arrive);
  maybe(je, "max_steps", cfg.env.max_steps);
  maybe(je, "grid", cfg.env.grid);
  maybe(je, "n_predators", cfg.env.n_predators);
  maybe(je, "gamma", cfg.env.gamma);

  if (j.contains("mode")) cfg.mode = run_mode_from_name(j.at("mode").get<std::string>());

  if (j.contains("policy")) {
    const json& jp = j.at("policy");
    require_keys(jp, "policy",
                 {"hidden", "msg_dim", "n_protos", "proto_tau", "discrete",
                  "comm_enabled", "dropout_rate"});
    maybe(jp, "hidden", cfg.policy.hidden);
    maybe(jp, "msg_dim", cfg.policy.msg_dim);
    maybe(jp, "n_protos", cfg.policy.n_protos);
    maybe(jp, "proto_tau", cfg.policy.proto_tau);
    maybe(jp, "discrete", cfg.policy.discrete);
    maybe(jp, "comm_enabled", cfg.policy.comm_enabled);
    maybe(jp, "dropout_rate", cfg.policy.dropout_rate);
  }

  if (j.contains("budget")) {
    const json& jb = j.at("budget");
    require_keys(jb, "budget",
                 {"b", "enforcer", "lambda_outer", "gain_p", "gain_d", "gain_i",
                  "clamp_k", "epsilon", "mask_lo", "mask_hi", "p_term"});
    maybe(jb, "b", cfg.budget.b);
    if (jb.contains("enforcer"))
      cfg.budget.mode = enforcer_mode_from_name(jb.at("enforcer").get<std::string>());
    if (jb.contains("lambda_outer")) {
      cfg.budget.lambda_outer = jb.at("lambda_outer").get<double>();
    } else {
      // CommMax and Hard default to 0.1; Soft's inner gains already scale it.
      cfg.budget.lambda_outer =
          (cfg.budget.mode == EnforcerMode::Soft || cfg.budget.mode == EnforcerMode::None)
              ? 1.0
              : 0.1;
    }
    maybe(jb, "gain_p", cfg.budget.gain_p);
    maybe(jb, "gain_d", cfg.budget.gain_d);
    maybe(jb, "gain_i", cfg.budget.gain_i);
    maybe(jb, "clamp_k", cfg.budget.clamp_k);
    maybe(jb, "epsilon", cfg.budget.epsilon);
    maybe(jb, "mask_lo", cfg.budget.mask_lo);
    maybe(jb, "mask_hi", cfg.budget.mask_hi);
    if (jb.contains("p_term")) {
      std::string pm = jb.at("p_term").get<std::string>();
      if (pm == "symmetric")
        cfg.budget.p_mode = PTermMode::Symmetric;
      else if (pm == "paper")
        cfg.budget.p_mode = PTermMode::PaperVerbatim;
      else
        throw ConfigError("budget.p_term must be 'symmetric' or 'paper'");
    }
  }

  if (j.contains("train")) {
    const json& jt = j.at("train");
    require_keys(jt, "train",
                 {"workers", "batch_steps", "mini_updates", "epochs", "value_coef",
                  "entropy_coef", "grad_clip", "adv_norm", "lr", "rms_alpha",
                  "rms_eps", "checkpoint_every", "env_ramp_start", "env_ramp_step",
                  "env_ramp_threshold", "env_ramp_window"});
    maybe(jt, "workers", cfg.train.workers);
    maybe(jt, "batch_steps", cfg.train.batch_steps);
    maybe(jt, "mini_updates", cfg.train.mini_updates);
    maybe(jt, "epochs", cfg.train.epochs);
    maybe(jt, "value_coef", cfg.train.value_coef);
    maybe(jt, "entropy_coef", cfg.train.entropy_coef);
    maybe(jt, "grad_clip", cfg.train.grad_clip);
    maybe(jt, "adv_norm", cfg.train.adv_norm);
    maybe(jt, "env_ramp_start", cfg.train.env_ramp_start);
    maybe(jt, "env_ramp_step", cfg.train.env_ramp_step);
    maybe(jt, "env_ramp_threshold", cfg.train.env_ramp_threshold);
    maybe(jt, "env_ramp_window", cfg.train.env_ramp_window);
    maybe(jt, "lr", cfg.train.lr);
    maybe(jt, "rms_alpha", cfg.train.rms_alpha);
    maybe(jt, "rms_eps", cfg.train.rms_eps);
    maybe(jt, "checkpoint_every", cfg.train.checkpoint_every);
  }

  if (j.contains("curriculum")) {
    const json& jc = j.at("curriculum");
    require_keys(jc, "curriculum",
                 {"success_threshold", "reward_threshold_frac", "window", "comm_floor",
                  "plateau_dc", "plateau_dreward", "taper_factor", "taper_floor",
                  "taper_epochs"});
    maybe(jc, "success_threshold", cfg.curriculum.success_threshold);
    maybe(jc, "reward_threshold_frac", cfg.curriculum.reward_threshold_frac);
    maybe(jc, "window", cfg.curriculum.window);
    maybe(jc, "comm_floor", cfg.curriculum.comm_floor);
    maybe(jc, "plateau_dc", cfg.curriculum.plateau_dc);
    maybe(jc, "plateau_dreward", cfg.curriculum.plateau_dreward);
    maybe(jc, "taper_factor", cfg.curriculum.taper_factor);
    maybe(jc, "taper_floor", cfg.curriculum.taper_floor);
    maybe(jc, "taper_epochs", cfg.curriculum.taper_epochs);
  }

  maybe(j, "seeds", cfg.seeds);
  maybe(j, "out_dir", cfg.out_dir);
  cfg.curriculum.reward_based = !cfg.env.is_tj();
  return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::apply_override(const std::string& key_eq_value) {
  auto eq = key_eq_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like block.key=value: " + key_eq_value);
  std::string path = key_eq_value.substr(0, eq);
  std::string text = key_eq_value.substr(eq + 1);

  json j = to_json();
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;  // plain string
  }
  json* node = &j;
  size_t start = 0;
  while (true) {
    size_t dot = path.find('.', start);
    std::string part = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (dot == std::string::npos) {
      // Leaf: key must already exist or belong to a known block schema; the
      // re-parse below rejects unknown keys.
      (*node)[part] = value;
      break;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
  *this = from_json(j);
}

}  // namespace commgate
