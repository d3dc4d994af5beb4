#include "commgate/serialize.hpp"

#include <fstream>

#include <json.hpp>

#include "commgate/errors.hpp"

namespace commgate {

using nlohmann::json;

namespace {
constexpr int kFormatVersion = 1;
}

void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const OptimizerState& opt, const CheckpointMeta& meta) {
  json j;
  j["format"] = "commgate-checkpoint";
  j["version"] = kFormatVersion;
  j["epoch"] = meta.epoch;
  j["lr"] = meta.lr;
  j["phase"] = phase_name(meta.phase);
  j["last_active"] = enforcer_mode_name(meta.last_active);
  j["epochs_in_phase"] = meta.epochs_in_phase;
  j["tapers_done"] = meta.tapers_done;
  j["pid"] = {{"r_p", meta.pid.r_p},       {"r_d", meta.pid.r_d},
              {"r_i", meta.pid.r_i},       {"r_p_prev", meta.pid.r_p_prev},
              {"integral", meta.pid.integral}};
  j["mode"] = run_mode_name(meta.mode);
  j["env_tag"] = meta.env_tag;
  j["seed"] = meta.seed;
  j["budget_b"] = meta.budget_b;
  j["env_rate"] = meta.env_rate;
  j["policy"] = {{"obs_dim", params.cfg.obs_dim},
                 {"n_actions", params.cfg.n_actions},
                 {"hidden", params.cfg.hidden},
                 {"msg_dim", params.cfg.msg_dim},
                 {"n_protos", params.cfg.n_protos},
                 {"proto_tau", params.cfg.proto_tau},
                 {"discrete", params.cfg.discrete},
                 {"comm_enabled", params.cfg.comm_enabled},
                 {"dropout_rate", params.cfg.dropout_rate}};
  json jp = json::array();
  for (const auto& p : params.parameters())
    jp.push_back({{"name", p->name}, {"shape", p->shape}, {"data", p->data}});
  j["params"] = jp;
  j["opt_v"] = opt.v;

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << j.dump();
  out << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EvalError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw EvalError("checkpoint parse error: " + std::string(e.what()));
  }
  if (!j.contains("format") || j.at("format") != "commgate-checkpoint")
    throw EvalError("not a commgate checkpoint: " + path);
  if (j.at("version").get<int>() != kFormatVersion)
    throw EvalError("unsupported checkpoint version");

  Checkpoint ck;
  const json& pc = j.at("policy");
  PolicyConfig cfg;
  cfg.obs_dim = pc.at("obs_dim").get<int>();
  cfg.n_actions = pc.at("n_actions").get<int>();
  cfg.hidden = pc.at("hidden").get<int>();
  cfg.msg_dim = pc.at("msg_dim").get<int>();
  cfg.n_protos = pc.at("n_protos").get<int>();
  cfg.proto_tau = pc.at("proto_tau").get<double>();
  cfg.discrete = pc.at("discrete").get<bool>();
  cfg.comm_enabled = pc.at("comm_enabled").get<bool>();
  cfg.dropout_rate = pc.at("dropout_rate").get<double>();
  Rng init_rng(0);
  ck.params = PolicyParams::init(cfg, init_rng);

  auto plist = ck.params.parameters();
  const json& jp = j.at("params");
  if (jp.size() != plist.size()) throw EvalError("checkpoint parameter count mismatch");
  for (size_t i = 0; i < plist.size(); ++i) {
    const json& entry = jp.at(i);
    if (entry.at("name").get<std::string>() != plist[i]->name)
      throw EvalError("checkpoint parameter order mismatch at " + plist[i]->name);
    auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape != plist[i]->shape)
      throw EvalError("checkpoint shape mismatch for " + plist[i]->name);
    size_t expected = plist[i]->data.size();
    plist[i]->data = entry.at("data").get<std::vector<double>>();
    if (plist[i]->data.size() != expected)
      throw EvalError("checkpoint data size mismatch for " + plist[i]->name);
  }
  ck.opt.v = j.at("opt_v").get<std::vector<std::vector<double>>>();
  if (ck.opt.v.size() != plist.size()) throw EvalError("checkpoint optimizer mismatch");

  ck.meta.epoch = j.at("epoch").get<int>();
  ck.meta.lr = j.at("lr").get<double>();
  ck.meta.phase = phase_from_name(j.at("phase").get<std::string>());
  ck.meta.last_active = enforcer_mode_from_name(j.at("last_active").get<std::string>());
  ck.meta.epochs_in_phase = j.at("epochs_in_phase").get<int>();
  ck.meta.tapers_done = j.at("tapers_done").get<int>();
  const json& pid = j.at("pid");
  ck.meta.pid.r_p = pid.at("r_p").get<double>();
  ck.meta.pid.r_d = pid.at("r_d").get<double>();
  ck.meta.pid.r_i = pid.at("r_i").get<double>();
  ck.meta.pid.r_p_prev = pid.at("r_p_prev").get<double>();
  ck.meta.pid.integral = pid.at("integral").get<double>();
  ck.meta.mode = run_mode_from_name(j.at("mode").get<std::string>());
  ck.meta.env_tag = j.at("env_tag").get<std::string>();
  ck.meta.seed = j.at("seed").get<uint64_t>();
  ck.meta.budget_b = j.at("budget_b").get<double>();
  ck.meta.env_rate = j.at("env_rate").get<double>();
  return ck;
}

}  // namespace commgate
