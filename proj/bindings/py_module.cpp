#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "commgate/config.hpp"
#include "commgate/enforcers.hpp"
#include "commgate/env.hpp"
#include "commgate/evaluate.hpp"
#include "commgate/oracle.hpp"
#include "commgate/report.hpp"
#include "commgate/serialize.hpp"
#include "commgate/sweep.hpp"
#include "commgate/trainer.hpp"

namespace py = pybind11;
using namespace commgate;
using nlohmann::json;

namespace {

json json_from_py(const py::object& obj) {
  py::object dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(obj).cast<std::string>());
}

py::object json_to_py(const json& j) {
  py::object loads = py::module_::import("json").attr("loads");
  return loads(j.dump());
}

ExperimentConfig config_from_py(const py::dict& cfg) {
  return ExperimentConfig::from_json(json_from_py(cfg));
}

py::dict step_result_to_py(const StepResult& res) {
  py::dict d;
  d["obs"] = res.obs;
  d["rewards"] = res.rewards;
  d["alive"] = std::vector<int>(res.alive.begin(), res.alive.end());
  d["done"] = res.done;
  d["collisions"] = res.info.collisions;
  d["on_prey"] = res.info.on_prey;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Budget-constrained sparse-discrete multi-agent communication stack";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DivergenceError>(m, "DivergenceError");
  py::register_exception<EvalError>(m, "EvalError");

  // Enforcer formulas.
  m.def("comm_max_penalty", &comm_max_penalty, py::arg("c"));
  m.def(
      "soft_p_term",
      [](double b, double c, const std::string& mode) {
        return soft_p_term(b, c,
                           mode == "paper" ? PTermMode::PaperVerbatim
                                           : PTermMode::Symmetric);
      },
      py::arg("b"), py::arg("c"), py::arg("mode") = "symmetric");
  m.def("soft_d_term", &soft_d_term, py::arg("r_p_now"), py::arg("r_p_prev"));
  m.def("hard_penalty", &hard_penalty, py::arg("c_star"), py::arg("c_hard"));
  m.def(
      "hard_mask",
      [](const std::vector<int>& attempts, double b, int max_steps, double mask_lo,
         double mask_hi, uint64_t seed, bool training) {
        std::vector<uint8_t> a(attempts.begin(), attempts.end());
        Rng rng(seed);
        auto d = hard_mask(a, b, max_steps, mask_lo, mask_hi, rng, training);
        return std::vector<int>(d.begin(), d.end());
      },
      py::arg("attempts"), py::arg("b"), py::arg("max_steps"),
      py::arg("mask_lo") = 0.0, py::arg("mask_hi") = 0.0, py::arg("seed") = 0,
      py::arg("training") = false);

  // Environments behind the shared episode interface.
  py::class_<Env>(m, "Env")
      .def("reset",
           [](Env& env, uint64_t seed) {
             Rng rng(seed);
             return step_result_to_py(env.reset(rng));
           },
           py::arg("seed"))
      .def("step",
           [](Env& env, const std::vector<int>& actions) {
             return step_result_to_py(env.step(actions));
           },
           py::arg("actions"))
      .def("episode_success", &Env::episode_success)
      .def("episode_collisions", &Env::episode_collisions)
      .def("name", &Env::name)
      .def_property_readonly("n_agents", [](const Env& e) { return e.spec().n_agents; })
      .def_property_readonly("n_actions",
                             [](const Env& e) { return e.spec().n_actions; })
      .def_property_readonly("obs_dim", [](const Env& e) { return e.spec().obs_dim; })
      .def_property_readonly("max_steps",
                             [](const Env& e) { return e.spec().max_steps; });
  m.def("make_env", &make_env, py::arg("tag"));

  // Training / evaluation / reporting on top of JSON-dict configs.
  m.def(
      "run_training",
      [](const py::dict& cfg, uint64_t seed, const std::string& run_dir,
         const std::string& resume) {
        RunResult r = run_training(config_from_py(cfg), seed, run_dir, resume);
        py::dict d;
        d["run_dir"] = r.run_dir;
        d["final_checkpoint"] = r.final_checkpoint;
        d["epochs_run"] = r.epochs_run;
        d["final_phase"] = phase_name(r.final_phase);
        d["success_rate"] = r.last_stats.success_rate;
        d["c"] = r.last_stats.c;
        return d;
      },
      py::arg("config"), py::arg("seed"), py::arg("run_dir"),
      py::arg("resume") = std::string());
  m.def(
      "evaluate_checkpoint",
      [](const std::string& checkpoint, const std::string& env_tag, int episodes,
         uint64_t seed) {
        Checkpoint ck = load_checkpoint(checkpoint);
        EnvConfig env_cfg;
        env_cfg.tag = env_tag.empty() ? ck.meta.env_tag : env_tag;
        return json_to_py(evaluate_checkpoint(ck, env_cfg, episodes, seed).to_json());
      },
      py::arg("checkpoint"), py::arg("env_tag") = std::string(),
      py::arg("episodes") = 500, py::arg("seed") = 7);
  m.def(
      "oracle_solve",
      [](const std::string& env_tag, int toy, int n_max, int max_steps, double p_arrive,
         int history, uint64_t max_nodes, uint64_t max_policies) {
        OracleConfig cfg;
        if (toy > 0) {
          cfg.env = TrafficJunctionConfig::toy(toy, n_max > 0 ? n_max : 2,
                                               max_steps > 0 ? max_steps : 6,
                                               p_arrive >= 0 ? p_arrive : 0.3);
        } else {
          EnvConfig env_cfg;
          env_cfg.tag = env_tag;
          if (n_max > 0) env_cfg.n_max = n_max;
          if (max_steps > 0) env_cfg.max_steps = max_steps;
          if (p_arrive >= 0) env_cfg.p_arrive = p_arrive;
          cfg.env = env_cfg.tj_config();
        }
        cfg.history = history;
        cfg.max_nodes = max_nodes;
        cfg.max_policies = max_policies;
        return json_to_py(solve(cfg).to_json());
      },
      py::arg("env_tag") = "tj-easy", py::arg("toy") = 0, py::arg("n_max") = 0,
      py::arg("max_steps") = 0, py::arg("p_arrive") = -1.0, py::arg("history") = 2,
      py::arg("max_nodes") = 50000000ULL, py::arg("max_policies") = 200000ULL);
  m.def(
      "write_report",
      [](const std::vector<std::string>& run_dirs, const std::string& out_dir,
         int window, double threshold) {
        return write_report(run_dirs, out_dir, window, threshold);
      },
      py::arg("run_dirs"), py::arg("out_dir"), py::arg("window") = 10,
      py::arg("threshold") = 0.95);
  m.def("default_config", [] {
    ExperimentConfig cfg;
    return json_to_py(cfg.to_json());
  });

#ifdef COMMGATE_VERSION
  m.attr("__version__") = COMMGATE_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
