#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "dpo/config.hpp"
#include "dpo/distributions.hpp"
#include "dpo/environments.hpp"
#include "dpo/estimators.hpp"
#include "dpo/oracle.hpp"
#include "dpo/platform.hpp"
#include "dpo/tabular_mdp.hpp"
#include "dpo/trainer.hpp"
#include "dpo/verify.hpp"

namespace py = pybind11;
using namespace dpo;

namespace {

// Stateful wrapper: the C++ environments are pure functions of
// (state, action, rng), Python callers expect reset/step.
class PyEnv {
 public:
  PyEnv(const std::string& name, std::uint64_t seed)
      : env_(make_env(name)), rng_(make_stream(seed, 0)) {}

  std::vector<double> reset() {
    state_ = env_->reset(rng_);
    return env_->observe(state_);
  }

  std::tuple<std::vector<double>, double, bool, bool> step(
      const std::vector<double>& action) {
    const StepResult r = env_->step(state_, action, rng_);
    state_ = r.next;
    return {env_->observe(state_), r.reward, r.terminal, r.truncated};
  }

  const ContinuousEnv& env() const { return *env_; }

 private:
  std::unique_ptr<ContinuousEnv> env_;
  Rng rng_;
  EnvState state_;
};

RolloutArrays arrays(std::vector<double> rewards, std::vector<double> critic_values,
                     std::vector<double> baselines, std::vector<int> terminal_flags,
                     double gamma, double lambda) {
  RolloutArrays a;
  a.rewards = std::move(rewards);
  a.critic_values = std::move(critic_values);
  a.baselines = std::move(baselines);
  a.terminal_flags = std::move(terminal_flags);
  a.gamma = gamma;
  a.lambda = lambda;
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Distributional policy optimization core";
  keep_large_blocks_on_heap();

  py::register_exception<TrainingAborted>(m, "TrainingAborted", PyExc_RuntimeError);

  // Estimators. critic_values and terminal_flags carry T + 1 entries.
  m.def(
      "uae",
      [](std::vector<double> rewards, std::vector<double> critic_values,
         std::vector<double> baselines, std::vector<int> terminal_flags, double gamma,
         double lambda) {
        return uae(arrays(std::move(rewards), std::move(critic_values),
                          std::move(baselines), std::move(terminal_flags), gamma, lambda));
      },
      py::arg("rewards"), py::arg("critic_values"), py::arg("baselines"),
      py::arg("terminal_flags"), py::arg("gamma") = 0.99, py::arg("lambda_") = 0.95);
  m.def("gae", &gae, py::arg("rewards"), py::arg("values"), py::arg("terminal_flags"),
        py::arg("gamma") = 0.99, py::arg("lambda_") = 0.95);
  m.def("lambda_return_q", &lambda_return_q, py::arg("rewards"), py::arg("critic_values"),
        py::arg("terminal_flags"), py::arg("gamma") = 0.99, py::arg("lambda_") = 0.95);
  m.def(
      "n_step_advantage",
      [](std::vector<double> rewards, std::vector<double> critic_values,
         std::vector<double> baselines, std::vector<int> terminal_flags, double gamma,
         int n, int t) {
        return n_step_advantage(arrays(std::move(rewards), std::move(critic_values),
                                       std::move(baselines), std::move(terminal_flags),
                                       gamma, 1.0),
                                n, t);
      },
      py::arg("rewards"), py::arg("critic_values"), py::arg("baselines"),
      py::arg("terminal_flags"), py::arg("gamma"), py::arg("n"), py::arg("t"));

  // Distributions.
  m.def(
      "gaussian_kl",
      [](double m1, double s1, double m2, double s2) {
        return gaussian_kl({m1, s1}, {m2, s2});
      },
      py::arg("target_mean"), py::arg("target_stddev"), py::arg("model_mean"),
      py::arg("model_stddev"));
  m.def(
      "gaussian_kl_grad",
      [](double m1, double s1, double m2, double s2) {
        const GaussianGrad g = gaussian_kl_grad({m1, s1}, {m2, s2});
        return std::make_tuple(g.d_mean, g.d_stddev);
      },
      py::arg("target_mean"), py::arg("target_stddev"), py::arg("model_mean"),
      py::arg("model_stddev"));
  m.def(
      "beta_log_density",
      [](const std::vector<double>& x, std::vector<double> alpha, std::vector<double> beta) {
        return beta_log_density(x, BetaParams{std::move(alpha), std::move(beta)});
      },
      py::arg("x"), py::arg("alpha"), py::arg("beta"));
  m.def(
      "beta_kl",
      [](std::vector<double> a1, std::vector<double> b1, std::vector<double> a2,
         std::vector<double> b2) {
        return beta_kl(BetaParams{std::move(a1), std::move(b1)},
                       BetaParams{std::move(a2), std::move(b2)});
      },
      py::arg("alpha_p"), py::arg("beta_p"), py::arg("alpha_q"), py::arg("beta_q"));

  // Environments.
  py::class_<PyEnv>(m, "Env")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("name"),
           py::arg("seed") = 0)
      .def("reset", &PyEnv::reset)
      .def("step", &PyEnv::step, py::arg("action"),
           "Returns (observation, reward, terminal, truncated).")
      .def_property_readonly("name", [](const PyEnv& e) { return e.env().name(); })
      .def_property_readonly("observation_dim",
                             [](const PyEnv& e) { return e.env().observation_dim(); })
      .def_property_readonly("action_dim", [](const PyEnv& e) { return e.env().action_dim(); })
      .def_property_readonly("horizon", [](const PyEnv& e) { return e.env().horizon(); })
      .def_property_readonly("action_lower",
                             [](const PyEnv& e) { return e.env().bounds().lower; })
      .def_property_readonly("action_upper",
                             [](const PyEnv& e) { return e.env().bounds().upper; });
  m.def(
      "make_env", [](const std::string& name, std::uint64_t seed) { return PyEnv(name, seed); },
      py::arg("name"), py::arg("seed") = 0);
  m.def("lqr_optimal_return", [] { return lqr_optimal_return(Lqr1D{}); });

  // Training.
  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static(
          "for_learner", [](const std::string& name) { return RunConfig::for_learner(parse_learner(name)); },
          py::arg("learner"))
      .def_static("parse", py::overload_cast<const std::string&>(&RunConfig::parse),
                  py::arg("text"))
      .def_static("load", &RunConfig::load, py::arg("path"))
      .def("save", &RunConfig::save, py::arg("path"))
      .def("validate", &RunConfig::validate)
      .def("to_text", &RunConfig::to_text)
      .def_property(
          "learner", [](const RunConfig& c) { return learner_name(c.learner); },
          [](RunConfig& c, const std::string& name) { c.learner = parse_learner(name); })
      .def_readwrite("env", &RunConfig::env)
      .def_readwrite("total_steps", &RunConfig::total_steps)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("out_dir", &RunConfig::out_dir)
      .def_readwrite("gamma", &RunConfig::gamma)
      .def_readwrite("lambda_", &RunConfig::lambda)
      .def_readwrite("tau", &RunConfig::tau)
      .def_readwrite("omega", &RunConfig::omega)
      .def_readwrite("nu", &RunConfig::nu)
      .def_readwrite("alpha", &RunConfig::alpha)
      .def_readwrite("learning_rate", &RunConfig::learning_rate)
      .def_readwrite("minibatch", &RunConfig::minibatch)
      .def_readwrite("replay_minibatch", &RunConfig::replay_minibatch)
      .def_readwrite("replay_capacity", &RunConfig::replay_capacity)
      .def_readwrite("m_actions", &RunConfig::m_actions)
      .def_readwrite("critic_samples", &RunConfig::critic_samples)
      .def_readwrite("batch_size", &RunConfig::batch_size)
      .def_readwrite("epochs", &RunConfig::epochs)
      .def_readwrite("baseline_updates", &RunConfig::baseline_updates)
      .def_readwrite("ppo_clip", &RunConfig::ppo_clip)
      .def_readwrite("max_kl", &RunConfig::max_kl)
      .def_readwrite("damping", &RunConfig::damping)
      .def_readwrite("cg_iters", &RunConfig::cg_iters)
      .def_readwrite("max_grad_norm", &RunConfig::max_grad_norm)
      .def_readwrite("warmup", &RunConfig::warmup)
      .def_readwrite("hidden", &RunConfig::hidden)
      .def_readwrite("eval_interval", &RunConfig::eval_interval)
      .def_readwrite("eval_episodes", &RunConfig::eval_episodes)
      .def("__eq__", [](const RunConfig& a, const RunConfig& b) { return a == b; })
      .def("__repr__", [](const RunConfig& c) {
        return "RunConfig(env=" + c.env + ", learner=" + learner_name(c.learner) +
               ", total_steps=" + std::to_string(c.total_steps) +
               ", seed=" + std::to_string(c.seed) + ")";
      });

  py::class_<UpdateCounters>(m, "Counters")
      .def_readonly("env_steps", &UpdateCounters::env_steps)
      .def_readonly("critic_td_updates", &UpdateCounters::critic_td_updates)
      .def_readonly("baseline_updates", &UpdateCounters::baseline_updates)
      .def_readonly("policy_updates", &UpdateCounters::policy_updates)
      .def_readonly("critic_ce_updates", &UpdateCounters::critic_ce_updates)
      .def_readonly("cycles", &UpdateCounters::cycles)
      .def("to_text", &UpdateCounters::to_text);

  m.def("metric_columns", &metric_columns);

  py::class_<Trainer>(m, "Trainer")
      .def(py::init<RunConfig>(), py::arg("config"))
      .def("run", &Trainer::run, py::call_guard<py::gil_scoped_release>(),
           "Train and write artifacts to config.out_dir.")
      .def("run_in_memory", &Trainer::run_in_memory,
           py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("config", &Trainer::config)
      .def_property_readonly("counters", &Trainer::counters)
      .def_property_readonly("metric_rows", &Trainer::metric_rows)
      .def("metrics", [](const Trainer& t) {
        // Rows as dicts keyed by column name.
        const auto& cols = metric_columns();
        py::list out;
        for (const auto& row : t.metric_rows()) {
          py::dict d;
          for (std::size_t i = 0; i < cols.size() && i < row.size(); ++i) {
            d[py::str(cols[i])] = row[i];
          }
          out.append(d);
        }
        return out;
      });

  // Tabular oracle.
  py::class_<TabularMDP>(m, "TabularMDP")
      .def_readonly("n_states", &TabularMDP::n_states)
      .def_readonly("n_actions", &TabularMDP::n_actions)
      .def_readonly("gamma", &TabularMDP::gamma)
      .def_readonly("P", &TabularMDP::P)
      .def_readonly("r", &TabularMDP::r)
      .def_readonly("rho0", &TabularMDP::rho0);
  m.def(
      "fixture_mdp",
      [](int index) { return std::make_tuple(fixture_mdp(index), fixture_policy(index)); },
      py::arg("index"), "Returns (mdp, policy) for a verification fixture.");

  py::class_<ExactValues>(m, "ExactValues")
      .def_readonly("Q", &ExactValues::Q)
      .def_readonly("V", &ExactValues::V)
      .def_readonly("visitation", &ExactValues::visitation)
      .def("normalized_visitation", &ExactValues::normalized_visitation);
  m.def("solve_q", &solve_q, py::arg("mdp"), py::arg("policy"));
  m.def(
      "optimal_baseline",
      [](const TabularMDP& mdp, const TabularPolicy& pi, int state) {
        return optimal_baseline(mdp, pi, solve_q(mdp, pi), state);
      },
      py::arg("mdp"), py::arg("policy"), py::arg("state"));

  py::class_<CheckResult>(m, "CheckResult")
      .def_readonly("name", &CheckResult::name)
      .def_readonly("statistic", &CheckResult::statistic)
      .def_readonly("threshold", &CheckResult::threshold)
      .def_readonly("passed", &CheckResult::passed)
      .def("__repr__", &format_check);
  m.def("suite_names", &suite_names);
  m.def("run_suite", &run_suite, py::arg("name"), py::arg("seed") = 1,
        py::call_guard<py::gil_scoped_release>());
}
