#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "dpo/config.hpp"
#include "dpo/platform.hpp"
#include "dpo/tabular_mdp.hpp"
#include "dpo/trainer.hpp"
#include "dpo/verify.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  dpo::keep_large_blocks_on_heap();
  CLI::App app{"Interleaved on/off-policy actor-critic trainer and checks"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "run a training job");
  std::optional<std::string> env, learner, config_path, out;
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
  train->add_option("--env", env, "pointmass | pendulum | lqr1d");
  train->add_option("--learner", learner, "ppo | a2c | trpo");
  train->add_option("--steps", steps, "total environment steps");
  train->add_option("--seed", seed, "master seed");
  train->add_option("--config", config_path, "key = value file")->check(CLI::ExistingFile);
  train->add_option("--out", out, "output directory");

  auto* verify = app.add_subcommand("verify", "run a verification suite");
  std::string suite;
  std::uint64_t verify_seed = 1;
  verify->add_option("suite", suite, "estimators | baseline | critic | policy | theorems | all")
      ->required();
  verify->add_option("--seed", verify_seed, "seed for Monte-Carlo checks");

  auto* diag = app.add_subcommand("diagnose", "stability and variance diagnostics of a run");
  std::string run_dir;
  diag->add_option("dir", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);

  auto* fixtures = app.add_subcommand("fixtures", "write the tabular fixture MDPs");
  std::string fixture_dir;
  fixtures->add_option("dir", fixture_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      std::string text = config_path ? slurp(*config_path) : std::string();
      text += "\n";
      if (learner) text += "learner = " + *learner + "\n";
      if (env) text += "env = " + *env + "\n";
      if (steps) text += "total_steps = " + std::to_string(*steps) + "\n";
      if (seed) text += "seed = " + std::to_string(*seed) + "\n";
      if (out) text += "out = " + *out + "\n";
      const dpo::RunConfig cfg = dpo::RunConfig::parse(text);
      cfg.validate();
      dpo::Trainer trainer(cfg);
      trainer.run();
      const auto& rows = trainer.metric_rows();
      if (!rows.empty()) {
        std::cout << "step " << static_cast<long>(rows.back()[0]) << " eval_return "
                  << rows.back()[1] << " +- " << rows.back()[2] << "\n";
      }
      std::cout << trainer.counters().to_text();
      return 0;
    }
    if (*verify) {
      const auto checks = dpo::run_suite(suite, verify_seed);
      int passed = 0;
      for (const auto& c : checks) {
        std::cout << dpo::format_check(c) << "\n";
        passed += c.passed ? 1 : 0;
      }
      std::cout << passed << "/" << checks.size() << " checks passed\n";
      return passed == static_cast<int>(checks.size()) ? 0 : 1;
    }
    if (*diag) {
      const dpo::Diagnostics d = dpo::diagnose(run_dir);
      std::cout << "vpu " << d.vpu << "\ntv_critic_loss " << d.tv_critic_loss
                << "\ngrad_var_on " << d.grad_var_on << "\ngrad_var_off " << d.grad_var_off
                << "\nmean_abs_residual " << d.mean_abs_residual << "\nmean_pos_adv "
                << d.mean_pos_adv << "\n";
      return 0;
    }
    if (*fixtures) {
      std::filesystem::create_directories(fixture_dir);
      for (int i = 0; i < dpo::kFixtureCount; ++i) {
        const auto path = std::filesystem::path(fixture_dir) / dpo::fixture_file_name(i);
        dpo::save_mdp(path.string(), dpo::fixture_mdp(i));
        std::cout << path.string() << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
