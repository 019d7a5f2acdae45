#pragma once

#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpo/baseline.hpp"
#include "dpo/beta_policy.hpp"
#include "dpo/config.hpp"
#include "dpo/critic.hpp"
#include "dpo/environments.hpp"
#include "dpo/policy.hpp"
#include "dpo/replay.hpp"
#include "dpo/rng.hpp"

namespace dpo {

/// Independent random streams derived from the master seed.
enum class Stream : std::uint64_t { kEnv = 0, kPolicy = 1, kCritic = 2, kReplay = 3, kEval = 4, kArtifact = 5 };

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::vector<double> returns;
};

/// Runs whole episodes with the Beta mean action; no exploration noise.
EvalResult evaluate(const BetaPolicy& policy, const ContinuousEnv& env,
                    const RunningNormalizer& normalizer, int episodes, Rng& rng);

struct UpdateCounters {
  long env_steps = 0;
  long critic_td_updates = 0;
  long baseline_updates = 0;
  long policy_updates = 0;
  long critic_ce_updates = 0;
  long cycles = 0;

  std::string to_text() const;
};

/// One step stored in the on-policy batch.
struct BatchStep {
  std::vector<double> obs;       // normalized at collection time
  std::vector<double> unit;
  std::vector<double> action;
  double log_prob = 0.0;         // untransformed
  double reward = 0.0;           // scaled
  bool episode_end = false;
  bool truncated = false;
  std::vector<double> next_obs;  // normalized; used for bootstrapping
};

/// Advantage inputs and outputs for one batch.
struct BatchAdvantages {
  Eigen::VectorXd critic_means;   // Q_w at (s_t, a_t)
  Eigen::VectorXd baselines;      // b_phi(s_t)
  std::vector<double> uae;
  std::vector<double> interpolated;
  std::vector<double> normalized;
  Eigen::MatrixXd targets;        // critic_samples x T
};

/// Header of the metrics file.
const std::vector<std::string>& metric_columns();

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The full interleaved loop. Construct, then call run().
class Trainer {
 public:
  explicit Trainer(RunConfig config);

  /// Trains for config.total_steps environment steps, writing metrics,
  /// checkpoints and artifacts under config.out_dir.
  void run();
  /// Same loop without touching the filesystem.
  void run_in_memory();

  const RunConfig& config() const { return config_; }
  const UpdateCounters& counters() const { return counters_; }
  const BetaPolicy& policy() const { return *policy_; }
  const CriticPair& critic() const { return critic_; }
  const Network& baseline_net() const { return phi_; }
  const RunningNormalizer& normalizer() const { return obs_norm_; }
  const ReplayBuffer& replay() const { return replay_; }
  const std::vector<std::vector<double>>& metric_rows() const { return rows_; }
  const std::vector<BatchStep>& batch() const { return batch_; }

  /// Advantage computation for the current batch (used by train cycles).
  BatchAdvantages compute_advantages();

 private:
  void loop(bool write_files);
  void env_step();
  void train_cycle();
  void record_metrics(bool write_files);
  void check_finite(double value, const char* what);
  void save_batch_artifacts();
  void save_final_artifacts();

  RunConfig config_;
  std::unique_ptr<ContinuousEnv> env_;
  Rng env_rng_;
  Rng policy_rng_;
  Rng critic_rng_;
  Rng replay_rng_;
  Rng eval_rng_;

  std::unique_ptr<BetaPolicy> policy_;
  AdamState policy_adam_;
  CriticPair critic_;
  Network phi_;
  AdamState phi_adam_;
  RunningNormalizer obs_norm_;
  RewardScaler reward_scaler_;
  ReplayBuffer replay_;

  EnvState state_;
  std::vector<BatchStep> batch_;
  UpdateCounters counters_;
  std::vector<std::vector<double>> rows_;
  std::string out_dir_;

  // Running sums since the last metric row.
  struct Sums {
    double critic_kl = 0.0;
    long n_kl = 0;
    double critic_ce = 0.0;
    long n_ce = 0;
    double baseline = 0.0;
    long n_baseline = 0;
    double on = 0.0;
    double off = 0.0;
    double residual = 0.0;
    double pos_adv = 0.0;
    long n_policy = 0;
    long n_off = 0;
  } sums_;
  double last_entropy_ = std::numeric_limits<double>::quiet_NaN();
};

/// Stability and variance diagnostics of a finished run directory.
struct Diagnostics {
  double vpu = 0.0;
  double tv_critic_loss = 0.0;
  double grad_var_on = 0.0;
  double grad_var_off = 0.0;
  double mean_abs_residual = 0.0;
  double mean_pos_adv = 0.0;
  int snapshots = 0;
};

/// Squared norm of d log pi(a|s) / d theta for each column.
Eigen::VectorXd score_sq_norms(const BetaPolicy& policy, const Batch& obs,
                               const Batch& unit);

/// Reads a run directory and writes <dir>/diagnostics.csv.
Diagnostics diagnose(const std::string& run_dir, int replay_states = 10000);

/// Numeric CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;
};
CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

}  // namespace dpo
