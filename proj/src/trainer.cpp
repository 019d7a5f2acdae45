#include "dpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "dpo/estimators.hpp"

namespace dpo {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Rng stream(const RunConfig& c, Stream s) {
  return make_stream(c.seed, static_cast<std::uint64_t>(s));
}

Batch column(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double mean_or_nan(double sum, long n) { return n > 0 ? sum / static_cast<double>(n) : kNaN; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

EvalResult evaluate(const BetaPolicy& policy, const ContinuousEnv& env,
                    const RunningNormalizer& normalizer, int episodes, Rng& rng) {
  if (episodes < 1) throw std::invalid_argument("episodes must be positive");
  EvalResult out;
  for (int e = 0; e < episodes; ++e) {
    EnvState s = env.reset(rng);
    double ret = 0.0;
    for (;;) {
      const Batch obs = normalizer.normalize(column(env.observe(s)));
      const Batch a = policy.mean_action(obs);
      const std::vector<double> act(a.data(), a.data() + a.size());
      const StepResult r = env.step(s, act, rng);
      ret += r.reward;
      if (r.terminal || r.truncated) break;
      s = r.next;
    }
    out.returns.push_back(ret);
  }
  out.mean = std::accumulate(out.returns.begin(), out.returns.end(), 0.0) / episodes;
  double var = 0.0;
  for (double r : out.returns) var += (r - out.mean) * (r - out.mean);
  out.stddev = std::sqrt(var / episodes);
  return out;
}

std::string UpdateCounters::to_text() const {
  return "env_steps = " + std::to_string(env_steps) +
         "\ncritic_td_updates = " + std::to_string(critic_td_updates) +
         "\nbaseline_updates = " + std::to_string(baseline_updates) +
         "\npolicy_updates = " + std::to_string(policy_updates) +
         "\ncritic_ce_updates = " + std::to_string(critic_ce_updates) +
         "\ncycles = " + std::to_string(cycles) + "\n";
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {
      "step",         "eval_return_mean", "eval_return_std", "critic_kl",
      "critic_ce",    "baseline_loss",    "policy_loss_on",  "policy_loss_off",
      "entropy",      "mean_abs_residual", "mean_pos_adv"};
  return cols;
}

Trainer::Trainer(RunConfig config)
    : config_(std::move(config)),
      env_(make_env(config_.env)),
      env_rng_(stream(config_, Stream::kEnv)),
      policy_rng_(stream(config_, Stream::kPolicy)),
      critic_rng_(stream(config_, Stream::kCritic)),
      replay_rng_(stream(config_, Stream::kReplay)),
      eval_rng_(stream(config_, Stream::kEval)),
      obs_norm_(env_->observation_dim()),
      reward_scaler_(config_.gamma),
      replay_(env_->observation_dim(), env_->action_dim(),
              static_cast<std::size_t>(config_.replay_capacity)) {
  config_.validate();
  Rng init = make_stream(config_.seed, 100);
  const int od = env_->observation_dim();
  const int ad = env_->action_dim();
  policy_ = std::make_unique<BetaPolicy>(od, env_->bounds(), config_.hidden, init);
  policy_adam_ = AdamState(policy_->params().size(), config_.learning_rate);
  critic_ = CriticPair(Network(critic_spec(od, ad, config_.hidden), init), config_.tau,
                       config_.learning_rate);
  phi_ = Network(residual_spec(od, ad, config_.hidden), init);
  phi_adam_ = AdamState(phi_.params.size(), config_.learning_rate);
  state_ = env_->reset(env_rng_);
}

void Trainer::run() { loop(true); }
void Trainer::run_in_memory() { loop(false); }

void Trainer::loop(bool write_files) {
  out_dir_ = write_files ? config_.out_dir : std::string();
  if (write_files) {
    fs::create_directories(fs::path(out_dir_) / "ckpt");
    config_.save((fs::path(out_dir_) / "config.txt").string());
    std::ofstream m(fs::path(out_dir_) / "metrics.csv", std::ios::trunc);
    const auto& cols = metric_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) m << (i ? "," : "") << cols[i];
    m << "\n";
    const std::string step0 = "_0.mlp";
    const fs::path ck = fs::path(out_dir_) / "ckpt";
    save_checkpoint((ck / ("policy" + step0)).string(), policy_->network());
  }
  while (counters_.env_steps < config_.total_steps) {
    env_step();
    if (static_cast<int>(batch_.size()) >= config_.batch_size) train_cycle();
    if (counters_.env_steps % config_.eval_interval == 0) record_metrics(write_files);
  }
  if (write_files) save_final_artifacts();
}

void Trainer::check_finite(double value, const char* what) {
  if (std::isfinite(value) && policy_->params().all_finite() &&
      critic_.online.params.all_finite() && phi_.params.all_finite()) {
    return;
  }
  std::string msg = std::string("non-finite value after ") + what + " at step " +
                    std::to_string(counters_.env_steps) + " (value " + fmt(value) + ")";
  if (!out_dir_.empty() && fs::exists(out_dir_)) {
    const fs::path dump = fs::path(out_dir_) / "abort";
    fs::create_directories(dump);
    std::ofstream(dump / "reason.txt") << msg << "\n" << counters_.to_text();
    save_checkpoint((dump / "policy.mlp").string(), policy_->network());
    save_checkpoint((dump / "critic.mlp").string(), critic_.online);
    save_checkpoint((dump / "baseline.mlp").string(), phi_);
  }
  throw TrainingAborted(msg);
}

void Trainer::env_step() {
  const std::vector<double> raw = env_->observe(state_);
  obs_norm_.update(raw);
  const std::vector<double> obs_n = obs_norm_.normalize(raw);
  const Batch obs = column(obs_n);
  const PolicyDraw draw = policy_->sample(obs, policy_rng_);
  const double logp = BetaPolicy::log_density(policy_->shapes(obs), draw.unit)[0];
  const std::vector<double> action(draw.action.data(), draw.action.data() + draw.action.size());
  const StepResult res = env_->step(state_, action, env_rng_);
  const bool end = res.terminal || res.truncated;
  reward_scaler_.observe(res.reward, end);

  Transition t;
  t.obs = raw;
  t.action = action;
  t.reward = res.reward;
  t.next_obs = env_->observe(res.next);
  t.terminal = res.terminal;
  replay_.add(t);

  BatchStep b;
  b.obs = obs_n;
  b.unit.assign(draw.unit.data(), draw.unit.data() + draw.unit.size());
  b.action = action;
  b.log_prob = logp;
  b.reward = reward_scaler_.scale(res.reward);
  b.episode_end = end;
  b.truncated = res.truncated;
  b.next_obs = obs_norm_.normalize(t.next_obs);
  batch_.push_back(std::move(b));

  ++counters_.env_steps;
  if (static_cast<long>(replay_.size()) >= config_.warmup) {
    const TransitionBatch mb = replay_.gather(
        replay_.sample_indices(static_cast<std::size_t>(config_.replay_minibatch), replay_rng_),
        &obs_norm_, &reward_scaler_);
    const double loss = kl_td_update(critic_, mb, *policy_, config_.gamma, critic_rng_);
    polyak_update(critic_);
    ++counters_.critic_td_updates;
    sums_.critic_kl += loss;
    ++sums_.n_kl;
    check_finite(loss, "critic KL update");
  }
  state_ = end ? env_->reset(env_rng_) : res.next;
}

BatchAdvantages Trainer::compute_advantages() {
  const auto n = static_cast<Eigen::Index>(batch_.size());
  if (n < 2) throw std::logic_error("batch too small for advantages");
  const int od = env_->observation_dim();
  const int ad = env_->action_dim();
  Batch obs(od, n), act(ad, n);
  std::vector<Eigen::Index> boot_at;  // batch positions bootstrapped from next_obs
  for (Eigen::Index j = 0; j < n; ++j) {
    const BatchStep& s = batch_[j];
    obs.col(j) = column(s.obs);
    act.col(j) = column(s.action);
    if (s.truncated || j == n - 1) boot_at.push_back(j);
  }
  Batch boot_obs(od, static_cast<Eigen::Index>(boot_at.size()));
  for (std::size_t k = 0; k < boot_at.size(); ++k) {
    boot_obs.col(static_cast<Eigen::Index>(k)) = column(batch_[boot_at[k]].next_obs);
  }
  const Batch boot_act = policy_->sample(boot_obs, policy_rng_).action;
  const GaussianBatch zq = critic_forward_batch(critic_.online, obs, act);
  const GaussianBatch zb = critic_forward_batch(critic_.online, boot_obs, boot_act);

  BatchAdvantages out;
  out.critic_means = zq.mean;
  out.baselines = baseline_values(phi_, critic_.online, *policy_, obs, config_.m_actions, critic_rng_);

  const auto build = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& qb) {
    RolloutArrays arr;
    arr.gamma = config_.gamma;
    arr.lambda = config_.lambda;
    arr.rewards.resize(n);
    arr.baselines.assign(out.baselines.data(), out.baselines.data() + n);
    arr.critic_values.resize(n + 1);
    arr.terminal_flags.assign(n + 1, 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      arr.rewards[j] = batch_[j].reward;
      arr.critic_values[j] = q[j];
      arr.terminal_flags[j + 1] = batch_[j].episode_end ? 1 : 0;
    }
    for (std::size_t k = 0; k < boot_at.size(); ++k) {
      const Eigen::Index j = boot_at[k];
      if (batch_[j].truncated) {
        arr.rewards[j] += config_.gamma * qb[static_cast<Eigen::Index>(k)];
      }
    }
    arr.critic_values[n] = qb[static_cast<Eigen::Index>(boot_at.size()) - 1];
    return uae(arr);
  };

  out.uae = build(zq.mean, zb.mean);
  out.interpolated.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    out.interpolated[j] = interpolate_advantage(
        out.uae[j], zq.mean[j] - out.baselines[j], config_.nu);
  }
  out.normalized = normalize_advantages(out.interpolated);

  const int l = config_.critic_samples;
  const Eigen::MatrixXd sq = sample_value_matrix(zq, l, critic_rng_);
  const Eigen::MatrixXd sb = sample_value_matrix(zb, l, critic_rng_);
  out.targets.resize(l, n);
  for (int i = 0; i < l; ++i) {
    const std::vector<double> a = build(sq.row(i).transpose(), sb.row(i).transpose());
    for (Eigen::Index j = 0; j < n; ++j) out.targets(i, j) = a[j] + out.baselines[j];
  }
  return out;
}

void Trainer::train_cycle() {
  const bool warm = static_cast<long>(replay_.size()) >= config_.warmup;
  const BaselineConfig bcfg = config_.baseline_config();
  if (warm) {
    for (int k = 0; k < bcfg.updates_per_iteration; ++k) {
      const TransitionBatch mb = replay_.gather(
          replay_.sample_indices(static_cast<std::size_t>(bcfg.minibatch), replay_rng_),
          &obs_norm_, nullptr);
      const double loss = baseline_update(phi_, phi_adam_, critic_.online, *policy_, mb.obs,
                                          mb.actions, bcfg.m_actions, critic_rng_);
      ++counters_.baseline_updates;
      sums_.baseline += loss;
      ++sums_.n_baseline;
      check_finite(loss, "baseline update");
    }
  }

  const BatchAdvantages adv = compute_advantages();
  const auto n = static_cast<Eigen::Index>(batch_.size());
  const int od = env_->observation_dim();
  const int ad = env_->action_dim();
  Batch obs(od, n), unit(ad, n), act(ad, n);
  Eigen::VectorXd logp(n), a_hat(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    obs.col(j) = column(batch_[j].obs);
    unit.col(j) = column(batch_[j].unit);
    act.col(j) = column(batch_[j].action);
    logp[j] = batch_[j].log_prob;
    a_hat[j] = adv.normalized[j];
  }
  if (!out_dir_.empty()) save_batch_artifacts();
  if (!out_dir_.empty()) {
    std::ofstream f(fs::path(out_dir_) / "last_batch.csv", std::ios::trunc);
    for (int i = 0; i < od; ++i) f << "obs" << i << ",";
    for (int i = 0; i < ad; ++i) f << "unit" << i << ",";
    for (int i = 0; i < ad; ++i) f << "action" << i << ",";
    f << "q,b\n";
    for (Eigen::Index j = 0; j < n; ++j) {
      for (int i = 0; i < od; ++i) f << fmt(obs(i, j)) << ",";
      for (int i = 0; i < ad; ++i) f << fmt(unit(i, j)) << ",";
      for (int i = 0; i < ad; ++i) f << fmt(act(i, j)) << ",";
      f << fmt(adv.critic_means[j]) << "," << fmt(adv.baselines[j]) << "\n";
    }
  }

  const PolicyConfig pcfg = config_.policy_config();
  const Eigen::Index mb_size =
      config_.learner == Learner::kTrpo ? n : std::min<Eigen::Index>(config_.minibatch, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), replay_rng_);
    for (Eigen::Index start = 0; start < n; start += mb_size) {
      const Eigen::Index len = std::min(mb_size, n - start);
      OnPolicyMinibatch mb;
      mb.obs.resize(od, len);
      mb.unit.resize(ad, len);
      mb.old_log_prob.resize(len);
      mb.advantages.resize(len);
      Batch mb_act(ad, len);
      Eigen::MatrixXd targets(adv.targets.rows(), len);
      for (Eigen::Index k = 0; k < len; ++k) {
        const Eigen::Index j = order[static_cast<std::size_t>(start + k)];
        mb.obs.col(k) = obs.col(j);
        mb.unit.col(k) = unit.col(j);
        mb_act.col(k) = act.col(j);
        mb.old_log_prob[k] = logp[j];
        mb.advantages[k] = a_hat[j];
        targets.col(k) = adv.targets.col(j);
      }
      Batch replay_obs;
      const Batch* replay_ptr = nullptr;
      if (warm && pcfg.omega < 1.0) {
        replay_obs = replay_.gather_obs(
            replay_.sample_indices(static_cast<std::size_t>(config_.replay_minibatch), replay_rng_),
            &obs_norm_);
        replay_ptr = &replay_obs;
      }
      const UpdateStats st = combined_update(pcfg, *policy_, policy_adam_, mb, critic_.online,
                                             phi_, replay_ptr, config_.m_actions, policy_rng_);
      ++counters_.policy_updates;
      sums_.on -= st.on_objective;
      ++sums_.n_policy;
      if (replay_ptr != nullptr) {
        sums_.off -= st.off_objective;
        sums_.residual += st.mean_abs_residual;
        sums_.pos_adv += st.mean_positive_adv;
        ++sums_.n_off;
      }
      check_finite(st.on_objective + st.off_objective, "policy update");
      if (warm) {
        const double ce = cross_entropy_update(critic_, mb.obs, mb_act, targets);
        polyak_update(critic_);
        ++counters_.critic_ce_updates;
        sums_.critic_ce += ce;
        ++sums_.n_ce;
        check_finite(ce, "critic cross-entropy update");
      }
    }
  }
  last_entropy_ = policy_->entropy(obs).mean();
  ++counters_.cycles;
  batch_.clear();
}

void Trainer::record_metrics(bool write_files) {
  const EvalResult ev = evaluate(*policy_, *env_, obs_norm_, config_.eval_episodes, eval_rng_);
  std::vector<double> row = {static_cast<double>(counters_.env_steps),
                             ev.mean,
                             ev.stddev,
                             mean_or_nan(sums_.critic_kl, sums_.n_kl),
                             mean_or_nan(sums_.critic_ce, sums_.n_ce),
                             mean_or_nan(sums_.baseline, sums_.n_baseline),
                             mean_or_nan(sums_.on, sums_.n_policy),
                             mean_or_nan(sums_.off, sums_.n_off),
                             last_entropy_,
                             mean_or_nan(sums_.residual, sums_.n_off),
                             mean_or_nan(sums_.pos_adv, sums_.n_off)};
  sums_ = Sums{};
  if (write_files) {
    std::ofstream m(fs::path(out_dir_) / "metrics.csv", std::ios::app);
    for (std::size_t i = 0; i < row.size(); ++i) {
      m << (i ? "," : "") << (i == 0 ? std::to_string(counters_.env_steps) : fmt(row[i]));
    }
    m << "\n";
    const fs::path ck = fs::path(out_dir_) / "ckpt";
    const std::string tag = "_" + std::to_string(counters_.env_steps) + ".mlp";
    save_checkpoint((ck / ("policy" + tag)).string(), policy_->network());
    save_checkpoint((ck / ("critic" + tag)).string(), critic_.online);
    save_checkpoint((ck / ("target" + tag)).string(), critic_.target);
    save_checkpoint((ck / ("baseline" + tag)).string(), phi_);
  }
  rows_.push_back(std::move(row));
}

void Trainer::save_batch_artifacts() {
  const fs::path d(out_dir_);
  save_checkpoint((d / "last_batch_policy.mlp").string(), policy_->network());
  save_checkpoint((d / "last_batch_critic.mlp").string(), critic_.online);
  save_checkpoint((d / "last_batch_baseline.mlp").string(), phi_);
}

void Trainer::save_final_artifacts() {
  const fs::path d(out_dir_);
  save_checkpoint((d / "policy_final.mlp").string(), policy_->network());
  save_checkpoint((d / "critic_final.mlp").string(), critic_.online);
  save_checkpoint((d / "baseline_final.mlp").string(), phi_);
  std::ofstream(d / "normalizer.txt") << obs_norm_.serialize() << "\n";
  std::ofstream(d / "counters.txt") << counters_.to_text();
  std::ofstream f(d / "replay_sample.csv", std::ios::trunc);
  const int od = env_->observation_dim();
  for (int i = 0; i < od; ++i) f << (i ? "," : "") << "obs" << i;
  f << "\n";
  if (replay_.size() > 0) {
    Rng rng = stream(config_, Stream::kArtifact);
    for (std::size_t idx : replay_.sample_indices(10000, rng)) {
      const Transition t = replay_.get(idx);
      for (int i = 0; i < od; ++i) f << (i ? "," : "") << fmt(t.obs[i]);
      f << "\n";
    }
  }
}

}  // namespace dpo
