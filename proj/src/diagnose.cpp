#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "dpo/oracle.hpp"
#include "dpo/trainer.hpp"

namespace dpo {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing artifact: " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Network load_required(const fs::path& p) {
  if (!fs::exists(p)) throw std::runtime_error("missing artifact: " + p.string());
  return load_checkpoint(p.string());
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::out_of_range("no column " + name);
  return static_cast<int>(it - header.begin());
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing artifact: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != t.header.size()) throw std::runtime_error("ragged csv: " + path);
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
  out << "\n";
  char buf[40];
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      out << (i ? "," : "") << buf;
    }
    out << "\n";
  }
}

Eigen::VectorXd score_sq_norms(const BetaPolicy& policy, const Batch& obs,
                               const Batch& unit) {
  BetaPolicy scratch = policy;
  Eigen::VectorXd out(obs.cols());
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1);
  for (Eigen::Index j = 0; j < obs.cols(); ++j) {
    scratch.params().zero_grad();
    scratch.accumulate_log_prob_grad(obs.col(j), unit.col(j), one);
    double s = 0.0;
    for (double g : scratch.params().grads) s += g * g;
    out[j] = s;
  }
  return out;
}

Diagnostics diagnose(const std::string& run_dir, int replay_states) {
  const fs::path dir(run_dir);
  const RunConfig config = RunConfig::parse(read_text(dir / "config.txt"));
  const auto env = make_env(config.env);
  const int od = env->observation_dim();
  const int ad = env->action_dim();
  const CsvTable metrics = read_csv((dir / "metrics.csv").string());
  if (!fs::is_directory(dir / "ckpt")) throw std::runtime_error("missing artifact: ckpt/");

  Diagnostics d;
  std::vector<std::pair<long, fs::path>> snaps;
  const std::regex pat("policy_([0-9]+)\\.mlp");
  for (const auto& e : fs::directory_iterator(dir / "ckpt")) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pat)) snaps.emplace_back(std::stol(m[1]), e.path());
  }
  std::sort(snaps.begin(), snaps.end());
  d.snapshots = static_cast<int>(snaps.size());
  if (snaps.size() >= 2) {
    std::vector<std::vector<double>> values;
    for (const auto& [step, path] : snaps) { const auto v = load_checkpoint(path.string()).params.values; values.emplace_back(v.begin(), v.end()); }
    d.vpu = variance_of_updates(values);
  }
  std::vector<double> losses;
  const int kl_col = metrics.column("critic_kl");
  for (const auto& row : metrics.rows) {
    if (std::isfinite(row[kl_col])) losses.push_back(row[kl_col]);
  }
  d.tv_critic_loss = losses.size() >= 2 ? average_total_variation(losses) : 0.0;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  d.grad_var_on = nan;
  if (fs::exists(dir / "last_batch.csv")) {
    const CsvTable b = read_csv((dir / "last_batch.csv").string());
    const BetaPolicy policy(load_required(dir / "last_batch_policy.mlp"), env->bounds());
    const auto n = static_cast<Eigen::Index>(b.rows.size());
    Batch obs(od, n), unit(ad, n);
    Eigen::VectorXd gap(n);
    const int qc = b.column("q");
    const int bc = b.column("b");
    for (Eigen::Index j = 0; j < n; ++j) {
      for (int i = 0; i < od; ++i) obs(i, j) = b.rows[j][i];
      for (int i = 0; i < ad; ++i) unit(i, j) = b.rows[j][od + i];
      gap[j] = b.rows[j][qc] - b.rows[j][bc];
    }
    const Eigen::VectorXd u2 = score_sq_norms(policy, obs, unit);
    d.grad_var_on = (u2.array() * gap.array().square()).mean();
  }

  d.grad_var_off = d.mean_abs_residual = d.mean_pos_adv = nan;
  if (fs::exists(dir / "replay_sample.csv")) {
    const CsvTable rs = read_csv((dir / "replay_sample.csv").string());
    if (!rs.rows.empty()) {
      const std::string norm_text = read_text(dir / "normalizer.txt");
      const RunningNormalizer norm = RunningNormalizer::deserialize(norm_text);
      const BetaPolicy policy(load_required(dir / "policy_final.mlp"), env->bounds());
      const Network critic = load_required(dir / "critic_final.mlp");
      const Network phi = load_required(dir / "baseline_final.mlp");
      const auto n = static_cast<Eigen::Index>(
          std::min<std::size_t>(rs.rows.size(), static_cast<std::size_t>(replay_states)));
      Batch raw(od, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        for (int i = 0; i < od; ++i) raw(i, j) = rs.rows[j][i];
      }
      const Batch obs = norm.normalize(raw);
      Rng rng = make_stream(config.seed, 7);
      const PolicyDraw draw = policy.sample(obs, rng);
      const Eigen::VectorXd q = critic_forward_batch(critic, obs, draw.action).mean;
      const Eigen::VectorXd bl =
          baseline_values(phi, critic, policy, obs, config.m_actions, rng);
      const Eigen::VectorXd res = residual_batch(phi, obs, draw.action);
      const Eigen::VectorXd u2 = score_sq_norms(policy, obs, draw.unit);
      const Eigen::ArrayXd gap = (q - bl).array();
      d.grad_var_off = (u2.array() * gap.square()).mean();
      d.mean_abs_residual = res.array().abs().mean();
      d.mean_pos_adv = gap.max(0.0).mean();
    }
  }

  CsvTable out;
  out.header = {"vpu", "tv_critic_loss", "grad_var_on", "grad_var_off",
                "mean_abs_residual", "mean_pos_adv", "snapshots"};
  out.rows.push_back({d.vpu, d.tv_critic_loss, d.grad_var_on, d.grad_var_off,
                      d.mean_abs_residual, d.mean_pos_adv, static_cast<double>(d.snapshots)});
  write_csv((dir / "diagnostics.csv").string(), out);
  return d;
}

}  // namespace dpo
