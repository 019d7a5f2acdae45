#include "dpo/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "dpo/environments.hpp"

namespace dpo {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw std::invalid_argument("bad value for " + key + ": '" + v + "'");
  }
  return out;
}

std::string real_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<int> parse_widths(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw std::invalid_argument(key + " needs at least one width");
  return out;
}

std::string widths_text(const std::vector<int>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(w[i]);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field integer_field(T RunConfig::*member, const char* key) {
  return {[member, key](RunConfig& c, const std::string& v) {
            c.*member = parse_number<T>(key, v);
          },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(double RunConfig::*member, const char* key) {
  return {[member, key](RunConfig& c, const std::string& v) {
            c.*member = parse_real(key, v);
          },
          [member](const RunConfig& c) { return real_text(c.*member); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"env", {[](RunConfig& c, const std::string& v) { c.env = v; },
               [](const RunConfig& c) { return c.env; }}},
      {"learner", {[](RunConfig& c, const std::string& v) { c.learner = parse_learner(v); },
                   [](const RunConfig& c) { return learner_name(c.learner); }}},
      {"total_steps", integer_field(&RunConfig::total_steps, "total_steps")},
      {"seed", integer_field(&RunConfig::seed, "seed")},
      {"out", {[](RunConfig& c, const std::string& v) { c.out_dir = v; },
               [](const RunConfig& c) { return c.out_dir; }}},
      {"gamma", real_field(&RunConfig::gamma, "gamma")},
      {"lambda", real_field(&RunConfig::lambda, "lambda")},
      {"tau", real_field(&RunConfig::tau, "tau")},
      {"omega", real_field(&RunConfig::omega, "omega")},
      {"nu", real_field(&RunConfig::nu, "nu")},
      {"alpha", real_field(&RunConfig::alpha, "alpha")},
      {"learning_rate", real_field(&RunConfig::learning_rate, "learning_rate")},
      {"minibatch", integer_field(&RunConfig::minibatch, "minibatch")},
      {"replay_minibatch", integer_field(&RunConfig::replay_minibatch, "replay_minibatch")},
      {"replay_capacity", integer_field(&RunConfig::replay_capacity, "replay_capacity")},
      {"m_actions", integer_field(&RunConfig::m_actions, "m_actions")},
      {"critic_samples", integer_field(&RunConfig::critic_samples, "critic_samples")},
      {"batch_size", integer_field(&RunConfig::batch_size, "batch_size")},
      {"epochs", integer_field(&RunConfig::epochs, "epochs")},
      {"baseline_updates", integer_field(&RunConfig::baseline_updates, "baseline_updates")},
      {"ppo_clip", real_field(&RunConfig::ppo_clip, "ppo_clip")},
      {"max_kl", real_field(&RunConfig::max_kl, "max_kl")},
      {"damping", real_field(&RunConfig::damping, "damping")},
      {"cg_iters", integer_field(&RunConfig::cg_iters, "cg_iters")},
      {"max_grad_norm", real_field(&RunConfig::max_grad_norm, "max_grad_norm")},
      {"warmup", integer_field(&RunConfig::warmup, "warmup")},
      {"hidden", {[](RunConfig& c, const std::string& v) { c.hidden = parse_widths("hidden", v); },
                  [](const RunConfig& c) { return widths_text(c.hidden); }}},
      {"eval_interval", integer_field(&RunConfig::eval_interval, "eval_interval")},
      {"eval_episodes", integer_field(&RunConfig::eval_episodes, "eval_episodes")},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields()) {
    if (name == key) return &field;
  }
  return nullptr;
}

}  // namespace

RunConfig RunConfig::for_learner(Learner learner) {
  RunConfig c;
  c.learner = learner;
  switch (learner) {
    case Learner::kPpo:
      c.batch_size = 2048;
      c.epochs = 10;
      c.baseline_updates = 12;
      break;
    case Learner::kA2c:
      c.batch_size = 256;
      c.epochs = 1;
      c.baseline_updates = 4;
      break;
    case Learner::kTrpo:
      c.batch_size = 4096;
      c.epochs = 1;
      c.baseline_updates = 12;
      break;
  }
  return c;
}

void RunConfig::validate() const {
  make_env(env);  // throws on unknown names
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(total_steps >= 0, "total_steps must be >= 0");
  require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
  require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
  require(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
  require(nu >= 0.0 && nu <= 1.0, "nu must lie in [0, 1]");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(minibatch >= 2 && replay_minibatch >= 1, "minibatch sizes too small");
  require(replay_capacity >= 1, "replay_capacity must be positive");
  require(critic_samples >= 1, "critic_samples must be positive");
  require(batch_size >= 2, "batch_size must be >= 2");
  require(epochs >= 1, "epochs must be positive");
  require(baseline_updates >= 0, "baseline_updates must be >= 0");
  require(warmup >= 0, "warmup must be >= 0");
  require(eval_interval >= 1 && eval_episodes >= 1, "evaluation settings must be positive");
  for (int w : hidden) require(w >= 1, "hidden widths must be positive");
  policy_config().validate();
  baseline_config().validate();
}

PolicyConfig RunConfig::policy_config() const {
  PolicyConfig p = PolicyConfig::for_learner(learner);
  p.omega = omega;
  p.alpha = alpha;
  p.ppo_clip = ppo_clip;
  p.max_kl = max_kl;
  p.damping = damping;
  p.epochs_per_batch = epochs;
  p.cg_iters = cg_iters;
  p.max_grad_norm = max_grad_norm;
  return p;
}

BaselineConfig RunConfig::baseline_config() const {
  BaselineConfig b;
  b.m_actions = m_actions;
  b.updates_per_iteration = baseline_updates;
  b.minibatch = replay_minibatch;
  return b;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(*this) + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(
    const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": empty key or value");
    }
    out.emplace_back(key, value);
  }
  return out;
}

RunConfig RunConfig::parse(const std::string& text) { return parse(text, RunConfig{}); }

RunConfig RunConfig::parse(const std::string& text, const RunConfig& base) {
  const auto pairs = parse_key_values(text);
  RunConfig c = base;
  for (const auto& [key, value] : pairs) {
    if (find_field(key) == nullptr) throw std::invalid_argument("unknown config key: " + key);
    if (key == "learner") {
      const RunConfig fresh = for_learner(parse_learner(value));
      c.learner = fresh.learner;
      c.batch_size = fresh.batch_size;
      c.epochs = fresh.epochs;
      c.baseline_updates = fresh.baseline_updates;
    }
  }
  for (const auto& [key, value] : pairs) {
    if (key != "learner") find_field(key)->set(c, value);
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config " + path);
  out << to_text();
}

}  // namespace dpo
