#include "dpo/tabular_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dpo {

namespace {

void check_distribution(const std::vector<double>& p, std::size_t n,
                        const char* what) {
  if (p.size() != n) {
    throw std::invalid_argument(std::string(what) + ": wrong length");
  }
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": negative or non-finite entry");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument(std::string(what) + ": does not sum to 1");
  }
}

std::string format_row(const std::vector<double>& row) {
  std::string line;
  char buf[32];
  for (std::size_t i = 0; i < row.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
    if (i > 0) line += ' ';
    line += buf;
  }
  return line;
}

std::vector<double> read_row(std::istream& in, int n) {
  std::vector<double> row(static_cast<std::size_t>(n));
  for (auto& v : row) {
    if (!(in >> v)) throw std::runtime_error("tabular file truncated");
  }
  return row;
}

// Renormalize so the row sums to 1 to the last bit that matters.
void renormalize(std::vector<double>& p) {
  double sum = 0.0;
  for (double v : p) sum += v;
  for (double& v : p) v /= sum;
}

}  // namespace

void TabularMDP::validate() const {
  if (n_states <= 0 || n_actions <= 0) {
    throw std::invalid_argument("MDP needs positive state and action counts");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("MDP discount must lie in [0, 1)");
  }
  if (P.size() != static_cast<std::size_t>(n_states) ||
      r.size() != static_cast<std::size_t>(n_states)) {
    throw std::invalid_argument("MDP tables have wrong state count");
  }
  for (int s = 0; s < n_states; ++s) {
    if (P[s].size() != static_cast<std::size_t>(n_actions) ||
        r[s].size() != static_cast<std::size_t>(n_actions)) {
      throw std::invalid_argument("MDP tables have wrong action count");
    }
    for (int a = 0; a < n_actions; ++a) {
      check_distribution(P[s][a], static_cast<std::size_t>(n_states), "P row");
      if (!std::isfinite(r[s][a])) throw std::invalid_argument("non-finite reward");
    }
  }
  check_distribution(rho0, static_cast<std::size_t>(n_states), "rho0");
}

void validate_policy(const TabularMDP& mdp, const TabularPolicy& policy) {
  if (policy.size() != static_cast<std::size_t>(mdp.n_states)) {
    throw std::invalid_argument("policy has wrong state count");
  }
  for (const auto& row : policy) {
    check_distribution(row, static_cast<std::size_t>(mdp.n_actions), "policy row");
  }
}

int sample_categorical(const std::vector<double>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Round-off: fall back to the last index with positive mass.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

std::vector<MdpStep> mdp_sample_episode(const TabularMDP& mdp,
                                        const TabularPolicy& policy,
                                        int horizon, Rng& rng) {
  std::vector<MdpStep> out;
  out.reserve(static_cast<std::size_t>(std::max(horizon, 0)));
  int s = sample_categorical(mdp.rho0, rng);
  for (int t = 0; t < horizon; ++t) {
    const int a = sample_categorical(policy[s], rng);
    out.push_back({s, a, mdp.r[s][a]});
    s = sample_categorical(mdp.P[s][a], rng);
  }
  return out;
}

void write_mdp(std::ostream& out, const TabularMDP& mdp) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", mdp.gamma);
  out << "tabular " << mdp.n_states << ' ' << mdp.n_actions << ' ' << buf << '\n';
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) out << format_row(mdp.P[s][a]) << '\n';
  }
  for (int s = 0; s < mdp.n_states; ++s) out << format_row(mdp.r[s]) << '\n';
  out << format_row(mdp.rho0) << '\n';
}

TabularMDP read_mdp(std::istream& in) {
  std::string tag;
  TabularMDP mdp;
  if (!(in >> tag) || tag != "tabular") {
    throw std::runtime_error("expected 'tabular' header");
  }
  if (!(in >> mdp.n_states >> mdp.n_actions >> mdp.gamma) || mdp.n_states <= 0 ||
      mdp.n_actions <= 0) {
    throw std::runtime_error("malformed tabular header");
  }
  mdp.P.resize(static_cast<std::size_t>(mdp.n_states));
  for (auto& ps : mdp.P) {
    ps.resize(static_cast<std::size_t>(mdp.n_actions));
    for (auto& row : ps) row = read_row(in, mdp.n_states);
  }
  mdp.r.resize(static_cast<std::size_t>(mdp.n_states));
  for (auto& row : mdp.r) row = read_row(in, mdp.n_actions);
  mdp.rho0 = read_row(in, mdp.n_states);
  mdp.validate();
  return mdp;
}

void save_mdp(const std::string& path, const TabularMDP& mdp) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_mdp(out, mdp);
}

TabularMDP load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_mdp(in);
}

TabularMDP random_mdp(int n_states, int n_actions, double gamma, Rng& rng) {
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  std::exponential_distribution<double> expo(1.0);
  mdp.P.assign(static_cast<std::size_t>(n_states),
               std::vector<std::vector<double>>(static_cast<std::size_t>(n_actions)));
  for (auto& ps : mdp.P) {
    for (auto& row : ps) {
      row.resize(static_cast<std::size_t>(n_states));
      for (double& v : row) v = expo(rng);
      renormalize(row);
    }
  }
  mdp.r.assign(static_cast<std::size_t>(n_states),
               std::vector<double>(static_cast<std::size_t>(n_actions)));
  for (auto& row : mdp.r) {
    for (double& v : row) v = standard_normal(rng);
  }
  mdp.rho0.assign(static_cast<std::size_t>(n_states), 1.0 / n_states);
  mdp.validate();
  return mdp;
}

TabularMDP fixture_mdp(int index) {
  if (index < 0 || index >= kFixtureCount) {
    throw std::invalid_argument("no such fixture MDP");
  }
  Rng rng = make_stream(20240917, static_cast<std::uint64_t>(index));
  const int n_states = index == 0 ? 3 : 4;
  const double gamma = index == 0 ? 0.9 : 0.8;
  return random_mdp(n_states, 2, gamma, rng);
}

TabularPolicy fixture_policy(int index) {
  const TabularMDP mdp = fixture_mdp(index);
  Rng rng = make_stream(20240917, 100 + static_cast<std::uint64_t>(index));
  TabularPolicy pi(static_cast<std::size_t>(mdp.n_states));
  for (auto& row : pi) {
    row.resize(static_cast<std::size_t>(mdp.n_actions));
    // Bounded away from determinism so every score norm is positive.
    for (double& v : row) v = 0.5 + uniform01(rng);
    renormalize(row);
  }
  return pi;
}

std::string fixture_file_name(int index) {
  std::ostringstream name;
  name << "mdp_" << index << ".txt";
  return name.str();
}

}  // namespace dpo
