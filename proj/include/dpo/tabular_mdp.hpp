#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dpo/rng.hpp"

namespace dpo {

/// Finite discounted MDP. P[s][a][s'] transition probabilities, r[s][a]
/// expected rewards (deterministic in s, a), rho0[s] initial distribution.
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.0;
  std::vector<std::vector<std::vector<double>>> P;
  std::vector<std::vector<double>> r;
  std::vector<double> rho0;

  void validate() const;
  bool operator==(const TabularMDP&) const = default;
};

/// Row-stochastic matrix pi[s][a].
using TabularPolicy = std::vector<std::vector<double>>;

void validate_policy(const TabularMDP& mdp, const TabularPolicy& policy);

struct MdpStep {
  int s = 0;
  int a = 0;
  double r = 0.0;
};

std::vector<MdpStep> mdp_sample_episode(const TabularMDP& mdp,
                                        const TabularPolicy& policy,
                                        int horizon, Rng& rng);

/// Draw an index from a probability vector.
int sample_categorical(const std::vector<double>& probs, Rng& rng);

/// Text format: `tabular S A gamma`, then S*A rows of P[s][a][.], then S rows
/// of r[s][.], then one row rho0.
void write_mdp(std::ostream& out, const TabularMDP& mdp);
TabularMDP read_mdp(std::istream& in);
void save_mdp(const std::string& path, const TabularMDP& mdp);
TabularMDP load_mdp(const std::string& path);

/// Random MDP with Dirichlet(1) transitions, N(0,1) rewards and uniform rho0.
TabularMDP random_mdp(int n_states, int n_actions, double gamma, Rng& rng);

/// Verification fixtures: index 0 is a 3-state MDP, 1 and 2 are 4-state.
inline constexpr int kFixtureCount = 3;
TabularMDP fixture_mdp(int index);
/// Fixed stochastic policy paired with fixture_mdp(index).
TabularPolicy fixture_policy(int index);
/// File name of a fixture inside the fixtures directory.
std::string fixture_file_name(int index);

}  // namespace dpo
