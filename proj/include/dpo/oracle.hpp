#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dpo/environments.hpp"
#include "dpo/rng.hpp"
#include "dpo/tabular_mdp.hpp"

namespace dpo {

using Table = std::vector<std::vector<double>>;  // [s][a]

/// Softmax policy over per-state logits.
struct TabularSoftmaxPolicy {
  Table logits;

  TabularPolicy probabilities() const;
  /// Logits log(pi) reproduce `policy` exactly up to round-off.
  static TabularSoftmaxPolicy from_probabilities(const TabularPolicy& policy);
};

/// Score u(s, a) = d log pi(a|s) / d logits: e_a - pi(.|s) in row s, zero
/// elsewhere. Returns its squared norm 1 - 2 pi_a + sum_b pi_b^2.
double score_sq_norm(const TabularPolicy& policy, int s, int a);

struct ExactValues {
  Table Q;
  std::vector<double> V;
  std::vector<double> visitation;  // unnormalized discounted state weights

  std::vector<double> normalized_visitation() const;
};

ExactValues solve_q(const TabularMDP& mdp, const TabularPolicy& policy);

/// Largest |Q - r - gamma P pi Q| over (s, a).
double bellman_residual(const TabularMDP& mdp, const TabularPolicy& policy,
                        const Table& q);

/// sum_a pi |u|^2 Q / sum_a pi |u|^2 at `state`. Throws std::domain_error
/// when every score vanishes.
double optimal_baseline(const TabularMDP& mdp, const TabularPolicy& policy,
                        const ExactValues& exact, int state);

/// Exact Var[u (Q - b) | s] = E|u|^2 (Q - b)^2 - |E u Q|^2.
double per_state_gradient_variance(const TabularPolicy& policy,
                                   const ExactValues& exact, int state, double b);

/// a* = E[|u|^2 Q b] / E[|u|^2 b^2] over actions at `state` for the
/// estimator u (Q - a b).
double control_variate_coefficient(const TabularPolicy& policy,
                                   const ExactValues& exact, int state, double b);

/// Exact Var[u (Q - a b) | s].
double control_variate_variance(const TabularPolicy& policy,
                                const ExactValues& exact, int state, double b,
                                double a);

/// Which exact quantity fills the bootstrap slots of the estimator.
enum class PsiChoice { kQ, kV };

struct CheckResult {
  std::string name;
  double statistic = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

/// Formats `name statistic threshold PASS|FAIL`.
std::string format_check(const CheckResult& check);

struct Proposition1Report {
  std::vector<CheckResult> checks;  // one per (s, a)
  double max_abs_z = 0.0;
  bool passed = false;
};

/// Monte-Carlo mean of the n-step advantage from every (s, a) with exact Psi
/// plugged in, z-scored against Q(s, a) - b(s). Passes when every |z| < 4.
Proposition1Report verify_proposition1(const TabularMDP& mdp,
                                       const TabularPolicy& policy,
                                       const std::vector<double>& b, int n,
                                       PsiChoice psi, int samples, Rng& rng);

struct Theorem1Report {
  double lhs = 0.0;           // Var[u A_uae] - Var[u A_gae], Monte-Carlo
  double lhs_stderr = 0.0;
  double rhs = 0.0;           // irreducible + reducible, exact
  double irreducible = 0.0;
  double reducible = 0.0;
  double var_uae = 0.0;
  double var_gae = 0.0;
  int horizon = 0;
  double z = 0.0;
  bool passed = false;
};

/// Smallest H with (gamma lambda)^H < 1e-8 (at least 1).
int truncation_horizon(double gamma, double lambda);

/// Compares both sides of the UAE-versus-GAE variance identity with (s_t,
/// a_t) drawn from the normalized discounted visitation. Passes when
/// |lhs - rhs| <= 3 * lhs_stderr.
Theorem1Report verify_theorem1(const TabularMDP& mdp, const TabularPolicy& policy,
                               const std::vector<double>& b, double lambda,
                               PsiChoice psi, int samples, Rng& rng);

/// Exact irreducible and reducible terms only.
void theorem1_rhs(const TabularMDP& mdp, const TabularPolicy& policy,
                  const ExactValues& exact, const std::vector<double>& b,
                  double lambda, PsiChoice psi, int horizon, double* irreducible,
                  double* reducible);

/// Gaussian return model on a table: per (s, a) mean and variance.
struct TabularDistribution {
  Table mean;
  Table var;
};

/// mean' = r + gamma E[mean(s', a')], var' = gamma^2 E[var(s', a')].
TabularDistribution distributional_sweep(const TabularMDP& mdp,
                                         const TabularPolicy& policy,
                                         const TabularDistribution& z);

struct ContractionReport {
  double worst_mean_ratio = 0.0;  // max over pairs of |dT mean| / |d mean|
  double worst_var_ratio = 0.0;
  int pairs = 0;
  bool passed = false;
};

ContractionReport verify_contraction(const TabularMDP& mdp,
                                     const TabularPolicy& policy, int pairs,
                                     Rng& rng);

/// Thrown when a rollout source cannot restart from a given (s, a).
class UnsupportedCapability : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdvantageSpec {
  PsiChoice psi = PsiChoice::kQ;
  std::vector<double> b;  // state baseline
  double lambda = 0.95;
  int horizon = 0;        // 0: truncation_horizon(gamma, lambda)
};

struct VarianceDecomposition {
  double sigma_tau = 0.0;
  double sigma_tau_stderr = 0.0;
  double sigma_sa = 0.0;
  int pairs = 0;
};

/// Two conditionally independent suffixes per (s, a) drawn from the
/// normalized discounted visitation.
VarianceDecomposition variance_decomposition(const TabularMDP& mdp,
                                             const TabularPolicy& policy,
                                             const AdvantageSpec& spec, int pairs,
                                             Rng& rng);

/// Continuous tasks cannot restart from an arbitrary (s, a) through the
/// public interface: always throws UnsupportedCapability.
VarianceDecomposition variance_decomposition(const ContinuousEnv& env, int pairs);

/// Exact E_{s,a}[|u|^2 Var(A | s, a)] by enumerating every future of length
/// spec.horizon. Only for tiny MDPs.
double enumerate_trajectory_variance(const TabularMDP& mdp,
                                     const TabularPolicy& policy,
                                     const AdvantageSpec& spec);

struct StabilityMetrics {
  double vpu = 0.0;
  double tv = 0.0;
};

/// VPU over consecutive parameter differences; TV over the min-max
/// normalized loss series, averaged over the N adjacent differences.
StabilityMetrics stability_metrics(const std::vector<std::vector<double>>& snapshots,
                                   const std::vector<double>& losses);
double variance_of_updates(const std::vector<std::vector<double>>& snapshots);
double average_total_variation(const std::vector<double>& losses);

}  // namespace dpo
