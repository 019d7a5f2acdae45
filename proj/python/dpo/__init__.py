"""Python bindings for the dpo C++ library."""

from ._core import (
    CheckResult,
    Counters,
    Env,
    ExactValues,
    RunConfig,
    Trainer,
    beta_kl,
    beta_log_density,
    fixture_mdp,
    gae,
    gaussian_kl,
    gaussian_kl_grad,
    lambda_return_q,
    lqr_optimal_return,
    make_env,
    metric_columns,
    n_step_advantage,
    optimal_baseline,
    run_suite,
    solve_q,
    suite_names,
    TabularMDP,
    uae,
)

__all__ = [
    "CheckResult",
    "Counters",
    "Env",
    "ExactValues",
    "RunConfig",
    "Trainer",
    "beta_kl",
    "beta_log_density",
    "fixture_mdp",
    "gae",
    "gaussian_kl",
    "gaussian_kl_grad",
    "lambda_return_q",
    "lqr_optimal_return",
    "make_env",
    "metric_columns",
    "n_step_advantage",
    "optimal_baseline",
    "run_suite",
    "solve_q",
    "suite_names",
    "TabularMDP",
    "uae",
]
