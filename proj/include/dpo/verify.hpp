#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dpo/funcapprox.hpp"
#include "dpo/oracle.hpp"

namespace dpo {

/// estimators, baseline, critic, policy, theorems, all.
const std::vector<std::string>& suite_names();

/// Runs one suite. Throws std::invalid_argument for unknown names.
std::vector<CheckResult> run_suite(const std::string& name, std::uint64_t seed = 1);

/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12) where the
/// numeric gradient comes from central differences of `loss`. `loss_and_grad`
/// must add its gradient into params.grads and return the loss.
double gradient_relative_error(ParamVector& params,
                               const std::function<double()>& loss_and_grad,
                               double step = 1e-6);

}  // namespace dpo
