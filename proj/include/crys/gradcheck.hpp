#pragma once

#include <functional>
#include <map>
#include <string>

#include "crys/optim.hpp"
#include "crys/rng.hpp"

namespace crys {

/// Result of one finite-difference sweep. worst_by_param holds the largest
/// relative error seen per parameter name; every parameter appears once.
struct GradCheckReport {
    int samples = 0;
    double worst_rel_error = 0.0;
    std::string worst_param;
    std::map<std::string, double> worst_by_param;
    bool pass = false;
    bool finite = true;
};

/// Central-difference check of analytic gradients.
///
/// loss_fn(with_grad) evaluates the loss over the current store contents; when
/// with_grad is true it must also accumulate gradients into the store (grads
/// are zeroed here beforehand). It must be deterministic in the parameter
/// values. For each parameter, up to samples_per_param elements are drawn
/// (all of them when the parameter is smaller); each is perturbed by +/-
/// epsilon and the relative error |a - n| / max(|a|, |n|, 1e-12) is recorded.
/// pass = all samples within tolerance; finite = no NaN/Inf loss encountered.
GradCheckReport grad_check(ParamStore& store,
                           const std::function<double(bool with_grad)>& loss_fn,
                           double epsilon, double tolerance, int samples_per_param,
                           Rng& rng);

}  // namespace crys
