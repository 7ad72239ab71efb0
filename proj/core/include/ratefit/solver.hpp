#pragma once

#include <functional>

#include "ratefit/strata.hpp"

namespace ratefit {

struct SolverConfig {
    double gradient_tol = 1e-10;  // max-norm of gradient at exit
    double step_tol = 1e-12;
    int max_iterations = 100;
};

/// Value, gradient, and negative Hessian of a concave objective at beta.
struct ObjectiveEval {
    double value = 0.0;
    Vector gradient;
    Matrix neg_hessian;
};

using ConcaveObjective = std::function<ObjectiveEval(const Vector&)>;

struct NewtonResult {
    Vector beta;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
};

/// Damped Newton with step-halving line search on a globally concave
/// objective. Starts at beta0; throws Divergent if tolerances are not met
/// within the iteration cap.
NewtonResult newton_maximize(const ConcaveObjective& objective, const Vector& beta0,
                             const SolverConfig& config);

}  // namespace ratefit
