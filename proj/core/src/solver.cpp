#include "ratefit/solver.hpp"

#include <cmath>

namespace ratefit {

NewtonResult newton_maximize(const ConcaveObjective& objective, const Vector& beta0,
                             const SolverConfig& config) {
    Vector beta = beta0;
    ObjectiveEval eval = objective(beta);

    NewtonResult result;
    for (int iter = 0; iter < config.max_iterations; ++iter) {
        const double gnorm = eval.gradient.lpNorm<Eigen::Infinity>();
        if (gnorm <= config.gradient_tol) {
            result.beta = beta;
            result.iterations = iter;
            result.gradient_norm = gnorm;
            result.converged = true;
            return result;
        }

        Eigen::LDLT<Matrix> ldlt(eval.neg_hessian);
        Vector step;
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            step = ldlt.solve(eval.gradient);
        }
        if (step.size() == 0 || !step.allFinite()) {
            // Hessian numerically singular; fall back to a gradient step.
            step = eval.gradient;
        }

        // Step-halving line search on the concave objective.
        double t = 1.0;
        Vector candidate = beta + t * step;
        ObjectiveEval cand_eval = objective(candidate);
        int halvings = 0;
        while (!(cand_eval.value > eval.value - 1e-14 * std::abs(eval.value)) && halvings < 60) {
            t *= 0.5;
            candidate = beta + t * step;
            cand_eval = objective(candidate);
            ++halvings;
        }

        const double step_norm = (t * step).lpNorm<Eigen::Infinity>();
        beta = candidate;
        eval = cand_eval;

        if (step_norm <= config.step_tol &&
            eval.gradient.lpNorm<Eigen::Infinity>() <= config.gradient_tol) {
            result.beta = beta;
            result.iterations = iter + 1;
            result.gradient_norm = eval.gradient.lpNorm<Eigen::Infinity>();
            result.converged = true;
            return result;
        }
    }

    const double gnorm = eval.gradient.lpNorm<Eigen::Infinity>();
    if (gnorm <= config.gradient_tol) {
        result.beta = beta;
        result.iterations = config.max_iterations;
        result.gradient_norm = gnorm;
        result.converged = true;
        return result;
    }
    throw FitError(FitErrorCode::Divergent,
                   "gradient norm " + std::to_string(gnorm) + " after " +
                       std::to_string(config.max_iterations) + " iterations");
}

}  // namespace ratefit
