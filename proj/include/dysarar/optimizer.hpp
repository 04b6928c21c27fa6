#pragma once

#include "dysarar/types.hpp"

#include <functional>
#include <string>

namespace dysarar {

// Minimization of a smooth objective that may return +inf on infeasible
// points. Both routines only ever accept improving points, so the returned
// value is never worse than the value at the start.
using Objective = std::function<double(const Vector&)>;

struct OptimizerStatus {
    bool converged = false;
    int iterations = 0;
    int evaluations = 0;
    double gradient_norm = 0.0;  // max |g_i|, NaN when no gradient was taken
    std::string message;
};

struct OptimizerResult {
    Vector x;
    double value = 0.0;
    OptimizerStatus status;
};

struct NelderMeadOptions {
    int max_iterations = 200;
    double rel_tol = 1e-8;
};

// step(i) is the initial simplex edge along coordinate i.
[[nodiscard]] OptimizerResult nelder_mead(const Objective& f, const Vector& x0, const Vector& step,
                                          const NelderMeadOptions& options = {});

struct QuasiNewtonOptions {
    int max_iterations = 2000;
    double rel_tol = 1e-10;   // relative objective change, two iterations in a row; looser stops early on flat r ridges
    double grad_tol = 1e-6;   // max |g_i| max(1, |x_i|) / max(1, |f|)
    double fd_step = 1e-5;    // relative central-difference step
    double max_step = 0.5;    // cap on max |dx_i| per iteration
};

// Central-difference gradient; one-sided where a neighbour is infeasible.
[[nodiscard]] Vector numerical_gradient(const Objective& f, const Vector& x, double fx, double rel_step,
                                        int* evaluations = nullptr);

// BFGS with backtracking line search and numerical gradients.
[[nodiscard]] OptimizerResult bfgs(const Objective& f, const Vector& x0, const QuasiNewtonOptions& options = {});

// Central-difference Hessian of f at x.
[[nodiscard]] Matrix numerical_hessian(const Objective& f, const Vector& x, double rel_step = 1e-4);

}  // namespace dysarar
