#pragma once

#include "dysarar/filter.hpp"
#include "dysarar/optimizer.hpp"
#include "dysarar/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dysarar {

// Free coefficients in optimizer coordinates: kappa and f as they are,
// r through r = tanh(z / 2) so the recursion stays stationary. Shared groups
// appear once. Throws MaskMismatch when coeffs break the spec's restrictions.
[[nodiscard]] Vector pack_free(const CoefficientVector& coeffs, const ModelSpec& spec);
[[nodiscard]] CoefficientVector unpack_free(const Vector& free, const ModelSpec& spec);

// Free coefficients on their natural scale (r itself, not z), in mask order.
[[nodiscard]] Vector free_values(const CoefficientVector& coeffs, const ModelSpec& spec);

// True when every restriction of `inner` also holds in `outer`, i.e. inner is
// a submodel reachable by fixing outer's coefficients.
[[nodiscard]] bool nests(const ModelSpec& inner, const ModelSpec& outer);

// Coefficients of `outer` that reproduce inner's likelihood exactly.
[[nodiscard]] CoefficientVector embed(const CoefficientVector& coeffs, const ModelSpec& inner, const ModelSpec& outer);

struct FitOptions {
    // (f, r) pairs for the default starting points of dynamic entries.
    std::vector<std::pair<double, double>> start_recursion{{0.01, 0.98}, {0.05, 0.9}, {0.05, 0.98}};
    double start_spatial = 0.2;                     // rho and lambda at the start
    std::vector<CoefficientVector> extra_starts;    // appended to the defaults
    NelderMeadOptions simplex{};
    QuasiNewtonOptions quasi_newton{};
    int bfgs_restarts = 2;                          // fresh-Hessian restarts after the first BFGS run
    FilterOptions filter{};
    bool compute_std_errors = true;
    Execution execution = Execution::serial;        // multi-start exploration
};

struct FitResult {
    std::string label;
    ModelSpec spec;
    CoefficientVector coeffs;
    double total_llk = 0.0;
    int n_free_params = 0;
    std::vector<std::string> names;   // free coefficient names
    Vector estimates;                 // free coefficients, natural scale
    std::optional<Vector> std_errors; // unavailable when the Hessian is not PD
    std::string std_error_note;
    double aic = 0.0;
    double bic = 0.0;
    OptimizerStatus convergence;
    Eigen::Index t_obs = 0;
    int start_index = -1;             // which starting point won
};

// Maximizes the filtered log-likelihood over the free coefficients. Throws
// NoFiniteStart when every start is infeasible; non-convergence is reported in
// `convergence` and the best point is still returned.
[[nodiscard]] FitResult fit_mle(const FilterData& data, const ModelSpec& spec, const FitOptions& options = {});
[[nodiscard]] FitResult fit_mle(const PanelMatrix& y, const RegressorPanel& x, const ModelSpec& spec,
                                const WeightMatrix& w1, const WeightMatrix& w2, const FitOptions& options = {});

struct StandardErrors {
    std::optional<Vector> values;  // natural scale, mask order
    std::string note;
    Matrix hessian;                // of the total llk in optimizer coordinates
};

// Inverse of the negated central-difference Hessian; r entries by the delta
// method. Never fabricates numbers: a non-PD Hessian yields no values.
[[nodiscard]] StandardErrors standard_errors(const FitResult& fit, const FilterData& data,
                                             const FilterOptions& filter = {});

struct InformationCriteria {
    double aic = 0.0;
    double bic = 0.0;
};

[[nodiscard]] InformationCriteria information_criteria(double llk, int np, Eigen::Index t_obs);

struct LrTest {
    double statistic = 0.0;
    double p_value = 1.0;
};

// LR = 2 (llk_u - llk_r) against chi^2(df). Throws NegativeStatistic when the
// restricted fit beats the unrestricted one by more than 1e-6.
[[nodiscard]] LrTest lr_test(double llk_unrestricted, double llk_restricted, int df);

struct GridRow {
    std::string label;
    bool ok = false;
    std::string error;
    double aic = 0.0;
    double bic = 0.0;
    int np = 0;
    double llk = 0.0;
    std::optional<FitResult> fit;
};

// The 20 specifications: static {OLS, SAR, SAE, SARAR} x {CHo, CHe} and
// dynamic {OLS, SAR, SAE, SARAR} x {DHo.CHo, DHe.CHe, DHo.CHe}.
[[nodiscard]] std::vector<ModelSpec> standard_grid(Eigen::Index n_units, Eigen::Index n_regressors);

// Fits every spec, nested ones first so each larger model is warm-started
// from its submodels' optima (which makes the llk ordering hold by
// construction). Rows are sorted by BIC; failed rows keep their error and go
// last.
[[nodiscard]] std::vector<GridRow> model_grid(const FilterData& data, const std::vector<ModelSpec>& specs,
                                              const FitOptions& options = {},
                                              Execution execution = Execution::parallel);

}  // namespace dysarar
