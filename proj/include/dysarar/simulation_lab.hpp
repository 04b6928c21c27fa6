#pragma once

#include "dysarar/estimation.hpp"
#include "dysarar/filter.hpp"
#include "dysarar/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dysarar {

// Latent tilde parameters following a Gaussian AR(1) around mu, observed
// through the SARAR density (the "stochastic SARAR" benchmark).
struct SSararConfig {
    Eigen::Index n_units = 4;
    Eigen::Index n_regressors = 2;
    Vector mu;            // N+K+2 tilde means
    double phi = 0.99;    // Phi = phi I
    double u = 0.01;      // U = u I
    Matrix v;             // N x N covariance of the regressor draws eta
    Eigen::Index t_len = 2000;
    int n_replications = 50;
    double w_density = 1.0;

    // N = 4, K = 2 and the published constants.
    [[nodiscard]] static SSararConfig paper_defaults();
    void validate() const;
};

// theta~_t = (I - Phi) mu + Phi theta~_{t-1} + zeta_t, theta~_0 = mu. T x (N+K+2).
[[nodiscard]] PanelMatrix simulate_ssarar_params(const SSararConfig& cfg, std::uint64_t seed);

// X_t = [1, eta_{t-1}, ...]: first column ones, the rest independent draws
// from N(0, V) (one N-vector per extra column). Throws NonPDCovariance.
[[nodiscard]] RegressorPanel gen_regressors(const SSararConfig& cfg, std::uint64_t seed);

// Symmetric nonnegative matrix, edge kept with probability `density`, weight
// U(0, 1]; redrawn while a row is empty (RetryExhausted after 1000 tries),
// then row-normalized. Symmetry before normalization keeps the spectrum real.
[[nodiscard]] WeightMatrix random_weight_matrix(Eigen::Index n, double density, std::uint64_t seed);

struct HarnessOptions {
    FitOptions fit{};
    Execution execution = Execution::parallel;
    double max_failure_rate = 0.05;   // HarnessFailureRate above this
};

// Fan chart of one parameter: columns q10, q50, q90, truth; one row per t.
struct FanChart {
    std::string parameter;
    PanelMatrix bands;
    double coverage = 0.0;  // share of t with q10 <= truth <= q90
};

struct FilteringRow {
    double phi = 0.0;
    std::vector<std::string> parameters;  // rho, lambda, beta1.., sigma1..
    Vector mse;                           // median path vs truth, natural scale
    Vector relative_mse;                  // divided by the reference-phi row
    std::vector<FanChart> fans;
    int failures = 0;
    int replications = 0;
};

struct FilteringReport {
    double reference_phi = 0.99;
    std::vector<FilteringRow> rows;
};

// For each phi: one latent path, B panels sharing X and W; each panel is fit
// as DySARAR-DHe.CHe and filtered. Relative MSE is NaN when the reference phi
// is not in the list.
[[nodiscard]] FilteringReport filtering_experiment(const SSararConfig& cfg, const std::vector<double>& phis,
                                                   std::uint64_t seed, const HarnessOptions& options = {},
                                                   double reference_phi = 0.99);

struct FiniteSampleConfig {
    CoefficientVector truth;
    Eigen::Index n_units = 6;
    std::vector<Eigen::Index> t_lens{1000};
    int n_replications = 100;
    std::uint64_t seed = 2024;

    // Published truth for N = 6, X = 0.
    [[nodiscard]] static FiniteSampleConfig table2();
    [[nodiscard]] ModelSpec spec() const;
    void validate() const;
};

struct CoefficientSummary {
    std::string name;
    double truth = 0.0;
    double mean = 0.0;
    double sd = 0.0;   // NaN when fewer than two estimates
    double mse = 0.0;
};

struct FiniteSampleTable {
    Eigen::Index t_len = 0;
    std::vector<CoefficientSummary> rows;
    Matrix estimates;   // successful replications x free coefficients
    int failures = 0;
    int replications = 0;
};

// Simulates M panels per T from the truth (X = 0), fits each, and summarizes.
// Needs W1 != W2 for identification.
[[nodiscard]] std::vector<FiniteSampleTable> finite_sample_experiment(const FiniteSampleConfig& cfg,
                                                                      const WeightMatrix& w1, const WeightMatrix& w2,
                                                                      const HarnessOptions& options = {});

}  // namespace dysarar
