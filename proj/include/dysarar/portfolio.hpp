#pragma once

#include "dysarar/estimation.hpp"
#include "dysarar/filter.hpp"
#include "dysarar/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dysarar {

// F in-sample observations, S out-of-sample origins, refit every R origins on a
// fixed-length moving window.
struct BacktestConfig {
    Eigen::Index in_sample_len = 2013;
    Eigen::Index out_sample_len = 1500;
    Eigen::Index refit_interval = 100;
    double risk_free = 0.0;

    void validate(Eigen::Index periods) const;
};

struct FeeConfig {
    double upsilon = 3.0;   // relative risk aversion, > 1
    double search_low = -0.5;
    double search_high = 0.5;

    void validate() const;
};

// Table-5 statistics. Percentages are x100, annualized over 252 days.
struct BacktestMetrics {
    double ann_mean = 0.0;
    double ann_sd = 0.0;
    double max_loss = 0.0;
    double max_gain = 0.0;
    std::optional<double> sharpe;  // unavailable when ann_sd is 0
    double var5 = 0.0;
    double es5 = 0.0;
    double turnover = 0.0;
};

struct BacktestReport {
    Matrix weights_path;          // S x N
    Vector portfolio_returns;     // S
    BacktestMetrics metrics;
    std::vector<Eigen::Index> refit_origins;  // 0-based origin indices
    std::vector<std::string> events;          // failures and fallbacks, one line each
    int failed_origins = 0;
};

struct RiskShares {
    PanelMatrix sigma_y;    // sqrt(diag Omega_t)
    PanelMatrix sigma_eps;  // sigma_t
    PanelMatrix sys_share;  // (sigma_y - sigma_eps) / sigma_y
};

// w = Omega^-1 mu / 1' Omega^-1 mu. Throws SingularCovariance, DegenerateNormalizer.
[[nodiscard]] Vector tangency_weights(const Vector& mu_hat, const Matrix& omega_hat);

[[nodiscard]] double sharpe_ratio(double ann_mean, double ann_sd);

[[nodiscard]] BacktestMetrics backtest_metrics(const Vector& returns, const Matrix& weights_path);

// Hook that may replace the model forecast at origin s (0-based) before the
// allocation step.
using ForecastOverride = std::function<void(Eigen::Index origin, Vector& mu, Matrix& omega)>;

// Origin s forecasts period F + s from data up to F + s - 1. Refits happen at
// s = 0, R, 2R, ... on rows [s, s + F). A failed refit keeps the previous
// coefficients, a failed forecast keeps the previous weights (1/N before any).
[[nodiscard]] BacktestReport rolling_backtest(const PanelMatrix& y, const RegressorPanel& x, const ModelSpec& spec,
                                              const WeightMatrix& w1, const WeightMatrix& w2,
                                              const BacktestConfig& cfg, const FitOptions& fit_options = {},
                                              const ForecastOverride& override_forecast = {});

[[nodiscard]] BacktestReport equal_weight_strategy(const PanelMatrix& y);

[[nodiscard]] RiskShares risk_shares(const FilterOutput& output, const WeightMatrix& w1, const WeightMatrix& w2);

struct ManagementFee {
    double per_period = 0.0;
    double annualized_pct = 0.0;  // per_period * 252 * 100
};

// Fee theta solving mean U(1 + r_a) = mean U(1 + r_b - theta), U power utility.
// Throws DomainViolation on nonpositive wealth, NoRootInInterval.
[[nodiscard]] ManagementFee management_fee(const Vector& returns_a, const Vector& returns_b, const FeeConfig& cfg = {});

struct BootstrapResult {
    double p_value = 1.0;
    double fee = 0.0;     // on the original sample, per period
    int used = 0;
    int dropped = 0;
};

// Moving-block bootstrap of the paired streams; two-sided percentile p-value of
// theta = 0. block_len 0 picks round(S^(1/3)).
[[nodiscard]] BootstrapResult block_bootstrap_pvalue(const Vector& returns_a, const Vector& returns_b,
                                                     const FeeConfig& cfg, int block_len, int n_boot,
                                                     std::uint64_t seed, Execution execution = Execution::parallel);

}  // namespace dysarar
