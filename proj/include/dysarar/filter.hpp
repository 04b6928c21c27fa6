#pragma once

#include "dysarar/params.hpp"
#include "dysarar/score_engine.hpp"
#include "dysarar/slice_kernel.hpp"
#include "dysarar/spatial_algebra.hpp"
#include "dysarar/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dysarar {

// How a parameter block moves over time. `off` pins the natural value to 0,
// `constant` keeps it at its unconditional mean (f = r = 0).
enum class Dynamics { off, constant, dynamic };
enum class SigmaTime { constant, dynamic };        // THo / THe
enum class SigmaCross { homo, hetero };            // CHo / CHe
enum class SigmaDynamic { shared, individual };    // DHo / DHe

std::string_view to_string(Dynamics d) noexcept;

struct ModelSpec {
    Eigen::Index n_units = 0;
    Eigen::Index n_regressors = 0;
    Dynamics rho_mode = Dynamics::dynamic;
    Dynamics lambda_mode = Dynamics::dynamic;
    Dynamics beta_mode = Dynamics::dynamic;
    SigmaTime sigma_time = SigmaTime::dynamic;
    SigmaCross sigma_cross = SigmaCross::hetero;
    SigmaDynamic sigma_dynamic = SigmaDynamic::individual;
    MappingBounds bounds = MappingBounds::row_standardized();
    ScoreConfig score{};

    [[nodiscard]] Layout layout() const noexcept { return {n_units, n_regressors}; }

    // "DySARAR-DHo.CHe", "StSAR-CHo", ...; non-canonical mode mixes get a
    // bracketed suffix such as "[rho=static]".
    [[nodiscard]] std::string label() const;

    // Inverse of label() for the canonical names (SEM accepted for SAE).
    [[nodiscard]] static ModelSpec from_label(const std::string& label, Eigen::Index n_units,
                                              Eigen::Index n_regressors);

    void validate() const;
};

// Static coefficients xi = (kappa, diag F, diag R), each of length N+K+2.
struct CoefficientVector {
    Vector kappa;
    Vector f;
    Vector r;

    [[nodiscard]] static CoefficientVector zeros(const Layout& layout);
    [[nodiscard]] Eigen::Index size() const noexcept { return kappa.size(); }
};

// Free/fixed structure implied by a ModelSpec. Each entry holds the index of
// the free parameter it reads, or -1 when fixed at zero. Shared groups (CHo
// kappa, DHo f and r) point at the same index.
struct ParameterMask {
    std::vector<int> kappa;
    std::vector<int> f;
    std::vector<int> r;
    std::vector<std::string> names;  // one per free parameter
    int n_free = 0;

    // Coordinates of the tilde vector that are not pinned by an `off` mode.
    Eigen::Array<bool, Eigen::Dynamic, 1> active;
};

[[nodiscard]] ParameterMask parameter_mask(const ModelSpec& spec);

// Coefficient names for every entry (kappa_rho, f_sigma3, r_beta1, ...).
[[nodiscard]] std::vector<std::string> coefficient_names(const Layout& layout);

// theta~_{t+1} = (I - R) kappa + F s~_t + R theta~_t with diagonal F and R.
[[nodiscard]] TildeParams update_step(const TildeParams& tilde, const Vector& scaled_score,
                                      const CoefficientVector& coeffs);

// Precomputed spatial lags W1 y_t and W2 W1 y_t for one panel. Building it once
// lets repeated likelihood evaluations skip the N x N products on y.
class FilterData {
  public:
    FilterData(PanelMatrix y, RegressorPanel x, const WeightMatrix& w1, const WeightMatrix& w2);

    [[nodiscard]] const PanelMatrix& y() const noexcept { return y_; }
    [[nodiscard]] const RegressorPanel& x() const noexcept { return x_; }
    [[nodiscard]] const PanelMatrix& w1y() const noexcept { return w1y_; }
    [[nodiscard]] const PanelMatrix& w2w1y() const noexcept { return w2w1y_; }
    [[nodiscard]] const WeightMatrix& w1() const noexcept { return *w1_; }
    [[nodiscard]] const WeightMatrix& w2() const noexcept { return *w2_; }
    [[nodiscard]] Eigen::Index periods() const noexcept { return y_.rows(); }
    [[nodiscard]] Eigen::Index units() const noexcept { return y_.cols(); }
    [[nodiscard]] Eigen::Index regressors() const noexcept { return x_.empty() ? 0 : x_.front().cols(); }

    // Rows [begin, begin + length) as an independent panel.
    [[nodiscard]] FilterData window(Eigen::Index begin, Eigen::Index length) const;

  private:
    PanelMatrix y_;
    RegressorPanel x_;
    PanelMatrix w1y_;
    PanelMatrix w2w1y_;
    const WeightMatrix* w1_;
    const WeightMatrix* w2_;
};

struct FilterOptions {
    KernelKind kernel = KernelKind::spectral;
};

struct FilterOutput {
    PanelMatrix tilde_path;                   // T x (N+K+2)
    std::vector<NaturalParams> natural_path;  // T records
    PanelMatrix scores;                       // T x (N+K+2), scaled tilde scores
    Vector llk_contributions;                 // T
    double total_llk = 0.0;
    PanelMatrix residual_path;                // T x N, nu_t
    Vector next_tilde;                        // theta~_{T+1}
    Layout layout;

    // Set when a non-finite likelihood or score stopped the pass; total_llk is
    // then -inf and rows from breakdown_t on are NaN.
    bool breakdown = false;
    Eigen::Index breakdown_t = -1;
    std::string breakdown_reason;
};

// Maps theta~ through h and pins `off` blocks to zero.
[[nodiscard]] NaturalParams spec_natural(const Eigen::Ref<const Vector>& tilde, const ModelSpec& spec);

[[nodiscard]] FilterOutput filter_pass(const FilterData& data, const CoefficientVector& coeffs,
                                       const ModelSpec& spec, const FilterOptions& options = {});

[[nodiscard]] FilterOutput filter_pass(const PanelMatrix& y, const RegressorPanel& x, const CoefficientVector& coeffs,
                                       const ModelSpec& spec, const WeightMatrix& w1, const WeightMatrix& w2,
                                       const FilterOptions& options = {});

// Total log-likelihood only (no path storage); -inf on numerical breakdown.
[[nodiscard]] double filter_log_likelihood(const FilterData& data, const CoefficientVector& coeffs,
                                           const ModelSpec& spec, const FilterOptions& options = {});

struct Forecast {
    NaturalParams theta;
    Vector mu;
    CovarianceDecomposition omega;
};

// One-step-ahead mean and covariance from theta~_{T+1}.
[[nodiscard]] Forecast forecast_one_step(const FilterOutput& output, const ModelSpec& spec, const Matrix& x_next,
                                         const WeightMatrix& w1, const WeightMatrix& w2);

// y_t = A_t^-1 (X_t beta_t + B_t^-1 eps_t), eps_t ~ N(0, diag sigma_t^2).
[[nodiscard]] PanelMatrix simulate_path(const std::vector<NaturalParams>& theta_path, const RegressorPanel& x,
                                        const WeightMatrix& w1, const WeightMatrix& w2, std::uint64_t seed);

struct SimulatedPanel {
    PanelMatrix y;
    std::vector<NaturalParams> theta_path;
};

// Draws from the score-driven model itself: each y_t comes from the density at
// theta_t, whose score then drives theta_{t+1}.
[[nodiscard]] SimulatedPanel simulate_model(const CoefficientVector& coeffs, const ModelSpec& spec,
                                            const RegressorPanel& x, const WeightMatrix& w1, const WeightMatrix& w2,
                                            std::uint64_t seed);

// T slices of shape N x 0, for models without regressors.
[[nodiscard]] RegressorPanel empty_regressors(Eigen::Index periods, Eigen::Index units);

}  // namespace dysarar
