#pragma once

#include "dysarar/types.hpp"

#include <cstddef>

namespace dysarar {

class WeightMatrix;

// Position of each block inside the (N+K+2) parameter vector:
// (rho, lambda, beta_1..beta_K, sigma_1..sigma_N).
struct Layout {
    Eigen::Index n_units = 0;
    Eigen::Index n_regressors = 0;

    [[nodiscard]] constexpr Eigen::Index size() const noexcept { return n_units + n_regressors + 2; }
    [[nodiscard]] static constexpr Eigen::Index rho() noexcept { return 0; }
    [[nodiscard]] static constexpr Eigen::Index lambda() noexcept { return 1; }
    [[nodiscard]] static constexpr Eigen::Index beta(Eigen::Index i) noexcept { return 2 + i; }
    [[nodiscard]] constexpr Eigen::Index sigma(Eigen::Index j) const noexcept { return 2 + n_regressors + j; }
    [[nodiscard]] constexpr Eigen::Index sigma_begin() const noexcept { return 2 + n_regressors; }

    friend constexpr bool operator==(const Layout&, const Layout&) = default;
};

// Time-varying parameters on their natural scale. sigma holds standard
// deviations; the variance is the coordinate the score differentiates.
struct NaturalParams {
    double rho = 0.0;
    double lambda = 0.0;
    Vector beta;
    Vector sigma;

    [[nodiscard]] Layout layout() const noexcept { return {sigma.size(), beta.size()}; }
};

// Unconstrained image of NaturalParams, ordered as Layout.
struct TildeParams {
    Vector values;

    [[nodiscard]] Eigen::Index size() const noexcept { return values.size(); }
};

// Open intervals the logistic map sends rho and lambda into.
struct MappingBounds {
    double rho_low = -1.0 + 1e-6;
    double rho_high = 1.0 - 1e-6;
    double lambda_low = -1.0 + 1e-6;
    double lambda_high = 1.0 - 1e-6;

    // (-1 + delta, 1 - delta): the admissible set for row-standardized weights.
    [[nodiscard]] static MappingBounds row_standardized(double delta = 1e-6);

    // (1/omega_min + delta, 1/omega_max - delta) from the real parts of the
    // eigenvalues. Only meaningful when both spectra are real.
    [[nodiscard]] static MappingBounds from_eigenvalues(const WeightMatrix& w1, const WeightMatrix& w2,
                                                        double delta = 1e-6);

    // Throws InvalidArgument unless low < high for both pairs.
    void validate() const;
};

}  // namespace dysarar
