#pragma once

#include "dysarar/params.hpp"
#include "dysarar/types.hpp"

#include <complex>

namespace dysarar {

// Row-standardized spatial weight matrix: zero diagonal, entries in [0, 1],
// rows summing to one. Immutable once built; the spectrum is computed at
// construction so concurrent readers never race on a cache.
class WeightMatrix {
  public:
    static constexpr double kRowSumTolerance = 1e-12;

    // Validates the invariants and throws NonzeroDiagonal, NegativeEntry or
    // NotRowStochastic.
    explicit WeightMatrix(Matrix weights);

    [[nodiscard]] const Matrix& weights() const noexcept { return w_; }
    [[nodiscard]] Eigen::Index size() const noexcept { return w_.rows(); }
    [[nodiscard]] double spectral_radius() const noexcept { return radius_; }
    [[nodiscard]] const Eigen::VectorXcd& eigenvalues() const noexcept { return eigenvalues_; }

    // True when the spectral log-determinant agrees with LU on probe points,
    // i.e. the eigenvalues are accurate enough for the fast filter kernel.
    [[nodiscard]] bool spectral_kernel_ok() const noexcept { return spectral_ok_; }

    // I - a W is guaranteed nonsingular: |a| * tau < 1, or, when the spectrum
    // is real, a inside (1/omega_min, 1/omega_max).
    [[nodiscard]] bool admits(double a) const noexcept;

    // log|I - a W| and tr[(I - a W)^{-1} W] from the eigenvalues.
    [[nodiscard]] double spectral_log_det(double a) const noexcept;
    [[nodiscard]] double spectral_trace(double a) const noexcept;

  private:
    Matrix w_;
    Eigen::VectorXcd eigenvalues_;
    double radius_ = 0.0;
    bool spectral_ok_ = false;
    bool real_spectrum_ = false;
    double omega_min_ = 0.0;
    double omega_max_ = 0.0;
};

// Divides every row by its sum. Throws NonzeroDiagonal, NegativeEntry, ZeroRow.
[[nodiscard]] WeightMatrix row_normalize(const Matrix& raw);

// max |eigenvalue| of an arbitrary square matrix.
[[nodiscard]] double spectral_radius(const Matrix& m);
[[nodiscard]] inline double spectral_radius(const WeightMatrix& w) noexcept { return w.spectral_radius(); }

// A = I - rho W1 and B = I - lambda W2 with LU factors and log-determinants.
struct SpatialOperators {
    Matrix a;
    Matrix b;
    Eigen::PartialPivLU<Matrix> lu_a;
    Eigen::PartialPivLU<Matrix> lu_b;
    double log_det_a = 0.0;
    double log_det_b = 0.0;
};

// Throws UnstableParameter when rho (lambda) is not admitted by W1 (W2),
// SingularOperator when a pivot vanishes numerically.
[[nodiscard]] SpatialOperators build_operators(double rho, double lambda, const WeightMatrix& w1,
                                               const WeightMatrix& w2);

// Omega = A^-1 B^-1 Sigma B^-T A^-T, Omega* = B^-1 Sigma B^-T, Sigma = diag(sigma_cross).
struct CovarianceDecomposition {
    Matrix omega_total;
    Matrix omega_error;
    Vector sigma_cross;
};

struct ConditionalMoments {
    Vector mean;
    CovarianceDecomposition covariance;
};

// Mean A^-1 X beta and the covariance decomposition, by linear solves only.
[[nodiscard]] ConditionalMoments conditional_moments(const NaturalParams& theta, const Matrix& x,
                                                     const WeightMatrix& w1, const WeightMatrix& w2);

// Partial sum I + rho W + ... + rho^order W^order.
[[nodiscard]] Matrix neumann_expansion(double rho, const WeightMatrix& w, int order);

}  // namespace dysarar
