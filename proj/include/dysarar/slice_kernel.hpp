#pragma once

#include "dysarar/params.hpp"
#include "dysarar/spatial_algebra.hpp"
#include "dysarar/types.hpp"

namespace dysarar {

enum class KernelKind {
    // LU factorizations of A and B per period. Reference path.
    dense,
    // Log-determinants and traces from the eigenvalues of W1, W2, spatial lags
    // of y supplied by the caller. Falls back to dense when either weight
    // matrix failed its spectral probe.
    spectral,
};

// Per-period log-likelihood, natural score and standardized residual
// nu = Sigma^{-1/2} B (A y - X beta). Holds scratch buffers, so one instance
// per thread.
class SliceKernel {
  public:
    SliceKernel(const WeightMatrix& w1, const WeightMatrix& w2, KernelKind kind = KernelKind::spectral);

    [[nodiscard]] KernelKind kind() const noexcept { return kind_; }

    // w1y = W1 y and w2w1y = W2 W1 y are only read on the spectral path.
    // Returns the log-likelihood; fills score (size N+K+2) when non-null.
    // Throws UnstableParameter / SingularOperator on inadmissible theta.
    double evaluate(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& w1y,
                    const Eigen::Ref<const Vector>& w2w1y, const Matrix& x, const NaturalParams& theta,
                    Vector* score);

    // Residual of the last evaluate() call.
    [[nodiscard]] const Vector& nu() const noexcept { return nu_; }

  private:
    double evaluate_dense(const Eigen::Ref<const Vector>& y, const Matrix& x, const NaturalParams& theta,
                          Vector* score);
    double evaluate_spectral(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& w1y,
                             const Eigen::Ref<const Vector>& w2w1y, const Matrix& x, const NaturalParams& theta,
                             Vector* score);

    const WeightMatrix* w1_;
    const WeightMatrix* w2_;
    KernelKind kind_;
    bool real1_ = false;
    bool real2_ = false;
    Vector ev1_;
    Vector ev2_;
    Vector r0_, w2r0_, r_, e_, nu_, tmp_;
};

}  // namespace dysarar
