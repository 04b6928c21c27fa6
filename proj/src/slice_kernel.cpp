#include "dysarar/slice_kernel.hpp"

#include "dysarar/errors.hpp"

#include <cmath>
#include <sstream>

namespace dysarar {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

[[noreturn]] void inadmissible(const char* name, double value) {
    std::ostringstream os;
    os.precision(17);
    os << name << " = " << value << " is outside the admissible interval";
    fail(ErrorKind::UnstableParameter, os.str());
}

}  // namespace

SliceKernel::SliceKernel(const WeightMatrix& w1, const WeightMatrix& w2, KernelKind kind)
    : w1_(&w1), w2_(&w2), kind_(kind) {
    if (w1.size() != w2.size()) fail(ErrorKind::DimensionMismatch, "W1 and W2 differ in size");
    if (kind_ == KernelKind::spectral && !(w1.spectral_kernel_ok() && w2.spectral_kernel_ok()))
        kind_ = KernelKind::dense;
    if (kind_ == KernelKind::spectral) {
        real1_ = w1.eigenvalues().imag().cwiseAbs().maxCoeff() == 0.0;
        real2_ = w2.eigenvalues().imag().cwiseAbs().maxCoeff() == 0.0;
        ev1_ = w1.eigenvalues().real();
        ev2_ = w2.eigenvalues().real();
    }
    const Eigen::Index n = w1.size();
    r0_.resize(n);
    w2r0_.resize(n);
    r_.resize(n);
    e_.resize(n);
    nu_.resize(n);
    tmp_.resize(n);
}

double SliceKernel::evaluate(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& w1y,
                             const Eigen::Ref<const Vector>& w2w1y, const Matrix& x, const NaturalParams& theta,
                             Vector* score) {
    if (kind_ == KernelKind::spectral) return evaluate_spectral(y, w1y, w2w1y, x, theta, score);
    return evaluate_dense(y, x, theta, score);
}

double SliceKernel::evaluate_dense(const Eigen::Ref<const Vector>& y, const Matrix& x, const NaturalParams& theta,
                                   Vector* score) {
    const Eigen::Index n = y.size();
    const Eigen::Index k = x.cols();
    const SpatialOperators ops = build_operators(theta.rho, theta.lambda, *w1_, *w2_);

    r0_.noalias() = ops.a * y;
    if (k > 0) r0_.noalias() -= x * theta.beta;
    r_.noalias() = ops.b * r0_;
    nu_ = r_.cwiseQuotient(theta.sigma);

    const double llk = -static_cast<double>(n) * kHalfLog2Pi - theta.sigma.array().log().sum() + ops.log_det_a +
                       ops.log_det_b - 0.5 * nu_.squaredNorm();

    if (score != nullptr) {
        score->resize(n + k + 2);
        const Layout layout{n, k};
        e_ = nu_.cwiseQuotient(theta.sigma);
        const Matrix& w1 = w1_->weights();
        const Matrix& w2 = w2_->weights();
        tmp_.noalias() = w1 * y;
        const double trace_a = ops.lu_a.solve(w1).trace();
        const double trace_b = ops.lu_b.solve(w2).trace();
        (*score)(Layout::rho()) = e_.dot(ops.b * tmp_) - trace_a;
        (*score)(Layout::lambda()) = e_.dot(w2 * r0_) - trace_b;
        if (k > 0) score->segment(Layout::beta(0), k).noalias() = x.transpose() * (ops.b.transpose() * e_);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double s2 = theta.sigma(j) * theta.sigma(j);
            (*score)(layout.sigma(j)) = -0.5 / s2 + 0.5 * r_(j) * r_(j) / (s2 * s2);
        }
    }
    return llk;
}

double SliceKernel::evaluate_spectral(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Vector>& w1y,
                                      const Eigen::Ref<const Vector>& w2w1y, const Matrix& x,
                                      const NaturalParams& theta, Vector* score) {
    const Eigen::Index n = y.size();
    const Eigen::Index k = x.cols();
    const double rho = theta.rho;
    const double lambda = theta.lambda;
    if (!w1_->admits(rho)) inadmissible("rho", rho);
    if (!w2_->admits(lambda)) inadmissible("lambda", lambda);

    double log_det_a = 0.0, trace_a = 0.0, log_det_b = 0.0, trace_b = 0.0;
    if (real1_) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = 1.0 - rho * ev1_(i);
            log_det_a += std::log(d);
            trace_a += ev1_(i) / d;
        }
    } else {
        log_det_a = w1_->spectral_log_det(rho);
        trace_a = w1_->spectral_trace(rho);
    }
    if (real2_) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = 1.0 - lambda * ev2_(i);
            log_det_b += std::log(d);
            trace_b += ev2_(i) / d;
        }
    } else {
        log_det_b = w2_->spectral_log_det(lambda);
        trace_b = w2_->spectral_trace(lambda);
    }

    r0_ = y - rho * w1y;
    if (k > 0) r0_.noalias() -= x * theta.beta;
    w2r0_.noalias() = w2_->weights() * r0_;
    r_ = r0_ - lambda * w2r0_;
    nu_ = r_.cwiseQuotient(theta.sigma);

    const double llk = -static_cast<double>(n) * kHalfLog2Pi - theta.sigma.array().log().sum() + log_det_a +
                       log_det_b - 0.5 * nu_.squaredNorm();

    if (score != nullptr) {
        score->resize(n + k + 2);
        const Layout layout{n, k};
        e_ = nu_.cwiseQuotient(theta.sigma);
        (*score)(Layout::rho()) = e_.dot(w1y) - lambda * e_.dot(w2w1y) - trace_a;
        (*score)(Layout::lambda()) = e_.dot(w2r0_) - trace_b;
        if (k > 0) {
            tmp_.noalias() = w2_->weights().transpose() * e_;
            tmp_ = e_ - lambda * tmp_;
            score->segment(Layout::beta(0), k).noalias() = x.transpose() * tmp_;
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            const double s2 = theta.sigma(j) * theta.sigma(j);
            (*score)(layout.sigma(j)) = -0.5 / s2 + 0.5 * r_(j) * r_(j) / (s2 * s2);
        }
    }
    return llk;
}

}  // namespace dysarar
