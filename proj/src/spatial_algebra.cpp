#include "dysarar/spatial_algebra.hpp"

#include "dysarar/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dysarar {

namespace {

void check_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        std::ostringstream os;
        os << what << " must be a nonempty square matrix, got " << m.rows() << "x" << m.cols();
        fail(ErrorKind::DimensionMismatch, os.str());
    }
}

void check_entries(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (m(i, i) != 0.0) {
            std::ostringstream os;
            os << "diagonal entry (" << i << "," << i << ") = " << m(i, i);
            fail(ErrorKind::NonzeroDiagonal, os.str());
        }
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (!std::isfinite(m(i, j)) || m(i, j) < 0.0) {
                std::ostringstream os;
                os << "entry (" << i << "," << j << ") = " << m(i, j);
                fail(ErrorKind::NegativeEntry, os.str());
            }
        }
    }
}

double lu_log_det(const Eigen::PartialPivLU<Matrix>& lu) {
    const auto& packed = lu.matrixLU();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < packed.rows(); ++i) acc += std::log(std::abs(packed(i, i)));
    return acc;
}

bool pivots_singular(const Eigen::PartialPivLU<Matrix>& lu) {
    const auto diag = lu.matrixLU().diagonal().cwiseAbs();
    const double largest = diag.maxCoeff();
    return !(diag.minCoeff() > 1e-13 * std::max(1.0, largest));
}

}  // namespace

WeightMatrix::WeightMatrix(Matrix weights) : w_(std::move(weights)) {
    check_square(w_, "weight matrix");
    check_entries(w_);
    for (Eigen::Index i = 0; i < w_.rows(); ++i) {
        const double s = w_.row(i).sum();
        if (std::abs(s - 1.0) > kRowSumTolerance) {
            std::ostringstream os;
            os.precision(17);
            os << "row " << i << " sums to " << s;
            fail(ErrorKind::NotRowStochastic, os.str());
        }
        if ((w_.row(i).array() > 1.0).any()) {
            std::ostringstream os;
            os << "row " << i << " has an entry above one";
            fail(ErrorKind::NotRowStochastic, os.str());
        }
    }

    Eigen::EigenSolver<Matrix> solver(w_, /*computeEigenvectors=*/false);
    eigenvalues_ = solver.eigenvalues();
    radius_ = eigenvalues_.cwiseAbs().maxCoeff();
    real_spectrum_ = solver.info() == Eigen::Success && eigenvalues_.imag().cwiseAbs().maxCoeff() <= 1e-10;
    omega_min_ = eigenvalues_.real().minCoeff();
    omega_max_ = eigenvalues_.real().maxCoeff();

    // Probe the spectral log-determinant against LU inside the admissible set.
    spectral_ok_ = solver.info() == Eigen::Success && radius_ > 0.0;
    if (spectral_ok_) {
        const Matrix eye = Matrix::Identity(w_.rows(), w_.cols());
        for (double frac : {-0.95, -0.5, 0.5, 0.95}) {
            const double a = frac / radius_;
            Eigen::PartialPivLU<Matrix> lu(eye - a * w_);
            const Matrix solved = lu.solve(w_);
            const double ld = lu_log_det(lu);
            const double tr = solved.trace();
            if (std::abs(ld - spectral_log_det(a)) > 1e-9 * std::max(1.0, std::abs(ld)) ||
                std::abs(tr - spectral_trace(a)) > 1e-9 * std::max(1.0, std::abs(tr))) {
                spectral_ok_ = false;
                break;
            }
        }
    }
}

bool WeightMatrix::admits(double a) const noexcept {
    if (!std::isfinite(a)) return false;
    // Eigenvalues carry rounding error, so the boundary gets a small margin.
    constexpr double margin = 1e-10;
    if (std::abs(a) * radius_ < 1.0 - margin) return true;
    if (!real_spectrum_) return false;
    return 1.0 - a * omega_min_ > margin && 1.0 - a * omega_max_ > margin;
}

double WeightMatrix::spectral_log_det(double a) const noexcept {
    double acc = 0.0;
    for (const auto& w : eigenvalues_) acc += std::log(std::abs(1.0 - a * w));
    return acc;
}

double WeightMatrix::spectral_trace(double a) const noexcept {
    std::complex<double> acc{0.0, 0.0};
    for (const auto& w : eigenvalues_) acc += w / (1.0 - a * w);
    return acc.real();
}

WeightMatrix row_normalize(const Matrix& raw) {
    check_square(raw, "raw weight matrix");
    check_entries(raw);
    Matrix out = raw;
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        const double s = raw.row(i).sum();
        if (!(s > 0.0)) {
            std::ostringstream os;
            os << "unit " << i << " has no neighbours";
            fail(ErrorKind::ZeroRow, os.str());
        }
        out.row(i) /= s;
    }
    return WeightMatrix(std::move(out));
}

double spectral_radius(const Matrix& m) {
    check_square(m, "matrix");
    Eigen::EigenSolver<Matrix> solver(m, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

SpatialOperators build_operators(double rho, double lambda, const WeightMatrix& w1, const WeightMatrix& w2) {
    if (w1.size() != w2.size()) fail(ErrorKind::DimensionMismatch, "W1 and W2 differ in size");
    if (!w1.admits(rho)) {
        std::ostringstream os;
        os.precision(17);
        os << "rho = " << rho << " outside the stable interval of W1 (tau = " << w1.spectral_radius() << ")";
        fail(ErrorKind::UnstableParameter, os.str());
    }
    if (!w2.admits(lambda)) {
        std::ostringstream os;
        os.precision(17);
        os << "lambda = " << lambda << " outside the stable interval of W2 (tau = " << w2.spectral_radius() << ")";
        fail(ErrorKind::UnstableParameter, os.str());
    }
    const Eigen::Index n = w1.size();
    SpatialOperators ops;
    ops.a = Matrix::Identity(n, n) - rho * w1.weights();
    ops.b = Matrix::Identity(n, n) - lambda * w2.weights();
    ops.lu_a.compute(ops.a);
    ops.lu_b.compute(ops.b);
    if (pivots_singular(ops.lu_a)) fail(ErrorKind::SingularOperator, "A = I - rho W1 is numerically singular");
    if (pivots_singular(ops.lu_b)) fail(ErrorKind::SingularOperator, "B = I - lambda W2 is numerically singular");
    ops.log_det_a = lu_log_det(ops.lu_a);
    ops.log_det_b = lu_log_det(ops.lu_b);
    return ops;
}

ConditionalMoments conditional_moments(const NaturalParams& theta, const Matrix& x, const WeightMatrix& w1,
                                       const WeightMatrix& w2) {
    const Eigen::Index n = w1.size();
    if (theta.sigma.size() != n || x.rows() != n || x.cols() != theta.beta.size())
        fail(ErrorKind::DimensionMismatch, "conditional_moments: theta, X and W disagree in shape");

    const SpatialOperators ops = build_operators(theta.rho, theta.lambda, w1, w2);

    ConditionalMoments out;
    const Vector xb = x.cols() > 0 ? Vector(x * theta.beta) : Vector::Zero(n);
    out.mean = ops.lu_a.solve(xb);

    out.covariance.sigma_cross = theta.sigma.array().square();
    // B M = Sigma^{1/2}  =>  Omega* = M M'
    const Matrix root_error = ops.lu_b.solve(Matrix(theta.sigma.asDiagonal()));
    Matrix omega_error = root_error * root_error.transpose();
    out.covariance.omega_error = 0.5 * (omega_error + omega_error.transpose());
    // A L = M  =>  Omega = L L'
    const Matrix root_total = ops.lu_a.solve(root_error);
    Matrix omega_total = root_total * root_total.transpose();
    out.covariance.omega_total = 0.5 * (omega_total + omega_total.transpose());
    return out;
}

Matrix neumann_expansion(double rho, const WeightMatrix& w, int order) {
    if (order < 0) fail(ErrorKind::InvalidArgument, "neumann_expansion: order must be nonnegative");
    const Eigen::Index n = w.size();
    Matrix sum = Matrix::Identity(n, n);
    Matrix term = Matrix::Identity(n, n);
    for (int k = 1; k <= order; ++k) {
        term = rho * (term * w.weights());
        sum += term;
    }
    return sum;
}

MappingBounds MappingBounds::row_standardized(double delta) {
    return {-1.0 + delta, 1.0 - delta, -1.0 + delta, 1.0 - delta};
}

MappingBounds MappingBounds::from_eigenvalues(const WeightMatrix& w1, const WeightMatrix& w2, double delta) {
    auto interval = [delta](const WeightMatrix& w) {
        const auto& ev = w.eigenvalues();
        if (ev.imag().cwiseAbs().maxCoeff() > 1e-10)
            fail(ErrorKind::InvalidArgument, "eigenvalue bounds need a real spectrum");
        const double lo = ev.real().minCoeff();
        const double hi = ev.real().maxCoeff();
        if (!(lo < 0.0 && hi > 0.0)) fail(ErrorKind::InvalidArgument, "spectrum must straddle zero");
        return std::pair{1.0 / lo + delta, 1.0 / hi - delta};
    };
    const auto [rl, rh] = interval(w1);
    const auto [ll, lh] = interval(w2);
    MappingBounds b{rl, rh, ll, lh};
    b.validate();
    return b;
}

void MappingBounds::validate() const {
    if (!(rho_low < rho_high) || !(lambda_low < lambda_high))
        fail(ErrorKind::InvalidArgument, "mapping bounds must satisfy low < high");
}

}  // namespace dysarar
