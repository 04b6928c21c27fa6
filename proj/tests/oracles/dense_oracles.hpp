#pragma once

// Brute-force reference computations. Deliberately naive: explicit inverses,
// full determinants, sorting. Never used by the library itself.

#include "dysarar/params.hpp"
#include "dysarar/spatial_algebra.hpp"
#include "dysarar/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using dysarar::Matrix;
using dysarar::Vector;

inline constexpr double kPi = 3.14159265358979323846;

// log N(y; mean, cov) via explicit inverse and determinant.
inline double gaussian_logpdf(const Vector& y, const Vector& mean, const Matrix& cov) {
    const Vector d = y - mean;
    const Matrix inv = cov.inverse();
    const double n = static_cast<double>(y.size());
    return -0.5 * n * std::log(2.0 * kPi) - 0.5 * std::log(cov.determinant()) - 0.5 * d.dot(inv * d);
}

struct DenseMoments {
    Vector mean;
    Matrix omega;
    Matrix omega_error;
};

inline DenseMoments dense_moments(const dysarar::NaturalParams& theta, const Matrix& x, const Matrix& w1,
                                  const Matrix& w2) {
    const auto n = w1.rows();
    const Matrix ai = (Matrix::Identity(n, n) - theta.rho * w1).inverse();
    const Matrix bi = (Matrix::Identity(n, n) - theta.lambda * w2).inverse();
    const Matrix sigma = theta.sigma.array().square().matrix().asDiagonal();
    DenseMoments m;
    m.mean = x.cols() > 0 ? Vector(ai * x * theta.beta) : Vector::Zero(n);
    m.omega_error = bi * sigma * bi.transpose();
    m.omega = ai * m.omega_error * ai.transpose();
    return m;
}

// Central difference of a scalar function along coordinate i.
inline double central_difference(const std::function<double(const Vector&)>& f, const Vector& at, Eigen::Index i,
                                 double h) {
    Vector p = at, m = at;
    p(i) += h;
    m(i) -= h;
    return (f(p) - f(m)) / (2.0 * h);
}

// Symmetric nonnegative matrix with zero diagonal, every row nonzero.
inline Matrix random_symmetric_raw(Eigen::Index n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = m(j, i) = u(rng);
    return m;
}

// Asymmetric row-stochastic matrix (spectrum may be complex).
inline Matrix random_asymmetric_raw(Eigen::Index n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) m(i, j) = u(rng);
    return m;
}

// Empirical VaR/ES by sorting.
inline std::pair<double, double> sorted_var_es(std::vector<double> r, double level) {
    std::sort(r.begin(), r.end());
    const auto k = static_cast<std::size_t>(std::ceil(level * static_cast<double>(r.size())));
    const double var = r[std::max<std::size_t>(k, 1) - 1];
    double sum = 0.0;
    int count = 0;
    for (double v : r)
        if (v <= var) {
            sum += v;
            ++count;
        }
    return {var, sum / count};
}

}  // namespace oracle
