#include "dysarar/score_engine.hpp"

#include "dysarar/errors.hpp"
#include "dysarar/slice_kernel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <sstream>

namespace dysarar {

namespace {

constexpr double kInformationFloor = 1e-10;

// s(z) = 1 / (1 + exp(-z)) without overflow for large |z|.
double logistic(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_tilde(const TildeParams& tilde, const Layout& layout) {
    if (tilde.size() != layout.size()) {
        std::ostringstream os;
        os << "tilde vector has " << tilde.size() << " entries, layout needs " << layout.size();
        fail(ErrorKind::DimensionMismatch, os.str());
    }
}

}  // namespace

void ScoreConfig::validate() const {
    if (!(gamma == 0.0 || gamma == -0.5 || gamma == -1.0))
        fail(ErrorKind::InvalidArgument, "gamma must be one of 0, -1/2, -1");
    if (score_clip && !(*score_clip > 0.0)) fail(ErrorKind::InvalidArgument, "score_clip must be positive");
    if (fim_draws < 2) fail(ErrorKind::InvalidArgument, "fim_draws must be at least 2");
}

double bounded_logistic(double z, double low, double high) noexcept { return low + (high - low) * logistic(z); }

double bounded_logit(double v, double low, double high) noexcept { return std::log((v - low) / (high - v)); }

void map_params_into(const Eigen::Ref<const Vector>& tilde, const MappingBounds& bounds, NaturalParams& theta) {
    const Eigen::Index k = theta.beta.size();
    const Eigen::Index n = theta.sigma.size();
    theta.rho = bounded_logistic(tilde(0), bounds.rho_low, bounds.rho_high);
    theta.lambda = bounded_logistic(tilde(1), bounds.lambda_low, bounds.lambda_high);
    theta.beta = tilde.segment(2, k);
    theta.sigma = tilde.segment(2 + k, n).array().exp();
}

NaturalParams map_params(const TildeParams& tilde, const MappingBounds& bounds, const Layout& layout) {
    check_tilde(tilde, layout);
    NaturalParams theta;
    theta.beta.resize(layout.n_regressors);
    theta.sigma.resize(layout.n_units);
    map_params_into(tilde.values, bounds, theta);
    return theta;
}

TildeParams unmap_params(const NaturalParams& theta, const MappingBounds& bounds) {
    const Layout layout = theta.layout();
    TildeParams tilde{Vector(layout.size())};
    tilde.values(Layout::rho()) = bounded_logit(theta.rho, bounds.rho_low, bounds.rho_high);
    tilde.values(Layout::lambda()) = bounded_logit(theta.lambda, bounds.lambda_low, bounds.lambda_high);
    tilde.values.segment(2, layout.n_regressors) = theta.beta;
    tilde.values.segment(layout.sigma_begin(), layout.n_units) = theta.sigma.array().log();
    return tilde;
}

Vector jacobian_diagonal(const TildeParams& tilde, const MappingBounds& bounds, const Layout& layout) {
    check_tilde(tilde, layout);
    Vector d(layout.size());
    const double sr = logistic(tilde.values(0));
    const double sl = logistic(tilde.values(1));
    d(0) = (bounds.rho_high - bounds.rho_low) * sr * (1.0 - sr);
    d(1) = (bounds.lambda_high - bounds.lambda_low) * sl * (1.0 - sl);
    d.segment(2, layout.n_regressors).setOnes();
    for (Eigen::Index j = 0; j < layout.n_units; ++j)
        d(layout.sigma(j)) = 2.0 * std::exp(2.0 * tilde.values(layout.sigma(j)));
    return d;
}

Matrix jacobian(const TildeParams& tilde, const MappingBounds& bounds, const Layout& layout) {
    return jacobian_diagonal(tilde, bounds, layout).asDiagonal();
}

double log_likelihood_t(const Vector& y, const Matrix& x, const NaturalParams& theta, const WeightMatrix& w1,
                        const WeightMatrix& w2) {
    if (y.size() != w1.size() || x.rows() != y.size() || x.cols() != theta.beta.size() ||
        theta.sigma.size() != y.size())
        fail(ErrorKind::DimensionMismatch, "log_likelihood_t: shapes disagree");
    SliceKernel kernel(w1, w2, KernelKind::dense);
    return kernel.evaluate(y, y, y, x, theta, nullptr);
}

Vector score_natural(const Vector& y, const Matrix& x, const NaturalParams& theta, const WeightMatrix& w1,
                     const WeightMatrix& w2) {
    if (y.size() != w1.size() || x.rows() != y.size() || x.cols() != theta.beta.size() ||
        theta.sigma.size() != y.size())
        fail(ErrorKind::DimensionMismatch, "score_natural: shapes disagree");
    SliceKernel kernel(w1, w2, KernelKind::dense);
    Vector score;
    kernel.evaluate(y, y, y, x, theta, &score);
    return score;
}

Matrix fisher_information_mc(const NaturalParams& theta, const Matrix& x, const WeightMatrix& w1,
                             const WeightMatrix& w2, int draws, std::uint64_t seed) {
    if (draws < 2) fail(ErrorKind::InvalidArgument, "fisher_information_mc needs at least two draws");
    const Eigen::Index n = w1.size();
    const Layout layout{n, x.cols()};
    const SpatialOperators ops = build_operators(theta.rho, theta.lambda, w1, w2);
    const Vector xb = x.cols() > 0 ? Vector(x * theta.beta) : Vector::Zero(n);

    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    SliceKernel kernel(w1, w2, KernelKind::dense);

    Matrix info = Matrix::Zero(layout.size(), layout.size());
    Vector eps(n), score;
    for (int d = 0; d < draws; ++d) {
        for (Eigen::Index j = 0; j < n; ++j) eps(j) = theta.sigma(j) * normal(rng);
        const Vector y = ops.lu_a.solve(xb + ops.lu_b.solve(eps));
        kernel.evaluate(y, y, y, x, theta, &score);
        info.selfadjointView<Eigen::Lower>().rankUpdate(score);
    }
    info = info.selfadjointView<Eigen::Lower>();
    return info / static_cast<double>(draws);
}

Vector scale_tilde_score(const Vector& tilde_score, const Matrix& information_natural, const Vector& jacobian_diag,
                         double gamma, const Eigen::Array<bool, Eigen::Dynamic, 1>& active) {
    const Eigen::Index d = tilde_score.size();
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < d; ++i)
        if (active(i)) idx.push_back(i);
    const auto m = static_cast<Eigen::Index>(idx.size());

    Matrix info(m, m);
    Vector sub(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        sub(a) = tilde_score(idx[a]);
        for (Eigen::Index b = 0; b < m; ++b)
            info(a, b) = jacobian_diag(idx[a]) * information_natural(idx[a], idx[b]) * jacobian_diag(idx[b]);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(info);
    if (eig.info() != Eigen::Success || !eig.eigenvalues().allFinite() ||
        eig.eigenvalues().minCoeff() < kInformationFloor) {
        std::ostringstream os;
        os << "smallest information eigenvalue "
           << (eig.info() == Eigen::Success ? eig.eigenvalues().minCoeff() : std::nan(""));
        fail(ErrorKind::NonInvertibleInformation, os.str());
    }
    const Vector powered = eig.eigenvalues().array().pow(gamma);
    const Vector scaled_sub = eig.eigenvectors() * (powered.asDiagonal() * (eig.eigenvectors().transpose() * sub));

    Vector out = Vector::Zero(d);
    for (Eigen::Index a = 0; a < m; ++a) out(idx[a]) = scaled_sub(a);
    return out;
}

void clip_score(Vector& score, std::optional<double> clip) noexcept {
    if (!clip) return;
    score = score.cwiseMax(-*clip).cwiseMin(*clip);
}

Vector scaled_score(const Vector& y, const Matrix& x, const TildeParams& tilde, const MappingBounds& bounds,
                    const ScoreConfig& config, const WeightMatrix& w1, const WeightMatrix& w2) {
    config.validate();
    const Layout layout{y.size(), x.cols()};
    const NaturalParams theta = map_params(tilde, bounds, layout);
    const Vector jac = jacobian_diagonal(tilde, bounds, layout);
    const Vector grad = score_natural(y, x, theta, w1, w2);
    Vector s = jac.cwiseProduct(grad);
    if (config.gamma != 0.0) {
        const Matrix info = fisher_information_mc(theta, x, w1, w2, config.fim_draws, config.fim_seed);
        const Eigen::Array<bool, Eigen::Dynamic, 1> active =
            Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(layout.size(), true);
        s = scale_tilde_score(s, info, jac, config.gamma, active);
    }
    clip_score(s, config.score_clip);
    return s;
}

}  // namespace dysarar
