#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dense_oracles.hpp"
#include "dysarar/errors.hpp"
#include "dysarar/portfolio.hpp"
#include "dysarar/simulation_lab.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace dysarar;

namespace {

Vector random_returns(Eigen::Index s, std::uint64_t seed, double mean = 0.0003, double sd = 0.01) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(mean, sd);
    Vector r(s);
    for (Eigen::Index i = 0; i < s; ++i) r(i) = g(rng);
    return r;
}

// Dense grid then golden refinement on |g|, independent of the bisection.
double fee_grid_oracle(const Vector& a, const Vector& b, double upsilon) {
    auto mu = [&](const Vector& r, double shift) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < r.size(); ++i) acc += std::pow(1.0 + r(i) - shift, 1.0 - upsilon) / (1.0 - upsilon);
        return acc / static_cast<double>(r.size());
    };
    const double target = mu(a, 0.0);
    double best = -0.5, best_gap = 1e300;
    for (int i = 0; i <= 100000; ++i) {
        const double th = -0.5 + i * 1e-5;
        const double gap = std::abs(mu(b, th) - target);
        if (gap < best_gap) best_gap = gap, best = th;
    }
    double lo = best - 1e-5, hi = best + 1e-5;
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
        (std::abs(mu(b, m1) - target) < std::abs(mu(b, m2) - target) ? hi : lo) = (std::abs(mu(b, m1) - target) <
                                                                                  std::abs(mu(b, m2) - target))
                                                                                     ? m2
                                                                                     : m1;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("tangency weights") {
    Vector mu(2);
    mu << 0.1, 0.1;
    const Vector a = tangency_weights(mu, Matrix::Identity(2, 2));
    CHECK(a(0) == doctest::Approx(0.5));
    Matrix om = Matrix::Zero(2, 2);
    om.diagonal() << 1.0, 4.0;
    const Vector b = tangency_weights(mu, om);
    CHECK(std::abs(b(0) - 0.8) < 1e-12);
    CHECK(std::abs(b(1) - 0.2) < 1e-12);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        Matrix m(4, 6);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
        const Matrix omega = m * m.transpose();
        Vector mu4(4);
        for (Eigen::Index i = 0; i < 4; ++i) mu4(i) = 0.05 + 0.1 * std::abs(g(rng));
        const Vector w = tangency_weights(mu4, omega);
        CHECK(std::abs(w.sum() - 1.0) < 1e-12);
        CHECK((tangency_weights(7.5 * mu4, omega) - w).cwiseAbs().maxCoeff() < 1e-12);
    }

    Matrix sing = Matrix::Ones(2, 2);
    try {
        (void)tangency_weights(mu, sing);
        FAIL("expected SingularCovariance");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularCovariance);
    }
    Vector opp(2);
    opp << 0.1, -0.1;
    try {
        (void)tangency_weights(opp, Matrix::Identity(2, 2));
        FAIL("expected DegenerateNormalizer");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DegenerateNormalizer);
    }
}

TEST_CASE("metrics against brute force") {
    const Vector r = random_returns(457, 1);
    Matrix w(457, 3);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    const BacktestMetrics m = backtest_metrics(r, w);

    std::vector<double> s(r.data(), r.data() + r.size());
    std::sort(s.begin(), s.end());
    const double var = s[static_cast<std::size_t>(std::ceil(0.05 * 457)) - 1];
    double es = 0.0;
    int k = 0;
    for (double v : s)
        if (v <= var) es += v, ++k;
    CHECK(m.var5 == doctest::Approx(var * 100));
    CHECK(m.es5 == doctest::Approx(es / k * 100));
    CHECK(m.es5 <= m.var5);
    CHECK(m.ann_mean == doctest::Approx(252 * r.mean() * 100));
    const double sd = std::sqrt((r.array() - r.mean()).square().sum() / 456.0);
    CHECK(m.ann_sd == doctest::Approx(std::sqrt(252.0) * sd * 100));
    REQUIRE(m.sharpe.has_value());
    CHECK(*m.sharpe == doctest::Approx(m.ann_mean / m.ann_sd));
    CHECK(m.max_loss == doctest::Approx(s.front() * 100));
    CHECK(m.max_gain == doctest::Approx(s.back() * 100));
    double moves = 0.0;
    for (Eigen::Index t = 1; t < 457; ++t)
        for (Eigen::Index i = 0; i < 3; ++i) moves += std::abs(w(t, i) - w(t - 1, i));
    CHECK(m.turnover == doctest::Approx(100.0 / 456.0 * moves));

    CHECK(sharpe_ratio(9.86, 16.18) == doctest::Approx(0.61).epsilon(0.005 / 0.61));
}

TEST_CASE("degenerate metrics") {
    const BacktestMetrics m = backtest_metrics(Vector::Constant(20, 0.002), Matrix::Constant(20, 2, 0.5));
    CHECK(m.var5 == doctest::Approx(0.2));
    CHECK(m.es5 == doctest::Approx(0.2));
    CHECK(m.ann_sd == 0.0);
    CHECK_FALSE(m.sharpe.has_value());
    CHECK(m.turnover == 0.0);
}

TEST_CASE("equal weights") {
    PanelMatrix y(50, 4);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0.0, 0.01);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = g(rng);
    const BacktestReport rep = equal_weight_strategy(y);
    CHECK((rep.weights_path.array() == 0.25).all());
    CHECK(rep.metrics.turnover == 0.0);
    for (Eigen::Index t = 0; t < 50; ++t) CHECK(rep.portfolio_returns(t) == doctest::Approx(y.row(t).mean()));
}

TEST_CASE("management fee") {
    const Vector a = random_returns(800, 4);
    CHECK(management_fee(a, a).per_period == 0.0);
    const Vector shifted = (a.array() + 0.001).matrix();
    const ManagementFee f = management_fee(a, shifted, FeeConfig{7.0});
    CHECK(std::abs(f.per_period - 0.001) < 1e-12);
    CHECK(f.annualized_pct == doctest::Approx(0.001 * 252 * 100));
    CHECK(std::abs(management_fee(shifted, a, FeeConfig{7.0}).per_period + 0.001) < 1e-12);

    for (int rep = 0; rep < 5; ++rep) {
        const Vector x = random_returns(300, 10 + rep), y = random_returns(300, 20 + rep, 0.0005, 0.012);
        CHECK(std::abs(management_fee(x, y, FeeConfig{7.0}).per_period - fee_grid_oracle(x, y, 7.0)) < 1e-8);
    }

    Vector crash = a;
    crash(3) = -1.2;
    try {
        (void)management_fee(crash, a);
        FAIL("expected DomainViolation");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DomainViolation);
    }
    try {
        (void)management_fee(a, (a.array() + 0.2).matrix(), FeeConfig{3.0, -0.1, 0.1});
        FAIL("expected NoRootInInterval");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NoRootInInterval);
    }
    CHECK_THROWS_AS((void)management_fee(a, a, FeeConfig{1.0}), Error);
}

TEST_CASE("block bootstrap") {
    const Vector a = random_returns(500, 30);
    const Vector far = (a.array() + 0.004 + 0.0001 * random_returns(500, 31, 0.0, 1.0).array()).matrix();
    const BootstrapResult sep = block_bootstrap_pvalue(a, far, FeeConfig{3.0}, 0, 400, 7);
    CHECK(sep.p_value < 0.01);
    CHECK(sep.used + sep.dropped == 400);

    // b is a with its blocks reordered: identical mean utility
    int large = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const Vector x = random_returns(500, 100 + trial);
        Vector y(500);
        std::vector<int> blocks(50);
        for (int i = 0; i < 50; ++i) blocks[i] = i;
        std::mt19937_64 rng(200 + trial);
        std::shuffle(blocks.begin(), blocks.end(), rng);
        for (int i = 0; i < 50; ++i) y.segment(10 * i, 10) = x.segment(10 * blocks[i], 10);
        if (block_bootstrap_pvalue(x, y, FeeConfig{3.0}, 10, 200, 300 + trial).p_value > 0.10) ++large;
    }
    CHECK(large >= 18);

    const BootstrapResult s1 = block_bootstrap_pvalue(a, far, FeeConfig{3.0}, 1, 200, 9, Execution::serial);
    const BootstrapResult p1 = block_bootstrap_pvalue(a, far, FeeConfig{3.0}, 1, 200, 9, Execution::parallel);
    CHECK(s1.p_value == p1.p_value);
    CHECK_THROWS_AS((void)block_bootstrap_pvalue(a, far, FeeConfig{}, 5, 50, 1), Error);
}

TEST_CASE("risk shares") {
    const SSararConfig cfg = SSararConfig::paper_defaults();
    const WeightMatrix w = random_weight_matrix(4, 1.0, 5);
    SSararConfig small = cfg;
    small.t_len = 60;
    const RegressorPanel x = gen_regressors(small, 5);
    PanelMatrix y(60, 4);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = g(rng);
    const FilterData data(y, x, w, w);

    const ModelSpec ols = ModelSpec::from_label("DyOLS-DHe.CHe", 4, 2);
    CoefficientVector c = CoefficientVector::zeros(ols.layout());
    c.kappa(2) = 1.0;
    c.f.tail(4).setConstant(0.05);
    c.r.tail(4).setConstant(0.9);
    const RiskShares zero = risk_shares(filter_pass(data, c, ols), w, w);
    CHECK(zero.sys_share.cwiseAbs().maxCoeff() < 1e-14);

    const ModelSpec sarar = ModelSpec::from_label("DySARAR-DHe.CHe", 4, 2);
    c.kappa(0) = 0.5;
    c.kappa(1) = 0.3;
    c.f.head(2).setConstant(0.02);
    c.r.head(2).setConstant(0.9);
    const FilterOutput out = filter_pass(data, c, sarar);
    const RiskShares rs = risk_shares(out, w, w);
    for (Eigen::Index t = 0; t < 60; ++t) {
        const NaturalParams& th = out.natural_path[static_cast<std::size_t>(t)];
        if (th.rho > 0 && th.lambda > 0) {
            CHECK(rs.sys_share.row(t).minCoeff() > 0.0);
            CHECK(rs.sys_share.row(t).maxCoeff() < 1.0);
        }
        const oracle::DenseMoments dm = oracle::dense_moments(th, x[t], w.weights(), w.weights());
        CHECK((rs.sigma_y.row(t).transpose() - dm.omega.diagonal().cwiseSqrt()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("rolling backtest") {
    const Eigen::Index n = 3, periods = 260;
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 0.01);
    PanelMatrix y(periods, n);
    RegressorPanel x;
    for (Eigen::Index t = 0; t < periods; ++t) {
        x.push_back(Matrix::Ones(n, 1));
        for (Eigen::Index j = 0; j < n; ++j) y(t, j) = 0.0005 * (j + 1) + g(rng);
    }
    const WeightMatrix w1 = row_normalize(oracle::random_symmetric_raw(n, rng));
    const WeightMatrix w2 = row_normalize(oracle::random_symmetric_raw(n, rng));
    const BacktestConfig cfg{200, 55, 20};

    // flat forecasts: the tangency portfolio is 1/N and returns match
    const ModelSpec ols = ModelSpec::from_label("DyOLS-DHo.CHo", n, 1);
    const BacktestReport flat = rolling_backtest(y, x, ols, w1, w2, cfg, {}, [](Eigen::Index, Vector& mu, Matrix& om) {
        mu.setConstant(0.01);
        om.setIdentity();
    });
    const BacktestReport ew = equal_weight_strategy(y.middleRows(200, 55));
    CHECK((flat.portfolio_returns - ew.portfolio_returns).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(flat.metrics.turnover < 1e-12);
    CHECK(flat.refit_origins == std::vector<Eigen::Index>{0, 20, 40});  // ceil(55 / 20)

    const BacktestReport rep = rolling_backtest(y, x, ModelSpec::from_label("StSAR-CHe", n, 1), w1, w2, cfg);
    CHECK(rep.weights_path.rows() == 55);
    for (Eigen::Index s = 0; s < 55; ++s) {
        CHECK(std::abs(rep.weights_path.row(s).sum() - 1.0) < 1e-10);
        CHECK(rep.portfolio_returns(s) == doctest::Approx(rep.weights_path.row(s).dot(y.row(200 + s))));
    }
    CHECK(rep.failed_origins == 0);
    CHECK(rep.metrics.es5 <= rep.metrics.var5);

    CHECK_THROWS_AS((void)rolling_backtest(y, x, ols, w1, w2, BacktestConfig{250, 55, 20}), Error);
}
