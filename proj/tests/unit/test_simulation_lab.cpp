#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dysarar/errors.hpp"
#include "dysarar/simulation_lab.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace dysarar;

TEST_CASE("paper defaults") {
    const SSararConfig c = SSararConfig::paper_defaults();
    CHECK_NOTHROW(c.validate());
    CHECK(c.mu.size() == 8);
    CHECK(c.mu(4) == 0.986);
    CHECK(c.v == c.v.transpose());
    CHECK(Eigen::LLT<Matrix>(c.v).info() == Eigen::Success);
    SSararConfig bad = c;
    bad.phi = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("latent parameter path") {
    SSararConfig c = SSararConfig::paper_defaults();
    c.t_len = 20000;
    c.phi = 0.0;
    const PanelMatrix p = simulate_ssarar_params(c, 3);
    REQUIRE(p.rows() == 20000);
    for (Eigen::Index i = 0; i < 8; ++i) {
        const double mean = p.col(i).mean();
        const double var = (p.col(i).array() - mean).square().sum() / 19999.0;
        CHECK(std::abs(mean - c.mu(i)) < 4.0 * std::sqrt(0.01 / 20000));
        CHECK(var == doctest::Approx(0.01).epsilon(0.05));
    }
    c.phi = 0.99;
    const PanelMatrix q = simulate_ssarar_params(c, 3);
    // stationary variance u / (1 - phi^2), lag-one autocorrelation phi
    const Eigen::Index t = q.rows();
    const Vector x = q.col(0).array() - q.col(0).mean();
    const double ac = x.head(t - 1).dot(x.tail(t - 1)) / x.squaredNorm();
    CHECK(ac == doctest::Approx(0.99).epsilon(0.02));
    CHECK(simulate_ssarar_params(c, 3) == q);
    CHECK(simulate_ssarar_params(c, 4) != q);
}

TEST_CASE("regressors") {
    SSararConfig c = SSararConfig::paper_defaults();
    c.t_len = 30000;
    const RegressorPanel x = gen_regressors(c, 1);
    REQUIRE(x.size() == 30000);
    Matrix cov = Matrix::Zero(4, 4);
    for (const Matrix& xt : x) {
        CHECK((xt.col(0).array() == 1.0).all());
        cov += xt.col(1) * xt.col(1).transpose();
    }
    cov /= 30000.0;
    CHECK((cov - c.v).cwiseAbs().maxCoeff() < 0.04);

    c.v(0, 1) = c.v(1, 0) = 1.5;
    try {
        (void)gen_regressors(c, 1);
        FAIL("expected NonPDCovariance");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonPDCovariance);
    }
}

TEST_CASE("random weight matrices") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const WeightMatrix w = random_weight_matrix(6, seed % 2 ? 1.0 : 0.4, seed);
        const Matrix& m = w.weights();
        CHECK((m.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
        CHECK(m.diagonal().cwiseAbs().maxCoeff() == 0.0);
        // similar to a symmetric matrix, so the spectrum is real
        const Eigen::EigenSolver<Matrix> es(m);
        CHECK(es.eigenvalues().imag().cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK(random_weight_matrix(5, 0.5, 9).weights() == random_weight_matrix(5, 0.5, 9).weights());
    CHECK_THROWS_AS((void)random_weight_matrix(1, 0.5, 0), Error);
}

TEST_CASE("filtering experiment bookkeeping") {
    SSararConfig c = SSararConfig::paper_defaults();
    c.t_len = 150;
    c.n_replications = 4;
    HarnessOptions opts;
    opts.fit.simplex.max_iterations = 40;
    opts.fit.quasi_newton.max_iterations = 30;
    const FilteringReport a = filtering_experiment(c, {0.9, 0.99}, 5, opts);
    REQUIRE(a.rows.size() == 2);
    for (const auto& row : a.rows) {
        CHECK(row.parameters.size() == 8);
        CHECK(row.fans.size() == 8);
        CHECK(row.fans[0].bands.rows() == 150);
        CHECK(row.failures == 0);
        for (const auto& fan : row.fans) {
            CHECK(fan.coverage >= 0.0);
            CHECK(fan.coverage <= 1.0);
            CHECK((fan.bands.col(0).array() <= fan.bands.col(1).array()).all());
            CHECK((fan.bands.col(1).array() <= fan.bands.col(2).array()).all());
        }
    }
    CHECK((a.rows[1].relative_mse.array() == 1.0).all());

    opts.execution = Execution::serial;
    const FilteringReport b = filtering_experiment(c, {0.9, 0.99}, 5, opts);
    CHECK(b.rows[0].mse == a.rows[0].mse);
    CHECK(b.rows[1].fans[3].bands == a.rows[1].fans[3].bands);

    const FilteringReport no_ref = filtering_experiment(c, {0.9}, 5, opts);
    CHECK(std::isnan(no_ref.rows[0].relative_mse(0)));
}

TEST_CASE("harness failure rate") {
    SSararConfig c = SSararConfig::paper_defaults();
    c.t_len = 60;
    c.n_replications = 3;
    HarnessOptions opts;
    opts.fit.start_spatial = 5.0;  // outside the parameter space: every fit fails
    try {
        (void)filtering_experiment(c, {0.99}, 1, opts);
        FAIL("expected HarnessFailureRate");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::HarnessFailureRate);
    }
}

TEST_CASE("finite-sample experiment bookkeeping") {
    FiniteSampleConfig cfg = FiniteSampleConfig::table2();
    cfg.t_lens = {200};
    cfg.n_replications = 1;
    const WeightMatrix w1 = random_weight_matrix(6, 1.0, 1), w2 = random_weight_matrix(6, 1.0, 2);
    HarnessOptions opts;
    opts.fit.simplex.max_iterations = 30;
    opts.fit.quasi_newton.max_iterations = 20;
    const auto one = finite_sample_experiment(cfg, w1, w2, opts);
    REQUIRE(one.size() == 1);
    REQUIRE(one[0].rows.size() == 24);
    CHECK(std::isnan(one[0].rows[0].sd));
    CHECK(one[0].rows[0].name == "kappa_rho");
    CHECK(one[0].rows[0].truth == 0.9);
    CHECK(one[0].rows[16].truth == doctest::Approx(0.984));
    CHECK(one[0].rows[0].mse == doctest::Approx(std::pow(one[0].rows[0].mean - 0.9, 2)));

    cfg.n_replications = 3;
    const auto par = finite_sample_experiment(cfg, w1, w2, opts);
    opts.execution = Execution::serial;
    const auto ser = finite_sample_experiment(cfg, w1, w2, opts);
    CHECK(par[0].estimates == ser[0].estimates);
    CHECK(par[0].estimates.rows() == 3);
    CHECK(std::isfinite(par[0].rows[5].sd));

    CHECK_THROWS_AS((void)finite_sample_experiment(cfg, w1, w1, opts), Error);
}
