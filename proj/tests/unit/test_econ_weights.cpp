#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dysarar/econ_weights.hpp"
#include "dysarar/errors.hpp"

#include <cmath>
#include <random>

using namespace dysarar;

namespace {

Matrix random_correlation(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix a(n, n + 2);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    Matrix s = a * a.transpose();
    const Vector d = s.diagonal().cwiseSqrt().cwiseInverse();
    s = d.asDiagonal() * s * d.asDiagonal();
    s.diagonal().setOnes();
    return s;
}

// Plain O(n^2) Spearman with average ranks, straight from the definition.
double spearman_pair(const Vector& a, const Vector& b) {
    auto ranks = [](const Vector& v) {
        Vector r(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            double less = 0, equal = 0;
            for (Eigen::Index j = 0; j < v.size(); ++j) {
                less += v(j) < v(i);
                equal += v(j) == v(i);
            }
            r(i) = less + (equal + 1.0) / 2.0;
        }
        return r;
    };
    const Vector ra = ranks(a), rb = ranks(b);
    const Vector ca = ra.array() - ra.mean(), cb = rb.array() - rb.mean();
    return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

}  // namespace

TEST_CASE("spearman examples") {
    IndicatorPanel p{"MKT", Matrix(5, 3)};
    p.values << 1, 1, 5,
                2, 2, 4,
                3, 3, 3,
                4, 4, 2,
                5, 5, 1;
    const Matrix c = spearman_matrix(p);
    CHECK(c(0, 1) == doctest::Approx(1.0));
    CHECK(c(0, 2) == doctest::Approx(-1.0));
    CHECK(c.diagonal() == Vector::Ones(3));
    CHECK(c == c.transpose());
}

TEST_CASE("spearman against the rank definition, ties included") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> small(0, 4);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        IndicatorPanel p{"PB", Matrix(12, 4)};
        for (Eigen::Index i = 0; i < p.values.size(); ++i)
            p.values.data()[i] = rep % 2 == 0 ? small(rng) : g(rng);
        bool constant = false;
        for (Eigen::Index j = 0; j < 4; ++j) constant |= (p.values.col(j).array() == p.values(0, j)).all();
        if (constant) continue;
        const Matrix c = spearman_matrix(p);
        for (Eigen::Index i = 0; i < 4; ++i)
            for (Eigen::Index j = 0; j < 4; ++j)
                if (i != j) CHECK(c(i, j) == doctest::Approx(spearman_pair(p.values.col(i), p.values.col(j))).epsilon(1e-12));
    }
}

TEST_CASE("spearman is invariant to monotone transforms") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1.0);
    IndicatorPanel p{"DY", Matrix(40, 5)};
    for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values.data()[i] = g(rng);
    IndicatorPanel q = p;
    q.values.col(0) = p.values.col(0).array().exp();
    q.values.col(2) = p.values.col(2).array().cube() * 3.0 + 1.0;
    q.values.col(4) = p.values.col(4).array().atan();
    CHECK((spearman_matrix(p) - spearman_matrix(q)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("spearman errors") {
    IndicatorPanel p{"PE", Matrix::Ones(5, 2)};
    p.values(2, 0) = 3.0;
    try {
        (void)spearman_matrix(p);
        FAIL("expected ConstantColumn");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConstantColumn);
    }
    CHECK_THROWS_AS((void)spearman_matrix(IndicatorPanel{"X", Matrix::Random(2, 3)}), Error);
}

TEST_CASE("weight construction examples") {
    Matrix c2(2, 2);
    c2 << 1, 1, 1, 1;
    const WeightMatrix w2 = build_weight_matrix(c2);
    CHECK(w2.weights()(0, 1) == 1.0);
    CHECK(w2.weights()(1, 0) == 1.0);

    Matrix c3 = Matrix::Constant(3, 3, 0.3);
    c3.diagonal().setOnes();
    const WeightMatrix w3 = build_weight_matrix(c3);
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) CHECK(w3.weights()(i, j) == doctest::Approx(i == j ? 0.0 : 0.5));

    // c = 0.5 gives d = 1, c = -1 gives d = 2; the row is exp(-1) : exp(-2)
    Matrix c(3, 3);
    c << 1, 0.5, -1,
         0.5, 1, 0.5,
         -1, 0.5, 1;
    const WeightMatrix w = build_weight_matrix(c);
    CHECK(w.weights()(0, 1) == doctest::Approx(std::exp(-1.0) / (std::exp(-1.0) + std::exp(-2.0))));
    CHECK(w.weights()(0, 2) > 0.0);
}

TEST_CASE("weight invariants on random correlation matrices") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> size(2, 12);
    for (int rep = 0; rep < 300; ++rep) {
        const Matrix c = random_correlation(size(rng), rng);
        const Matrix w = build_weight_matrix(c).weights();
        CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
        CHECK(w.diagonal().cwiseAbs().maxCoeff() == 0.0);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.rows(); ++j)
                for (Eigen::Index k = 0; k < w.rows(); ++k)
                    if (i != j && i != k && c(i, j) > c(i, k)) CHECK(w(i, j) > w(i, k));
    }
}

TEST_CASE("sensitivity grid layout") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0.0, 1.0);
    const Eigen::Index n = 3, periods = 150;
    std::vector<IndicatorPanel> panels;
    for (const char* label : {"MKT", "PB", "DY"}) {
        IndicatorPanel p{label, Matrix(30, n)};
        for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values.data()[i] = g(rng);
        panels.push_back(p);
    }
    panels.push_back(IndicatorPanel{"PE", panels[0].values});  // same data as MKT

    PanelMatrix y(periods, n);
    RegressorPanel x;
    for (Eigen::Index t = 0; t < periods; ++t) {
        x.push_back(Matrix::Ones(n, 1));
        for (Eigen::Index j = 0; j < n; ++j) y(t, j) = 0.2 + g(rng);
    }
    const ModelSpec spec = ModelSpec::from_label("StSARAR-CHo", n, 1);
    const SensitivityGrid grid = sensitivity_grid(panels, y, x, spec);
    REQUIRE(grid.labels.size() == 4);
    int filled = 0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(grid.cells[i][j].excluded == (i == j));
            if (grid.cells[i][j].ok) {
                ++filled;
                CHECK(std::isfinite(grid.cells[i][j].llk));
            }
        }
    CHECK(filled == 12);
    const Matrix m = grid.llk_matrix();
    CHECK(std::isnan(m(0, 0)));
    // MKT and PE carry the same matrix, so swapping them changes nothing
    CHECK(m(0, 1) == doctest::Approx(m(3, 1)).epsilon(1e-6));
    CHECK(m(1, 0) == doctest::Approx(m(1, 3)).epsilon(1e-6));
    CHECK_THROWS_AS((void)sensitivity_grid({panels[0]}, y, x, spec), Error);
}
