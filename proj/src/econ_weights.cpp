#include "dysarar/econ_weights.hpp"

#include "dysarar/errors.hpp"
#include "dysarar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dysarar {

namespace {

// Ranks 1..T, ties share the average of the positions they occupy.
Vector average_ranks(const Eigen::Ref<const Vector>& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v(a) < v(b); });
    Vector ranks(n);
    for (Eigen::Index i = 0; i < n;) {
        Eigen::Index j = i;
        while (j + 1 < n && v(order[static_cast<std::size_t>(j + 1)]) == v(order[static_cast<std::size_t>(i)])) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Eigen::Index k = i; k <= j; ++k) ranks(order[static_cast<std::size_t>(k)]) = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

Matrix spearman_matrix(const IndicatorPanel& panel) {
    const Matrix& v = panel.values;
    if (v.rows() < 3) fail(ErrorKind::InvalidArgument, "Spearman correlation needs at least 3 observations");
    if (v.cols() < 1) fail(ErrorKind::EmptyPanel, "indicator panel " + panel.label + " has no units");
    if (!v.allFinite()) fail(ErrorKind::NonNumericCell, "indicator panel " + panel.label + " has non-finite values");
    const Eigen::Index n = v.cols();
    Matrix centered(v.rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        if ((v.col(j).array() == v(0, j)).all())
            fail(ErrorKind::ConstantColumn,
                 "indicator " + panel.label + ": column " + std::to_string(j + 1) + " is constant");
        const Vector r = average_ranks(v.col(j));
        centered.col(j) = r.array() - r.mean();
    }
    Matrix corr = centered.transpose() * centered;
    const Vector sd = corr.diagonal().cwiseSqrt();
    corr = sd.cwiseInverse().asDiagonal() * corr * sd.cwiseInverse().asDiagonal();
    corr = (0.5 * (corr + corr.transpose())).cwiseMax(-1.0).cwiseMin(1.0);
    corr.diagonal().setOnes();
    return corr;
}

WeightMatrix build_weight_matrix(const Matrix& corr) {
    const Eigen::Index n = corr.rows();
    if (n < 2 || corr.cols() != n) fail(ErrorKind::DimensionMismatch, "correlation matrix must be square, N >= 2");
    Matrix raw = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) raw(i, j) = std::exp(-std::sqrt(2.0 * std::max(0.0, 1.0 - corr(i, j))));
    return row_normalize(raw);
}

WeightMatrix indicator_weights(const IndicatorPanel& panel) { return build_weight_matrix(spearman_matrix(panel)); }

Matrix SensitivityGrid::llk_matrix() const {
    const auto n = static_cast<Eigen::Index>(labels.size());
    Matrix m = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const SensitivityCell& c = cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (c.ok) m(i, j) = c.llk;
        }
    return m;
}

SensitivityGrid sensitivity_grid(const std::vector<IndicatorPanel>& panels, const PanelMatrix& y,
                                 const RegressorPanel& x, const ModelSpec& spec, const FitOptions& options,
                                 Execution execution) {
    if (panels.size() < 2) fail(ErrorKind::InvalidArgument, "sensitivity grid needs at least two indicators");
    const std::size_t n = panels.size();
    std::vector<WeightMatrix> w;
    w.reserve(n);
    for (const auto& p : panels) w.push_back(indicator_weights(p));

    SensitivityGrid grid;
    for (const auto& p : panels) grid.labels.push_back(p.label);
    grid.cells.assign(n, std::vector<SensitivityCell>(n));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j)
                grid.cells[i][j].excluded = true;
            else
                pairs.emplace_back(i, j);
        }
    for_each_index(pairs.size(), execution, [&](std::size_t k) {
        const auto [i, j] = pairs[k];
        SensitivityCell& cell = grid.cells[i][j];
        try {
            FitOptions local = options;
            local.execution = Execution::serial;
            local.compute_std_errors = false;
            const FitResult fit = fit_mle(y, x, spec, w[i], w[j], local);
            cell.llk = fit.total_llk;
            cell.ok = std::isfinite(fit.total_llk);
            if (!cell.ok) cell.error = "non-finite likelihood";
        } catch (const Error& e) {
            cell.error = e.what();
        }
    });
    return grid;
}

}  // namespace dysarar
