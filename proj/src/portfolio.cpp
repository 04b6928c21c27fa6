#include "dysarar/portfolio.hpp"

#include "dysarar/errors.hpp"
#include "dysarar/parallel.hpp"
#include "dysarar/spatial_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace dysarar {

namespace {

constexpr double kDays = 252.0;

double power_utility(double wealth, double upsilon) { return std::pow(wealth, 1.0 - upsilon) / (1.0 - upsilon); }

double mean_utility(const Vector& r, double shift, double upsilon) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) acc += power_utility(1.0 + r(i) - shift, upsilon);
    return acc / static_cast<double>(r.size());
}

}  // namespace

void BacktestConfig::validate(Eigen::Index periods) const {
    if (in_sample_len < 2 || out_sample_len < 1 || refit_interval < 1)
        fail(ErrorKind::InvalidArgument, "backtest lengths must be positive");
    if (in_sample_len + out_sample_len > periods) {
        std::ostringstream os;
        os << "F + S = " << in_sample_len + out_sample_len << " exceeds the " << periods << " available periods";
        fail(ErrorKind::InvalidArgument, os.str());
    }
}

void FeeConfig::validate() const {
    if (!(upsilon > 1.0)) fail(ErrorKind::InvalidArgument, "risk aversion must exceed 1");
    if (!(search_low < search_high)) fail(ErrorKind::InvalidArgument, "empty fee search interval");
}

Vector tangency_weights(const Vector& mu_hat, const Matrix& omega_hat) {
    const Eigen::Index n = mu_hat.size();
    if (omega_hat.rows() != n || omega_hat.cols() != n) fail(ErrorKind::DimensionMismatch, "mu and Omega disagree");
    const Eigen::LLT<Matrix> llt(omega_hat);
    if (llt.info() != Eigen::Success || !omega_hat.allFinite())
        fail(ErrorKind::SingularCovariance, "forecast covariance is not positive definite");
    const Vector raw = llt.solve(mu_hat);
    const double denom = raw.sum();
    if (!std::isfinite(denom) || std::abs(denom) < 1e-12)
        fail(ErrorKind::DegenerateNormalizer, "1' Omega^-1 mu is zero");
    return raw / denom;
}

double sharpe_ratio(double ann_mean, double ann_sd) {
    if (!(ann_sd > 0.0)) fail(ErrorKind::InvalidArgument, "Sharpe ratio needs a positive standard deviation");
    return ann_mean / ann_sd;
}

BacktestMetrics backtest_metrics(const Vector& returns, const Matrix& weights_path) {
    const Eigen::Index s = returns.size();
    if (s < 2) fail(ErrorKind::InvalidArgument, "metrics need at least two returns");
    if (weights_path.rows() != s) fail(ErrorKind::DimensionMismatch, "weights path and returns differ in length");
    BacktestMetrics m;
    const double mean = returns.mean();
    const double sd = std::sqrt((returns.array() - mean).square().sum() / static_cast<double>(s - 1));
    m.ann_mean = kDays * mean * 100.0;
    m.ann_sd = std::sqrt(kDays) * sd * 100.0;
    if (m.ann_sd > 0.0) m.sharpe = m.ann_mean / m.ann_sd;
    m.max_loss = returns.minCoeff() * 100.0;
    m.max_gain = returns.maxCoeff() * 100.0;

    std::vector<double> sorted(returns.data(), returns.data() + s);
    std::sort(sorted.begin(), sorted.end());
    const auto k = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(s)));
    const double var = sorted[std::max<std::size_t>(k, 1) - 1];
    double tail = 0.0;
    int count = 0;
    for (double r : sorted) {
        if (r > var) break;
        tail += r;
        ++count;
    }
    m.var5 = var * 100.0;
    m.es5 = tail / count * 100.0;

    double moves = 0.0;
    for (Eigen::Index t = 1; t < s; ++t) moves += (weights_path.row(t) - weights_path.row(t - 1)).cwiseAbs().sum();
    m.turnover = 100.0 / static_cast<double>(s - 1) * moves;
    return m;
}

BacktestReport equal_weight_strategy(const PanelMatrix& y) {
    if (y.rows() < 2 || y.cols() < 1) fail(ErrorKind::EmptyPanel, "equal-weight strategy needs at least two periods");
    BacktestReport rep;
    rep.weights_path = Matrix::Constant(y.rows(), y.cols(), 1.0 / static_cast<double>(y.cols()));
    rep.portfolio_returns = y.rowwise().mean();
    rep.metrics = backtest_metrics(rep.portfolio_returns, rep.weights_path);
    return rep;
}

BacktestReport rolling_backtest(const PanelMatrix& y, const RegressorPanel& x, const ModelSpec& spec,
                                const WeightMatrix& w1, const WeightMatrix& w2, const BacktestConfig& cfg,
                                const FitOptions& fit_options, const ForecastOverride& override_forecast) {
    cfg.validate(y.rows());
    if (static_cast<Eigen::Index>(x.size()) != y.rows()) fail(ErrorKind::DimensionMismatch, "x and y differ in length");
    const Eigen::Index n = y.cols();
    const Eigen::Index f_len = cfg.in_sample_len;
    const Eigen::Index s_len = cfg.out_sample_len;
    const FilterData all(y, x, w1, w2);

    BacktestReport rep;
    rep.weights_path.resize(s_len, n);
    rep.portfolio_returns.resize(s_len);
    Vector previous = Vector::Constant(n, 1.0 / static_cast<double>(n));
    std::optional<CoefficientVector> coeffs;

    for (Eigen::Index block = 0; block < s_len; block += cfg.refit_interval) {
        rep.refit_origins.push_back(block);
        try {
            FitOptions local = fit_options;
            local.compute_std_errors = false;
            if (coeffs) local.extra_starts.push_back(*coeffs);
            coeffs = fit_mle(all.window(block, f_len), spec, local).coeffs;
        } catch (const Error& e) {
            rep.events.push_back("refit at origin " + std::to_string(block) + " failed: " + e.what());
        }
        const Eigen::Index block_end = std::min(block + cfg.refit_interval, s_len);
        std::optional<FilterOutput> pass;
        if (coeffs) {
            // one pass over the window plus the block: row f_len + (s - block)
            // only uses data before origin s's target period
            pass = filter_pass(all.window(block, f_len + (block_end - block)), *coeffs, spec, fit_options.filter);
        }
        for (Eigen::Index s = block; s < block_end; ++s) {
            const Eigen::Index target = f_len + s;
            Vector w = previous;
            try {
                if (!pass) fail(ErrorKind::NoFiniteStart, "no fitted coefficients yet");
                const Eigen::Index row = f_len + (s - block);
                if (pass->breakdown && pass->breakdown_t <= row)
                    fail(ErrorKind::NumericalBreakdown, pass->breakdown_reason);
                const NaturalParams theta = spec_natural(pass->tilde_path.row(row).transpose(), spec);
                ConditionalMoments cm = conditional_moments(theta, x[static_cast<std::size_t>(target)], w1, w2);
                Vector mu = cm.mean.array() - cfg.risk_free;
                Matrix omega = std::move(cm.covariance.omega_total);
                if (override_forecast) override_forecast(s, mu, omega);
                w = tangency_weights(mu, omega);
            } catch (const Error& e) {
                ++rep.failed_origins;
                rep.events.push_back("origin " + std::to_string(s) + " keeps previous weights: " + e.what());
            }
            rep.weights_path.row(s) = w.transpose();
            rep.portfolio_returns(s) = w.dot(y.row(target).transpose());
            previous = w;
        }
    }
    rep.metrics = backtest_metrics(rep.portfolio_returns, rep.weights_path);
    return rep;
}

RiskShares risk_shares(const FilterOutput& output, const WeightMatrix& w1, const WeightMatrix& w2) {
    const auto periods = static_cast<Eigen::Index>(output.natural_path.size());
    const Eigen::Index n = w1.size();
    RiskShares rs{PanelMatrix(periods, n), PanelMatrix(periods, n), PanelMatrix(periods, n)};
    for (Eigen::Index t = 0; t < periods; ++t) {
        const NaturalParams& th = output.natural_path[static_cast<std::size_t>(t)];
        if (!th.sigma.allFinite()) {
            rs.sigma_y.row(t).setConstant(std::numeric_limits<double>::quiet_NaN());
            rs.sigma_eps.row(t).setConstant(std::numeric_limits<double>::quiet_NaN());
            rs.sys_share.row(t).setConstant(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const ConditionalMoments cm = conditional_moments(th, Matrix::Zero(n, th.beta.size()), w1, w2);
        const Vector sy = cm.covariance.omega_total.diagonal().cwiseSqrt();
        rs.sigma_y.row(t) = sy.transpose();
        rs.sigma_eps.row(t) = th.sigma.transpose();
        rs.sys_share.row(t) = ((sy - th.sigma).array() / sy.array()).transpose();
    }
    return rs;
}

ManagementFee management_fee(const Vector& returns_a, const Vector& returns_b, const FeeConfig& cfg) {
    cfg.validate();
    if (returns_a.size() != returns_b.size() || returns_a.size() == 0)
        fail(ErrorKind::DimensionMismatch, "fee needs two return streams of equal, positive length");
    if (!(1.0 + returns_a.minCoeff() > 0.0) || !(1.0 + returns_b.minCoeff() - cfg.search_high > 0.0))
        fail(ErrorKind::DomainViolation, "nonpositive wealth inside the fee search interval");
    const double u = cfg.upsilon;
    const double target = mean_utility(returns_a, 0.0, u);
    // g is strictly decreasing in theta
    auto g = [&](double theta) { return mean_utility(returns_b, theta, u) - target; };
    double lo = cfg.search_low, hi = cfg.search_high;
    double glo = g(lo), ghi = g(hi);
    if (glo == 0.0) return {lo, lo * kDays * 100.0};
    if (ghi == 0.0) return {hi, hi * kDays * 100.0};
    if (!(glo > 0.0 && ghi < 0.0)) fail(ErrorKind::NoRootInInterval, "the fee lies outside the search interval");
    // bisect until the bracket cannot shrink
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double gm = g(mid);
        if (gm == 0.0) {
            lo = hi = mid;
            break;
        }
        (gm > 0.0 ? lo : hi) = mid;
    }
    const double theta = 0.5 * (lo + hi);
    return {theta, theta * kDays * 100.0};
}

BootstrapResult block_bootstrap_pvalue(const Vector& returns_a, const Vector& returns_b, const FeeConfig& cfg,
                                       int block_len, int n_boot, std::uint64_t seed, Execution execution) {
    const Eigen::Index s = returns_a.size();
    if (returns_b.size() != s || s < 2) fail(ErrorKind::DimensionMismatch, "bootstrap needs paired streams");
    if (n_boot < 100) fail(ErrorKind::InvalidArgument, "use at least 100 bootstrap resamples");
    if (block_len == 0) block_len = static_cast<int>(std::lround(std::cbrt(static_cast<double>(s))));
    if (block_len < 1 || block_len > s) fail(ErrorKind::InvalidArgument, "block length must lie in [1, S]");

    BootstrapResult res;
    res.fee = management_fee(returns_a, returns_b, cfg).per_period;
    const auto reps = static_cast<std::size_t>(n_boot);
    std::vector<double> fees(reps, std::numeric_limits<double>::quiet_NaN());
    for_each_index(reps, execution, [&](std::size_t b) {
        Rng rng = make_rng(substream_seed(seed, b));
        std::uniform_int_distribution<Eigen::Index> start(0, s - block_len);
        Vector ra(s), rb(s);
        for (Eigen::Index filled = 0; filled < s;) {
            const Eigen::Index at = start(rng);
            for (Eigen::Index k = 0; k < block_len && filled < s; ++k, ++filled) {
                ra(filled) = returns_a(at + k);
                rb(filled) = returns_b(at + k);
            }
        }
        try {
            fees[b] = management_fee(ra, rb, cfg).per_period;
        } catch (const Error&) {
            // dropped, counted below
        }
    });
    int below = 0, above = 0;
    for (double f : fees) {
        if (std::isnan(f)) {
            ++res.dropped;
            continue;
        }
        ++res.used;
        below += f <= 0.0;
        above += f >= 0.0;
    }
    if (res.used == 0) fail(ErrorKind::NoRootInInterval, "every bootstrap resample failed");
    res.p_value = std::min(1.0, 2.0 * std::min(below, above) / static_cast<double>(res.used));
    return res;
}

}  // namespace dysarar
