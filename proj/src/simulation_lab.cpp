#include "dysarar/simulation_lab.hpp"

#include "dysarar/errors.hpp"
#include "dysarar/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace dysarar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream ids keep every random component independent of the others.
enum Stream : std::uint64_t { latent = 1, regressors = 2, weights = 3, panel = 4 };

void check_failure_rate(int failures, int total, double limit, const std::string& what) {
    if (total > 0 && static_cast<double>(failures) / total > limit) {
        std::ostringstream os;
        os << what << ": " << failures << " of " << total << " replications failed";
        fail(ErrorKind::HarnessFailureRate, os.str());
    }
}

std::vector<std::string> natural_names(const Layout& layout) {
    std::vector<std::string> out{"rho", "lambda"};
    for (Eigen::Index i = 0; i < layout.n_regressors; ++i) out.push_back("beta" + std::to_string(i + 1));
    for (Eigen::Index j = 0; j < layout.n_units; ++j) out.push_back("sigma" + std::to_string(j + 1));
    return out;
}

Vector natural_row(const NaturalParams& th) {
    Vector v(th.beta.size() + th.sigma.size() + 2);
    v << th.rho, th.lambda, th.beta, th.sigma;
    return v;
}

// Type 7 quantile of a sorted sample.
double quantile(const std::vector<double>& sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

SSararConfig SSararConfig::paper_defaults() {
    SSararConfig c;
    c.mu.resize(8);
    c.mu << 0.010, -0.004, 1.000, 2.000, 0.986, 0.944, 0.289, -0.421;
    c.v.resize(4, 4);
    c.v << 1.0, 0.3, 0.4, 0.1,
           0.3, 1.0, 0.4, 0.2,
           0.4, 0.4, 1.0, 0.5,
           0.1, 0.2, 0.5, 1.0;
    return c;
}

void SSararConfig::validate() const {
    if (n_units < 2) fail(ErrorKind::InvalidArgument, "S-SARAR needs N >= 2");
    if (n_regressors < 1) fail(ErrorKind::InvalidArgument, "S-SARAR needs K >= 1 (the constant)");
    if (mu.size() != n_units + n_regressors + 2) fail(ErrorKind::DimensionMismatch, "mu must have N+K+2 entries");
    if (!(phi >= 0.0 && phi < 1.0)) fail(ErrorKind::InvalidArgument, "phi must lie in [0, 1)");
    if (!(u >= 0.0)) fail(ErrorKind::InvalidArgument, "u must be nonnegative");
    if (v.rows() != n_units || v.cols() != n_units) fail(ErrorKind::DimensionMismatch, "V must be N x N");
    if (t_len < 1 || n_replications < 1) fail(ErrorKind::InvalidArgument, "t_len and n_replications must be positive");
    if (!(w_density > 0.0 && w_density <= 1.0)) fail(ErrorKind::InvalidArgument, "density must lie in (0, 1]");
}

PanelMatrix simulate_ssarar_params(const SSararConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Eigen::Index d = cfg.mu.size();
    PanelMatrix path(cfg.t_len, d);
    Rng rng = make_rng(substream_seed(seed, Stream::latent));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(cfg.u);
    Vector prev = cfg.mu;
    for (Eigen::Index t = 0; t < cfg.t_len; ++t) {
        for (Eigen::Index i = 0; i < d; ++i)
            prev(i) = (1.0 - cfg.phi) * cfg.mu(i) + cfg.phi * prev(i) + sd * normal(rng);
        path.row(t) = prev.transpose();
    }
    return path;
}

RegressorPanel gen_regressors(const SSararConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Eigen::LLT<Matrix> llt(cfg.v);
    if (llt.info() != Eigen::Success || !((cfg.v - cfg.v.transpose()).cwiseAbs().maxCoeff() <= 1e-12))
        fail(ErrorKind::NonPDCovariance, "V must be symmetric positive definite");
    const Matrix chol = llt.matrixL();
    Rng rng = make_rng(substream_seed(seed, Stream::regressors));
    std::normal_distribution<double> normal(0.0, 1.0);
    RegressorPanel x;
    x.reserve(static_cast<std::size_t>(cfg.t_len));
    Vector z(cfg.n_units);
    for (Eigen::Index t = 0; t < cfg.t_len; ++t) {
        Matrix xt(cfg.n_units, cfg.n_regressors);
        xt.col(0).setOnes();
        for (Eigen::Index k = 1; k < cfg.n_regressors; ++k) {
            for (Eigen::Index j = 0; j < cfg.n_units; ++j) z(j) = normal(rng);
            xt.col(k) = chol * z;
        }
        x.push_back(std::move(xt));
    }
    return x;
}

WeightMatrix random_weight_matrix(Eigen::Index n, double density, std::uint64_t seed) {
    if (n < 2) fail(ErrorKind::InvalidArgument, "random_weight_matrix needs n >= 2");
    if (!(density > 0.0 && density <= 1.0)) fail(ErrorKind::InvalidArgument, "density must lie in (0, 1]");
    Rng rng = make_rng(substream_seed(seed, Stream::weights));
    std::bernoulli_distribution keep(density);
    std::uniform_real_distribution<double> weight(0.0, 1.0);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Matrix m = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j)
                if (keep(rng)) m(i, j) = m(j, i) = 1.0 - weight(rng);  // (0, 1]
        if ((m.rowwise().sum().array() > 0.0).all()) return row_normalize(m);
    }
    fail(ErrorKind::RetryExhausted, "no matrix without empty rows after 1000 draws");
}

FilteringReport filtering_experiment(const SSararConfig& cfg, const std::vector<double>& phis, std::uint64_t seed,
                                     const HarnessOptions& options, double reference_phi) {
    cfg.validate();
    if (phis.empty()) fail(ErrorKind::InvalidArgument, "filtering_experiment needs at least one phi");
    const Layout layout{cfg.n_units, cfg.n_regressors};
    const Eigen::Index d = layout.size();
    const ModelSpec spec = ModelSpec::from_label("DySARAR-DHe.CHe", cfg.n_units, cfg.n_regressors);
    const WeightMatrix w = random_weight_matrix(cfg.n_units, cfg.w_density, seed);
    const RegressorPanel x = gen_regressors(cfg, seed);
    const std::vector<std::string> names = natural_names(layout);

    FilteringReport report;
    report.reference_phi = reference_phi;
    for (std::size_t p = 0; p < phis.size(); ++p) {
        SSararConfig local = cfg;
        local.phi = phis[p];
        const PanelMatrix latent = simulate_ssarar_params(local, substream_seed(seed, p));
        std::vector<NaturalParams> truth;
        truth.reserve(static_cast<std::size_t>(cfg.t_len));
        PanelMatrix truth_natural(cfg.t_len, d);
        for (Eigen::Index t = 0; t < cfg.t_len; ++t) {
            truth.push_back(map_params(TildeParams{latent.row(t).transpose()}, spec.bounds, layout));
            truth_natural.row(t) = natural_row(truth.back()).transpose();
        }

        const auto reps = static_cast<std::size_t>(cfg.n_replications);
        std::vector<PanelMatrix> filtered(reps);
        std::vector<bool> ok(reps, false);
        for_each_index(reps, options.execution, [&](std::size_t b) {
            const PanelMatrix y = simulate_path(truth, x, w, w, substream_seed(seed, p, Stream::panel + 16 * b));
            try {
                FitOptions fo = options.fit;
                fo.execution = Execution::serial;
                fo.compute_std_errors = false;
                const FilterData data(y, x, w, w);
                const FitResult fit = fit_mle(data, spec, fo);
                const FilterOutput out = filter_pass(data, fit.coeffs, spec, fo.filter);
                if (out.breakdown) return;
                PanelMatrix nat(cfg.t_len, d);
                for (Eigen::Index t = 0; t < cfg.t_len; ++t)
                    nat.row(t) = natural_row(out.natural_path[static_cast<std::size_t>(t)]).transpose();
                filtered[b] = std::move(nat);
                ok[b] = true;
            } catch (const Error&) {
                // counted below
            }
        });

        FilteringRow row;
        row.phi = phis[p];
        row.parameters = names;
        row.replications = cfg.n_replications;
        row.failures = static_cast<int>(std::count(ok.begin(), ok.end(), false));
        check_failure_rate(row.failures, row.replications, options.max_failure_rate, "filtering experiment");

        row.mse = Vector::Zero(d);
        std::vector<double> sample;
        for (Eigen::Index i = 0; i < d; ++i) {
            FanChart fan;
            fan.parameter = names[static_cast<std::size_t>(i)];
            fan.bands.resize(cfg.t_len, 4);
            int covered = 0;
            for (Eigen::Index t = 0; t < cfg.t_len; ++t) {
                sample.clear();
                for (std::size_t b = 0; b < reps; ++b)
                    if (ok[b]) sample.push_back(filtered[b](t, i));
                std::sort(sample.begin(), sample.end());
                const double q10 = quantile(sample, 0.1), q50 = quantile(sample, 0.5), q90 = quantile(sample, 0.9);
                const double truth_ti = truth_natural(t, i);
                fan.bands.row(t) << q10, q50, q90, truth_ti;
                row.mse(i) += (q50 - truth_ti) * (q50 - truth_ti);
                if (q10 <= truth_ti && truth_ti <= q90) ++covered;
            }
            row.mse(i) /= static_cast<double>(cfg.t_len);
            fan.coverage = static_cast<double>(covered) / static_cast<double>(cfg.t_len);
            row.fans.push_back(std::move(fan));
        }
        report.rows.push_back(std::move(row));
    }

    const auto ref = std::find_if(report.rows.begin(), report.rows.end(),
                                  [&](const FilteringRow& r) { return r.phi == reference_phi; });
    for (auto& row : report.rows)
        row.relative_mse = ref == report.rows.end() ? Vector::Constant(d, kNaN)
                                                    : Vector(row.mse.cwiseQuotient(ref->mse));
    return report;
}

FiniteSampleConfig FiniteSampleConfig::table2() {
    FiniteSampleConfig c;
    const Layout layout{6, 0};
    c.truth = CoefficientVector::zeros(layout);
    c.truth.kappa << 0.9, 0.2, -0.08, -0.3, 0.4, 0.2, 0.1, 0.15;
    c.truth.f << 0.03, 0.04, 0.08, 0.09, 0.07, 0.05, 0.03, 0.06;
    c.truth.r << 0.984, 0.986, 0.982, 0.976, 0.988, 0.990, 0.978, 0.980;
    return c;
}

ModelSpec FiniteSampleConfig::spec() const { return ModelSpec::from_label("DySARAR-DHe.CHe", n_units, 0); }

void FiniteSampleConfig::validate() const {
    if (n_units < 2) fail(ErrorKind::InvalidArgument, "finite-sample experiment needs N >= 2");
    if (t_lens.empty() || n_replications < 1) fail(ErrorKind::InvalidArgument, "need T values and replications");
    (void)pack_free(truth, spec());  // MaskMismatch when the truth breaks the spec
}

std::vector<FiniteSampleTable> finite_sample_experiment(const FiniteSampleConfig& cfg, const WeightMatrix& w1,
                                                        const WeightMatrix& w2, const HarnessOptions& options) {
    cfg.validate();
    if (w1.size() != cfg.n_units || w2.size() != cfg.n_units)
        fail(ErrorKind::DimensionMismatch, "weight matrices must be N x N");
    if (w1.weights() == w2.weights())
        fail(ErrorKind::InvalidArgument, "W1 and W2 must differ when X = 0 (rho and lambda are not identified)");
    const ModelSpec spec = cfg.spec();
    const ParameterMask mask = parameter_mask(spec);
    const Vector truth = free_values(cfg.truth, spec);

    std::vector<FiniteSampleTable> tables;
    for (std::size_t ti = 0; ti < cfg.t_lens.size(); ++ti) {
        const Eigen::Index t_len = cfg.t_lens[ti];
        const RegressorPanel x = empty_regressors(t_len, cfg.n_units);
        const auto reps = static_cast<std::size_t>(cfg.n_replications);
        std::vector<Vector> est(reps);
        std::vector<bool> ok(reps, false);
        for_each_index(reps, options.execution, [&](std::size_t m) {
            try {
                const SimulatedPanel sim = simulate_model(cfg.truth, spec, x, w1, w2,
                                                          substream_seed(cfg.seed, static_cast<std::uint64_t>(t_len), m));
                FitOptions fo = options.fit;
                fo.execution = Execution::serial;
                fo.compute_std_errors = false;
                const FitResult fit = fit_mle(FilterData(sim.y, x, w1, w2), spec, fo);
                est[m] = fit.estimates;
                ok[m] = true;
            } catch (const Error&) {
                // counted below
            }
        });

        FiniteSampleTable table;
        table.t_len = t_len;
        table.replications = cfg.n_replications;
        table.failures = static_cast<int>(std::count(ok.begin(), ok.end(), false));
        check_failure_rate(table.failures, table.replications, options.max_failure_rate, "finite-sample experiment");
        const int good = table.replications - table.failures;
        table.estimates.resize(good, mask.n_free);
        for (std::size_t m = 0, row = 0; m < reps; ++m)
            if (ok[m]) table.estimates.row(static_cast<Eigen::Index>(row++)) = est[m].transpose();

        for (int k = 0; k < mask.n_free; ++k) {
            CoefficientSummary s;
            s.name = mask.names[static_cast<std::size_t>(k)];
            s.truth = truth(k);
            const auto col = table.estimates.col(k).array();
            s.mean = col.mean();
            s.sd = good > 1 ? std::sqrt((col - s.mean).square().sum() / (good - 1)) : kNaN;
            s.mse = (col - s.truth).square().mean();
            table.rows.push_back(s);
        }
        tables.push_back(std::move(table));
    }
    return tables;
}

}  // namespace dysarar
