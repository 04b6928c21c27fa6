#include "dysarar/filter.hpp"

#include "dysarar/errors.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace dysarar {

std::string_view to_string(Dynamics d) noexcept {
    switch (d) {
        case Dynamics::off: return "off";
        case Dynamics::constant: return "static";
        case Dynamics::dynamic: return "dynamic";
    }
    return "?";
}

namespace {

std::string family(const ModelSpec& s) {
    const bool rho = s.rho_mode != Dynamics::off;
    const bool lambda = s.lambda_mode != Dynamics::off;
    if (rho && lambda) return "SARAR";
    if (rho) return "SAR";
    if (lambda) return "SAE";
    return "OLS";
}

Dynamics parse_dynamics(const std::string& v) {
    if (v == "off") return Dynamics::off;
    if (v == "static" || v == "constant") return Dynamics::constant;
    if (v == "dynamic") return Dynamics::dynamic;
    fail(ErrorKind::ConfigParse, "unknown mode '" + v + "'");
}

}  // namespace

std::string ModelSpec::label() const {
    const std::string fam = family(*this);
    const bool has_beta = n_regressors > 0;
    auto all_blocks = [&](Dynamics want) {
        if (rho_mode != Dynamics::off && rho_mode != want) return false;
        if (lambda_mode != Dynamics::off && lambda_mode != want) return false;
        if (has_beta && beta_mode != want) return false;
        return true;
    };
    const std::string cross = sigma_cross == SigmaCross::homo ? "CHo" : "CHe";
    if (all_blocks(Dynamics::constant) && sigma_time == SigmaTime::constant) return "St" + fam + "-" + cross;

    std::string out = "Dy" + fam + "-";
    if (sigma_time == SigmaTime::dynamic)
        out += (sigma_dynamic == SigmaDynamic::shared ? "DHo." : "DHe.") + cross;
    else
        out += "THo." + cross;
    if (!all_blocks(Dynamics::dynamic)) {
        std::vector<std::string> extra;
        if (rho_mode == Dynamics::constant) extra.emplace_back("rho=static");
        if (lambda_mode == Dynamics::constant) extra.emplace_back("lambda=static");
        if (has_beta && beta_mode != Dynamics::dynamic) extra.push_back("beta=" + std::string(to_string(beta_mode)));
        out += "[";
        for (std::size_t i = 0; i < extra.size(); ++i) out += (i ? "," : "") + extra[i];
        out += "]";
    }
    return out;
}

ModelSpec ModelSpec::from_label(const std::string& label, Eigen::Index n_units, Eigen::Index n_regressors) {
    ModelSpec s;
    s.n_units = n_units;
    s.n_regressors = n_regressors;
    auto bad = [&]() -> ModelSpec { fail(ErrorKind::ConfigParse, "unrecognized model label '" + label + "'"); };

    std::string body = label;
    std::string overrides;
    if (const auto lb = body.find('['); lb != std::string::npos) {
        if (body.back() != ']') return bad();
        overrides = body.substr(lb + 1, body.size() - lb - 2);
        body = body.substr(0, lb);
    }
    if (body.size() < 2) return bad();
    const std::string prefix = body.substr(0, 2);
    const auto dash = body.find('-');
    if (dash == std::string::npos) return bad();
    const std::string fam = body.substr(2, dash - 2);
    const std::string suffix = body.substr(dash + 1);

    bool rho = false, lambda = false;
    if (fam == "SARAR") rho = lambda = true;
    else if (fam == "SAR") rho = true;
    else if (fam == "SAE" || fam == "SEM") lambda = true;
    else if (fam != "OLS") return bad();

    if (prefix == "St") {
        const Dynamics m = Dynamics::constant;
        s.rho_mode = rho ? m : Dynamics::off;
        s.lambda_mode = lambda ? m : Dynamics::off;
        s.beta_mode = m;
        s.sigma_time = SigmaTime::constant;
        if (suffix == "CHo") s.sigma_cross = SigmaCross::homo;
        else if (suffix == "CHe") s.sigma_cross = SigmaCross::hetero;
        else return bad();
    } else if (prefix == "Dy") {
        s.rho_mode = rho ? Dynamics::dynamic : Dynamics::off;
        s.lambda_mode = lambda ? Dynamics::dynamic : Dynamics::off;
        s.beta_mode = Dynamics::dynamic;
        const auto dot = suffix.find('.');
        if (dot == std::string::npos) return bad();
        const std::string dyn = suffix.substr(0, dot);
        const std::string cross = suffix.substr(dot + 1);
        if (dyn == "DHo") {
            s.sigma_time = SigmaTime::dynamic;
            s.sigma_dynamic = SigmaDynamic::shared;
        } else if (dyn == "DHe") {
            s.sigma_time = SigmaTime::dynamic;
            s.sigma_dynamic = SigmaDynamic::individual;
        } else if (dyn == "THo") {
            s.sigma_time = SigmaTime::constant;
        } else {
            return bad();
        }
        if (cross == "CHo") s.sigma_cross = SigmaCross::homo;
        else if (cross == "CHe") s.sigma_cross = SigmaCross::hetero;
        else return bad();
    } else {
        return bad();
    }

    std::size_t pos = 0;
    while (pos < overrides.size()) {
        auto comma = overrides.find(',', pos);
        if (comma == std::string::npos) comma = overrides.size();
        const std::string item = overrides.substr(pos, comma - pos);
        const auto eq = item.find('=');
        if (eq == std::string::npos) return bad();
        const std::string key = item.substr(0, eq);
        const Dynamics value = parse_dynamics(item.substr(eq + 1));
        if (key == "rho") s.rho_mode = value;
        else if (key == "lambda") s.lambda_mode = value;
        else if (key == "beta") s.beta_mode = value;
        else return bad();
        pos = comma + 1;
    }
    s.validate();
    return s;
}

void ModelSpec::validate() const {
    if (n_units < 1) fail(ErrorKind::InvalidArgument, "n_units must be positive");
    if (n_regressors < 0) fail(ErrorKind::InvalidArgument, "n_regressors must be nonnegative");
    bounds.validate();
    score.validate();
}

CoefficientVector CoefficientVector::zeros(const Layout& layout) {
    return {Vector::Zero(layout.size()), Vector::Zero(layout.size()), Vector::Zero(layout.size())};
}

std::vector<std::string> coefficient_names(const Layout& layout) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(3 * layout.size()));
    for (const char* prefix : {"kappa_", "f_", "r_"}) {
        names.push_back(std::string(prefix) + "rho");
        names.push_back(std::string(prefix) + "lambda");
        for (Eigen::Index i = 0; i < layout.n_regressors; ++i)
            names.push_back(std::string(prefix) + "beta" + std::to_string(i + 1));
        for (Eigen::Index j = 0; j < layout.n_units; ++j)
            names.push_back(std::string(prefix) + "sigma" + std::to_string(j + 1));
    }
    return names;
}

ParameterMask parameter_mask(const ModelSpec& spec) {
    const Layout layout = spec.layout();
    const auto d = static_cast<std::size_t>(layout.size());
    ParameterMask m;
    m.kappa.assign(d, -1);
    m.f.assign(d, -1);
    m.r.assign(d, -1);
    m.active = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(layout.size(), true);

    auto add = [&m](const std::string& name) {
        m.names.push_back(name);
        return m.n_free++;
    };
    auto block_mode = [&](Eigen::Index i) {
        if (i == Layout::rho()) return spec.rho_mode;
        if (i == Layout::lambda()) return spec.lambda_mode;
        return spec.beta_mode;
    };
    auto short_name = [&](Eigen::Index i) -> std::string {
        if (i == Layout::rho()) return "rho";
        if (i == Layout::lambda()) return "lambda";
        if (i < layout.sigma_begin()) return "beta" + std::to_string(i - 1);
        return "sigma" + std::to_string(i - layout.sigma_begin() + 1);
    };

    for (Eigen::Index i = 0; i < layout.sigma_begin(); ++i)
        if (block_mode(i) == Dynamics::off) m.active(i) = false;

    // kappa, then f, then r; each in coordinate order.
    for (int part = 0; part < 3; ++part) {
        auto& slot = part == 0 ? m.kappa : (part == 1 ? m.f : m.r);
        const std::string prefix = part == 0 ? "kappa_" : (part == 1 ? "f_" : "r_");
        for (Eigen::Index i = 0; i < layout.sigma_begin(); ++i) {
            const Dynamics mode = block_mode(i);
            const bool free = part == 0 ? mode != Dynamics::off : mode == Dynamics::dynamic;
            if (free) slot[static_cast<std::size_t>(i)] = add(prefix + short_name(i));
        }
        bool free = part == 0 || spec.sigma_time == SigmaTime::dynamic;
        if (!free) continue;
        const bool shared = part == 0 ? spec.sigma_cross == SigmaCross::homo
                                      : spec.sigma_dynamic == SigmaDynamic::shared;
        int shared_index = -1;
        for (Eigen::Index j = 0; j < layout.n_units; ++j) {
            const auto pos = static_cast<std::size_t>(layout.sigma(j));
            if (shared) {
                if (shared_index < 0) shared_index = add(prefix + "sigma");
                slot[pos] = shared_index;
            } else {
                slot[pos] = add(prefix + short_name(layout.sigma(j)));
            }
        }
    }
    return m;
}

TildeParams update_step(const TildeParams& tilde, const Vector& scaled_score, const CoefficientVector& coeffs) {
    if (tilde.size() != coeffs.size() || scaled_score.size() != coeffs.size())
        fail(ErrorKind::DimensionMismatch, "update_step: dimensions disagree");
    TildeParams next;
    next.values = (1.0 - coeffs.r.array()) * coeffs.kappa.array() + coeffs.f.array() * scaled_score.array() +
                  coeffs.r.array() * tilde.values.array();
    return next;
}

FilterData::FilterData(PanelMatrix y, RegressorPanel x, const WeightMatrix& w1, const WeightMatrix& w2)
    : y_(std::move(y)), x_(std::move(x)), w1_(&w1), w2_(&w2) {
    if (w1.size() != w2.size() || y_.cols() != w1.size())
        fail(ErrorKind::DimensionMismatch, "panel width and weight matrices disagree");
    if (static_cast<Eigen::Index>(x_.size()) != y_.rows())
        fail(ErrorKind::DimensionMismatch, "regressor panel length differs from y");
    for (const auto& slice : x_)
        if (slice.rows() != y_.cols() || slice.cols() != x_.front().cols())
            fail(ErrorKind::DimensionMismatch, "regressor slices must all be N x K");
    w1y_ = y_ * w1.weights().transpose();
    w2w1y_ = w1y_ * w2.weights().transpose();
}

FilterData FilterData::window(Eigen::Index begin, Eigen::Index length) const {
    if (begin < 0 || length < 1 || begin + length > periods())
        fail(ErrorKind::DimensionMismatch, "window outside the panel");
    FilterData out = *this;
    out.y_ = y_.middleRows(begin, length);
    out.w1y_ = w1y_.middleRows(begin, length);
    out.w2w1y_ = w2w1y_.middleRows(begin, length);
    out.x_.assign(x_.begin() + begin, x_.begin() + begin + length);
    return out;
}

RegressorPanel empty_regressors(Eigen::Index periods, Eigen::Index units) {
    return RegressorPanel(static_cast<std::size_t>(periods), Matrix(units, 0));
}

NaturalParams spec_natural(const Eigen::Ref<const Vector>& tilde, const ModelSpec& spec) {
    NaturalParams theta;
    theta.beta.resize(spec.n_regressors);
    theta.sigma.resize(spec.n_units);
    map_params_into(tilde, spec.bounds, theta);
    if (spec.rho_mode == Dynamics::off) theta.rho = 0.0;
    if (spec.lambda_mode == Dynamics::off) theta.lambda = 0.0;
    if (spec.beta_mode == Dynamics::off) theta.beta.setZero();
    return theta;
}

namespace {

void check_inputs(const FilterData& data, const CoefficientVector& coeffs, const ModelSpec& spec) {
    spec.validate();
    const Layout layout = spec.layout();
    if (data.units() != spec.n_units || data.regressors() != spec.n_regressors)
        fail(ErrorKind::DimensionMismatch, "panel shape differs from the model spec");
    if (coeffs.kappa.size() != layout.size() || coeffs.f.size() != layout.size() || coeffs.r.size() != layout.size())
        fail(ErrorKind::DimensionMismatch, "coefficient vector length differs from N+K+2");
    if (data.periods() < 1) fail(ErrorKind::DimensionMismatch, "filter needs T >= 1");
}

// Shared recursion. `out` may be null when only the total is wanted.
double run_filter(const FilterData& data, const CoefficientVector& coeffs, const ModelSpec& spec,
                  const FilterOptions& options, FilterOutput* out) {
    check_inputs(data, coeffs, spec);
    const Layout layout = spec.layout();
    const Eigen::Index d = layout.size();
    const Eigen::Index periods = data.periods();
    const bool scaled = spec.score.gamma != 0.0;
    const Eigen::Array<bool, Eigen::Dynamic, 1> active = parameter_mask(spec).active;
    const bool any_dynamic = (coeffs.f.array() != 0.0).any();

    SliceKernel kernel(data.w1(), data.w2(), options.kernel);
    NaturalParams theta;
    theta.beta.resize(layout.n_regressors);
    theta.sigma.resize(layout.n_units);

    Vector tilde = coeffs.kappa;
    for (Eigen::Index i = 0; i < d; ++i)
        if (!active(i)) tilde(i) = 0.0;
    Vector grad(d), jac(d), s(d);

    if (out != nullptr) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        out->layout = layout;
        out->tilde_path = PanelMatrix::Constant(periods, d, nan);
        out->scores = PanelMatrix::Constant(periods, d, nan);
        out->residual_path = PanelMatrix::Constant(periods, layout.n_units, nan);
        out->llk_contributions = Vector::Constant(periods, nan);
        out->natural_path.clear();
        out->natural_path.reserve(static_cast<std::size_t>(periods));
        out->breakdown = false;
        out->breakdown_t = -1;
        out->breakdown_reason.clear();
    }

    auto breakdown = [&](Eigen::Index t, const std::string& why) {
        if (out != nullptr) {
            out->breakdown = true;
            out->breakdown_t = t;
            out->breakdown_reason = why;
            out->total_llk = -std::numeric_limits<double>::infinity();
            out->next_tilde = Vector::Constant(d, std::numeric_limits<double>::quiet_NaN());
        }
        return -std::numeric_limits<double>::infinity();
    };

    double total = 0.0;
    for (Eigen::Index t = 0; t < periods; ++t) {
        if (!tilde.allFinite()) return breakdown(t, "non-finite parameter");
        map_params_into(tilde, spec.bounds, theta);
        if (spec.rho_mode == Dynamics::off) theta.rho = 0.0;
        if (spec.lambda_mode == Dynamics::off) theta.lambda = 0.0;
        if (spec.beta_mode == Dynamics::off) theta.beta.setZero();

        const Matrix& x = data.x()[static_cast<std::size_t>(t)];
        double llk = 0.0;
        const bool want_score = any_dynamic || out != nullptr;
        try {
            llk = kernel.evaluate(data.y().row(t).transpose(), data.w1y().row(t).transpose(),
                                  data.w2w1y().row(t).transpose(), x, theta, want_score ? &grad : nullptr);
        } catch (const Error& e) {
            return breakdown(t, e.what());
        }
        if (!std::isfinite(llk)) return breakdown(t, "non-finite likelihood");
        total += llk;

        if (want_score) {
            // Jacobian diagonal, inline for the hot loop.
            const double sr = bounded_logistic(tilde(0), 0.0, 1.0);
            const double sl = bounded_logistic(tilde(1), 0.0, 1.0);
            jac(0) = (spec.bounds.rho_high - spec.bounds.rho_low) * sr * (1.0 - sr);
            jac(1) = (spec.bounds.lambda_high - spec.bounds.lambda_low) * sl * (1.0 - sl);
            jac.segment(2, layout.n_regressors).setOnes();
            jac.tail(layout.n_units) = 2.0 * theta.sigma.array().square();
            s = jac.cwiseProduct(grad);
            if (scaled) {
                try {
                    const Matrix info = fisher_information_mc(theta, x, data.w1(), data.w2(), spec.score.fim_draws,
                                                              substream_seed(spec.score.fim_seed,
                                                                             static_cast<std::uint64_t>(t)));
                    s = scale_tilde_score(s, info, jac, spec.score.gamma, active);
                } catch (const Error& e) {
                    return breakdown(t, e.what());
                }
            }
            for (Eigen::Index i = 0; i < d; ++i)
                if (!active(i)) s(i) = 0.0;
            clip_score(s, spec.score.score_clip);
            if (!s.allFinite()) return breakdown(t, "non-finite score");
        } else {
            s.setZero();
        }

        if (out != nullptr) {
            out->tilde_path.row(t) = tilde.transpose();
            out->natural_path.push_back(theta);
            out->scores.row(t) = s.transpose();
            out->llk_contributions(t) = llk;
            out->residual_path.row(t) = kernel.nu().transpose();
        }

        tilde = (1.0 - coeffs.r.array()) * coeffs.kappa.array() + coeffs.f.array() * s.array() +
                coeffs.r.array() * tilde.array();
        for (Eigen::Index i = 0; i < d; ++i)
            if (!active(i)) tilde(i) = 0.0;
    }
    if (out != nullptr) {
        out->total_llk = total;
        out->next_tilde = tilde;
    }
    return total;
}

}  // namespace

FilterOutput filter_pass(const FilterData& data, const CoefficientVector& coeffs, const ModelSpec& spec,
                         const FilterOptions& options) {
    FilterOutput out;
    run_filter(data, coeffs, spec, options, &out);
    return out;
}

FilterOutput filter_pass(const PanelMatrix& y, const RegressorPanel& x, const CoefficientVector& coeffs,
                         const ModelSpec& spec, const WeightMatrix& w1, const WeightMatrix& w2,
                         const FilterOptions& options) {
    return filter_pass(FilterData(y, x, w1, w2), coeffs, spec, options);
}

double filter_log_likelihood(const FilterData& data, const CoefficientVector& coeffs, const ModelSpec& spec,
                             const FilterOptions& options) {
    return run_filter(data, coeffs, spec, options, nullptr);
}

Forecast forecast_one_step(const FilterOutput& output, const ModelSpec& spec, const Matrix& x_next,
                           const WeightMatrix& w1, const WeightMatrix& w2) {
    if (output.breakdown) fail(ErrorKind::NumericalBreakdown, "cannot forecast from a broken-down filter");
    if (output.next_tilde.size() != spec.layout().size())
        fail(ErrorKind::DimensionMismatch, "filter output and spec disagree");
    Forecast f;
    f.theta = spec_natural(output.next_tilde, spec);
    ConditionalMoments m = conditional_moments(f.theta, x_next, w1, w2);
    f.mu = std::move(m.mean);
    f.omega = std::move(m.covariance);
    return f;
}

PanelMatrix simulate_path(const std::vector<NaturalParams>& theta_path, const RegressorPanel& x,
                          const WeightMatrix& w1, const WeightMatrix& w2, std::uint64_t seed) {
    if (theta_path.size() != x.size()) fail(ErrorKind::DimensionMismatch, "theta path and regressors differ in length");
    const Eigen::Index n = w1.size();
    const auto periods = static_cast<Eigen::Index>(theta_path.size());
    PanelMatrix y(periods, n);
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector eps(n);
    for (Eigen::Index t = 0; t < periods; ++t) {
        const NaturalParams& theta = theta_path[static_cast<std::size_t>(t)];
        const Matrix& xt = x[static_cast<std::size_t>(t)];
        if (theta.sigma.size() != n || xt.rows() != n || xt.cols() != theta.beta.size())
            fail(ErrorKind::DimensionMismatch, "simulate_path: theta and X disagree in shape");
        const SpatialOperators ops = build_operators(theta.rho, theta.lambda, w1, w2);
        for (Eigen::Index j = 0; j < n; ++j) eps(j) = theta.sigma(j) * normal(rng);
        Vector rhs = ops.lu_b.solve(eps);
        if (xt.cols() > 0) rhs.noalias() += xt * theta.beta;
        y.row(t) = ops.lu_a.solve(rhs).transpose();
    }
    return y;
}

SimulatedPanel simulate_model(const CoefficientVector& coeffs, const ModelSpec& spec, const RegressorPanel& x,
                              const WeightMatrix& w1, const WeightMatrix& w2, std::uint64_t seed) {
    spec.validate();
    const Layout layout = spec.layout();
    const Eigen::Index d = layout.size();
    const auto periods = static_cast<Eigen::Index>(x.size());
    if (coeffs.size() != d) fail(ErrorKind::DimensionMismatch, "coefficient vector length differs from N+K+2");
    const Eigen::Array<bool, Eigen::Dynamic, 1> active = parameter_mask(spec).active;

    SimulatedPanel out;
    out.y.resize(periods, layout.n_units);
    out.theta_path.reserve(static_cast<std::size_t>(periods));

    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    SliceKernel kernel(w1, w2, KernelKind::dense);
    Vector tilde = coeffs.kappa;
    for (Eigen::Index i = 0; i < d; ++i)
        if (!active(i)) tilde(i) = 0.0;
    Vector eps(layout.n_units), grad;

    for (Eigen::Index t = 0; t < periods; ++t) {
        const NaturalParams theta = spec_natural(tilde, spec);
        const Matrix& xt = x[static_cast<std::size_t>(t)];
        const SpatialOperators ops = build_operators(theta.rho, theta.lambda, w1, w2);
        for (Eigen::Index j = 0; j < layout.n_units; ++j) eps(j) = theta.sigma(j) * normal(rng);
        Vector rhs = ops.lu_b.solve(eps);
        if (xt.cols() > 0) rhs.noalias() += xt * theta.beta;
        const Vector y = ops.lu_a.solve(rhs);
        out.y.row(t) = y.transpose();
        out.theta_path.push_back(theta);

        kernel.evaluate(y, y, y, xt, theta, &grad);
        Vector s = jacobian_diagonal(TildeParams{tilde}, spec.bounds, layout).cwiseProduct(grad);
        if (spec.score.gamma != 0.0) {
            const Matrix info = fisher_information_mc(theta, xt, w1, w2, spec.score.fim_draws,
                                                      substream_seed(spec.score.fim_seed, static_cast<std::uint64_t>(t)));
            s = scale_tilde_score(s, info, jacobian_diagonal(TildeParams{tilde}, spec.bounds, layout),
                                  spec.score.gamma, active);
        }
        for (Eigen::Index i = 0; i < d; ++i)
            if (!active(i)) s(i) = 0.0;
        clip_score(s, spec.score.score_clip);
        tilde = update_step(TildeParams{tilde}, s, coeffs).values;
        for (Eigen::Index i = 0; i < d; ++i)
            if (!active(i)) tilde(i) = 0.0;
        if (!tilde.allFinite()) fail(ErrorKind::NumericalBreakdown, "simulated parameter path diverged");
    }
    return out;
}

}  // namespace dysarar
