#include "dysarar/estimation.hpp"

#include "dysarar/errors.hpp"
#include "dysarar/parallel.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dysarar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Part { kappa, f, r };

// For each free index: which part it belongs to and the first coordinate
// that reads it.
struct FreeSlot {
    Part part;
    std::size_t coord;
};

std::vector<FreeSlot> free_slots(const ParameterMask& m) {
    std::vector<FreeSlot> slots(static_cast<std::size_t>(m.n_free), FreeSlot{Part::kappa, 0});
    std::vector<bool> seen(slots.size(), false);
    auto scan = [&](const std::vector<int>& v, Part p) {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] >= 0 && !seen[static_cast<std::size_t>(v[i])]) {
                seen[static_cast<std::size_t>(v[i])] = true;
                slots[static_cast<std::size_t>(v[i])] = {p, i};
            }
    };
    scan(m.kappa, Part::kappa);
    scan(m.f, Part::f);
    scan(m.r, Part::r);
    return slots;
}

[[noreturn]] void mismatch(const std::string& what) { fail(ErrorKind::MaskMismatch, what); }

int rank(Dynamics d) { return static_cast<int>(d); }

}  // namespace

Vector pack_free(const CoefficientVector& coeffs, const ModelSpec& spec) {
    const ParameterMask m = parameter_mask(spec);
    const Eigen::Index d = spec.layout().size();
    if (coeffs.kappa.size() != d || coeffs.f.size() != d || coeffs.r.size() != d)
        mismatch("coefficient vectors must have N+K+2 entries");
    Vector out(m.n_free);
    std::vector<bool> set(static_cast<std::size_t>(m.n_free), false);
    auto take = [&](const std::vector<int>& idx, const Vector& v, Part p, const char* name) {
        for (Eigen::Index i = 0; i < d; ++i) {
            const int k = idx[static_cast<std::size_t>(i)];
            const double value = v(i);
            if (k < 0) {
                if (value != 0.0) mismatch(std::string(name) + " entry " + std::to_string(i) + " is fixed at 0");
                continue;
            }
            double z = value;
            if (p == Part::r) {
                if (!(std::abs(value) < 1.0)) mismatch("r entries must lie in (-1, 1)");
                z = 2.0 * std::atanh(value);
            }
            const auto ku = static_cast<std::size_t>(k);
            if (set[ku] && out(k) != z) mismatch(std::string(name) + " entries of a shared group differ");
            out(k) = z;
            set[ku] = true;
        }
    };
    take(m.kappa, coeffs.kappa, Part::kappa, "kappa");
    take(m.f, coeffs.f, Part::f, "f");
    take(m.r, coeffs.r, Part::r, "r");
    return out;
}

CoefficientVector unpack_free(const Vector& free, const ModelSpec& spec) {
    const ParameterMask m = parameter_mask(spec);
    if (free.size() != m.n_free) mismatch("free vector length differs from the spec's parameter count");
    const Layout layout = spec.layout();
    CoefficientVector c = CoefficientVector::zeros(layout);
    for (Eigen::Index i = 0; i < layout.size(); ++i) {
        const auto iu = static_cast<std::size_t>(i);
        if (m.kappa[iu] >= 0) c.kappa(i) = free(m.kappa[iu]);
        if (m.f[iu] >= 0) c.f(i) = free(m.f[iu]);
        if (m.r[iu] >= 0) c.r(i) = std::tanh(0.5 * free(m.r[iu]));
    }
    return c;
}

Vector free_values(const CoefficientVector& coeffs, const ModelSpec& spec) {
    const ParameterMask m = parameter_mask(spec);
    const std::vector<FreeSlot> slots = free_slots(m);
    Vector out(m.n_free);
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(slots[k].coord);
        out(static_cast<Eigen::Index>(k)) =
            slots[k].part == Part::kappa ? coeffs.kappa(i) : (slots[k].part == Part::f ? coeffs.f(i) : coeffs.r(i));
    }
    return out;
}

bool nests(const ModelSpec& inner, const ModelSpec& outer) {
    if (inner.n_units != outer.n_units || inner.n_regressors != outer.n_regressors) return false;
    if (rank(inner.rho_mode) > rank(outer.rho_mode)) return false;
    if (rank(inner.lambda_mode) > rank(outer.lambda_mode)) return false;
    if (inner.n_regressors > 0 && rank(inner.beta_mode) > rank(outer.beta_mode)) return false;
    if (inner.sigma_time == SigmaTime::dynamic && outer.sigma_time == SigmaTime::constant) return false;
    if (inner.sigma_cross == SigmaCross::hetero && outer.sigma_cross == SigmaCross::homo) return false;
    if (inner.sigma_time == SigmaTime::dynamic && inner.sigma_dynamic == SigmaDynamic::individual &&
        outer.sigma_dynamic == SigmaDynamic::shared)
        return false;
    if (inner.bounds.rho_low != outer.bounds.rho_low || inner.bounds.rho_high != outer.bounds.rho_high ||
        inner.bounds.lambda_low != outer.bounds.lambda_low || inner.bounds.lambda_high != outer.bounds.lambda_high)
        return false;
    return true;
}

CoefficientVector embed(const CoefficientVector& coeffs, const ModelSpec& inner, const ModelSpec& outer) {
    if (!nests(inner, outer)) mismatch(inner.label() + " is not nested in " + outer.label());
    CoefficientVector c = coeffs;
    // a block switched on at its zero point: same likelihood as the pinned 0
    if (inner.rho_mode == Dynamics::off && outer.rho_mode != Dynamics::off)
        c.kappa(Layout::rho()) = bounded_logit(0.0, outer.bounds.rho_low, outer.bounds.rho_high);
    if (inner.lambda_mode == Dynamics::off && outer.lambda_mode != Dynamics::off)
        c.kappa(Layout::lambda()) = bounded_logit(0.0, outer.bounds.lambda_low, outer.bounds.lambda_high);
    // anything the outer spec fixes must be zero; pack_free checks the rest
    const ParameterMask m = parameter_mask(outer);
    for (Eigen::Index i = 0; i < c.size(); ++i) {
        const auto iu = static_cast<std::size_t>(i);
        if (m.kappa[iu] < 0) c.kappa(i) = 0.0;
        if (m.f[iu] < 0) c.f(i) = 0.0;
        if (m.r[iu] < 0) c.r(i) = 0.0;
    }
    return c;
}

namespace {

CoefficientVector default_start(const FilterData& data, const ModelSpec& spec, double f0, double r0,
                                double spatial) {
    const Layout layout = spec.layout();
    const ParameterMask m = parameter_mask(spec);
    CoefficientVector c = CoefficientVector::zeros(layout);
    const Eigen::Index periods = data.periods();
    const Eigen::Index n = layout.n_units;
    const Eigen::Index k = layout.n_regressors;

    c.kappa(Layout::rho()) = bounded_logit(spatial, spec.bounds.rho_low, spec.bounds.rho_high);
    c.kappa(Layout::lambda()) = bounded_logit(spatial, spec.bounds.lambda_low, spec.bounds.lambda_high);

    // pooled least squares for beta
    if (k > 0) {
        Matrix xtx = Matrix::Zero(k, k);
        Vector xty = Vector::Zero(k);
        for (Eigen::Index t = 0; t < periods; ++t) {
            const Matrix& xt = data.x()[static_cast<std::size_t>(t)];
            xtx.noalias() += xt.transpose() * xt;
            xty.noalias() += xt.transpose() * data.y().row(t).transpose();
        }
        const Eigen::LDLT<Matrix> ldlt(xtx);
        Vector b = ldlt.solve(xty);
        if (!b.allFinite()) b.setZero();
        c.kappa.segment(2, k) = b;
    }

    // log sd of the innovations implied by the starting rho, lambda and beta. The raw sd of y
    // overstates sigma by the spatial multiplier, and that start can settle in a high-sigma basin.
    const double rho0 = spec.rho_mode == Dynamics::off ? 0.0 : spatial;
    const double lambda0 = spec.lambda_mode == Dynamics::off ? 0.0 : spatial;
    PanelMatrix eps(periods, n);
    for (Eigen::Index t = 0; t < periods; ++t) {
        Vector u = data.y().row(t).transpose() - rho0 * data.w1y().row(t).transpose();
        if (k > 0) u.noalias() -= data.x()[static_cast<std::size_t>(t)] * c.kappa.segment(2, k);
        eps.row(t) = (u - lambda0 * (data.w2().weights() * u)).transpose();
    }
    const Vector mean = eps.colwise().mean().transpose();
    Vector log_sd(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double var = (eps.col(j).array() - mean(j)).square().sum() / std::max<Eigen::Index>(periods - 1, 1);
        log_sd(j) = 0.5 * std::log(std::max(var, 1e-12));
    }
    if (spec.sigma_cross == SigmaCross::homo)
        c.kappa.tail(n).setConstant(log_sd.mean());
    else
        c.kappa.tail(n) = log_sd;

    for (Eigen::Index i = 0; i < layout.size(); ++i) {
        const auto iu = static_cast<std::size_t>(i);
        if (m.kappa[iu] < 0) c.kappa(i) = 0.0;
        if (m.f[iu] >= 0) c.f(i) = f0;
        if (m.r[iu] >= 0) c.r(i) = r0;
    }
    return c;
}

// Initial simplex edges: kappa 0.1, f a fraction of its size, z 0.3.
Vector simplex_steps(const Vector& free, const ParameterMask& m) {
    const std::vector<FreeSlot> slots = free_slots(m);
    Vector step(free.size());
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        switch (slots[k].part) {
            case Part::kappa: step(ki) = 0.1; break;
            case Part::f: step(ki) = 0.5 * std::abs(free(ki)) + 0.005; break;
            case Part::r: step(ki) = 0.3; break;
        }
    }
    return step;
}

}  // namespace

FitResult fit_mle(const FilterData& data, const ModelSpec& spec, const FitOptions& options) {
    spec.validate();
    const ParameterMask mask = parameter_mask(spec);
    if (data.units() != spec.n_units || data.regressors() != spec.n_regressors)
        fail(ErrorKind::DimensionMismatch, "panel shape differs from the model spec");
    if (data.periods() <= mask.n_free)
        fail(ErrorKind::InvalidArgument, "need more periods than free parameters");

    const double scale = 1.0 / static_cast<double>(data.periods());
    const Objective objective = [&](const Vector& z) {
        const double llk = filter_log_likelihood(data, unpack_free(z, spec), spec, options.filter);
        return std::isfinite(llk) ? -llk * scale : kInf;
    };

    std::vector<Vector> starts;
    const bool any_dynamic = std::any_of(mask.f.begin(), mask.f.end(), [](int v) { return v >= 0; });
    if (any_dynamic) {
        for (const auto& [f0, r0] : options.start_recursion)
            starts.push_back(pack_free(default_start(data, spec, f0, r0, options.start_spatial), spec));
    } else {
        starts.push_back(pack_free(default_start(data, spec, 0.0, 0.0, options.start_spatial), spec));
    }
    for (const auto& extra : options.extra_starts) starts.push_back(pack_free(extra, spec));

    std::vector<OptimizerResult> explored(starts.size());
    for_each_index(starts.size(), options.execution, [&](std::size_t i) {
        if (!std::isfinite(objective(starts[i]))) {
            explored[i].x = starts[i];
            explored[i].value = kInf;
            return;
        }
        explored[i] = nelder_mead(objective, starts[i], simplex_steps(starts[i], mask), options.simplex);
    });
    if (std::none_of(explored.begin(), explored.end(), [](const auto& r) { return std::isfinite(r.value); }))
        fail(ErrorKind::NoFiniteStart, "every starting point gives a non-finite likelihood for " + spec.label());

    // BFGS from every start: the best simplex point is not always in the best basin.
    // A stale inverse Hessian can also stall on the r ridges, so restart fresh until
    // a restart stops paying.
    std::vector<OptimizerResult> polished(explored.size());
    std::vector<int> bfgs_evals(explored.size(), 0);
    for_each_index(explored.size(), options.execution, [&](std::size_t i) {
        polished[i] = explored[i];
        if (!std::isfinite(explored[i].value)) return;
        int& evals = bfgs_evals[i];
        // a restart from a converged point often ends in a line-search stall; that is not a failure
        bool converged = false;
        bool last_converged = true;
        for (int round = 0; round <= options.bfgs_restarts; ++round) {
            const double before = polished[i].value;
            // BFGS stalls where the filter turns erratic (finite-difference gradients are noise
            // there); a simplex pass does not need the gradient and usually walks out.
            if (!last_converged) {
                OptimizerResult nm = nelder_mead(objective, polished[i].x, simplex_steps(polished[i].x, mask),
                                                 options.simplex);
                evals += nm.status.evaluations;
                if (nm.value < polished[i].value) polished[i] = std::move(nm);
            }
            OptimizerResult r = bfgs(objective, polished[i].x, options.quasi_newton);
            evals += r.status.evaluations;
            converged = converged || r.status.converged;
            last_converged = r.status.converged;
            if (r.value <= polished[i].value) polished[i] = std::move(r);
            const double gain = before - polished[i].value;
            if (round > 0 && last_converged && !(gain > 1e-9 * std::max(1.0, std::abs(polished[i].value)))) break;
        }
        polished[i].status.converged = polished[i].status.converged || converged;
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < polished.size(); ++i)
        if (polished[i].value < polished[best].value) best = i;
    const OptimizerResult& refined = polished[best];

    FitResult fit;
    fit.label = spec.label();
    fit.spec = spec;
    fit.coeffs = unpack_free(refined.x, spec);
    fit.total_llk = filter_log_likelihood(data, fit.coeffs, spec, options.filter);
    fit.n_free_params = mask.n_free;
    fit.names = mask.names;
    fit.estimates = free_values(fit.coeffs, spec);
    fit.convergence = refined.status;
    fit.convergence.evaluations = std::accumulate(bfgs_evals.begin(), bfgs_evals.end(), 0);
    fit.convergence.evaluations += std::accumulate(explored.begin(), explored.end(), 0, [](int acc, const auto& r) {
        return acc + r.status.evaluations;
    });
    fit.t_obs = data.periods();
    fit.start_index = static_cast<int>(best);
    const InformationCriteria ic = information_criteria(fit.total_llk, fit.n_free_params, fit.t_obs);
    fit.aic = ic.aic;
    fit.bic = ic.bic;
    if (options.compute_std_errors) {
        StandardErrors se = standard_errors(fit, data, options.filter);
        fit.std_errors = std::move(se.values);
        fit.std_error_note = std::move(se.note);
    } else {
        fit.std_error_note = "not computed";
    }
    return fit;
}

FitResult fit_mle(const PanelMatrix& y, const RegressorPanel& x, const ModelSpec& spec, const WeightMatrix& w1,
                  const WeightMatrix& w2, const FitOptions& options) {
    return fit_mle(FilterData(y, x, w1, w2), spec, options);
}

StandardErrors standard_errors(const FitResult& fit, const FilterData& data, const FilterOptions& filter) {
    StandardErrors out;
    const ModelSpec& spec = fit.spec;
    const Vector z = pack_free(fit.coeffs, spec);
    const Objective llk = [&](const Vector& v) {
        return filter_log_likelihood(data, unpack_free(v, spec), spec, filter);
    };
    out.hessian = numerical_hessian(llk, z);
    if (!out.hessian.allFinite()) {
        out.note = "NonPDHessian: non-finite likelihood next to the optimum";
        return out;
    }
    const Matrix info = -0.5 * (out.hessian + out.hessian.transpose());
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(info);
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 1e-7 * top)) {
        std::ostringstream os;
        os << "NonPDHessian: smallest eigenvalue of the negated Hessian " << eig.eigenvalues().minCoeff()
           << " (largest " << top << ")";
        out.note = os.str();
        return out;
    }
    const Matrix cov = eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    const ParameterMask m = parameter_mask(spec);
    const std::vector<FreeSlot> slots = free_slots(m);
    Vector se(m.n_free);
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto ki = static_cast<Eigen::Index>(k);
        double sd = std::sqrt(cov(ki, ki));
        if (slots[k].part == Part::r) {
            const double r = std::tanh(0.5 * z(ki));
            sd *= 0.5 * (1.0 - r * r);  // dr/dz
        }
        se(ki) = sd;
    }
    out.values = se;
    out.note = "ok";
    return out;
}

InformationCriteria information_criteria(double llk, int np, Eigen::Index t_obs) {
    if (t_obs < 1) fail(ErrorKind::InvalidArgument, "t_obs must be positive");
    if (np < 0) fail(ErrorKind::InvalidArgument, "np must be nonnegative");
    return {2.0 * np - 2.0 * llk, np * std::log(static_cast<double>(t_obs)) - 2.0 * llk};
}

LrTest lr_test(double llk_unrestricted, double llk_restricted, int df) {
    if (df < 1) fail(ErrorKind::InvalidArgument, "df must be positive");
    double stat = 2.0 * (llk_unrestricted - llk_restricted);
    if (stat < -2e-6) {
        std::ostringstream os;
        os.precision(10);
        os << "restricted llk " << llk_restricted << " exceeds unrestricted " << llk_unrestricted;
        fail(ErrorKind::NegativeStatistic, os.str());
    }
    stat = std::max(stat, 0.0);
    const boost::math::chi_squared_distribution<double> chi(df);
    return {stat, stat == 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(chi, stat))};
}

std::vector<ModelSpec> standard_grid(Eigen::Index n_units, Eigen::Index n_regressors) {
    std::vector<ModelSpec> out;
    const char* families[] = {"OLS", "SAR", "SAE", "SARAR"};
    for (const char* cross : {"CHo", "CHe"})
        for (const char* fam : families)
            out.push_back(ModelSpec::from_label(std::string("St") + fam + "-" + cross, n_units, n_regressors));
    for (const char* het : {"DHo.CHo", "DHe.CHe", "DHo.CHe"})
        for (const char* fam : families)
            out.push_back(ModelSpec::from_label(std::string("Dy") + fam + "-" + het, n_units, n_regressors));
    return out;
}

std::vector<GridRow> model_grid(const FilterData& data, const std::vector<ModelSpec>& specs,
                                const FitOptions& options, Execution execution) {
    if (specs.empty()) fail(ErrorKind::InvalidArgument, "model_grid needs at least one spec");
    const std::size_t count = specs.size();

    // level = 1 + deepest submodel in the list; fit level by level
    std::vector<int> level(count, 0);
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < count; ++j)
                if (i != j && nests(specs[j], specs[i]) && !nests(specs[i], specs[j]) && level[i] <= level[j]) {
                    level[i] = level[j] + 1;
                    changed = true;
                }
    }
    const int top = *std::max_element(level.begin(), level.end());

    std::vector<GridRow> rows(count);
    for (int lv = 0; lv <= top; ++lv) {
        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < count; ++i)
            if (level[i] == lv) todo.push_back(i);
        for_each_index(todo.size(), execution, [&](std::size_t slot) {
            const std::size_t i = todo[slot];
            GridRow& row = rows[i];
            row.label = specs[i].label();
            FitOptions local = options;
            local.execution = Execution::serial;
            for (std::size_t j = 0; j < count; ++j)
                if (level[j] < lv && rows[j].ok && nests(specs[j], specs[i]))
                    local.extra_starts.push_back(embed(rows[j].fit->coeffs, specs[j], specs[i]));
            try {
                FitResult fit = fit_mle(data, specs[i], local);
                row.ok = true;
                row.aic = fit.aic;
                row.bic = fit.bic;
                row.np = fit.n_free_params;
                row.llk = fit.total_llk;
                row.fit = std::move(fit);
            } catch (const Error& e) {
                row.ok = false;
                row.error = e.what();
            }
        });
    }
    std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
        if (a.ok != b.ok) return a.ok;
        return a.bic < b.bic;
    });
    return rows;
}

}  // namespace dysarar
