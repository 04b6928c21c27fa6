#include "dysarar/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace dysarar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe(double v) { return std::isfinite(v) ? v : kInf; }

double rel_change(double prev, double next) { return std::abs(prev - next) / std::max(1.0, std::abs(next)); }

}  // namespace

OptimizerResult nelder_mead(const Objective& f, const Vector& x0, const Vector& step, const NelderMeadOptions& options) {
    const Eigen::Index n = x0.size();
    // standard coefficients, adapted to dimension (Gao & Han)
    const double dn = static_cast<double>(std::max<Eigen::Index>(n, 2));
    const double alpha = 1.0, beta = 1.0 + 2.0 / dn, gamma = 0.75 - 1.0 / (2.0 * dn), delta = 1.0 - 1.0 / dn;

    OptimizerResult res;
    std::vector<Vector> pts(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> val(static_cast<std::size_t>(n + 1));
    int evals = 0;
    auto eval = [&](const Vector& x) {
        ++evals;
        return safe(f(x));
    };
    val[0] = eval(x0);
    for (Eigen::Index i = 0; i < n; ++i) {
        pts[i + 1](i) += step(i);
        val[i + 1] = eval(pts[i + 1]);
    }

    std::vector<std::size_t> order(pts.size());
    int it = 0;
    for (; it < options.max_iterations; ++it) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return val[a] < val[b]; });
        const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
        if (std::isfinite(val[worst]) && rel_change(val[best], val[worst]) < options.rel_tol) break;

        Vector centroid = Vector::Zero(n);
        for (std::size_t k = 0; k < pts.size(); ++k)
            if (k != worst) centroid += pts[k];
        centroid /= static_cast<double>(n);

        const Vector xr = centroid + alpha * (centroid - pts[worst]);
        const double fr = eval(xr);
        if (fr < val[best]) {
            const Vector xe = centroid + beta * (xr - centroid);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = xe;
                val[worst] = fe;
            } else {
                pts[worst] = xr;
                val[worst] = fr;
            }
            continue;
        }
        if (fr < val[second]) {
            pts[worst] = xr;
            val[worst] = fr;
            continue;
        }
        const bool outside = fr < val[worst];
        const Vector xc = outside ? Vector(centroid + gamma * (xr - centroid))
                                  : Vector(centroid - gamma * (centroid - pts[worst]));
        const double fc = eval(xc);
        if (fc < (outside ? fr : val[worst])) {
            pts[worst] = xc;
            val[worst] = fc;
            continue;
        }
        // shrink toward the best vertex
        for (std::size_t k = 0; k < pts.size(); ++k) {
            if (k == best) continue;
            pts[k] = pts[best] + delta * (pts[k] - pts[best]);
            val[k] = eval(pts[k]);
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(val.begin(), val.end()) - val.begin());
    res.x = pts[best];
    res.value = val[best];
    res.status.iterations = it;
    res.status.evaluations = evals;
    res.status.gradient_norm = std::numeric_limits<double>::quiet_NaN();
    res.status.converged = it < options.max_iterations;
    res.status.message = res.status.converged ? "simplex collapsed" : "simplex iteration limit";
    return res;
}

Vector numerical_gradient(const Objective& f, const Vector& x, double fx, double rel_step, int* evaluations) {
    const Eigen::Index n = x.size();
    Vector g(n);
    Vector probe = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = rel_step * std::max(1.0, std::abs(x(i)));
        probe(i) = x(i) + h;
        const double fp = safe(f(probe));
        probe(i) = x(i) - h;
        const double fm = safe(f(probe));
        probe(i) = x(i);
        if (evaluations != nullptr) *evaluations += 2;
        if (std::isfinite(fp) && std::isfinite(fm))
            g(i) = (fp - fm) / (2.0 * h);
        else if (std::isfinite(fp))
            g(i) = (fp - fx) / h;
        else if (std::isfinite(fm))
            g(i) = (fx - fm) / h;
        else
            g(i) = 0.0;
    }
    return g;
}

OptimizerResult bfgs(const Objective& f, const Vector& x0, const QuasiNewtonOptions& options) {
    const Eigen::Index n = x0.size();
    OptimizerResult res;
    int evals = 0;
    auto eval = [&](const Vector& x) {
        ++evals;
        return safe(f(x));
    };

    Vector x = x0;
    double fx = eval(x);
    if (!std::isfinite(fx)) {
        res.x = x;
        res.value = fx;
        res.status.evaluations = evals;
        res.status.message = "infeasible start";
        return res;
    }
    Vector g = numerical_gradient(f, x, fx, options.fd_step, &evals);
    Matrix h = Matrix::Identity(n, n);
    bool scaled = false;
    int small_changes = 0;
    int resets = 0;

    auto grad_measure = [&](const Vector& gx, const Vector& xx, double fv) {
        double m = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) m = std::max(m, std::abs(gx(i)) * std::max(1.0, std::abs(xx(i))));
        return m / std::max(1.0, std::abs(fv));
    };

    int it = 0;
    for (; it < options.max_iterations; ++it) {
        if (grad_measure(g, x, fx) < options.grad_tol) {
            res.status.converged = true;
            res.status.message = "gradient below tolerance";
            break;
        }
        Vector d = -h * g;
        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            h.setIdentity();
            scaled = false;
            d = -g;
            slope = g.dot(d);
        }
        double t = 1.0;
        const double biggest = d.cwiseAbs().maxCoeff();
        if (biggest * t > options.max_step) t = options.max_step / biggest;

        Vector xn;
        double fn = kInf;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            xn = x + t * d;
            fn = eval(xn);
            if (std::isfinite(fn) && fn <= fx + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (resets == 0 && !h.isIdentity()) {
                h.setIdentity();
                scaled = false;
                ++resets;
                continue;
            }
            res.status.converged = grad_measure(g, x, fx) < 1e-3;
            res.status.message = "line search found no decrease";
            break;
        }
        resets = 0;
        const Vector gn = numerical_gradient(f, xn, fn, options.fd_step, &evals);
        const Vector s = xn - x;
        const Vector y = gn - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                h *= sy / y.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Vector hy = h * y;
            h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
        }
        const double change = rel_change(fx, fn);
        x = xn;
        fx = fn;
        g = gn;
        small_changes = change < options.rel_tol ? small_changes + 1 : 0;
        if (small_changes >= 2) {
            res.status.converged = true;
            res.status.message = "relative objective change below tolerance";
            ++it;
            break;
        }
    }
    if (it >= options.max_iterations) res.status.message = "iteration limit reached";
    res.x = x;
    res.value = fx;
    res.status.iterations = it;
    res.status.evaluations = evals;
    res.status.gradient_norm = g.cwiseAbs().maxCoeff();
    return res;
}

Matrix numerical_hessian(const Objective& f, const Vector& x, double rel_step) {
    const Eigen::Index n = x.size();
    Vector h(n);
    for (Eigen::Index i = 0; i < n; ++i) h(i) = rel_step * std::max(1.0, std::abs(x(i)));
    const double f0 = f(x);
    Matrix hess(n, n);
    Vector p = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        p(i) = x(i) + h(i);
        const double fp = f(p);
        p(i) = x(i) - h(i);
        const double fm = f(p);
        p(i) = x(i);
        hess(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
        for (Eigen::Index j = 0; j < i; ++j) {
            double acc = 0.0;
            for (int si : {1, -1})
                for (int sj : {1, -1}) {
                    p(i) = x(i) + si * h(i);
                    p(j) = x(j) + sj * h(j);
                    acc += si * sj * f(p);
                }
            p(i) = x(i);
            p(j) = x(j);
            hess(i, j) = hess(j, i) = acc / (4.0 * h(i) * h(j));
        }
    }
    return hess;
}

}  // namespace dysarar
