#include "dysarar/cli.hpp"

#include "dysarar/econ_weights.hpp"
#include "dysarar/estimation.hpp"
#include "dysarar/io.hpp"
#include "dysarar/portfolio.hpp"
#include "dysarar/simulation_lab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <fstream>
#include <sstream>

#ifndef DYSARAR_VERSION
#define DYSARAR_VERSION "0.0.0"
#endif

namespace dysarar::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::vector<std::string> kCommands{"validate-w", "simulate",    "filter",      "fit",
                                         "grid",       "mc-filtering", "mc-finite-sample", "weights",
                                         "sensitivity", "backtest"};

[[noreturn]] void config_error(const std::string& what) { fail(ErrorKind::ConfigParse, what); }

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        config_error(std::string("key '") + key + "': " + e.what());
    }
}

std::string require_string(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_string())
        config_error(where + "." + key + " must be a string");
    return j.at(key).get<std::string>();
}

// Collects artifacts and writes them atomically.
class Output {
  public:
    explicit Output(fs::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& content) {
        io::atomic_write(dir_ / name, content);
        hashes_[name] = io::sha256_hex(content);
        names_.push_back(name);
    }
    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] const std::map<std::string, std::string>& hashes() const { return hashes_; }
    [[nodiscard]] const fs::path& dir() const { return dir_; }

  private:
    fs::path dir_;
    std::vector<std::string> names_;
    std::map<std::string, std::string> hashes_;
};

struct Inputs {
    PanelMatrix y;
    std::vector<std::string> dates;
    std::vector<std::string> units;
    RegressorPanel x;
    std::map<std::string, std::string> hashes;  // path -> sha256
};

std::string input_path(const json& inputs, const char* key) { return require_string(inputs, key, "inputs"); }

WeightMatrix load_weights(const std::string& path, bool normalize, std::map<std::string, std::string>& hashes) {
    const Matrix m = io::read_matrix(path);
    hashes[path] = io::file_sha256(path);
    if (m.rows() != m.cols()) fail(ErrorKind::DimensionMismatch, path + " is not square");
    return normalize ? row_normalize(m) : WeightMatrix(m);
}

Inputs load_panel_inputs(const json& cfg) {
    const json& in = cfg.at("inputs");
    Inputs d;
    const std::string ypath = input_path(in, "y");
    const bool log_diff = get_or<bool>(in, "log_diff", false);
    io::LabeledPanel y = io::ingest_panel(ypath, log_diff);
    d.hashes[ypath] = io::file_sha256(ypath);
    d.y = y.values;
    d.dates = y.dates;
    d.units = y.labels;
    const Eigen::Index periods = d.y.rows(), n = d.y.cols();

    std::vector<Matrix> columns;  // one T x N block per regressor
    if (get_or<bool>(in, "constant", true)) columns.push_back(Matrix::Ones(periods, n));
    if (in.contains("x")) {
        if (!in["x"].is_array()) config_error("inputs.x must be a list of panel CSV paths");
        for (const auto& p : in["x"]) {
            const std::string path = p.get<std::string>();
            io::LabeledPanel xp = io::ingest_panel(path, false);
            d.hashes[path] = io::file_sha256(path);
            Matrix v = xp.values;
            if (log_diff && v.rows() == periods + 1) v = v.bottomRows(periods).eval();  // align with returns
            if (v.rows() != periods || v.cols() != n)
                fail(ErrorKind::DimensionMismatch, path + " does not match the shape of " + ypath);
            columns.push_back(v);
        }
    }
    const auto k = static_cast<Eigen::Index>(columns.size());
    d.x.reserve(static_cast<std::size_t>(periods));
    for (Eigen::Index t = 0; t < periods; ++t) {
        Matrix xt(n, k);
        for (Eigen::Index c = 0; c < k; ++c) xt.col(c) = columns[static_cast<std::size_t>(c)].row(t).transpose();
        d.x.push_back(std::move(xt));
    }
    return d;
}

ModelSpec make_spec(const json& cfg, Eigen::Index n, Eigen::Index k, const WeightMatrix* w1 = nullptr,
                    const WeightMatrix* w2 = nullptr) {
    const json spec_cfg = cfg.value("spec", json::object());
    ModelSpec spec = ModelSpec::from_label(get_or<std::string>(spec_cfg, "label", "DySARAR-DHe.CHe"), n, k);
    spec.score.gamma = get_or<double>(spec_cfg, "gamma", spec.score.gamma);
    if (spec_cfg.contains("score_clip")) {
        if (spec_cfg["score_clip"].is_null())
            spec.score.score_clip.reset();
        else
            spec.score.score_clip = spec_cfg["score_clip"].get<double>();
    }
    spec.score.fim_draws = get_or<int>(spec_cfg, "fim_draws", spec.score.fim_draws);
    const std::string bounds = get_or<std::string>(spec_cfg, "bounds", "row_standardized");
    if (bounds == "eigenvalues") {
        if (w1 == nullptr || w2 == nullptr) config_error("spec.bounds = eigenvalues needs weight matrices");
        spec.bounds = MappingBounds::from_eigenvalues(*w1, *w2);
    } else if (bounds != "row_standardized") {
        config_error("spec.bounds must be row_standardized or eigenvalues");
    }
    spec.validate();
    return spec;
}

FitOptions make_fit_options(const json& cfg) {
    const json f = cfg.value("fit", json::object());
    FitOptions o;
    o.simplex.max_iterations = get_or<int>(f, "simplex_iterations", o.simplex.max_iterations);
    o.quasi_newton.max_iterations = get_or<int>(f, "bfgs_iterations", o.quasi_newton.max_iterations);
    o.quasi_newton.rel_tol = get_or<double>(f, "rel_tol", o.quasi_newton.rel_tol);
    o.start_spatial = get_or<double>(f, "start_spatial", o.start_spatial);
    o.compute_std_errors = get_or<bool>(f, "std_errors", true);
    const std::string kernel = get_or<std::string>(f, "kernel", "spectral");
    if (kernel == "dense")
        o.filter.kernel = KernelKind::dense;
    else if (kernel != "spectral")
        config_error("fit.kernel must be spectral or dense");
    if (f.contains("start_recursion")) {
        o.start_recursion.clear();
        for (const auto& p : f["start_recursion"]) o.start_recursion.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    }
    o.execution = Execution::parallel;
    return o;
}

std::vector<std::string> numbered(const std::string& stem, Eigen::Index n) {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < n; ++i) out.push_back(stem + std::to_string(i + 1));
    return out;
}

std::vector<std::string> period_labels(Eigen::Index periods) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(periods));
    for (Eigen::Index t = 0; t < periods; ++t) out.push_back(std::to_string(t + 1));
    return out;
}

std::string natural_path_csv(const std::vector<NaturalParams>& path, const Layout& l) {
    std::vector<std::string> header{"rho", "lambda"};
    for (const auto& s : numbered("beta_", l.n_regressors)) header.push_back(s);
    for (const auto& s : numbered("sigma_", l.n_units)) header.push_back(s);
    const auto periods = static_cast<Eigen::Index>(path.size());
    Matrix m(periods, l.size());
    for (Eigen::Index t = 0; t < periods; ++t) {
        const NaturalParams& th = path[static_cast<std::size_t>(t)];
        m(t, 0) = th.rho;
        m(t, 1) = th.lambda;
        m.row(t).segment(2, l.n_regressors) = th.beta.transpose();
        m.row(t).segment(l.sigma_begin(), l.n_units) = th.sigma.transpose();
    }
    return io::to_csv(header, m, period_labels(periods));
}

template <class J>
std::string dump(const J& j) {
    return j.dump(2) + "\n";
}

// ---- commands -------------------------------------------------------------

int cmd_validate_w(const json& cfg, Output& out, std::map<std::string, std::string>& hashes, std::ostream& log) {
    const json& in = cfg.at("inputs");
    const std::string path = input_path(in, "w");
    const WeightMatrix w = load_weights(path, get_or<bool>(in, "normalize", false), hashes);
    json rep;
    rep["file"] = path;
    rep["n"] = w.size();
    rep["spectral_radius"] = io::number_json(w.spectral_radius());
    rep["real_spectrum"] = w.eigenvalues().imag().cwiseAbs().maxCoeff() < 1e-10;
    rep["admits_rho_0.99"] = w.admits(0.99);
    out.write("w_report.json", dump(rep));
    log << "valid " << w.size() << "x" << w.size() << " weight matrix, spectral radius "
        << io::format_double(w.spectral_radius()) << "\n";
    return kExitOk;
}

SSararConfig ssarar_config(const json& e) {
    SSararConfig c = SSararConfig::paper_defaults();
    c.t_len = get_or<Eigen::Index>(e, "t_len", c.t_len);
    c.n_replications = get_or<int>(e, "replications", c.n_replications);
    c.phi = get_or<double>(e, "phi", c.phi);
    c.u = get_or<double>(e, "u", c.u);
    c.w_density = get_or<double>(e, "w_density", c.w_density);
    c.validate();
    return c;
}

int cmd_simulate(const json& cfg, Output& out, std::map<std::string, std::string>& hashes, std::ostream& log) {
    const json e = cfg.value("experiment", json::object());
    const auto seed = cfg.at("seed").get<std::uint64_t>();
    const std::string kind = get_or<std::string>(e, "kind", "ssarar");
    if (kind == "ssarar") {
        const SSararConfig c = ssarar_config(e);
        const Layout layout{c.n_units, c.n_regressors};
        const ModelSpec spec = ModelSpec::from_label("DySARAR-DHe.CHe", c.n_units, c.n_regressors);
        const WeightMatrix w = random_weight_matrix(c.n_units, c.w_density, seed);
        const RegressorPanel x = gen_regressors(c, seed);
        const PanelMatrix latent = simulate_ssarar_params(c, seed);
        std::vector<NaturalParams> path;
        for (Eigen::Index t = 0; t < c.t_len; ++t)
            path.push_back(map_params(TildeParams{latent.row(t).transpose()}, spec.bounds, layout));
        const PanelMatrix y = simulate_path(path, x, w, w, substream_seed(seed, 99));
        const auto units = numbered("u", c.n_units);
        out.write("y.csv", io::to_csv(units, y, period_labels(c.t_len)));
        for (Eigen::Index k = 1; k < c.n_regressors; ++k) {
            Matrix xk(c.t_len, c.n_units);
            for (Eigen::Index t = 0; t < c.t_len; ++t) xk.row(t) = x[static_cast<std::size_t>(t)].col(k).transpose();
            out.write("x_" + std::to_string(k) + ".csv", io::to_csv(units, xk, period_labels(c.t_len)));
        }
        out.write("w.csv", io::matrix_csv(w.weights()));
        out.write("theta.csv", natural_path_csv(path, layout));
        log << "simulated S-SARAR panel T=" << c.t_len << " N=" << c.n_units << "\n";
        return kExitOk;
    }
    if (kind != "model") config_error("experiment.kind must be ssarar or model");

    const Eigen::Index n = get_or<Eigen::Index>(e, "n_units", 6);
    const Eigen::Index periods = get_or<Eigen::Index>(e, "t_len", 1000);
    const double density = get_or<double>(e, "w_density", 1.0);
    const json in = cfg.value("inputs", json::object());
    const WeightMatrix w1 = in.contains("w1") ? load_weights(input_path(in, "w1"), get_or<bool>(in, "normalize", false), hashes)
                                              : random_weight_matrix(n, density, substream_seed(seed, 1));
    const WeightMatrix w2 = in.contains("w2") ? load_weights(input_path(in, "w2"), get_or<bool>(in, "normalize", false), hashes)
                                              : random_weight_matrix(n, density, substream_seed(seed, 2));
    const ModelSpec spec = make_spec(cfg, w1.size(), 0, &w1, &w2);
    CoefficientVector truth = FiniteSampleConfig::table2().truth;
    if (e.contains("coefficients"))
        truth = io::coefficients_from_json(e["coefficients"], spec.layout());
    else if (!(spec.layout() == Layout{6, 0}) || spec.label() != "DySARAR-DHe.CHe")
        config_error("experiment.coefficients is required unless simulating the N=6 DySARAR-DHe.CHe default");
    (void)pack_free(truth, spec);
    const RegressorPanel x = empty_regressors(periods, w1.size());
    const SimulatedPanel sim = simulate_model(truth, spec, x, w1, w2, seed);
    const auto units = numbered("u", w1.size());
    out.write("y.csv", io::to_csv(units, sim.y, period_labels(periods)));
    out.write("w1.csv", io::matrix_csv(w1.weights()));
    out.write("w2.csv", io::matrix_csv(w2.weights()));
    out.write("theta.csv", natural_path_csv(sim.theta_path, spec.layout()));
    log << "simulated " << spec.label() << " panel T=" << periods << " N=" << w1.size() << "\n";
    return kExitOk;
}

struct ModelInputs {
    Inputs data;
    WeightMatrix w1;
    WeightMatrix w2;
    ModelSpec spec;
};

ModelInputs load_model_inputs(const json& cfg) {
    Inputs d = load_panel_inputs(cfg);
    const json& in = cfg.at("inputs");
    const bool normalize = get_or<bool>(in, "normalize", false);
    WeightMatrix w1 = load_weights(input_path(in, "w1"), normalize, d.hashes);
    WeightMatrix w2 = in.contains("w2") ? load_weights(input_path(in, "w2"), normalize, d.hashes) : w1;
    if (w1.size() != d.y.cols() || w2.size() != d.y.cols())
        fail(ErrorKind::DimensionMismatch, "weight matrices do not match the panel width");
    const Eigen::Index k = d.x.empty() ? 0 : d.x.front().cols();
    ModelSpec spec = make_spec(cfg, d.y.cols(), k, &w1, &w2);
    return {std::move(d), std::move(w1), std::move(w2), std::move(spec)};
}

int cmd_filter(const json& cfg, Output& out, std::map<std::string, std::string>& hashes, std::ostream& log) {
    ModelInputs m = load_model_inputs(cfg);
    hashes.insert(m.data.hashes.begin(), m.data.hashes.end());
    json coeffs;
    const json spec_cfg = cfg.value("spec", json::object());
    if (spec_cfg.contains("coefficients")) {
        coeffs = spec_cfg["coefficients"];
    } else if (cfg.at("inputs").contains("fit")) {
        const std::string path = input_path(cfg.at("inputs"), "fit");
        std::ifstream f(path);
        if (!f) fail(ErrorKind::MissingInput, "cannot open " + path);
        hashes[path] = io::file_sha256(path);
        coeffs = json::parse(f).at("coefficients");
    } else {
        config_error("filter needs spec.coefficients or inputs.fit");
    }
    const CoefficientVector c = io::coefficients_from_json(coeffs, m.spec.layout());
    (void)pack_free(c, m.spec);
    const FilterData data(m.data.y, m.data.x, m.w1, m.w2);
    FilterOptions fo;
    fo.kernel = make_fit_options(cfg).filter.kernel;
    const FilterOutput fout = filter_pass(data, c, m.spec, fo);
    out.write("filter.csv", io::filter_csv(fout));
    json s;
    s["label"] = m.spec.label();
    s["total_llk"] = io::number_json(fout.total_llk);
    s["breakdown"] = fout.breakdown;
    if (fout.breakdown) {
        s["breakdown_t"] = fout.breakdown_t + 1;
        s["breakdown_reason"] = fout.breakdown_reason;
    }
    out.write("filter_summary.json", dump(s));
    log << m.spec.label() << " filtered, llk " << io::format_double(fout.total_llk) << "\n";
    return fout.breakdown ? kExitNumerical : kExitOk;
}

int cmd_fit(const json& cfg, Output& out, std::map<std::string, std::string>& hashes, std::ostream& log) {
    ModelInputs m = load_model_inputs(cfg);
    hashes.insert(m.data.hashes.begin(), m.data.hashes.end());
    const FitOptions opts = make_fit_options(cfg);
    const FilterData data(m.data.y, m.data.x, m.w1, m.w2);
    const FitResult fit = fit_mle(data, m.spec, opts);
    out.write("fit.json", dump(io::to_json(fit)));
    out.write("filter.csv", io::filter_csv(filter_pass(data, fit.coeffs, m.spec, opts.filter)));
    log << fit.label << ": llk " << io::format_double(fit.total_llk) << ", " << fit.n_free_params
        << " parameters, " << fit.convergence.message << "\n";
    return fit.convergence.converged ? kExitOk : kExitConvergence;
}

int cmd_grid(const json& cfg, Output& out, std::map<std::string, std::string>& hashes, std::ostream& log) {
    ModelInputs m = load_model_inputs(cfg);
    hashes.insert(m.data.hashes.begin(), m.data.hashes.end());
    const json e = cfg.value("experiment", json::object());
    const Eigen::Index n = m.spec.n_units, k = m.spec.n_regressors;
    std::vector<ModelSpec> specs;
    if (e.contains("specs")) {
        for (const auto& label : e["specs"]) {
            ModelSpec s = ModelSpec::from_label(label.get<std::string>(), n, k);
            s.bounds = m.spec.bounds;
            s.score = m.spec.score;
            specs.push_back(s);
        }
    } else {
        specs = standard_grid(n, k);
        for (auto& s : specs) {
            s.bounds = m.spec.bounds;
            s.score = m.spec.score;
        }
    }
    FitOptions opts = make_fit_options(cfg);
    opts.compute_std_errors = get_or<bool>(cfg.value("fit", json::object()), "std_errors", false);
    const FilterData data(m.data.y, m.data.x, m.w1, m.w2);
    const std::vector<GridRow> rows = model_grid(data, specs, opts);

    std::string csv = "label,np,llk,aic,bic,ok,error\n";
    nlohmann::ordered_json fits = nlohmann::ordered_json::array();
    bool all_converged = true;
    for (const auto& r : rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        csv += r.label + "," + std::to_string(r.np) + "," + (r.ok ? io::format_double(r.llk) : "nan") + "," +
               (r.ok ? io::format_double(r.aic) : "nan") + "," + (r.ok ? io::format_double(r.bic) : "nan") + "," +
               (r.ok ? "1" : "0") + "," + err + "\n";
        if (r.fit) {
            fits.push_back(io::to_json(*r.fit));
            all_converged = all_converged && r.fit->convergence.converged;
        }
    }
    out.write("grid.csv", csv);
    out.write("grid_fits.json", dump(fits));

    if (e.contains("lr_tests")) {
        std::string lr = "unrestricted,restricted,df,statistic,p_value\n";
        auto find = [&](const std::string& label) -> const GridRow* {
            for (const auto& r : rows)
                if (r.label == label && r.ok) return &r;
            return nullptr;
        };
        for (const auto& pair : e["lr_tests"]) {
            const std::string u = pair.at(0).get<std::string>(), r = pair.at(1).get<std::string>();
            const GridRow* ru = find(u);
            const GridRow* rr = find(r);
            if (ru == nullptr || rr == nullptr) config_error("lr_tests names a model missing from the grid: " + u + " / " + r);
            const int df = ru->np - rr->np;
            const LrTest t = lr_test(ru->llk, rr->llk, df);
            lr += u + "," + r + "," + std::to_string(df) + "," + io::format_double(t.statistic) + "," +
                  io::format_double(t.p_value) + "\n";
        }
        out.write("lr_tests.csv", lr);
    }
    log << "grid of " << rows.size() << " models, best by BIC: " << rows.front().label << "\n";
    return all_converged ? kExitOk : kExitConvergence;
}

HarnessOptions harness_options(const json& cfg) {
    HarnessOptions h;
    h.fit = make_fit_options(cfg);
    h.fit.compute_std_errors = false;
    h.max_failure_rate = get_or<double>(cfg.value("experiment", json::object()), "max_failure_rate", 0.05);
    return h;
}

int cmd_mc_filtering(const json& cfg, Output& out, std::map<std::string, std::string>&, std::ostream& log) {
    const json e = cfg.value("experiment", json::object());
    const SSararConfig c = ssarar_config(e);
    const auto phis = get_or<std::vector<double>>(e, "phis", {0.9, 0.95, 0.99, 0.997});
    const double ref = get_or<double>(e, "reference_phi", 0.99);
    const FilteringReport rep = filtering_experiment(c, phis, cfg.at("seed").get<std::uint64_t>(), harness_options(cfg), ref);

    std::string csv = "phi,parameter,mse,relative_mse,coverage,failures,replications\n";
    for (const auto& row : rep.rows) {
        for (std::size_t i = 0; i < row.parameters.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            csv += io::format_double(row.phi) + "," + row.parameters[i] + "," + io::format_double(row.mse(ii)) + "," +
                   io::format_double(row.relative_mse(ii)) + "," + io::format_double(row.fans[i].coverage) + "," +
                   std::to_string(row.failures) + "," + std::to_string(row.replications) + "\n";
        }
        std::vector<std::string> header;
        Matrix wide(c.t_len, 4 * static_cast<Eigen::Index>(row.fans.size()));
        for (std::size_t i = 0; i < row.fans.size(); ++i) {
            for (const char* q : {"_q10", "_q50", "_q90", "_truth"}) header.push_back(row.fans[i].parameter + q);
            wide.middleCols(4 * static_cast<Eigen::Index>(i), 4) = row.fans[i].bands;
        }
        std::ostringstream name;
        name << "fan_phi" << row.phi << ".csv";
        out.write(name.str(), io::to_csv(header, wide, period_labels(c.t_len)));
    }
    out.write("filtering_mse.csv", csv);
    log << "filtering experiment: " << rep.rows.size() << " persistence levels, B=" << c.n_replications << "\n";
    return kExitOk;
}

int cmd_mc_finite_sample(const json& cfg, Output& out, std::map<std::string, std::string>&, std::ostream& log) {
    const json e = cfg.value("experiment", json::object());
    FiniteSampleConfig fc = FiniteSampleConfig::table2();
    fc.seed = cfg.at("seed").get<std::uint64_t>();
    fc.n_replications = get_or<int>(e, "replications", 1000);
    fc.t_lens = get_or<std::vector<Eigen::Index>>(e, "t_lens", {1000, 5000, 10000});
    if (e.contains("coefficients")) fc.truth = io::coefficients_from_json(e["coefficients"], Layout{fc.n_units, 0});
    const double density = get_or<double>(e, "w_density", 1.0);
    const WeightMatrix w1 = random_weight_matrix(fc.n_units, density, substream_seed(fc.seed, 1));
    const WeightMatrix w2 = random_weight_matrix(fc.n_units, density, substream_seed(fc.seed, 2));
    const auto tables = finite_sample_experiment(fc, w1, w2, harness_options(cfg));
    std::string csv = "T,coefficient,truth,mean,sd,mse,failures,replications\n";
    for (const auto& t : tables)
        for (const auto& r : t.rows)
            csv += std::to_string(t.t_len) + "," + r.name + "," + io::format_double(r.truth) + "," +
                   io::format_double(r.mean) + "," + io::format_double(r.sd) + "," + io::format_double(r.mse) + "," +
                   std::to_string(t.failures) + "," + std::to_string(t.replications) + "\n";
    out.write("finite_sample.csv", csv);
    out.write("w1.csv", io::matrix_csv(w1.weights()));
    out.write("w2.csv", io::matrix_csv(w2.weights()));
    log << "finite-sample experiment: " << tables.size() << " sample sizes, M=" << fc.n_replications << "\n";
    return kExitOk;
}

IndicatorPanel load_indicator(const json& spec, std::map<std::string, std::string>& hashes) {
    const std::string path = require_string(spec, "path", "indicator");
    const io::LabeledPanel p = io::ingest_panel(path, false);
    hashes[path] = io::file_sha256(path);
    return {get_or<std::string>(spec, "label", fs::path(path).stem().string()), p.values};
}

int cmd_weights(const json& cfg, Output& out, std::map<std::string, std::string>& hashes, std::ostream& log) {
    const json& in = cfg.at("inputs");
    if (!in.contains("indicator")) config_error("weights needs inputs.indicator {label, path}");
    const IndicatorPanel p = load_indicator(in["indicator"], hashes);
    const Matrix corr = spearman_matrix(p);
    const WeightMatrix w = build_weight_matrix(corr);
    out.write("spearman.csv", io::matrix_csv(corr));
    out.write("w.csv", io::matrix_csv(w.weights()));
    log << p.label << ": " << w.size() << " units\n";
    return kExitOk;
}

int cmd_sensitivity(const json& cfg, Output& out, std::map<std::string, std::string>& hashes, std::ostream& log) {
    Inputs d = load_panel_inputs(cfg);
    hashes.insert(d.hashes.begin(), d.hashes.end());
    const json& in = cfg.at("inputs");
    if (!in.contains("indicators") || !in["indicators"].is_array()) config_error("inputs.indicators must be a list");
    std::vector<IndicatorPanel> panels;
    for (const auto& s : in["indicators"]) panels.push_back(load_indicator(s, hashes));
    const Eigen::Index k = d.x.empty() ? 0 : d.x.front().cols();
    const ModelSpec spec = make_spec(cfg, d.y.cols(), k);
    const SensitivityGrid grid = sensitivity_grid(panels, d.y, d.x, spec, make_fit_options(cfg));
    std::string csv = "W1\\W2";
    for (const auto& l : grid.labels) csv += "," + l;
    csv += "\n";
    for (std::size_t i = 0; i < grid.labels.size(); ++i) {
        csv += grid.labels[i];
        for (const auto& c : grid.cells[i]) csv += "," + (c.excluded ? std::string("--") : c.ok ? io::format_double(c.llk) : "failed");
        csv += "\n";
    }
    out.write("sensitivity.csv", csv);
    log << "sensitivity grid over " << grid.labels.size() << " indicators\n";
    return kExitOk;
}

int cmd_backtest(const json& cfg, Output& out, std::map<std::string, std::string>& hashes, std::ostream& log) {
    ModelInputs m = load_model_inputs(cfg);
    hashes.insert(m.data.hashes.begin(), m.data.hashes.end());
    const json b = cfg.value("backtest", json::object());
    BacktestConfig bc;
    bc.in_sample_len = get_or<Eigen::Index>(b, "in_sample_len", bc.in_sample_len);
    bc.out_sample_len = get_or<Eigen::Index>(b, "out_sample_len", bc.out_sample_len);
    bc.refit_interval = get_or<Eigen::Index>(b, "refit_interval", bc.refit_interval);
    bc.risk_free = get_or<double>(b, "risk_free", bc.risk_free);
    FitOptions fo = make_fit_options(cfg);
    fo.compute_std_errors = false;
    const BacktestReport rep = rolling_backtest(m.data.y, m.data.x, m.spec, m.w1, m.w2, bc, fo);
    const PanelMatrix oos = m.data.y.middleRows(bc.in_sample_len, bc.out_sample_len);
    const BacktestReport ew = equal_weight_strategy(oos);

    std::vector<std::string> dates(m.data.dates.begin() + bc.in_sample_len,
                                   m.data.dates.begin() + bc.in_sample_len + bc.out_sample_len);
    out.write("backtest_weights.csv", io::to_csv(m.data.units, rep.weights_path, dates, "date"));
    Matrix rets(bc.out_sample_len, 2);
    rets.col(0) = rep.portfolio_returns;
    rets.col(1) = ew.portfolio_returns;
    out.write("backtest_returns.csv", io::to_csv({"model", "equal_weight"}, rets, dates, "date"));

    std::string metrics = "strategy,mean,sd,max_loss,max_gain,sharpe,var5,es5,turnover\n";
    auto metric_row = [&](const std::string& name, const BacktestMetrics& mt) {
        metrics += name + "," + io::format_double(mt.ann_mean) + "," + io::format_double(mt.ann_sd) + "," +
                   io::format_double(mt.max_loss) + "," + io::format_double(mt.max_gain) + "," +
                   (mt.sharpe ? io::format_double(*mt.sharpe) : "nan") + "," + io::format_double(mt.var5) + "," +
                   io::format_double(mt.es5) + "," + io::format_double(mt.turnover) + "\n";
    };
    metric_row(m.spec.label(), rep.metrics);
    metric_row("1/N", ew.metrics);

    // competitors: the model stream pays the fee theta to match each benchmark
    std::vector<std::pair<std::string, Vector>> benchmarks{{"1/N", ew.portfolio_returns}};
    if (cfg.at("inputs").contains("competitors")) {
        const std::string path = input_path(cfg.at("inputs"), "competitors");
        const io::LabeledPanel cp = io::ingest_panel(path, false);
        hashes[path] = io::file_sha256(path);
        if (cp.values.rows() != bc.out_sample_len)
            fail(ErrorKind::DimensionMismatch, path + " must hold one row per out-of-sample period");
        for (std::size_t j = 0; j < cp.labels.size(); ++j) {
            benchmarks.emplace_back(cp.labels[j], cp.values.col(static_cast<Eigen::Index>(j)));
            metric_row(cp.labels[j], backtest_metrics(cp.values.col(static_cast<Eigen::Index>(j)),
                                                      Matrix::Zero(bc.out_sample_len, 1)));
        }
    }
    out.write("backtest_metrics.csv", metrics);

    const json fee_cfg = cfg.value("fee", json::object());
    const auto upsilons = get_or<std::vector<double>>(fee_cfg, "upsilon", {3.0, 7.0, 10.0});
    const int n_boot = get_or<int>(fee_cfg, "n_boot", 1000);
    const int block = get_or<int>(fee_cfg, "block_len", 0);
    std::string fees = "benchmark,upsilon,fee_per_period,fee_annualized_pct,p_value,resamples_used\n";
    std::uint64_t stream = 0;
    for (const auto& [name, r] : benchmarks)
        for (double u : upsilons) {
            FeeConfig fc;
            fc.upsilon = u;
            // theta: what the benchmark's holder would pay to switch to the model
            const BootstrapResult br = block_bootstrap_pvalue(r, rep.portfolio_returns, fc, block, n_boot,
                                                              substream_seed(cfg.at("seed").get<std::uint64_t>(), ++stream));
            fees += name + "," + io::format_double(u) + "," + io::format_double(br.fee) + "," +
                    io::format_double(br.fee * 252.0 * 100.0) + "," + io::format_double(br.p_value) + "," +
                    std::to_string(br.used) + "\n";
        }
    out.write("fees.csv", fees);
    std::string events;
    for (const auto& ev : rep.events) events += ev + "\n";
    out.write("backtest_events.txt", events);
    log << "backtest: S=" << bc.out_sample_len << ", " << rep.refit_origins.size() << " refits, "
        << rep.failed_origins << " fallback origins\n";
    return kExitOk;
}

json defaults_for(const std::string& command) {
    json d = {{"seed", 1}, {"inputs", json::object()}, {"experiment", json::object()}};
    (void)command;
    return d;
}

}  // namespace

std::string version() { return DYSARAR_VERSION; }

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::ConfigParse:
        case ErrorKind::InvalidArgument:
            return kExitConfig;
        case ErrorKind::MissingInput:
        case ErrorKind::RaggedRows:
        case ErrorKind::NonNumericCell:
        case ErrorKind::EmptyPanel:
        case ErrorKind::ZeroRow:
        case ErrorKind::NegativeEntry:
        case ErrorKind::NonzeroDiagonal:
        case ErrorKind::NotRowStochastic:
        case ErrorKind::DimensionMismatch:
        case ErrorKind::ConstantColumn:
        case ErrorKind::MaskMismatch:
            return kExitInput;
        case ErrorKind::NotConverged:
            return kExitConvergence;
        default:
            return kExitNumerical;
    }
}

std::vector<std::string> preset_names() {
    return {"ssarar", "ssarar-desk", "table2", "table2-desk", "simulate-ssarar", "simulate-table2", "backtest-paper"};
}

json preset(const std::string& name) {
    if (name == "ssarar")
        return {{"command", "mc-filtering"},
                {"seed", 2024},
                {"experiment", {{"t_len", 2000}, {"replications", 50}, {"phis", {0.9, 0.95, 0.99, 0.997}},
                                {"reference_phi", 0.99}, {"u", 0.01}, {"w_density", 1.0}}}};
    if (name == "ssarar-desk")
        return {{"command", "mc-filtering"},
                {"seed", 2024},
                {"experiment", {{"t_len", 500}, {"replications", 8}, {"phis", {0.9, 0.99}}, {"reference_phi", 0.99}}}};
    if (name == "table2")
        return {{"command", "mc-finite-sample"},
                {"seed", 2024},
                {"experiment", {{"t_lens", {1000, 5000, 10000}}, {"replications", 1000}}}};
    if (name == "table2-desk")
        return {{"command", "mc-finite-sample"},
                {"seed", 2024},
                {"experiment", {{"t_lens", {1000}}, {"replications", 10}}}};
    if (name == "simulate-ssarar")
        return {{"command", "simulate"}, {"seed", 2024}, {"experiment", {{"kind", "ssarar"}, {"t_len", 2000}}}};
    if (name == "simulate-table2")
        return {{"command", "simulate"},
                {"seed", 2024},
                {"spec", {{"label", "DySARAR-DHe.CHe"}}},
                {"experiment", {{"kind", "model"}, {"n_units", 6}, {"t_len", 1000}}}};
    if (name == "backtest-paper")
        return {{"command", "backtest"},
                {"seed", 2024},
                {"spec", {{"label", "DySARAR-DHo.CHe"}}},
                {"backtest", {{"in_sample_len", 2013}, {"out_sample_len", 1500}, {"refit_interval", 100}, {"risk_free", 0.0}}},
                {"fee", {{"upsilon", {3.0, 7.0, 10.0}}, {"n_boot", 1000}, {"block_len", 0}}}};
    config_error("unknown preset '" + name + "'");
}

json resolve_config(const json& raw) {
    if (!raw.is_object()) config_error("config must be a JSON object");
    json cfg = json::object();
    json user = raw;
    if (user.contains("preset")) {
        cfg = preset(user["preset"].get<std::string>());
        user.erase("preset");
    }
    cfg.merge_patch(user);
    if (!cfg.contains("command") || !cfg["command"].is_string()) config_error("config needs a command");
    const std::string command = cfg["command"].get<std::string>();
    if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end())
        config_error("unknown command '" + command + "'");
    json full = defaults_for(command);
    full.merge_patch(cfg);
    if (full["seed"].is_number_integer() && full["seed"].get<long long>() >= 0) full["seed"] = full["seed"].get<std::uint64_t>();
    if (!full["seed"].is_number_integer() || full["seed"].get<long long>() < 0) config_error("seed must be a nonnegative integer");
    return full;
}

RunResult run(const json& config, const fs::path& out_dir, std::ostream& log) {
    RunResult res;
    try {
        const json cfg = resolve_config(config);
        const std::string command = cfg["command"].get<std::string>();
        Output out(out_dir);
        std::map<std::string, std::string> input_hashes;
        int code = kExitOk;
        if (command == "validate-w") code = cmd_validate_w(cfg, out, input_hashes, log);
        else if (command == "simulate") code = cmd_simulate(cfg, out, input_hashes, log);
        else if (command == "filter") code = cmd_filter(cfg, out, input_hashes, log);
        else if (command == "fit") code = cmd_fit(cfg, out, input_hashes, log);
        else if (command == "grid") code = cmd_grid(cfg, out, input_hashes, log);
        else if (command == "mc-filtering") code = cmd_mc_filtering(cfg, out, input_hashes, log);
        else if (command == "mc-finite-sample") code = cmd_mc_finite_sample(cfg, out, input_hashes, log);
        else if (command == "weights") code = cmd_weights(cfg, out, input_hashes, log);
        else if (command == "sensitivity") code = cmd_sensitivity(cfg, out, input_hashes, log);
        else if (command == "backtest") code = cmd_backtest(cfg, out, input_hashes, log);

        json manifest;
        manifest["tool"] = "dysarar";
        manifest["version"] = version();
        manifest["command"] = command;
        manifest["seed"] = cfg["seed"];
        manifest["config_sha256"] = io::sha256_hex(cfg.dump());
        manifest["config"] = cfg;
        manifest["inputs"] = input_hashes;
        manifest["artifacts"] = out.hashes();
        manifest["exit_code"] = code;
        io::atomic_write(out_dir / "manifest.json", dump(manifest));
        res.exit_code = code;
        res.artifacts = out.names();
        res.artifacts.push_back("manifest.json");
        res.message = code == kExitConvergence ? "optimizer did not converge; results written" : "ok";
    } catch (const Error& e) {
        res.exit_code = exit_code(e.kind());
        res.message = e.what();
    } catch (const json::exception& e) {
        res.exit_code = kExitConfig;
        res.message = std::string("ConfigParse: ") + e.what();
    } catch (const fs::filesystem_error& e) {
        res.exit_code = kExitInput;
        res.message = std::string("MissingInput: ") + e.what();
    }
    return res;
}

RunResult replay(const fs::path& manifest_path, const fs::path& out_dir, std::ostream& log) {
    RunResult res;
    json manifest;
    try {
        std::ifstream in(manifest_path);
        if (!in) fail(ErrorKind::MissingInput, "cannot open " + manifest_path.string());
        manifest = json::parse(in);
        if (manifest.value("version", "") != version())
            log << "warning: manifest written by version " << manifest.value("version", "?") << ", running "
                << version() << "\n";
        for (const auto& [path, sha] : manifest.at("inputs").items())
            if (io::file_sha256(path) != sha.get<std::string>())
                fail(ErrorKind::MissingInput, "input " + path + " changed since the manifest was written");
    } catch (const Error& e) {
        res.exit_code = exit_code(e.kind());
        res.message = e.what();
        return res;
    } catch (const json::exception& e) {
        res.exit_code = kExitConfig;
        res.message = std::string("ConfigParse: ") + e.what();
        return res;
    }
    res = run(manifest.at("config"), out_dir, log);
    if (res.exit_code != manifest.value("exit_code", 0)) {
        res.message = "replay exit code " + std::to_string(res.exit_code) + " differs from the recorded " +
                      std::to_string(manifest.value("exit_code", 0)) + ": " + res.message;
        if (res.exit_code == kExitOk) res.exit_code = kExitNumerical;
        return res;
    }
    int mismatches = 0;
    for (const auto& [name, sha] : manifest.at("artifacts").items()) {
        const fs::path p = out_dir / name;
        const bool same = fs::exists(p) && io::file_sha256(p) == sha.get<std::string>();
        log << (same ? "identical " : "DIFFERS   ") << name << "\n";
        mismatches += same ? 0 : 1;
    }
    if (mismatches > 0) {
        res.exit_code = kExitNumerical;
        res.message = std::to_string(mismatches) + " artifact(s) differ from the manifest";
    } else {
        res.message = "all artifacts byte-identical";
    }
    return res;
}

}  // namespace dysarar::cli
