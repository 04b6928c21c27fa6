#include "dysarar/io.hpp"

#include "dysarar/errors.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dysarar::io {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingInput, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '"')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '"')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                                              : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        out.push_back(line);
    }
    return out;
}

double parse_cell(const std::string& cell, const std::string& where) {
    double v = 0.0;
    const char* b = cell.data();
    const char* e = b + cell.size();
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (cell.empty() || ec != std::errc() || ptr != e || !std::isfinite(v))
        fail(ErrorKind::NonNumericCell, where + ": '" + cell + "' is not a finite number");
    return v;
}

}  // namespace

LabeledPanel parse_panel(const std::string& text, const std::string& origin, bool log_diff) {
    const std::vector<std::string> lines = lines_of(text);
    if (lines.size() < 2) fail(ErrorKind::EmptyPanel, origin + " has no data rows");
    const std::vector<std::string> header = split_row(lines[0]);
    if (header.size() < 2) fail(ErrorKind::EmptyPanel, origin + " has no unit columns");
    LabeledPanel p;
    p.labels.assign(header.begin() + 1, header.end());
    const auto n = static_cast<Eigen::Index>(p.labels.size());
    p.values.resize(static_cast<Eigen::Index>(lines.size() - 1), n);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::vector<std::string> cells = split_row(lines[i]);
        if (cells.size() != header.size()) {
            std::ostringstream os;
            os << origin << " line " << i + 1 << ": " << cells.size() << " cells, header has " << header.size();
            fail(ErrorKind::RaggedRows, os.str());
        }
        p.dates.push_back(cells[0]);
        for (Eigen::Index j = 0; j < n; ++j)
            p.values(static_cast<Eigen::Index>(i - 1), j) =
                parse_cell(cells[static_cast<std::size_t>(j + 1)], origin + " line " + std::to_string(i + 1));
    }
    if (log_diff) {
        if (p.values.rows() < 2) fail(ErrorKind::EmptyPanel, origin + ": log differences need two rows");
        if ((p.values.array() <= 0.0).any())
            fail(ErrorKind::NonNumericCell, origin + ": log differences need positive prices");
        const Matrix logs = p.values.array().log();
        p.values = logs.bottomRows(logs.rows() - 1) - logs.topRows(logs.rows() - 1);
        p.dates.erase(p.dates.begin());
    }
    return p;
}

LabeledPanel ingest_panel(const fs::path& path, bool log_diff) { return parse_panel(slurp(path), path.string(), log_diff); }

Matrix read_matrix(const fs::path& path) {
    const std::vector<std::string> lines = lines_of(slurp(path));
    if (lines.empty()) fail(ErrorKind::EmptyPanel, path.string() + " is empty");
    const std::size_t cols = split_row(lines[0]).size();
    Matrix m(static_cast<Eigen::Index>(lines.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::vector<std::string> cells = split_row(lines[i]);
        if (cells.size() != cols) fail(ErrorKind::RaggedRows, path.string() + " line " + std::to_string(i + 1));
        for (std::size_t j = 0; j < cols; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                parse_cell(cells[j], path.string() + " line " + std::to_string(i + 1));
    }
    return m;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string to_csv(const std::vector<std::string>& header, const Matrix& values,
                   const std::vector<std::string>& row_labels, const std::string& first_header) {
    std::string out;
    const bool labeled = !row_labels.empty();
    if (labeled) out += first_header;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (labeled || j > 0) out += ',';
        out += header[j];
    }
    out += '\n';
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        if (labeled) out += row_labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            if (labeled || j > 0) out += ',';
            out += format_double(values(i, j));
        }
        out += '\n';
    }
    return out;
}

std::string matrix_csv(const Matrix& values) {
    std::string out;
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            if (j > 0) out += ',';
            out += format_double(values(i, j));
        }
        out += '\n';
    }
    return out;
}

void atomic_write(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::MissingInput, "cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) fail(ErrorKind::MissingInput, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        fail(ErrorKind::InvalidArgument, "SHA-256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return os.str();
}

std::string file_sha256(const fs::path& path) { return sha256_hex(slurp(path)); }

std::string filter_csv(const FilterOutput& out) {
    const Layout& l = out.layout;
    std::vector<std::string> header{"rho", "lambda"};
    for (Eigen::Index i = 0; i < l.n_regressors; ++i) header.push_back("beta_" + std::to_string(i + 1));
    for (Eigen::Index j = 0; j < l.n_units; ++j) header.push_back("sigma_" + std::to_string(j + 1));
    header.push_back("llk_t");
    const auto periods = static_cast<Eigen::Index>(out.natural_path.size());
    Matrix m(periods, l.size() + 1);
    std::vector<std::string> rows;
    for (Eigen::Index t = 0; t < periods; ++t) {
        const NaturalParams& th = out.natural_path[static_cast<std::size_t>(t)];
        m(t, 0) = th.rho;
        m(t, 1) = th.lambda;
        m.row(t).segment(2, l.n_regressors) = th.beta.transpose();
        m.row(t).segment(l.sigma_begin(), l.n_units) = th.sigma.transpose();
        m(t, l.size()) = out.llk_contributions(t);
        rows.push_back(std::to_string(t + 1));
    }
    return to_csv(header, m, rows, "t");
}

nlohmann::ordered_json number_json(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

namespace {

nlohmann::ordered_json vector_json(const Vector& v) {
    auto a = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_json(v(i)));
    return a;
}

Vector vector_from_json(const nlohmann::json& j, Eigen::Index size, const char* what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size)
        fail(ErrorKind::ConfigParse, std::string(what) + " must be an array of " + std::to_string(size) + " numbers");
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) {
        const auto& e = j[static_cast<std::size_t>(i)];
        if (!e.is_number()) fail(ErrorKind::ConfigParse, std::string(what) + " holds a non-number");
        v(i) = e.get<double>();
    }
    return v;
}

}  // namespace

nlohmann::ordered_json to_json(const CoefficientVector& c) {
    return {{"kappa", vector_json(c.kappa)}, {"f", vector_json(c.f)}, {"r", vector_json(c.r)}};
}

CoefficientVector coefficients_from_json(const nlohmann::json& j, const Layout& layout) {
    if (!j.is_object()) fail(ErrorKind::ConfigParse, "coefficients must be an object with kappa, f, r");
    CoefficientVector c = CoefficientVector::zeros(layout);
    c.kappa = vector_from_json(j.value("kappa", nlohmann::json()), layout.size(), "kappa");
    if (j.contains("f")) c.f = vector_from_json(j["f"], layout.size(), "f");
    if (j.contains("r")) c.r = vector_from_json(j["r"], layout.size(), "r");
    return c;
}

nlohmann::ordered_json to_json(const FitResult& fit) {
    nlohmann::ordered_json j;
    j["label"] = fit.label;
    j["n_units"] = fit.spec.n_units;
    j["n_regressors"] = fit.spec.n_regressors;
    j["t_obs"] = fit.t_obs;
    j["total_llk"] = number_json(fit.total_llk);
    j["n_free_params"] = fit.n_free_params;
    j["aic"] = number_json(fit.aic);
    j["bic"] = number_json(fit.bic);
    auto params = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < fit.names.size(); ++k) {
        nlohmann::ordered_json p;
        p["name"] = fit.names[k];
        p["estimate"] = number_json(fit.estimates(static_cast<Eigen::Index>(k)));
        p["std_error"] = fit.std_errors ? number_json((*fit.std_errors)(static_cast<Eigen::Index>(k)))
                                        : nlohmann::ordered_json(nullptr);
        params.push_back(p);
    }
    j["parameters"] = params;
    j["std_error_note"] = fit.std_error_note;
    j["coefficients"] = to_json(fit.coeffs);
    j["convergence"] = {{"converged", fit.convergence.converged},
                        {"iterations", fit.convergence.iterations},
                        {"evaluations", fit.convergence.evaluations},
                        {"gradient_norm", number_json(fit.convergence.gradient_norm)},
                        {"message", fit.convergence.message}};
    j["start_index"] = fit.start_index;
    return j;
}

}  // namespace dysarar::io
