#pragma once

#include "dysarar/estimation.hpp"
#include "dysarar/filter.hpp"
#include "dysarar/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dysarar::io {

// Date column plus one column per unit.
struct LabeledPanel {
    std::vector<std::string> dates;
    std::vector<std::string> labels;
    Matrix values;
};

// CSV with a header row; the first column is a date/label. log_diff turns
// prices into log returns (T - 1 rows). Throws MissingInput, RaggedRows,
// NonNumericCell, EmptyPanel.
[[nodiscard]] LabeledPanel ingest_panel(const std::filesystem::path& path, bool log_diff = false);
[[nodiscard]] LabeledPanel parse_panel(const std::string& text, const std::string& origin, bool log_diff = false);

// Plain numeric CSV, no header (weight matrices).
[[nodiscard]] Matrix read_matrix(const std::filesystem::path& path);

// Shortest round-trip form would be nicer, but 17 significant digits is what
// every consumer can parse.
[[nodiscard]] std::string format_double(double v);

// Header row, then one row per matrix row; a leading column when row_labels is
// non-empty (its header is first_header).
[[nodiscard]] std::string to_csv(const std::vector<std::string>& header, const Matrix& values,
                                 const std::vector<std::string>& row_labels = {},
                                 const std::string& first_header = "t");
[[nodiscard]] std::string matrix_csv(const Matrix& values);

// Writes to a sibling temp file, then renames over the target.
void atomic_write(const std::filesystem::path& path, const std::string& content);

[[nodiscard]] std::string sha256_hex(const std::string& bytes);
[[nodiscard]] std::string file_sha256(const std::filesystem::path& path);

// Columns rho, lambda, beta_1..K, sigma_1..N, llk_t; one row per period.
[[nodiscard]] std::string filter_csv(const FilterOutput& out);

[[nodiscard]] nlohmann::ordered_json to_json(const FitResult& fit);
[[nodiscard]] nlohmann::ordered_json to_json(const CoefficientVector& c);
[[nodiscard]] CoefficientVector coefficients_from_json(const nlohmann::json& j, const Layout& layout);

// Rows as numbers, NaN and infinities as strings ("nan", "inf", "-inf").
[[nodiscard]] nlohmann::ordered_json number_json(double v);

}  // namespace dysarar::io
