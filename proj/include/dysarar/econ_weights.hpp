#pragma once

#include "dysarar/estimation.hpp"
#include "dysarar/spatial_algebra.hpp"
#include "dysarar/types.hpp"

#include <string>
#include <vector>

namespace dysarar {

// T x N observations of one financial indicator (MKT, PB, DY, PE, ...).
struct IndicatorPanel {
    std::string label;
    Matrix values;
};

// Pairwise Spearman correlations with average ranks for ties. Needs T >= 3;
// throws ConstantColumn when a unit never changes.
[[nodiscard]] Matrix spearman_matrix(const IndicatorPanel& panel);

// d_ij = sqrt(2 (1 - c_ij)), w_ij proportional to exp(-d_ij) over j != i.
[[nodiscard]] WeightMatrix build_weight_matrix(const Matrix& corr);

// Convenience: both steps.
[[nodiscard]] WeightMatrix indicator_weights(const IndicatorPanel& panel);

struct SensitivityCell {
    bool excluded = false;   // the diagonal: same indicator for W1 and W2
    bool ok = false;
    double llk = 0.0;
    std::string error;
};

struct SensitivityGrid {
    std::vector<std::string> labels;              // rows: W1 indicator, columns: W2 indicator
    std::vector<std::vector<SensitivityCell>> cells;

    // llk per cell, NaN on the diagonal and on failed cells.
    [[nodiscard]] Matrix llk_matrix() const;
};

// Fits `spec` for every ordered pair of distinct indicators; W stays fixed
// during each fit. Cell failures are recorded, not thrown.
[[nodiscard]] SensitivityGrid sensitivity_grid(const std::vector<IndicatorPanel>& panels, const PanelMatrix& y,
                                               const RegressorPanel& x, const ModelSpec& spec,
                                               const FitOptions& options = {},
                                               Execution execution = Execution::parallel);

}  // namespace dysarar
