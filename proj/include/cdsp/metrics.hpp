// SPDX-License-Identifier: Apache-2.0
//
// Derived metrics (Pearson, Jensen-Shannon separation) and CSV/SVG emission.

#pragma once

#include <string>
#include <vector>

#include "cdsp/linalg.hpp"

namespace cdsp::metrics {

// Sample Pearson coefficient; 0 with degenerate=true when either variance is 0.
double pearson(const std::vector<double>& a, const std::vector<double>& b,
               bool* degenerate = nullptr);

double js_divergence(const std::vector<double>& p, const std::vector<double>& q);

struct SeparationReport {
    double d01 = 0.0, d02 = 0.0, d12 = 0.0;
    bool emergent_clustering = false;  // d01 < min(d02, d12)
    bool degenerate = false;           // all rows identical
};

// Rows of the routing histogram are per-task expert distributions.
SeparationReport clustering_separation(const Matrix& routing_histogram);

// Full-precision (17 significant digits) CSV. Header row, newline-terminated.
void export_csv(const Matrix& m, const std::vector<std::string>& col_names,
                const std::string& path);
Matrix import_csv(const std::string& path, std::vector<std::string>* col_names = nullptr);

struct HeatmapSpec {
    Matrix values;
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::string title;
    double scale_min = 0.0;
    double scale_max = 1.0;
    bool auto_scale = false;   // derive min/max from the data
    bool annotate = false;     // print cell values
};

void export_svg_heatmap(const HeatmapSpec& spec, const std::string& path);

}  // namespace cdsp::metrics
