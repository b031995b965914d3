// SPDX-License-Identifier: Apache-2.0

#include "cdsp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cdsp::metrics {

double pearson(const std::vector<double>& a, const std::vector<double>& b,
               bool* degenerate) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("pearson: need at least 2 points");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (degenerate) *degenerate = false;
    if (va == 0.0 || vb == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return cov / std::sqrt(va * vb);
}

namespace {

double kl_term(double p, double m) {
    if (p <= 0.0) return 0.0;
    return p * std::log(p / m);
}

void check_distribution(const std::vector<double>& p) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) throw std::invalid_argument("js_divergence: negative probability");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("js_divergence: row does not sum to 1");
    }
}

}  // namespace

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("js_divergence: length mismatch");
    check_distribution(p);
    check_distribution(q);
    double js = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        js += 0.5 * kl_term(p[i], m) + 0.5 * kl_term(q[i], m);
    }
    return js;
}

SeparationReport clustering_separation(const Matrix& h) {
    if (h.rows != 3) throw std::invalid_argument("clustering_separation: expected 3 rows");
    auto row = [&](std::size_t r) {
        return std::vector<double>(h.row(r), h.row(r) + h.cols);
    };
    SeparationReport rep;
    rep.d01 = js_divergence(row(0), row(1));
    rep.d02 = js_divergence(row(0), row(2));
    rep.d12 = js_divergence(row(1), row(2));
    rep.degenerate = rep.d01 == 0.0 && rep.d02 == 0.0 && rep.d12 == 0.0;
    rep.emergent_clustering = !rep.degenerate && rep.d01 < std::min(rep.d02, rep.d12);
    return rep;
}

void export_csv(const Matrix& m, const std::vector<std::string>& col_names,
                const std::string& path) {
    if (col_names.size() != m.cols) {
        throw std::invalid_argument("export_csv: header length mismatch");
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("export_csv: cannot open " + path);
    for (std::size_t c = 0; c < col_names.size(); ++c) {
        f << (c ? "," : "") << col_names[c];
    }
    f << "\n";
    char buf[64];
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", m.at(r, c));
            f << (c ? "," : "") << buf;
        }
        f << "\n";
    }
    if (!f) throw std::runtime_error("export_csv: write failed " + path);
}

Matrix import_csv(const std::string& path, std::vector<std::string>* col_names) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("import_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("import_csv: empty file " + path);
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (col_names) *col_names = header;
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(ss, cell, ',')) {
            values.push_back(std::stod(cell));
            ++cols;
        }
        if (cols != header.size()) throw std::runtime_error("import_csv: ragged row in " + path);
        ++rows;
    }
    Matrix m(rows, header.size());
    m.data = std::move(values);
    return m;
}

namespace {

struct Color {
    double r, g, b;
};

// Low -> high ramp (deep blue to warm red).
constexpr Color kLow{0.17, 0.24, 0.56};
constexpr Color kHigh{0.86, 0.27, 0.16};

std::string ramp(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const auto ch = [&](double lo, double hi) {
        return static_cast<int>(std::lround(255.0 * (lo + t * (hi - lo))));
    };
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", ch(kLow.r, kHigh.r), ch(kLow.g, kHigh.g),
                  ch(kLow.b, kHigh.b));
    return buf;
}

}  // namespace

void export_svg_heatmap(const HeatmapSpec& spec, const std::string& path) {
    const Matrix& m = spec.values;
    if (!spec.row_labels.empty() && spec.row_labels.size() != m.rows) {
        throw std::invalid_argument("export_svg_heatmap: row label count mismatch");
    }
    if (!spec.col_labels.empty() && spec.col_labels.size() != m.cols) {
        throw std::invalid_argument("export_svg_heatmap: col label count mismatch");
    }
    double lo = spec.scale_min, hi = spec.scale_max;
    if (spec.auto_scale && !m.data.empty()) {
        lo = *std::min_element(m.data.begin(), m.data.end());
        hi = *std::max_element(m.data.begin(), m.data.end());
    }
    const double span = hi - lo;

    const int cell = 42, margin_left = 70, margin_top = 48;
    const int width = margin_left + cell * static_cast<int>(m.cols) + 16;
    const int height = margin_top + cell * static_cast<int>(m.rows) + 16;

    std::ofstream f(path);
    if (!f) throw std::runtime_error("export_svg_heatmap: cannot open " + path);
    f << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
    f << "  <text x=\"" << margin_left << "\" y=\"20\" font-family=\"sans-serif\" "
         "font-size=\"14\">" << spec.title << "</text>\n";
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            // Degenerate scale maps every cell to the ramp midpoint.
            const double t = span == 0.0 ? 0.5 : (m.at(r, c) - lo) / span;
            const int x = margin_left + static_cast<int>(c) * cell;
            const int y = margin_top + static_cast<int>(r) * cell;
            f << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell
              << "\" height=\"" << cell << "\" fill=\"" << ramp(t) << "\"/>\n";
            if (spec.annotate) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.2f", m.at(r, c));
                f << "  <text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
                  << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"white\" "
                     "text-anchor=\"middle\">" << buf << "</text>\n";
            }
        }
    }
    for (std::size_t r = 0; r < spec.row_labels.size(); ++r) {
        f << "  <text x=\"" << margin_left - 6 << "\" y=\""
          << margin_top + static_cast<int>(r) * cell + cell / 2 + 4
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">"
          << spec.row_labels[r] << "</text>\n";
    }
    for (std::size_t c = 0; c < spec.col_labels.size(); ++c) {
        f << "  <text x=\"" << margin_left + static_cast<int>(c) * cell + cell / 2
          << "\" y=\"" << margin_top - 8
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
          << spec.col_labels[c] << "</text>\n";
    }
    f << "</svg>\n";
    if (!f) throw std::runtime_error("export_svg_heatmap: write failed " + path);
}

}  // namespace cdsp::metrics
