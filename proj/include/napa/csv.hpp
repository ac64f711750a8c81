#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "napa/grid.hpp"
#include "napa/simulate.hpp"
#include "napa/statistics.hpp"
#include "napa/testing.hpp"
#include "napa/weights.hpp"

namespace napa {

// 17 significant digits: enough for exact double round-trips, so golden
// files reproduce bit-for-bit.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << content;
    if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace detail

// ---- sites CSV: site_id,c1[,c2[,c3]] ---------------------------------------

inline std::string sites_to_csv(const SpatialGrid& grid) {
    const std::size_t b = grid.extents.size();
    std::string out = "site_id";
    for (std::size_t k = 0; k < b; ++k) out += ",c" + std::to_string(k + 1);
    out += "\n";
    for (std::size_t i = 0; i < grid.site_count(); ++i) {
        out += std::to_string(i);
        for (std::size_t k = 0; k < b; ++k)
            out += "," + std::to_string(static_cast<long long>(grid.coords[i * b + k]));
        out += "\n";
    }
    return out;
}

inline void write_sites_csv(const std::string& path, const SpatialGrid& grid) {
    detail::write_file(path, sites_to_csv(grid));
}

// Reads a sites CSV and reconstructs the lattice. The file must enumerate the
// full lattice in row-major order with 0-based consecutive site ids; extents
// are inferred as the per-dimension coordinate maxima.
inline SpatialGrid read_sites_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open sites CSV: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("sites CSV is empty: " + path);
    std::vector<std::string> header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "site_id")
        throw std::runtime_error("sites CSV: expected header site_id,c1[,c2[,c3]]");
    const std::size_t b = header.size() - 1;

    std::vector<int> rowcoords;
    std::vector<int> extents(b, 0);
    std::size_t row = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != b + 1)
            throw std::runtime_error("sites CSV line " + std::to_string(row + 2) +
                                     ": expected " + std::to_string(b + 1) + " columns");
        double id;
        if (!detail::parse_double(cells[0], id) || id != static_cast<double>(row))
            throw std::runtime_error("sites CSV line " + std::to_string(row + 2) +
                                     ": site_id must be consecutive starting at 0");
        for (std::size_t k = 0; k < b; ++k) {
            double c;
            if (!detail::parse_double(cells[k + 1], c) || c < 1.0 || c != std::floor(c))
                throw std::runtime_error("sites CSV line " + std::to_string(row + 2) +
                                         ": coordinates must be positive integers");
            rowcoords.push_back(static_cast<int>(c));
            extents[k] = std::max(extents[k], static_cast<int>(c));
        }
        ++row;
    }
    if (row == 0) throw std::runtime_error("sites CSV has no data rows: " + path);

    SpatialGrid grid = build_grid(extents);
    if (grid.site_count() != row)
        throw std::runtime_error("sites CSV: row count does not fill the inferred lattice");
    for (std::size_t i = 0; i < row; ++i)
        for (std::size_t k = 0; k < b; ++k)
            if (grid.coords[i * b + k] != static_cast<double>(rowcoords[i * b + k]))
                throw std::runtime_error("sites CSV: sites must be listed in row-major order "
                                         "(mismatch at site_id " + std::to_string(i) + ")");
    return grid;
}

// ---- group CSV: numeric matrix, optional single header row -----------------

inline Matrix read_group_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open group CSV: " + path);
    std::string line;
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells = detail::split_csv_line(line);
        double probe;
        if (first && !detail::parse_double(cells[0], probe)) {
            first = false;  // header row, skip
            continue;
        }
        first = false;
        std::vector<double> vals(cells.size());
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (!detail::parse_double(cells[k], vals[k]))
                throw std::runtime_error("group CSV " + path + " line " + std::to_string(lineno) +
                                         ": cell " + std::to_string(k + 1) + " is not numeric");
        }
        if (!rows.empty() && vals.size() != rows[0].size())
            throw std::runtime_error("group CSV " + path + " line " + std::to_string(lineno) +
                                     ": inconsistent column count");
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw std::runtime_error("group CSV has no data rows: " + path);
    Matrix mtx(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[0].size(); ++j) mtx.at(i, j) = rows[i][j];
    return mtx;
}

inline std::string matrix_to_csv(const Matrix& mtx) {
    std::string out;
    for (std::size_t i = 0; i < mtx.rows; ++i) {
        for (std::size_t j = 0; j < mtx.cols; ++j) {
            if (j) out += ",";
            out += format_double(mtx.at(i, j));
        }
        out += "\n";
    }
    return out;
}

// ---- decisions CSV: site_id,p,weighted_p,rejected,method,threshold ---------

inline std::string decisions_to_csv(const DecisionSet& d, const std::vector<double>& raw_p) {
    if (raw_p.size() != d.rejected.size())
        throw std::invalid_argument("decisions_to_csv: length mismatch");
    std::string out = "site_id,p,weighted_p,rejected,method,threshold\n";
    const std::string name = method_name(d.method);
    const std::string thr = format_double(d.threshold);
    for (std::size_t i = 0; i < d.rejected.size(); ++i) {
        out += std::to_string(i) + "," + format_double(raw_p[i]) + "," +
               format_double(d.weighted_p[i]) + "," + (d.rejected[i] ? "1" : "0") + "," + name +
               "," + thr + "\n";
    }
    return out;
}

inline void write_decisions_csv(const std::string& path, const DecisionSet& d,
                                const std::vector<double>& raw_p) {
    detail::write_file(path, decisions_to_csv(d, raw_p));
}

// ---- diagnostics CSV: site_id,u,p,pi_tau_hat,weight[,oracle_pi] ------------

inline std::string diagnostics_to_csv(const SiteStatistics& stats, const WeightField& field,
                                      const std::vector<double>* oracle_pi = nullptr) {
    std::string out = "site_id,u,p,pi_tau_hat,weight";
    if (oracle_pi) out += ",oracle_pi";
    out += "\n";
    for (std::size_t i = 0; i < stats.size(); ++i) {
        out += std::to_string(i) + "," + format_double(stats.u_stat[i]) + "," +
               format_double(stats.p_value[i]) + "," + format_double(field.pi_tau_hat[i]) + "," +
               format_double(field.weights[i]);
        if (oracle_pi) out += "," + format_double((*oracle_pi)[i]);
        out += "\n";
    }
    return out;
}

// ---- metrics CSV ------------------------------------------------------------

inline std::string metrics_to_csv(const MetricsSummary& summary) {
    std::string out =
        "sweep_param,sweep_value,method,fdr,fdr_se,power_prop,power_prop_se,power_raw,"
        "replications\n";
    for (const MetricsRow& row : summary.rows) {
        out += row.sweep_param + "," + format_double(row.sweep_value) + "," +
               method_name(row.method) + "," + format_double(row.fdr) + "," +
               format_double(row.fdr_se) + "," + format_double(row.power_prop) + "," +
               format_double(row.power_prop_se) + "," + format_double(row.power_raw) + "," +
               std::to_string(row.replications) + "\n";
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    detail::write_file(path, content);
}

}  // namespace napa
