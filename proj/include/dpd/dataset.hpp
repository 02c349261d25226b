#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace dpd {

enum class Origin : std::uint8_t { Inlier = 0, Outlier = 1 };

struct Provenance {
    double xi = 0.0;
    std::uint64_t seed = 0;
    bool fixed_outlier_count = false;
    std::string source = "user";
};

/// Observations x_1..x_n stored row-major. Origin labels are diagnostics only;
/// estimators never read them.
struct Dataset {
    std::size_t dim = 1;
    std::vector<double> values;
    std::vector<Origin> origin;
    Provenance provenance;

    Dataset() = default;
    Dataset(std::size_t d, std::vector<double> v) : dim(d), values(std::move(v)), origin(values.size() / d, Origin::Inlier) {}
    Dataset(std::initializer_list<double> v) : Dataset(1, std::vector<double>(v)) {}

    std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
    bool empty() const { return size() == 0; }
    std::span<const double> point(std::size_t i) const { return std::span<const double>(values).subspan(i * dim, dim); }
    std::size_t outlier_count() const {
        std::size_t c = 0;
        for (auto o : origin) c += (o == Origin::Outlier);
        return c;
    }
};

/// One row per point: x_1..x_d then the origin label (0 inlier, 1 outlier).
inline void write_csv(const Dataset& data, std::ostream& os) {
    for (std::size_t k = 1; k <= data.dim; ++k) os << "x_" << k << ',';
    os << "origin\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.point(i)) os << v << ',';
        os << (i < data.origin.size() ? static_cast<int>(data.origin[i]) : 0) << '\n';
    }
}

inline void write_csv(const Dataset& data, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open " + path + " for writing");
    write_csv(data, os);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    return cells;
}

inline std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::size_t used = 0;
    try {
        const double v = std::stod(s, &used);
        if (used != s.size()) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace detail

/// Reads numeric rows. A non-numeric first line is a header; a header column
/// named "origin" is read as the label column, everything else as coordinates.
inline Dataset read_csv(std::istream& is, const std::string& name = "<stream>") {
    Dataset data;
    data.dim = 0;
    std::optional<std::size_t> origin_col;
    std::string line;
    std::size_t line_no = 0;
    std::size_t columns = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = detail::split_csv_line(line);
        if (columns == 0) {
            columns = cells.size();
            if (!detail::parse_double(cells[0])) {
                for (std::size_t c = 0; c < cells.size(); ++c)
                    if (cells[c] == "origin") origin_col = c;
                data.dim = columns - (origin_col ? 1 : 0);
                continue;
            }
            data.dim = columns;
        }
        if (cells.size() != columns)
            throw ConfigError(name + ":" + std::to_string(line_no) + ": expected " + std::to_string(columns) + " columns");
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto v = detail::parse_double(cells[c]);
            if (!v) throw ConfigError(name + ":" + std::to_string(line_no) + ": non-numeric cell '" + cells[c] + "'");
            if (origin_col && c == *origin_col) data.origin.push_back(*v != 0.0 ? Origin::Outlier : Origin::Inlier);
            else data.values.push_back(*v);
        }
        if (!origin_col) data.origin.push_back(Origin::Inlier);
    }
    if (data.dim == 0 || data.values.empty()) throw ConfigError(name + ": no data rows");
    return data;
}

inline Dataset read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path);
    return read_csv(is, path);
}

}  // namespace dpd
