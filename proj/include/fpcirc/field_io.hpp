#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fpcirc/field_calculus.hpp"

namespace fpcirc {

/// Full round-trip precision for doubles written as text.
inline std::ostream& csv_precision(std::ostream& os) {
    os << std::setprecision(17);
    return os;
}

inline void write_field_csv(std::ostream& os, const ScalarField& f) {
    const Grid2D& g = f.grid;
    os << csv_precision << "x,y,value\n";
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) os << g.x(i) << ',' << g.y(j) << ',' << f(i, j) << '\n';
}

inline void write_field_csv(std::ostream& os, const VectorField& F) {
    const Grid2D& g = F.grid();
    os << csv_precision << "x,y,vx,vy\n";
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) os << g.x(i) << ',' << g.y(j) << ',' << F.x(i, j) << ',' << F.y(i, j) << '\n';
}

template <class Field>
void write_field_csv(const std::filesystem::path& path, const Field& f) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    write_field_csv(os, f);
}

namespace detail {

inline std::vector<double> split_doubles(const std::string& line) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    return out;
}

}  // namespace detail

/// Reads a scalar field written by write_field_csv; node coordinates must match the grid.
inline ScalarField read_field_csv(const std::filesystem::path& path, const Grid2D& g) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != "x,y,value") throw Error(path.string() + ": unexpected header '" + line + "'");
    ScalarField f(g);
    const double tol = 1e-12 * g.L;
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) {
            if (!std::getline(is, line)) throw Error(path.string() + ": truncated field file");
            const auto row = detail::split_doubles(line);
            if (row.size() != 3 || std::abs(row[0] - g.x(i)) > tol || std::abs(row[1] - g.y(j)) > tol)
                throw GridMismatch(path.string() + ": node coordinates do not match the grid");
            f(i, j) = row[2];
        }
    return f;
}

}  // namespace fpcirc
