// CSV serialization for trajectories, audits, phase tables, comparisons and
// gain schedules: comma separators, '.' decimal point, LF line endings, a
// mandatory header row, and 17 significant digits so every double survives a
// write/read round trip bit-identically.
#pragma once

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "pmp/diagnostics.hpp"
#include "pmp/lqr.hpp"

namespace pmp {

inline std::string csv_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& cells)
{
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) os << ',';
        os << cells[i];
    }
    os << '\n';
}

} // namespace detail

// Column order: t, states in declaration order, adjoints lambda1..lambdaN,
// controls u1..uM, then optional switching-function columns sigma1..sigmaM.
inline void write_trajectory_csv(std::ostream& os, const OcpProblem& p,
                                 const Trajectory& traj, const MatrixXd* sigma = nullptr)
{
    std::vector<std::string> row;
    row.push_back("t");
    for (const auto& s : p.state_names) row.push_back(s);
    for (int i = 1; i <= p.n(); ++i) row.push_back("lambda" + std::to_string(i));
    for (int k = 1; k <= p.m(); ++k) row.push_back("u" + std::to_string(k));
    if (sigma)
        for (int k = 1; k <= p.m(); ++k) row.push_back("sigma" + std::to_string(k));
    detail::write_csv_row(os, row);

    for (int i = 0; i < traj.grid.N; ++i) {
        row.clear();
        row.push_back(csv_number(traj.grid.node(i)));
        for (int j = 0; j < p.n(); ++j) row.push_back(csv_number(traj.x(i, j)));
        for (int j = 0; j < p.n(); ++j) row.push_back(csv_number(traj.lam(i, j)));
        for (int k = 0; k < p.m(); ++k) row.push_back(csv_number(traj.u(i, k)));
        if (sigma)
            for (int k = 0; k < p.m(); ++k) row.push_back(csv_number((*sigma)(i, k)));
        detail::write_csv_row(os, row);
    }
}

// Column order: t, then S row-major (S11, S12, ..), then K row-major.
inline void write_gains_csv(std::ostream& os, const RiccatiSolution& sol)
{
    const int n = sol.S.empty() ? 0 : static_cast<int>(sol.S[0].rows());
    const int m = sol.K.empty() ? 0 : static_cast<int>(sol.K[0].rows());
    std::vector<std::string> row;
    row.push_back("t");
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j)
            row.push_back("S" + std::to_string(i) + std::to_string(j));
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= n; ++j)
            row.push_back("K" + std::to_string(i) + std::to_string(j));
    detail::write_csv_row(os, row);

    for (int node = 0; node < sol.grid.N; ++node) {
        row.clear();
        row.push_back(csv_number(sol.grid.node(node)));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) row.push_back(csv_number(sol.S[node](i, j)));
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) row.push_back(csv_number(sol.K[node](i, j)));
        detail::write_csv_row(os, row);
    }
}

// Columns per control component: activity code, dH/du, sign-condition
// residual, singular flag.
inline void write_kkt_csv(std::ostream& os, const TimeGrid& grid, const KktReport& kkt)
{
    const int m = static_cast<int>(kkt.dH_du.cols());
    std::vector<std::string> row;
    row.push_back("t");
    for (int k = 1; k <= m; ++k) row.push_back("activity" + std::to_string(k));
    for (int k = 1; k <= m; ++k) row.push_back("dHdu" + std::to_string(k));
    for (int k = 1; k <= m; ++k) row.push_back("residual" + std::to_string(k));
    for (int k = 1; k <= m; ++k) row.push_back("singular" + std::to_string(k));
    detail::write_csv_row(os, row);

    for (int i = 0; i < grid.N; ++i) {
        row.clear();
        row.push_back(csv_number(grid.node(i)));
        for (int k = 0; k < m; ++k) row.push_back(std::to_string(kkt.activity(i, k)));
        for (int k = 0; k < m; ++k) row.push_back(csv_number(kkt.dH_du(i, k)));
        for (int k = 0; k < m; ++k) row.push_back(csv_number(kkt.residual(i, k)));
        for (int k = 0; k < m; ++k) row.push_back(kkt.singular(i, k) ? "1" : "0");
        detail::write_csv_row(os, row);
    }
}

inline void write_phases_csv(std::ostream& os, const PhaseSegmentation& seg)
{
    detail::write_csv_row(os, {"control", "t_start", "t_end", "activity"});
    for (std::size_t k = 0; k < seg.per_control.size(); ++k)
        for (const auto& s : seg.per_control[k])
            detail::write_csv_row(os, {"u" + std::to_string(k + 1), csv_number(s.t_start),
                                       csv_number(s.t_end), activity_name(s.activity)});
}

inline void write_comparison_csv(std::ostream& os, const ComparisonReport& rep)
{
    const int m = static_cast<int>(rep.projected.trajectory.u.cols());
    std::vector<std::string> row;
    row.push_back("t");
    for (int k = 1; k <= m; ++k) row.push_back("u_projected" + std::to_string(k));
    if (rep.clipped_available)
        for (int k = 1; k <= m; ++k) row.push_back("u_clipped" + std::to_string(k));
    detail::write_csv_row(os, row);

    const TimeGrid& grid = rep.projected.trajectory.grid;
    for (int i = 0; i < grid.N; ++i) {
        row.clear();
        row.push_back(csv_number(grid.node(i)));
        for (int k = 0; k < m; ++k)
            row.push_back(csv_number(rep.projected.trajectory.u(i, k)));
        if (rep.clipped_available)
            for (int k = 0; k < m; ++k) row.push_back(csv_number(rep.clipped.u(i, k)));
        detail::write_csv_row(os, row);
    }
}

struct CsvTable {
    std::vector<std::string> header;
    MatrixXd values; // rows x columns
};

// Strict reader for files this library wrote: header row, then uniform
// numeric rows.
inline CsvTable read_csv(std::istream& is)
{
    CsvTable table;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("CSV file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        table.header.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }

    std::vector<double> flat;
    int rows = 0;
    const int cols = static_cast<int>(table.header.size());
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        int c = 0;
        start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string cell = line.substr(start, comma - start);
            const char* begin = cell.c_str();
            char* end = nullptr;
            flat.push_back(std::strtod(begin, &end));
            if (end == begin || *end != '\0')
                throw std::runtime_error("CSV cell '" + cell + "' is not numeric (row " +
                                         std::to_string(rows + 2) + ")");
            ++c;
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (c != cols)
            throw std::runtime_error("CSV row " + std::to_string(rows + 2) + " has " +
                                     std::to_string(c) + " cells, expected " +
                                     std::to_string(cols));
        ++rows;
    }
    table.values.resize(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) table.values(i, j) = flat[i * cols + j];
    return table;
}

} // namespace pmp
