// Fixed-step classical RK4 over a shared uniform grid, with linear
// interpolation between nodes and composite quadrature for objectives.
// Smooth, non-stiff problems only; no adaptive stepping.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pmp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& msg, int node)
        : std::runtime_error(msg), node_(node)
    {
    }
    int node() const { return node_; }

private:
    int node_;
};

struct TimeGrid {
    double t0 = 0.0;
    double t1 = 1.0;
    int N = 1001;

    TimeGrid() = default;
    TimeGrid(double t0_, double t1_, int N_) : t0(t0_), t1(t1_), N(N_)
    {
        if (N < 2) throw std::invalid_argument("time grid needs at least 2 nodes");
        if (!(t1 > t0)) throw std::invalid_argument("time grid requires t1 > t0");
    }

    double h() const { return (t1 - t0) / (N - 1); }
    double node(int i) const { return t0 + i * h(); }
};

// Rows are nodes; columns are vector components. lam stays empty (0 rows)
// until a backward sweep fills it.
struct Trajectory {
    TimeGrid grid;
    MatrixXd x;   // N x n
    MatrixXd lam; // N x n or empty
    MatrixXd u;   // N x m

    bool has_adjoint() const { return lam.rows() == grid.N; }
};

// Linear interpolation of one row-sampled quantity at time t (clamped to the
// grid span; exact at nodes).
inline VectorXd interp_linear(const MatrixXd& values, const TimeGrid& grid, double t)
{
    const double h = grid.h();
    double s = (t - grid.t0) / h;
    if (s <= 0.0) return values.row(0).transpose();
    if (s >= grid.N - 1) return values.row(grid.N - 1).transpose();
    const int i = static_cast<int>(s);
    const double w = s - i;
    return ((1.0 - w) * values.row(i) + w * values.row(i + 1)).transpose();
}

namespace detail {

inline void check_finite(const VectorXd& y, double t, int node)
{
    if (!y.allFinite())
        throw IntegrationError(
            "non-finite value during integration at node " + std::to_string(node) +
                " (t = " + std::to_string(t) + ")",
            node);
}

} // namespace detail

// Classical RK4 from grid.t0 to grid.t1. rhs: (t, y) -> dy/dt.
template <class Rhs>
MatrixXd rk4_forward(const Rhs& rhs, const VectorXd& y0, const TimeGrid& grid)
{
    const double h = grid.h();
    MatrixXd out(grid.N, y0.size());
    VectorXd y = y0;
    detail::check_finite(y, grid.t0, 0);
    out.row(0) = y.transpose();
    for (int i = 0; i + 1 < grid.N; ++i) {
        const double t = grid.node(i);
        const VectorXd k1 = rhs(t, y);
        const VectorXd k2 = rhs(t + 0.5 * h, VectorXd(y + 0.5 * h * k1));
        const VectorXd k3 = rhs(t + 0.5 * h, VectorXd(y + 0.5 * h * k2));
        const VectorXd k4 = rhs(t + h, VectorXd(y + h * k3));
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        detail::check_finite(y, grid.node(i + 1), i + 1);
        out.row(i + 1) = y.transpose();
    }
    return out;
}

// Same scheme run from grid.t1 down to grid.t0 with step -h, storing values
// at the shared nodes. rhs still maps (t, y) to dy/dt.
template <class Rhs>
MatrixXd rk4_backward(const Rhs& rhs, const VectorXd& y_final, const TimeGrid& grid)
{
    const double h = -grid.h();
    MatrixXd out(grid.N, y_final.size());
    VectorXd y = y_final;
    detail::check_finite(y, grid.t1, grid.N - 1);
    out.row(grid.N - 1) = y.transpose();
    for (int i = grid.N - 1; i > 0; --i) {
        const double t = grid.node(i);
        const VectorXd k1 = rhs(t, y);
        const VectorXd k2 = rhs(t + 0.5 * h, VectorXd(y + 0.5 * h * k1));
        const VectorXd k3 = rhs(t + 0.5 * h, VectorXd(y + 0.5 * h * k2));
        const VectorXd k4 = rhs(t + h, VectorXd(y + h * k3));
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        detail::check_finite(y, grid.node(i - 1), i - 1);
        out.row(i - 1) = y.transpose();
    }
    return out;
}

// Composite Simpson when the node count is odd (even interval count),
// composite trapezoid otherwise.
inline double quadrature(const VectorXd& values, const TimeGrid& grid)
{
    if (values.size() != grid.N)
        throw std::invalid_argument("quadrature needs one value per grid node");
    if (grid.N < 2) throw std::invalid_argument("quadrature needs at least 2 nodes");
    const double h = grid.h();
    if (grid.N % 2 == 1) {
        double sum = values(0) + values(grid.N - 1);
        for (int i = 1; i < grid.N - 1; ++i) sum += (i % 2 == 1 ? 4.0 : 2.0) * values(i);
        return sum * h / 3.0;
    }
    double sum = 0.5 * (values(0) + values(grid.N - 1));
    for (int i = 1; i < grid.N - 1; ++i) sum += values(i);
    return sum * h;
}

} // namespace pmp
