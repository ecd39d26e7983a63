// Forward-backward sweep: forward state RK4, backward adjoint RK4, pointwise
// Hamiltonian-optimal control update with damping. Projection onto the box
// happens inside the update step of every iterate, never after the fact.
// Fixed terminal states are met by an outer shooting loop on the matching
// unknown terminal adjoint components (secant for one unknown, Broyden for
// several).
#pragma once

#include "pmp/control_law.hpp"
#include "pmp/model.hpp"
#include "pmp/odeint.hpp"

namespace pmp {

struct SweepConfig {
    int grid_N = 1001;
    double damping = 0.5; // theta in (0, 1]
    double tol = 1e-8;    // relative total control change
    int max_iterations = 500;
    double shooting_tol = 1e-8;
    int shooting_max_iterations = 50;
    double singular_tol = -1.0; // < 0: auto-scaled 1e-8 * (1 + max |H_u|)

    void validate() const
    {
        if (!(damping > 0.0 && damping <= 1.0))
            throw std::invalid_argument("damping must lie in (0, 1]");
        if (grid_N < 2) throw std::invalid_argument("grid needs at least 2 nodes");
        if (!(tol > 0.0) || !(shooting_tol > 0.0))
            throw std::invalid_argument("tolerances must be positive");
    }
};

struct SweepResult {
    Trajectory trajectory;
    double objective = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<double> control_change_history;
    KktReport kkt;
    std::vector<double> shooting_residuals; // max-norm history, one per outer step
    VectorXd shooting_params;               // recovered terminal adjoints (fixed states)
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> singular_nodes;
    double max_bound_violation = 0.0; // over every stored iterate, all nodes
};

inline MatrixXd default_control_guess(const OcpProblem& p, int N)
{
    MatrixXd u(N, p.m());
    for (int k = 0; k < p.m(); ++k) {
        const double v = p.bounds.fully_bounded(k)
                             ? 0.5 * (p.bounds.lower(k) + p.bounds.upper(k))
                             : clamp(0.0, p.bounds.lower(k), p.bounds.upper(k));
        u.col(k).setConstant(v);
    }
    return u;
}

namespace detail {

inline void clamp_rows(MatrixXd& u, const BoxBounds& b)
{
    for (int k = 0; k < u.cols(); ++k)
        for (int i = 0; i < u.rows(); ++i) u(i, k) = clamp(u(i, k), b.lower(k), b.upper(k));
}

inline double bound_violation(const MatrixXd& u, const BoxBounds& b)
{
    double worst = 0.0;
    for (int k = 0; k < u.cols(); ++k)
        for (int i = 0; i < u.rows(); ++i) {
            if (b.finite_lower(k)) worst = std::max(worst, b.lower(k) - u(i, k));
            if (b.finite_upper(k)) worst = std::max(worst, u(i, k) - b.upper(k));
        }
    return worst;
}

// One full FBSM run. When s_fixed is non-null it supplies terminal adjoint
// values for the fixed-terminal state components (in state order); free
// components always take their transversality value.
inline SweepResult sweep_impl(const OcpProblem& p, const SweepConfig& cfg,
                              const MatrixXd& u_init, const std::vector<ControlRule>& rules,
                              const VectorXd* s_fixed)
{
    cfg.validate();
    const TimeGrid grid(p.t0, p.t1, cfg.grid_N);
    const int N = grid.N;
    if (u_init.rows() != N || u_init.cols() != p.m())
        throw std::invalid_argument("control guess has the wrong shape");

    SweepResult res;
    res.trajectory.grid = grid;
    MatrixXd u = u_init;
    clamp_rows(u, p.bounds);
    res.max_bound_violation = bound_violation(u, p.bounds);

    MatrixXd x, lam;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> singular(N, p.m());
    singular.setConstant(false);
    const double theta = cfg.damping;

    auto forward = [&](const MatrixXd& uc) {
        return rk4_forward(
            [&](double t, const VectorXd& y) {
                return p.dynamics(t, y, interp_linear(uc, grid, t));
            },
            p.boundary.initial, grid);
    };
    auto backward = [&](const MatrixXd& xc, const MatrixXd& uc) {
        const auto tv = transversality(p, xc.row(N - 1).transpose());
        VectorXd lamT(p.n());
        int j = 0;
        for (int i = 0; i < p.n(); ++i) {
            if (tv[i].has_value()) {
                lamT(i) = *tv[i];
            } else {
                if (!s_fixed)
                    throw std::logic_error(
                        "sweep on a fixed-terminal-state problem: use solve()");
                lamT(i) = (*s_fixed)(j++);
            }
        }
        return rk4_backward(
            [&](double t, const VectorXd& y) {
                return adjoint_rhs(p, t, interp_linear(xc, grid, t),
                                   interp_linear(uc, grid, t), y);
            },
            lamT, grid);
    };

    int iter = 0;
    bool converged = false;
    for (; iter < cfg.max_iterations; ++iter) {
        try {
            x = forward(u);
            lam = backward(x, u);
        } catch (const IntegrationError& e) {
            throw std::runtime_error("sweep iteration " + std::to_string(iter + 1) +
                                     ": " + e.what());
        }

        double stol = cfg.singular_tol;
        if (stol < 0.0) {
            double sig_max = 0.0;
            for (int i = 0; i < N; ++i)
                sig_max = std::max(sig_max, hamiltonian_du(p, grid.node(i),
                                                           x.row(i).transpose(),
                                                           u.row(i).transpose(),
                                                           lam.row(i).transpose())
                                                .cwiseAbs()
                                                .maxCoeff());
            stol = 1e-8 * (1.0 + sig_max);
        }

        MatrixXd u_next(N, p.m());
        for (int i = 0; i < N; ++i) {
            auto pw = pointwise_optimize(p, grid.node(i), x.row(i).transpose(),
                                         lam.row(i).transpose(), u.row(i).transpose(),
                                         rules, stol, i);
            u_next.row(i) = pw.u.transpose();
            for (int k = 0; k < p.m(); ++k) singular(i, k) = pw.singular[k];
        }
        u_next = theta * u_next + (1.0 - theta) * u;
        clamp_rows(u_next, p.bounds); // no-op guard: convex blend stays in the box

        double change_num = 0.0, change_den = 0.0;
        for (int i = 0; i < N; ++i) {
            change_num += (u_next.row(i) - u.row(i)).norm();
            change_den += u_next.row(i).norm();
        }
        const double change = change_num / std::max(1.0, change_den);
        res.control_change_history.push_back(change);
        u = u_next;
        res.max_bound_violation =
            std::max(res.max_bound_violation, bound_violation(u, p.bounds));
        if (change <= cfg.tol) {
            converged = true;
            ++iter;
            break;
        }
    }

    // refresh state and adjoint so the stored trajectory is consistent with
    // the final control
    x = forward(u);
    lam = backward(x, u);

    res.trajectory.x = x;
    res.trajectory.lam = lam;
    res.trajectory.u = u;
    res.converged = converged;
    res.iterations = iter;
    res.singular_nodes = singular;

    VectorXd f_nodes(N);
    for (int i = 0; i < N; ++i)
        f_nodes(i) = p.running(grid.node(i), x.row(i).transpose(), u.row(i).transpose());
    res.objective = quadrature(f_nodes, grid) + p.terminal_payoff(x.row(N - 1).transpose());

    double stol = cfg.singular_tol;
    res.kkt = sign_condition_audit(p, res.trajectory, 1e-6, &rules, stol);
    return res;
}

} // namespace detail

// FBSM for problems whose terminal states are all free.
inline SweepResult sweep(const OcpProblem& p, const SweepConfig& cfg = {},
                         const MatrixXd* u_init = nullptr)
{
    if (!p.finalized()) throw std::invalid_argument("problem was not finalized");
    for (const auto& tc : p.boundary.terminal)
        if (tc.is_fixed)
            throw std::invalid_argument(
                "sweep requires free terminal states; use solve() for fixed ones");
    const auto rules = detect_rules(p);
    const MatrixXd u0 = u_init ? *u_init : default_control_guess(p, cfg.grid_N);
    return detail::sweep_impl(p, cfg, u0, rules, nullptr);
}

// FBSM wrapped in shooting on the unknown terminal adjoints, one per fixed
// terminal state. Residual F(s) = x_fixed(t1; s) - target.
inline SweepResult solve(const OcpProblem& p, const SweepConfig& cfg = {},
                         const MatrixXd* u_init = nullptr)
{
    if (!p.finalized()) throw std::invalid_argument("problem was not finalized");
    const auto rules = detect_rules(p);
    MatrixXd u_warm = u_init ? *u_init : default_control_guess(p, cfg.grid_N);

    std::vector<int> fixed_idx;
    for (int i = 0; i < p.n(); ++i)
        if (p.boundary.terminal[i].is_fixed) fixed_idx.push_back(i);
    const int q = static_cast<int>(fixed_idx.size());

    if (q == 0) return detail::sweep_impl(p, cfg, u_warm, rules, nullptr);

    const int N = cfg.grid_N;
    SweepResult last;
    auto eval_F = [&](const VectorXd& s) {
        last = detail::sweep_impl(p, cfg, u_warm, rules, &s);
        u_warm = last.trajectory.u; // warm start the next inner solve
        VectorXd F(q);
        for (int j = 0; j < q; ++j)
            F(j) = last.trajectory.x(N - 1, fixed_idx[j]) -
                   p.boundary.terminal[fixed_idx[j]].value;
        return F;
    };

    std::vector<double> res_history;
    auto diverging = [&]() {
        const int w = 5;
        if (static_cast<int>(res_history.size()) < w + 1) return false;
        for (std::size_t i = res_history.size() - w; i < res_history.size(); ++i)
            if (res_history[i] < res_history[i - 1]) return false;
        return true;
    };

    VectorXd s = VectorXd::Zero(q);
    VectorXd F = eval_F(s);
    res_history.push_back(F.cwiseAbs().maxCoeff());

    bool shot = F.cwiseAbs().maxCoeff() <= cfg.shooting_tol;
    if (!shot && q == 1) {
        double s0 = s(0), f0 = F(0);
        double s1 = s0 + 1e-4 * (1.0 + std::abs(s0));
        VectorXd sv(1);
        sv << s1;
        double f1 = eval_F(sv)(0);
        res_history.push_back(std::abs(f1));
        for (int it = 0; it < cfg.shooting_max_iterations; ++it) {
            if (std::abs(f1) <= cfg.shooting_tol) {
                shot = true;
                break;
            }
            if (f1 == f0)
                throw std::runtime_error("shooting stalled: residual insensitive to the "
                                         "terminal adjoint");
            const double s2 = s1 - f1 * (s1 - s0) / (f1 - f0);
            s0 = s1;
            f0 = f1;
            s1 = s2;
            sv(0) = s1;
            f1 = eval_F(sv)(0);
            res_history.push_back(std::abs(f1));
            if (diverging())
                throw std::runtime_error("shooting divergence: residual non-decreasing "
                                         "over 5 outer steps");
        }
        s = sv;
        F = VectorXd::Constant(1, f1);
        shot = shot || std::abs(f1) <= cfg.shooting_tol;
    } else if (!shot) {
        // finite-difference Jacobian, then Broyden updates
        MatrixXd J(q, q);
        for (int j = 0; j < q; ++j) {
            VectorXd sh = s;
            const double h = 1e-4 * (1.0 + std::abs(s(j)));
            sh(j) += h;
            J.col(j) = (eval_F(sh) - F) / h;
        }
        for (int it = 0; it < cfg.shooting_max_iterations; ++it) {
            const VectorXd ds = J.colPivHouseholderQr().solve(-F);
            s += ds;
            const VectorXd F_new = eval_F(s);
            res_history.push_back(F_new.cwiseAbs().maxCoeff());
            const VectorXd dF = F_new - F;
            const double dsq = ds.squaredNorm();
            if (dsq > 0.0) J += (dF - J * ds) * ds.transpose() / dsq;
            F = F_new;
            if (F.cwiseAbs().maxCoeff() <= cfg.shooting_tol) {
                shot = true;
                break;
            }
            if (diverging())
                throw std::runtime_error("shooting divergence: residual non-decreasing "
                                         "over 5 outer steps");
        }
    }

    // `last` already holds the sweep at the accepted s (eval_F ran it last)
    last.shooting_residuals = res_history;
    last.shooting_params = s;
    last.converged = last.converged && shot;
    return last;
}

} // namespace pmp
