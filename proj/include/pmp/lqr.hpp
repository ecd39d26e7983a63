// Finite-horizon continuous-time LQR: backward Riccati matrix ODE with
// per-step symmetrization, gain schedule K = R^{-1} B^T S by linear solve,
// closed-loop state integration, and a bridge that rewraps the LQR data as a
// generic minimize-sense problem for cross-checking against the sweep solver.
#pragma once

#include <utility>

#include "pmp/model.hpp"
#include "pmp/odeint.hpp"

namespace pmp {

// Matrix-valued function of time: a constant matrix or one expression of t
// per entry.
class MatrixFn {
public:
    MatrixFn() = default;
    MatrixFn(MatrixXd constant) : constant_(std::move(constant)), is_constant_(true) {}
    MatrixFn(std::vector<std::vector<ExprPtr>> entries)
    {
        rows_ = static_cast<int>(entries.size());
        cols_ = rows_ ? static_cast<int>(entries[0].size()) : 0;
        const std::vector<std::string> layout{"t"};
        for (auto& row : entries) {
            if (static_cast<int>(row.size()) != cols_)
                throw std::invalid_argument("ragged matrix expression");
            for (auto& e : row) exprs_.emplace_back(std::move(e), layout);
        }
        is_constant_ = false;
    }

    bool is_constant() const { return is_constant_; }
    int rows() const { return is_constant_ ? static_cast<int>(constant_.rows()) : rows_; }
    int cols() const { return is_constant_ ? static_cast<int>(constant_.cols()) : cols_; }

    MatrixXd operator()(double t) const
    {
        if (is_constant_) return constant_;
        MatrixXd out(rows_, cols_);
        const double slot[1] = {t};
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j)
                out(i, j) = exprs_[i * cols_ + j].value(std::span<const double>(slot, 1));
        return out;
    }

private:
    MatrixXd constant_;
    std::vector<CompiledExpr> exprs_;
    int rows_ = 0, cols_ = 0;
    bool is_constant_ = true;
};

namespace detail {

inline void require_symmetric(const MatrixXd& M, const std::string& name)
{
    const double scale = 1.0 + M.cwiseAbs().maxCoeff();
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw std::invalid_argument(name + " must be symmetric");
}

inline double min_eigenvalue(const MatrixXd& M)
{
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
    return es.eigenvalues().minCoeff();
}

inline void require_psd(const MatrixXd& M, const std::string& name, double floor)
{
    require_symmetric(M, name);
    if (min_eigenvalue(M) < floor)
        throw std::invalid_argument(name + " violates its definiteness requirement");
}

} // namespace detail

struct LqrProblem {
    MatrixFn A, B, Q, R;
    MatrixXd M;  // terminal weight
    double T = 1.0;
    VectorXd x0;

    int n() const { return static_cast<int>(x0.size()); }
    int m() const { return B.cols(); }

    // Definiteness gates: Q PSD (eigenvalues >= -1e-10), R PD (>= 1e-12),
    // M symmetric PSD. Time-varying entries are sampled at t = 0 and t = T.
    void finalize()
    {
        if (!(T > 0.0)) throw std::invalid_argument("horizon must be positive");
        const int nn = n();
        if (A.rows() != nn || A.cols() != nn)
            throw std::invalid_argument("A must be n x n");
        if (B.rows() != nn) throw std::invalid_argument("B must have n rows");
        const int mm = B.cols();
        if (Q.rows() != nn || Q.cols() != nn)
            throw std::invalid_argument("Q must be n x n");
        if (R.rows() != mm || R.cols() != mm)
            throw std::invalid_argument("R must be m x m");
        if (M.rows() != nn || M.cols() != nn)
            throw std::invalid_argument("terminal weight must be n x n");
        detail::require_psd(M, "terminal weight", -1e-10);
        for (double t : {0.0, T}) {
            detail::require_psd(Q(t), "Q", -1e-10);
            detail::require_psd(R(t), "R", 1e-12);
            if (Q.is_constant() && R.is_constant()) break;
        }
        finalized_ = true;
    }
    bool finalized() const { return finalized_; }

private:
    bool finalized_ = false;
};

struct RiccatiSolution {
    TimeGrid grid;
    std::vector<MatrixXd> S; // n x n per node
    std::vector<MatrixXd> K; // m x n per node
    double max_presym_asymmetry = 0.0; // worst ||S - S^T|| seen before symmetrizing
};

namespace detail {

inline MatrixXd gain_from(const MatrixXd& R, const MatrixXd& B, const MatrixXd& S)
{
    Eigen::FullPivLU<MatrixXd> lu(R);
    if (!lu.isInvertible())
        throw std::runtime_error("R is singular within tolerance; cannot form the gain");
    return lu.solve(B.transpose() * S);
}

} // namespace detail

inline RiccatiSolution riccati_solve(const LqrProblem& p, int N = 1001)
{
    if (!p.finalized()) throw std::invalid_argument("LQR problem was not finalized");
    RiccatiSolution sol;
    sol.grid = TimeGrid(0.0, p.T, N);
    sol.S.resize(N);
    sol.K.resize(N);

    auto rhs = [&](double t, const MatrixXd& S) -> MatrixXd {
        const MatrixXd A = p.A(t), B = p.B(t);
        // B R^{-1} B^T, with R inverted by a rank-revealing solve
        const MatrixXd BRB = B * detail::gain_from(p.R(t), B, MatrixXd::Identity(p.n(), p.n()));
        return -(A.transpose() * S + S * A - S * BRB * S + p.Q(t));
    };

    const double h = -sol.grid.h();
    MatrixXd S = p.M; // assigned, not integrated: the terminal node is exact
    sol.S[N - 1] = S;
    for (int i = N - 1; i > 0; --i) {
        const double t = sol.grid.node(i);
        const MatrixXd k1 = rhs(t, S);
        const MatrixXd k2 = rhs(t + 0.5 * h, S + 0.5 * h * k1);
        const MatrixXd k3 = rhs(t + 0.5 * h, S + 0.5 * h * k2);
        const MatrixXd k4 = rhs(t + h, S + h * k3);
        S += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!S.allFinite())
            throw IntegrationError("Riccati flow left the finite range at node " +
                                       std::to_string(i - 1) + " (t = " +
                                       std::to_string(sol.grid.node(i - 1)) + ")",
                                   i - 1);
        sol.max_presym_asymmetry = std::max(
            sol.max_presym_asymmetry, (S - S.transpose()).cwiseAbs().maxCoeff());
        S = 0.5 * (S + S.transpose()).eval();
        sol.S[i - 1] = S;
    }
    for (int i = 0; i < N; ++i) {
        const double t = sol.grid.node(i);
        sol.K[i] = detail::gain_from(p.R(t), p.B(t), sol.S[i]);
    }
    return sol;
}

// Forward integration of x' = (A - B K) x with the gain interpolated
// linearly between nodes; fills u = -K x and lam = S x.
inline Trajectory closed_loop(const LqrProblem& p, const RiccatiSolution& sol)
{
    const int N = sol.grid.N;
    const int n = p.n(), m = p.m();
    MatrixXd Kflat(N, m * n);
    for (int i = 0; i < N; ++i)
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) Kflat(i, r * n + c) = sol.K[i](r, c);

    auto K_at = [&](double t) {
        const VectorXd flat = interp_linear(Kflat, sol.grid, t);
        MatrixXd K(m, n);
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < n; ++c) K(r, c) = flat(r * n + c);
        return K;
    };

    Trajectory traj;
    traj.grid = sol.grid;
    traj.x = rk4_forward(
        [&](double t, const VectorXd& y) -> VectorXd {
            return (p.A(t) - p.B(t) * K_at(t)) * y;
        },
        p.x0, sol.grid);
    traj.u.resize(N, m);
    traj.lam.resize(N, n);
    for (int i = 0; i < N; ++i) {
        const VectorXd xi = traj.x.row(i).transpose();
        traj.u.row(i) = (-sol.K[i] * xi).transpose();
        traj.lam.row(i) = (sol.S[i] * xi).transpose();
    }
    return traj;
}

// Rewraps the LQR data as a generic minimize-sense problem with exact
// Hamiltonian partials, so the sweep solver can cross-check the Riccati
// route through an independent code path.
inline OcpProblem lqr_as_ocp(const LqrProblem& p)
{
    if (!p.finalized()) throw std::invalid_argument("LQR problem was not finalized");
    OcpProblem ocp;
    ocp.sense = Sense::Minimize;
    ocp.t0 = 0.0;
    ocp.t1 = p.T;
    for (int i = 0; i < p.n(); ++i) ocp.state_names.push_back("x" + std::to_string(i + 1));
    for (int k = 0; k < p.m(); ++k) ocp.control_names.push_back("u" + std::to_string(k + 1));
    ocp.f_fn = [p](double t, const VectorXd& x, const VectorXd& u) {
        return 0.5 * (x.dot(p.Q(t) * x) + u.dot(p.R(t) * u));
    };
    ocp.g_fn = [p](double t, const VectorXd& x, const VectorXd& u) -> VectorXd {
        return p.A(t) * x + p.B(t) * u;
    };
    ocp.grad_fn = [p](double t, const VectorXd& x, const VectorXd& u, const VectorXd& lam,
                      VectorXd& dx, VectorXd& du) {
        dx = p.Q(t) * x + p.A(t).transpose() * lam;
        du = p.R(t) * u + p.B(t).transpose() * lam;
    };
    if (p.M.cwiseAbs().maxCoeff() > 0.0) {
        const MatrixXd M = p.M;
        ocp.phi_fn = [M](const VectorXd& x) { return 0.5 * x.dot(M * x); };
        ocp.phi_grad_fn = [M](const VectorXd& x) -> VectorXd { return M * x; };
    }
    ocp.bounds = BoxBounds::unbounded(p.m());
    ocp.boundary.initial = p.x0;
    ocp.boundary.terminal.assign(p.n(), TerminalCondition::free());
    ocp.finalize();
    return ocp;
}

inline LqrProblem lqr_scalar_problem(double T = 1.0, double x0 = 1.0)
{
    LqrProblem p;
    p.A = MatrixFn(MatrixXd::Zero(1, 1));
    p.B = MatrixFn(MatrixXd::Ones(1, 1));
    p.Q = MatrixFn(MatrixXd::Ones(1, 1));
    p.R = MatrixFn(MatrixXd::Ones(1, 1));
    p.M = MatrixXd::Zero(1, 1);
    p.T = T;
    p.x0 = VectorXd::Constant(1, x0);
    p.finalize();
    return p;
}

} // namespace pmp
