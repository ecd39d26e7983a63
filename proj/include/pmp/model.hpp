// Problem data model: running/terminal payoff, dynamics, control box,
// boundary conditions, and the Hamiltonian H = f + lam^T g with its partials.
// One H serves both senses; minimize-vs-maximize only changes the pointwise
// control optimizer downstream.
#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pmp/expr.hpp"
#include "pmp/odeint.hpp"

namespace pmp {

enum class Sense { Maximize, Minimize };

constexpr double kInf = std::numeric_limits<double>::infinity();

struct BoxBounds {
    VectorXd lower; // entries may be -inf
    VectorXd upper; // entries may be +inf

    static BoxBounds unbounded(int m)
    {
        BoxBounds b;
        b.lower = VectorXd::Constant(m, -kInf);
        b.upper = VectorXd::Constant(m, kInf);
        return b;
    }
    static BoxBounds box(double lo, double hi)
    {
        BoxBounds b;
        b.lower = VectorXd::Constant(1, lo);
        b.upper = VectorXd::Constant(1, hi);
        return b;
    }

    int m() const { return static_cast<int>(lower.size()); }
    bool finite_lower(int k) const { return std::isfinite(lower(k)); }
    bool finite_upper(int k) const { return std::isfinite(upper(k)); }
    bool fully_bounded(int k) const { return finite_lower(k) && finite_upper(k); }

    void validate() const
    {
        if (lower.size() != upper.size())
            throw std::invalid_argument("bound vectors have mismatched lengths");
        for (int k = 0; k < m(); ++k)
            if (!(lower(k) <= upper(k)))
                throw std::invalid_argument("lower bound exceeds upper bound for control " +
                                            std::to_string(k + 1));
    }
};

struct TerminalCondition {
    bool is_fixed = false;
    double value = 0.0;

    static TerminalCondition free() { return {false, 0.0}; }
    static TerminalCondition fixed(double v) { return {true, v}; }
};

struct BoundarySpec {
    VectorXd initial;                        // one required value per state
    std::vector<TerminalCondition> terminal; // one per state
};

// Native-callback problem hooks. Expression-backed problems never use these.
using RunningFn = std::function<double(double, const VectorXd&, const VectorXd&)>;
using DynamicsFn = std::function<VectorXd(double, const VectorXd&, const VectorXd&)>;
using TerminalFn = std::function<double(const VectorXd&)>;
// Optional analytic partials of H for native problems: fills dH_dx, dH_du.
using HamiltonianGradFn = std::function<void(double, const VectorXd&, const VectorXd&,
                                             const VectorXd&, VectorXd&, VectorXd&)>;
using TerminalGradFn = std::function<VectorXd(const VectorXd&)>;

struct HamiltonianEval {
    double value = 0.0;
    VectorXd dH_dx;
    VectorXd dH_du;
};

class OcpProblem {
public:
    Sense sense = Sense::Maximize;
    double t0 = 0.0;
    double t1 = 1.0;
    std::vector<std::string> state_names;
    std::vector<std::string> control_names;

    // expression entry (leave null for native problems)
    ExprPtr f_src;
    std::vector<ExprPtr> g_src;
    ExprPtr phi_src; // null when there is no terminal payoff

    // native entry
    RunningFn f_fn;
    DynamicsFn g_fn;
    TerminalFn phi_fn;
    HamiltonianGradFn grad_fn;    // optional analytic H_x/H_u
    TerminalGradFn phi_grad_fn;   // optional analytic grad phi

    BoxBounds bounds;
    BoundarySpec boundary;

    int n() const { return static_cast<int>(state_names.size()); }
    int m() const { return static_cast<int>(control_names.size()); }
    bool expression_backed() const { return static_cast<bool>(f_src); }
    bool has_terminal_payoff() const
    {
        return static_cast<bool>(phi_src) || static_cast<bool>(phi_fn);
    }

    // Validates the definition and compiles any expressions against the
    // slot layout [t, states..., controls...]. Must be called once after the
    // fields are filled; the problem is immutable afterwards.
    void finalize()
    {
        if (!(t0 < t1)) throw std::invalid_argument("problem requires t0 < t1");
        if (state_names.empty()) throw std::invalid_argument("problem has no states");
        if (control_names.empty()) throw std::invalid_argument("problem has no controls");
        check_unique_names();
        bounds.validate();
        if (bounds.m() != m())
            throw std::invalid_argument("bounds dimension does not match control count");
        if (boundary.initial.size() != n())
            throw std::invalid_argument("initial condition dimension does not match state count");
        if (static_cast<int>(boundary.terminal.size()) != n())
            throw std::invalid_argument("terminal condition count does not match state count");

        if (expression_backed()) {
            if (static_cast<int>(g_src.size()) != n())
                throw std::invalid_argument("dynamics count does not match state count");
            slot_names_.clear();
            slot_names_.push_back("t");
            for (const auto& s : state_names) slot_names_.push_back(s);
            for (const auto& c : control_names) slot_names_.push_back(c);
            f_c_ = CompiledExpr(f_src, slot_names_);
            g_c_.clear();
            for (const auto& g : g_src) g_c_.emplace_back(g, slot_names_);
            if (phi_src) phi_c_ = CompiledExpr(phi_src, state_names);
        } else {
            if (!f_fn || !g_fn)
                throw std::invalid_argument("native problem needs running payoff and dynamics");
        }
        finalized_ = true;
    }
    bool finalized() const { return finalized_; }

    double running(double t, const VectorXd& x, const VectorXd& u) const
    {
        if (expression_backed()) return f_c_.value(slots(t, x, u));
        return f_fn(t, x, u);
    }

    VectorXd dynamics(double t, const VectorXd& x, const VectorXd& u) const
    {
        if (!expression_backed()) return g_fn(t, x, u);
        const auto s = slots(t, x, u);
        VectorXd g(n());
        for (int i = 0; i < n(); ++i) g(i) = g_c_[i].value(s);
        return g;
    }

    double terminal_payoff(const VectorXd& x_final) const
    {
        if (phi_src) {
            std::vector<double> s(x_final.data(), x_final.data() + x_final.size());
            return phi_c_.value(s);
        }
        if (phi_fn) return phi_fn(x_final);
        return 0.0;
    }

    // internal accessors for the Hamiltonian evaluators
    const CompiledExpr& f_compiled() const { return f_c_; }
    const std::vector<CompiledExpr>& g_compiled() const { return g_c_; }
    const CompiledExpr& phi_compiled() const { return phi_c_; }
    std::vector<double> slots(double t, const VectorXd& x, const VectorXd& u) const
    {
        std::vector<double> s(1 + n() + m());
        s[0] = t;
        for (int i = 0; i < n(); ++i) s[1 + i] = x(i);
        for (int k = 0; k < m(); ++k) s[1 + n() + k] = u(k);
        return s;
    }

private:
    void check_unique_names() const
    {
        std::vector<std::string> all = state_names;
        all.insert(all.end(), control_names.begin(), control_names.end());
        all.emplace_back("t");
        for (std::size_t i = 0; i < all.size(); ++i)
            for (std::size_t j = i + 1; j < all.size(); ++j)
                if (all[i] == all[j])
                    throw std::invalid_argument("duplicate declared name '" + all[i] + "'");
    }

    std::vector<std::string> slot_names_;
    CompiledExpr f_c_;
    std::vector<CompiledExpr> g_c_;
    CompiledExpr phi_c_;
    bool finalized_ = false;
};

namespace detail {

inline void check_dims(const OcpProblem& p, const VectorXd& x, const VectorXd& u,
                       const VectorXd& lam)
{
    if (x.size() != p.n() || u.size() != p.m() || lam.size() != p.n())
        throw std::invalid_argument("dimension mismatch in Hamiltonian evaluation");
}

// central finite differences on the H value for native problems lacking
// analytic partials; step max(1e-6, 1e-6 |v|)
inline double fd_step(double v) { return std::max(1e-6, 1e-6 * std::abs(v)); }

} // namespace detail

inline double hamiltonian_value(const OcpProblem& p, double t, const VectorXd& x,
                                const VectorXd& u, const VectorXd& lam)
{
    detail::check_dims(p, x, u, lam);
    return p.running(t, x, u) + lam.dot(p.dynamics(t, x, u));
}

// H_x only (the adjoint right-hand side needs nothing else)
inline VectorXd hamiltonian_dx(const OcpProblem& p, double t, const VectorXd& x,
                               const VectorXd& u, const VectorXd& lam)
{
    detail::check_dims(p, x, u, lam);
    VectorXd dx(p.n());
    if (p.expression_backed()) {
        const auto s = p.slots(t, x, u);
        for (int j = 0; j < p.n(); ++j) {
            double d = p.f_compiled().derivative(s, 1 + j).der;
            for (int i = 0; i < p.n(); ++i)
                d += lam(i) * p.g_compiled()[i].derivative(s, 1 + j).der;
            dx(j) = d;
        }
        return dx;
    }
    if (p.grad_fn) {
        VectorXd du(p.m());
        p.grad_fn(t, x, u, lam, dx, du);
        return dx;
    }
    for (int j = 0; j < p.n(); ++j) {
        const double h = detail::fd_step(x(j));
        VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        dx(j) = (hamiltonian_value(p, t, xp, u, lam) - hamiltonian_value(p, t, xm, u, lam)) /
                (2.0 * h);
    }
    return dx;
}

// H_u only (switching functions, control updates)
inline VectorXd hamiltonian_du(const OcpProblem& p, double t, const VectorXd& x,
                               const VectorXd& u, const VectorXd& lam)
{
    detail::check_dims(p, x, u, lam);
    VectorXd du(p.m());
    if (p.expression_backed()) {
        const auto s = p.slots(t, x, u);
        for (int k = 0; k < p.m(); ++k) {
            double d = p.f_compiled().derivative(s, 1 + p.n() + k).der;
            for (int i = 0; i < p.n(); ++i)
                d += lam(i) * p.g_compiled()[i].derivative(s, 1 + p.n() + k).der;
            du(k) = d;
        }
        return du;
    }
    if (p.grad_fn) {
        VectorXd dx(p.n());
        p.grad_fn(t, x, u, lam, dx, du);
        return du;
    }
    for (int k = 0; k < p.m(); ++k) {
        const double h = detail::fd_step(u(k));
        VectorXd up = u, um = u;
        up(k) += h;
        um(k) -= h;
        du(k) = (hamiltonian_value(p, t, x, up, lam) - hamiltonian_value(p, t, x, um, lam)) /
                (2.0 * h);
    }
    return du;
}

inline HamiltonianEval hamiltonian(const OcpProblem& p, double t, const VectorXd& x,
                                   const VectorXd& u, const VectorXd& lam)
{
    HamiltonianEval out;
    out.value = hamiltonian_value(p, t, x, u, lam);
    out.dH_dx = hamiltonian_dx(p, t, x, u, lam);
    out.dH_du = hamiltonian_du(p, t, x, u, lam);
    return out;
}

inline VectorXd adjoint_rhs(const OcpProblem& p, double t, const VectorXd& x,
                            const VectorXd& u, const VectorXd& lam)
{
    return -hamiltonian_dx(p, t, x, u, lam);
}

// Terminal adjoint values: grad phi for free components, unknown (to be found
// by shooting) for fixed ones.
inline std::vector<std::optional<double>> transversality(const OcpProblem& p,
                                                         const VectorXd& x_final)
{
    if (x_final.size() != p.n())
        throw std::invalid_argument("dimension mismatch in transversality evaluation");
    std::vector<std::optional<double>> out(p.n());
    VectorXd grad = VectorXd::Zero(p.n());
    if (p.phi_src) {
        std::vector<double> s(x_final.data(), x_final.data() + x_final.size());
        for (int i = 0; i < p.n(); ++i)
            grad(i) = p.phi_compiled().derivative(s, i).der;
    } else if (p.phi_grad_fn) {
        grad = p.phi_grad_fn(x_final);
    } else if (p.phi_fn) {
        for (int i = 0; i < p.n(); ++i) {
            const double h = detail::fd_step(x_final(i));
            VectorXd xp = x_final, xm = x_final;
            xp(i) += h;
            xm(i) -= h;
            grad(i) = (p.phi_fn(xp) - p.phi_fn(xm)) / (2.0 * h);
        }
    }
    for (int i = 0; i < p.n(); ++i) {
        if (p.boundary.terminal[i].is_fixed)
            out[i] = std::nullopt;
        else
            out[i] = grad(i);
    }
    return out;
}

} // namespace pmp
