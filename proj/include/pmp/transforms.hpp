// Mechanical problem rewrites: lifting a single higher-order scalar ODE to a
// first-order chain of states, and converting an integral (isoperimetric)
// constraint into an auxiliary state with a fixed terminal value.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "pmp/model.hpp"

namespace pmp {

// A scalar equation x^(order) = g(t, x, x', ..., x^(order-1), controls) with
// one initial value per derivative order and an integrand over the same
// variables. Derivative variables are spelled x, x', x'', ... in source text.
struct HigherOrderSpec {
    Sense sense = Sense::Minimize;
    double t0 = 0.0;
    double t1 = 1.0;
    int order = 1;
    ExprPtr rhs;                               // g, the highest derivative
    std::vector<double> initial;               // values of x, x', ... at t0
    ExprPtr running;                           // integrand f
    ExprPtr terminal;                          // optional payoff (may be null)
    std::vector<std::string> control_names;
    BoxBounds bounds;                          // empty means unbounded
    std::vector<TerminalCondition> terminal_states; // empty means all free
};

namespace detail {

inline std::string derivative_spelling(int k)
{
    std::string s = "x";
    s.append(static_cast<std::size_t>(k), '\'');
    return s;
}

inline void require_known_variables(const ExprPtr& e, const std::vector<std::string>& allowed,
                                    const std::string& where)
{
    if (!e) return;
    std::vector<std::string> vars;
    collect_variables(*e, vars);
    for (const auto& v : vars) {
        bool ok = false;
        for (const auto& a : allowed)
            if (a == v) { ok = true; break; }
        if (!ok)
            throw std::invalid_argument("variable '" + v + "' in the " + where +
                                        " is outside the allowed set");
    }
}

} // namespace detail

// Emits the chain x1' = x2, ..., x_{order}' = g with states x1..x_{order},
// the objective rewritten over the chain variables, initial conditions
// mapped in order, and terminal states free unless terminal_states pins them.
inline OcpProblem reduce_higher_order(const HigherOrderSpec& spec)
{
    if (spec.order < 1) throw std::invalid_argument("derivative order must be at least 1");
    if (static_cast<int>(spec.initial.size()) != spec.order)
        throw std::invalid_argument("expected " + std::to_string(spec.order) +
                                    " initial values, got " +
                                    std::to_string(spec.initial.size()));
    if (!spec.rhs) throw std::invalid_argument("missing dynamics expression");
    if (!spec.running) throw std::invalid_argument("missing objective integrand");

    std::vector<std::string> spellings, targets;
    std::map<std::string, ExprPtr> rename;
    for (int k = 0; k < spec.order; ++k) {
        spellings.push_back(detail::derivative_spelling(k));
        targets.push_back("x" + std::to_string(k + 1));
        rename[spellings.back()] = ExprNode::variable(targets.back());
    }
    for (const auto& c : spec.control_names)
        for (const auto& t : targets)
            if (c == t)
                throw std::invalid_argument("control name '" + c +
                                            "' collides with a reduced state name");

    std::vector<std::string> allowed = spellings;
    allowed.push_back("t");
    allowed.insert(allowed.end(), spec.control_names.begin(), spec.control_names.end());
    detail::require_known_variables(spec.rhs, allowed, "dynamics");
    detail::require_known_variables(spec.running, allowed, "objective integrand");
    detail::require_known_variables(spec.terminal, spellings, "terminal payoff");

    OcpProblem p;
    p.sense = spec.sense;
    p.t0 = spec.t0;
    p.t1 = spec.t1;
    p.state_names = targets;
    p.control_names = spec.control_names;
    for (int k = 0; k + 1 < spec.order; ++k)
        p.g_src.push_back(ExprNode::variable(targets[k + 1]));
    p.g_src.push_back(rewrite_variables(*spec.rhs, rename));
    p.f_src = rewrite_variables(*spec.running, rename);
    if (spec.terminal) p.phi_src = rewrite_variables(*spec.terminal, rename);
    p.bounds = spec.bounds.lower.size() == 0
                   ? BoxBounds::unbounded(static_cast<int>(spec.control_names.size()))
                   : spec.bounds;
    p.boundary.initial =
        Eigen::Map<const VectorXd>(spec.initial.data(), spec.order);
    if (spec.terminal_states.empty())
        p.boundary.terminal.assign(spec.order, TerminalCondition::free());
    else if (static_cast<int>(spec.terminal_states.size()) == spec.order)
        p.boundary.terminal = spec.terminal_states;
    else
        throw std::invalid_argument("terminal condition count does not match the order");
    p.finalize();
    return p;
}

// An integral constraint over a base problem: the running density h must
// accumulate to exactly `budget` over the horizon.
struct IsoperimetricSpec {
    OcpProblem base;
    ExprPtr density;  // h(t, states, controls)
    double budget = 0.0;
};

// Appends an auxiliary state with dynamics z' = h, z(t0) = 0 and the fixed
// terminal value z(t1) = budget. If a state or control is already named z,
// the auxiliary state is renamed z2, z3, ... and the chosen name is written
// to aux_name when provided.
inline OcpProblem add_isoperimetric(const IsoperimetricSpec& spec,
                                    std::string* aux_name = nullptr)
{
    if (!spec.density) throw std::invalid_argument("missing constraint density");
    OcpProblem p = spec.base;
    if (!p.finalized()) p.finalize();

    std::vector<std::string> allowed = p.state_names;
    allowed.push_back("t");
    allowed.insert(allowed.end(), p.control_names.begin(), p.control_names.end());
    detail::require_known_variables(spec.density, allowed, "constraint density");

    auto taken = [&](const std::string& name) {
        if (name == "t") return true;
        for (const auto& s : p.state_names)
            if (s == name) return true;
        for (const auto& c : p.control_names)
            if (c == name) return true;
        return false;
    };
    std::string z = "z";
    for (int suffix = 2; taken(z); ++suffix) z = "z" + std::to_string(suffix);
    if (aux_name) *aux_name = z;

    const int n = p.n();
    if (p.expression_backed()) {
        p.g_src.push_back(spec.density);
    } else {
        // Native problem: wrap the callbacks so they ignore the auxiliary
        // state, and extend the dynamics/gradients with the density terms.
        std::vector<std::string> slots;
        slots.push_back("t");
        slots.insert(slots.end(), p.state_names.begin(), p.state_names.end());
        slots.insert(slots.end(), p.control_names.begin(), p.control_names.end());
        auto h = std::make_shared<CompiledExpr>(spec.density, slots);
        auto pack = [n, m = p.m()](double t, const VectorXd& x, const VectorXd& u) {
            std::vector<double> v(static_cast<std::size_t>(1 + n + m));
            v[0] = t;
            for (int i = 0; i < n; ++i) v[1 + i] = x(i);
            for (int k = 0; k < m; ++k) v[1 + n + k] = u(k);
            return v;
        };

        auto base_f = p.f_fn;
        p.f_fn = [base_f, n](double t, const VectorXd& x, const VectorXd& u) {
            return base_f(t, x.head(n), u);
        };
        auto base_g = p.g_fn;
        p.g_fn = [base_g, h, pack, n](double t, const VectorXd& x, const VectorXd& u) {
            VectorXd out(n + 1);
            out.head(n) = base_g(t, x.head(n), u);
            const auto v = pack(t, x.head(n), u);
            out(n) = h->value(v);
            return out;
        };
        if (p.phi_fn) {
            auto base_phi = p.phi_fn;
            p.phi_fn = [base_phi, n](const VectorXd& x) { return base_phi(x.head(n)); };
        }
        if (p.grad_fn) {
            auto base_grad = p.grad_fn;
            const int m = p.m();
            p.grad_fn = [base_grad, h, pack, n, m](double t, const VectorXd& x,
                                                   const VectorXd& u, const VectorXd& lam,
                                                   VectorXd& dx, VectorXd& du) {
                VectorXd dx0, du0;
                base_grad(t, x.head(n), u, lam.head(n), dx0, du0);
                dx.resize(n + 1);
                du = du0;
                const auto v = pack(t, x.head(n), u);
                const double lz = lam(n);
                for (int i = 0; i < n; ++i)
                    dx(i) = dx0(i) + lz * h->derivative(v, 1 + i).der;
                dx(n) = 0.0; // nothing depends on the accumulator itself
                for (int k = 0; k < m; ++k)
                    du(k) += lz * h->derivative(v, 1 + n + k).der;
            };
        }
        if (p.phi_grad_fn) {
            auto base_pg = p.phi_grad_fn;
            p.phi_grad_fn = [base_pg, n](const VectorXd& x) {
                VectorXd g(n + 1);
                g.head(n) = base_pg(x.head(n));
                g(n) = 0.0;
                return g;
            };
        }
    }

    p.state_names.push_back(z);
    VectorXd init(n + 1);
    init.head(n) = p.boundary.initial;
    init(n) = 0.0;
    p.boundary.initial = init;
    p.boundary.terminal.push_back(TerminalCondition::fixed(spec.budget));
    p.finalize();
    return p;
}

} // namespace pmp
