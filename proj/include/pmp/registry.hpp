// Built-in example problems with overridable named parameters. Parameter
// values are substituted into the expression trees as constants, so the
// finished problem only references t, states, and controls.
#pragma once

#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "pmp/model.hpp"

namespace pmp {

struct BuiltinInfo {
    std::string name;
    std::string summary;
    std::map<std::string, double> defaults;
};

inline const std::vector<BuiltinInfo>& builtin_list()
{
    static const std::vector<BuiltinInfo> entries = {
        {"linear_growth",
         "max int_0^T (alpha*x - r/2 u^2) dt, x' = a*x + b*u, u in [u_min, u_max]",
         {{"alpha", 1.0},
          {"a", 0.0},
          {"b", 1.0},
          {"r", 1.0},
          {"T", 3.0},
          {"x0", 1.0},
          {"u_min", 0.0},
          {"u_max", 2.0}}},
        {"double_integrator",
         "min int_0^T (x2 + u^2) dt, x1' = x2, x2' = u, x1(T) fixed",
         {{"T", 1.0}, {"x1_0", 0.0}, {"x2_0", 0.0}, {"x1_T", 1.0}}},
        {"lqr_scalar",
         "min 1/2 int_0^T (q*x^2 + r*u^2) dt + m/2 x(T)^2, x' = a*x + b*u",
         {{"T", 1.0},
          {"x0", 1.0},
          {"a", 0.0},
          {"b", 1.0},
          {"q", 1.0},
          {"r", 1.0},
          {"m", 0.0}}},
        {"isoperimetric",
         "min 1/2 int_0^1 u^2 dt, x' = u with x(1) fixed and int x dt = B via "
         "auxiliary state z",
         {{"x_T", 1.0}, {"B", 2.0}}},
        {"second_order",
         "min 1/2 int_0^T (u^2 - x1^2) dt for x'' = u, lifted to x1' = x2, x2' = u",
         {{"T", std::numbers::pi}, {"x1_0", 1.0}, {"x2_0", 1.0}}},
    };
    return entries;
}

namespace detail {

inline std::map<std::string, double> merge_params(const BuiltinInfo& info,
                                                  const std::map<std::string, double>& overrides)
{
    std::map<std::string, double> params = info.defaults;
    for (const auto& [key, value] : overrides) {
        auto it = params.find(key);
        if (it == params.end()) {
            std::string known;
            for (const auto& [k, v] : params) {
                (void)v;
                if (!known.empty()) known += ", ";
                known += k;
            }
            throw std::invalid_argument("unknown parameter '" + key + "' for builtin '" +
                                        info.name + "' (available: " + known + ")");
        }
        it->second = value;
    }
    return params;
}

inline ExprPtr bind_params(const std::string& source,
                           const std::map<std::string, double>& params)
{
    std::map<std::string, ExprPtr> repl;
    for (const auto& [k, v] : params) repl[k] = ExprNode::constant(v);
    return rewrite_variables(*parse(source), repl);
}

} // namespace detail

inline OcpProblem registry_get(const std::string& name,
                               const std::map<std::string, double>& overrides = {})
{
    const BuiltinInfo* info = nullptr;
    for (const auto& e : builtin_list())
        if (e.name == name) info = &e;
    if (!info) {
        std::string known;
        for (const auto& e : builtin_list()) {
            if (!known.empty()) known += ", ";
            known += e.name;
        }
        throw std::invalid_argument("unknown builtin '" + name + "' (available: " + known + ")");
    }
    const auto prm = detail::merge_params(*info, overrides);
    auto P = [&](const char* key) { return prm.at(key); };
    auto E = [&](const std::string& src) { return detail::bind_params(src, prm); };

    OcpProblem p;
    if (name == "linear_growth") {
        p.sense = Sense::Maximize;
        p.t0 = 0.0;
        p.t1 = P("T");
        p.state_names = {"x"};
        p.control_names = {"u"};
        p.f_src = E("alpha*x - 0.5*r*u^2");
        p.g_src = {E("a*x + b*u")};
        p.bounds = BoxBounds::box(P("u_min"), P("u_max"));
        p.boundary.initial = VectorXd::Constant(1, P("x0"));
        p.boundary.terminal = {TerminalCondition::free()};
    } else if (name == "double_integrator") {
        p.sense = Sense::Minimize;
        p.t0 = 0.0;
        p.t1 = P("T");
        p.state_names = {"x1", "x2"};
        p.control_names = {"u"};
        p.f_src = E("x2 + u^2");
        p.g_src = {E("x2"), E("u")};
        p.bounds = BoxBounds::unbounded(1);
        p.boundary.initial = VectorXd(2);
        p.boundary.initial << P("x1_0"), P("x2_0");
        p.boundary.terminal = {TerminalCondition::fixed(P("x1_T")), TerminalCondition::free()};
    } else if (name == "lqr_scalar") {
        p.sense = Sense::Minimize;
        p.t0 = 0.0;
        p.t1 = P("T");
        p.state_names = {"x"};
        p.control_names = {"u"};
        p.f_src = E("0.5*(q*x^2 + r*u^2)");
        p.g_src = {E("a*x + b*u")};
        if (P("m") != 0.0) p.phi_src = E("0.5*m*x^2");
        p.bounds = BoxBounds::unbounded(1);
        p.boundary.initial = VectorXd::Constant(1, P("x0"));
        p.boundary.terminal = {TerminalCondition::free()};
    } else if (name == "isoperimetric") {
        p.sense = Sense::Minimize;
        p.t0 = 0.0;
        p.t1 = 1.0;
        p.state_names = {"x", "z"};
        p.control_names = {"u"};
        p.f_src = E("0.5*u^2");
        p.g_src = {E("u"), E("x")};
        p.bounds = BoxBounds::unbounded(1);
        p.boundary.initial = VectorXd::Zero(2);
        p.boundary.terminal = {TerminalCondition::fixed(P("x_T")),
                               TerminalCondition::fixed(P("B"))};
    } else { // second_order
        p.sense = Sense::Minimize;
        p.t0 = 0.0;
        p.t1 = P("T");
        p.state_names = {"x1", "x2"};
        p.control_names = {"u"};
        p.f_src = E("0.5*(u^2 - x1^2)");
        p.g_src = {E("x2"), E("u")};
        p.bounds = BoxBounds::unbounded(1);
        p.boundary.initial = VectorXd(2);
        p.boundary.initial << P("x1_0"), P("x2_0");
        p.boundary.terminal = {TerminalCondition::free(), TerminalCondition::free()};
    }
    p.finalize();
    return p;
}

} // namespace pmp
