// Sectioned plain-text problem configs: [problem] picks a built-in or opens
// an inline definition ([dynamics]/[objective]/[bounds]/[boundary], plus
// optional [isoperimetric] / [higher_order] rewrites and an optional [lqr]
// block for the Riccati solver). Errors name the section, key, and line.
#pragma once

#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pmp/fbsm.hpp"
#include "pmp/lqr.hpp"
#include "pmp/registry.hpp"
#include "pmp/transforms.hpp"

namespace pmp {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    SweepConfig sweep;
    std::string solver = "fbsm"; // or "lqr"
    bool builtin_source = false;
    std::string builtin_name;
    OcpProblem problem;
    bool has_lqr = false;
    LqrProblem lqr;
    std::string isoperimetric_state; // accumulator name when the rewrite ran
};

namespace detail {

struct ConfigEntry {
    std::string key, value;
    int line = 0;
};

struct ConfigSection {
    std::string name;
    int line = 0;
    std::vector<ConfigEntry> entries;

    const ConfigEntry* find(const std::string& key) const
    {
        for (const auto& e : entries)
            if (e.key == key) return &e;
        return nullptr;
    }
};

inline std::string trim(const std::string& s)
{
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::string where(const ConfigSection& sec, const ConfigEntry& e)
{
    return " (in [" + sec.name + "], key '" + e.key + "', line " + std::to_string(e.line) +
           ")";
}

[[noreturn]] inline void fail(const std::string& msg, const ConfigSection& sec,
                              const ConfigEntry& e)
{
    throw ConfigError(msg + where(sec, e));
}

inline std::vector<ConfigSection> parse_sections(std::istream& is)
{
    std::vector<ConfigSection> sections;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string text = trim(line);
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']')
                throw ConfigError("malformed section header '" + text + "' (line " +
                                  std::to_string(lineno) + ")");
            const std::string name = trim(text.substr(1, text.size() - 2));
            for (const auto& s : sections)
                if (s.name == name)
                    throw ConfigError("duplicate section [" + name + "] (line " +
                                      std::to_string(lineno) + ")");
            sections.push_back({name, lineno, {}});
            continue;
        }
        const std::size_t eq = text.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value', got '" + text + "' (line " +
                              std::to_string(lineno) + ")");
        if (sections.empty())
            throw ConfigError("'" + trim(text.substr(0, eq)) +
                              "' appears before any section (line " + std::to_string(lineno) +
                              ")");
        ConfigEntry e{trim(text.substr(0, eq)), trim(text.substr(eq + 1)), lineno};
        if (e.key.empty())
            throw ConfigError("empty key (line " + std::to_string(lineno) + ")");
        if (sections.back().find(e.key))
            throw ConfigError("duplicate key '" + e.key + "' in [" + sections.back().name +
                              "] (line " + std::to_string(lineno) + ")");
        sections.back().entries.push_back(std::move(e));
    }
    return sections;
}

inline double to_double(const ConfigSection& sec, const ConfigEntry& e,
                        const std::string& text)
{
    const std::string v = trim(text);
    if (v == "inf" || v == "+inf") return kInf;
    if (v == "-inf") return -kInf;
    const char* begin = v.c_str();
    char* end = nullptr;
    const double out = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || v.empty())
        fail("'" + v + "' is not a number", sec, e);
    return out;
}

inline double to_double(const ConfigSection& sec, const ConfigEntry& e)
{
    return to_double(sec, e, e.value);
}

inline int to_int(const ConfigSection& sec, const ConfigEntry& e)
{
    int out = 0;
    const auto [p, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), out);
    if (ec != std::errc() || p != e.value.data() + e.value.size())
        fail("'" + e.value + "' is not an integer", sec, e);
    return out;
}

inline ExprPtr to_expr(const ConfigSection& sec, const ConfigEntry& e,
                       const std::string& text)
{
    try {
        return parse(text);
    } catch (const ParseError& pe) {
        fail(std::string("bad expression: ") + pe.what(), sec, e);
    }
}

inline ExprPtr to_expr(const ConfigSection& sec, const ConfigEntry& e)
{
    return to_expr(sec, e, e.value);
}

inline std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = text.find(',', start);
        out.push_back(trim(text.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.size() == 1 && out[0].empty()) out.clear();
    return out;
}

inline void reject_unknown_keys(const ConfigSection& sec,
                                const std::vector<std::string>& known)
{
    for (const auto& e : sec.entries) {
        bool ok = false;
        for (const auto& k : known)
            if (k == e.key) { ok = true; break; }
        if (!ok) fail("unknown key", sec, e);
    }
}

// [lqr] matrices: rows separated by ';', entries by ','. Entries may be
// numbers or expressions of t; one non-constant entry switches the whole
// matrix to expression form.
inline MatrixFn to_matrix(const ConfigSection& sec, const ConfigEntry& e)
{
    std::vector<std::vector<std::string>> cells;
    std::size_t start = 0;
    while (start <= e.value.size()) {
        const std::size_t semi = e.value.find(';', start);
        cells.push_back(split_list(e.value.substr(start, semi - start)));
        if (semi == std::string::npos) break;
        start = semi + 1;
    }
    if (cells.empty() || cells[0].empty()) fail("empty matrix", sec, e);
    const std::size_t cols = cells[0].size();
    for (const auto& row : cells)
        if (row.size() != cols) fail("ragged matrix rows", sec, e);

    bool all_const = true;
    std::vector<std::vector<ExprPtr>> exprs(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (const auto& cell : cells[i]) {
            ExprPtr ex = to_expr(sec, e, cell);
            std::vector<std::string> vars;
            collect_variables(*ex, vars);
            for (const auto& v : vars)
                if (v != "t")
                    fail("matrix entries may only depend on t; found '" + v + "'", sec, e);
            if (!vars.empty() || ex->kind != NodeKind::Constant) all_const = false;
            exprs[i].push_back(std::move(ex));
        }
    }
    if (all_const) {
        MatrixXd m(static_cast<int>(cells.size()), static_cast<int>(cols));
        for (std::size_t i = 0; i < cells.size(); ++i)
            for (std::size_t j = 0; j < cols; ++j) m(i, j) = exprs[i][j]->value;
        return MatrixFn(m);
    }
    return MatrixFn(std::move(exprs));
}

inline VectorXd to_vector(const ConfigSection& sec, const ConfigEntry& e)
{
    const auto cells = split_list(e.value);
    VectorXd v(static_cast<int>(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i)
        v(static_cast<int>(i)) = to_double(sec, e, cells[i]);
    return v;
}

} // namespace detail

// Parses a config stream. `overrides` are builtin parameter overrides (from
// --set flags) merged on top of any [params] section; they require a builtin
// problem source.
inline RunConfig load_config_stream(std::istream& is,
                                    const std::map<std::string, double>& overrides = {})
{
    using detail::ConfigSection;
    auto sections = detail::parse_sections(is);

    auto find = [&](const std::string& name) -> const ConfigSection* {
        for (const auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    };
    for (const auto& s : sections) {
        static const std::vector<std::string> known = {
            "problem", "params",        "dynamics",     "objective", "bounds",
            "boundary", "isoperimetric", "higher_order", "solver",    "lqr"};
        bool ok = false;
        for (const auto& k : known)
            if (k == s.name) { ok = true; break; }
        if (!ok)
            throw ConfigError("unknown section [" + s.name + "] (line " +
                              std::to_string(s.line) + ")");
    }

    const ConfigSection* prob = find("problem");
    if (!prob) throw ConfigError("missing [problem] section");

    RunConfig rc;

    // [solver]
    if (const ConfigSection* sv = find("solver")) {
        detail::reject_unknown_keys(
            *sv, {"grid", "damping", "tol", "max_iter", "shooting_tol"});
        if (const auto* e = sv->find("grid")) rc.sweep.grid_N = detail::to_int(*sv, *e);
        if (const auto* e = sv->find("damping")) rc.sweep.damping = detail::to_double(*sv, *e);
        if (const auto* e = sv->find("tol")) rc.sweep.tol = detail::to_double(*sv, *e);
        if (const auto* e = sv->find("max_iter"))
            rc.sweep.max_iterations = detail::to_int(*sv, *e);
        if (const auto* e = sv->find("shooting_tol"))
            rc.sweep.shooting_tol = detail::to_double(*sv, *e);
        try {
            rc.sweep.validate();
        } catch (const std::exception& ex) {
            throw ConfigError(std::string(ex.what()) + " (in [solver], line " +
                              std::to_string(sv->line) + ")");
        }
    }

    const ConfigSection* lqr_sec = find("lqr");

    if (const auto* e = prob->find("builtin")) {
        // builtin source: inline problem sections would be a second source
        for (const char* banned :
             {"dynamics", "objective", "bounds", "boundary", "isoperimetric",
              "higher_order", "lqr"})
            if (find(banned))
                throw ConfigError("[" + std::string(banned) +
                                  "] conflicts with 'builtin': a config has exactly one "
                                  "problem source");
        detail::reject_unknown_keys(*prob, {"builtin"});
        rc.builtin_source = true;
        rc.builtin_name = e->value;

        std::map<std::string, double> params;
        if (const ConfigSection* ps = find("params"))
            for (const auto& pe : ps->entries) params[pe.key] = detail::to_double(*ps, pe);
        for (const auto& [k, v] : overrides) params[k] = v;
        try {
            rc.problem = registry_get(rc.builtin_name, params);
        } catch (const std::exception& ex) {
            throw ConfigError(std::string(ex.what()) + " (in [problem], key 'builtin', line " +
                              std::to_string(e->line) + ")");
        }
        return rc;
    }

    if (!overrides.empty())
        throw ConfigError("--set overrides require a builtin problem source");
    if (find("params"))
        throw ConfigError("[params] requires 'builtin' in [problem]");

    // inline source
    detail::reject_unknown_keys(*prob, {"sense", "t0", "t1", "states", "controls"});
    auto require_key = [&](const ConfigSection& sec, const std::string& key) {
        const auto* e = sec.find(key);
        if (!e)
            throw ConfigError("missing key '" + key + "' in [" + sec.name + "] (line " +
                              std::to_string(sec.line) + ")");
        return e;
    };

    Sense sense = Sense::Maximize;
    {
        const auto* e = require_key(*prob, "sense");
        if (e->value == "maximize")
            sense = Sense::Maximize;
        else if (e->value == "minimize")
            sense = Sense::Minimize;
        else
            detail::fail("sense must be 'maximize' or 'minimize'", *prob, *e);
    }
    const double t0 = detail::to_double(*prob, *require_key(*prob, "t0"));
    const double t1 = detail::to_double(*prob, *require_key(*prob, "t1"));
    const auto controls = detail::split_list(require_key(*prob, "controls")->value);
    if (controls.empty())
        throw ConfigError("empty 'controls' list in [problem] (line " +
                          std::to_string(prob->line) + ")");

    const ConfigSection* ho = find("higher_order");
    const ConfigSection* obj = find("objective");
    if (!obj)
        throw ConfigError("missing [objective] section");
    detail::reject_unknown_keys(*obj, {"running", "terminal"});

    // [bounds] — keys are control names
    BoxBounds bounds = BoxBounds::unbounded(static_cast<int>(controls.size()));
    if (const ConfigSection* bs = find("bounds")) {
        for (const auto& e : bs->entries) {
            int k = -1;
            for (std::size_t i = 0; i < controls.size(); ++i)
                if (controls[i] == e.key) k = static_cast<int>(i);
            if (k < 0) detail::fail("'" + e.key + "' is not a declared control", *bs, e);
            const auto parts = detail::split_list(e.value);
            if (parts.size() != 2)
                detail::fail("bounds need exactly 'lower, upper'", *bs, e);
            bounds.lower(k) = detail::to_double(*bs, e, parts[0]);
            bounds.upper(k) = detail::to_double(*bs, e, parts[1]);
            if (!(bounds.lower(k) <= bounds.upper(k)))
                detail::fail("lower bound exceeds upper bound", *bs, e);
        }
    }

    if (ho) {
        // higher-order source: states come from the chain
        if (prob->find("states"))
            throw ConfigError(
                "[higher_order] implies the states; remove 'states' from [problem]");
        if (find("dynamics"))
            throw ConfigError("[dynamics] conflicts with [higher_order]");
        if (find("boundary"))
            throw ConfigError("[boundary] conflicts with [higher_order]: initial values "
                              "come from its 'initial' list");
        detail::reject_unknown_keys(*ho, {"order", "rhs", "initial"});

        HigherOrderSpec spec;
        spec.sense = sense;
        spec.t0 = t0;
        spec.t1 = t1;
        spec.order = detail::to_int(*ho, *require_key(*ho, "order"));
        spec.rhs = detail::to_expr(*ho, *require_key(*ho, "rhs"));
        {
            const auto* e = require_key(*ho, "initial");
            for (const auto& cell : detail::split_list(e->value))
                spec.initial.push_back(detail::to_double(*ho, *e, cell));
        }
        spec.running = detail::to_expr(*obj, *require_key(*obj, "running"));
        if (const auto* e = obj->find("terminal")) spec.terminal = detail::to_expr(*obj, *e);
        spec.control_names = controls;
        spec.bounds = bounds;
        try {
            rc.problem = reduce_higher_order(spec);
        } catch (const std::exception& ex) {
            throw ConfigError(std::string(ex.what()) + " (in [higher_order], line " +
                              std::to_string(ho->line) + ")");
        }
    } else {
        const auto states = detail::split_list(require_key(*prob, "states")->value);
        if (states.empty())
            throw ConfigError("empty 'states' list in [problem] (line " +
                              std::to_string(prob->line) + ")");

        OcpProblem p;
        p.sense = sense;
        p.t0 = t0;
        p.t1 = t1;
        p.state_names = states;
        p.control_names = controls;
        p.bounds = bounds;

        const ConfigSection* dyn = find("dynamics");
        if (!dyn) throw ConfigError("missing [dynamics] section");
        for (const auto& e : dyn->entries) {
            bool known = false;
            for (const auto& s : states)
                if (s == e.key) known = true;
            if (!known) detail::fail("'" + e.key + "' is not a declared state", *dyn, e);
        }
        for (const auto& s : states) {
            const auto* e = dyn->find(s);
            if (!e)
                throw ConfigError("missing dynamics for state '" + s + "' in [dynamics] "
                                  "(line " +
                                  std::to_string(dyn->line) + ")");
            p.g_src.push_back(detail::to_expr(*dyn, *e));
        }
        p.f_src = detail::to_expr(*obj, *require_key(*obj, "running"));
        if (const auto* e = obj->find("terminal")) p.phi_src = detail::to_expr(*obj, *e);

        const ConfigSection* bd = find("boundary");
        if (!bd) throw ConfigError("missing [boundary] section");
        p.boundary.initial = VectorXd::Zero(p.n());
        p.boundary.terminal.assign(p.n(), TerminalCondition::free());
        std::vector<bool> has_initial(states.size(), false);
        for (const auto& e : bd->entries) {
            const std::size_t dot = e.key.find('.');
            const std::string state = e.key.substr(0, dot);
            const std::string kind = dot == std::string::npos ? "" : e.key.substr(dot + 1);
            int idx = -1;
            for (std::size_t i = 0; i < states.size(); ++i)
                if (states[i] == state) idx = static_cast<int>(i);
            if (idx < 0)
                detail::fail("'" + state + "' is not a declared state", *bd, e);
            if (kind == "initial") {
                p.boundary.initial(idx) = detail::to_double(*bd, e);
                has_initial[idx] = true;
            } else if (kind == "terminal") {
                p.boundary.terminal[idx] = e.value == "free"
                                               ? TerminalCondition::free()
                                               : TerminalCondition::fixed(
                                                     detail::to_double(*bd, e));
            } else {
                detail::fail("expected '<state>.initial' or '<state>.terminal'", *bd, e);
            }
        }
        for (std::size_t i = 0; i < states.size(); ++i)
            if (!has_initial[i])
                throw ConfigError("missing '" + states[i] + ".initial' in [boundary] (line " +
                                  std::to_string(bd->line) + ")");

        try {
            p.finalize();
        } catch (const std::exception& ex) {
            throw ConfigError(std::string(ex.what()) + " (in [problem], line " +
                              std::to_string(prob->line) + ")");
        }

        if (const ConfigSection* iso = find("isoperimetric")) {
            detail::reject_unknown_keys(*iso, {"density", "budget"});
            IsoperimetricSpec spec;
            spec.base = std::move(p);
            spec.density = detail::to_expr(*iso, *require_key(*iso, "density"));
            spec.budget = detail::to_double(*iso, *require_key(*iso, "budget"));
            try {
                rc.problem = add_isoperimetric(spec, &rc.isoperimetric_state);
            } catch (const std::exception& ex) {
                throw ConfigError(std::string(ex.what()) + " (in [isoperimetric], line " +
                                  std::to_string(iso->line) + ")");
            }
        } else {
            rc.problem = std::move(p);
        }
    }

    if (lqr_sec) {
        detail::reject_unknown_keys(*lqr_sec, {"A", "B", "Q", "R", "M", "x0"});
        if (t0 != 0.0)
            throw ConfigError("[lqr] requires t0 = 0 (line " +
                              std::to_string(lqr_sec->line) + ")");
        LqrProblem lp;
        lp.A = detail::to_matrix(*lqr_sec, *require_key(*lqr_sec, "A"));
        lp.B = detail::to_matrix(*lqr_sec, *require_key(*lqr_sec, "B"));
        lp.Q = detail::to_matrix(*lqr_sec, *require_key(*lqr_sec, "Q"));
        lp.R = detail::to_matrix(*lqr_sec, *require_key(*lqr_sec, "R"));
        lp.x0 = detail::to_vector(*lqr_sec, *require_key(*lqr_sec, "x0"));
        if (const auto* e = lqr_sec->find("M")) {
            const MatrixFn mf = detail::to_matrix(*lqr_sec, *e);
            if (!mf.is_constant())
                detail::fail("terminal weight must be constant", *lqr_sec, *e);
            lp.M = mf(0.0);
        } else {
            lp.M = MatrixXd::Zero(static_cast<int>(lp.x0.size()),
                                  static_cast<int>(lp.x0.size()));
        }
        lp.T = t1;
        try {
            lp.finalize();
        } catch (const std::exception& ex) {
            throw ConfigError(std::string(ex.what()) + " (in [lqr], line " +
                              std::to_string(lqr_sec->line) + ")");
        }
        rc.has_lqr = true;
        rc.lqr = std::move(lp);
    }

    return rc;
}

inline RunConfig load_config(const std::string& path,
                             const std::map<std::string, double>& overrides = {})
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
        return load_config_stream(in, overrides);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

} // namespace pmp
