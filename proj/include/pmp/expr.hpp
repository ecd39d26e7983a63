// Expression mini-language used to define dynamics, payoffs and constraint
// densities. Recursive-descent parser over the grammar
//
//   expr   := term (("+"|"-") term)*
//   term   := factor (("*"|"/") factor)*
//   factor := ["-"] power
//   power  := atom ["^" factor]
//   atom   := number | identifier | identifier "(" expr ("," expr)* ")"
//           | "(" expr ")"
//
// so "^" is right-associative and binds tighter than unary minus. ASTs are
// immutable after parse; evaluation is reentrant.
#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pmp/dual.hpp"

namespace pmp {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset)
    {
    }
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class EvalError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class NodeKind : std::uint8_t { Constant, Variable, Neg, Add, Sub, Mul, Div, Call };

// Built-in function identifiers. "^" parses to the same node as pow(...).
enum class Func : std::uint8_t { Exp, Ln, Sin, Cos, Sqrt, Tanh, Min, Max, Abs, Pow };

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    NodeKind kind;
    double value = 0.0;        // Constant
    std::string name;          // Variable
    Func func = Func::Exp;     // Call
    std::vector<ExprPtr> args; // children, in order

    static ExprPtr constant(double v)
    {
        auto n = std::make_shared<ExprNode>();
        n->kind = NodeKind::Constant;
        n->value = v;
        return n;
    }
    static ExprPtr variable(std::string name)
    {
        auto n = std::make_shared<ExprNode>();
        n->kind = NodeKind::Variable;
        n->name = std::move(name);
        return n;
    }
    static ExprPtr unary(NodeKind k, ExprPtr a)
    {
        auto n = std::make_shared<ExprNode>();
        n->kind = k;
        n->args = {std::move(a)};
        return n;
    }
    static ExprPtr binary(NodeKind k, ExprPtr a, ExprPtr b)
    {
        auto n = std::make_shared<ExprNode>();
        n->kind = k;
        n->args = {std::move(a), std::move(b)};
        return n;
    }
    static ExprPtr call(Func f, std::vector<ExprPtr> args)
    {
        auto n = std::make_shared<ExprNode>();
        n->kind = NodeKind::Call;
        n->func = f;
        n->args = std::move(args);
        return n;
    }
};

namespace detail {

struct FuncInfo {
    std::string_view name;
    Func func;
    int arity;
};

inline constexpr FuncInfo kFuncs[] = {
    {"exp", Func::Exp, 1},   {"ln", Func::Ln, 1},   {"sin", Func::Sin, 1},
    {"cos", Func::Cos, 1},   {"sqrt", Func::Sqrt, 1}, {"tanh", Func::Tanh, 1},
    {"min", Func::Min, 2},   {"max", Func::Max, 2}, {"abs", Func::Abs, 1},
    {"pow", Func::Pow, 2},
};

inline const FuncInfo* find_func(std::string_view name)
{
    for (const auto& f : kFuncs)
        if (f.name == name) return &f;
    return nullptr;
}

inline std::string_view func_name(Func f)
{
    for (const auto& fi : kFuncs)
        if (fi.func == f) return fi.name;
    return "?";
}

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src) {}

    ExprPtr parse()
    {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("empty expression", pos_);
        ExprPtr e = parse_expr();
        skip_ws();
        if (pos_ < src_.size())
            throw ParseError("unexpected trailing input '" + std::string(1, src_[pos_]) + "'", pos_);
        return e;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;

    void skip_ws()
    {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) ++pos_;
    }
    bool accept(char c)
    {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    char peek()
    {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    ExprPtr parse_expr()
    {
        ExprPtr lhs = parse_term();
        for (;;) {
            if (accept('+'))
                lhs = ExprNode::binary(NodeKind::Add, lhs, parse_term());
            else if (accept('-'))
                lhs = ExprNode::binary(NodeKind::Sub, lhs, parse_term());
            else
                return lhs;
        }
    }

    ExprPtr parse_term()
    {
        ExprPtr lhs = parse_factor();
        for (;;) {
            if (accept('*'))
                lhs = ExprNode::binary(NodeKind::Mul, lhs, parse_factor());
            else if (accept('/'))
                lhs = ExprNode::binary(NodeKind::Div, lhs, parse_factor());
            else
                return lhs;
        }
    }

    ExprPtr parse_factor()
    {
        if (accept('-')) {
            ExprPtr p = parse_power();
            // fold "-<literal>" into a negative constant so that printed
            // negative numbers re-parse to an identical tree
            if (p->kind == NodeKind::Constant) return ExprNode::constant(-p->value);
            return ExprNode::unary(NodeKind::Neg, p);
        }
        return parse_power();
    }

    ExprPtr parse_power()
    {
        ExprPtr base = parse_atom();
        if (accept('^')) {
            ExprPtr exponent = parse_factor(); // right-associative
            return ExprNode::call(Func::Pow, {base, exponent});
        }
        return base;
    }

    ExprPtr parse_atom()
    {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of expression", pos_);
        const char c = src_[pos_];
        if ((c >= '0' && c <= '9') || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        if (accept('(')) {
            ExprPtr e = parse_expr();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return e;
        }
        throw ParseError("unexpected character '" + std::string(1, c) + "'", pos_);
    }

    ExprPtr parse_number()
    {
        double v = 0.0;
        const char* first = src_.data() + pos_;
        const char* last = src_.data() + src_.size();
        auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc{}) throw ParseError("malformed number", pos_);
        pos_ = static_cast<std::size_t>(res.ptr - src_.data());
        return ExprNode::constant(v);
    }

    ExprPtr parse_ident()
    {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        // trailing primes (x', x'') name derivative variables in
        // higher-order problem sources
        while (pos_ < src_.size() && src_[pos_] == '\'') ++pos_;
        std::string name(src_.substr(start, pos_ - start));
        if (peek() == '(') {
            const FuncInfo* fi = find_func(name);
            if (!fi) throw ParseError("unknown function '" + name + "'", start);
            accept('(');
            std::vector<ExprPtr> args;
            args.push_back(parse_expr());
            while (accept(',')) args.push_back(parse_expr());
            if (!accept(')')) throw ParseError("expected ')' in call to '" + name + "'", pos_);
            if (static_cast<int>(args.size()) != fi->arity)
                throw ParseError("'" + name + "' expects " + std::to_string(fi->arity) +
                                     " argument(s), got " + std::to_string(args.size()),
                                 start);
            return ExprNode::call(fi->func, std::move(args));
        }
        return ExprNode::variable(std::move(name));
    }
};

template <class T>
T apply_func(Func f, std::span<const T> a, const ExprNode& node);

// double / Dual shared evaluation core. Lookup maps a variable node to T.
template <class T, class Lookup>
T eval_node(const ExprNode& n, const Lookup& lookup)
{
    switch (n.kind) {
    case NodeKind::Constant: return T(n.value);
    case NodeKind::Variable: return lookup(n);
    case NodeKind::Neg: return -eval_node<T>(*n.args[0], lookup);
    case NodeKind::Add:
        return eval_node<T>(*n.args[0], lookup) + eval_node<T>(*n.args[1], lookup);
    case NodeKind::Sub:
        return eval_node<T>(*n.args[0], lookup) - eval_node<T>(*n.args[1], lookup);
    case NodeKind::Mul:
        return eval_node<T>(*n.args[0], lookup) * eval_node<T>(*n.args[1], lookup);
    case NodeKind::Div:
        return eval_node<T>(*n.args[0], lookup) / eval_node<T>(*n.args[1], lookup);
    case NodeKind::Call: {
        T args[2];
        for (std::size_t i = 0; i < n.args.size(); ++i)
            args[i] = eval_node<T>(*n.args[i], lookup);
        return apply_func<T>(n.func, std::span<const T>(args, n.args.size()), n);
    }
    }
    throw EvalError("corrupt expression node");
}

inline std::string print_node(const ExprNode& n);

inline void throw_domain(const ExprNode& node, const std::string& what)
{
    throw EvalError("domain error: " + what + " in '" + print_node(node) + "'");
}

template <>
inline double apply_func<double>(Func f, std::span<const double> a, const ExprNode& node)
{
    switch (f) {
    case Func::Exp: return std::exp(a[0]);
    case Func::Ln:
        if (a[0] <= 0.0) throw_domain(node, "ln of non-positive value");
        return std::log(a[0]);
    case Func::Sin: return std::sin(a[0]);
    case Func::Cos: return std::cos(a[0]);
    case Func::Sqrt:
        if (a[0] < 0.0) throw_domain(node, "sqrt of negative value");
        return std::sqrt(a[0]);
    case Func::Tanh: return std::tanh(a[0]);
    case Func::Min: return a[1] < a[0] ? a[1] : a[0];
    case Func::Max: return a[1] > a[0] ? a[1] : a[0];
    case Func::Abs: return std::abs(a[0]);
    case Func::Pow: {
        const double v = std::pow(a[0], a[1]);
        if (!std::isfinite(v) && std::isfinite(a[0]) && std::isfinite(a[1]))
            throw_domain(node, "pow outside real domain");
        return v;
    }
    }
    throw EvalError("corrupt function node");
}

template <>
inline Dual apply_func<Dual>(Func f, std::span<const Dual> a, const ExprNode& node)
{
    switch (f) {
    case Func::Exp: return exp(a[0]);
    case Func::Ln:
        if (a[0].val <= 0.0) throw_domain(node, "ln of non-positive value");
        return log(a[0]);
    case Func::Sin: return sin(a[0]);
    case Func::Cos: return cos(a[0]);
    case Func::Sqrt:
        if (a[0].val < 0.0) throw_domain(node, "sqrt of negative value");
        return sqrt(a[0]);
    case Func::Tanh: return tanh(a[0]);
    case Func::Min: return min(a[0], a[1]);
    case Func::Max: return max(a[0], a[1]);
    case Func::Abs: return abs(a[0]);
    case Func::Pow: {
        const Dual v = pow(a[0], a[1]);
        if (!std::isfinite(v.val) && std::isfinite(a[0].val) && std::isfinite(a[1].val))
            throw_domain(node, "pow outside real domain");
        return v;
    }
    }
    throw EvalError("corrupt function node");
}

// shortest representation that re-parses to the same double
inline std::string format_number(double v)
{
    char buf[32];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline std::string print_node(const ExprNode& n)
{
    switch (n.kind) {
    case NodeKind::Constant: return format_number(n.value);
    case NodeKind::Variable: return n.name;
    case NodeKind::Neg: return "(-" + print_node(*n.args[0]) + ")";
    case NodeKind::Add:
        return "(" + print_node(*n.args[0]) + " + " + print_node(*n.args[1]) + ")";
    case NodeKind::Sub:
        return "(" + print_node(*n.args[0]) + " - " + print_node(*n.args[1]) + ")";
    case NodeKind::Mul:
        return "(" + print_node(*n.args[0]) + " * " + print_node(*n.args[1]) + ")";
    case NodeKind::Div:
        return "(" + print_node(*n.args[0]) + " / " + print_node(*n.args[1]) + ")";
    case NodeKind::Call: {
        if (n.func == Func::Pow) {
            // a bare negative-constant base would re-parse as -(c ^ e)
            std::string base = print_node(*n.args[0]);
            if (n.args[0]->kind == NodeKind::Constant && std::signbit(n.args[0]->value))
                base = "(" + base + ")";
            return "(" + base + " ^ " + print_node(*n.args[1]) + ")";
        }
        std::string s(func_name(n.func));
        s += "(";
        for (std::size_t i = 0; i < n.args.size(); ++i) {
            if (i) s += ", ";
            s += print_node(*n.args[i]);
        }
        s += ")";
        return s;
    }
    }
    return "?";
}

} // namespace detail

inline ExprPtr parse(std::string_view source) { return detail::Parser(source).parse(); }

inline std::string pretty_print(const ExprNode& node) { return detail::print_node(node); }
inline std::string pretty_print(const ExprPtr& node) { return detail::print_node(*node); }

using Bindings = std::map<std::string, double, std::less<>>;

inline double eval(const ExprNode& node, const Bindings& bindings)
{
    return detail::eval_node<double>(node, [&](const ExprNode& v) -> double {
        auto it = bindings.find(v.name);
        if (it == bindings.end()) throw EvalError("unbound variable '" + v.name + "'");
        return it->second;
    });
}
inline double eval(const ExprPtr& node, const Bindings& b) { return eval(*node, b); }

// Value and d(value)/d(seed_var), exact to floating precision.
inline Dual eval_dual(const ExprNode& node, const Bindings& bindings,
                      std::string_view seed_var)
{
    return detail::eval_node<Dual>(node, [&](const ExprNode& v) -> Dual {
        auto it = bindings.find(v.name);
        if (it == bindings.end()) throw EvalError("unbound variable '" + v.name + "'");
        return {it->second, v.name == seed_var ? 1.0 : 0.0};
    });
}
inline Dual eval_dual(const ExprPtr& node, const Bindings& b, std::string_view seed)
{
    return eval_dual(*node, b, seed);
}

inline bool structurally_equal(const ExprNode& a, const ExprNode& b)
{
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case NodeKind::Constant:
        if (!(a.value == b.value)) return false;
        break;
    case NodeKind::Variable:
        if (a.name != b.name) return false;
        break;
    case NodeKind::Call:
        if (a.func != b.func) return false;
        break;
    default: break;
    }
    if (a.args.size() != b.args.size()) return false;
    for (std::size_t i = 0; i < a.args.size(); ++i)
        if (!structurally_equal(*a.args[i], *b.args[i])) return false;
    return true;
}
inline bool structurally_equal(const ExprPtr& a, const ExprPtr& b)
{
    return structurally_equal(*a, *b);
}

inline void collect_variables(const ExprNode& n, std::vector<std::string>& out)
{
    if (n.kind == NodeKind::Variable) {
        for (const auto& s : out)
            if (s == n.name) return;
        out.push_back(n.name);
        return;
    }
    for (const auto& c : n.args) collect_variables(*c, out);
}

// Rebuilds the tree with variables renamed / substituted by constants.
// Used by the registry (parameter substitution) and the higher-order
// reduction (x' -> x2 renames).
inline ExprPtr rewrite_variables(const ExprNode& n,
                                 const std::map<std::string, ExprPtr>& replacements)
{
    if (n.kind == NodeKind::Variable) {
        auto it = replacements.find(n.name);
        if (it != replacements.end()) return it->second;
        return ExprNode::variable(n.name);
    }
    auto copy = std::make_shared<ExprNode>(n);
    for (auto& c : copy->args) c = rewrite_variables(*c, replacements);
    return copy;
}

// An expression bound to a fixed variable->slot layout, so the solver can
// evaluate against a flat array instead of a name map.
class CompiledExpr {
public:
    CompiledExpr() = default;
    CompiledExpr(ExprPtr ast, const std::vector<std::string>& slot_names)
        : ast_(std::move(ast))
    {
        std::vector<std::string> vars;
        collect_variables(*ast_, vars);
        for (const auto& v : vars) {
            bool found = false;
            for (std::size_t i = 0; i < slot_names.size(); ++i) {
                if (slot_names[i] == v) {
                    found = true;
                    break;
                }
            }
            if (!found)
                throw EvalError("variable '" + v + "' is not a declared name in '" +
                                pretty_print(ast_) + "'");
        }
        slots_ = build_slot_tree(*ast_, slot_names);
    }

    bool valid() const { return static_cast<bool>(ast_); }
    const ExprPtr& ast() const { return ast_; }

    double value(std::span<const double> slot_values) const
    {
        return detail::eval_node<double>(*slots_, [&](const ExprNode& v) -> double {
            return slot_values[slot_index(v)];
        });
    }

    // derivative with respect to the variable occupying seed_slot
    Dual derivative(std::span<const double> slot_values, std::size_t seed_slot) const
    {
        return detail::eval_node<Dual>(*slots_, [&](const ExprNode& v) -> Dual {
            const std::size_t idx = slot_index(v);
            return {slot_values[idx], idx == seed_slot ? 1.0 : 0.0};
        });
    }

private:
    // slot indices are smuggled through the (unused) `value` field of
    // variable nodes in a private copy of the tree
    static ExprPtr build_slot_tree(const ExprNode& n, const std::vector<std::string>& names)
    {
        auto copy = std::make_shared<ExprNode>(n);
        if (n.kind == NodeKind::Variable) {
            for (std::size_t i = 0; i < names.size(); ++i)
                if (names[i] == n.name) copy->value = static_cast<double>(i);
        }
        for (auto& c : copy->args) c = build_slot_tree(*c, names);
        return copy;
    }
    static std::size_t slot_index(const ExprNode& v)
    {
        return static_cast<std::size_t>(v.value);
    }

    ExprPtr ast_;
    ExprPtr slots_;
};

} // namespace pmp
