// Pointwise optimization of H over the control box at a single (t, x, lam),
// plus the complementary-sign-condition audits. Three per-component rules:
//   analytic-clamp : H quadratic in u_k -> unconstrained optimizer, clamped
//   bang-bang      : H affine in u_k    -> bound picked by the sign of H_u
//   scalar-scan    : golden-section fallback on a bracket
// Components are optimized one at a time with the others held at the previous
// iterate (exact for the separable Hamiltonians this library targets).
#pragma once

#include <algorithm>
#include <optional>
#include <random>

#include "pmp/model.hpp"

namespace pmp {

inline double clamp(double v, double lo, double hi)
{
    if (lo > hi) throw std::invalid_argument("clamp requires lo <= hi");
    return std::min(hi, std::max(lo, v));
}

enum class Activity : int { Lower = 0, Interior = 1, Upper = 2, Singular = 3 };

inline const char* activity_name(Activity a)
{
    switch (a) {
    case Activity::Lower: return "lower";
    case Activity::Interior: return "interior";
    case Activity::Upper: return "upper";
    case Activity::Singular: return "singular";
    }
    return "?";
}

enum class ControlRuleKind { AnalyticClamp, BangBang, ScalarScan };

struct ControlRule {
    ControlRuleKind kind = ControlRuleKind::ScalarScan;
    // scan bracket for unbounded components (scan needs a finite interval)
    std::optional<std::pair<double, double>> scan_bracket;
};

namespace detail {

// H restricted to component k of the control, others frozen
template <class F>
double golden_section(const F& h_of_u, double a, double b, bool maximize)
{
    constexpr double invphi = 0.6180339887498949;
    const double target = 1e-10 * (b - a);
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = h_of_u(x1);
    double f2 = h_of_u(x2);
    if (!maximize) {
        f1 = -f1;
        f2 = -f2;
    }
    while (b - a > target) {
        if (f1 > f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = h_of_u(x1);
            if (!maximize) f1 = -f1;
        } else if (f2 > f1) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = h_of_u(x2);
            if (!maximize) f2 = -f2;
        } else {
            // flat bracket: shrink from both ends so ties settle on the
            // midpoint of the optimizer set
            a = x1;
            b = x2;
            x1 = b - invphi * (b - a);
            x2 = a + invphi * (b - a);
            f1 = h_of_u(x1);
            f2 = h_of_u(x2);
            if (!maximize) {
                f1 = -f1;
                f2 = -f2;
            }
        }
    }
    return 0.5 * (a + b);
}

inline std::string node_label(int node, double t)
{
    std::string s = "node ";
    s += node >= 0 ? std::to_string(node) : "?";
    s += " (t = " + std::to_string(t) + ")";
    return s;
}

} // namespace detail

// Probes H along each control component at a handful of sample points and
// classifies it as affine (bang-bang), quadratic with the right curvature
// sign (analytic clamp), or general (scan).
inline std::vector<ControlRule> detect_rules(const OcpProblem& p)
{
    std::mt19937 rng(12345);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> spread(-1.5, 1.5);
    std::vector<ControlRule> rules(p.m());
    for (int k = 0; k < p.m(); ++k) {
        const bool bounded = p.bounds.fully_bounded(k);
        const double lo = bounded ? p.bounds.lower(k) : -3.0;
        const double hi = bounded ? p.bounds.upper(k) : 3.0;
        const double delta = 0.125 * (hi - lo);

        double max_curv_dev = 0.0; // spread of d2H/du2 across probes
        double max_curv = 0.0;
        double scale = 1.0;
        bool curvature_sign_ok = true;
        std::optional<double> first_curv;
        int good_probes = 0;
        for (int probe = 0; probe < 10 && good_probes < 5; ++probe) {
            const double t = p.t0 + unit(rng) * (p.t1 - p.t0);
            // probe center moves around inside the box so curvature variation
            // along u_k itself is visible
            const double mid = lo + delta + unit(rng) * (hi - lo - 2.0 * delta);
            VectorXd x(p.n()), lam(p.n()), u(p.m());
            for (int i = 0; i < p.n(); ++i) x(i) = spread(rng);
            for (int i = 0; i < p.n(); ++i) lam(i) = spread(rng);
            for (int j = 0; j < p.m(); ++j)
                u(j) = p.bounds.fully_bounded(j)
                           ? 0.5 * (p.bounds.lower(j) + p.bounds.upper(j))
                           : 0.0;
            try {
                auto hu_at = [&](double v) {
                    VectorXd uu = u;
                    uu(k) = v;
                    return hamiltonian_du(p, t, x, uu, lam)(k);
                };
                const double hu_m = hu_at(mid - delta);
                const double hu_0 = hu_at(mid);
                const double hu_p = hu_at(mid + delta);
                const double curv_lo = (hu_0 - hu_m) / delta;
                const double curv_hi = (hu_p - hu_0) / delta;
                scale = std::max({scale, std::abs(hu_m), std::abs(hu_0), std::abs(hu_p)});
                max_curv = std::max({max_curv, std::abs(curv_lo), std::abs(curv_hi)});
                max_curv_dev = std::max(max_curv_dev, std::abs(curv_hi - curv_lo));
                if (first_curv)
                    max_curv_dev = std::max(max_curv_dev, std::abs(curv_lo - *first_curv));
                else
                    first_curv = curv_lo;
                const double want = p.sense == Sense::Maximize ? -1.0 : 1.0;
                if (want * curv_lo <= 0.0 || want * curv_hi <= 0.0)
                    curvature_sign_ok = false;
                ++good_probes;
            } catch (const EvalError&) {
                continue; // probe left the expression's domain; try another
            }
        }
        ControlRule rule;
        const double tol = 1e-9 * scale;
        if (good_probes == 0) {
            rule.kind = ControlRuleKind::ScalarScan;
        } else if (max_curv <= tol) {
            rule.kind = ControlRuleKind::BangBang;
            if (!bounded)
                throw std::invalid_argument(
                    "control '" + p.control_names[k] +
                    "' enters the Hamiltonian linearly but has no finite bounds: "
                    "pointwise optimum is unbounded");
        } else if (max_curv_dev <= tol && curvature_sign_ok) {
            rule.kind = ControlRuleKind::AnalyticClamp;
        } else {
            rule.kind = ControlRuleKind::ScalarScan;
        }
        if (rule.kind == ControlRuleKind::ScalarScan && !bounded)
            rule.scan_bracket = {-100.0, 100.0};
        rules[k] = rule;
    }
    return rules;
}

struct PointwiseResult {
    VectorXd u;
    std::vector<bool> singular; // per component, bang-bang rule only
};

// The componentwise optimizer of H over the box at one (t, x, lam).
// u_prev supplies frozen values for the other components and the retained
// value on singular bang-bang nodes.
inline PointwiseResult pointwise_optimize(const OcpProblem& p, double t, const VectorXd& x,
                                          const VectorXd& lam, const VectorXd& u_prev,
                                          const std::vector<ControlRule>& rules,
                                          double singular_tol = 1e-8, int node = -1)
{
    detail::check_dims(p, x, u_prev, lam);
    if (static_cast<int>(rules.size()) != p.m())
        throw std::invalid_argument("one control rule required per control component");
    const bool maximize = p.sense == Sense::Maximize;
    PointwiseResult res;
    res.u = u_prev;
    res.singular.assign(p.m(), false);
    for (int k = 0; k < p.m(); ++k) {
        const double lo = p.bounds.lower(k);
        const double hi = p.bounds.upper(k);
        switch (rules[k].kind) {
        case ControlRuleKind::AnalyticClamp: {
            auto hu_at = [&](double v) {
                VectorXd uu = u_prev;
                uu(k) = v;
                return hamiltonian_du(p, t, x, uu, lam)(k);
            };
            const double u0 = u_prev(k);
            // exact for quadratic H at any step; scale so u0 +- d survives
            // rounding at large iterate magnitudes
            const double d = 1.0 + 1e-6 * std::abs(u0);
            const double hu0 = hu_at(u0);
            const double curv = (hu_at(u0 + d) - hu_at(u0 - d)) / (2.0 * d);
            const double want = maximize ? -1.0 : 1.0;
            if (want * curv <= 0.0)
                throw std::runtime_error(
                    "analytic clamp: Hamiltonian curvature in '" + p.control_names[k] +
                    "' has the wrong sign at " + detail::node_label(node, t));
            const double u_free = u0 - hu0 / curv;
            res.u(k) = clamp(u_free, lo, hi);
            break;
        }
        case ControlRuleKind::BangBang: {
            if (!p.bounds.fully_bounded(k))
                throw std::runtime_error("unbounded pointwise optimum for control '" +
                                         p.control_names[k] + "' at " +
                                         detail::node_label(node, t));
            const double sigma = hamiltonian_du(p, t, x, u_prev, lam)(k);
            const double s = maximize ? sigma : -sigma;
            if (s > singular_tol)
                res.u(k) = hi;
            else if (s < -singular_tol)
                res.u(k) = lo;
            else {
                res.u(k) = clamp(u_prev(k), lo, hi); // undetermined: retain and flag
                res.singular[k] = true;
            }
            break;
        }
        case ControlRuleKind::ScalarScan: {
            double a = lo, b = hi;
            if (!p.bounds.fully_bounded(k)) {
                if (!rules[k].scan_bracket)
                    throw std::runtime_error("scalar scan on unbounded control '" +
                                             p.control_names[k] + "' needs a bracket");
                a = std::max(lo, rules[k].scan_bracket->first);
                b = std::min(hi, rules[k].scan_bracket->second);
            }
            auto h_at = [&](double v) {
                VectorXd uu = u_prev;
                uu(k) = v;
                return hamiltonian_value(p, t, x, uu, lam);
            };
            double s = detail::golden_section(h_at, a, b, maximize);
            // Value comparisons flatten out near the optimum (noise floor
            // ~ sqrt(eps)); one guarded derivative step recovers the lost
            // digits and is a no-op on flat stretches.
            auto hu_at = [&](double v) {
                VectorXd uu = u_prev;
                uu(k) = v;
                return hamiltonian_du(p, t, x, uu, lam)(k);
            };
            const double d = std::max(1e-4 * (b - a), 1e-8);
            const double curv = (hu_at(s + d) - hu_at(s - d)) / (2.0 * d);
            const double want = maximize ? -1.0 : 1.0;
            if (want * curv > 0.0) {
                const double cand = clamp(s - hu_at(s) / curv, a, b);
                const double tol_h = 4e-15 * (1.0 + std::abs(h_at(s)));
                const bool better = maximize ? h_at(cand) >= h_at(s) - tol_h
                                             : h_at(cand) <= h_at(s) + tol_h;
                if (better) s = cand;
            }
            res.u(k) = s;
            break;
        }
        }
    }
    return res;
}

struct KktReport {
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> activity; // Activity as int
    MatrixXd dH_du;
    MatrixXd residual;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> singular;

    double max_residual() const
    {
        return residual.size() == 0 ? 0.0 : residual.maxCoeff();
    }
};

namespace detail {

// residual of one component against the complementary sign conditions
inline double sign_residual(double hu, Activity act, Sense sense)
{
    const double s = sense == Sense::Maximize ? 1.0 : -1.0;
    switch (act) {
    case Activity::Lower: return std::max(0.0, s * hu);  // need s*hu <= 0
    case Activity::Upper: return std::max(0.0, -s * hu); // need s*hu >= 0
    default: return std::abs(hu);                        // stationarity
    }
}

inline Activity classify_activity(double u, double lo, double hi, double tol_abs)
{
    if (std::isfinite(lo) && u - lo <= tol_abs) return Activity::Lower;
    if (std::isfinite(hi) && hi - u <= tol_abs) return Activity::Upper;
    return Activity::Interior;
}

inline double activity_tol(const BoxBounds& b, int k, double tol)
{
    const double width = b.fully_bounded(k) ? b.upper(k) - b.lower(k) : 1.0;
    return tol * width;
}

} // namespace detail

// Classifies every node against the bounds and scores the complementary
// sign conditions; residual is 0 exactly where they hold. Bang-bang
// components additionally get singular flags where |H_u| dips below
// singular_tol (pass rules when known so only those components are flagged).
inline KktReport sign_condition_audit(const OcpProblem& p, const Trajectory& traj,
                                      double tol = 1e-6,
                                      const std::vector<ControlRule>* rules = nullptr,
                                      double singular_tol = -1.0)
{
    if (!traj.has_adjoint())
        throw std::invalid_argument("sign-condition audit needs the adjoint trajectory");
    const int N = traj.grid.N;
    KktReport rep;
    rep.activity.resize(N, p.m());
    rep.dH_du.resize(N, p.m());
    rep.residual.resize(N, p.m());
    rep.singular.setConstant(N, p.m(), false);
    for (int i = 0; i < N; ++i) {
        const VectorXd hu = hamiltonian_du(p, traj.grid.node(i),
                                           traj.x.row(i).transpose(),
                                           traj.u.row(i).transpose(),
                                           traj.lam.row(i).transpose());
        rep.dH_du.row(i) = hu.transpose();
        for (int k = 0; k < p.m(); ++k) {
            const Activity act = detail::classify_activity(
                traj.u(i, k), p.bounds.lower(k), p.bounds.upper(k),
                detail::activity_tol(p.bounds, k, tol));
            rep.activity(i, k) = static_cast<int>(act);
            rep.residual(i, k) = detail::sign_residual(hu(k), act, p.sense);
        }
    }
    if (rules) {
        for (int k = 0; k < p.m(); ++k) {
            if ((*rules)[k].kind != ControlRuleKind::BangBang) continue;
            double stol = singular_tol;
            if (stol < 0.0)
                stol = 1e-8 * (1.0 + rep.dH_du.col(k).cwiseAbs().maxCoeff());
            for (int i = 0; i < N; ++i)
                if (std::abs(rep.dH_du(i, k)) <= stol) rep.singular(i, k) = true;
        }
    }
    return rep;
}

// Distance of dH_du from the normal cone of the box at u; the largest
// component violation is returned.
inline double normal_cone_residual(const VectorXd& dH_du, const VectorXd& u,
                                   const BoxBounds& bounds, Sense sense)
{
    if (dH_du.size() != u.size() || u.size() != bounds.lower.size())
        throw std::invalid_argument("dimension mismatch in normal-cone residual");
    double worst = 0.0;
    for (int k = 0; k < u.size(); ++k) {
        Activity act = Activity::Interior;
        if (bounds.finite_lower(k) && u(k) <= bounds.lower(k)) act = Activity::Lower;
        else if (bounds.finite_upper(k) && u(k) >= bounds.upper(k)) act = Activity::Upper;
        worst = std::max(worst, detail::sign_residual(dH_du(k), act, sense));
    }
    return worst;
}

} // namespace pmp
