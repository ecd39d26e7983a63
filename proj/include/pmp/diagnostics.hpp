// Post-solve analysis: switching-function traces, bound-activity phase
// segmentation, objective evaluation, and the projected-vs-clipped control
// comparison (solve with the box respected inside every sweep, versus
// clamping the unconstrained solution after the fact).
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pmp/fbsm.hpp"

namespace pmp {

// sigma_k(t_i) = dH/du_k along the trajectory.
inline MatrixXd switching_function(const OcpProblem& p, const Trajectory& traj)
{
    if (!traj.has_adjoint())
        throw std::invalid_argument("switching function needs the adjoint trajectory");
    const int N = traj.grid.N;
    MatrixXd sigma(N, p.m());
    for (int i = 0; i < N; ++i) {
        sigma.row(i) = hamiltonian_du(p, traj.grid.node(i), traj.x.row(i).transpose(),
                                      traj.u.row(i).transpose(), traj.lam.row(i).transpose())
                           .transpose();
    }
    return sigma;
}

struct PhaseSegment {
    double t_start = 0.0;
    double t_end = 0.0;
    Activity activity = Activity::Interior;
};

// One ordered segment list per control component; the segments partition
// [t0, t1] and consecutive segments carry distinct activities.
struct PhaseSegmentation {
    std::vector<std::vector<PhaseSegment>> per_control;
};

namespace detail {

// Boundary between a bound run and an interior run: extrapolate the line
// through the two interior nodes nearest the transition to the moment it
// meets the bound. Exact for controls that vary linearly in time; the
// estimate is clamped into the transition interval so the partition stays
// valid. Falls back to the interval midpoint when no usable line exists.
inline double crossing_time(const MatrixXd& u, int k, const TimeGrid& grid, int last_a,
                            int first_b, Activity act_a, Activity act_b,
                            const BoxBounds& bounds)
{
    const double lo_t = grid.node(last_a), hi_t = grid.node(first_b);
    double bound = std::numeric_limits<double>::quiet_NaN();
    int i0 = -1, i1 = -1; // two interior-side nodes, nearest first
    if (act_a == Activity::Interior && (act_b == Activity::Lower || act_b == Activity::Upper)) {
        bound = act_b == Activity::Lower ? bounds.lower(k) : bounds.upper(k);
        i0 = last_a;
        i1 = last_a - 1;
    } else if (act_b == Activity::Interior &&
               (act_a == Activity::Lower || act_a == Activity::Upper)) {
        bound = act_a == Activity::Lower ? bounds.lower(k) : bounds.upper(k);
        i0 = first_b;
        i1 = first_b + 1;
    }
    if (i1 >= 0 && i1 < grid.N && std::isfinite(bound)) {
        const double t0 = grid.node(i0), t1 = grid.node(i1);
        const double u0 = u(i0, k), u1 = u(i1, k);
        if (u0 != u1) {
            const double t_hit = t0 + (bound - u0) * (t1 - t0) / (u1 - u0);
            return clamp(t_hit, lo_t, hi_t);
        }
    }
    return 0.5 * (lo_t + hi_t);
}

} // namespace detail

// Classifies every node of every control component against the box, merges
// runs of equal activity, and places the run boundaries at interpolated
// crossing times. An optional node-wise singular mask (from a solve's
// sign-condition audit) overrides the box classification.
inline PhaseSegmentation segment_phases(
    const Trajectory& traj, const BoxBounds& bounds, double tol = 1e-6,
    const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>* singular = nullptr)
{
    if (traj.u.rows() != traj.grid.N)
        throw std::invalid_argument("trajectory has no control values to segment");
    const int N = traj.grid.N;
    const int m = static_cast<int>(traj.u.cols());
    PhaseSegmentation out;
    out.per_control.resize(m);

    for (int k = 0; k < m; ++k) {
        const double atol = detail::activity_tol(bounds, k, tol);
        std::vector<Activity> act(N);
        for (int i = 0; i < N; ++i) {
            act[i] = detail::classify_activity(traj.u(i, k), bounds.lower(k),
                                               bounds.upper(k), atol);
            if (singular && (*singular)(i, k)) act[i] = Activity::Singular;
        }

        // run-length encode
        struct Run {
            int first, last;
            Activity a;
        };
        std::vector<Run> runs;
        for (int i = 0; i < N; ++i) {
            if (!runs.empty() && runs.back().a == act[i])
                runs.back().last = i;
            else
                runs.push_back({i, i, act[i]});
        }

        std::vector<PhaseSegment>& segs = out.per_control[k];
        double cursor = traj.grid.t0;
        for (std::size_t r = 0; r < runs.size(); ++r) {
            double end = traj.grid.t1;
            if (r + 1 < runs.size())
                end = detail::crossing_time(traj.u, k, traj.grid, runs[r].last,
                                            runs[r + 1].first, runs[r].a, runs[r + 1].a,
                                            bounds);
            end = clamp(end, cursor, traj.grid.t1);
            if (end > cursor) {
                if (!segs.empty() && segs.back().activity == runs[r].a)
                    segs.back().t_end = end; // neighbor merged after a dropped run
                else
                    segs.push_back({cursor, end, runs[r].a});
            }
            cursor = std::max(cursor, end);
        }
        if (!segs.empty()) segs.back().t_end = traj.grid.t1;
    }
    return out;
}

// Quadrature of the running payoff along the nodes plus the terminal payoff.
inline double objective(const OcpProblem& p, const Trajectory& traj)
{
    const int N = traj.grid.N;
    VectorXd f_nodes(N);
    for (int i = 0; i < N; ++i)
        f_nodes(i) = p.running(traj.grid.node(i), traj.x.row(i).transpose(),
                               traj.u.row(i).transpose());
    return quadrature(f_nodes, traj.grid) + p.terminal_payoff(traj.x.row(N - 1).transpose());
}

struct ComparisonReport {
    double J_projected = std::numeric_limits<double>::quiet_NaN();
    double J_clipped = std::numeric_limits<double>::quiet_NaN();
    // advantage of the projected candidate: J_projected - J_clipped for
    // maximize problems, J_clipped - J_projected for minimize problems
    double gap = std::numeric_limits<double>::quiet_NaN();
    double max_control_difference = 0.0;
    double projected_kkt_residual = std::numeric_limits<double>::quiet_NaN();
    double clipped_kkt_residual = std::numeric_limits<double>::quiet_NaN();
    bool vacuous = false;           // no finite bound was active at the solution
    bool clipped_available = false; // the unconstrained route produced a candidate
    std::string clipped_failure;    // why not, when unavailable
    SweepResult projected;
    Trajectory clipped;
};

// Route A solves the problem with the box enforced inside every sweep.
// Route B lifts the box, solves the unconstrained problem, clamps the
// finished control, and re-integrates the state under the clipped control;
// its adjoint is then rebuilt backward along that re-integrated trajectory.
// Both candidates are audited against the *constrained* problem.
inline ComparisonReport clip_comparison(const OcpProblem& p, const SweepConfig& cfg)
{
    ComparisonReport rep;
    rep.projected = solve(p, cfg);
    rep.J_projected = rep.projected.objective;
    rep.projected_kkt_residual = rep.projected.kkt.max_residual();

    // post-hoc activity detection: is any finite bound active anywhere?
    bool active = false;
    {
        const Trajectory& tr = rep.projected.trajectory;
        for (int k = 0; k < p.m() && !active; ++k) {
            const double atol = detail::activity_tol(p.bounds, k, 1e-6);
            for (int i = 0; i < tr.grid.N && !active; ++i)
                active = detail::classify_activity(tr.u(i, k), p.bounds.lower(k),
                                                   p.bounds.upper(k),
                                                   atol) != Activity::Interior;
        }
    }
    rep.vacuous = !active;

    OcpProblem lifted = p;
    lifted.bounds = BoxBounds::unbounded(p.m());
    lifted.finalize();

    SweepResult free_run;
    try {
        free_run = solve(lifted, cfg);
        if (!free_run.converged)
            throw std::runtime_error("unconstrained solve did not converge");
    } catch (const std::exception& e) {
        rep.clipped_failure = e.what();
        return rep;
    }

    // clamp the finished control and re-simulate
    const int N = cfg.grid_N;
    Trajectory clip;
    clip.grid = free_run.trajectory.grid;
    clip.u = free_run.trajectory.u;
    for (int k = 0; k < p.m(); ++k)
        for (int i = 0; i < N; ++i)
            clip.u(i, k) = clamp(clip.u(i, k), p.bounds.lower(k), p.bounds.upper(k));
    clip.x = rk4_forward(
        [&](double t, const VectorXd& x) {
            return p.dynamics(t, x, interp_linear(clip.u, clip.grid, t));
        },
        p.boundary.initial, clip.grid);

    // adjoint rebuilt along the clipped trajectory; fixed terminal
    // components (which the clipped candidate need not hit) borrow the
    // constrained solve's terminal adjoint so the audit stays comparable
    VectorXd lamT(p.n());
    {
        const auto tv = transversality(p, clip.x.row(N - 1).transpose());
        for (int i = 0; i < p.n(); ++i)
            lamT(i) = tv[i] ? *tv[i] : rep.projected.trajectory.lam(N - 1, i);
    }
    clip.lam = rk4_backward(
        [&](double t, const VectorXd& lam) {
            return adjoint_rhs(p, t, interp_linear(clip.x, clip.grid, t),
                               interp_linear(clip.u, clip.grid, t), lam);
        },
        lamT, clip.grid);

    rep.clipped_available = true;
    rep.clipped = clip;
    rep.J_clipped = objective(p, clip);
    rep.gap = p.sense == Sense::Maximize ? rep.J_projected - rep.J_clipped
                                         : rep.J_clipped - rep.J_projected;
    rep.max_control_difference =
        (rep.projected.trajectory.u - clip.u).cwiseAbs().maxCoeff();
    rep.clipped_kkt_residual = sign_condition_audit(p, clip, cfg.tol).max_residual();
    return rep;
}

} // namespace pmp
