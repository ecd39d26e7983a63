// pmp-sweep: solve optimal-control configs from the command line.
//
//   pmp-sweep run <config.ocp> [--emit trajectory,kkt,phases,comparison,gains]
//                              [--out DIR] [--grid N] [--damping θ] [--tol ε]
//                              [--max-iter K] [--solver fbsm|lqr] [--set k=v]...
//   pmp-sweep compare <config.ocp> [--emit comparison] [--out DIR] [...]
//   pmp-sweep validate <config.ocp> [--set k=v]...
//   pmp-sweep list-builtins
//
// Exit codes: 0 solved/valid, 2 solver did not converge, 1 any error.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"

#include "pmp/config.hpp"
#include "pmp/csv.hpp"
#include "pmp/diagnostics.hpp"

namespace fs = std::filesystem;

namespace {

struct CliOptions {
    std::string config_path;
    std::vector<std::string> emit;
    std::string out_dir = ".";
    int grid = 0; // 0: keep the config's value
    double damping = 0.0;
    double tol = 0.0;
    int max_iter = 0;
    std::string solver; // empty: keep the config's value
    std::vector<std::string> sets;
};

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::map<std::string, double> parse_sets(const std::vector<std::string>& sets)
{
    std::map<std::string, double> out;
    for (const auto& s : sets) {
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw pmp::ConfigError("--set expects key=value, got '" + s + "'");
        const std::string key = s.substr(0, eq);
        const std::string val = s.substr(eq + 1);
        char* end = nullptr;
        const double v = std::strtod(val.c_str(), &end);
        if (end == val.c_str() || *end != '\0')
            throw pmp::ConfigError("--set " + key + ": '" + val + "' is not a number");
        out[key] = v;
    }
    return out;
}

pmp::RunConfig load_with_flags(const CliOptions& opt)
{
    pmp::RunConfig rc = pmp::load_config(opt.config_path, parse_sets(opt.sets));
    if (opt.grid > 0) rc.sweep.grid_N = opt.grid;
    if (opt.damping > 0.0) rc.sweep.damping = opt.damping;
    if (opt.tol > 0.0) rc.sweep.tol = opt.tol;
    if (opt.max_iter > 0) rc.sweep.max_iterations = opt.max_iter;
    rc.sweep.validate();
    if (!opt.solver.empty()) rc.solver = opt.solver;
    if (rc.solver == "lqr" && !rc.has_lqr)
        throw pmp::ConfigError("--solver lqr needs an [lqr] section in the config");
    return rc;
}

std::ofstream open_out(const CliOptions& opt, const std::string& kind,
                       std::string* path_out = nullptr)
{
    const std::string stem = fs::path(opt.config_path).stem().string();
    const fs::path dir = opt.out_dir.empty() ? fs::path(".") : fs::path(opt.out_dir);
    fs::create_directories(dir);
    const fs::path path = dir / (stem + "_" + kind + ".csv");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open output file '" + path.string() + "'");
    if (path_out) *path_out = path.string();
    return os;
}

void print_phase_table(const pmp::PhaseSegmentation& seg)
{
    std::cout << "phases:\n";
    for (std::size_t k = 0; k < seg.per_control.size(); ++k)
        for (const auto& s : seg.per_control[k])
            std::cout << "  u" << k + 1 << "  [" << num(s.t_start) << ", " << num(s.t_end)
                      << "]  " << pmp::activity_name(s.activity) << "\n";
}

std::set<std::string> check_emit(const CliOptions& opt, bool lqr_mode)
{
    static const std::set<std::string> known = {"trajectory", "kkt", "phases", "comparison",
                                                "gains"};
    std::set<std::string> kinds(opt.emit.begin(), opt.emit.end());
    for (const auto& k : kinds) {
        if (!known.count(k))
            throw pmp::ConfigError("unknown --emit kind '" + k +
                                   "' (choose from trajectory,kkt,phases,comparison,gains)");
        if (k == "gains" && !lqr_mode)
            throw pmp::ConfigError("--emit gains needs --solver lqr");
        if (k == "comparison" && lqr_mode)
            throw pmp::ConfigError("--emit comparison is not available with --solver lqr");
    }
    return kinds;
}

void print_problem_line(const CliOptions& opt, const pmp::RunConfig& rc)
{
    const pmp::OcpProblem& p = rc.problem;
    std::cout << "problem: " << fs::path(opt.config_path).filename().string() << " ("
              << p.n() << (p.n() == 1 ? " state, " : " states, ") << p.m()
              << (p.m() == 1 ? " control" : " controls") << ", t in [" << num(p.t0) << ", "
              << num(p.t1) << "], "
              << (p.sense == pmp::Sense::Maximize ? "maximize" : "minimize") << ")\n";
}

int cmd_run(const CliOptions& opt)
{
    const pmp::RunConfig rc = load_with_flags(opt);
    const bool lqr_mode = rc.solver == "lqr";
    const auto kinds = check_emit(opt, lqr_mode);
    print_problem_line(opt, rc);

    pmp::Trajectory traj;
    bool converged = true;
    int iterations = 0;
    double objective = 0.0;
    const pmp::OcpProblem& p = rc.problem;

    pmp::RiccatiSolution riccati;
    if (lqr_mode) {
        std::cout << "solver:  lqr (N=" << rc.sweep.grid_N << ")\n";
        riccati = pmp::riccati_solve(rc.lqr, rc.sweep.grid_N);
        traj = pmp::closed_loop(rc.lqr, riccati);
        objective = pmp::objective(p, traj);
    } else {
        std::cout << "solver:  fbsm (N=" << rc.sweep.grid_N
                  << ", damping=" << num(rc.sweep.damping) << ", tol=" << num(rc.sweep.tol)
                  << ", max_iter=" << rc.sweep.max_iterations << ")\n";
        const pmp::SweepResult res = pmp::solve(p, rc.sweep);
        traj = res.trajectory;
        converged = res.converged;
        iterations = res.iterations;
        objective = res.objective;
    }

    const pmp::KktReport kkt = pmp::sign_condition_audit(p, traj, rc.sweep.tol);
    const pmp::PhaseSegmentation seg = pmp::segment_phases(traj, p.bounds);

    std::cout << "converged: " << (converged ? "yes" : "no") << "\n";
    std::cout << "iterations: " << iterations << "\n";
    std::cout << "objective: " << pmp::csv_number(objective) << "\n";
    std::cout << "max KKT residual: " << num(kkt.max_residual()) << "\n";
    print_phase_table(seg);

    for (const auto& kind : kinds) {
        std::string path;
        std::ofstream os = open_out(opt, kind, &path);
        if (kind == "trajectory") {
            pmp::write_trajectory_csv(os, p, traj);
        } else if (kind == "kkt") {
            pmp::write_kkt_csv(os, traj.grid, kkt);
        } else if (kind == "phases") {
            pmp::write_phases_csv(os, seg);
        } else if (kind == "gains") {
            pmp::write_gains_csv(os, riccati);
        } else { // comparison
            const pmp::ComparisonReport rep = pmp::clip_comparison(p, rc.sweep);
            pmp::write_comparison_csv(os, rep);
        }
        std::cout << "wrote: " << path << "\n";
    }
    return converged ? 0 : 2;
}

int cmd_compare(const CliOptions& opt)
{
    const pmp::RunConfig rc = load_with_flags(opt);
    if (rc.solver == "lqr")
        throw pmp::ConfigError("compare uses the sweep solver; drop --solver lqr");
    check_emit(opt, false);
    print_problem_line(opt, rc);

    const pmp::ComparisonReport rep = pmp::clip_comparison(rc.problem, rc.sweep);
    const char* better =
        rc.problem.sense == pmp::Sense::Maximize ? "projected - clipped" : "clipped - projected";

    std::cout << "projected objective: " << pmp::csv_number(rep.J_projected) << "\n";
    if (rep.clipped_available) {
        std::cout << "clipped objective:   " << pmp::csv_number(rep.J_clipped) << "\n";
        std::cout << "gap (" << better << "): " << pmp::csv_number(rep.gap) << "\n";
        std::cout << "max |u_projected - u_clipped|: " << num(rep.max_control_difference)
                  << "\n";
        std::cout << "projected KKT residual: " << num(rep.projected_kkt_residual) << "\n";
        std::cout << "clipped KKT residual:   " << num(rep.clipped_kkt_residual) << "\n";
        if (rep.vacuous)
            std::cout << "note: no finite bound is active at the solution; the comparison "
                         "is vacuous\n";
    } else {
        std::cout << "clipped candidate unavailable: " << rep.clipped_failure << "\n";
    }

    for (const auto& kind : std::set<std::string>(opt.emit.begin(), opt.emit.end())) {
        if (kind != "comparison")
            throw pmp::ConfigError("compare only emits 'comparison', not '" + kind + "'");
        std::string path;
        std::ofstream os = open_out(opt, kind, &path);
        pmp::write_comparison_csv(os, rep);
        std::cout << "wrote: " << path << "\n";
    }
    return rep.projected.converged ? 0 : 2;
}

int cmd_validate(const CliOptions& opt)
{
    const pmp::RunConfig rc = load_with_flags(opt);
    print_problem_line(opt, rc);
    std::cout << "solver:  " << rc.solver << " (N=" << rc.sweep.grid_N
              << ", damping=" << num(rc.sweep.damping) << ", tol=" << num(rc.sweep.tol)
              << ", max_iter=" << rc.sweep.max_iterations << ")\n";
    if (rc.builtin_source) std::cout << "source:  builtin '" << rc.builtin_name << "'\n";
    if (rc.has_lqr) std::cout << "lqr:     n=" << rc.lqr.n() << ", m=" << rc.lqr.m() << "\n";
    std::cout << "OK\n";
    return 0;
}

int cmd_list_builtins()
{
    for (const auto& info : pmp::builtin_list()) {
        std::cout << info.name << "\n  " << info.summary << "\n  parameters:";
        for (const auto& [k, v] : info.defaults) std::cout << " " << k << "=" << num(v);
        std::cout << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Pontryagin sweep toolkit: solve, compare, and export "
                 "finite-horizon optimal control problems"};
    app.require_subcommand(1);
    CliOptions opt;

    auto add_common = [&](CLI::App* sub, bool with_outputs) {
        sub->add_option("config", opt.config_path, "problem config file")->required();
        sub->add_option("--set", opt.sets,
                        "override a builtin parameter, e.g. --set T=6 (repeatable)");
        sub->add_option("--grid", opt.grid, "number of grid nodes")
            ->check(CLI::PositiveNumber);
        sub->add_option("--damping", opt.damping, "sweep damping factor in (0, 1]");
        sub->add_option("--tol", opt.tol, "sweep convergence tolerance");
        sub->add_option("--max-iter", opt.max_iter, "sweep iteration cap")
            ->check(CLI::PositiveNumber);
        if (with_outputs) {
            sub->add_option("--emit", opt.emit,
                            "comma-separated outputs: trajectory,kkt,phases,comparison,gains")
                ->delimiter(',');
            sub->add_option("--out", opt.out_dir, "output directory (default: .)")
                ->envname("PMP_SWEEP_OUT");
        }
    };

    CLI::App* run = app.add_subcommand("run", "solve a config and emit results");
    add_common(run, true);
    run->add_option("--solver", opt.solver, "fbsm (default) or lqr")
        ->check(CLI::IsMember({"fbsm", "lqr"}));

    CLI::App* compare =
        app.add_subcommand("compare", "projection-vs-clipping comparison on one config");
    add_common(compare, true);

    CLI::App* validate = app.add_subcommand("validate", "parse and check a config, no solve");
    add_common(validate, false);
    validate->add_option("--solver", opt.solver, "fbsm (default) or lqr")
        ->check(CLI::IsMember({"fbsm", "lqr"}));

    CLI::App* list = app.add_subcommand("list-builtins", "show built-in problems");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) return cmd_run(opt);
        if (compare->parsed()) return cmd_compare(opt);
        if (validate->parsed()) return cmd_validate(opt);
        if (list->parsed()) return cmd_list_builtins();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
