#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "pmp/model.hpp"
#include "pmp/registry.hpp"

using namespace pmp;
using Catch::Matchers::WithinAbs;

namespace {

VectorXd vec1(double a)
{
    VectorXd v(1);
    v << a;
    return v;
}
VectorXd vec2(double a, double b)
{
    VectorXd v(2);
    v << a, b;
    return v;
}

OcpProblem zero_problem()
{
    OcpProblem p;
    p.sense = Sense::Maximize;
    p.t0 = 0.0;
    p.t1 = 1.0;
    p.state_names = {"x"};
    p.control_names = {"u"};
    p.f_src = parse("0");
    p.g_src = {parse("0")};
    p.bounds = BoxBounds::box(0.0, 1.0);
    p.boundary.initial = vec1(0.0);
    p.boundary.terminal = {TerminalCondition::free()};
    p.finalize();
    return p;
}

} // namespace

TEST_CASE("Hamiltonian values", "[model]")
{
    SECTION("scalar regulator arithmetic")
    {
        auto p = registry_get("lqr_scalar");
        CHECK(hamiltonian_value(p, 0.3, vec1(2.0), vec1(1.0), vec1(3.0)) == 5.5);
    }
    SECTION("two-state example with zero adjoint")
    {
        auto p = registry_get("double_integrator");
        auto h = hamiltonian(p, 0.0, vec2(0.0, 1.0), vec1(0.0), vec2(0.0, 0.0));
        CHECK(h.value == 1.0);
        CHECK(h.dH_du(0) == 0.0);
    }
    SECTION("zero payoff and zero dynamics")
    {
        auto p = zero_problem();
        CHECK(hamiltonian_value(p, 0.5, vec1(7.0), vec1(0.3), vec1(-2.0)) == 0.0);
    }
    SECTION("value equals independent f + lam . g")
    {
        auto p = registry_get("linear_growth", {{"a", 0.5}, {"b", 2.0}});
        const double t = 0.7, x = 1.3, u = 0.4, lam = -0.9;
        const double f = 1.0 * x - 0.5 * u * u;
        const double g = 0.5 * x + 2.0 * u;
        CHECK_THAT(hamiltonian_value(p, t, vec1(x), vec1(u), vec1(lam)),
                   WithinAbs(f + lam * g, 1e-14));
    }
    SECTION("dimension mismatches are rejected")
    {
        auto p = registry_get("double_integrator");
        CHECK_THROWS_AS(hamiltonian_value(p, 0.0, vec1(0.0), vec1(0.0), vec2(0.0, 0.0)),
                        std::invalid_argument);
        CHECK_THROWS_AS(hamiltonian_value(p, 0.0, vec2(0, 0), vec2(0, 0), vec2(0, 0)),
                        std::invalid_argument);
    }
}

TEST_CASE("adjoint right-hand side", "[model]")
{
    SECTION("two-state example at the known multiplier")
    {
        auto p = registry_get("double_integrator");
        VectorXd rhs = adjoint_rhs(p, 0.2, vec2(0.1, 0.2), vec1(0.5), vec2(-7.0, 1.0));
        CHECK_THAT(rhs(0), WithinAbs(0.0, 1e-14));
        CHECK_THAT(rhs(1), WithinAbs(6.0, 1e-14)); // -(1 + lam1)
    }
    SECTION("drift-free growth problem has constant adjoint slope")
    {
        auto p = registry_get("linear_growth");
        for (double t : {0.0, 1.5, 2.9})
            CHECK_THAT(adjoint_rhs(p, t, vec1(2.0), vec1(1.0), vec1(0.7))(0),
                       WithinAbs(-1.0, 1e-14));
    }
    SECTION("zero problem gives the zero vector")
    {
        auto p = zero_problem();
        CHECK(adjoint_rhs(p, 0.5, vec1(1.0), vec1(0.5), vec1(2.0))(0) == 0.0);
    }
}

TEST_CASE("transversality bookkeeping", "[model]")
{
    SECTION("no terminal payoff, all free: exact zeros")
    {
        auto p = registry_get("second_order");
        auto tv = transversality(p, vec2(3.0, -1.0));
        REQUIRE(tv[0].has_value());
        REQUIRE(tv[1].has_value());
        CHECK(*tv[0] == 0.0);
        CHECK(*tv[1] == 0.0);
    }
    SECTION("fixed components are reported unknown")
    {
        auto p = registry_get("double_integrator");
        auto tv = transversality(p, vec2(1.0, 0.5));
        CHECK_FALSE(tv[0].has_value());
        REQUIRE(tv[1].has_value());
        CHECK(*tv[1] == 0.0);
    }
    SECTION("quadratic terminal payoff gradient")
    {
        OcpProblem p;
        p.sense = Sense::Minimize;
        p.t0 = 0.0;
        p.t1 = 1.0;
        p.state_names = {"x1", "x2"};
        p.control_names = {"u"};
        p.f_src = parse("0");
        p.g_src = {parse("u"), parse("0")};
        p.phi_src = parse("0.5*(x1^2 + x2^2)");
        p.bounds = BoxBounds::unbounded(1);
        p.boundary.initial = vec2(0.0, 0.0);
        p.boundary.terminal = {TerminalCondition::free(), TerminalCondition::free()};
        p.finalize();
        auto tv = transversality(p, vec2(2.0, 3.0));
        CHECK_THAT(*tv[0], WithinAbs(2.0, 1e-14));
        CHECK_THAT(*tv[1], WithinAbs(3.0, 1e-14));
    }
}

TEST_CASE("dual partials agree with finite differences", "[model][property]")
{
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (const auto& info : builtin_list()) {
        auto p = registry_get(info.name);
        for (int trial = 0; trial < 100; ++trial) {
            const double t = p.t0 + (p.t1 - p.t0) * 0.5 * (dist(rng) / 2.0 + 1.0);
            VectorXd x(p.n()), u(p.m()), lam(p.n());
            for (int i = 0; i < p.n(); ++i) x(i) = dist(rng);
            for (int k = 0; k < p.m(); ++k) u(k) = dist(rng);
            for (int i = 0; i < p.n(); ++i) lam(i) = dist(rng);
            auto h = hamiltonian(p, t, x, u, lam);
            const double fd_h = 1e-6;
            for (int j = 0; j < p.n(); ++j) {
                VectorXd xp = x, xm = x;
                xp(j) += fd_h;
                xm(j) -= fd_h;
                const double fd = (hamiltonian_value(p, t, xp, u, lam) -
                                   hamiltonian_value(p, t, xm, u, lam)) /
                                  (2.0 * fd_h);
                INFO(info.name << " dH_dx[" << j << "]");
                CHECK_THAT(h.dH_dx(j), WithinAbs(fd, 1e-6 * (1.0 + std::abs(fd))));
            }
            for (int k = 0; k < p.m(); ++k) {
                VectorXd up = u, um = u;
                up(k) += fd_h;
                um(k) -= fd_h;
                const double fd = (hamiltonian_value(p, t, x, up, lam) -
                                   hamiltonian_value(p, t, x, um, lam)) /
                                  (2.0 * fd_h);
                INFO(info.name << " dH_du[" << k << "]");
                CHECK_THAT(h.dH_du(k), WithinAbs(fd, 1e-6 * (1.0 + std::abs(fd))));
            }
        }
    }
}

TEST_CASE("Hamiltonian is linear in the adjoint", "[model][property]")
{
    auto p = registry_get("double_integrator");
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> dist(-3.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double t = 0.5;
        VectorXd x = vec2(dist(rng), dist(rng));
        VectorXd u = vec1(dist(rng));
        VectorXd l1 = vec2(dist(rng), dist(rng));
        VectorXd l2 = vec2(dist(rng), dist(rng));
        const double lhs = hamiltonian_value(p, t, x, u, VectorXd(l1 + l2)) -
                           hamiltonian_value(p, t, x, u, l1) -
                           hamiltonian_value(p, t, x, u, l2) +
                           hamiltonian_value(p, t, x, u, VectorXd(VectorXd::Zero(2)));
        CHECK_THAT(lhs, WithinAbs(0.0, 1e-12));
    }
}

TEST_CASE("native callback problems", "[model]")
{
    OcpProblem p;
    p.sense = Sense::Minimize;
    p.t0 = 0.0;
    p.t1 = 1.0;
    p.state_names = {"x"};
    p.control_names = {"u"};
    p.f_fn = [](double, const VectorXd& x, const VectorXd& u) {
        return 0.5 * (x(0) * x(0) + u(0) * u(0));
    };
    p.g_fn = [](double, const VectorXd&, const VectorXd& u) { return u; };
    p.bounds = BoxBounds::unbounded(1);
    p.boundary.initial = vec1(1.0);
    p.boundary.terminal = {TerminalCondition::free()};
    p.finalize();

    auto ref = registry_get("lqr_scalar");

    SECTION("finite-difference partials track the expression-backed twin")
    {
        auto ha = hamiltonian(p, 0.3, vec1(1.2), vec1(-0.7), vec1(0.4));
        auto hb = hamiltonian(ref, 0.3, vec1(1.2), vec1(-0.7), vec1(0.4));
        CHECK_THAT(ha.value, WithinAbs(hb.value, 1e-12));
        CHECK_THAT(ha.dH_dx(0), WithinAbs(hb.dH_dx(0), 1e-8));
        CHECK_THAT(ha.dH_du(0), WithinAbs(hb.dH_du(0), 1e-8));
    }
    SECTION("analytic gradients are preferred when supplied")
    {
        p.grad_fn = [](double, const VectorXd& x, const VectorXd& u, const VectorXd& lam,
                       VectorXd& dx, VectorXd& du) {
            dx = x;
            du = u + lam;
        };
        auto h = hamiltonian(p, 0.3, vec1(1.2), vec1(-0.7), vec1(0.4));
        CHECK(h.dH_dx(0) == 1.2);
        CHECK(h.dH_du(0) == -0.7 + 0.4);
    }
    SECTION("native terminal payoff feeds transversality through differences")
    {
        p.phi_fn = [](const VectorXd& x) { return x(0) * x(0); };
        auto tv = transversality(p, vec1(3.0));
        CHECK_THAT(*tv[0], WithinAbs(6.0, 1e-5));
    }
}

TEST_CASE("problem registry", "[model]")
{
    SECTION("unknown names list the catalog")
    {
        CHECK_THROWS_WITH(registry_get("nonsense"),
                          Catch::Matchers::ContainsSubstring("double_integrator"));
    }
    SECTION("unknown parameter overrides are rejected with the valid set")
    {
        CHECK_THROWS_WITH(registry_get("linear_growth", {{"gamma", 1.0}}),
                          Catch::Matchers::ContainsSubstring("alpha"));
    }
    SECTION("double integrator shape")
    {
        auto p = registry_get("double_integrator");
        CHECK(p.sense == Sense::Minimize);
        CHECK(p.n() == 2);
        CHECK(p.m() == 1);
        CHECK(p.boundary.initial(0) == 0.0);
        CHECK(p.boundary.terminal[0].is_fixed);
        CHECK(p.boundary.terminal[0].value == 1.0);
        CHECK_FALSE(p.boundary.terminal[1].is_fixed);
        CHECK_FALSE(p.bounds.finite_lower(0));
        CHECK_FALSE(p.bounds.finite_upper(0));
    }
    SECTION("growth problem with overrides")
    {
        auto p = registry_get("linear_growth", {{"T", 6.0}, {"alpha", 2.0}});
        CHECK(p.t1 == 6.0);
        // f = 2x - u^2/2 at x=1, u=0
        CHECK(p.running(0.0, vec1(1.0), vec1(0.0)) == 2.0);
        CHECK(p.bounds.lower(0) == 0.0);
        CHECK(p.bounds.upper(0) == 2.0);
    }
    SECTION("transformed integral-constraint problem has two fixed endpoints")
    {
        auto p = registry_get("isoperimetric");
        CHECK(p.boundary.terminal[0].is_fixed);
        CHECK(p.boundary.terminal[1].is_fixed);
        CHECK(p.boundary.terminal[1].value == 2.0);
    }
}

TEST_CASE("problem validation", "[model]")
{
    auto base = []() {
        OcpProblem p;
        p.t0 = 0.0;
        p.t1 = 1.0;
        p.state_names = {"x"};
        p.control_names = {"u"};
        p.f_src = parse("x");
        p.g_src = {parse("u")};
        p.bounds = BoxBounds::box(0.0, 1.0);
        p.boundary.initial = vec1(0.0);
        p.boundary.terminal = {TerminalCondition::free()};
        return p;
    };

    SECTION("accepts a well-formed problem")
    {
        auto p = base();
        REQUIRE_NOTHROW(p.finalize());
    }
    SECTION("time direction")
    {
        auto p = base();
        p.t1 = -1.0;
        CHECK_THROWS_AS(p.finalize(), std::invalid_argument);
    }
    SECTION("duplicate names")
    {
        auto p = base();
        p.control_names = {"x"};
        CHECK_THROWS_AS(p.finalize(), std::invalid_argument);
        p = base();
        p.state_names = {"t"};
        CHECK_THROWS_AS(p.finalize(), std::invalid_argument);
    }
    SECTION("inverted bounds")
    {
        auto p = base();
        p.bounds = BoxBounds::box(2.0, 0.0);
        CHECK_THROWS_AS(p.finalize(), std::invalid_argument);
    }
    SECTION("dynamics count")
    {
        auto p = base();
        p.g_src.push_back(parse("0"));
        CHECK_THROWS_AS(p.finalize(), std::invalid_argument);
    }
    SECTION("undeclared variable in an expression")
    {
        auto p = base();
        p.g_src = {parse("u + y")};
        CHECK_THROWS_WITH(p.finalize(), Catch::Matchers::ContainsSubstring("y"));
    }
    SECTION("boundary dimensions")
    {
        auto p = base();
        p.boundary.initial = vec2(0.0, 0.0);
        CHECK_THROWS_AS(p.finalize(), std::invalid_argument);
    }
}
