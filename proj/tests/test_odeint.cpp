#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pmp/odeint.hpp"

using namespace pmp;
using Catch::Matchers::WithinAbs;

namespace {
VectorXd scalar(double v)
{
    VectorXd y(1);
    y << v;
    return y;
}
} // namespace

TEST_CASE("time grid", "[odeint]")
{
    TimeGrid g(0.0, 2.0, 5);
    CHECK(g.h() == 0.5);
    CHECK(g.node(0) == 0.0);
    CHECK(g.node(4) == 2.0);
    CHECK_THROWS_AS(TimeGrid(0.0, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(1.0, 1.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(2.0, 1.0, 10), std::invalid_argument);
}

TEST_CASE("forward integration", "[odeint]")
{
    SECTION("zero dynamics hold the initial value")
    {
        TimeGrid g(0.0, 1.0, 11);
        auto out = rk4_forward([](double, const VectorXd& y) { return VectorXd::Zero(y.size()); },
                               scalar(5.0), g);
        for (int i = 0; i < g.N; ++i) CHECK(out(i, 0) == 5.0);
    }
    SECTION("exponential growth reaches e within 1e-8")
    {
        TimeGrid g(0.0, 1.0, 101);
        auto out = rk4_forward([](double, const VectorXd& y) { return y; }, scalar(1.0), g);
        CHECK_THAT(out(100, 0), WithinAbs(std::exp(1.0), 1e-8));
    }
    SECTION("quadratic-in-time drift integrates exactly to the closed form")
    {
        // velocity 3 - 3t from rest: position 3t - 1.5 t^2
        TimeGrid g(0.0, 1.0, 1001);
        auto out = rk4_forward(
            [](double t, const VectorXd&) { return scalar(3.0 - 3.0 * t); }, scalar(0.0), g);
        CHECK_THAT(out(1000, 0), WithinAbs(1.5, 1e-9));
        CHECK_THAT(out(500, 0), WithinAbs(3.0 * 0.5 - 1.5 * 0.25, 1e-9));
    }
    SECTION("non-finite states are reported with the first offending node")
    {
        TimeGrid g(0.0, 10.0, 11);
        auto blow_up = [](double, const VectorXd& y) { return VectorXd(y.array().square() * 100.0); };
        CHECK_THROWS_AS(rk4_forward(blow_up, scalar(10.0), g), IntegrationError);
        try {
            rk4_forward(blow_up, scalar(10.0), g);
        } catch (const IntegrationError& e) {
            CHECK(e.node() >= 1);
            CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("node"));
        }
    }
}

TEST_CASE("backward integration", "[odeint]")
{
    SECTION("constant negative slope from a zero terminal value")
    {
        TimeGrid g(0.0, 1.0, 11);
        auto out = rk4_backward(
            [](double, const VectorXd&) { return scalar(-1.0); }, scalar(0.0), g);
        for (int i = 0; i < g.N; ++i)
            CHECK_THAT(out(i, 0), WithinAbs(1.0 - g.node(i), 1e-12));
    }
    SECTION("zero dynamics hold the terminal value")
    {
        TimeGrid g(0.0, 3.0, 7);
        auto out = rk4_backward(
            [](double, const VectorXd& y) { return VectorXd::Zero(y.size()); }, scalar(4.5), g);
        for (int i = 0; i < g.N; ++i) CHECK(out(i, 0) == 4.5);
    }
    SECTION("affine adjoint recovers the linear closed form")
    {
        // rate -(1 + C) with C = -7, terminal value 0 at t = 1: 6(t - 1)
        TimeGrid g(0.0, 1.0, 1001);
        auto out = rk4_backward(
            [](double, const VectorXd&) { return scalar(-(1.0 - 7.0)); }, scalar(0.0), g);
        for (int i : {0, 250, 500, 999}) {
            CHECK_THAT(out(i, 0), WithinAbs(6.0 * (g.node(i) - 1.0), 1e-10));
        }
        // the induced control -lam/2 starts at 3 and falls linearly
        CHECK_THAT(-out(0, 0) / 2.0, WithinAbs(3.0, 1e-10));
    }
}

TEST_CASE("round trip and order of accuracy", "[odeint][property]")
{
    SECTION("forward then backward recovers the initial state")
    {
        TimeGrid g(0.0, 1.0, 1001);
        auto rhs = [](double t, const VectorXd& y) {
            VectorXd d(2);
            d << y(1), -std::sin(y(0)) + 0.3 * std::cos(t);
            return d;
        };
        VectorXd y0(2);
        y0 << 0.4, -0.2;
        auto fwd = rk4_forward(rhs, y0, g);
        auto bwd = rk4_backward(rhs, VectorXd(fwd.row(g.N - 1).transpose()), g);
        CHECK((bwd.row(0).transpose() - y0).norm() < 1e-8);
    }
    SECTION("halving the step cuts the endpoint error by roughly 16")
    {
        auto rhs = [](double t, const VectorXd&) { return scalar(std::cos(t)); };
        auto endpoint_error = [&](int N) {
            TimeGrid g(0.0, 2.0, N);
            auto out = rk4_forward(rhs, scalar(0.0), g);
            return std::abs(out(N - 1, 0) - std::sin(2.0));
        };
        const double ratio = endpoint_error(51) / endpoint_error(101);
        CHECK(ratio >= 14.0);
        CHECK(ratio <= 18.0);
    }
}

TEST_CASE("linear interpolation between nodes", "[odeint]")
{
    TimeGrid g(0.0, 1.0, 3);
    MatrixXd vals(3, 2);
    vals << 0.0, 1.0, 1.0, 3.0, 4.0, 9.0;
    CHECK(interp_linear(vals, g, 0.25)(0) == 0.5);
    CHECK(interp_linear(vals, g, 0.25)(1) == 2.0);
    CHECK(interp_linear(vals, g, 0.5)(0) == 1.0);
    CHECK(interp_linear(vals, g, 0.75)(0) == 2.5);
    SECTION("clamps outside the span")
    {
        CHECK(interp_linear(vals, g, -1.0)(0) == 0.0);
        CHECK(interp_linear(vals, g, 2.0)(1) == 9.0);
    }
}

TEST_CASE("quadrature", "[odeint]")
{
    SECTION("constant integrand")
    {
        TimeGrid g(0.0, 2.0, 21);
        CHECK_THAT(quadrature(VectorXd::Ones(21), g), WithinAbs(2.0, 1e-14));
    }
    SECTION("t^2 over the unit interval")
    {
        TimeGrid g(0.0, 1.0, 101);
        VectorXd v(101);
        for (int i = 0; i < 101; ++i) v(i) = g.node(i) * g.node(i);
        CHECK_THAT(quadrature(v, g), WithinAbs(1.0 / 3.0, 1e-9));
    }
    SECTION("integral of 10t - 9t^2 on [0,1] is 2")
    {
        TimeGrid g(0.0, 1.0, 1001);
        VectorXd v(1001);
        for (int i = 0; i < 1001; ++i) {
            const double t = g.node(i);
            v(i) = 10.0 * t - 9.0 * t * t;
        }
        CHECK_THAT(quadrature(v, g), WithinAbs(2.0, 1e-9));
    }
    SECTION("Simpson rule is exact for cubics at odd node counts")
    {
        TimeGrid g(0.0, 1.0, 5);
        VectorXd v(5);
        for (int i = 0; i < 5; ++i) {
            const double t = g.node(i);
            v(i) = t * t * t - 2.0 * t * t + 0.25;
        }
        CHECK_THAT(quadrature(v, g), WithinAbs(0.25 - 2.0 / 3.0 + 0.25, 1e-15));
    }
    SECTION("even node counts fall back to the trapezoid rule")
    {
        TimeGrid g(0.0, 1.0, 2);
        VectorXd v(2);
        v << 0.0, 1.0;
        CHECK(quadrature(v, g) == 0.5);
    }
    SECTION("node count mismatch is rejected")
    {
        TimeGrid g(0.0, 1.0, 5);
        CHECK_THROWS_AS(quadrature(VectorXd::Ones(4), g), std::invalid_argument);
    }
}
