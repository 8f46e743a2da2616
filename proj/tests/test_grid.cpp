#include "doctest.h"

#include <cmath>
#include <complex>

#include "dsa/datagen.hpp"
#include "dsa/grid.hpp"

using namespace dsa::grid;

namespace {

GridModel two_bus(double load_p = 0.5, double load_q = 0.0) {
    GridModel g;
    g.buses = {{1, BusKind::Slack, 1.0, 0.0, 0.0, 0.0}, {2, BusKind::PQ, 1.0, 0.0, 0.0, 0.0}};
    g.lines = {{1, 2, 0.0, 0.1, 0.0, 1.0, true}};
    g.loads = {{2, load_p, load_q}};
    return g;
}

GridModel three_bus_ring() {
    GridModel g;
    g.buses = {{1, BusKind::Slack, 1.0, 0.0, 0.0, 0.0},
               {2, BusKind::PQ, 1.0, 0.0, 0.0, 0.0},
               {3, BusKind::PQ, 1.0, 0.0, 0.0, 0.0}};
    g.lines = {{1, 2, 0.0, 0.2, 0.0, 1.0, true},
               {2, 3, 0.0, 0.2, 0.0, 1.0, true},
               {3, 1, 0.0, 0.2, 0.0, 1.0, true}};
    return g;
}

std::string data_path(const char* name) { return std::string(DSA_DATA_DIR) + "/" + name; }

} // namespace

TEST_CASE("admittance assembly: single branch") {
    const auto g = two_bus();
    const auto y = build_admittance(g);
    const Complex expect(0.0, -10.0);
    CHECK(std::abs(y[0] - expect) < 1e-12);
    CHECK(std::abs(y[3] - expect) < 1e-12);
    CHECK(std::abs(y[1] - Complex(0.0, 10.0)) < 1e-12);
    CHECK(std::abs(y[2] - Complex(0.0, 10.0)) < 1e-12);
}

TEST_CASE("admittance assembly: out-of-service line contributes nothing") {
    auto g = two_bus();
    g.lines[0].in_service = false;
    const auto y = build_admittance(g);
    for (const auto& v : y) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("admittance assembly: equal-branch ring") {
    const auto g = three_bus_ring();
    const auto y = build_admittance(g);
    const Complex branch = 1.0 / Complex(0.0, 0.2);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(y[std::size_t(i) * 3 + std::size_t(i)] - 2.0 * branch) < 1e-12);
    CHECK(std::abs(y[1] + branch) < 1e-12);
    CHECK(std::abs(y[5] + branch) < 1e-12);
}

TEST_CASE("admittance of an empty grid is rejected") {
    GridModel g;
    CHECK_THROWS_AS(build_admittance(g), ModelRejected);
}

TEST_CASE("row sums reduce to shunt terms when charging is zero") {
    auto g = three_bus_ring();
    g.buses[1].shunt_g = 0.05;
    g.buses[1].shunt_b = -0.3;
    const auto y = build_admittance(g);
    for (std::size_t i = 0; i < 3; ++i) {
        Complex row_sum(0, 0);
        for (std::size_t k = 0; k < 3; ++k) row_sum += y[i * 3 + k];
        const Complex shunt(g.buses[i].shunt_g, g.buses[i].shunt_b);
        CHECK(std::abs(row_sum - shunt) < 1e-12);
    }
}

TEST_CASE("model validation catches structural defects") {
    auto g = two_bus();
    SUBCASE("two slack buses") {
        g.buses[1].kind = BusKind::Slack;
        CHECK_THROWS_AS(g.validate(), ModelRejected);
    }
    SUBCASE("dangling line endpoint") {
        g.lines[0].to = 99;
        CHECK_THROWS_AS(g.validate(), ModelRejected);
    }
    SUBCASE("disconnected network") {
        g.buses.push_back({3, BusKind::PQ, 1.0, 0.0, 0.0, 0.0});
        CHECK_THROWS_AS(g.validate(), ModelRejected);
    }
    SUBCASE("zero rating") {
        g.lines[0].rating_mva = 0.0;
        CHECK_THROWS_AS(g.validate(), ModelRejected);
    }
}

TEST_CASE("power flow: flat no-injection case converges in zero iterations") {
    auto g = two_bus(0.0, 0.0);
    const auto sol = solve_power_flow(g);
    CHECK(sol.converged);
    CHECK(sol.iterations == 0);
    CHECK(sol.v_mag[1] == doctest::Approx(1.0));
    CHECK(sol.v_ang[1] == doctest::Approx(0.0));
}

TEST_CASE("power flow matches the hand-solved two-bus case") {
    // P2 = 10 V2 sin(t) = -0.5 and Q2 = 10 V2 (V2 - cos(t)) = 0 give
    // V2 = cos(t), sin(2t) = -0.1
    const double theta = 0.5 * std::asin(-0.1);
    const double v2 = std::cos(theta);
    const auto sol = solve_power_flow(two_bus());
    CHECK(sol.converged);
    CHECK(sol.v_ang[1] == doctest::Approx(theta).epsilon(1e-9));
    CHECK(sol.v_mag[1] == doctest::Approx(v2).epsilon(1e-9));
}

TEST_CASE("power flow reports non-convergence past the loadability limit") {
    bool seen_nonconverged = false;
    for (double p = 0.5; p < 20.0; p *= 1.6) {
        const auto sol = solve_power_flow(two_bus(p));
        if (!sol.converged) {
            seen_nonconverged = true;
            CHECK(!sol.diagnostic.empty());
            break;
        }
    }
    CHECK(seen_nonconverged);
    // the analytic loadability limit of this branch is P = 5 pu
    CHECK(solve_power_flow(two_bus(4.5)).converged);
    CHECK_FALSE(solve_power_flow(two_bus(5.5)).converged);
}

TEST_CASE("converged power balance: generation = load + losses, losses nonnegative") {
    const auto g = load_grid(data_path("ieee9.json"));
    const auto sol = solve_power_flow(g);
    REQUIRE(sol.converged);
    // sum of net injections equals total generation minus total load, i.e.
    // the series losses; cross-check against the line-flow bookkeeping
    double net_inj = 0.0;
    for (double p : sol.p_inj) net_inj += p;
    CHECK(net_inj >= -1e-9);
    double line_losses = 0.0;
    for (std::size_t li = 0; li < g.lines.size(); ++li)
        line_losses += sol.s_from[li].real() + sol.s_to[li].real();
    CHECK(net_inj == doctest::Approx(line_losses).epsilon(1e-6));
}

TEST_CASE("power flow is deterministic") {
    const auto g = load_grid(data_path("ieee9.json"));
    const auto a = solve_power_flow(g);
    const auto b = solve_power_flow(g);
    REQUIRE(a.converged);
    CHECK(a.iterations == b.iterations);
    for (std::size_t i = 0; i < a.v_mag.size(); ++i) {
        CHECK(a.v_mag[i] == b.v_mag[i]);
        CHECK(a.v_ang[i] == b.v_ang[i]);
    }
}

TEST_CASE("overload index evaluates the loading-ratio power sum") {
    GridModel g = two_bus();
    PowerFlowSolution sol;
    sol.converged = true;
    SUBCASE("single line at ratio 0.5") {
        sol.s_from = {Complex(0.5, 0.0)};
        sol.s_to = {Complex(-0.5, 0.0)};
        CHECK(static_overload_index(g, sol) == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("two lines at ratios 1.0 and 0.5") {
        g.lines.push_back({1, 2, 0.0, 0.2, 0.0, 1.0, true});
        sol.s_from = {Complex(1.0, 0.0), Complex(0.5, 0.0)};
        sol.s_to = {Complex(-1.0, 0.0), Complex(-0.5, 0.0)};
        CHECK(static_overload_index(g, sol) == doctest::Approx(1.25).epsilon(1e-12));
    }
    SUBCASE("zero flows") {
        sol.s_from = {Complex(0.0, 0.0)};
        sol.s_to = {Complex(0.0, 0.0)};
        CHECK(static_overload_index(g, sol) == 0.0);
    }
    SUBCASE("zero rating is rejected") {
        g.lines[0].rating_mva = 0.0;
        sol.s_from = {Complex(0.5, 0.0)};
        sol.s_to = {Complex(-0.5, 0.0)};
        CHECK_THROWS_AS(static_overload_index(g, sol), ModelRejected);
    }
}

TEST_CASE("overload index is monotone in each line's loading ratio") {
    GridModel g = two_bus();
    g.lines.push_back({1, 2, 0.0, 0.2, 0.0, 1.0, true});
    PowerFlowSolution sol;
    sol.converged = true;
    double prev = -1.0;
    for (double s = 0.1; s < 2.0; s += 0.3) {
        sol.s_from = {Complex(s, 0.0), Complex(0.4, 0.0)};
        sol.s_to = {Complex(-s, 0.0), Complex(-0.4, 0.0)};
        const double fx = static_overload_index(g, sol);
        CHECK(fx > prev);
        prev = fx;
    }
}

TEST_CASE("grid JSON round trip") {
    const auto g = load_grid(data_path("ieee9.json"));
    const auto g2 = parse_grid(grid_to_json(g));
    CHECK(g2.buses.size() == g.buses.size());
    CHECK(g2.lines.size() == g.lines.size());
    CHECK(g2.generators.size() == g.generators.size());
    CHECK(g2.loads.size() == g.loads.size());
    CHECK(g2.topology_id == g.topology_id);
    CHECK(g2.lines[3].x == g.lines[3].x);
    const auto g14 = load_grid(data_path("ieee14.json"));
    CHECK(g14.buses.size() == 14);
    CHECK(solve_power_flow(g14).converged);
}
