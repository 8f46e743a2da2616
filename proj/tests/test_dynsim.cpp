#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dsa/datagen.hpp"
#include "dsa/dynsim.hpp"
#include "dsa/grid.hpp"

using namespace dsa;
using dynsim::ContingencySpec;
using grid::BusKind;
using grid::GridModel;

namespace {

std::string data_path(const char* name) { return std::string(DSA_DATA_DIR) + "/" + name; }

// two identical machines joined by parallel reactive tie lines, zero load
GridModel two_machine(double h, double d, double xd_prime, double x_line, int circuits = 2) {
    GridModel g;
    g.buses = {{1, BusKind::Slack, 1.0, 0.0, 0.0, 0.0}, {2, BusKind::PV, 1.0, 0.0, 0.0, 0.0}};
    for (int i = 0; i < circuits; ++i) g.lines.push_back({1, 2, 0.0, x_line, 0.0, 5.0, true});
    g.generators = {{1, 0.0, 0.0, h, d, xd_prime, 1.0, -1.0, 1.0},
                    {2, 0.0, 0.0, h, d, xd_prime, 1.0, -1.0, 1.0}};
    return g;
}

ContingencySpec pulse_contingency(double t_fault, double t_clear, int tripped_line,
                                  int faulted_bus) {
    ContingencySpec c;
    c.id = "test";
    c.faulted_bus = faulted_bus;
    c.t_fault = t_fault;
    c.t_clear = t_clear;
    c.tripped_line = tripped_line;
    c.contingency_index = 0;
    return c;
}

} // namespace

TEST_CASE("transient index formula") {
    CHECK(dynsim::transient_index(0.0) == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(dynsim::transient_index(360.0) == doctest::Approx(0.0).epsilon(1e-12));
    // boundary: TSI = 10 at delta = 324/1.1
    CHECK(dynsim::transient_index(324.0 / 1.1) == doctest::Approx(10.0).epsilon(1e-9));
    // strictly decreasing, bounded by (-100, 100]
    double prev = 101.0;
    for (double d = 0.0; d < 5000.0; d += 37.0) {
        const double t = dynsim::transient_index(d);
        CHECK(t < prev);
        CHECK(t > -100.0);
        CHECK(t <= 100.0);
        prev = t;
    }
}

TEST_CASE("no fault from equilibrium keeps the rotor spread constant") {
    const auto g = grid::load_grid(data_path("ieee9.json"));
    const auto sol = grid::solve_power_flow(g);
    REQUIRE(sol.converged);
    const auto c = pulse_contingency(1e9, 2e9, 5, 7);
    const auto sim = dynsim::simulate(g, sol, c);
    REQUIRE(sim.converged);
    double spread_min = 1e18, spread_max = -1e18;
    for (std::size_t k = 0; k < sim.time_grid.size(); ++k) {
        double lo = 1e18, hi = -1e18;
        for (const auto& traj : sim.rotor_angles) {
            lo = std::min(lo, traj[k]);
            hi = std::max(hi, traj[k]);
        }
        spread_min = std::min(spread_min, hi - lo);
        spread_max = std::max(spread_max, hi - lo);
    }
    CHECK(spread_max - spread_min < 0.1);
}

TEST_CASE("never-cleared fault loses synchronism, fast clearing holds it") {
    const auto g = grid::load_grid(data_path("ieee9.json"));
    const auto sol = grid::solve_power_flow(g);
    REQUIRE(sol.converged);
    dynsim::SimulationOptions opt;
    const auto never = pulse_contingency(0.1, opt.horizon, 5, 7);
    const auto bad = dynsim::simulate(g, sol, never, opt);
    CHECK(bad.delta_max > 294.55);
    CHECK(bad.tsi < 10.0);

    const auto fast = pulse_contingency(0.1, 0.15, 5, 7);
    const auto good = dynsim::simulate(g, sol, fast, opt);
    CHECK(good.converged);
    CHECK(good.tsi >= 10.0);
}

TEST_CASE("voltage criterion: dwell time outside the band") {
    dynsim::SimulationResult r;
    const std::size_t steps = 200;
    r.time_grid.resize(steps);
    for (std::size_t k = 0; k < steps; ++k) r.time_grid[k] = 0.01 * double(k);
    SUBCASE("all in range") {
        r.bus_voltages = {std::vector<double>(steps, 1.0)};
        CHECK(dynsim::voltage_criterion(r));
    }
    SUBCASE("0.75 pu for 0.6 s fails") {
        std::vector<double> v(steps, 1.0);
        for (std::size_t k = 10; k <= 70; ++k) v[k] = 0.75; // 0.6 s span
        r.bus_voltages = {v};
        CHECK_FALSE(dynsim::voltage_criterion(r));
    }
    SUBCASE("0.75 pu for 0.4 s then recovery passes") {
        std::vector<double> v(steps, 1.0);
        for (std::size_t k = 10; k <= 50; ++k) v[k] = 0.75; // 0.4 s span
        r.bus_voltages = {v};
        CHECK(dynsim::voltage_criterion(r));
    }
    SUBCASE("high side counts too") {
        std::vector<double> v(steps, 1.0);
        for (std::size_t k = 10; k <= 80; ++k) v[k] = 1.15;
        r.bus_voltages = {v};
        CHECK_FALSE(dynsim::voltage_criterion(r));
    }
}

TEST_CASE("two-machine mode matches the closed-form eigenpair") {
    // M ddot(dr) = -2K dr - Dt dot(dr) with K = E^2/X_total, M = 2H/ws,
    // Dt = D/ws; lambda = -a/2 +- j sqrt(b - a^2/4), a = D/2H, b = 2K/M
    const double h = 19.5, d = 17.0, xd = 0.25, xl = 1.0;
    const auto g = two_machine(h, d, xd, 2.0 * xl, 2); // two circuits of 2*xl in parallel = xl
    const auto sol = grid::solve_power_flow(g);
    REQUIRE(sol.converged);
    const auto modes = dynsim::small_signal_damping(g, sol);
    REQUIRE(modes.size() == 1);

    const double ws = 2.0 * std::numbers::pi * 60.0;
    const double x_total = xd + xl + xd;
    const double k = 1.0 / x_total; // E = V = 1 for the unloaded system
    const double m = 2.0 * h / ws;
    const double a = (d / ws) / m;
    const double b = 2.0 * k / m;
    const double freq = std::sqrt(b - a * a / 4.0) / (2.0 * std::numbers::pi);
    const double zeta = (a / 2.0) / std::sqrt(b);
    CHECK(modes[0].frequency_hz == doctest::Approx(freq).epsilon(1e-8));
    CHECK(modes[0].damping_ratio == doctest::Approx(zeta).epsilon(1e-8));
    CHECK(modes[0].frequency_hz > 0.25);
    CHECK(modes[0].frequency_hz < 1.0);
}

TEST_CASE("single machine with pure damping has no oscillatory mode") {
    GridModel g;
    g.buses = {{1, BusKind::Slack, 1.0, 0.0, 0.0, 0.0}};
    g.generators = {{1, 0.0, 0.0, 5.0, 10.0, 0.2, 1.0, -1.0, 1.0}};
    const auto sol = grid::solve_power_flow(g);
    REQUIRE(sol.converged);
    CHECK(dynsim::small_signal_damping(g, sol).empty());
}

TEST_CASE("undamped two-machine system reports zero damping ratio") {
    const auto g = two_machine(19.5, 0.0, 0.25, 2.0, 2);
    const auto sol = grid::solve_power_flow(g);
    const auto modes = dynsim::small_signal_damping(g, sol);
    REQUIRE(modes.size() == 1);
    CHECK(std::abs(modes[0].damping_ratio) < 1e-10);
}

TEST_CASE("energy drift of the undamped lossless system stays under 1%") {
    // a brief fault kicks the machines; after clearing the lossless network
    // conserves kinetic + potential energy
    const double h = 19.5, xd = 0.25, xl = 1.0;
    const auto g = two_machine(h, 0.0, xd, 2.0 * xl, 2);
    const auto sol = grid::solve_power_flow(g);
    REQUIRE(sol.converged);
    auto c = pulse_contingency(0.1, 0.2, 1, 1); // trip one circuit at clearing
    dynsim::SimulationOptions opt;
    opt.horizon = 5.0;
    opt.step = 0.01;
    const auto sim = dynsim::simulate(g, sol, c, opt);
    REQUIRE(sim.converged);

    const double ws = 2.0 * std::numbers::pi * 60.0;
    const double m = 2.0 * h / ws;
    const double b12 = 1.0 / (xd + 2.0 * xl + xd); // post-fault: one circuit left
    const double deg = std::numbers::pi / 180.0;
    std::vector<double> energy;
    for (std::size_t k = 0; k < sim.time_grid.size(); ++k) {
        if (sim.time_grid[k] < c.t_clear + 1e-9) continue;
        const double w1 = sim.rotor_speeds[0][k], w2 = sim.rotor_speeds[1][k];
        const double d12 = (sim.rotor_angles[0][k] - sim.rotor_angles[1][k]) * deg;
        const double e = 0.5 * m * (w1 * w1 + w2 * w2) + b12 * (1.0 - std::cos(d12));
        energy.push_back(e);
    }
    REQUIRE(energy.size() > 100);
    const auto [lo, hi] = std::minmax_element(energy.begin(), energy.end());
    CHECK(*hi > 1e-8); // the fault actually injected energy
    CHECK((*hi - *lo) / *hi < 0.01);
}

TEST_CASE("halving the step changes delta_max by less than half a degree") {
    const auto g = grid::load_grid(data_path("ieee9.json"));
    const auto sol = grid::solve_power_flow(g);
    const auto conts = dynsim::load_contingencies(data_path("contingencies9.json"), g);
    dynsim::SimulationOptions coarse, fine;
    coarse.step = 0.01;
    fine.step = 0.005;
    const auto a = dynsim::simulate(g, sol, conts[0], coarse);
    const auto b = dynsim::simulate(g, sol, conts[0], fine);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    CHECK(std::abs(a.delta_max - b.delta_max) < 0.5);
}

TEST_CASE("label is a pure conjunction of the four criteria") {
    const auto g = grid::load_grid(data_path("ieee9.json"));
    const auto conts = dynsim::load_contingencies(data_path("contingencies9.json"), g);

    // lightly loaded base case under the mildest contingency is secure
    std::vector<double> pattern;
    for (const auto& l : g.loads) pattern.push_back(l.p);
    const auto light = datagen::scale_loads(g, pattern, 0.8, {});
    const auto light_sol = grid::solve_power_flow(light);
    REQUIRE(light_sol.converged);
    const auto lab = dynsim::label(light, light_sol, conts[0]);
    CHECK(lab.secure);
    CHECK(lab.reasons.empty());
    CHECK(lab.secure == (lab.transient_ok && lab.small_signal_ok && lab.voltage_ok && lab.static_ok));

    // heavily loaded case is insecure with recorded reasons
    const auto heavy = datagen::scale_loads(g, pattern, 1.45, {});
    const auto heavy_sol = grid::solve_power_flow(heavy);
    REQUIRE(heavy_sol.converged);
    const auto bad = dynsim::label(heavy, heavy_sol, conts[0]);
    CHECK_FALSE(bad.secure);
    CHECK_FALSE(bad.reasons.empty());
    CHECK(bad.secure == (bad.transient_ok && bad.small_signal_ok && bad.voltage_ok && bad.static_ok));

    // deterministic: identical runs give identical outcomes
    const auto again = dynsim::label(heavy, heavy_sol, conts[0]);
    CHECK(again.secure == bad.secure);
    CHECK(again.tsi == bad.tsi);
    CHECK(again.overload_index == bad.overload_index);
    CHECK(again.reasons == bad.reasons);
}

TEST_CASE("contingency validation") {
    const auto g = grid::load_grid(data_path("ieee9.json"));
    SUBCASE("clearing must follow the fault") {
        auto c = pulse_contingency(0.2, 0.1, 5, 7);
        CHECK_THROWS_AS(c.validate(g), std::invalid_argument);
    }
    SUBCASE("tripped line must be electrically near the faulted bus") {
        auto c = pulse_contingency(0.1, 0.2, 3, 8); // line 4-5 is two hops from bus 8
        CHECK_THROWS_AS(c.validate(g), std::invalid_argument);
    }
    SUBCASE("tripping a bridge is rejected") {
        auto c = pulse_contingency(0.1, 0.2, 0, 4); // transformer 1-4 islands the slack
        CHECK_THROWS_AS(c.validate(g), std::invalid_argument);
    }
    SUBCASE("bundled contingencies validate") {
        CHECK_NOTHROW(dynsim::load_contingencies(data_path("contingencies9.json"), g));
    }
}
