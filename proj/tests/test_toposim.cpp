#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "dsa/datagen.hpp"
#include "dsa/rng.hpp"
#include "dsa/toposim.hpp"

using namespace dsa;
using toposim::SvSequence;

namespace {

std::string data_path(const char* name) { return std::string(DSA_DATA_DIR) + "/" + name; }

// cyclic Jacobi eigensolver on M^T M; an SVD oracle independent of the
// implementation path used by compute_svs
std::vector<double> jacobi_singular_values(std::size_t n, const std::vector<double>& m) {
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += m[k * n + i] * m[k * n + j];
            a[i * n + j] = s;
        }
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-30) continue;
                const double theta = 0.5 * (a[q * n + q] - a[p * n + p]) / apq;
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> sv(n);
    for (std::size_t i = 0; i < n; ++i) sv[i] = std::sqrt(std::max(0.0, a[i * n + i]));
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

SvSequence seq(std::vector<double> v, const std::string& id = "t") {
    SvSequence s;
    s.values = std::move(v);
    s.topology_id = id;
    return s;
}

} // namespace

TEST_CASE("singular values of simple matrices") {
    SUBCASE("zero matrix") {
        const auto sv = toposim::svs_of_matrix(3, std::vector<double>(9, 0.0));
        for (double v : sv) CHECK(v == 0.0);
    }
    SUBCASE("diagonal matrix") {
        const auto sv = toposim::svs_of_matrix(2, {3.0, 0.0, 0.0, 1.0});
        CHECK(sv[0] == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(sv[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("all lines out produces the zero spectrum") {
        grid::GridModel g;
        g.buses = {{1, grid::BusKind::Slack, 1.0, 0.0, 0.0, 0.0},
                   {2, grid::BusKind::PQ, 1.0, 0.0, 0.0, 0.0}};
        g.lines = {{1, 2, 0.0, 0.1, 0.0, 1.0, false}};
        const auto svs = toposim::compute_svs(g);
        for (double v : svs.values) CHECK(v == 0.0);
    }
}

TEST_CASE("compute_svs matches an independent Jacobi oracle on the bundled grid") {
    const auto g = grid::load_grid(data_path("ieee9.json"));
    const auto y = grid::build_admittance(g);
    const std::size_t n = g.buses.size();
    std::vector<double> mag(n * n);
    for (std::size_t i = 0; i < n * n; ++i) mag[i] = std::abs(y[i]);
    const auto oracle = jacobi_singular_values(n, mag);
    const auto svs = toposim::compute_svs(g);
    REQUIRE(svs.values.size() == oracle.size());
    for (std::size_t i = 0; i < n; ++i)
        CHECK(svs.values[i] == doctest::Approx(oracle[i]).epsilon(1e-8));
    // descending order
    for (std::size_t i = 1; i < n; ++i) CHECK(svs.values[i] <= svs.values[i - 1]);
}

TEST_CASE("spectrum is invariant under bus reordering") {
    const auto g = grid::load_grid(data_path("ieee9.json"));
    auto permuted = g;
    Rng rng(3);
    for (std::size_t i = permuted.buses.size(); i > 1; --i)
        std::swap(permuted.buses[i - 1], permuted.buses[rng.below(i)]);
    const auto a = toposim::compute_svs(g);
    const auto b = toposim::compute_svs(permuted);
    for (std::size_t i = 0; i < a.values.size(); ++i)
        CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-10));
}

TEST_CASE("svs rmse formula") {
    CHECK(toposim::svs_rmse(seq({3, 1}), seq({3, 1})) == 0.0);
    CHECK(toposim::svs_rmse(seq({3, 1}), seq({1, 1})) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(toposim::svs_rmse(seq({3, 1}), seq({1, 1})) ==
          toposim::svs_rmse(seq({1, 1}), seq({3, 1})));
    bool padded = false;
    CHECK(toposim::svs_rmse(seq({3.0}), seq({3.0, 4.0}), &padded) ==
          doctest::Approx(std::sqrt(8.0)).epsilon(1e-12));
    CHECK(padded);
}

TEST_CASE("svs rmse is a pseudometric") {
    Rng rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        auto rand_seq = [&](std::size_t n) {
            std::vector<double> v(n);
            for (auto& x : v) x = rng.uniform(0.0, 10.0);
            std::sort(v.begin(), v.end(), std::greater<double>());
            return seq(std::move(v));
        };
        const auto a = rand_seq(6), b = rand_seq(6), c = rand_seq(6);
        const double ab = toposim::svs_rmse(a, b);
        const double bc = toposim::svs_rmse(b, c);
        const double ac = toposim::svs_rmse(a, c);
        CHECK(ab >= 0.0);
        CHECK(ab == doctest::Approx(toposim::svs_rmse(b, a)).epsilon(1e-12));
        CHECK(ac <= ab + bc + 1e-12);
        CHECK(toposim::svs_rmse(a, a) == 0.0);
    }
}

TEST_CASE("gate decision: identical topology never retrains, threshold is monotone") {
    const auto g = grid::load_grid(data_path("ieee9.json"));
    const auto base = toposim::compute_svs(g);
    const std::vector<SvSequence> known{base, base, base};
    const auto d = toposim::gate_new_topology(base, known, 0.5);
    CHECK(d.mean_rmse == 0.0);
    CHECK_FALSE(d.retrain);

    const auto tx = datagen::apply_topology_change(g, {8, 9, 10}, "tx3");
    bool prev = true;
    for (double h : {0.1, 1.0, 5.0, 20.0, 100.0}) {
        const auto dec = toposim::gate_new_topology(tx, known, h);
        // raising h never flips retrain from false to true
        if (!prev) CHECK_FALSE(dec.retrain);
        prev = dec.retrain;
    }
    CHECK_THROWS_AS(toposim::gate_new_topology(base, {}, 1.0), std::invalid_argument);
}

TEST_CASE("one line removed sits below three lines removed in the gate metric") {
    const auto g = grid::load_grid(data_path("ieee9.json"));
    std::vector<SvSequence> known{toposim::compute_svs(g)};
    for (int li : {10, 9, 6})
        known.push_back(
            toposim::compute_svs(datagen::apply_topology_change(g, {li}, "t" + std::to_string(li))));
    const auto one = toposim::gate_new_topology(
        datagen::apply_topology_change(g, {6}, "one"), known, 1e9);
    const auto three = toposim::gate_new_topology(
        datagen::apply_topology_change(g, {8, 9, 10}, "three"), known, 1e9);
    CHECK(one.mean_rmse < three.mean_rmse);
}

TEST_CASE("threshold calibration") {
    using toposim::CalibrationEntry;
    SUBCASE("uniform F2 never retrains") {
        std::vector<CalibrationEntry> entries = {
            {"a", 1.0, 0.9, true}, {"b", 2.0, 0.9, true}, {"c", 3.0, 0.9, false}};
        const auto res = toposim::calibrate_threshold(entries, 5.0);
        CHECK(std::isinf(res.threshold));
    }
    SUBCASE("planted violator fixes the threshold between clusters") {
        std::vector<CalibrationEntry> entries = {{"a", 1.0, 0.92, true},
                                                 {"b", 1.5, 0.90, true},
                                                 {"c", 2.0, 0.91, true},
                                                 {"x", 6.0, 0.70, false}};
        const auto res = toposim::calibrate_threshold(entries, 5.0);
        // violator at rmse 6, largest conforming at 2: midpoint 4
        CHECK(res.threshold == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(res.table.back().topology_id == "x");
        for (std::size_t i = 1; i < res.table.size(); ++i)
            CHECK(res.table[i].mean_rmse >= res.table[i - 1].mean_rmse);
    }
    SUBCASE("requires at least three topologies") {
        std::vector<CalibrationEntry> entries = {{"a", 1.0, 0.9, true}, {"b", 2.0, 0.8, false}};
        CHECK_THROWS_AS(toposim::calibrate_threshold(entries, 5.0), std::invalid_argument);
    }
    SUBCASE("deterministic output ordering") {
        std::vector<CalibrationEntry> entries = {{"b", 2.0, 0.9, true},
                                                 {"a", 1.0, 0.91, true},
                                                 {"x", 5.0, 0.6, false},
                                                 {"c", 2.0, 0.89, true}};
        const auto r1 = toposim::calibrate_threshold(entries, 5.0);
        const auto r2 = toposim::calibrate_threshold(entries, 5.0);
        REQUIRE(r1.table.size() == r2.table.size());
        for (std::size_t i = 0; i < r1.table.size(); ++i)
            CHECK(r1.table[i].topology_id == r2.table[i].topology_id);
        CHECK(r1.table[0].topology_id == "a"); // ties broken by id
    }
}
