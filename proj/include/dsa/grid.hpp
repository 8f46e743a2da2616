#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsa::grid {

using Complex = std::complex<double>;

// Raised when a network model violates its structural invariants (missing
// slack, dangling line endpoints, disconnected graph, empty model).
struct ModelRejected : std::runtime_error {
    explicit ModelRejected(const std::string& what) : std::runtime_error(what) {}
};

enum class BusKind { Slack, PV, PQ };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double v_mag = 1.0;   // pu; setpoint for slack/PV, initial guess for PQ
    double v_ang = 0.0;   // rad
    double shunt_g = 0.0; // pu
    double shunt_b = 0.0; // pu
};

struct Line {
    int from = 0;
    int to = 0;
    double r = 0.0;          // pu
    double x = 0.0;          // pu, nonzero
    double b_charging = 0.0; // pu, total line charging
    double rating_mva = 0.0; // per-unit apparent power limit on the system base
    bool in_service = true;
};

struct Generator {
    int bus = 0;
    double p_set = 0.0;
    double q_set = 0.0;
    double inertia_h = 0.0;  // s
    double damping_d = 0.0;  // pu torque per pu speed
    double xd_prime = 0.0;   // pu
    double p_max = 0.0;
    double q_min = 0.0;
    double q_max = 0.0;
};

struct Load {
    int bus = 0;
    double p = 0.0;
    double q = 0.0;
};

struct GridModel {
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<Generator> generators;
    std::vector<Load> loads;
    double base_mva = 100.0;
    std::string topology_id = "base";

    // Throws ModelRejected on invariant violation.
    void validate() const;

    int bus_index(int bus_id) const; // -1 when absent
    int slack_index() const;         // validated models have exactly one

    bool connected_in_service() const;
};

GridModel load_grid(const std::string& path);
GridModel parse_grid(const std::string& json_text);
std::string grid_to_json(const GridModel& g);

// Dense complex bus admittance matrix in bus-array order, row-major n*n.
// Out-of-service lines contribute nothing. Throws ModelRejected on an empty
// model.
std::vector<Complex> build_admittance(const GridModel& g);

struct PowerFlowSolution {
    std::vector<double> v_mag;
    std::vector<double> v_ang;
    std::vector<double> p_inj; // net injection per bus, pu
    std::vector<double> q_inj;
    // apparent power at both ends of each line, sending/receiving convention;
    // zero for out-of-service lines
    std::vector<Complex> s_from;
    std::vector<Complex> s_to;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;
    std::string diagnostic;
};

struct PowerFlowOptions {
    double tolerance = 1e-8;
    int max_iter = 30;
    // optional warm start (v_mag/v_ang per bus); flat start otherwise
    const PowerFlowSolution* warm_start = nullptr;
};

// Full Newton-Raphson in polar coordinates. Non-convergence is reported via
// the converged flag, not an exception.
PowerFlowSolution solve_power_flow(const GridModel& g, const PowerFlowOptions& opt = {});

// Overload performance index: sum_i w_i * (S_mean_i / S_max_i)^p over
// in-service lines, where S_mean_i is the mean of the two end apparent flows.
// Throws ModelRejected when a line rating is zero.
double static_overload_index(const GridModel& g, const PowerFlowSolution& sol,
                             const std::vector<double>& weights, int exponent);
double static_overload_index(const GridModel& g, const PowerFlowSolution& sol);

// Largest S_mean_i / S_max_i over in-service lines; the static security
// criterion trips when this exceeds 1.
double max_loading_ratio(const GridModel& g, const PowerFlowSolution& sol);

} // namespace dsa::grid
