#pragma once

#include <string>
#include <vector>

#include "dsa/grid.hpp"

namespace dsa::dynsim {

struct ContingencySpec {
    std::string id;
    int faulted_bus = 0;
    double t_fault = 0.1;  // s
    double t_clear = 0.2;  // s, > t_fault
    int tripped_line = 0;  // index into GridModel::lines
    int contingency_index = 0;

    void validate(const grid::GridModel& g) const;
};

std::vector<ContingencySpec> load_contingencies(const std::string& path, const grid::GridModel& g);
std::string contingencies_to_json(const std::vector<ContingencySpec>& list);

struct Mode {
    double frequency_hz = 0.0;
    double damping_ratio = 0.0;
};

struct SimulationResult {
    std::vector<double> time_grid;                  // s
    std::vector<std::vector<double>> rotor_angles;  // [machine][step], degrees
    std::vector<std::vector<double>> rotor_speeds;  // [machine][step], rad/s deviation
    std::vector<std::vector<double>> bus_voltages;  // [bus][step], pu
    double delta_max = 0.0;                         // max pairwise rotor separation, degrees
    double tsi = 100.0;                             // percent
    std::vector<Mode> modal_damping;                // filled by label()
    bool voltage_violation = false;
    bool converged = true;
};

struct SimulationOptions {
    double horizon = 5.0; // s
    double step = 0.01;   // s, fixed RK4 step
    double fault_admittance = 1e4;
    double blowup_deg = 1e4;
};

struct StaticConfig {
    double loading_limit = 1.0; // per-line ratio above which static security fails
    double fx_cutoff = -1.0;    // overload-index cutoff; negative disables
    int exponent = 2;
    std::vector<double> weights; // empty = all ones
};

struct SecurityLabel {
    bool transient_ok = true;
    bool small_signal_ok = true;
    bool voltage_ok = true;
    bool static_ok = true;
    bool secure = true;
    std::vector<std::string> reasons;
    double tsi = 100.0;
    double overload_index = 0.0;
};

// Classical-machine time-domain simulation of a bus fault cleared by a line
// trip. The fault is a large shunt admittance at the faulted bus during
// [t_fault, t_clear); at clearing the tripped line is switched out.
SimulationResult simulate(const grid::GridModel& g, const grid::PowerFlowSolution& initial,
                          const ContingencySpec& c, const SimulationOptions& opt = {});

// Eq-style stability index: (360 - d) / (360 + d) * 100.
double transient_index(double delta_max_deg);

// Oscillatory modes of the swing dynamics linearized at the given operating
// point (machines initialized from the supplied converged power flow).
std::vector<Mode> small_signal_damping(const grid::GridModel& g,
                                       const grid::PowerFlowSolution& equilibrium);

// True when no bus stays outside [0.8, 1.1] pu for a contiguous interval
// longer than 0.5 s.
bool voltage_criterion(const SimulationResult& r);

// Conjunction of transient, small-signal, voltage and static criteria.
SecurityLabel label(const grid::GridModel& g, const grid::PowerFlowSolution& initial,
                    const ContingencySpec& c, const StaticConfig& static_cfg = {},
                    const SimulationOptions& opt = {});

// trace dump: time, rotor angles (deg), bus voltages (pu)
void write_trace_csv(const SimulationResult& r, const std::string& path);

constexpr double kTsiSecureThreshold = 10.0;
constexpr double kDampingFloor = 0.03;
constexpr double kModeBandLoHz = 0.25;
constexpr double kModeBandHiHz = 1.0;
constexpr double kVoltageLo = 0.8;
constexpr double kVoltageHi = 1.1;
constexpr double kVoltageDwell = 0.5; // s

} // namespace dsa::dynsim
