#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsa/dynsim.hpp"
#include "dsa/grid.hpp"

namespace dsa::datagen {

struct GenerationExhausted : std::runtime_error {
    explicit GenerationExhausted(const std::string& what) : std::runtime_error(what) {}
};

// Canonical feature order is [gen P | gen Q | load P | load Q | line P |
// line Q | bus V | bus angle]. Line columns cover every line of the model,
// in service or not, so m stays constant across switched topologies.
struct FeatureLayout {
    std::size_t generators = 0;
    std::size_t loads = 0;
    std::size_t lines = 0;
    std::size_t buses = 0;

    std::size_t m() const { return 2 * (generators + loads + lines) + 2 * buses; }
    static FeatureLayout of(const grid::GridModel& g);
    bool operator==(const FeatureLayout&) const = default;
};

std::vector<double> extract_features(const grid::GridModel& g, const grid::PowerFlowSolution& sol);

struct OperatingCondition {
    std::vector<double> features;
    std::string topology_id;
};

struct LabeledSample {
    OperatingCondition oc;
    int contingency_index = 0;
    int label = 0;        // 1 = secure, valid only when labeled
    bool labeled = true;
    std::string split = "train"; // train | test
};

struct TopologyDef {
    std::string id;
    std::vector<int> removed_lines; // indices into the base grid's line array
};

struct Database {
    std::vector<LabeledSample> samples;
    std::vector<std::string> contingency_vocab;
    FeatureLayout layout;
    std::vector<TopologyDef> topologies;
    std::vector<std::string> test_only_topologies;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::string generator = "tds";
    bool boundary_fallback = false;

    std::vector<std::string> topology_ids() const;
};

struct SamplingConfig {
    double sigma = 0.15;            // load std dev, fraction of nominal
    double correlation = 0.0;       // adjacent-bus load correlation
    double clamp = 0.5;             // per-load bound, fraction of nominal
    double pf_min = 0.95;           // power factor window [pf_min, 1]
    double unlabeled_fraction = 0.2; // OCs stored without labels (TDS mode)
    double test_fraction = 0.25;
};

struct GenConfig {
    SamplingConfig sampling;
    dynsim::SimulationOptions sim;
    dynsim::StaticConfig static_cfg;
    double bisection_tol = 0.02;
    // topologies reserved for testing: every row lands in the test split and
    // none are stored unlabeled
    std::vector<std::string> test_only_topologies;
};

// Load-rescaled grid variants with converged power flows. Throws
// GenerationExhausted when 50*count attempts cannot produce count feasible
// draws.
std::vector<std::pair<grid::GridModel, grid::PowerFlowSolution>>
sample_operating_conditions(const grid::GridModel& g, std::size_t count, std::uint64_t seed,
                            const SamplingConfig& cfg = {});

// One labeled sample per (operating condition, contingency). ocs_per_topology
// counts operating conditions; the sample count is that times the vocabulary
// size.
Database generate_tds_database(const std::vector<grid::GridModel>& topologies,
                               const std::vector<dynsim::ContingencySpec>& contingencies,
                               std::size_t ocs_per_topology, std::uint64_t seed,
                               const GenConfig& cfg = {});
Database generate_tds_database(const grid::GridModel& g,
                               const std::vector<dynsim::ContingencySpec>& contingencies,
                               std::size_t ocs, std::uint64_t seed, const GenConfig& cfg = {});

// Boundary-focused generation: load-scaling rays are screened for power-flow
// feasibility and generation limits, then the secure/insecure crossing is
// bisected to bisection_tol; every simulated probe is emitted. Falls back to
// TDS sampling (with the fallback flag set) when no insecure anchor exists in
// the scaling box.
Database generate_boundary_database(const std::vector<grid::GridModel>& topologies,
                                    const std::vector<dynsim::ContingencySpec>& contingencies,
                                    std::size_t samples_per_topology, std::uint64_t seed,
                                    const GenConfig& cfg = {});
Database generate_boundary_database(const grid::GridModel& g,
                                    const std::vector<dynsim::ContingencySpec>& contingencies,
                                    std::size_t samples, std::uint64_t seed,
                                    const GenConfig& cfg = {});

// New model with the listed lines switched out and a fresh topology id.
// Throws grid::ModelRejected when the removal disconnects the network.
grid::GridModel apply_topology_change(const grid::GridModel& g, const std::vector<int>& removed_lines,
                                      const std::string& new_id = "");

// Scaling-factor bisection between a secure and an insecure probe. The probe
// returns 1 (secure), 0 (insecure) or nullopt (infeasible, treated as the
// insecure side but never emitted). probes records every feasible evaluation
// in order.
struct BisectionResult {
    double secure_end = 0.0;
    double insecure_end = 0.0;
    bool bracketed = false;
    std::vector<std::pair<double, int>> probes;
};

BisectionResult bisect_scaling(const std::function<std::optional<int>(double)>& probe, double lo,
                               double hi, double tol);

// Scales every load of `g` to `scale` times the pattern grid's loads and
// redispatches generation proportionally; used by the boundary generator and
// by tests probing along load rays.
grid::GridModel scale_loads(const grid::GridModel& base, const std::vector<double>& load_p_pattern,
                            double scale, const SamplingConfig& cfg);

// JSON Lines persistence plus a companion metadata document.
void write_database(const Database& db, const std::string& jsonl_path,
                    const std::string& meta_path);
Database read_database(const std::string& jsonl_path, const std::string& meta_path);
void write_database_csv(const Database& db, const std::string& csv_path);

} // namespace dsa::datagen
