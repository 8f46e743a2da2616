#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsa/confidence.hpp"
#include "dsa/datagen.hpp"
#include "dsa/dynsim.hpp"
#include "dsa/grid.hpp"
#include "dsa/metrics.hpp"
#include "dsa/robustness.hpp"
#include "dsa/ssmtl.hpp"
#include "dsa/toposim.hpp"

namespace dsa::pipeline {

using linalg::Matrix;

// z-score parameters fitted on the training split only
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> std_dev; // zero-variance features get 1 and a warning
    std::vector<std::string> warnings;

    void fit(const Matrix& train_x);
    std::vector<double> apply(const std::vector<double>& x) const;
    Matrix apply(const Matrix& x) const;

    std::string to_json() const;
    static Normalizer from_json(const std::string& text);
};

struct PipelineConfig {
    std::string grid_file;
    std::string contingency_file;
    std::string output_dir = "out";
    std::uint64_t master_seed = 0;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::string mode = "tds";

    std::vector<datagen::TopologyDef> derived_topologies;
    datagen::TopologyDef dissimilar_topology;

    datagen::GenConfig gen;
    std::size_t ocs_per_topology = 170;
    std::size_t boundary_samples = 500;

    ssmtl::ModelArch arch;
    ssmtl::TrainingConfig train_cfg;
    ssmtl::LossSchedule schedule = ssmtl::LossSchedule::standard();

    robustness::AttackConfig attack;
    robustness::SurrogateConfig surrogate;

    std::optional<double> toposim_threshold; // empty = calibrate
    double toposim_drop_tol = 5.0;           // F2 points

    std::size_t benchmark_ocs = 50;
    std::size_t benchmark_reps = 5;

    std::string trace_dir; // set from the CLI only; dumps nominal-OC traces

    std::uint64_t config_hash = 0;

    static PipelineConfig load(const std::string& path);
    static PipelineConfig parse(const std::string& json_text);
    std::string provenance() const; // "config_hash=... master_seed=..."
};

struct ExperimentData {
    grid::GridModel base;
    std::vector<grid::GridModel> seen; // base + derived
    grid::GridModel dissimilar;
    std::vector<dynsim::ContingencySpec> contingencies;
};

ExperimentData load_experiment(const PipelineConfig& cfg);

// Full labeled corpus across seen topologies plus the test-only dissimilar
// one, in the requested mode.
datagen::Database build_database(const PipelineConfig& cfg, const ExperimentData& exp,
                                 const std::string& mode);

// Normalized train/test views of a database. Test rows of test-only
// topologies alternate between a retrain pool (even) and an evaluation half
// (odd) so retraining comparisons stay on a fixed evaluation set.
struct SplitView {
    ssmtl::Dataset train;      // normalized; label -1 marks unlabeled rows
    ssmtl::Dataset eval;       // normalized, labeled rows only
    Normalizer normalizer;
    std::uint64_t split_hash = 0;
};

SplitView make_split(const datagen::Database& db, bool include_test_only_train);

struct TrainedArtifacts {
    ssmtl::SsMtlModel model;
    neural::Network baseline; // raw-feature classifier on [x | c]
    confidence::CovarianceModel covariance;
    Normalizer normalizer;
    ssmtl::TrainResult train_log;
    std::uint64_t split_hash = 0;
};

TrainedArtifacts train_models(const datagen::Database& db, const PipelineConfig& cfg,
                              std::uint64_t seed, bool include_test_only_train);

double baseline_probability(const neural::Network& baseline, const std::vector<double>& x_norm,
                            int contingency_index, std::size_t contingency_count);

struct EvalPair {
    metrics::MetricReport ssmtl;
    metrics::MetricReport baseline;
};

EvalPair evaluate_models(const TrainedArtifacts& art, const SplitView& split);

struct AttackOutcome {
    robustness::AttackReport ssmtl;
    robustness::AttackReport baseline;
};

// Attacks the in-distribution evaluation rows; topologies listed in
// exclude_topologies (typically the unseen one) are left out.
AttackOutcome run_attack(const TrainedArtifacts& art, const SplitView& split,
                         const PipelineConfig& cfg, std::uint64_t seed,
                         const std::vector<std::string>& exclude_topologies = {});

struct CalibrationOutcome {
    toposim::CalibrationResult calibration;
    toposim::SimilarityDecision dissimilar_gate;
    std::vector<toposim::SvSequence> known_svs; // training topologies
};

CalibrationOutcome run_calibration(const TrainedArtifacts& art, const SplitView& split,
                                   const ExperimentData& exp, const PipelineConfig& cfg);

// Consolidated reproduction run; every artifact lands under cfg.output_dir.
struct ReproduceSummary {
    double ssmtl_f2_seen_mean = 0.0;    // mean over seeds, seen topologies
    double baseline_f2_seen_mean = 0.0;
    double ssmtl_drop_mean = 0.0;       // attack F2 drop, mean over seeds
    double baseline_drop_mean = 0.0;
    double dissimilar_f2_before_mean = 0.0;
    double dissimilar_f2_after_mean = 0.0;
    bool dissimilar_has_max_rmse = false;
    bool dissimilar_has_min_f2 = false;
    double benchmark_speedup = 0.0;
    double boundary_near_fraction = 0.0; // recorded by the acceptance harness
    double tds_near_fraction = 0.0;
};

ReproduceSummary cmd_reproduce(const PipelineConfig& cfg);

int cmd_generate(const PipelineConfig& cfg, const std::string& mode);
int cmd_train(const PipelineConfig& cfg);
int cmd_assess(const PipelineConfig& cfg, const std::string& artifact_dir,
               const std::string& oc_file, std::optional<int> contingency_override,
               const std::string& gate_grid_file, const std::string& out_file);
int cmd_attack(const PipelineConfig& cfg);
int cmd_calibrate(const PipelineConfig& cfg);
int cmd_benchmark(const PipelineConfig& cfg);

} // namespace dsa::pipeline
