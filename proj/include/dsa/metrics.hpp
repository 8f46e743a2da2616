#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dsa/dynsim.hpp"
#include "dsa/grid.hpp"

namespace dsa::metrics {

// "Positive" is the alarm class: insecure, label 0.
struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    void add(int predicted_label, int true_label); // labels are 1 = secure
    std::size_t total() const { return tp + fp + tn + fn; }
    ConfusionMatrix& operator+=(const ConfusionMatrix& o);
};

double precision(const ConfusionMatrix& cm);
double recall(const ConfusionMatrix& cm);

// (1 + b^2) * phi * rho / (b^2 * phi + rho); 0 when both are 0.
double f_beta(double phi, double rho, double beta);
double f_beta(const ConfusionMatrix& cm, double beta = 2.0);

struct TopologyMetrics {
    std::string topology_id;
    ConfusionMatrix cm;
    double f2 = 0.0;
};

struct MetricReport {
    ConfusionMatrix global;
    double precision = 0.0;
    double recall = 0.0;
    double f_beta = 0.0;
    double beta = 2.0;
    std::vector<TopologyMetrics> per_topology; // sorted by topology id
    double f2_min = 0.0;
    double f2_mean = 0.0;
    double f2_variance = 0.0;
};

MetricReport evaluate(const std::vector<int>& predictions, const std::vector<int>& labels,
                      const std::vector<std::string>& topology_ids, double beta = 2.0);

struct BenchmarkRow {
    std::string system;
    double tds_ms = 0.0;    // median wall time of one time-domain labeling run
    double model_ms = 0.0;  // median per-OC inference time over all contingencies
    double speedup = 0.0;
    std::size_t contingencies = 0;
    std::size_t n_ocs = 0;
};

// Median wall times over `reps` repetitions with one unmeasured warm-up each.
// The TDS column is per contingency; the model column covers the whole
// vocabulary per operating condition.
BenchmarkRow benchmark_speed(const grid::GridModel& g, const grid::PowerFlowSolution& initial,
                             const std::vector<dynsim::ContingencySpec>& contingencies,
                             const std::function<void(const std::vector<double>&, int)>& infer,
                             const std::vector<std::vector<double>>& ocs, std::size_t reps = 5);

void write_report_csv(const MetricReport& report, const std::string& path,
                      const std::string& header_comment);
std::string report_summary(const MetricReport& report);

} // namespace dsa::metrics
