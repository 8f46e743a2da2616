#pragma once

#include <limits>
#include <string>
#include <vector>

#include "dsa/grid.hpp"

namespace dsa::toposim {

struct SvSequence {
    std::vector<double> values; // descending, nonnegative
    std::string topology_id;
};

// Singular values of the elementwise-magnitude bus admittance matrix.
SvSequence compute_svs(const grid::GridModel& g);
std::vector<double> svs_of_matrix(std::size_t n, const std::vector<double>& row_major);

// Root-mean-square difference of two sequences. Unequal lengths are
// zero-padded; `padded`, when supplied, reports that this happened.
double svs_rmse(const SvSequence& a, const SvSequence& b, bool* padded = nullptr);

struct SimilarityDecision {
    double mean_rmse = 0.0;
    double threshold = 0.0;
    bool retrain = false; // mean_rmse > threshold
};

// Average RMSE of the new topology against every known sequence; retrain is
// recommended when the mean exceeds the threshold. Throws on an empty known
// set.
SimilarityDecision gate_new_topology(const SvSequence& candidate,
                                     const std::vector<SvSequence>& known, double threshold);
SimilarityDecision gate_new_topology(const grid::GridModel& new_grid,
                                     const std::vector<SvSequence>& known, double threshold);

struct CalibrationEntry {
    std::string topology_id;
    double mean_rmse = 0.0; // vs the training-set topologies
    double f2 = 0.0;        // frozen model on this topology's test data
    bool seen_in_training = true;
};

struct CalibrationResult {
    double threshold = std::numeric_limits<double>::infinity();
    std::vector<CalibrationEntry> table; // sorted by mean_rmse ascending
    double seen_mean_f2 = 0.0;
};

// Threshold from the relationship between topology distance and F2: the
// midpoint between the largest conforming mean RMSE and the smallest one
// whose F2 drop from the seen-topology mean exceeds drop_tolerance (in F2
// points, default 5). +inf sentinel when nothing violates. Throws with fewer
// than 3 topologies.
CalibrationResult calibrate_threshold(std::vector<CalibrationEntry> entries,
                                      double drop_tolerance_points = 5.0);

void write_calibration_csv(const CalibrationResult& result, const std::string& path,
                           const std::string& header_comment);
std::string decision_to_json(const SimilarityDecision& d, const std::string& topology_id);

} // namespace dsa::toposim
