#include "dsa/toposim.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dsa::toposim {

std::vector<double> svs_of_matrix(std::size_t n, const std::vector<double>& row_major) {
    if (row_major.size() != n * n) throw std::invalid_argument("svs_of_matrix: bad dimensions");
    Eigen::MatrixXd m{long(n), long(n)};
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) m(long(r), long(c)) = row_major[r * n + c];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = svd.singularValues()[long(i)];
    // Eigen returns them descending already; keep the contract explicit
    std::sort(out.begin(), out.end(), std::greater<double>());
    return out;
}

SvSequence compute_svs(const grid::GridModel& g) {
    const auto y = grid::build_admittance(g);
    const std::size_t n = g.buses.size();
    std::vector<double> mag(n * n);
    for (std::size_t i = 0; i < n * n; ++i) mag[i] = std::abs(y[i]);
    SvSequence s;
    s.topology_id = g.topology_id;
    s.values = svs_of_matrix(n, mag);
    return s;
}

double svs_rmse(const SvSequence& a, const SvSequence& b, bool* padded) {
    const std::size_t n = std::max(a.values.size(), b.values.size());
    if (padded) *padded = a.values.size() != b.values.size();
    if (n == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = i < a.values.size() ? a.values[i] : 0.0;
        const double y = i < b.values.size() ? b.values[i] : 0.0;
        total += (x - y) * (x - y);
    }
    return std::sqrt(total / double(n));
}

SimilarityDecision gate_new_topology(const SvSequence& candidate,
                                     const std::vector<SvSequence>& known, double threshold) {
    if (known.empty()) throw std::invalid_argument("gate_new_topology: empty known set");
    double total = 0.0;
    for (const auto& k : known) total += svs_rmse(candidate, k);
    SimilarityDecision d;
    d.mean_rmse = total / double(known.size());
    d.threshold = threshold;
    d.retrain = d.mean_rmse > threshold;
    return d;
}

SimilarityDecision gate_new_topology(const grid::GridModel& new_grid,
                                     const std::vector<SvSequence>& known, double threshold) {
    return gate_new_topology(compute_svs(new_grid), known, threshold);
}

CalibrationResult calibrate_threshold(std::vector<CalibrationEntry> entries,
                                      double drop_tolerance_points) {
    if (entries.size() < 3)
        throw std::invalid_argument("calibrate_threshold: need at least 3 topologies");
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.mean_rmse != b.mean_rmse) return a.mean_rmse < b.mean_rmse;
        return a.topology_id < b.topology_id;
    });

    double seen_sum = 0.0;
    std::size_t seen_count = 0;
    for (const auto& e : entries)
        if (e.seen_in_training) {
            seen_sum += e.f2;
            ++seen_count;
        }
    if (seen_count == 0)
        throw std::invalid_argument("calibrate_threshold: no training-set topology in the table");

    CalibrationResult result;
    result.table = entries;
    result.seen_mean_f2 = seen_sum / double(seen_count);

    const double drop_tol = drop_tolerance_points / 100.0;
    double below = 0.0; // largest conforming mean RMSE under the first violator
    for (const auto& e : entries) {
        const double drop = result.seen_mean_f2 - e.f2;
        if (drop > drop_tol) {
            result.threshold = 0.5 * (below + e.mean_rmse);
            return result;
        }
        below = e.mean_rmse;
    }
    return result; // +inf sentinel: never retrain
}

void write_calibration_csv(const CalibrationResult& result, const std::string& path,
                           const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", result.threshold);
    out << "# threshold=" << buf << "\n";
    out << "topology_id,mean_rmse,f2,seen_in_training\n";
    for (const auto& e : result.table) {
        std::snprintf(buf, sizeof buf, "%.17g", e.mean_rmse);
        out << e.topology_id << "," << buf << ",";
        std::snprintf(buf, sizeof buf, "%.17g", e.f2);
        out << buf << "," << (e.seen_in_training ? 1 : 0) << "\n";
    }
}

std::string decision_to_json(const SimilarityDecision& d, const std::string& topology_id) {
    nlohmann::json j;
    j["topology_id"] = topology_id;
    j["mean_rmse"] = d.mean_rmse;
    j["threshold"] = d.threshold;
    j["retrain"] = d.retrain;
    return j.dump(2);
}

} // namespace dsa::toposim
