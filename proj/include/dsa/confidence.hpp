#pragma once

#include <string>
#include <vector>

#include "dsa/linalg.hpp"

namespace dsa::confidence {

using linalg::Matrix;

struct CovarianceModel {
    std::vector<double> mean;
    Matrix covariance;       // m x m sample covariance
    Matrix inverse;          // (S + lambda I)^-1, cached
    double lambda_reg = 0.0;
    Matrix reference;        // N x m training features
    std::size_t k_nearest = 50;
    std::vector<std::string> warnings;

    // leave-self-out average-kNN distance of every reference point, ascending
    std::vector<double> ref_scores_sorted;

    std::size_t dim() const { return mean.size(); }
};

// Sample covariance plus lambda_reg * I, inverted once. A negative lambda_reg
// selects the default 1e-6 * trace(S) / m. Throws on non-finite features.
CovarianceModel fit_covariance(const Matrix& features, double lambda_reg = -1.0,
                               std::size_t k_nearest = 50);

// sqrt((x-y)^T Sreg^-1 (x-y)) with the cached regularized inverse.
double mahalanobis(const CovarianceModel& model, const std::vector<double>& x,
                   const std::vector<double>& y);

struct ConfidenceReport {
    double avg_distance = 0.0; // mean distance to the k nearest reference points
    double percentile = 0.0;   // fraction of reference points with score >= this, in [0,100]
    std::string band;          // high | medium | low
};

// Average Mahalanobis distance to the k nearest reference points, ranked
// against the reference set's own leave-self-out scores. Bands: high >= 50th
// percentile, medium 10-50, low < 10.
ConfidenceReport confidence(const CovarianceModel& model, const std::vector<double>& x);

std::string covariance_to_json(const CovarianceModel& model);
CovarianceModel covariance_from_json(const std::string& text);

} // namespace dsa::confidence
