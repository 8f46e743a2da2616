#include "dsa/confidence.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace dsa::confidence {

using nlohmann::json;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd out(long(m.rows), long(m.cols));
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) out(long(r), long(c)) = m(r, c);
    return out;
}

Matrix from_eigen(const Eigen::MatrixXd& m) {
    Matrix out(std::size_t(m.rows()), std::size_t(m.cols()));
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) out(std::size_t(r), std::size_t(c)) = m(r, c);
    return out;
}

double quad_distance(const Matrix& inv, const double* x, const double* y, std::size_t m) {
    // (x-y)^T S^-1 (x-y); inv is symmetric
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double di = x[i] - y[i];
        if (di == 0.0) continue;
        const double* row = &inv.a[i * m];
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += row[j] * (x[j] - y[j]);
        total += di * acc;
    }
    return total;
}

// average distance from point r of the reference set to its k nearest other
// reference points
double self_score(const CovarianceModel& model, std::size_t r) {
    const std::size_t n = model.reference.rows;
    const std::size_t m = model.reference.cols;
    std::vector<double> d;
    d.reserve(n - 1);
    const double* xr = &model.reference.a[r * m];
    for (std::size_t i = 0; i < n; ++i) {
        if (i == r) continue;
        d.push_back(quad_distance(model.inverse, xr, &model.reference.a[i * m], m));
    }
    const std::size_t k = std::min(model.k_nearest, d.size());
    std::partial_sort(d.begin(), d.begin() + long(k), d.end());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += std::sqrt(std::max(0.0, d[i]));
    return k ? s / double(k) : 0.0;
}

} // namespace

CovarianceModel fit_covariance(const Matrix& features, double lambda_reg, std::size_t k_nearest) {
    const std::size_t n = features.rows;
    const std::size_t m = features.cols;
    if (n == 0 || m == 0) throw std::invalid_argument("fit_covariance: empty feature matrix");
    for (double v : features.a)
        if (!std::isfinite(v)) throw std::invalid_argument("fit_covariance: non-finite feature");

    CovarianceModel model;
    model.reference = features;
    model.k_nearest = k_nearest;
    model.mean.assign(m, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) model.mean[c] += features(r, c);
    for (auto& v : model.mean) v /= double(n);

    if (n < m + 1)
        model.warnings.push_back("fewer samples than features + 1; covariance is rank deficient "
                                 "and regularization carries the inverse");

    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(long(m), long(m));
    for (std::size_t r = 0; r < n; ++r) {
        Eigen::VectorXd d{long(m)};
        for (std::size_t c = 0; c < m; ++c) d[long(c)] = features(r, c) - model.mean[c];
        s.noalias() += d * d.transpose();
    }
    if (n > 1) s /= double(n - 1);
    model.covariance = from_eigen(s);

    double lambda = lambda_reg;
    if (lambda < 0.0) lambda = std::max(1e-6 * s.trace() / double(m), 1e-12);
    model.lambda_reg = lambda;
    Eigen::MatrixXd sreg = s;
    for (long i = 0; i < long(m); ++i) sreg(i, i) += lambda;
    model.inverse = from_eigen(sreg.llt().solve(Eigen::MatrixXd::Identity(long(m), long(m))));

    if (k_nearest + 1 > n)
        model.warnings.push_back("reference set smaller than k_nearest; using all points");

    // leave-self-out ranking scores, computed once
    std::vector<double> scores(n);
    const long nl = long(n);
#pragma omp parallel for schedule(static) if (linalg::parallel_enabled())
    for (long r = 0; r < nl; ++r) scores[std::size_t(r)] = self_score(model, std::size_t(r));
    std::sort(scores.begin(), scores.end());
    model.ref_scores_sorted = std::move(scores);
    return model;
}

double mahalanobis(const CovarianceModel& model, const std::vector<double>& x,
                   const std::vector<double>& y) {
    if (x.size() != model.dim() || y.size() != model.dim())
        throw std::invalid_argument("mahalanobis: dimension mismatch");
    return std::sqrt(std::max(0.0, quad_distance(model.inverse, x.data(), y.data(), x.size())));
}

ConfidenceReport confidence(const CovarianceModel& model, const std::vector<double>& x) {
    if (x.size() != model.dim()) throw std::invalid_argument("confidence: dimension mismatch");
    const std::size_t n = model.reference.rows;
    const std::size_t m = model.reference.cols;
    std::vector<double> d(n);
    const long nl = long(n);
#pragma omp parallel for schedule(static) if (linalg::parallel_enabled())
    for (long i = 0; i < nl; ++i)
        d[std::size_t(i)] =
            quad_distance(model.inverse, x.data(), &model.reference.a[std::size_t(i) * m], m);
    const std::size_t k = std::min(model.k_nearest, d.size());
    std::partial_sort(d.begin(), d.begin() + long(k), d.end());
    double avg = 0.0;
    for (std::size_t i = 0; i < k; ++i) avg += std::sqrt(std::max(0.0, d[i]));
    avg = k ? avg / double(k) : 0.0;

    ConfidenceReport rep;
    rep.avg_distance = avg;
    const auto& scores = model.ref_scores_sorted;
    const auto it = std::lower_bound(scores.begin(), scores.end(), avg);
    const std::size_t ge = scores.size() - std::size_t(it - scores.begin());
    rep.percentile = scores.empty() ? 0.0 : 100.0 * double(ge) / double(scores.size());
    if (rep.percentile >= 50.0) rep.band = "high";
    else if (rep.percentile >= 10.0) rep.band = "medium";
    else rep.band = "low";
    return rep;
}

std::string covariance_to_json(const CovarianceModel& model) {
    json j;
    j["format_version"] = 1;
    j["mean"] = model.mean;
    j["m"] = model.dim();
    j["lambda_reg"] = model.lambda_reg;
    j["k_nearest"] = model.k_nearest;
    j["covariance"] = model.covariance.a;
    j["inverse"] = model.inverse.a;
    j["reference_rows"] = model.reference.rows;
    j["reference"] = model.reference.a;
    j["ref_scores_sorted"] = model.ref_scores_sorted;
    return j.dump();
}

CovarianceModel covariance_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("unsupported covariance checkpoint version");
    CovarianceModel model;
    model.mean = j.at("mean").get<std::vector<double>>();
    const std::size_t m = j.at("m").get<std::size_t>();
    model.lambda_reg = j.at("lambda_reg").get<double>();
    model.k_nearest = j.at("k_nearest").get<std::size_t>();
    model.covariance = Matrix(m, m);
    model.covariance.a = j.at("covariance").get<std::vector<double>>();
    model.inverse = Matrix(m, m);
    model.inverse.a = j.at("inverse").get<std::vector<double>>();
    const std::size_t rows = j.at("reference_rows").get<std::size_t>();
    model.reference = Matrix(rows, m);
    model.reference.a = j.at("reference").get<std::vector<double>>();
    model.ref_scores_sorted = j.at("ref_scores_sorted").get<std::vector<double>>();
    return model;
}

} // namespace dsa::confidence
