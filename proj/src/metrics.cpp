#include "dsa/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dsa::metrics {

void ConfusionMatrix::add(int predicted_label, int true_label) {
    const bool pred_insecure = predicted_label == 0;
    const bool true_insecure = true_label == 0;
    if (pred_insecure && true_insecure) ++tp;
    else if (pred_insecure && !true_insecure) ++fp;
    else if (!pred_insecure && true_insecure) ++fn;
    else ++tn;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

double precision(const ConfusionMatrix& cm) {
    const std::size_t denom = cm.tp + cm.fp;
    return denom == 0 ? 0.0 : double(cm.tp) / double(denom);
}

double recall(const ConfusionMatrix& cm) {
    const std::size_t denom = cm.tp + cm.fn;
    return denom == 0 ? 0.0 : double(cm.tp) / double(denom);
}

double f_beta(double phi, double rho, double beta) {
    const double denom = beta * beta * phi + rho;
    if (denom == 0.0) return 0.0;
    return (1.0 + beta * beta) * phi * rho / denom;
}

double f_beta(const ConfusionMatrix& cm, double beta) {
    return f_beta(precision(cm), recall(cm), beta);
}

MetricReport evaluate(const std::vector<int>& predictions, const std::vector<int>& labels,
                      const std::vector<std::string>& topology_ids, double beta) {
    if (predictions.size() != labels.size() || predictions.size() != topology_ids.size())
        throw std::invalid_argument("evaluate: input length mismatch");
    MetricReport rep;
    rep.beta = beta;
    std::map<std::string, ConfusionMatrix> per;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        rep.global.add(predictions[i], labels[i]);
        per[topology_ids[i]].add(predictions[i], labels[i]);
    }
    rep.precision = precision(rep.global);
    rep.recall = recall(rep.global);
    rep.f_beta = f_beta(rep.global, beta);

    double sum = 0.0, sum2 = 0.0;
    double min_f2 = 1.0;
    for (const auto& [tid, cm] : per) {
        TopologyMetrics tm;
        tm.topology_id = tid;
        tm.cm = cm;
        tm.f2 = f_beta(cm, beta);
        sum += tm.f2;
        sum2 += tm.f2 * tm.f2;
        min_f2 = std::min(min_f2, tm.f2);
        rep.per_topology.push_back(std::move(tm));
    }
    const double k = double(rep.per_topology.size());
    if (k > 0) {
        rep.f2_min = min_f2;
        rep.f2_mean = sum / k;
        rep.f2_variance = std::max(0.0, sum2 / k - rep.f2_mean * rep.f2_mean);
    }
    return rep;
}

namespace {

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

BenchmarkRow benchmark_speed(const grid::GridModel& g, const grid::PowerFlowSolution& initial,
                             const std::vector<dynsim::ContingencySpec>& contingencies,
                             const std::function<void(const std::vector<double>&, int)>& infer,
                             const std::vector<std::vector<double>>& ocs, std::size_t reps) {
    BenchmarkRow row;
    row.system = g.topology_id;
    row.contingencies = contingencies.size();
    row.n_ocs = ocs.size();
    if (ocs.empty() || contingencies.empty()) return row;

    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    // warm-up runs excluded from the medians
    (void)dynsim::label(g, initial, contingencies.front());
    for (int c = 0; c < int(contingencies.size()); ++c) infer(ocs.front(), c);

    std::vector<double> tds_times, model_times;
    for (std::size_t rep = 0; rep < reps; ++rep) {
        const auto t0 = clock::now();
        (void)dynsim::label(g, initial, contingencies.front());
        tds_times.push_back(ms_since(t0));

        const auto t1 = clock::now();
        for (const auto& oc : ocs)
            for (int c = 0; c < int(contingencies.size()); ++c) infer(oc, c);
        model_times.push_back(ms_since(t1) / double(ocs.size()));
    }
    row.tds_ms = median(tds_times);
    row.model_ms = median(model_times);
    row.speedup = row.model_ms > 0.0 ? row.tds_ms / row.model_ms : 0.0;
    return row;
}

void write_report_csv(const MetricReport& report, const std::string& path,
                      const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "topology_id,tp,fp,tn,fn,precision,recall,f2\n";
    char buf[64];
    auto line = [&](const std::string& tid, const ConfusionMatrix& cm) {
        out << tid << "," << cm.tp << "," << cm.fp << "," << cm.tn << "," << cm.fn << ",";
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f", precision(cm), recall(cm),
                      f_beta(cm, report.beta));
        out << buf << "\n";
    };
    for (const auto& tm : report.per_topology) line(tm.topology_id, tm.cm);
    line("__global__", report.global);
}

std::string report_summary(const MetricReport& report) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "global: precision=%.4f recall=%.4f F%.0f=%.4f (tp=%zu fp=%zu tn=%zu fn=%zu)\n",
                  report.precision, report.recall, report.beta, report.f_beta, report.global.tp,
                  report.global.fp, report.global.tn, report.global.fn);
    os << buf;
    std::snprintf(buf, sizeof buf, "per-topology F%.0f: min=%.4f mean=%.4f variance=%.6f\n",
                  report.beta, report.f2_min, report.f2_mean, report.f2_variance);
    os << buf;
    for (const auto& tm : report.per_topology) {
        std::snprintf(buf, sizeof buf, "  %-24s F%.0f=%.4f (n=%zu)\n", tm.topology_id.c_str(),
                      report.beta, tm.f2, tm.cm.total());
        os << buf;
    }
    return os.str();
}

} // namespace dsa::metrics
