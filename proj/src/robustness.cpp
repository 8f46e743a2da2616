#include "dsa/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dsa::robustness {

using neural::Activation;
using neural::ForwardCache;
using neural::Network;

namespace {

constexpr double kProbClip = 1e-7;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double bce(double y, double p) {
    const double q = std::clamp(p, kProbClip, 1.0 - kProbClip);
    return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

Matrix rows_of(const Matrix& x, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), x.cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = x(idx[r], c);
    return out;
}

} // namespace

Network train_surrogate(const Matrix& x_cond, const std::vector<int>& labels, double fraction,
                        std::uint64_t seed, const SurrogateConfig& cfg) {
    if (x_cond.rows == 0 || x_cond.rows != labels.size())
        throw std::invalid_argument("train_surrogate: empty or misaligned training data");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("train_surrogate: fraction must be in (0, 1]");

    Rng rng(seed);
    std::vector<std::size_t> order(x_cond.rows);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);
    const std::size_t take = std::max<std::size_t>(1, std::size_t(fraction * double(order.size())));
    order.resize(take);

    std::vector<std::size_t> widths{x_cond.cols};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(1);
    std::vector<Activation> acts(widths.size() - 1, Activation::Relu);
    acts.back() = Activation::Identity;
    Network net = neural::make_network(widths, acts, 0.0, rng);
    auto adam = neural::AdamState::for_network(net, cfg.learning_rate);

    std::vector<double> epoch_losses;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            std::vector<std::size_t> idx(order.begin() + long(start), order.begin() + long(end));
            const Matrix xb = rows_of(x_cond, idx);
            ForwardCache cache;
            const Matrix logits = neural::forward(net, xb, true, &rng, &cache);
            Matrix d(logits.rows, 1);
            double loss = 0.0;
            for (std::size_t r = 0; r < logits.rows; ++r) {
                const double y = double(labels[idx[r]]);
                const double p = sigmoid(logits(r, 0));
                loss += bce(y, p);
                d(r, 0) = (p - y) / double(logits.rows);
            }
            total += loss / double(logits.rows);
            const auto grads = neural::backward(net, d, cache);
            neural::adam_step(adam, net, grads);
            ++batches;
        }
        epoch_losses.push_back(total / double(batches));
        const std::size_t w = cfg.convergence_window;
        if (epoch_losses.size() > w) {
            const double then = epoch_losses[epoch_losses.size() - 1 - w];
            const double now = epoch_losses.back();
            if (std::abs(then - now) / std::max(std::abs(then), 1e-12) < cfg.convergence_tol)
                break;
        }
    }
    return net;
}

double surrogate_loss(const Network& surrogate, const std::vector<double>& x,
                      const std::vector<double>& condition, int label) {
    Matrix in(1, x.size() + condition.size());
    for (std::size_t i = 0; i < x.size(); ++i) in(0, i) = x[i];
    for (std::size_t i = 0; i < condition.size(); ++i) in(0, x.size() + i) = condition[i];
    const Matrix logits = neural::forward(surrogate, in);
    return bce(double(label), sigmoid(logits(0, 0)));
}

std::vector<double> fgsm(const Network& surrogate, const std::vector<double>& x,
                         const std::vector<double>& condition, int label, double epsilon,
                         const std::optional<std::vector<double>>& clip_lo,
                         const std::optional<std::vector<double>>& clip_hi) {
    const std::size_t m = x.size();
    Matrix in(1, m + condition.size());
    for (std::size_t i = 0; i < m; ++i) in(0, i) = x[i];
    for (std::size_t i = 0; i < condition.size(); ++i) in(0, m + i) = condition[i];

    ForwardCache cache;
    const Matrix logits = neural::forward(surrogate, in, false, nullptr, &cache);
    const double p = sigmoid(logits(0, 0));
    Matrix d(1, 1);
    d(0, 0) = p - double(label); // dJ/dlogit for binary cross-entropy
    const auto grads = neural::backward(surrogate, d, cache);

    std::vector<double> adv(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double gi = grads.dx(0, i);
        const double s = gi > 0.0 ? 1.0 : (gi < 0.0 ? -1.0 : 0.0);
        adv[i] = x[i] + epsilon * s;
        if (clip_lo && i < clip_lo->size()) adv[i] = std::max(adv[i], (*clip_lo)[i]);
        if (clip_hi && i < clip_hi->size()) adv[i] = std::min(adv[i], (*clip_hi)[i]);
    }
    return adv;
}

Matrix attack_dataset(const Network& surrogate, const Matrix& x,
                      const std::vector<int>& contingency, const std::vector<int>& labels,
                      std::size_t contingency_count, const AttackConfig& cfg) {
    Matrix out(x.rows, x.cols);
    const long n = long(x.rows);
#pragma omp parallel for schedule(static) if (linalg::parallel_enabled())
    for (long r = 0; r < n; ++r) {
        std::vector<double> row(x.cols);
        for (std::size_t c = 0; c < x.cols; ++c) row[c] = x(std::size_t(r), c);
        std::vector<double> cond(contingency_count, 0.0);
        cond[std::size_t(contingency[std::size_t(r)])] = 1.0;
        const auto adv = fgsm(surrogate, row, cond, labels[std::size_t(r)], cfg.epsilon,
                              cfg.clip_lo, cfg.clip_hi);
        for (std::size_t c = 0; c < x.cols; ++c) out(std::size_t(r), c) = adv[c];
    }
    return out;
}

AttackReport evaluate_resilience(const ModelUnderTest& model, const Network& surrogate,
                                 const Matrix& x, const std::vector<int>& contingency,
                                 const std::vector<int>& labels,
                                 const std::vector<std::string>& topology_ids,
                                 const AttackConfig& cfg) {
    AttackReport rep;
    rep.samples = x.rows;
    rep.epsilon = cfg.epsilon;
    if (x.rows == 0) return rep;

    const Matrix attacked =
        attack_dataset(surrogate, x, contingency, labels, /*contingency_count=*/
                       [&] {
                           int mx = 0;
                           for (int c : contingency) mx = std::max(mx, c);
                           return std::size_t(mx) + 1;
                       }(),
                       cfg);

    std::vector<int> clean_pred(x.rows), adv_pred(x.rows);
    rep.flipped.assign(x.rows, 0);
    double loss_delta = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) {
        std::vector<double> row(x.cols), row_adv(x.cols);
        for (std::size_t c = 0; c < x.cols; ++c) {
            row[c] = x(r, c);
            row_adv[c] = attacked(r, c);
        }
        const double p_clean = model.probability(row, contingency[r]);
        const double p_adv = model.probability(row_adv, contingency[r]);
        clean_pred[r] = p_clean >= model.threshold ? 1 : 0;
        adv_pred[r] = p_adv >= model.threshold ? 1 : 0;
        rep.flipped[r] = clean_pred[r] != adv_pred[r];
        loss_delta += bce(double(labels[r]), p_adv) - bce(double(labels[r]), p_clean);
    }
    rep.mean_loss_increase = loss_delta / double(x.rows);
    rep.clean_f2 = metrics::evaluate(clean_pred, labels, topology_ids).f_beta;
    rep.attacked_f2 = metrics::evaluate(adv_pred, labels, topology_ids).f_beta;
    return rep;
}

} // namespace dsa::robustness
