#include "dsa/ssmtl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "json.hpp"

namespace dsa::ssmtl {

using neural::Activation;
using neural::ForwardCache;
using neural::Gradients;
using neural::Network;
using nlohmann::json;

namespace {

constexpr double kProbClip = 1e-7;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Matrix concat_cols(const Matrix& a, const Matrix& b) {
    linalg::check(a.rows == b.rows, "concat: row mismatch");
    Matrix out(a.rows, a.cols + b.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        for (std::size_t c = 0; c < a.cols; ++c) out(r, c) = a(r, c);
        for (std::size_t c = 0; c < b.cols; ++c) out(r, a.cols + c) = b(r, c);
    }
    return out;
}

Matrix condition_matrix(const std::vector<int>& contingency, std::size_t C) {
    Matrix cond(contingency.size(), C);
    for (std::size_t r = 0; r < contingency.size(); ++r) {
        const auto one_hot = make_condition(contingency[r], C);
        for (std::size_t c = 0; c < C; ++c) cond(r, c) = one_hot[c];
    }
    return cond;
}

Matrix mask_features(const Matrix& x, double mask_rate, Rng& rng) {
    Matrix out = x;
    if (mask_rate <= 0.0) return out;
    for (auto& v : out.a)
        if (rng.uniform() < mask_rate) v = 0.0;
    return out;
}

double bce(double y, double p) {
    const double q = std::clamp(p, kProbClip, 1.0 - kProbClip);
    return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

} // namespace

LossSchedule LossSchedule::standard() {
    LossSchedule s;
    s.stages = {{1.0, 0.0, 2}, {0.5, 0.5, 1}, {0.75, 0.25, 1}};
    return s;
}

std::vector<double> make_condition(int contingency_index, std::size_t contingency_count) {
    if (contingency_index < 0 || std::size_t(contingency_index) >= contingency_count)
        throw std::out_of_range("contingency index out of range");
    std::vector<double> c(contingency_count, 0.0);
    c[std::size_t(contingency_index)] = 1.0;
    return c;
}

SsMtlModel build_model(std::size_t feature_dim, std::size_t contingency_count,
                       const ModelArch& arch, Rng& rng) {
    SsMtlModel m;
    m.feature_dim = feature_dim;
    m.contingency_count = contingency_count;
    m.latent_dim = arch.latent_dim;
    m.mask_rate = arch.mask_rate;

    std::vector<std::size_t> enc{feature_dim + contingency_count};
    enc.insert(enc.end(), arch.encoder_hidden.begin(), arch.encoder_hidden.end());
    enc.push_back(arch.latent_dim);
    std::vector<Activation> enc_act(enc.size() - 1, Activation::Relu);
    enc_act.back() = Activation::Identity; // linear latent code
    m.encoder = neural::make_network(enc, enc_act, arch.dropout, rng);

    std::vector<std::size_t> dec{arch.latent_dim + contingency_count};
    dec.insert(dec.end(), arch.decoder_hidden.begin(), arch.decoder_hidden.end());
    dec.push_back(feature_dim);
    std::vector<Activation> dec_act(dec.size() - 1, Activation::Relu);
    dec_act.back() = Activation::Identity;
    m.decoder = neural::make_network(dec, dec_act, arch.dropout, rng);

    std::vector<std::size_t> cls{arch.latent_dim};
    cls.insert(cls.end(), arch.classifier_hidden.begin(), arch.classifier_hidden.end());
    cls.push_back(1);
    std::vector<Activation> cls_act(cls.size() - 1, Activation::Relu);
    cls_act.back() = Activation::Identity; // logit; sigmoid folded into the loss
    m.classifier = neural::make_network(cls, cls_act, arch.dropout, rng);
    return m;
}

double reconstruction_loss(const SsMtlModel& model, const Matrix& x,
                           const std::vector<int>& contingency, std::uint64_t mask_seed) {
    Rng rng(mask_seed);
    const Matrix cond = condition_matrix(contingency, model.contingency_count);
    const Matrix masked = mask_features(x, model.mask_rate, rng);
    const Matrix z = neural::forward(model.encoder, concat_cols(masked, cond));
    const Matrix xhat = neural::forward(model.decoder, concat_cols(z, cond));
    double total = 0.0;
    for (std::size_t i = 0; i < x.a.size(); ++i) {
        const double d = x.a[i] - xhat.a[i];
        total += d * d;
    }
    return total / double(x.rows);
}

double classification_loss(const SsMtlModel& model, const Matrix& x,
                           const std::vector<int>& contingency, const std::vector<int>& label) {
    for (int y : label)
        if (y != 0 && y != 1)
            throw std::invalid_argument("classification_loss requires labeled samples");
    const Matrix cond = condition_matrix(contingency, model.contingency_count);
    const Matrix z = neural::forward(model.encoder, concat_cols(x, cond));
    const Matrix logits = neural::forward(model.classifier, z);
    double total = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r)
        total += bce(double(label[r]), sigmoid(logits(r, 0)));
    return total / double(x.rows);
}

double joint_loss(const SsMtlModel& model, const Matrix& x, const std::vector<int>& contingency,
                  const std::vector<int>& label, double alpha, double beta,
                  std::uint64_t mask_seed) {
    const double lr = reconstruction_loss(model, x, contingency, mask_seed);
    double lc = 0.0;
    if (beta != 0.0) {
        // only labeled rows enter the classification term
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < x.rows; ++r)
            if (label[r] >= 0) rows.push_back(r);
        if (!rows.empty()) {
            Matrix xl(rows.size(), x.cols);
            std::vector<int> cl(rows.size()), yl(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (std::size_t c = 0; c < x.cols; ++c) xl(i, c) = x(rows[i], c);
                cl[i] = contingency[rows[i]];
                yl[i] = label[rows[i]];
            }
            lc = classification_loss(model, xl, cl, yl);
        }
    }
    return alpha * lr + beta * lc;
}

namespace {

struct Trainer {
    SsMtlModel& model;
    const TrainingConfig& cfg;
    neural::AdamState enc_state, dec_state, cls_state;
    Rng rng;

    Trainer(SsMtlModel& m, const TrainingConfig& c)
        : model(m),
          cfg(c),
          enc_state(neural::AdamState::for_network(m.encoder, c.learning_rate)),
          dec_state(neural::AdamState::for_network(m.decoder, c.learning_rate)),
          cls_state(neural::AdamState::for_network(m.classifier, c.learning_rate)),
          rng(c.seed) {}

    // one optimizer step; returns (l_recon, l_class)
    std::pair<double, double> step(const Matrix& xb, const std::vector<int>& cont,
                                   const std::vector<int>& label, double alpha, double beta) {
        const std::size_t B = xb.rows;
        const Matrix cond = condition_matrix(cont, model.contingency_count);
        const Matrix masked = mask_features(xb, model.mask_rate, rng);

        ForwardCache enc_cache, dec_cache, cls_cache;
        const Matrix z =
            neural::forward(model.encoder, concat_cols(masked, cond), true, &rng, &enc_cache);
        const Matrix xhat =
            neural::forward(model.decoder, concat_cols(z, cond), true, &rng, &dec_cache);

        double l_recon = 0.0;
        Matrix d_xhat(B, model.feature_dim);
        for (std::size_t i = 0; i < xhat.a.size(); ++i) {
            const double d = xhat.a[i] - xb.a[i];
            l_recon += d * d;
            d_xhat.a[i] = alpha * 2.0 * d / double(B);
        }
        l_recon /= double(B);

        const Gradients dec_grads = neural::backward(model.decoder, d_xhat, dec_cache);
        Matrix dz(B, model.latent_dim);
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t c = 0; c < model.latent_dim; ++c) dz(r, c) = dec_grads.dx(r, c);

        double l_class = std::numeric_limits<double>::quiet_NaN();
        std::optional<Gradients> cls_grads;
        if (beta != 0.0) {
            const Matrix logits = neural::forward(model.classifier, z, true, &rng, &cls_cache);
            std::size_t n_labeled = 0;
            for (int y : label)
                if (y >= 0) ++n_labeled;
            Matrix d_logit(B, 1);
            l_class = 0.0;
            if (n_labeled > 0) {
                for (std::size_t r = 0; r < B; ++r) {
                    if (label[r] < 0) {
                        d_logit(r, 0) = 0.0;
                        continue;
                    }
                    const double p = sigmoid(logits(r, 0));
                    l_class += bce(double(label[r]), p);
                    d_logit(r, 0) = beta * (p - double(label[r])) / double(n_labeled);
                }
                l_class /= double(n_labeled);
            }
            cls_grads = neural::backward(model.classifier, d_logit, cls_cache);
            for (std::size_t i = 0; i < dz.a.size(); ++i) dz.a[i] += cls_grads->dx.a[i];
        }

        const Gradients enc_grads = neural::backward(model.encoder, dz, enc_cache);
        neural::adam_step(enc_state, model.encoder, enc_grads);
        neural::adam_step(dec_state, model.decoder, dec_grads);
        // the classifier is untouched while beta == 0 (warmup invariant)
        if (cls_grads) neural::adam_step(cls_state, model.classifier, *cls_grads);
        return {l_recon, l_class};
    }
};

} // namespace

TrainResult train(SsMtlModel& model, const Dataset& train_set, const TrainingConfig& cfg,
                  const LossSchedule& schedule) {
    if (train_set.x.rows == 0) throw std::invalid_argument("train: empty train split");
    if (schedule.stages.empty()) throw std::invalid_argument("train: empty schedule");
    if (train_set.x.cols != model.feature_dim)
        throw TopologyMismatch("train: feature width differs from model m");

    // per-topology sample indices, in first-appearance order
    std::vector<std::string> topo_order;
    std::map<std::string, std::vector<std::size_t>> by_topo;
    for (std::size_t i = 0; i < train_set.x.rows; ++i) {
        const auto& t = train_set.topology[i];
        if (!by_topo.count(t)) topo_order.push_back(t);
        by_topo[t].push_back(i);
    }

    Trainer trainer(model, cfg);
    TrainResult result;
    std::size_t global_epoch = 0;

    for (std::size_t si = 0; si < schedule.stages.size(); ++si) {
        const Stage& stage = schedule.stages[si];
        result.stage_boundaries.push_back(global_epoch + 1);
        std::vector<double> stage_losses;
        for (std::size_t epoch = 1; epoch <= cfg.max_epochs_per_stage; ++epoch) {
            // single-topology batches, shuffled within and across topologies
            struct Batch {
                std::string topo;
                std::vector<std::size_t> idx;
            };
            std::vector<Batch> batches;
            for (const auto& t : topo_order) {
                auto idx = by_topo[t];
                for (std::size_t i = idx.size(); i > 1; --i)
                    std::swap(idx[i - 1], idx[trainer.rng.below(i)]);
                for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
                    Batch b;
                    b.topo = t;
                    const std::size_t end = std::min(start + cfg.batch_size, idx.size());
                    b.idx.assign(idx.begin() + long(start), idx.begin() + long(end));
                    batches.push_back(std::move(b));
                }
            }
            for (std::size_t i = batches.size(); i > 1; --i)
                std::swap(batches[i - 1], batches[trainer.rng.below(i)]);

            double epoch_recon = 0.0, epoch_class = 0.0, epoch_joint = 0.0;
            std::size_t class_batches = 0;
            for (const auto& b : batches) {
                Matrix xb(b.idx.size(), train_set.x.cols);
                std::vector<int> cont(b.idx.size()), lab(b.idx.size());
                for (std::size_t r = 0; r < b.idx.size(); ++r) {
                    if (train_set.topology[b.idx[r]] != b.topo)
                        throw std::logic_error("train: batch mixes topologies");
                    for (std::size_t c = 0; c < train_set.x.cols; ++c)
                        xb(r, c) = train_set.x(b.idx[r], c);
                    cont[r] = train_set.contingency[b.idx[r]];
                    lab[r] = train_set.label[b.idx[r]];
                }
                const auto [lr, lc] = trainer.step(xb, cont, lab, stage.alpha, stage.beta);
                result.batch_topologies.push_back(b.topo);
                epoch_recon += lr;
                if (!std::isnan(lc)) {
                    epoch_class += lc;
                    ++class_batches;
                }
                const double lj = stage.alpha * lr + (std::isnan(lc) ? 0.0 : stage.beta * lc);
                epoch_joint += lj;
                if (!std::isfinite(lj))
                    throw std::runtime_error("train: loss diverged (non-finite)");
            }
            const double nb = double(batches.size());
            EpochLog log;
            log.epoch = ++global_epoch;
            log.stage = si + 1;
            log.alpha = stage.alpha;
            log.beta = stage.beta;
            log.l_recon = epoch_recon / nb;
            log.l_class = class_batches ? epoch_class / double(class_batches)
                                        : std::numeric_limits<double>::quiet_NaN();
            log.l_joint = epoch_joint / nb;
            result.log.push_back(log);

            stage_losses.push_back(log.l_joint);
            const std::size_t w = cfg.convergence_window;
            bool converged = false;
            if (epoch >= stage.min_epochs && stage_losses.size() > w) {
                const double then = stage_losses[stage_losses.size() - 1 - w];
                const double now = stage_losses.back();
                const double rel = std::abs(then - now) / std::max(std::abs(then), 1e-12);
                converged = rel < cfg.convergence_tol;
            }
            if (converged) break;
        }
    }
    return result;
}

Prediction predict(const SsMtlModel& model, const std::vector<double>& x, int contingency_index) {
    if (x.size() != model.feature_dim)
        throw TopologyMismatch(
            "feature width " + std::to_string(x.size()) + " does not match training-time m " +
            std::to_string(model.feature_dim) + "; run the topology similarity gate");
    Matrix xb(1, x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xb(0, i) = x[i];
    return predict_batch(model, xb, {contingency_index})[0];
}

std::vector<Prediction> predict_batch(const SsMtlModel& model, const Matrix& x,
                                      const std::vector<int>& contingency) {
    if (x.cols != model.feature_dim)
        throw TopologyMismatch("feature width does not match training-time m; run the topology "
                               "similarity gate");
    const Matrix cond = condition_matrix(contingency, model.contingency_count);
    const Matrix z = neural::forward(model.encoder, concat_cols(x, cond));
    const Matrix logits = neural::forward(model.classifier, z);
    std::vector<Prediction> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        out[r].probability = sigmoid(logits(r, 0));
        out[r].label = out[r].probability >= model.threshold ? 1 : 0;
    }
    return out;
}

std::string model_to_json(const SsMtlModel& model) {
    json j;
    j["format_version"] = 1;
    j["latent_dim"] = model.latent_dim;
    j["m"] = model.feature_dim;
    j["C"] = model.contingency_count;
    j["mask_rate"] = model.mask_rate;
    j["threshold"] = model.threshold;
    j["contingency_vocab"] = model.contingency_vocab;
    j["feature_layout"] = {{"generators", model.layout.generators},
                           {"loads", model.layout.loads},
                           {"lines", model.layout.lines},
                           {"buses", model.layout.buses}};
    j["encoder"] = json::parse(neural::network_to_json(model.encoder));
    j["decoder"] = json::parse(neural::network_to_json(model.decoder));
    j["classifier"] = json::parse(neural::network_to_json(model.classifier));
    return j.dump();
}

SsMtlModel model_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("unsupported model checkpoint version");
    SsMtlModel m;
    m.latent_dim = j.at("latent_dim").get<std::size_t>();
    m.feature_dim = j.at("m").get<std::size_t>();
    m.contingency_count = j.at("C").get<std::size_t>();
    m.mask_rate = j.at("mask_rate").get<double>();
    m.threshold = j.at("threshold").get<double>();
    m.contingency_vocab = j.at("contingency_vocab").get<std::vector<std::string>>();
    m.layout.generators = j.at("feature_layout").at("generators").get<std::size_t>();
    m.layout.loads = j.at("feature_layout").at("loads").get<std::size_t>();
    m.layout.lines = j.at("feature_layout").at("lines").get<std::size_t>();
    m.layout.buses = j.at("feature_layout").at("buses").get<std::size_t>();
    m.encoder = neural::network_from_json(j.at("encoder").dump());
    m.decoder = neural::network_from_json(j.at("decoder").dump());
    m.classifier = neural::network_from_json(j.at("classifier").dump());
    return m;
}

void write_training_log_csv(const TrainResult& result, const std::string& path,
                            const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "epoch,stage,alpha,beta,l_recon,l_class,l\n";
    char buf[64];
    for (const auto& e : result.log) {
        out << e.epoch << "," << e.stage << ",";
        std::snprintf(buf, sizeof buf, "%.4g,%.4g,", e.alpha, e.beta);
        out << buf;
        std::snprintf(buf, sizeof buf, "%.17g,", e.l_recon);
        out << buf;
        if (std::isnan(e.l_class)) out << "nan,";
        else {
            std::snprintf(buf, sizeof buf, "%.17g,", e.l_class);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g", e.l_joint);
        out << buf << "\n";
    }
}

} // namespace dsa::ssmtl
