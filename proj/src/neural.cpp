#include "dsa/neural.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace dsa::neural {

using nlohmann::json;

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation: " + s);
}

std::string activation_to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        default: return "identity";
    }
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.a.size() + l.bias.size();
    return n;
}

Network make_network(const std::vector<std::size_t>& widths,
                     const std::vector<Activation>& activations, double dropout_rate, Rng& rng) {
    if (widths.size() < 2 || activations.size() != widths.size() - 1)
        throw std::invalid_argument("make_network: widths/activations mismatch");
    Network net;
    net.dropout_rate = dropout_rate;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        DenseLayer layer;
        layer.activation = activations[i];
        layer.weights = Matrix(widths[i + 1], widths[i]);
        layer.bias.assign(widths[i + 1], 0.0);
        const double fan_in = double(widths[i]);
        const double fan_out = double(widths[i + 1]);
        const double limit = layer.activation == Activation::Relu
                                 ? std::sqrt(6.0 / fan_in)
                                 : std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& w : layer.weights.a) w = rng.uniform(-limit, limit);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

namespace {

void apply_activation(Activation a, const Matrix& z, Matrix& h) {
    h = z;
    switch (a) {
        case Activation::Relu:
            for (auto& v : h.a) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::Sigmoid:
            for (auto& v : h.a) v = 1.0 / (1.0 + std::exp(-v));
            break;
        case Activation::Identity:
            break;
    }
}

// derivative expressed through pre-activation z and post-activation h
void activation_backprop(Activation a, const Matrix& z, const Matrix& h, Matrix& grad) {
    switch (a) {
        case Activation::Relu:
            for (std::size_t i = 0; i < grad.a.size(); ++i)
                if (z.a[i] <= 0.0) grad.a[i] = 0.0;
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < grad.a.size(); ++i)
                grad.a[i] *= h.a[i] * (1.0 - h.a[i]);
            break;
        case Activation::Identity:
            break;
    }
}

} // namespace

Matrix forward(const Network& net, const Matrix& x, bool training, Rng* rng, ForwardCache* cache) {
    if (net.layers.empty()) throw std::invalid_argument("forward: empty network");
    if (x.cols != net.in_width())
        throw std::invalid_argument("forward: input width does not match first layer");
    if (training && net.dropout_rate > 0.0 && rng == nullptr)
        throw std::invalid_argument("forward: training with dropout requires an rng");

    if (cache) {
        cache->input = x;
        cache->pre.clear();
        cache->post.clear();
        cache->dropout_masks.clear();
        cache->training = training;
    }

    Matrix h = x;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const DenseLayer& layer = net.layers[li];
        if (h.cols != layer.in_width()) throw std::invalid_argument("forward: shape chain broken");
        Matrix z;
        linalg::matmul_nt(h, layer.weights, z);
        for (std::size_t r = 0; r < z.rows; ++r)
            for (std::size_t c = 0; c < z.cols; ++c) z(r, c) += layer.bias[c];
        Matrix out;
        apply_activation(layer.activation, z, out);

        const bool hidden = li + 1 < net.layers.size();
        if (training && hidden && net.dropout_rate > 0.0) {
            Matrix mask(out.rows, out.cols);
            const double keep = 1.0 - net.dropout_rate;
            for (auto& m : mask.a) m = rng->uniform() < keep ? 1.0 / keep : 0.0;
            for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] *= mask.a[i];
            if (cache) cache->dropout_masks.push_back(std::move(mask));
        } else if (cache) {
            cache->dropout_masks.emplace_back();
        }
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->post.push_back(out);
        }
        h = std::move(out);
    }
    return h;
}

Matrix forward(const Network& net, const Matrix& x) {
    return forward(net, x, false, nullptr, nullptr);
}

Gradients backward(const Network& net, const Matrix& upstream, const ForwardCache& cache) {
    const std::size_t L = net.layers.size();
    if (cache.pre.size() != L || cache.post.size() != L)
        throw std::invalid_argument("backward: cache does not match network");
    if (!upstream.same_shape(cache.post.back()))
        throw std::invalid_argument("backward: upstream gradient shape mismatch");

    if (cache.input.cols != net.in_width())
        throw std::invalid_argument("backward: cache input width does not match network");
    for (std::size_t li = 0; li < L; ++li)
        if (cache.post[li].cols != net.layers[li].out_width() ||
            cache.pre[li].cols != net.layers[li].out_width())
            throw std::invalid_argument("backward: cache does not match network layer shapes");

    Gradients g;
    g.dw.resize(L);
    g.db.resize(L);

    Matrix grad = upstream; // dL/dh_i
    for (std::size_t li = L; li-- > 0;) {
        const DenseLayer& layer = net.layers[li];
        const bool hidden = li + 1 < L;
        if (cache.training && hidden && !cache.dropout_masks[li].a.empty()) {
            const Matrix& mask = cache.dropout_masks[li];
            for (std::size_t i = 0; i < grad.a.size(); ++i) grad.a[i] *= mask.a[i];
        }
        activation_backprop(layer.activation, cache.pre[li], cache.post[li], grad);
        const Matrix& below = li == 0 ? cache.input : cache.post[li - 1];
        linalg::matmul_tn(grad, below, g.dw[li]); // (out x batch)(batch x in)
        linalg::col_sums(grad, g.db[li]);
        Matrix next;
        linalg::matmul(grad, layer.weights, next); // batch x in
        grad = std::move(next);
    }
    g.dx = std::move(grad);
    return g;
}

AdamState AdamState::for_network(const Network& net, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    for (const auto& l : net.layers) {
        s.mw.emplace_back(l.weights.rows, l.weights.cols);
        s.vw.emplace_back(l.weights.rows, l.weights.cols);
        s.mb.emplace_back(l.bias.size(), 0.0);
        s.vb.emplace_back(l.bias.size(), 0.0);
    }
    return s;
}

void adam_step(AdamState& state, Network& net, const Gradients& grads) {
    if (state.mw.size() != net.layers.size() || grads.dw.size() != net.layers.size())
        throw std::invalid_argument("adam_step: state/gradient shape mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        auto& w = net.layers[li].weights.a;
        const auto& gw = grads.dw[li].a;
        auto& mw = state.mw[li].a;
        auto& vw = state.vw[li].a;
        for (std::size_t i = 0; i < w.size(); ++i) {
            mw[i] = state.beta1 * mw[i] + (1.0 - state.beta1) * gw[i];
            vw[i] = state.beta2 * vw[i] + (1.0 - state.beta2) * gw[i] * gw[i];
            const double mhat = mw[i] / bc1;
            const double vhat = vw[i] / bc2;
            w[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
        auto& b = net.layers[li].bias;
        const auto& gb = grads.db[li];
        auto& mb = state.mb[li];
        auto& vb = state.vb[li];
        for (std::size_t i = 0; i < b.size(); ++i) {
            mb[i] = state.beta1 * mb[i] + (1.0 - state.beta1) * gb[i];
            vb[i] = state.beta2 * vb[i] + (1.0 - state.beta2) * gb[i] * gb[i];
            const double mhat = mb[i] / bc1;
            const double vhat = vb[i] / bc2;
            b[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

std::string network_to_json(const Network& net) {
    json j;
    j["format_version"] = 1;
    j["dropout_rate"] = net.dropout_rate;
    j["layers"] = json::array();
    for (const auto& l : net.layers)
        j["layers"].push_back({{"out", l.weights.rows},
                               {"in", l.weights.cols},
                               {"activation", activation_to_string(l.activation)},
                               {"weights", l.weights.a},
                               {"bias", l.bias}});
    return j.dump();
}

Network network_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("unsupported network checkpoint version");
    Network net;
    net.dropout_rate = j.at("dropout_rate").get<double>();
    for (const auto& jl : j.at("layers")) {
        DenseLayer l;
        l.activation = activation_from_string(jl.at("activation").get<std::string>());
        l.weights = Matrix(jl.at("out").get<std::size_t>(), jl.at("in").get<std::size_t>());
        l.weights.a = jl.at("weights").get<std::vector<double>>();
        l.bias = jl.at("bias").get<std::vector<double>>();
        if (l.weights.a.size() != l.weights.rows * l.weights.cols ||
            l.bias.size() != l.weights.rows)
            throw std::runtime_error("corrupt network checkpoint");
        net.layers.push_back(std::move(l));
    }
    return net;
}

} // namespace dsa::neural
