#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsa/linalg.hpp"
#include "dsa/rng.hpp"

namespace dsa::neural {

using linalg::Matrix;

enum class Activation { Relu, Sigmoid, Identity };

Activation activation_from_string(const std::string& s);
std::string activation_to_string(Activation a);

struct DenseLayer {
    Matrix weights; // out x in
    std::vector<double> bias;
    Activation activation = Activation::Identity;

    std::size_t in_width() const { return weights.cols; }
    std::size_t out_width() const { return weights.rows; }
};

struct Network {
    std::vector<DenseLayer> layers;
    double dropout_rate = 0.0; // hidden activations only

    std::size_t in_width() const { return layers.front().in_width(); }
    std::size_t out_width() const { return layers.back().out_width(); }

    std::size_t parameter_count() const;
};

// He-style uniform init for relu layers, Xavier-style otherwise.
Network make_network(const std::vector<std::size_t>& widths,
                     const std::vector<Activation>& activations, double dropout_rate, Rng& rng);

// Per-layer cache of a forward pass; required by backward().
struct ForwardCache {
    Matrix input;                       // batch x in
    std::vector<Matrix> pre;            // z_i = h_{i-1} W_i^T + b_i
    std::vector<Matrix> post;           // h_i after activation (and dropout)
    std::vector<Matrix> dropout_masks;  // scaled keep masks; empty when not training
    bool training = false;
};

// h_0 = x, h_i = f(W_i h_{i-1} + b_i). Inverted dropout on hidden layers when
// training, so inference needs no rescale. Throws on shape mismatch.
Matrix forward(const Network& net, const Matrix& x, bool training, Rng* rng, ForwardCache* cache);
Matrix forward(const Network& net, const Matrix& x); // inference

struct Gradients {
    std::vector<Matrix> dw;
    std::vector<std::vector<double>> db;
    Matrix dx; // gradient w.r.t. the input batch
};

// Exact reverse-mode gradients for the scalar loss whose gradient w.r.t. the
// network output is `upstream` (batch x out). The cache must come from the
// matching forward pass.
Gradients backward(const Network& net, const Matrix& upstream, const ForwardCache& cache);

struct AdamState {
    std::vector<Matrix> mw, vw;
    std::vector<std::vector<double>> mb, vb;
    std::int64_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_network(const Network& net, double learning_rate);
};

// Standard bias-corrected Adam update applied in place.
void adam_step(AdamState& state, Network& net, const Gradients& grads);

// Checkpoint format: layer shapes, activation tags, flattened row-major
// weights, dropout rate, format-version field.
std::string network_to_json(const Network& net);
Network network_from_json(const std::string& text);

} // namespace dsa::neural
