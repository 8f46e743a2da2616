#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dsa/metrics.hpp"
#include "dsa/neural.hpp"

namespace dsa::robustness {

using linalg::Matrix;

struct AttackConfig {
    double epsilon = 0.05;            // in normalized feature units
    double surrogate_fraction = 0.5;  // share of labeled training data
    std::optional<std::vector<double>> clip_lo; // per-feature bounds, optional
    std::optional<std::vector<double>> clip_hi;
    std::uint64_t seed = 1;
};

struct SurrogateConfig {
    std::vector<std::size_t> hidden{64, 16};
    std::size_t batch_size = 32;
    std::size_t max_epochs = 60;
    double learning_rate = 1e-3;
    double convergence_tol = 1e-4;
    std::size_t convergence_window = 5;
};

// Plain feed-forward classifier on raw [features | condition] rows with a
// logit output; the gradient source for the attack. Throws on an empty
// training subset.
neural::Network train_surrogate(const Matrix& x_cond, const std::vector<int>& labels,
                                double fraction, std::uint64_t seed,
                                const SurrogateConfig& cfg = {});

// Binary cross-entropy of the surrogate on one (x, c, y) row.
double surrogate_loss(const neural::Network& surrogate, const std::vector<double>& x,
                      const std::vector<double>& condition, int label);

// x + epsilon * sign(grad_x J); sign(0) = 0. Only the feature block is
// perturbed, the condition one-hot is left alone. Optional clipping applies
// after the step.
std::vector<double> fgsm(const neural::Network& surrogate, const std::vector<double>& x,
                         const std::vector<double>& condition, int label, double epsilon,
                         const std::optional<std::vector<double>>& clip_lo = std::nullopt,
                         const std::optional<std::vector<double>>& clip_hi = std::nullopt);

struct AttackReport {
    double clean_f2 = 0.0;
    double attacked_f2 = 0.0;
    std::vector<char> flipped;    // per-sample prediction change
    double mean_loss_increase = 0.0; // model-under-test BCE, attacked minus clean
    std::size_t samples = 0;
    double epsilon = 0.0;
};

// Black-box transfer: the surrogate builds one attacked copy of the test set,
// the model under test is scored on both copies.
struct ModelUnderTest {
    // probability that the sample is secure
    std::function<double(const std::vector<double>&, int)> probability;
    double threshold = 0.5;
};

AttackReport evaluate_resilience(const ModelUnderTest& model, const neural::Network& surrogate,
                                 const Matrix& x, const std::vector<int>& contingency,
                                 const std::vector<int>& labels,
                                 const std::vector<std::string>& topology_ids,
                                 const AttackConfig& cfg);

// Attacked copies of the feature rows, one per sample (labels untouched).
Matrix attack_dataset(const neural::Network& surrogate, const Matrix& x,
                      const std::vector<int>& contingency, const std::vector<int>& labels,
                      std::size_t contingency_count, const AttackConfig& cfg);

} // namespace dsa::robustness
