#include "doctest.h"

#include <cmath>

#include "dsa/robustness.hpp"

using namespace dsa;
using linalg::Matrix;
using neural::Activation;
using neural::Network;

namespace {

// single-layer logit classifier with chosen weights over [x | c]
Network fixed_surrogate(const std::vector<double>& w, double bias) {
    Network net;
    neural::DenseLayer l;
    l.weights = Matrix(1, w.size());
    for (std::size_t i = 0; i < w.size(); ++i) l.weights(0, i) = w[i];
    l.bias = {bias};
    l.activation = Activation::Identity;
    net.layers.push_back(l);
    return net;
}

// linearly separable synthetic set: secure iff the feature sum is positive
void separable_data(std::size_t n, std::size_t m, std::uint64_t seed, Matrix& x_cond,
                    std::vector<int>& labels, std::size_t c = 2) {
    Rng rng(seed);
    x_cond = Matrix(n, m + c);
    labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t col = 0; col < m; ++col) {
            x_cond(r, col) = rng.uniform(-1, 1);
            s += x_cond(r, col);
        }
        x_cond(r, m + rng.below(c)) = 1.0;
        labels[r] = s > 0 ? 1 : 0;
    }
}

} // namespace

TEST_CASE("fgsm closed forms") {
    // logit = sum(x) + 0; label 0 makes the loss gradient positive in x
    const auto net = fixed_surrogate({1.0, 1.0, 1.0, 0.5}, 0.0); // m=3, C=1
    const std::vector<double> x{0.2, -0.1, 0.4};
    const std::vector<double> cond{1.0};
    SUBCASE("epsilon zero is the identity") {
        const auto adv = robustness::fgsm(net, x, cond, 0, 0.0);
        CHECK(adv == x);
    }
    SUBCASE("uniformly positive gradient saturates the sign step") {
        const auto adv = robustness::fgsm(net, x, cond, 0, 0.1);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(adv[i] == doctest::Approx(x[i] + 0.1).epsilon(1e-12));
    }
    SUBCASE("flipping the label flips the step direction") {
        const auto adv = robustness::fgsm(net, x, cond, 1, 0.1);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(adv[i] == doctest::Approx(x[i] - 0.1).epsilon(1e-12));
    }
    SUBCASE("zero gradient keeps the coordinate fixed") {
        const auto zero_net = fixed_surrogate({0.0, 1.0, 1.0, 0.0}, 0.0);
        const auto adv = robustness::fgsm(zero_net, x, cond, 0, 0.1);
        CHECK(adv[0] == x[0]); // sign(0) = 0
    }
}

TEST_CASE("fgsm perturbation never exceeds epsilon in the max norm") {
    Rng rng(5);
    Matrix x_cond;
    std::vector<int> labels;
    separable_data(40, 6, 6, x_cond, labels);
    const auto net = robustness::train_surrogate(x_cond, labels, 1.0, 7);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> x(6), cond{0.0, 0.0};
        for (auto& v : x) v = rng.uniform(-1, 1);
        cond[rng.below(2)] = 1.0;
        const double eps = rng.uniform(0.0, 0.3);
        const auto adv = robustness::fgsm(net, x, cond, int(rng.below(2)), eps);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(adv[i] - x[i]) <= eps + 1e-12);
    }
}

TEST_CASE("clipping keeps attacked features inside declared bounds") {
    const auto net = fixed_surrogate({1.0, 1.0, 1.0}, 0.0); // m=2, C=1
    const std::vector<double> x{0.95, -0.95};
    const std::vector<double> lo{-1.0, -1.0};
    const std::vector<double> hi{1.0, 1.0};
    const auto adv = robustness::fgsm(net, x, {1.0}, 0, 0.2, lo, hi);
    CHECK(adv[0] <= 1.0);
    CHECK(adv[1] >= -1.0);
}

TEST_CASE("surrogate learns a separable rule better than chance") {
    Matrix x_cond;
    std::vector<int> labels;
    separable_data(300, 5, 11, x_cond, labels);
    const auto net = robustness::train_surrogate(x_cond, labels, 1.0, 12);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < x_cond.rows; ++r) {
        Matrix row(1, x_cond.cols);
        for (std::size_t c = 0; c < x_cond.cols; ++c) row(0, c) = x_cond(r, c);
        const auto out = neural::forward(net, row);
        const int pred = out(0, 0) >= 0.0 ? 1 : 0;
        correct += pred == labels[r];
    }
    CHECK(double(correct) / double(x_cond.rows) > 0.8);
}

TEST_CASE("surrogate training is deterministic and validates inputs") {
    Matrix x_cond;
    std::vector<int> labels;
    separable_data(60, 4, 13, x_cond, labels);
    const auto a = robustness::train_surrogate(x_cond, labels, 0.5, 14);
    const auto b = robustness::train_surrogate(x_cond, labels, 0.5, 14);
    CHECK(neural::network_to_json(a) == neural::network_to_json(b));
    CHECK_THROWS_AS(robustness::train_surrogate(x_cond, labels, 0.0, 1), std::invalid_argument);
    Matrix empty;
    CHECK_THROWS_AS(robustness::train_surrogate(empty, {}, 1.0, 1), std::invalid_argument);
}

TEST_CASE("resilience evaluation: zero epsilon is exactly the clean run") {
    Matrix x_cond;
    std::vector<int> labels;
    separable_data(120, 5, 17, x_cond, labels);
    const auto surrogate = robustness::train_surrogate(x_cond, labels, 1.0, 18);

    Matrix x(120, 5);
    std::vector<int> cont(120);
    std::vector<std::string> topo(120, "t0");
    for (std::size_t r = 0; r < 120; ++r) {
        for (std::size_t c = 0; c < 5; ++c) x(r, c) = x_cond(r, c);
        cont[r] = x_cond(r, 5) == 1.0 ? 0 : 1;
    }
    robustness::ModelUnderTest model;
    model.probability = [&](const std::vector<double>& row, int c) {
        Matrix in(1, 7);
        for (std::size_t i = 0; i < 5; ++i) in(0, i) = row[i];
        in(0, 5 + std::size_t(c)) = 1.0;
        const auto out = neural::forward(surrogate, in);
        return 1.0 / (1.0 + std::exp(-out(0, 0)));
    };
    robustness::AttackConfig cfg;
    cfg.epsilon = 0.0;
    const auto rep = robustness::evaluate_resilience(model, surrogate, x, cont, labels, topo, cfg);
    CHECK(rep.attacked_f2 == rep.clean_f2);
    for (char f : rep.flipped) CHECK(f == 0);
    CHECK(rep.mean_loss_increase == 0.0);

    // small epsilon self-attack raises the surrogate's own loss on average
    cfg.epsilon = 0.05;
    const auto rep2 = robustness::evaluate_resilience(model, surrogate, x, cont, labels, topo, cfg);
    CHECK(rep2.mean_loss_increase >= 0.0);
    CHECK(rep2.attacked_f2 <= rep2.clean_f2 + 1e-12);
}

TEST_CASE("attack generation leaves labels untouched by construction") {
    Matrix x_cond;
    std::vector<int> labels;
    separable_data(30, 4, 19, x_cond, labels);
    const auto surrogate = robustness::train_surrogate(x_cond, labels, 1.0, 20);
    Matrix x(30, 4);
    std::vector<int> cont(30, 0);
    for (std::size_t r = 0; r < 30; ++r)
        for (std::size_t c = 0; c < 4; ++c) x(r, c) = x_cond(r, c);
    const auto before = labels;
    robustness::AttackConfig cfg;
    cfg.epsilon = 0.1;
    const auto attacked = robustness::attack_dataset(surrogate, x, cont, labels, 2, cfg);
    CHECK(labels == before);
    CHECK(attacked.rows == x.rows);
    for (std::size_t i = 0; i < x.a.size(); ++i) CHECK(std::abs(attacked.a[i] - x.a[i]) <= 0.1 + 1e-12);
}
