#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsa/datagen.hpp"
#include "dsa/neural.hpp"

namespace dsa::ssmtl {

using linalg::Matrix;

// Prediction-time feature width differs from the training-time width; the
// caller should route the new topology through the similarity gate.
struct TopologyMismatch : std::runtime_error {
    explicit TopologyMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct SsMtlModel {
    neural::Network encoder;    // (m + C) -> latent
    neural::Network decoder;    // (latent + C) -> m
    neural::Network classifier; // latent -> 1 logit; probability applied outside
    std::size_t latent_dim = 16;
    std::size_t feature_dim = 0;     // m
    std::size_t contingency_count = 0;
    double mask_rate = 0.15;
    double threshold = 0.5;
    std::vector<std::string> contingency_vocab;
    datagen::FeatureLayout layout;
};

struct Stage {
    double alpha = 1.0;
    double beta = 0.0;
    std::size_t min_epochs = 1;
};

struct LossSchedule {
    std::vector<Stage> stages;
    static LossSchedule standard(); // (1,0) warmup>=2 epochs -> (0.5,0.5) -> (0.75,0.25)
};

struct TrainingConfig {
    std::size_t batch_size = 32;
    std::size_t max_epochs_per_stage = 60;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
    double convergence_tol = 1e-4;  // relative improvement over the window
    std::size_t convergence_window = 5;
    bool use_unlabeled = true;
};

struct ModelArch {
    std::vector<std::size_t> encoder_hidden{64};
    std::vector<std::size_t> decoder_hidden{64};
    std::vector<std::size_t> classifier_hidden{16};
    std::size_t latent_dim = 16;
    double mask_rate = 0.15;
    double dropout = 0.1;
};

SsMtlModel build_model(std::size_t feature_dim, std::size_t contingency_count,
                       const ModelArch& arch, Rng& rng);

// Length-C one-hot condition vector; throws on an out-of-range index.
std::vector<double> make_condition(int contingency_index, std::size_t contingency_count);

// Training view of a database: normalized features plus per-sample condition,
// label (-1 when unlabeled) and topology.
struct Dataset {
    Matrix x;                          // N x m
    std::vector<int> contingency;      // per sample
    std::vector<int> label;            // -1 unlabeled
    std::vector<std::string> topology; // batch grouping key
};

// Mean squared reconstruction error through the masked conditional
// autoencoder; mask_rate = 0 reproduces the plain conditional form.
double reconstruction_loss(const SsMtlModel& model, const Matrix& x,
                           const std::vector<int>& contingency, std::uint64_t mask_seed);

// Mean binary cross-entropy of the latent classifier; every sample must be
// labeled.
double classification_loss(const SsMtlModel& model, const Matrix& x,
                           const std::vector<int>& contingency, const std::vector<int>& label);

// alpha * L_recon + beta * L_class; unlabeled samples contribute only to the
// reconstruction term.
double joint_loss(const SsMtlModel& model, const Matrix& x, const std::vector<int>& contingency,
                  const std::vector<int>& label, double alpha, double beta,
                  std::uint64_t mask_seed);

struct EpochLog {
    std::size_t epoch = 0;      // global epoch counter
    std::size_t stage = 0;      // 1-based stage index
    double alpha = 0.0;
    double beta = 0.0;
    double l_recon = 0.0;
    double l_class = 0.0;       // NaN in stages where beta == 0
    double l_joint = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::vector<std::size_t> stage_boundaries; // first global epoch of each stage
    // per-batch topology ids in processing order, for auditing the
    // one-topology-per-batch rule
    std::vector<std::string> batch_topologies;
};

// Staged joint training per the loss schedule. Batches are always drawn from
// a single topology. Throws on an empty train set or non-finite loss.
TrainResult train(SsMtlModel& model, const Dataset& train_set, const TrainingConfig& cfg,
                  const LossSchedule& schedule);

struct Prediction {
    int label = 0;
    double probability = 0.0;
};

// Inference with masking and dropout disabled. Throws TopologyMismatch when
// the feature width differs from the training-time m.
Prediction predict(const SsMtlModel& model, const std::vector<double>& x, int contingency_index);
std::vector<Prediction> predict_batch(const SsMtlModel& model, const Matrix& x,
                                      const std::vector<int>& contingency);

std::string model_to_json(const SsMtlModel& model);
SsMtlModel model_from_json(const std::string& text);

void write_training_log_csv(const TrainResult& result, const std::string& path,
                            const std::string& header_comment);

} // namespace dsa::ssmtl
