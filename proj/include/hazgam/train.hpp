#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hazgam/flatfile.hpp"
#include "hazgam/gamnet.hpp"
#include "hazgam/hazweight.hpp"

namespace hazgam {

enum class LossMode { mse, hazbin };

std::string to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);

struct TrainConfig {
    LossMode loss_mode = LossMode::hazbin;
    double alpha = 0.25;
    std::size_t batch_size = 256;
    double learning_rate = 1e-3;
    double l2 = 1e-6;
    std::size_t max_epochs = 200;
    std::size_t patience = 30;  // epochs without validation improvement
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool init_bias_from_data = true;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    bool early_stopped = false;
    bool diverged = false;
};

// Inputs, targets (27 x N) and bins of one data split.
struct TrainingData {
    std::vector<ModelInput> inputs;
    Eigen::MatrixXd targets;
    std::vector<BinIndex> bins;

    std::size_t size() const { return inputs.size(); }
};

TrainingData make_training_data(const RecordSet& rs, const BinGrid& grid = {},
                                const Z1Relation& z1 = default_z1_relation());

struct TrainedModel {
    NetworkParams params;
    TrainConfig config;
    TrainHistory history;
    std::optional<HazardCoeffs> hazard;
    BinGrid grid;
};

// Frozen hazard component plus grid; everything train() needs to weight a batch.
struct WeightingContext {
    BinGrid grid;
    std::vector<double> H;  // from hazard_component, fixed for the whole run
};

WeightingContext make_weighting(const HazardCoeffs& c, const BinGrid& grid = {});

/// Per-record weights for a batch under the given mode (all ones for mse).
std::vector<double> record_weights(LossMode mode, double alpha, std::span<const BinIndex> bins,
                                   const WeightingContext& ctx);

/// Mini-batch Adam with post-step monotonic projection and early stopping on
/// the validation loss. The returned parameters are those of the best
/// validation epoch. Deterministic for a given config seed.
TrainedModel train(NetworkParams init, const TrainingData& train_set, const TrainingData& val_set,
                   const TrainConfig& cfg, const WeightingContext& ctx);

/// Validation objective: the configured loss over the whole set, weights from
/// the set's own bin counts, no ridge term.
double evaluation_loss(const NetworkParams& p, const TrainingData& data, const TrainConfig& cfg,
                       const WeightingContext& ctx);

Eigen::MatrixXd predict_batch(const NetworkParams& p, std::span<const ModelInput> xs);

// Seeded random search over training hyperparameters and pathway width.
struct SearchSpace {
    std::vector<double> learning_rate{3e-4, 3e-3};  // log-uniform [lo, hi]
    std::vector<double> l2{1e-7, 1e-4};             // log-uniform [lo, hi]
    std::vector<std::size_t> batch_sizes{128, 256};
    std::vector<int> widths{8, 16};
    std::vector<int> depths{2};
    std::vector<double> alphas{0.25};

    void validate() const;
};

struct Trial {
    std::size_t index = 0;
    TrainConfig config;
    int width = 0;
    int depth = 0;
    double val_loss = 0.0;
    std::size_t epochs_run = 0;
};

struct SearchResult {
    TrainConfig best_config;
    int best_width = 0;
    int best_depth = 0;
    double best_val_loss = 0.0;
    std::size_t best_trial = 0;
    std::vector<Trial> trials;
};

SearchResult hyperparameter_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                                   const TrainConfig& base, const TrainingData& train_set,
                                   const TrainingData& val_set, const WeightingContext& ctx);

}  // namespace hazgam
