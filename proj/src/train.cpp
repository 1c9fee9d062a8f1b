#include "hazgam/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace hazgam {

std::string to_string(LossMode m) { return m == LossMode::mse ? "mse" : "hazbin"; }

LossMode loss_mode_from_string(const std::string& s) {
    if (s == "mse") return LossMode::mse;
    if (s == "hazbin") return LossMode::hazbin;
    throw ConfigError("unknown loss mode '" + s + "' (expected mse or hazbin)");
}

void TrainConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("train: alpha must lie in [0, 1]");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (!(learning_rate > 0)) throw ConfigError("train: learning_rate must be positive");
    if (!(l2 >= 0)) throw ConfigError("train: l2 must be non-negative");
    if (max_epochs == 0) throw ConfigError("train: max_epochs must be positive");
    if (patience == 0) throw ConfigError("train: patience must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0)) {
        throw ConfigError("train: invalid Adam hyperparameters");
    }
}

TrainingData make_training_data(const RecordSet& rs, const BinGrid& grid, const Z1Relation& z1) {
    TrainingData d;
    d.inputs = make_inputs(rs.records, z1);
    d.targets.resize(static_cast<Eigen::Index>(kNumChannels), static_cast<Eigen::Index>(rs.size()));
    d.bins.reserve(rs.size());
    for (std::size_t k = 0; k < rs.size(); ++k) {
        const auto& r = rs.records[k];
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            d.targets(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = r.targets[c];
        }
        d.bins.push_back(assign_bin(r.mw, r.rrup, grid));
    }
    return d;
}

WeightingContext make_weighting(const HazardCoeffs& c, const BinGrid& grid) {
    return WeightingContext{grid, hazard_component(c, grid)};
}

std::vector<double> record_weights(LossMode mode, double alpha, std::span<const BinIndex> bins,
                                   const WeightingContext& ctx) {
    if (mode == LossMode::mse) return std::vector<double>(bins.size(), 1.0);
    return batch_record_weights(bins, ctx.grid, ctx.H, alpha);
}

double evaluation_loss(const NetworkParams& p, const TrainingData& data, const TrainConfig& cfg,
                       const WeightingContext& ctx) {
    const auto w = record_weights(cfg.loss_mode, cfg.alpha, data.bins, ctx);
    return loss_only(p, data.inputs, data.targets, w, 0.0);
}

Eigen::MatrixXd predict_batch(const NetworkParams& p, std::span<const ModelInput> xs) {
    if (xs.empty()) return Eigen::MatrixXd(static_cast<Eigen::Index>(kNumChannels), 0);
    return forward_batch(p, xs).total;
}

namespace {

struct AdamState {
    NetworkParams m;
    NetworkParams v;
    std::size_t step = 0;
};

void adam_step(NetworkParams& p, const NetworkParams& g, AdamState& s, const TrainConfig& cfg) {
    ++s.step;
    const double t = static_cast<double>(s.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const double b1 = cfg.beta1;
    const double b2 = cfg.beta2;
    for_each_tensor(s.m, g, [&](auto& m, const auto& gt) { m = b1 * m + (1.0 - b1) * gt; });
    for_each_tensor(s.v, g, [&](auto& v, const auto& gt) {
        v = b2 * v + (1.0 - b2) * gt.cwiseProduct(gt);
    });
    // p -= lr * m_hat / (sqrt(v_hat) + eps), visiting the three structures in lockstep.
    std::vector<double> flat_p = flatten(p);
    const std::vector<double> flat_m = flatten(s.m);
    const std::vector<double> flat_v = flatten(s.v);
    for (std::size_t i = 0; i < flat_p.size(); ++i) {
        const double mh = flat_m[i] / c1;
        const double vh = flat_v[i] / c2;
        flat_p[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps);
    }
    unflatten(p, flat_p);
}

}  // namespace

TrainedModel train(NetworkParams init, const TrainingData& train_set, const TrainingData& val_set,
                   const TrainConfig& cfg, const WeightingContext& ctx) {
    cfg.validate();
    if (train_set.size() == 0) throw DomainError("train: empty training set");
    if (ctx.H.size() != ctx.grid.size()) throw ShapeError("train: hazard component/grid mismatch");

    NetworkParams params = std::move(init);
    if (cfg.init_bias_from_data) params.bias = train_set.targets.rowwise().mean();
    apply_monotonic_projection(params);

    AdamState adam{zeros_like(params), zeros_like(params), 0};
    const bool have_val = val_set.size() > 0;

    TrainedModel out;
    out.config = cfg;
    out.grid = ctx.grid;
    NetworkParams best = params;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train_set.size());
    std::vector<ModelInput> xb;
    std::vector<BinIndex> bb;
    Eigen::MatrixXd yb;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(mix_seed(cfg.seed, 0xE90C0000ULL + epoch));
        shuffle_in_place(order, rng);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        bool diverged = false;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::size_t nb = end - start;
            xb.resize(nb);
            bb.resize(nb);
            yb.resize(static_cast<Eigen::Index>(kNumChannels), static_cast<Eigen::Index>(nb));
            for (std::size_t k = 0; k < nb; ++k) {
                const std::size_t idx = order[start + k];
                xb[k] = train_set.inputs[idx];
                bb[k] = train_set.bins[idx];
                yb.col(static_cast<Eigen::Index>(k)) =
                    train_set.targets.col(static_cast<Eigen::Index>(idx));
            }
            const auto w = record_weights(cfg.loss_mode, cfg.alpha, bb, ctx);
            LossAndGradient lg;
            try {
                lg = loss_and_gradients(params, xb, yb, w, cfg.l2);
            } catch (const NumericError&) {
                diverged = true;
                break;
            }
            adam_step(params, lg.gradient, adam, cfg);
            apply_monotonic_projection(params);
            loss_sum += lg.loss;
            ++batches;
        }

        double val_loss = std::numeric_limits<double>::quiet_NaN();
        if (!diverged) {
            try {
                val_loss = have_val ? evaluation_loss(params, val_set, cfg, ctx)
                                    : evaluation_loss(params, train_set, cfg, ctx);
            } catch (const NumericError&) {
                diverged = true;
            }
        }
        if (diverged || !std::isfinite(val_loss)) {
            out.history.diverged = true;
            break;
        }
        out.history.epochs.push_back(
            {epoch, loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)), val_loss});
        if (val_loss < best_loss) {
            best_loss = val_loss;
            best = params;
            out.history.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            out.history.early_stopped = true;
            break;
        }
    }
    out.history.best_val_loss = best_loss;
    out.params = std::move(best);
    return out;
}

void SearchSpace::validate() const {
    auto range_ok = [](const std::vector<double>& r) {
        return r.size() == 2 && r[0] > 0 && r[1] >= r[0];
    };
    if (!range_ok(learning_rate) || !range_ok(l2) || batch_sizes.empty() || widths.empty() ||
        depths.empty() || alphas.empty()) {
        throw ConfigError("search space is empty or malformed");
    }
}

SearchResult hyperparameter_search(const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                                   const TrainConfig& base, const TrainingData& train_set,
                                   const TrainingData& val_set, const WeightingContext& ctx) {
    space.validate();
    if (budget == 0) throw ConfigError("search budget must be at least 1");
    Rng rng(mix_seed(seed, 0x5EA2C4));
    auto log_uniform = [&](const std::vector<double>& r) {
        return std::exp(std::log(r[0]) + uniform01(rng) * (std::log(r[1]) - std::log(r[0])));
    };

    SearchResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < budget; ++t) {
        Trial trial;
        trial.index = t;
        trial.config = base;
        trial.config.learning_rate = log_uniform(space.learning_rate);
        trial.config.l2 = log_uniform(space.l2);
        trial.config.batch_size = space.batch_sizes[uniform_index(rng, space.batch_sizes.size())];
        trial.config.alpha = space.alphas[uniform_index(rng, space.alphas.size())];
        trial.width = space.widths[uniform_index(rng, space.widths.size())];
        trial.depth = space.depths[uniform_index(rng, space.depths.size())];
        trial.config.seed = mix_seed(seed, t);

        auto net = init_network(default_architecture(trial.width, trial.depth), trial.config.seed);
        auto model = train(std::move(net), train_set, val_set, trial.config, ctx);
        trial.val_loss = model.history.best_val_loss;
        trial.epochs_run = model.history.epochs.size();
        if (trial.val_loss < result.best_val_loss) {
            result.best_val_loss = trial.val_loss;
            result.best_config = trial.config;
            result.best_width = trial.width;
            result.best_depth = trial.depth;
            result.best_trial = t;
        }
        result.trials.push_back(trial);
    }
    if (!std::isfinite(result.best_val_loss)) {
        result.best_config = result.trials.front().config;
        result.best_width = result.trials.front().width;
        result.best_depth = result.trials.front().depth;
    }
    return result;
}

}  // namespace hazgam
