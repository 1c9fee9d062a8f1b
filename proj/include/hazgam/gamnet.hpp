#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hazgam/common.hpp"
#include "hazgam/flatfile.hpp"

namespace hazgam {

enum class InputField { mw, ln_rrup, rrup, ln_vs30, ztor, ln_z1, mw_lnr, fault_flag, region_flag };
enum class Monotone { none, increasing, decreasing };

std::string to_string(InputField f);
std::string to_string(Monotone m);
InputField input_field_from_string(const std::string& s);
Monotone monotone_from_string(const std::string& s);

double input_value(const ModelInput& x, InputField f);

// One additive sub-network. Continuous pathways standardise their scalar
// input with (x - input_center) / input_scale; categorical pathways one-hot
// encode flags 0..arity-1 (fault) or 1..arity (region).
struct PathwaySpec {
    std::string name;
    InputField input = InputField::mw;
    std::vector<int> hidden{16, 16};
    Monotone monotone = Monotone::none;
    int categorical_arity = 0;
    double input_center = 0.0;
    double input_scale = 1.0;
    // Name of the pathway whose first hidden activations are appended to the
    // input of this pathway's second layer (empty when none).
    std::string inject_from;

    bool operator==(const PathwaySpec&) const = default;
};

/// The nine-pathway layout: mag, mag_fm, geo, anelas, linsite, depth, basin,
/// mag_geo, region. `width` and `depth` set the hidden layers of every MLP
/// pathway; region stays a lookup table.
std::vector<PathwaySpec> default_architecture(int width = 16, int depth = 2);

struct DenseLayer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;  // out
};

struct PathwayParams {
    PathwaySpec spec;
    std::vector<DenseLayer> layers;
};

struct NetworkParams {
    std::vector<PathwayParams> pathways;
    Eigen::VectorXd bias;  // 27
    std::uint64_t rng_seed = 0;

    std::size_t parameter_count() const;
    double squared_norm() const;
    std::optional<std::size_t> find(const std::string& name) const;
    std::vector<std::string> pathway_names() const;
};

/// Throws ConfigError on duplicate names, unknown injection sources or
/// inconsistent arities.
void validate_architecture(const std::vector<PathwaySpec>& arch);

NetworkParams init_network(const std::vector<PathwaySpec>& arch, std::uint64_t seed);

/// Same structure as `p` with every tensor zeroed.
NetworkParams zeros_like(const NetworkParams& p);

// Visits matching tensors of two identically shaped networks.
template <class F>
void for_each_tensor(NetworkParams& a, const NetworkParams& b, F&& f) {
    for (std::size_t i = 0; i < a.pathways.size(); ++i) {
        for (std::size_t l = 0; l < a.pathways[i].layers.size(); ++l) {
            f(a.pathways[i].layers[l].W, b.pathways[i].layers[l].W);
            f(a.pathways[i].layers[l].b, b.pathways[i].layers[l].b);
        }
    }
    f(a.bias, b.bias);
}

template <class F>
void for_each_tensor(NetworkParams& a, F&& f) {
    for (auto& pw : a.pathways) {
        for (auto& layer : pw.layers) {
            f(layer.W);
            f(layer.b);
        }
    }
    f(a.bias);
}

std::vector<double> flatten(const NetworkParams& p);
void unflatten(NetworkParams& p, std::span<const double> values);

// Additive decomposition of one prediction.
struct PathwayContributions {
    std::vector<std::string> names;
    std::vector<Spectrum> pathway;
    Spectrum bias{};
    Spectrum total{};

    const Spectrum& operator[](const std::string& name) const;
};

// Batch forward result; matrices are 27 x N.
struct BatchOutput {
    std::vector<Eigen::MatrixXd> pathway;
    Eigen::MatrixXd total;
};

/// Forward pass over a batch. Throws DomainError for out-of-range flags and
/// NumericError naming the pathway that produced a non-finite value.
BatchOutput forward_batch(const NetworkParams& p, std::span<const ModelInput> xs);

PathwayContributions forward(const NetworkParams& p, const ModelInput& x);

/// Evaluates a single pathway on a batch of inputs (27 x N). Injected
/// features are recomputed from the source pathway.
Eigen::MatrixXd pathway_output(const NetworkParams& p, std::size_t pathway,
                               std::span<const ModelInput> xs);

struct LossAndGradient {
    double loss = 0.0;
    NetworkParams gradient;
};

/// Weighted loss (see hazbin_loss) and its exact reverse-mode gradient.
/// targets is 27 x N, weights has N entries.
LossAndGradient loss_and_gradients(const NetworkParams& p, std::span<const ModelInput> xs,
                                   const Eigen::MatrixXd& targets, std::span<const double> weights,
                                   double l2);

double loss_only(const NetworkParams& p, std::span<const ModelInput> xs,
                 const Eigen::MatrixXd& targets, std::span<const double> weights, double l2);

/// Clamps monotone pathways onto the sign-feasible set: first-layer weights
/// >= 0 (increasing) or <= 0 (decreasing), all later weights >= 0. tanh
/// keeps each 27-channel output monotone in the pathway input. Idempotent.
void apply_monotonic_projection(NetworkParams& p);
NetworkParams projected(NetworkParams p);

bool satisfies_monotone_constraints(const NetworkParams& p);

/// Prediction plus its decomposition; alias of forward.
PathwayContributions predict_spectrum(const NetworkParams& p, const ModelInput& scenario);

}  // namespace hazgam
