#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hazgam/flatfile.hpp"
#include "hazgam/gamnet.hpp"

namespace hazgam {

// Physical input features. Derived model inputs follow their sources:
// mw drives mw and mw_lnr, rrup drives rrup, ln_rrup and mw_lnr.
enum class Feature { mw, rrup, vs30, ztor, z1, fault_flag, region_flag };
inline constexpr std::size_t kNumFeatures = 7;
inline constexpr std::array<Feature, kNumFeatures> kAllFeatures = {
    Feature::mw, Feature::rrup, Feature::vs30, Feature::ztor,
    Feature::z1, Feature::fault_flag, Feature::region_flag};

std::string to_string(Feature f);

struct RawFeatures {
    double mw = 0.0;
    double rrup = 0.0;
    double vs30 = 0.0;
    double ztor = 0.0;
    double z1 = 0.0;  // m; imputed when the record has none
    int fault_flag = 0;
    int region_flag = 1;

    double get(Feature f) const;
    void set_from(Feature f, const RawFeatures& src);
};

RawFeatures raw_features(const Record& r, const Z1Relation& z1 = default_z1_relation());
std::vector<RawFeatures> raw_features(std::span<const Record> records,
                                      const Z1Relation& z1 = default_z1_relation());
ModelInput derive_input(const RawFeatures& f);

/// Raw features each pathway reads, including features reaching it through
/// injected activations.
std::vector<Feature> pathway_features(const NetworkParams& p, std::size_t pathway);

/// PGA, PSA(0.1 s), PSA(1.0 s).
std::vector<std::size_t> default_attribution_channels();

// Mean |value| per row label and channel.
struct AttributionTable {
    std::vector<std::string> labels;
    std::vector<std::size_t> channels;
    Eigen::MatrixXd values;  // labels x channels
    std::size_t n_records = 0;

    double at(const std::string& label, std::size_t channel) const;
};

/// Mean over records of |pathway output|, one row per pathway plus "bias"
/// (reported as |b|).
AttributionTable pathway_contribution_summary(const NetworkParams& p, std::span<const ModelInput> xs,
                                              std::span<const std::size_t> channels);

/// As above but each pathway is centred on its background mean first; the
/// bias row is then zero.
AttributionTable centered_pathway_summary(const NetworkParams& p, std::span<const ModelInput> xs,
                                          std::span<const ModelInput> background,
                                          std::span<const std::size_t> channels);

struct ShapleyOptions {
    std::size_t permutations = 200;
    std::uint64_t seed = 0;
};

struct ShapleyResult {
    std::vector<std::size_t> channels;
    // Per record: kNumFeatures x channels Shapley estimates.
    std::vector<Eigen::MatrixXd> phi;
    // Per record and channel: f(x), background mean of f, and the mean and
    // standard deviation of f over the sampled background draws.
    Eigen::MatrixXd fx;             // records x channels
    double background_size = 0.0;
    Eigen::VectorXd background_mean;  // channels
    Eigen::MatrixXd sampled_mean;   // records x channels
    Eigen::MatrixXd sampled_sd;     // records x channels
    std::size_t permutations = 0;

    /// Mean |phi| per feature and channel.
    AttributionTable summary() const;
};

/// Permutation-sampling Shapley values with absent features replaced by a
/// joint draw from the background set. Each permutation uses one background
/// row; rows are visited in shuffled cycles, so every row is used equally
/// often when `permutations` is a multiple of the background size.
/// Deterministic per seed; record i uses stream mix_seed(seed, i).
ShapleyResult shapley_sample(const NetworkParams& p, std::span<const RawFeatures> records,
                             std::span<const RawFeatures> background, std::span<const std::size_t> channels,
                             const ShapleyOptions& opts);

/// Exact interventional Shapley values for one record against the empirical
/// background distribution. Uses additivity: each pathway is a game over its
/// own (at most two) features. Returns kNumFeatures x channels.
Eigen::MatrixXd exact_additive_shapley(const NetworkParams& p, const RawFeatures& x,
                                       std::span<const RawFeatures> background,
                                       std::span<const std::size_t> channels);

/// Mean |exact_additive_shapley| per feature and channel over `records`.
AttributionTable exact_additive_summary(const NetworkParams& p, std::span<const RawFeatures> records,
                                        std::span<const RawFeatures> background,
                                        std::span<const std::size_t> channels);

/// Centred pathway summary redistributed onto features: each pathway's value
/// is split equally among the features it reads. The bias row is dropped.
AttributionTable pathway_feature_summary(const NetworkParams& p, const AttributionTable& centered);

struct AttributionRow {
    std::string feature;
    std::size_t channel = 0;
    double reference = 0.0;  // pathway side
    double shap = 0.0;
    double ratio = 0.0;      // shap / reference; 1 when both are zero
    double abs_gap = 0.0;
};

struct AttributionReport {
    std::vector<AttributionRow> rows;
    std::string background;  // descriptor
    std::size_t n_records = 0;
    std::size_t permutations = 0;
};

/// Aligns two feature-level tables on their shared labels and channels.
/// Throws DomainError when no label or no channel is shared.
AttributionReport compare_attributions(const AttributionTable& reference, const AttributionTable& shap);

}  // namespace hazgam
