#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hazgam/flatfile.hpp"
#include "hazgam/gamnet.hpp"
#include "hazgam/hazweight.hpp"
#include "hazgam/train.hpp"

namespace hazgam {

struct MetricRow {
    std::string label;
    double mse = 0.0;
    double mae = 0.0;
    double r2 = 0.0;  // percent
    std::size_t n_records = 0;
    bool r2_undefined = false;  // zero target variance
    bool empty = false;         // fewer than two matching records
};

/// Pooled metrics over all channels. pred and target are 27 x N (one column
/// per record). Throws ShapeError on mismatch or N < 2.
MetricRow metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, std::string label = {});

using MwRrupFilter = std::function<bool(double mw, double rrup)>;

struct SubsetFilter {
    std::string label;
    MwRrupFilter keep;
};

/// (mw >= 7, rrup <= 50), (mw >= 7.8, rrup <= 20), (mw >= 7.8, rrup >= 100).
std::vector<SubsetFilter> canonical_filters();

/// Metrics over the records passing `filter`; the row is flagged empty when
/// fewer than two records match.
MetricRow subset_metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                         std::span<const ModelInput> inputs, const SubsetFilter& filter);

// One model's row group: held-out metrics plus subset metrics over the full
// screened set.
struct ModelEvaluation {
    std::string model;
    MetricRow test;
    std::vector<MetricRow> subsets;
};

ModelEvaluation evaluate_model(const std::string& label, const NetworkParams& p, const TrainingData& test,
                               const TrainingData& full,
                               const std::vector<SubsetFilter>& filters = canonical_filters());

/// CSV body rows "model,subset,mse,mae,r2,n_records" (header included).
std::string evaluation_table_csv(std::span<const ModelEvaluation> rows);

/// FNV-1a of the canonical flatfile serialisation.
std::string record_set_hash(const RecordSet& rs);

struct AblationConfig {
    MwRrupFilter remove = [](double mw, double rrup) { return mw >= 6.0 && rrup <= 100.0; };
    std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
    bool include_mse = true;
    TrainConfig base;
    std::vector<PathwaySpec> architecture = default_architecture();
    std::uint64_t init_seed = 0;
    BinGrid grid;
};

struct AblationResult {
    std::vector<ModelEvaluation> table;
    HazardCoeffs hazard;  // frozen, from the pre-ablation fit
    std::size_t removed_train = 0;
    std::size_t removed_val = 0;
    std::string test_hash_before;
    std::string test_hash_after;
};

/// Removes matching records from train and val (test untouched), then
/// retrains each configured model with the frozen hazard component. Throws
/// DomainError if no training records remain.
AblationResult ablation_run(const Split& split, const RecordSet& full, const HazardCoeffs& frozen,
                            const AblationConfig& cfg);

RecordSet remove_records(const RecordSet& rs, const MwRrupFilter& remove, std::size_t* removed = nullptr);

}  // namespace hazgam
