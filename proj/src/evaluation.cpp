#include "hazgam/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace hazgam {

MetricRow metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, std::string label) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw ShapeError("metrics: prediction and target shapes differ");
    }
    if (pred.rows() != static_cast<Eigen::Index>(kNumChannels)) {
        throw ShapeError("metrics: expected 27 rows (one column per record)");
    }
    if (pred.cols() < 2) throw ShapeError("metrics: need at least two records");
    MetricRow row;
    row.label = std::move(label);
    row.n_records = static_cast<std::size_t>(pred.cols());
    const double n = static_cast<double>(pred.size());
    const Eigen::ArrayXXd r = (pred - target).array();
    const double ss_res = r.square().sum();
    row.mse = ss_res / n;
    row.mae = r.abs().sum() / n;
    const double mean = target.mean();
    const double ss_tot = (target.array() - mean).square().sum();
    if (ss_tot <= 0.0) {
        row.r2_undefined = true;
        row.r2 = std::nan("");
    } else {
        row.r2 = 100.0 * (1.0 - ss_res / ss_tot);
    }
    return row;
}

std::vector<SubsetFilter> canonical_filters() {
    return {
        {"mw>=7;rrup<=50", [](double mw, double rrup) { return mw >= 7.0 && rrup <= 50.0; }},
        {"mw>=7.8;rrup<=20", [](double mw, double rrup) { return mw >= 7.8 && rrup <= 20.0; }},
        {"mw>=7.8;rrup>=100", [](double mw, double rrup) { return mw >= 7.8 && rrup >= 100.0; }},
    };
}

MetricRow subset_metrics(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                         std::span<const ModelInput> inputs, const SubsetFilter& filter) {
    if (static_cast<Eigen::Index>(inputs.size()) != pred.cols()) {
        throw ShapeError("subset_metrics: inputs do not match prediction columns");
    }
    std::vector<Eigen::Index> keep;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (filter.keep(inputs[k].mw, inputs[k].rrup)) keep.push_back(static_cast<Eigen::Index>(k));
    }
    if (keep.size() < 2) {
        MetricRow row;
        row.label = filter.label;
        row.n_records = keep.size();
        row.empty = true;
        row.mse = row.mae = row.r2 = std::nan("");
        return row;
    }
    return metrics(pred(Eigen::all, keep), target(Eigen::all, keep), filter.label);
}

ModelEvaluation evaluate_model(const std::string& label, const NetworkParams& p, const TrainingData& test,
                               const TrainingData& full, const std::vector<SubsetFilter>& filters) {
    ModelEvaluation ev;
    ev.model = label;
    ev.test = metrics(predict_batch(p, test.inputs), test.targets, "test");
    const Eigen::MatrixXd full_pred = predict_batch(p, full.inputs);
    for (const auto& f : filters) ev.subsets.push_back(subset_metrics(full_pred, full.targets, full.inputs, f));
    return ev;
}

namespace {

void metric_line(std::ostringstream& os, const std::string& model, const MetricRow& r) {
    os << csv_quote(model) << ',' << csv_quote(r.label) << ',' << format_double(r.mse) << ','
       << format_double(r.mae) << ',' << format_double(r.r2) << ',' << r.n_records << '\n';
}

}  // namespace

std::string evaluation_table_csv(std::span<const ModelEvaluation> rows) {
    std::ostringstream os;
    os << "model,subset,mse,mae,r2_pct,n_records\n";
    for (const auto& ev : rows) {
        metric_line(os, ev.model, ev.test);
        for (const auto& s : ev.subsets) metric_line(os, ev.model, s);
    }
    return os.str();
}

std::string record_set_hash(const RecordSet& rs) {
    const std::string text = write_flatfile(rs);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RecordSet remove_records(const RecordSet& rs, const MwRrupFilter& remove, std::size_t* removed) {
    RecordSet out;
    out.provenance = rs.provenance;
    std::size_t n = 0;
    for (const auto& r : rs.records) {
        if (remove(r.mw, r.rrup)) {
            ++n;
        } else {
            out.records.push_back(r);
        }
    }
    if (removed) *removed = n;
    return out;
}

AblationResult ablation_run(const Split& split, const RecordSet& full, const HazardCoeffs& frozen,
                            const AblationConfig& cfg) {
    AblationResult res;
    res.hazard = frozen;
    res.test_hash_before = record_set_hash(split.test);
    const RecordSet tr = remove_records(split.train, cfg.remove, &res.removed_train);
    const RecordSet va = remove_records(split.val, cfg.remove, &res.removed_val);
    if (tr.empty()) throw DomainError("ablation removed every training record");

    const TrainingData train_data = make_training_data(tr, cfg.grid);
    const TrainingData val_data = make_training_data(va, cfg.grid);
    const TrainingData test_data = make_training_data(split.test, cfg.grid);
    const TrainingData full_data = make_training_data(full, cfg.grid);
    const WeightingContext ctx = make_weighting(frozen, cfg.grid);
    const NetworkParams init = init_network(cfg.architecture, cfg.init_seed);

    auto run = [&](const std::string& label, TrainConfig tc) {
        TrainedModel m = train(init, train_data, val_data, tc, ctx);
        res.table.push_back(evaluate_model(label, m.params, test_data, full_data));
    };
    if (cfg.include_mse) {
        TrainConfig tc = cfg.base;
        tc.loss_mode = LossMode::mse;
        run("mse", tc);
    }
    for (double a : cfg.alphas) {
        TrainConfig tc = cfg.base;
        tc.loss_mode = LossMode::hazbin;
        tc.alpha = a;
        run("hazbin_alpha=" + format_double(a), tc);
    }
    res.test_hash_after = record_set_hash(split.test);
    return res;
}

}  // namespace hazgam
