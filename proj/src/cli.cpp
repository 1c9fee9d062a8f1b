#include "hazgam/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "hazgam/attribution.hpp"
#include "hazgam/checkpoint.hpp"
#include "hazgam/evaluation.hpp"
#include "hazgam/flatfile.hpp"
#include "hazgam/gamnet.hpp"
#include "hazgam/hazweight.hpp"
#include "hazgam/mixedfx.hpp"
#include "hazgam/run_config.hpp"
#include "hazgam/synth.hpp"
#include "hazgam/train.hpp"
#include "json_io.hpp"

#ifndef HAZGAM_VERSION
#define HAZGAM_VERSION "0.0.0"
#endif

namespace hazgam {

std::string version() { return HAZGAM_VERSION; }

namespace {

namespace fs = std::filesystem;
using detail::json;

struct CommonOpts {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out;
    std::string model;
    std::string data;
    std::string scenarios;
    std::string grid;
    std::vector<std::string> predictions;
};

class Session {
public:
    Session(RunConfig cfg, std::ostream& err) : cfg_(std::move(cfg)), err_(err) {}

    const RunConfig& cfg() const { return cfg_; }

    void log(const std::string& msg) const {
        err_ << "[hazgam seed=" << cfg_.seed << "] " << msg << '\n';
    }

    std::string path(const std::string& name) const { return (fs::path(cfg_.out) / name).string(); }

    std::string stamp() const { return "# seed=" + std::to_string(cfg_.seed) + " version=" + version() + "\n"; }

    // Writes a CSV whose body starts with the header row.
    void write_csv(const std::string& name, const std::string& body) const {
        write_file_atomic(path(name), stamp() + body);
        log("wrote " + path(name));
    }

    void write_text(const std::string& name, const std::string& body) const {
        write_file_atomic(path(name), body);
        log("wrote " + path(name));
    }

private:
    RunConfig cfg_;
    std::ostream& err_;
};

struct Prepared {
    RecordSet full;
    ScreeningReport report;
    Split split;
};

Prepared prepare(const Session& s) {
    const auto& c = s.cfg();
    RecordSet rs;
    if (c.flatfile.empty()) {
        rs = synth_generate(c.synth, c.stream("synth")).records;
        s.log("synthesised " + std::to_string(rs.size()) + " records");
    } else {
        rs = read_flatfile(c.flatfile);
        s.log("read " + std::to_string(rs.size()) + " records from " + c.flatfile);
    }
    Prepared p;
    if (c.screen) {
        auto sr = screen_records(rs, ScreeningRules{});
        p.full = std::move(sr.records);
        p.report = std::move(sr.report);
        s.log("screening kept " + std::to_string(p.full.size()) + " of " + std::to_string(rs.size()));
    } else {
        p.full = std::move(rs);
        p.report.input_count = p.report.output_count = p.full.size();
    }
    p.split = split_by_event(p.full, c.split, c.stream("split"));
    s.log("split train/val/test records: " + std::to_string(p.split.train.size()) + "/" +
          std::to_string(p.split.val.size()) + "/" + std::to_string(p.split.test.size()));
    return p;
}

std::string hazard_csv(const HazardFit& fit) {
    std::ostringstream os;
    os << "name,value\n";
    for (std::size_t i = 0; i < 7; ++i) os << 'c' << i << ',' << format_double(fit.coeffs[i]) << '\n';
    os << "mse," << format_double(fit.mse) << '\n'
       << "mae," << format_double(fit.mae) << '\n'
       << "r2," << format_double(fit.r2) << '\n'
       << "iterations," << fit.iterations << '\n';
    return os.str();
}

HazardFit fit_and_log(const Session& s, const RecordSet& train_set) {
    HazardFit fit = fit_hazard_gmm(train_set);
    for (const auto& w : fit.warnings) s.log("hazard fit warning: " + w);
    return fit;
}

TrainedModel train_model(const Session& s, const Prepared& p, const HazardCoeffs& hz, const TrainConfig& tc) {
    const auto& c = s.cfg();
    const TrainingData tr = make_training_data(p.split.train, c.grid);
    const TrainingData va = make_training_data(p.split.val, c.grid);
    const WeightingContext ctx = make_weighting(hz, c.grid);
    NetworkParams init = init_network(default_architecture(c.width, c.depth), c.stream("init"));
    TrainedModel m = train(std::move(init), tr, va, tc, ctx);
    m.hazard = hz;
    s.log("trained " + to_string(tc.loss_mode) + " model: " + std::to_string(m.history.epochs.size()) +
          " epochs, best epoch " + std::to_string(m.history.best_epoch) +
          (m.history.diverged ? " (diverged; best stable parameters kept)" : ""));
    return m;
}

std::string history_csv(const TrainHistory& h) {
    std::ostringstream os;
    os << "epoch,train_loss,val_loss\n";
    for (const auto& e : h.epochs) {
        os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << '\n';
    }
    return os.str();
}

TrainedModel load_model(const Session& s, const CommonOpts& o) {
    const std::string path = o.model.empty() ? s.path("model.json") : o.model;
    if (!fs::exists(path)) throw DomainError("model checkpoint not found: " + path);
    s.log("loading model " + path);
    return read_checkpoint(path);
}

// ---- subcommands ----

int cmd_synth(const Session& s) {
    const auto& c = s.cfg();
    const SynthData d = synth_generate(c.synth, c.stream("synth"));
    s.write_csv("flatfile.csv", write_flatfile(d.records));

    std::ostringstream eff;
    eff << "kind,group,channel,value\n";
    for (const auto& [region, spec] : d.truth.region_effect) {
        for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
            eff << "region," << region << ',' << channel_name(ch) << ',' << format_double(spec[ch]) << '\n';
        }
    }
    for (const auto& [event, spec] : d.truth.event_effect) {
        for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
            eff << "event," << csv_quote(event) << ',' << channel_name(ch) << ',' << format_double(spec[ch]) << '\n';
        }
    }
    s.write_csv("truth_effects.csv", eff.str());

    const RealizedSigmas rsig = realized_sigmas(d.truth);
    std::ostringstream sig;
    sig << "channel,tau,phi_r,phi,tau_nominal,phi_r_nominal,phi_nominal\n";
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
        sig << channel_name(ch) << ',' << format_double(rsig.tau[ch]) << ',' << format_double(rsig.phi_r[ch]) << ','
            << format_double(rsig.phi[ch]) << ',' << format_double(c.synth.tau) << ','
            << format_double(c.synth.phi_r) << ',' << format_double(c.synth.phi) << '\n';
    }
    s.write_csv("truth_sigmas.csv", sig.str());
    return kExitOk;
}

int cmd_fit_hazard(const Session& s) {
    const Prepared p = prepare(s);
    const HazardFit fit = fit_and_log(s, p.split.train);
    s.write_csv("hazard_fit.csv", hazard_csv(fit));
    s.write_text("screening.json", p.report.to_json());
    return kExitOk;
}

int cmd_weights(const Session& s) {
    const auto& c = s.cfg();
    const Prepared p = prepare(s);
    const HazardFit fit = fit_and_log(s, p.split.train);
    const std::vector<double> H = hazard_component(fit.coeffs, c.grid);
    std::vector<BinIndex> bins;
    for (const auto& r : p.split.train.records) bins.push_back(assign_bin(r.mw, r.rrup, c.grid));
    const std::vector<double> B = bin_count_component(bins, c.grid);

    std::vector<std::size_t> counts(c.grid.size(), 0);
    for (const auto& b : bins) ++counts[c.grid.flat(b.i, b.j)];

    std::ostringstream os;
    bool header = true;
    for (double a : c.alphas) {
        const std::string table = weights_csv(make_bin_weights(c.grid, H, B, a));
        std::istringstream lines(table);
        std::string line;
        std::size_t k = 0;
        bool first = true;
        while (std::getline(lines, line)) {
            if (first) {
                if (header) os << "alpha," << line << ",count\n";
                header = false;
                first = false;
                continue;
            }
            os << format_double(a) << ',' << line << ',' << counts[k++] << '\n';
        }
    }
    s.write_csv("weights.csv", os.str());
    return kExitOk;
}

int cmd_train(const Session& s) {
    const auto& c = s.cfg();
    const Prepared p = prepare(s);
    const HazardFit fit = fit_and_log(s, p.split.train);
    const TrainedModel m = train_model(s, p, fit.coeffs, c.train_config());
    write_checkpoint(s.path("model.json"), m);
    s.log("wrote " + s.path("model.json"));
    s.write_csv("history.csv", history_csv(m.history));
    const TrainingData test = make_training_data(p.split.test, c.grid);
    const TrainingData full = make_training_data(p.full, c.grid);
    const ModelEvaluation ev = evaluate_model(to_string(m.config.loss_mode), m.params, test, full);
    s.write_csv("metrics.csv", evaluation_table_csv(std::span<const ModelEvaluation>(&ev, 1)));
    return kExitOk;
}

std::string record_key(const std::string& event, const std::string& station) { return event + '\x1f' + station; }

// Third-party predictions: event_id, station_id and the 27 ln_ target columns.
Eigen::MatrixXd external_predictions(const std::string& path, const RecordSet& rs) {
    const CsvTable t = parse_csv_table(read_file(path));
    const auto ev = t.column("event_id");
    const auto st = t.column("station_id");
    if (!ev || !st) throw SchemaError(path + ": needs event_id and station_id columns");
    std::vector<std::size_t> cols;
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
        const auto ci = t.column(target_column(ch));
        if (!ci) throw SchemaError(path + ": missing column " + target_column(ch));
        cols.push_back(*ci);
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r].size() != t.header.size()) {
            throw RowError(path + ": wrong number of cells", {r + 1});
        }
        index[record_key(t.rows[r][*ev], t.rows[r][*st])] = r;
    }
    Eigen::MatrixXd out(static_cast<Eigen::Index>(kNumChannels), static_cast<Eigen::Index>(rs.size()));
    for (std::size_t k = 0; k < rs.size(); ++k) {
        const auto it = index.find(record_key(rs.records[k].event_id, rs.records[k].station_id));
        if (it == index.end()) {
            throw DomainError(path + ": no prediction for record " + rs.records[k].event_id + "/" +
                              rs.records[k].station_id);
        }
        for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
            const std::string& cell = t.rows[it->second][cols[ch]];
            double v = 0.0;
            try {
                std::size_t used = 0;
                v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw RowError(path + ": non-numeric prediction", {it->second + 1});
            }
            out(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(k)) = v;
        }
    }
    return out;
}

int cmd_eval(const Session& s, const CommonOpts& o) {
    const auto& c = s.cfg();
    const TrainedModel m = load_model(s, o);
    const Prepared p = prepare(s);
    const TrainingData test = make_training_data(p.split.test, c.grid);
    const TrainingData full = make_training_data(p.full, c.grid);
    std::vector<ModelEvaluation> rows;
    rows.push_back(evaluate_model("model", m.params, test, full));
    for (const auto& path : o.predictions) {
        ModelEvaluation ev;
        ev.model = fs::path(path).stem().string();
        ev.test = metrics(external_predictions(path, p.split.test), test.targets, "test");
        const Eigen::MatrixXd fp = external_predictions(path, p.full);
        for (const auto& f : canonical_filters()) ev.subsets.push_back(subset_metrics(fp, full.targets, full.inputs, f));
        rows.push_back(std::move(ev));
    }
    s.write_csv("eval_metrics.csv", evaluation_table_csv(rows));
    return kExitOk;
}

int cmd_ablate(const Session& s) {
    const auto& c = s.cfg();
    const Prepared p = prepare(s);
    const HazardFit fit = fit_and_log(s, p.split.train);
    AblationConfig ac;
    const double mw_min = c.ablation.mw_min, rrup_max = c.ablation.rrup_max;
    ac.remove = [mw_min, rrup_max](double mw, double rrup) { return mw >= mw_min && rrup <= rrup_max; };
    ac.alphas = c.ablation.alphas;
    ac.include_mse = c.ablation.include_mse;
    ac.base = c.train_config();
    ac.architecture = default_architecture(c.width, c.depth);
    ac.init_seed = c.stream("init");
    ac.grid = c.grid;
    const AblationResult res = ablation_run(p.split, p.full, fit.coeffs, ac);
    s.write_csv("ablation.csv", evaluation_table_csv(res.table));
    json summary{{"hazard_coeffs", detail::to_json(res.hazard)},
                 {"removed_train", res.removed_train},
                 {"removed_val", res.removed_val},
                 {"test_hash_before", res.test_hash_before},
                 {"test_hash_after", res.test_hash_after},
                 {"subsets_use_full_screened_set", true}};
    s.write_text("ablation.json", summary.dump(2) + "\n");
    return kExitOk;
}

Eigen::MatrixXd records_by_channel(const RecordSet& rs) {
    Eigen::MatrixXd y(static_cast<Eigen::Index>(rs.size()), static_cast<Eigen::Index>(kNumChannels));
    for (std::size_t k = 0; k < rs.size(); ++k) {
        for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
            y(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(ch)) = rs.records[k].targets[ch];
        }
    }
    return y;
}

std::vector<std::size_t> attribution_channels(const RunConfig& c) {
    return c.attribution.channels.empty() ? default_attribution_channels() : c.attribution.channels;
}

void append_bins(std::ostringstream& os, const std::string& covariate, const std::string& channel,
                 const std::vector<ResidualBin>& bins) {
    for (const auto& b : bins) {
        os << covariate << ',' << channel << ',' << format_double(b.lo) << ',' << format_double(b.hi) << ','
           << format_double(b.mean) << ',' << format_double(b.std) << ',' << b.count << '\n';
    }
}

int cmd_mixedfx(const Session& s) {
    const auto& c = s.cfg();
    const Prepared p = prepare(s);
    const HazardFit fit = fit_and_log(s, p.split.train);
    const TrainingData base = make_training_data(p.split.train, c.grid);
    const TrainingData va = make_training_data(p.split.val, c.grid);
    const WeightingContext ctx = make_weighting(fit.coeffs, c.grid);
    const NetworkParams init = init_network(default_architecture(c.width, c.depth), c.stream("init"));
    const TrainConfig tc = c.train_config();
    std::size_t round = 0;

    const Refitter refit = [&](const Eigen::MatrixXd& targets) {
        TrainingData d = base;
        d.targets = targets.transpose();
        const TrainedModel m = train(init, d, va, tc, ctx);
        if (m.history.diverged) throw NumericError("refit diverged");
        s.log("mixed-effects refit " + std::to_string(++round) + " done");
        return Eigen::MatrixXd(predict_batch(m.params, base.inputs).transpose());
    };

    const Grouping g = make_grouping(p.split.train);
    MixedEffectsOptions mo;
    mo.rule = c.mixedfx.rule;
    mo.epsilon = c.mixedfx.epsilon;
    mo.max_iter = c.mixedfx.max_iter;
    const MixedEffectsResult res = iterate_mixed_effects(records_by_channel(p.split.train), g, refit, mo);
    if (res.aborted) s.log("refit failed; reporting the last stable iteration");

    const auto& vc = res.components;
    std::ostringstream comp;
    comp << "channel,period,tau,phi_r,phi,sigma\n";
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
        comp << channel_name(ch) << ',' << format_double(channel_period(ch)) << ',' << format_double(vc.tau[ch])
             << ',' << format_double(vc.phi_r[ch]) << ',' << format_double(vc.phi[ch]) << ','
             << format_double(vc.sigma[ch]) << '\n';
    }
    s.write_csv("components.csv", comp.str());

    std::ostringstream lg;
    lg << "iteration,log_likelihood,relative_change,mean_tau,mean_phi_r,mean_phi,mean_sigma\n";
    for (const auto& e : res.log) {
        lg << e.iteration << ',' << format_double(e.log_likelihood) << ',' << format_double(e.relative_change)
           << ',' << format_double(e.mean_tau) << ',' << format_double(e.mean_phi_r) << ','
           << format_double(e.mean_phi) << ',' << format_double(e.mean_sigma) << '\n';
    }
    s.write_csv("mixedfx_log.csv", lg.str());

    std::ostringstream dg;
    dg << "channel,mean,std,excess_kurtosis,outlier_pct,n\n";
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
        const auto d = residual_diagnostics(vc.channels[ch].within);
        dg << channel_name(ch) << ',' << format_double(d.mean) << ',' << format_double(d.std) << ','
           << format_double(d.excess_kurtosis) << ',' << format_double(d.outlier_pct) << ',' << d.n << '\n';
    }
    s.write_csv("diagnostics.csv", dg.str());

    // Between-event residuals against magnitude; within-event against distance and vs30.
    const std::vector<double> mw_edges{3.0, 4.0, 5.0, 6.0, 7.0, 8.0};
    const std::vector<double> rrup_edges{0.0, 10.0, 20.0, 50.0, 100.0, 200.0, 300.0};
    const std::vector<double> vs30_edges{150.0, 200.0, 300.0, 400.0, 600.0, 800.0, 1000.0, 1500.0};
    std::vector<double> event_mw(g.event_names.size(), 0.0), rrup, vs30;
    for (std::size_t k = 0; k < p.split.train.size(); ++k) {
        const auto& r = p.split.train.records[k];
        event_mw[g.event[k]] = r.mw;
        rrup.push_back(r.rrup);
        vs30.push_back(r.vs30);
    }
    std::ostringstream between, within;
    between << "covariate,channel,lo,hi,mean,std,count\n";
    within << "covariate,channel,lo,hi,mean,std,count\n";
    for (auto ch : attribution_channels(c)) {
        const auto& f = vc.channels[ch];
        append_bins(between, "mw", channel_name(ch), binned_residual_summary(f.event_effect, event_mw, mw_edges));
        append_bins(within, "rrup", channel_name(ch), binned_residual_summary(f.within, rrup, rrup_edges));
        append_bins(within, "vs30", channel_name(ch), binned_residual_summary(f.within, vs30, vs30_edges));
    }
    s.write_csv("residuals_between.csv", between.str());
    s.write_csv("residuals_within.csv", within.str());
    return kExitOk;
}

template <class T>
std::vector<T> seeded_subset(const std::vector<T>& v, std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    shuffle_in_place(idx, rng);
    idx.resize(std::min(n, idx.size()));
    std::sort(idx.begin(), idx.end());
    std::vector<T> out;
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

int cmd_attribute(const Session& s, const CommonOpts& o) {
    const auto& c = s.cfg();
    const TrainedModel m = load_model(s, o);
    const Prepared p = prepare(s);
    const auto channels = attribution_channels(c);
    const auto bg = seeded_subset(raw_features(p.split.train.records), c.attribution.background,
                                  c.stream("background"));
    const auto xs = seeded_subset(raw_features(p.split.test.records), c.attribution.max_records,
                                  derive_seed(c.seed, "explain"));
    if (bg.empty() || xs.empty()) throw DomainError("attribute: empty background or record set");
    std::vector<ModelInput> bg_in, x_in;
    for (const auto& f : bg) bg_in.push_back(derive_input(f));
    for (const auto& f : xs) x_in.push_back(derive_input(f));

    const AttributionTable raw = pathway_contribution_summary(m.params, x_in, channels);
    const AttributionTable centered = centered_pathway_summary(m.params, x_in, bg_in, channels);
    ShapleyOptions so;
    so.permutations = c.attribution.permutations;
    so.seed = c.stream("shap");
    const ShapleyResult shap = shapley_sample(m.params, xs, bg, channels, so);
    const AttributionTable shap_table = shap.summary();

    std::ostringstream os;
    os << "method,feature,channel,mean_abs_value\n";
    auto emit = [&](const char* method, const AttributionTable& t) {
        for (std::size_t l = 0; l < t.labels.size(); ++l) {
            for (std::size_t ci = 0; ci < t.channels.size(); ++ci) {
                os << method << ',' << t.labels[l] << ',' << channel_name(t.channels[ci]) << ','
                   << format_double(t.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(ci))) << '\n';
            }
        }
    };
    emit("pathway", raw);
    emit("pathway_centered", centered);
    emit("shap", shap_table);

    const AttributionTable split = pathway_feature_summary(m.params, centered);
    const AttributionTable closed = exact_additive_summary(m.params, xs, bg, channels);
    emit("closed_form", closed);
    const AttributionReport rep = compare_attributions(closed, shap_table);
    std::ostringstream dv;
    dv << "feature,channel,pathway_split,closed_form,shap,ratio,abs_gap\n";
    for (const auto& r : rep.rows) {
        dv << r.feature << ',' << channel_name(r.channel) << ','
           << format_double(split.at(r.feature, r.channel)) << ',' << format_double(r.reference) << ','
           << format_double(r.shap) << ',' << format_double(r.ratio) << ',' << format_double(r.abs_gap) << '\n';
    }
    s.write_csv("attribution.csv", os.str());
    s.write_csv("divergence.csv", dv.str());
    s.log("attribution over " + std::to_string(xs.size()) + " records, background " + std::to_string(bg.size()) +
          ", " + std::to_string(so.permutations) + " permutations");
    return kExitOk;
}

RawFeatures default_scenario() {
    RawFeatures f;
    f.mw = 6.0;
    f.rrup = 30.0;
    f.vs30 = 760.0;
    f.ztor = 5.0;
    f.z1 = impute_z1(760.0);
    f.fault_flag = static_cast<int>(FaultFlag::strike_slip);
    f.region_flag = 1;
    return f;
}

void set_input(ModelInput& x, InputField f, double v) {
    switch (f) {
        case InputField::mw: x.mw = v; break;
        case InputField::ln_rrup: x.ln_rrup = v; break;
        case InputField::rrup: x.rrup = v; break;
        case InputField::ln_vs30: x.ln_vs30 = v; break;
        case InputField::ztor: x.ztor = v; break;
        case InputField::ln_z1: x.ln_z1 = v; break;
        case InputField::mw_lnr: x.mw_lnr = v; break;
        case InputField::fault_flag: x.fault_flag = static_cast<int>(v); break;
        case InputField::region_flag: x.region_flag = static_cast<int>(v); break;
    }
}

// Grid file: {"base": {mw, rrup, vs30, ztor, z1, fault_flag, region_flag},
//             "pathways": {"mag": [values in the pathway's input units], ...}}
int cmd_scaling_curves(const Session& s, const CommonOpts& o) {
    const TrainedModel m = load_model(s, o);
    RawFeatures base = default_scenario();
    std::map<std::string, std::vector<double>> grids;
    if (!o.grid.empty()) {
        json j;
        try {
            j = json::parse(read_file(o.grid));
            if (j.contains("base")) {
                const auto& b = j.at("base");
                detail::read_opt(b, "mw", base.mw);
                detail::read_opt(b, "rrup", base.rrup);
                detail::read_opt(b, "vs30", base.vs30);
                detail::read_opt(b, "ztor", base.ztor);
                base.z1 = impute_z1(base.vs30);
                detail::read_opt(b, "z1", base.z1);
                detail::read_opt(b, "fault_flag", base.fault_flag);
                detail::read_opt(b, "region_flag", base.region_flag);
            }
            if (j.contains("pathways")) {
                // Either a list of names (default grids) or name -> values.
                const auto& pj = j.at("pathways");
                if (pj.is_array()) {
                    for (const auto& n : pj) grids[n.get<std::string>()] = {};
                } else {
                    grids = pj.get<std::map<std::string, std::vector<double>>>();
                }
            }
        } catch (const json::exception& e) {
            throw DomainError(o.grid + ": " + e.what());
        }
    }
    for (const auto& [name, _] : grids) {
        if (!m.params.find(name)) throw DomainError(o.grid + ": unknown pathway '" + name + "'");
    }
    const ModelInput x0 = derive_input(base);
    std::ostringstream os;
    os << "pathway,input_value,period_index,contribution\n";
    for (std::size_t pw = 0; pw < m.params.pathways.size(); ++pw) {
        const auto& spec = m.params.pathways[pw].spec;
        std::vector<double> values;
        const auto it = grids.find(spec.name);
        if (!grids.empty() && it == grids.end()) continue;
        if (it != grids.end() && !it->second.empty()) {
            values = it->second;
        } else if (spec.categorical_arity > 0) {
            const int offset = spec.input == InputField::region_flag ? 1 : 0;
            for (int k = 0; k < spec.categorical_arity; ++k) values.push_back(k + offset);
        } else {
            const int n = 50;
            for (int k = 0; k < n; ++k) {
                values.push_back(spec.input_center + spec.input_scale * (-2.0 + 4.0 * k / (n - 1)));
            }
        }
        std::vector<ModelInput> xs(values.size(), x0);
        for (std::size_t k = 0; k < values.size(); ++k) set_input(xs[k], spec.input, values[k]);
        const Eigen::MatrixXd out = pathway_output(m.params, pw, xs);
        for (std::size_t k = 0; k < values.size(); ++k) {
            for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
                os << spec.name << ',' << format_double(values[k]) << ',' << ch << ','
                   << format_double(out(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(k))) << '\n';
            }
        }
    }
    s.write_csv("scaling_curves.csv", os.str());
    return kExitOk;
}

// Scenario CSV: mw, rrup_km, vs30_ms, ztor_km, fault_flag or rake_deg,
// region_flag, optional z1_m.
std::vector<RawFeatures> read_scenarios(const std::string& path) {
    const CsvTable t = parse_csv_table(read_file(path));
    auto need = [&](const char* name) {
        const auto c = t.column(name);
        if (!c) throw SchemaError(path + ": missing column " + name);
        return *c;
    };
    const std::size_t mw = need("mw"), rrup = need("rrup_km"), vs30 = need("vs30_ms"), ztor = need("ztor_km"),
                      region = need("region_flag");
    const auto fault = t.column("fault_flag");
    const auto rake = t.column("rake_deg");
    const auto z1 = t.column("z1_m");
    if (!fault && !rake) throw SchemaError(path + ": needs fault_flag or rake_deg");
    std::vector<RawFeatures> out;
    std::vector<std::size_t> bad;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        try {
            if (row.size() != t.header.size()) throw std::invalid_argument("cells");
            RawFeatures f;
            f.mw = std::stod(row[mw]);
            f.rrup = std::stod(row[rrup]);
            f.vs30 = std::stod(row[vs30]);
            f.ztor = std::stod(row[ztor]);
            f.region_flag = std::stoi(row[region]);
            if (fault && !row[*fault].empty()) {
                f.fault_flag = std::stoi(row[*fault]);
            } else {
                f.fault_flag = static_cast<int>(classify_fault(std::stod(row.at(*rake))));
            }
            f.z1 = (z1 && !row[*z1].empty()) ? std::stod(row[*z1]) : impute_z1(f.vs30);
            derive_input(f);
            out.push_back(f);
        } catch (const std::exception&) {
            bad.push_back(r + 1);
        }
    }
    if (!bad.empty()) throw RowError(path + ": malformed scenario rows", bad);
    if (out.empty()) throw DomainError(path + ": no scenarios");
    return out;
}

int cmd_predict(const Session& s, const CommonOpts& o) {
    if (o.scenarios.empty()) throw ConfigError("predict requires --scenarios");
    const TrainedModel m = load_model(s, o);
    const auto sc = read_scenarios(o.scenarios);
    std::vector<ModelInput> xs;
    for (const auto& f : sc) xs.push_back(derive_input(f));
    const BatchOutput out = forward_batch(m.params, xs);

    std::ostringstream pr;
    pr << "row";
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) pr << ',' << target_column(ch);
    pr << '\n';
    for (std::size_t k = 0; k < xs.size(); ++k) {
        pr << k;
        for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
            pr << ',' << format_double(out.total(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(k)));
        }
        pr << '\n';
    }
    s.write_csv("predictions.csv", pr.str());

    std::ostringstream cc;
    cc << "row,component";
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) cc << ',' << channel_name(ch);
    cc << '\n';
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        for (std::size_t pw = 0; pw < m.params.pathways.size(); ++pw) {
            cc << k << ',' << m.params.pathways[pw].spec.name;
            for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
                cc << ',' << format_double(out.pathway[pw](static_cast<Eigen::Index>(ch), kk));
            }
            cc << '\n';
        }
        cc << k << ",bias";
        for (std::size_t ch = 0; ch < kNumChannels; ++ch) cc << ',' << format_double(m.params.bias(static_cast<Eigen::Index>(ch)));
        cc << '\n';
    }
    s.write_csv("contributions.csv", cc.str());
    return kExitOk;
}

RunConfig resolve_config(const CommonOpts& o) {
    RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (!o.out.empty()) c.out = o.out;
    if (!o.data.empty()) c.flatfile = o.data;
    c.validate();
    return c;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Interpretable additive ground-motion model toolkit", "hazgam"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);

    CommonOpts o;
    struct Sub {
        const char* name;
        const char* help;
    };
    const std::vector<Sub> subs{
        {"synth-data", "Generate a synthetic flatfile with ground-truth effects"},
        {"fit-hazard", "Fit the PGA hazard relation on the training split"},
        {"weights", "Tabulate bin weights for each configured alpha"},
        {"train", "Train the additive network and write a checkpoint"},
        {"eval", "Evaluate a checkpoint on the test split and critical bins"},
        {"ablate", "Retrain without near-field large-magnitude records"},
        {"mixedfx", "Iterate mixed effects and report variance components"},
        {"attribute", "Compare pathway contributions with sampled Shapley values"},
        {"scaling-curves", "Tabulate pathway outputs over input grids"},
        {"predict", "Predict spectra for scenarios"},
    };
    std::map<std::string, CLI::App*> cmds;
    for (const auto& sub : subs) {
        CLI::App* c = app.add_subcommand(sub.name, sub.help);
        c->add_option("--seed", o.seed, "Top-level seed (overrides the config)");
        c->add_option("--config", o.config, "JSON run configuration");
        c->add_option("--out", o.out, "Output directory (overrides the config)");
        c->add_option("--data", o.data, "Flatfile CSV (overrides the config)");
        const std::string n = sub.name;
        if (n == "eval" || n == "attribute" || n == "scaling-curves" || n == "predict") {
            c->add_option("--model", o.model, "Checkpoint (default <out>/model.json)");
        }
        if (n == "eval") c->add_option("--predictions", o.predictions, "Third-party prediction CSVs");
        if (n == "scaling-curves") c->add_option("--grid", o.grid, "Scenario grid JSON");
        if (n == "predict") c->add_option("--scenarios", o.scenarios, "Scenario CSV");
        cmds[n] = c;
    }

    std::vector<std::string> argv_store{"hazgam"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        out << version() << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return kExitUsage;
    }

    std::string name;
    for (const auto& [n, c] : cmds) {
        if (c->parsed()) name = n;
    }
    try {
        const Session s(resolve_config(o), err);
        s.log("command " + name + " version " + version());
        if (name == "synth-data") return cmd_synth(s);
        if (name == "fit-hazard") return cmd_fit_hazard(s);
        if (name == "weights") return cmd_weights(s);
        if (name == "train") return cmd_train(s);
        if (name == "eval") return cmd_eval(s, o);
        if (name == "ablate") return cmd_ablate(s);
        if (name == "mixedfx") return cmd_mixedfx(s);
        if (name == "attribute") return cmd_attribute(s, o);
        if (name == "scaling-curves") return cmd_scaling_curves(s, o);
        if (name == "predict") return cmd_predict(s, o);
        err << app.help();
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const RowError& e) {
        err << "error: " << e.what() << " (rows:";
        for (auto r : e.rows()) err << ' ' << r;
        err << ")\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace hazgam
