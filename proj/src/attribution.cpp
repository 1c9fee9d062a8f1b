#include "hazgam/attribution.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace hazgam {

std::string to_string(Feature f) {
    switch (f) {
        case Feature::mw: return "mw";
        case Feature::rrup: return "rrup";
        case Feature::vs30: return "vs30";
        case Feature::ztor: return "ztor";
        case Feature::z1: return "z1";
        case Feature::fault_flag: return "fault_flag";
        case Feature::region_flag: return "region_flag";
    }
    return "?";
}

double RawFeatures::get(Feature f) const {
    switch (f) {
        case Feature::mw: return mw;
        case Feature::rrup: return rrup;
        case Feature::vs30: return vs30;
        case Feature::ztor: return ztor;
        case Feature::z1: return z1;
        case Feature::fault_flag: return fault_flag;
        case Feature::region_flag: return region_flag;
    }
    return 0.0;
}

void RawFeatures::set_from(Feature f, const RawFeatures& src) {
    switch (f) {
        case Feature::mw: mw = src.mw; break;
        case Feature::rrup: rrup = src.rrup; break;
        case Feature::vs30: vs30 = src.vs30; break;
        case Feature::ztor: ztor = src.ztor; break;
        case Feature::z1: z1 = src.z1; break;
        case Feature::fault_flag: fault_flag = src.fault_flag; break;
        case Feature::region_flag: region_flag = src.region_flag; break;
    }
}

RawFeatures raw_features(const Record& r, const Z1Relation& z1) {
    RawFeatures f;
    f.mw = r.mw;
    f.rrup = r.rrup;
    f.vs30 = r.vs30;
    f.ztor = r.ztor;
    f.z1 = r.z1 ? *r.z1 : z1(r.vs30);
    f.fault_flag = r.fault_flag;
    f.region_flag = r.region_flag;
    return f;
}

std::vector<RawFeatures> raw_features(std::span<const Record> records, const Z1Relation& z1) {
    std::vector<RawFeatures> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(raw_features(r, z1));
    return out;
}

ModelInput derive_input(const RawFeatures& f) {
    Record r;
    r.mw = f.mw;
    r.rrup = f.rrup;
    r.vs30 = f.vs30;
    r.ztor = f.ztor;
    r.z1 = f.z1;
    r.fault_flag = f.fault_flag;
    r.region_flag = f.region_flag;
    return make_input(r);
}

namespace {

void add_features(InputField in, std::vector<Feature>& out) {
    switch (in) {
        case InputField::mw: out.push_back(Feature::mw); break;
        case InputField::ln_rrup:
        case InputField::rrup: out.push_back(Feature::rrup); break;
        case InputField::ln_vs30: out.push_back(Feature::vs30); break;
        case InputField::ztor: out.push_back(Feature::ztor); break;
        case InputField::ln_z1: out.push_back(Feature::z1); break;
        case InputField::mw_lnr:
            out.push_back(Feature::mw);
            out.push_back(Feature::rrup);
            break;
        case InputField::fault_flag: out.push_back(Feature::fault_flag); break;
        case InputField::region_flag: out.push_back(Feature::region_flag); break;
    }
}

std::vector<ModelInput> derive_all(std::span<const RawFeatures> fs) {
    std::vector<ModelInput> out;
    out.reserve(fs.size());
    for (const auto& f : fs) out.push_back(derive_input(f));
    return out;
}

void check_channels(std::span<const std::size_t> channels) {
    if (channels.empty()) throw DomainError("attribution: no channels selected");
    for (auto c : channels) {
        if (c >= kNumChannels) throw DomainError("attribution: channel index out of range");
    }
}

}  // namespace

std::vector<Feature> pathway_features(const NetworkParams& p, std::size_t pathway) {
    std::vector<Feature> out;
    const auto& spec = p.pathways.at(pathway).spec;
    add_features(spec.input, out);
    if (!spec.inject_from.empty()) {
        const auto src = p.find(spec.inject_from);
        if (!src) throw ConfigError("unknown injection source '" + spec.inject_from + "'");
        for (auto f : pathway_features(p, *src)) out.push_back(f);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<std::size_t> default_attribution_channels() {
    return {kPgaChannel, psa_channel(0.1), psa_channel(1.0)};
}

double AttributionTable::at(const std::string& label, std::size_t channel) const {
    const auto li = std::find(labels.begin(), labels.end(), label);
    const auto ci = std::find(channels.begin(), channels.end(), channel);
    if (li == labels.end() || ci == channels.end()) {
        throw DomainError("attribution table has no entry for " + label + "/" + channel_name(channel));
    }
    return values(li - labels.begin(), ci - channels.begin());
}

AttributionTable pathway_contribution_summary(const NetworkParams& p, std::span<const ModelInput> xs,
                                              std::span<const std::size_t> channels) {
    if (xs.empty()) throw DomainError("pathway_contribution_summary: no records");
    check_channels(channels);
    const BatchOutput out = forward_batch(p, xs);
    AttributionTable t;
    t.labels = p.pathway_names();
    t.labels.push_back("bias");
    t.channels.assign(channels.begin(), channels.end());
    t.n_records = xs.size();
    t.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.labels.size()),
                                     static_cast<Eigen::Index>(channels.size()));
    const double n = static_cast<double>(xs.size());
    for (std::size_t pw = 0; pw < p.pathways.size(); ++pw) {
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const auto row = out.pathway[pw].row(static_cast<Eigen::Index>(channels[c]));
            t.values(static_cast<Eigen::Index>(pw), static_cast<Eigen::Index>(c)) = row.cwiseAbs().sum() / n;
        }
    }
    for (std::size_t c = 0; c < channels.size(); ++c) {
        t.values(static_cast<Eigen::Index>(p.pathways.size()), static_cast<Eigen::Index>(c)) =
            std::abs(p.bias(static_cast<Eigen::Index>(channels[c])));
    }
    return t;
}

AttributionTable centered_pathway_summary(const NetworkParams& p, std::span<const ModelInput> xs,
                                          std::span<const ModelInput> background,
                                          std::span<const std::size_t> channels) {
    if (xs.empty()) throw DomainError("centered_pathway_summary: no records");
    if (background.empty()) throw DomainError("centered_pathway_summary: empty background");
    check_channels(channels);
    const BatchOutput out = forward_batch(p, xs);
    const BatchOutput bg = forward_batch(p, background);
    AttributionTable t;
    t.labels = p.pathway_names();
    t.labels.push_back("bias");
    t.channels.assign(channels.begin(), channels.end());
    t.n_records = xs.size();
    t.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.labels.size()),
                                     static_cast<Eigen::Index>(channels.size()));
    const double n = static_cast<double>(xs.size());
    for (std::size_t pw = 0; pw < p.pathways.size(); ++pw) {
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const auto ch = static_cast<Eigen::Index>(channels[c]);
            const double center = bg.pathway[pw].row(ch).mean();
            t.values(static_cast<Eigen::Index>(pw), static_cast<Eigen::Index>(c)) =
                (out.pathway[pw].row(ch).array() - center).abs().sum() / n;
        }
    }
    return t;
}

AttributionTable ShapleyResult::summary() const {
    AttributionTable t;
    for (auto f : kAllFeatures) t.labels.push_back(to_string(f));
    t.channels = channels;
    t.n_records = phi.size();
    t.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumFeatures),
                                     static_cast<Eigen::Index>(channels.size()));
    for (const auto& m : phi) t.values += m.cwiseAbs();
    if (!phi.empty()) t.values /= static_cast<double>(phi.size());
    return t;
}

ShapleyResult shapley_sample(const NetworkParams& p, std::span<const RawFeatures> records,
                             std::span<const RawFeatures> background, std::span<const std::size_t> channels,
                             const ShapleyOptions& opts) {
    if (opts.permutations < 1) throw DomainError("shapley_sample: need at least one permutation");
    if (background.empty()) throw DomainError("shapley_sample: empty background");
    check_channels(channels);
    const std::size_t M = opts.permutations;
    const auto C = static_cast<Eigen::Index>(channels.size());
    const auto R = static_cast<Eigen::Index>(records.size());

    ShapleyResult res;
    res.channels.assign(channels.begin(), channels.end());
    res.permutations = M;
    res.background_size = static_cast<double>(background.size());
    res.fx = Eigen::MatrixXd::Zero(R, C);
    res.sampled_mean = Eigen::MatrixXd::Zero(R, C);
    res.sampled_sd = Eigen::MatrixXd::Zero(R, C);
    res.background_mean = Eigen::VectorXd::Zero(C);
    {
        const auto bg_inputs = derive_all(background);
        const Eigen::MatrixXd bg_total = forward_batch(p, bg_inputs).total;
        for (Eigen::Index c = 0; c < C; ++c) {
            res.background_mean(c) = bg_total.row(static_cast<Eigen::Index>(channels[static_cast<std::size_t>(c)])).mean();
        }
    }

    const std::size_t steps = kNumFeatures + 1;
    std::vector<ModelInput> chain(M * steps);
    std::vector<std::size_t> order(M * kNumFeatures);
    std::vector<std::size_t> rows(background.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        Rng rng(mix_seed(opts.seed, i));
        const RawFeatures& x = records[i];
        for (std::size_t m = 0; m < M; ++m) {
            // Stratified background draws: every row once per cycle.
            if (m % rows.size() == 0) {
                std::iota(rows.begin(), rows.end(), 0);
                shuffle_in_place(rows, rng);
            }
            std::vector<std::size_t> perm(kNumFeatures);
            std::iota(perm.begin(), perm.end(), 0);
            shuffle_in_place(perm, rng);
            RawFeatures cur = background[rows[m % rows.size()]];
            chain[m * steps] = derive_input(cur);
            for (std::size_t k = 0; k < kNumFeatures; ++k) {
                cur.set_from(kAllFeatures[perm[k]], x);
                chain[m * steps + k + 1] = derive_input(cur);
                order[m * kNumFeatures + k] = perm[k];
            }
        }
        const Eigen::MatrixXd total = forward_batch(p, chain).total;
        Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumFeatures), C);
        const auto ri = static_cast<Eigen::Index>(i);
        for (Eigen::Index c = 0; c < C; ++c) {
            const auto row = total.row(static_cast<Eigen::Index>(channels[static_cast<std::size_t>(c)]));
            double s = 0.0, ss = 0.0;
            for (std::size_t m = 0; m < M; ++m) {
                const auto base = static_cast<Eigen::Index>(m * steps);
                for (std::size_t k = 0; k < kNumFeatures; ++k) {
                    const auto fi = static_cast<Eigen::Index>(order[m * kNumFeatures + k]);
                    phi(fi, c) += row(base + static_cast<Eigen::Index>(k) + 1) - row(base + static_cast<Eigen::Index>(k));
                }
                s += row(base);
            }
            const double mean = s / static_cast<double>(M);
            for (std::size_t m = 0; m < M; ++m) {
                const double d = row(static_cast<Eigen::Index>(m * steps)) - mean;
                ss += d * d;
            }
            res.sampled_mean(ri, c) = mean;
            res.sampled_sd(ri, c) = M > 1 ? std::sqrt(ss / static_cast<double>(M - 1)) : 0.0;
            res.fx(ri, c) = row(static_cast<Eigen::Index>(steps - 1));
        }
        phi /= static_cast<double>(M);
        res.phi.push_back(std::move(phi));
    }
    return res;
}

Eigen::MatrixXd exact_additive_shapley(const NetworkParams& p, const RawFeatures& x,
                                       std::span<const RawFeatures> background,
                                       std::span<const std::size_t> channels) {
    if (background.empty()) throw DomainError("exact_additive_shapley: empty background");
    check_channels(channels);
    const auto C = static_cast<Eigen::Index>(channels.size());
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumFeatures), C);
    std::vector<ModelInput> batch(background.size());

    for (std::size_t pw = 0; pw < p.pathways.size(); ++pw) {
        const auto feats = pathway_features(p, pw);
        const std::size_t s = feats.size();
        const std::size_t n_sub = std::size_t{1} << s;
        // v[T] = background mean of the pathway with features in T taken from x.
        std::vector<Eigen::VectorXd> v(n_sub);
        for (std::size_t mask = 0; mask < n_sub; ++mask) {
            for (std::size_t b = 0; b < background.size(); ++b) {
                RawFeatures h = background[b];
                for (std::size_t k = 0; k < s; ++k) {
                    if (mask & (std::size_t{1} << k)) h.set_from(feats[k], x);
                }
                batch[b] = derive_input(h);
            }
            const Eigen::MatrixXd g = pathway_output(p, pw, batch);
            v[mask].resize(C);
            for (Eigen::Index c = 0; c < C; ++c) {
                v[mask](c) = g.row(static_cast<Eigen::Index>(channels[static_cast<std::size_t>(c)])).mean();
            }
        }
        std::vector<double> fact(s + 1, 1.0);
        for (std::size_t k = 1; k <= s; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
        for (std::size_t a = 0; a < s; ++a) {
            const std::size_t bit = std::size_t{1} << a;
            for (std::size_t mask = 0; mask < n_sub; ++mask) {
                if (mask & bit) continue;
                const auto t = static_cast<std::size_t>(std::popcount(mask));
                const double w = fact[t] * fact[s - t - 1] / fact[s];
                phi.row(static_cast<Eigen::Index>(feats[a])) += w * (v[mask | bit] - v[mask]).transpose();
            }
        }
    }
    return phi;
}

AttributionTable exact_additive_summary(const NetworkParams& p, std::span<const RawFeatures> records,
                                        std::span<const RawFeatures> background,
                                        std::span<const std::size_t> channels) {
    if (records.empty()) throw DomainError("exact_additive_summary: no records");
    AttributionTable t;
    for (auto f : kAllFeatures) t.labels.push_back(to_string(f));
    t.channels.assign(channels.begin(), channels.end());
    t.n_records = records.size();
    t.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumFeatures),
                                     static_cast<Eigen::Index>(channels.size()));
    for (const auto& x : records) t.values += exact_additive_shapley(p, x, background, channels).cwiseAbs();
    t.values /= static_cast<double>(records.size());
    return t;
}

AttributionTable pathway_feature_summary(const NetworkParams& p, const AttributionTable& centered) {
    AttributionTable t;
    for (auto f : kAllFeatures) t.labels.push_back(to_string(f));
    t.channels = centered.channels;
    t.n_records = centered.n_records;
    t.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kNumFeatures),
                                     static_cast<Eigen::Index>(t.channels.size()));
    for (std::size_t row = 0; row < centered.labels.size(); ++row) {
        const auto pw = p.find(centered.labels[row]);
        if (!pw) continue;  // bias
        const auto feats = pathway_features(p, *pw);
        const double share = 1.0 / static_cast<double>(feats.size());
        for (auto f : feats) {
            t.values.row(static_cast<Eigen::Index>(f)) += share * centered.values.row(static_cast<Eigen::Index>(row));
        }
    }
    return t;
}

AttributionReport compare_attributions(const AttributionTable& reference, const AttributionTable& shap) {
    std::vector<std::size_t> channels;
    for (auto c : reference.channels) {
        if (std::find(shap.channels.begin(), shap.channels.end(), c) != shap.channels.end()) channels.push_back(c);
    }
    std::vector<std::string> labels;
    for (const auto& l : reference.labels) {
        if (std::find(shap.labels.begin(), shap.labels.end(), l) != shap.labels.end()) labels.push_back(l);
    }
    if (channels.empty() || labels.empty()) {
        throw DomainError("compare_attributions: tables share no features or channels");
    }
    AttributionReport rep;
    rep.n_records = shap.n_records;
    for (const auto& l : labels) {
        for (auto c : channels) {
            AttributionRow r;
            r.feature = l;
            r.channel = c;
            r.reference = reference.at(l, c);
            r.shap = shap.at(l, c);
            r.abs_gap = std::abs(r.shap - r.reference);
            if (r.reference == 0.0) {
                r.ratio = r.shap == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
            } else {
                r.ratio = r.shap / r.reference;
            }
            rep.rows.push_back(r);
        }
    }
    return rep;
}

}  // namespace hazgam
