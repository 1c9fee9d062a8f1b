#include "hazgam/mixedfx.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace hazgam {

void Grouping::validate() const {
    if (region.size() != event.size()) throw ShapeError("grouping: region/event length mismatch");
    std::unordered_map<std::size_t, int> region_of;
    for (std::size_t k = 0; k < event.size(); ++k) {
        auto [it, inserted] = region_of.emplace(event[k], region[k]);
        if (!inserted && it->second != region[k]) {
            throw DomainError("grouping: event '" +
                              (event[k] < event_names.size() ? event_names[event[k]]
                                                             : std::to_string(event[k])) +
                              "' appears in more than one region");
        }
    }
}

Grouping make_grouping(const RecordSet& rs) {
    Grouping g;
    g.event_names = event_ids(rs);  // sorted, so indices do not depend on record order
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < g.event_names.size(); ++i) index.emplace(g.event_names[i], i);
    g.region.reserve(rs.size());
    g.event.reserve(rs.size());
    for (const auto& r : rs.records) {
        g.region.push_back(r.region_flag);
        g.event.push_back(index.at(r.event_id));
    }
    g.validate();
    return g;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct EventStats {
    double n = 0.0;
    double mean = 0.0;
    double ssw = 0.0;
    std::size_t region_slot = 0;
};

struct Layout {
    std::vector<EventStats> events;             // indexed by event index
    std::vector<int> regions;                   // region flags, ascending
    std::vector<std::vector<std::size_t>> region_events;
    double n_total = 0.0;
};

Layout summarize(std::span<const double> y, const Grouping& g) {
    Layout lay;
    std::size_t n_events = 0;
    for (auto e : g.event) n_events = std::max(n_events, e + 1);
    lay.events.resize(n_events);
    std::vector<int> region_of(n_events, 0);
    for (std::size_t k = 0; k < y.size(); ++k) {
        auto& ev = lay.events[g.event[k]];
        ev.n += 1.0;
        ev.mean += y[k];
        region_of[g.event[k]] = g.region[k];
    }
    for (auto& ev : lay.events) {
        if (ev.n > 0) ev.mean /= ev.n;
    }
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double d = y[k] - lay.events[g.event[k]].mean;
        lay.events[g.event[k]].ssw += d * d;
    }
    for (std::size_t e = 0; e < n_events; ++e) {
        if (lay.events[e].n > 0) lay.regions.push_back(region_of[e]);
    }
    std::sort(lay.regions.begin(), lay.regions.end());
    lay.regions.erase(std::unique(lay.regions.begin(), lay.regions.end()), lay.regions.end());
    lay.region_events.resize(lay.regions.size());
    for (std::size_t e = 0; e < n_events; ++e) {
        if (lay.events[e].n == 0) continue;
        const auto slot = static_cast<std::size_t>(
            std::lower_bound(lay.regions.begin(), lay.regions.end(), region_of[e]) - lay.regions.begin());
        lay.events[e].region_slot = slot;
        lay.region_events[slot].push_back(e);
    }
    lay.n_total = static_cast<double>(y.size());
    return lay;
}

struct Params {
    double mu, sr2, se2, s2;
};

struct Posterior {
    std::vector<double> r_mean, r_var;  // per region slot
    std::vector<double> e_mean, e_var;  // per event
};

Posterior e_step(const Layout& lay, const Params& p) {
    Posterior post;
    post.r_mean.assign(lay.regions.size(), 0.0);
    post.r_var.assign(lay.regions.size(), 0.0);
    post.e_mean.assign(lay.events.size(), 0.0);
    post.e_var.assign(lay.events.size(), 0.0);
    for (std::size_t s = 0; s < lay.regions.size(); ++s) {
        double prec = 0.0, lin = 0.0;
        for (auto e : lay.region_events[s]) {
            const auto& ev = lay.events[e];
            const double v = p.se2 + p.s2 / ev.n;
            prec += 1.0 / v;
            lin += (ev.mean - p.mu) / v;
        }
        if (p.sr2 > 0) {
            prec += 1.0 / p.sr2;
            post.r_mean[s] = lin / prec;
            post.r_var[s] = 1.0 / prec;
        }
        for (auto e : lay.region_events[s]) {
            const auto& ev = lay.events[e];
            const double v = p.se2 + p.s2 / ev.n;
            const double k = p.se2 / v;
            post.e_mean[e] = k * (ev.mean - p.mu - post.r_mean[s]);
            post.e_var[e] = k * p.s2 / ev.n + k * k * post.r_var[s];
        }
    }
    return post;
}

double log_likelihood(const Layout& lay, const Params& p) {
    double ll = 0.0;
    for (const auto& ev : lay.events) {
        if (ev.n == 0) continue;
        ll += -0.5 * ev.n * (kLog2Pi + std::log(p.s2)) - ev.ssw / (2.0 * p.s2) +
              0.5 * (kLog2Pi + std::log(p.s2 / ev.n));
    }
    for (std::size_t s = 0; s < lay.regions.size(); ++s) {
        double log_det = 0.0, sum_inv = 0.0, quad = 0.0, lin = 0.0;
        const double m = static_cast<double>(lay.region_events[s].size());
        for (auto e : lay.region_events[s]) {
            const auto& ev = lay.events[e];
            const double v = p.se2 + p.s2 / ev.n;
            const double d = ev.mean - p.mu;
            log_det += std::log(v);
            sum_inv += 1.0 / v;
            quad += d * d / v;
            lin += d / v;
        }
        const double denom = 1.0 + p.sr2 * sum_inv;
        log_det += std::log(denom);
        quad -= p.sr2 * lin * lin / denom;
        ll += -0.5 * (m * kLog2Pi + log_det + quad);
    }
    return ll;
}

Params m_step(const Layout& lay, const Params& p, const Posterior& post, bool fit_region) {
    Params q = p;
    double n_events = 0.0, se_acc = 0.0, s_acc = 0.0, mu_acc = 0.0;
    for (std::size_t e = 0; e < lay.events.size(); ++e) {
        const auto& ev = lay.events[e];
        if (ev.n == 0) continue;
        n_events += 1.0;
        const std::size_t s = ev.region_slot;
        const double k = p.se2 / (p.se2 + p.s2 / ev.n);
        se_acc += post.e_mean[e] * post.e_mean[e] + post.e_var[e];
        const double resid = ev.mean - p.mu - post.r_mean[s] - post.e_mean[e];
        const double var_sum = post.r_var[s] * (1.0 - k) * (1.0 - k) + k * p.s2 / ev.n;
        s_acc += ev.ssw + ev.n * (resid * resid + var_sum);
        mu_acc += ev.n * (ev.mean - post.r_mean[s] - post.e_mean[e]);
    }
    q.mu = mu_acc / lay.n_total;
    q.se2 = se_acc / n_events;
    q.s2 = s_acc / lay.n_total;
    if (fit_region) {
        double acc = 0.0;
        for (std::size_t s = 0; s < lay.regions.size(); ++s) {
            acc += post.r_mean[s] * post.r_mean[s] + post.r_var[s];
        }
        q.sr2 = acc / static_cast<double>(lay.regions.size());
    }
    return q;
}

}  // namespace

ChannelFit fit_nested_random_intercepts(std::span<const double> y, const Grouping& g,
                                        const EmOptions& opts) {
    if (y.size() != g.size()) throw ShapeError("fit_nested_random_intercepts: length mismatch");
    if (y.empty()) throw DomainError("fit_nested_random_intercepts: no data");
    const Layout lay = summarize(y, g);

    bool has_multi_event_region = false;
    for (const auto& evs : lay.region_events) has_multi_event_region |= evs.size() >= 2;
    if (!has_multi_event_region) {
        throw DomainError("variance components need at least 2 events in some region");
    }

    ChannelFit fit;
    fit.single_region = lay.regions.size() < 2;

    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / lay.n_total;
    double total_var = 0.0;
    for (double v : y) total_var += (v - mean) * (v - mean);
    total_var /= lay.n_total;

    fit.event_effect.assign(lay.events.size(), 0.0);
    fit.within.assign(y.size(), 0.0);
    for (int r : lay.regions) fit.region_effect[r] = 0.0;

    if (total_var <= 1e-24 * std::max(1.0, mean * mean)) {
        fit.mu = mean;
        fit.degenerate = true;
        fit.converged = true;
        for (std::size_t k = 0; k < y.size(); ++k) fit.within[k] = y[k] - mean;
        return fit;
    }

    // Starting values from method-of-moments style splits of the total variance.
    double ssw = 0.0, n_bar = 0.0, n_ev = 0.0, between = 0.0;
    for (const auto& ev : lay.events) {
        if (ev.n == 0) continue;
        ssw += ev.ssw;
        n_bar += ev.n;
        n_ev += 1.0;
        between += (ev.mean - mean) * (ev.mean - mean);
    }
    n_bar /= n_ev;
    between /= n_ev;
    const double floor = 1e-12 * total_var;
    Params p;
    p.mu = mean;
    p.s2 = std::max(lay.n_total > n_ev ? ssw / (lay.n_total - n_ev) : total_var, 1e-3 * total_var);
    p.se2 = std::max(0.5 * (between - p.s2 / n_bar), 1e-2 * total_var);
    p.sr2 = fit.single_region ? 0.0 : p.se2;

    double ll = log_likelihood(lay, p);
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        const Posterior post = e_step(lay, p);
        Params q = m_step(lay, p, post, !fit.single_region);
        q.s2 = std::max(q.s2, floor);
        q.se2 = std::max(q.se2, 0.0);
        q.sr2 = std::max(q.sr2, 0.0);
        const double ll_new = log_likelihood(lay, q);
        p = q;
        const double change = std::abs(ll_new - ll);
        ll = ll_new;
        if (change < opts.tol) {
            fit.converged = true;
            ++it;
            break;
        }
    }
    fit.iterations = it;

    const Posterior post = e_step(lay, p);
    fit.mu = p.mu;
    fit.tau = std::sqrt(p.se2);
    fit.phi_r = std::sqrt(p.sr2);
    fit.phi = std::sqrt(p.s2);
    fit.sigma = total_sigma(fit.tau, fit.phi_r, fit.phi);
    fit.log_likelihood = ll;
    for (std::size_t s = 0; s < lay.regions.size(); ++s) fit.region_effect[lay.regions[s]] = post.r_mean[s];
    fit.event_effect = post.e_mean;
    for (std::size_t k = 0; k < y.size(); ++k) {
        const auto e = g.event[k];
        fit.within[k] = y[k] - p.mu - post.r_mean[lay.events[e].region_slot] - post.e_mean[e];
    }
    return fit;
}

double VarianceComponents::total_log_likelihood() const {
    double s = 0.0;
    for (double v : log_likelihood) s += v;
    return s;
}

VarianceComponents fit_variance_components(const Eigen::MatrixXd& residuals, const Grouping& g,
                                           const EmOptions& opts) {
    if (residuals.cols() != static_cast<Eigen::Index>(kNumChannels) ||
        residuals.rows() != static_cast<Eigen::Index>(g.size())) {
        throw ShapeError("fit_variance_components: residuals must be N x 27 matching the grouping");
    }
    g.validate();
    VarianceComponents vc;
    vc.channels.reserve(kNumChannels);
    std::vector<double> col(g.size());
    for (std::size_t c = 0; c < kNumChannels; ++c) {
        for (std::size_t k = 0; k < g.size(); ++k) {
            col[k] = residuals(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c));
        }
        ChannelFit f = fit_nested_random_intercepts(col, g, opts);
        vc.mu[c] = f.mu;
        vc.tau[c] = f.tau;
        vc.phi_r[c] = f.phi_r;
        vc.phi[c] = f.phi;
        vc.sigma[c] = f.sigma;
        vc.log_likelihood[c] = f.log_likelihood;
        vc.single_region = f.single_region;
        vc.channels.push_back(std::move(f));
    }
    return vc;
}

double total_sigma(double tau, double phi_r, double phi) {
    if (tau < 0 || phi_r < 0 || phi < 0) throw DomainError("variance components must be >= 0");
    return std::sqrt(tau * tau + phi_r * phi_r + phi * phi);
}

Spectrum total_sigma(const VarianceComponents& vc) {
    Spectrum s{};
    for (std::size_t c = 0; c < kNumChannels; ++c) s[c] = total_sigma(vc.tau[c], vc.phi_r[c], vc.phi[c]);
    return s;
}

std::string to_string(UpdateRule r) {
    return r == UpdateRule::literal ? "literal" : "event_centering";
}

UpdateRule update_rule_from_string(const std::string& s) {
    if (s == "literal") return UpdateRule::literal;
    if (s == "event_centering") return UpdateRule::event_centering;
    throw ConfigError("unknown update rule '" + s + "'");
}

MixedEffectsResult iterate_mixed_effects(const Eigen::MatrixXd& y0, const Grouping& g,
                                         const Refitter& refit, const MixedEffectsOptions& opts) {
    if (y0.rows() != static_cast<Eigen::Index>(g.size()) ||
        y0.cols() != static_cast<Eigen::Index>(kNumChannels)) {
        throw ShapeError("iterate_mixed_effects: targets must be N x 27 matching the grouping");
    }
    if (opts.max_iter == 0) throw ConfigError("iterate_mixed_effects: max_iter must be positive");

    MixedEffectsResult result;
    Eigen::MatrixXd targets = y0;
    double prev_ll = std::numeric_limits<double>::quiet_NaN();
    bool have_result = false;

    for (std::size_t t = 1; t <= opts.max_iter; ++t) {
        Eigen::MatrixXd preds;
        try {
            preds = refit(targets);
        } catch (const Error&) {
            if (!have_result) throw;
            result.aborted = true;
            break;
        }
        if (preds.rows() != y0.rows() || preds.cols() != y0.cols()) {
            throw ShapeError("iterate_mixed_effects: refit returned wrong shape");
        }
        Eigen::MatrixXd resid = y0 - preds;
        VarianceComponents vc = fit_variance_components(resid, g, opts.em);
        const double ll = vc.total_log_likelihood();

        IterationLog entry;
        entry.iteration = t;
        entry.log_likelihood = ll;
        entry.relative_change = std::isnan(prev_ll)
                                    ? std::numeric_limits<double>::quiet_NaN()
                                    : std::abs(ll - prev_ll) / std::max(std::abs(prev_ll), 1e-300);
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            entry.mean_tau += vc.tau[c] / kNumChannels;
            entry.mean_phi_r += vc.phi_r[c] / kNumChannels;
            entry.mean_phi += vc.phi[c] / kNumChannels;
            entry.mean_sigma += vc.sigma[c] / kNumChannels;
        }
        result.log.push_back(entry);

        const bool all_degenerate = std::all_of(vc.channels.begin(), vc.channels.end(),
                                                [](const ChannelFit& f) { return f.degenerate; });
        // Random-effect estimates, needed for the target update.
        Eigen::MatrixXd between(y0.rows(), y0.cols());
        Eigen::MatrixXd within(y0.rows(), y0.cols());
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            const auto& f = vc.channels[c];
            for (std::size_t k = 0; k < g.size(); ++k) {
                const auto ki = static_cast<Eigen::Index>(k);
                const auto ci = static_cast<Eigen::Index>(c);
                between(ki, ci) = f.region_effect.at(g.region[k]) + f.event_effect[g.event[k]];
                within(ki, ci) = f.within[k];
            }
        }

        result.predictions = std::move(preds);
        result.residuals = std::move(resid);
        result.components = std::move(vc);
        have_result = true;

        if (all_degenerate || (!std::isnan(entry.relative_change) && entry.relative_change < opts.epsilon)) {
            result.converged = true;
            break;
        }
        targets = opts.rule == UpdateRule::literal ? Eigen::MatrixXd(y0 - within)
                                                         : Eigen::MatrixXd(y0 - between);
        prev_ll = ll;
    }
    return result;
}

ResidualDiagnostics residual_diagnostics(std::span<const double> residuals) {
    if (residuals.size() < 8) throw DomainError("residual_diagnostics needs at least 8 values");
    ResidualDiagnostics d;
    d.n = residuals.size();
    const double n = static_cast<double>(d.n);
    d.mean = std::accumulate(residuals.begin(), residuals.end(), 0.0) / n;
    double m2 = 0.0, m4 = 0.0;
    for (double v : residuals) {
        const double x = v - d.mean;
        m2 += x * x;
        m4 += x * x * x * x;
    }
    m2 /= n;
    m4 /= n;
    d.std = std::sqrt(m2 * n / (n - 1.0));
    if (m2 <= 1e-300 || d.std <= 1e-150 * std::max(1.0, std::abs(d.mean))) {
        d.degenerate = true;
        d.std = 0.0;
        d.excess_kurtosis = std::numeric_limits<double>::quiet_NaN();
        d.outlier_pct = 0.0;
        return d;
    }
    d.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    std::size_t out = 0;
    for (double v : residuals) {
        if (std::abs(v - d.mean) > 3.0 * d.std) ++out;
    }
    d.outlier_pct = 100.0 * static_cast<double>(out) / n;
    return d;
}

std::vector<ResidualDiagnostics> residual_diagnostics(const Eigen::MatrixXd& residuals) {
    std::vector<ResidualDiagnostics> out;
    std::vector<double> col(static_cast<std::size_t>(residuals.rows()));
    for (Eigen::Index c = 0; c < residuals.cols(); ++c) {
        for (Eigen::Index k = 0; k < residuals.rows(); ++k) col[static_cast<std::size_t>(k)] = residuals(k, c);
        out.push_back(residual_diagnostics(col));
    }
    return out;
}

std::vector<ResidualBin> binned_residual_summary(std::span<const double> residuals,
                                                 std::span<const double> covariate,
                                                 std::span<const double> edges) {
    if (residuals.size() != covariate.size()) {
        throw ShapeError("binned_residual_summary: residual/covariate length mismatch");
    }
    if (edges.size() < 2) throw ConfigError("binned_residual_summary: need at least two edges");
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i] > edges[i - 1])) throw ConfigError("binned_residual_summary: edges must ascend");
    }
    const std::size_t nb = edges.size() - 1;
    std::vector<std::vector<double>> bins(nb);
    for (std::size_t k = 0; k < residuals.size(); ++k) {
        const double x = covariate[k];
        if (!(x >= edges.front() && x <= edges.back())) continue;
        std::size_t b = nb - 1;
        if (x < edges.back()) {
            b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin()) - 1;
        }
        bins[b].push_back(residuals[k]);
    }
    std::vector<ResidualBin> out;
    for (std::size_t b = 0; b < nb; ++b) {
        if (bins[b].empty()) continue;
        ResidualBin rb;
        rb.lo = edges[b];
        rb.hi = edges[b + 1];
        rb.count = bins[b].size();
        const double n = static_cast<double>(rb.count);
        rb.mean = std::accumulate(bins[b].begin(), bins[b].end(), 0.0) / n;
        if (rb.count > 1) {
            double ss = 0.0;
            for (double v : bins[b]) ss += (v - rb.mean) * (v - rb.mean);
            rb.std = std::sqrt(ss / (n - 1.0));
        }
        out.push_back(rb);
    }
    return out;
}

}  // namespace hazgam
