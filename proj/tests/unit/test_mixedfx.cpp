#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hazgam/mixedfx.hpp"
#include "hazgam/synth.hpp"
#include "test_util.hpp"

using namespace hazgam;
using hazgam::testing::add_event;

namespace {

// Balanced single-region design: E events, n records each.
struct Balanced {
    RecordSet rs;
    std::vector<double> y;
};

Balanced balanced(std::size_t E, std::size_t n, double tau, double phi, std::uint64_t seed) {
    Balanced b;
    Rng rng(seed);
    for (std::size_t e = 0; e < E; ++e) {
        const std::string id = "E" + std::to_string(100 + e);
        add_event(b.rs, id, n);
        const double eff = tau * standard_normal(rng);
        for (std::size_t k = 0; k < n; ++k) b.y.push_back(1.5 + eff + phi * standard_normal(rng));
    }
    return b;
}

// One-way random-effects ML estimates in closed form (balanced design).
struct Anova {
    double mu, tau2, phi2;
};

Anova anova_ml(const std::vector<double>& y, std::size_t E, std::size_t n) {
    const double N = static_cast<double>(E * n);
    const double mu = std::accumulate(y.begin(), y.end(), 0.0) / N;
    double ssw = 0.0, ssb = 0.0;
    for (std::size_t e = 0; e < E; ++e) {
        double m = 0.0;
        for (std::size_t k = 0; k < n; ++k) m += y[e * n + k];
        m /= static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k) ssw += (y[e * n + k] - m) * (y[e * n + k] - m);
        ssb += (m - mu) * (m - mu);
    }
    const double phi2 = ssw / (static_cast<double>(E) * static_cast<double>(n - 1));
    const double tau2 = std::max(0.0, ssb / static_cast<double>(E) - phi2 / static_cast<double>(n));
    return {mu, tau2, phi2};
}

EmOptions tight() {
    EmOptions o;
    o.tol = 1e-13;
    o.max_iter = 20000;
    return o;
}

}  // namespace

TEST_CASE("balanced single-region fit matches the ANOVA ML oracle") {
    const std::size_t E = 30, n = 8;
    const auto b = balanced(E, n, 0.5, 0.7, 1);
    const Grouping g = make_grouping(b.rs);
    const ChannelFit f = fit_nested_random_intercepts(b.y, g, tight());
    const Anova a = anova_ml(b.y, E, n);
    CHECK(f.single_region);
    CHECK(f.phi_r == 0.0);
    CHECK(f.mu == doctest::Approx(a.mu).epsilon(1e-6));
    CHECK(f.tau * f.tau == doctest::Approx(a.tau2).epsilon(1e-4));
    CHECK(f.phi * f.phi == doctest::Approx(a.phi2).epsilon(1e-6));
    CHECK(f.converged);

    // Empirical Bayes shrinkage of each event mean.
    const double k = n * a.tau2 / (n * a.tau2 + a.phi2);
    for (std::size_t e = 0; e < E; ++e) {
        double m = 0.0;
        for (std::size_t j = 0; j < n; ++j) m += b.y[e * n + j];
        m /= static_cast<double>(n);
        CHECK(f.event_effect[e] == doctest::Approx(k * (m - f.mu)).epsilon(1e-4));
        CHECK(std::abs(f.event_effect[e]) <= std::abs(m - f.mu) + 1e-12);
    }
}

TEST_CASE("decomposition identity is exact") {
    const auto data = synth_generate(SynthConfig{}, 3);
    const Grouping g = make_grouping(data.records);
    std::vector<double> y;
    for (const auto& r : data.records.records) y.push_back(r.targets[5]);
    const ChannelFit f = fit_nested_random_intercepts(y, g);
    for (std::size_t k = 0; k < y.size(); ++k) {
        CHECK(f.mu + f.region_effect.at(g.region[k]) + f.event_effect[g.event[k]] + f.within[k] ==
              doctest::Approx(y[k]).epsilon(1e-14));
    }
    CHECK(f.sigma == doctest::Approx(total_sigma(f.tau, f.phi_r, f.phi)).epsilon(1e-15));
}

TEST_CASE("invariance to record order and constant shifts") {
    const auto data = synth_generate(SynthConfig{}, 4);
    RecordSet rs = data.records;
    std::vector<double> y;
    for (const auto& r : rs.records) y.push_back(r.targets[0]);
    const ChannelFit a = fit_nested_random_intercepts(y, make_grouping(rs), tight());

    std::vector<std::size_t> perm(y.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(5);
    shuffle_in_place(perm, rng);
    RecordSet shuffled;
    std::vector<double> ys;
    for (auto k : perm) {
        shuffled.records.push_back(rs.records[k]);
        ys.push_back(y[k] + 10.0);
    }
    const ChannelFit b = fit_nested_random_intercepts(ys, make_grouping(shuffled), tight());
    CHECK(b.mu == doctest::Approx(a.mu + 10.0).epsilon(1e-9));
    CHECK(b.tau == doctest::Approx(a.tau).epsilon(1e-6));
    CHECK(b.phi_r == doctest::Approx(a.phi_r).epsilon(1e-6));
    CHECK(b.phi == doctest::Approx(a.phi).epsilon(1e-6));
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(b.within[i] == doctest::Approx(a.within[perm[i]]).epsilon(1e-6));
}

TEST_CASE("recovery on synthetic truth") {
    const auto data = synth_generate(SynthConfig{}, 6);
    const Grouping g = make_grouping(data.records);
    Eigen::MatrixXd resid(static_cast<Eigen::Index>(g.size()), 27);
    for (std::size_t k = 0; k < g.size(); ++k) {
        for (std::size_t c = 0; c < 27; ++c) {
            resid(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) =
                data.records.records[k].targets[c] - data.truth.median[k][c];
        }
    }
    const VarianceComponents vc = fit_variance_components(resid, g);
    const RealizedSigmas rz = realized_sigmas(data.truth);
    for (std::size_t c = 0; c < 27; ++c) {
        CHECK(vc.phi[c] == doctest::Approx(rz.phi[c]).epsilon(0.05));
        CHECK(vc.tau[c] == doctest::Approx(rz.tau[c]).epsilon(0.2));
        CHECK(vc.sigma[c] == total_sigma(vc.tau[c], vc.phi_r[c], vc.phi[c]));
    }
    CHECK_THROWS_AS(fit_variance_components(resid.leftCols(3), g), ShapeError);
}

TEST_CASE("degenerate and invalid inputs") {
    const auto b = balanced(5, 4, 0.5, 0.5, 7);
    const Grouping g = make_grouping(b.rs);
    const ChannelFit f = fit_nested_random_intercepts(std::vector<double>(b.y.size(), 2.0), g);
    CHECK(f.degenerate);
    CHECK(f.converged);
    CHECK(f.tau == 0.0);
    CHECK(f.phi == 0.0);
    CHECK(f.mu == 2.0);

    RecordSet one;
    add_event(one, "A", 5);
    CHECK_THROWS_AS(fit_nested_random_intercepts(std::vector<double>(5, 1.0), make_grouping(one)), DomainError);

    RecordSet bad;
    add_event(bad, "A", 3, 6.0, 1);
    add_event(bad, "A", 3, 6.0, 2);
    CHECK_THROWS_AS(make_grouping(bad), DomainError);
    CHECK_THROWS_AS(fit_nested_random_intercepts(std::vector<double>(3, 1.0), g), ShapeError);
}

TEST_CASE("total sigma") {
    CHECK(total_sigma(0.45, 0.3, 0.6) == doctest::Approx(std::sqrt(0.45 * 0.45 + 0.09 + 0.36)));
    CHECK(total_sigma(0.0, 0.0, 0.0) == 0.0);
    CHECK_THROWS_AS(total_sigma(-0.1, 0.2, 0.3), DomainError);
    CHECK(update_rule_from_string(to_string(UpdateRule::event_centering)) == UpdateRule::event_centering);
    CHECK_THROWS_AS(update_rule_from_string("other"), ConfigError);
}

TEST_CASE("mixed-effects iteration") {
    const auto data = synth_generate(SynthConfig{}, 8);
    const Grouping g = make_grouping(data.records);
    const auto N = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd y0(N, 27);
    for (Eigen::Index k = 0; k < N; ++k) {
        for (Eigen::Index c = 0; c < 27; ++c) y0(k, c) = data.records.records[static_cast<std::size_t>(k)].targets[static_cast<std::size_t>(c)];
    }
    // Fixed effects: the true median, blended toward the targets.
    Eigen::MatrixXd med(N, 27);
    for (Eigen::Index k = 0; k < N; ++k) {
        for (Eigen::Index c = 0; c < 27; ++c) med(k, c) = data.truth.median[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
    }
    std::vector<Eigen::MatrixXd> seen;
    const Refitter refit = [&](const Eigen::MatrixXd& t) {
        seen.push_back(t);
        return Eigen::MatrixXd(0.9 * med + 0.1 * t);
    };
    MixedEffectsOptions opts;
    opts.max_iter = 4;
    opts.epsilon = 1e-12;
    const auto r = iterate_mixed_effects(y0, g, refit, opts);
    CHECK(r.log.size() == 4);
    CHECK_FALSE(r.converged);
    CHECK(seen.front() == y0);
    CHECK(std::isnan(r.log[0].relative_change));
    CHECK((r.residuals - (y0 - r.predictions)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(seen.size() == 4);
    // Literal rule feeds back y0 minus the within residual.
    const Eigen::MatrixXd res1 = y0 - (0.9 * med + 0.1 * y0);
    const ChannelFit f = fit_nested_random_intercepts(
        std::vector<double>(res1.col(2).data(), res1.col(2).data() + N), g);
    for (Eigen::Index k = 0; k < N; k += 37) CHECK(seen[1](k, 2) == doctest::Approx(y0(k, 2) - f.within[static_cast<std::size_t>(k)]).epsilon(1e-12));

    opts.epsilon = 0.5;
    const auto c = iterate_mixed_effects(y0, g, refit, opts);
    CHECK(c.converged);
    CHECK(c.log.size() == 2);

    int calls = 0;
    const Refitter flaky = [&](const Eigen::MatrixXd& t) {
        if (++calls == 2) throw FitError("diverged");
        return Eigen::MatrixXd(0.9 * med + 0.1 * t);
    };
    opts.epsilon = 1e-12;
    const auto a = iterate_mixed_effects(y0, g, flaky, opts);
    CHECK(a.aborted);
    CHECK(a.log.size() == 1);
    const Refitter broken = [](const Eigen::MatrixXd&) -> Eigen::MatrixXd { throw FitError("no"); };
    CHECK_THROWS_AS(iterate_mixed_effects(y0, g, broken, opts), FitError);
}

TEST_CASE("event-centering rule feeds back the between-event part") {
    const auto b = balanced(20, 6, 0.5, 0.5, 9);
    const Grouping g = make_grouping(b.rs);
    const auto N = static_cast<Eigen::Index>(b.y.size());
    Eigen::MatrixXd y0(N, 27);
    for (Eigen::Index c = 0; c < 27; ++c) {
        for (Eigen::Index k = 0; k < N; ++k) y0(k, c) = b.y[static_cast<std::size_t>(k)] + 0.01 * static_cast<double>(c);
    }
    std::vector<Eigen::MatrixXd> seen;
    const Refitter mean_model = [&](const Eigen::MatrixXd& t) {
        seen.push_back(t);
        return Eigen::MatrixXd(t.colwise().mean().replicate(t.rows(), 1));
    };
    MixedEffectsOptions opts;
    opts.rule = UpdateRule::event_centering;
    opts.max_iter = 2;
    opts.epsilon = 1e-15;
    iterate_mixed_effects(y0, g, mean_model, opts);
    REQUIRE(seen.size() == 2);
    // Targets in round two: y0 minus (region + event) effects from round one.
    const Eigen::MatrixXd first_resid = y0 - y0.colwise().mean().replicate(N, 1);
    const ChannelFit f = fit_nested_random_intercepts(
        std::vector<double>(first_resid.col(0).data(), first_resid.col(0).data() + N), g);
    for (Eigen::Index k = 0; k < N; ++k) {
        const double between = f.region_effect.at(1) + f.event_effect[g.event[static_cast<std::size_t>(k)]];
        CHECK(seen[1](k, 0) == doctest::Approx(y0(k, 0) - between).epsilon(1e-12));
    }
}

TEST_CASE("residual diagnostics") {
    const std::vector<double> v{-1, 1, -1, 1, -1, 1, -1, 1};
    const auto d = residual_diagnostics(v);
    CHECK(d.mean == 0.0);
    CHECK(d.std == doctest::Approx(std::sqrt(8.0 / 7.0)));
    CHECK(d.excess_kurtosis == doctest::Approx(-2.0));
    CHECK(d.outlier_pct == 0.0);
    CHECK(d.n == 8);
    std::vector<double> spike(99, 0.0);
    for (std::size_t k = 0; k < spike.size(); ++k) spike[k] = (k % 2 ? 0.1 : -0.1);
    spike.push_back(50.0);
    CHECK(residual_diagnostics(spike).outlier_pct == doctest::Approx(1.0));
    CHECK(residual_diagnostics(std::vector<double>(10, 3.0)).degenerate);
    CHECK_THROWS_AS(residual_diagnostics(std::vector<double>(7, 1.0)), DomainError);

    const std::vector<double> r{1, 2, 3, 4, 5}, x{0.5, 1.5, 1.7, 2.0, 9.0}, edges{0, 1, 2};
    const auto bins = binned_residual_summary(r, x, edges);
    REQUIRE(bins.size() == 2);
    CHECK(bins[0].count == 1);
    CHECK(bins[0].std == 0.0);
    CHECK(bins[1].count == 3);  // 2.0 falls in the closed last bin
    CHECK(bins[1].mean == 3.0);
    CHECK(bins[1].std == 1.0);
}
