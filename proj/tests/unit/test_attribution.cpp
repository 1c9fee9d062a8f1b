#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>

#include "hazgam/attribution.hpp"

using namespace hazgam;

namespace {

std::vector<RawFeatures> random_features(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<RawFeatures> out(n);
    for (auto& f : out) {
        f.mw = 3.5 + 4.5 * uniform01(rng);
        f.rrup = 1.0 + 250.0 * uniform01(rng);
        f.vs30 = 200.0 + 1000.0 * uniform01(rng);
        f.ztor = 15.0 * uniform01(rng);
        f.z1 = 20.0 + 800.0 * uniform01(rng);
        f.fault_flag = static_cast<int>(uniform_index(rng, kNumFaultFlags));
        f.region_flag = 1 + static_cast<int>(uniform_index(rng, kNumRegions));
    }
    return out;
}

// Random weights large enough to make every pathway nonlinear.
NetworkParams random_network(std::uint64_t seed) {
    NetworkParams p = init_network(default_architecture(6, 2), seed);
    Rng rng(seed + 1);
    for_each_tensor(p, [&](auto& t) {
        for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = 0.8 * standard_normal(rng);
    });
    return p;
}

double f_at(const NetworkParams& p, const RawFeatures& x, std::size_t ch) {
    return forward(p, derive_input(x)).total[ch];
}

// Brute-force interventional Shapley over all 2^7 coalitions of the full model.
Eigen::MatrixXd brute_force_shapley(const NetworkParams& p, const RawFeatures& x,
                                    const std::vector<RawFeatures>& bg, const std::vector<std::size_t>& chans) {
    const std::size_t F = kNumFeatures;
    std::vector<double> fact(F + 1, 1.0);
    for (std::size_t k = 1; k <= F; ++k) fact[k] = fact[k - 1] * static_cast<double>(k);
    Eigen::MatrixXd v(1 << F, static_cast<Eigen::Index>(chans.size()));
    for (unsigned mask = 0; mask < (1u << F); ++mask) {
        for (std::size_t c = 0; c < chans.size(); ++c) {
            double s = 0.0;
            for (const auto& z : bg) {
                RawFeatures h = z;
                for (std::size_t f = 0; f < F; ++f) {
                    if (mask & (1u << f)) h.set_from(kAllFeatures[f], x);
                }
                s += f_at(p, h, chans[c]);
            }
            v(mask, static_cast<Eigen::Index>(c)) = s / static_cast<double>(bg.size());
        }
    }
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(F, static_cast<Eigen::Index>(chans.size()));
    for (std::size_t f = 0; f < F; ++f) {
        for (unsigned mask = 0; mask < (1u << F); ++mask) {
            if (mask & (1u << f)) continue;
            const int s = std::popcount(mask);
            const double w = fact[s] * fact[F - s - 1] / fact[F];
            phi.row(static_cast<Eigen::Index>(f)) += w * (v.row(mask | (1u << f)) - v.row(mask));
        }
    }
    return phi;
}

}  // namespace

TEST_CASE("pathway feature sets") {
    const NetworkParams p = init_network(default_architecture(), 1);
    auto feats = [&](const char* name) { return pathway_features(p, *p.find(name)); };
    CHECK(feats("mag") == std::vector<Feature>{Feature::mw});
    CHECK(feats("mag_fm") == std::vector<Feature>{Feature::mw, Feature::fault_flag});
    CHECK(feats("geo") == std::vector<Feature>{Feature::rrup});
    CHECK(feats("mag_geo") == std::vector<Feature>{Feature::mw, Feature::rrup});
    CHECK(feats("basin") == std::vector<Feature>{Feature::z1});
    CHECK(feats("region") == std::vector<Feature>{Feature::region_flag});
}

TEST_CASE("exact additive Shapley equals brute-force coalition enumeration") {
    const NetworkParams p = random_network(11);
    const auto bg = random_features(6, 2);
    const auto xs = random_features(3, 3);
    const std::vector<std::size_t> chans{0, psa_channel(1.0)};
    for (const auto& x : xs) {
        const Eigen::MatrixXd fast = exact_additive_shapley(p, x, bg, chans);
        const Eigen::MatrixXd slow = brute_force_shapley(p, x, bg, chans);
        CHECK((fast - slow).cwiseAbs().maxCoeff() < 1e-10);
        // Efficiency against the background mean.
        for (std::size_t c = 0; c < chans.size(); ++c) {
            double mean = 0.0;
            for (const auto& z : bg) mean += f_at(p, z, chans[c]);
            mean /= static_cast<double>(bg.size());
            CHECK(fast.col(static_cast<Eigen::Index>(c)).sum() ==
                  doctest::Approx(f_at(p, x, chans[c]) - mean).epsilon(1e-10));
        }
    }
}

TEST_CASE("sampled Shapley: efficiency per permutation and convergence to the exact values") {
    const NetworkParams p = random_network(21);
    const auto bg = random_features(10, 4);
    const auto xs = random_features(4, 5);
    const std::vector<std::size_t> chans{0, psa_channel(0.1)};
    ShapleyOptions so;
    so.permutations = 3000;
    so.seed = 9;
    const ShapleyResult r = shapley_sample(p, xs, bg, chans, so);
    REQUIRE(r.phi.size() == xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t c = 0; c < chans.size(); ++c) {
            const auto ci = static_cast<Eigen::Index>(c);
            const auto ii = static_cast<Eigen::Index>(i);
            CHECK(r.fx(ii, ci) == doctest::Approx(f_at(p, xs[i], chans[c])).epsilon(1e-12));
            // Each permutation telescopes to f(x) - f(z_m).
            CHECK(r.phi[i].col(ci).sum() == doctest::Approx(r.fx(ii, ci) - r.sampled_mean(ii, ci)).epsilon(1e-9));
        }
        const Eigen::MatrixXd exact = exact_additive_shapley(p, xs[i], bg, chans);
        const double scale = std::max(1.0, exact.cwiseAbs().maxCoeff());
        CHECK((r.phi[i] - exact).cwiseAbs().maxCoeff() < 0.1 * scale);
    }
}

TEST_CASE("sampled Shapley is deterministic per seed") {
    const NetworkParams p = random_network(31);
    const auto bg = random_features(8, 6);
    const auto xs = random_features(3, 7);
    const std::vector<std::size_t> chans{0};
    ShapleyOptions so;
    so.permutations = 20;
    so.seed = 5;
    const auto a = shapley_sample(p, xs, bg, chans, so);
    const auto b = shapley_sample(p, xs, bg, chans, so);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(a.phi[i] == b.phi[i]);
    so.seed = 6;
    const auto c = shapley_sample(p, xs, bg, chans, so);
    CHECK(a.phi[0] != c.phi[0]);
}

TEST_CASE("constant model and dummy pathway get zero attribution") {
    NetworkParams p = random_network(41);
    const auto bg = random_features(5, 8);
    const auto xs = random_features(2, 9);
    const std::vector<std::size_t> chans{0, 5};
    NetworkParams flat = zeros_like(p);
    flat.bias.setConstant(2.5);
    const auto r = shapley_sample(flat, xs, bg, chans, {});
    for (const auto& m : r.phi) CHECK(m.cwiseAbs().maxCoeff() == 0.0);
    CHECK(exact_additive_shapley(flat, xs[0], bg, chans).cwiseAbs().maxCoeff() == 0.0);

    // Silence the basin pathway: z1 becomes a dummy feature.
    auto& basin = p.pathways[*p.find("basin")];
    basin.layers.back().W.setZero();
    basin.layers.back().b.setZero();
    const auto z1 = static_cast<Eigen::Index>(Feature::z1);
    const auto s = shapley_sample(p, xs, bg, chans, {});
    for (const auto& m : s.phi) CHECK(m.row(z1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pathway summaries") {
    const NetworkParams p = random_network(51);
    const auto raw = random_features(20, 10);
    std::vector<ModelInput> xs;
    for (const auto& f : raw) xs.push_back(derive_input(f));
    const std::vector<std::size_t> chans = default_attribution_channels();
    CHECK(chans == std::vector<std::size_t>{0, psa_channel(0.1), psa_channel(1.0)});

    const auto t = pathway_contribution_summary(p, xs, chans);
    CHECK(t.labels.size() == p.pathways.size() + 1);
    CHECK(t.at("bias", 0) == doctest::Approx(std::abs(p.bias[0])));
    const auto geo = pathway_output(p, *p.find("geo"), xs);
    CHECK(t.at("geo", chans[2]) == doctest::Approx(geo.row(static_cast<Eigen::Index>(chans[2])).cwiseAbs().mean()));

    const auto c = centered_pathway_summary(p, xs, xs, chans);
    CHECK(c.at("bias", 0) == 0.0);
    const auto row = geo.row(static_cast<Eigen::Index>(chans[1])).array();
    CHECK(c.at("geo", chans[1]) == doctest::Approx((row - row.mean()).abs().mean()));

    // Single-feature pathways: closed form equals the centred pathway output.
    const auto closed = exact_additive_summary(p, raw, raw, chans);
    for (const char* name : {"linsite", "depth", "basin"}) {
        const auto feats = pathway_features(p, *p.find(name));
        CHECK(closed.at(to_string(feats[0]), chans[0]) == doctest::Approx(c.at(name, chans[0])).epsilon(1e-10));
    }
    const auto split = pathway_feature_summary(p, c);
    CHECK(split.labels.size() == kNumFeatures);
    CHECK(split.at("vs30", 0) == doctest::Approx(c.at("linsite", 0)));
    CHECK(split.at("rrup", 0) == doctest::Approx(c.at("geo", 0) + c.at("anelas", 0) + 0.5 * c.at("mag_geo", 0)));
}

TEST_CASE("compare_attributions") {
    AttributionTable a;
    a.labels = {"mw", "rrup"};
    a.channels = {0, 3};
    a.values = Eigen::MatrixXd{{1.0, 0.0}, {2.0, 4.0}};
    const auto same = compare_attributions(a, a);
    CHECK(same.rows.size() == 4);
    for (const auto& r : same.rows) {
        CHECK(r.ratio == 1.0);
        CHECK(r.abs_gap == 0.0);
    }
    AttributionTable b = a;
    b.values(1, 1) = 2.0;
    b.values(0, 1) = 1.0;
    const auto rep = compare_attributions(a, b);
    auto find = [&](const std::string& f, std::size_t ch) {
        return *std::find_if(rep.rows.begin(), rep.rows.end(),
                             [&](const AttributionRow& r) { return r.feature == f && r.channel == ch; });
    };
    CHECK(find("rrup", 3).ratio == 0.5);
    CHECK(std::isinf(find("mw", 3).ratio));
    AttributionTable c = a;
    c.labels = {"vs30", "z1"};
    CHECK_THROWS_AS(compare_attributions(a, c), DomainError);
}
