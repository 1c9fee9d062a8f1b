#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "hazgam/synth.hpp"

using namespace hazgam;

TEST_CASE("zero sigmas give targets equal to the median") {
    SynthConfig cfg;
    cfg.tau = cfg.phi_r = cfg.phi = 0.0;
    cfg.n_events = 20;
    const SynthData d = synth_generate(cfg, 3);
    REQUIRE(d.records.size() == d.truth.median.size());
    for (std::size_t k = 0; k < d.records.size(); ++k) {
        const Spectrum m = synth_median(cfg, d.records.records[k]);
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            CHECK(d.records.records[k].targets[c] == m[c]);
            CHECK(d.truth.record_noise[k][c] == 0.0);
        }
    }
}

TEST_CASE("generation is deterministic per seed") {
    SynthConfig cfg;
    cfg.n_events = 30;
    const auto a = write_flatfile(synth_generate(cfg, 11).records);
    const auto b = write_flatfile(synth_generate(cfg, 11).records);
    const auto c = write_flatfile(synth_generate(cfg, 12).records);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("targets decompose into median plus stored effects") {
    SynthConfig cfg;
    cfg.n_events = 25;
    const SynthData d = synth_generate(cfg, 5);
    for (std::size_t k = 0; k < d.records.size(); ++k) {
        const auto& r = d.records.records[k];
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            const double sum = d.truth.median[k][c] + d.truth.region_effect.at(r.region_flag)[c] +
                               d.truth.event_effect.at(r.event_id)[c] + d.truth.record_noise[k][c];
            CHECK(r.targets[c] == doctest::Approx(sum).epsilon(1e-14));
        }
    }
}

TEST_CASE("structure: nested events, populated regions, record counts") {
    SynthConfig cfg;
    cfg.n_events = 60;
    const SynthData d = synth_generate(cfg, 9);
    std::map<std::string, std::set<int>> regions_of;
    std::map<std::string, std::size_t> counts;
    std::set<int> regions;
    for (const auto& r : d.records.records) {
        regions_of[r.event_id].insert(r.region_flag);
        ++counts[r.event_id];
        regions.insert(r.region_flag);
        CHECK(r.mw > cfg.mw_min - 1e-12);
        CHECK(r.mw <= cfg.mw_max);
        CHECK(r.rrup >= cfg.rrup_min);
        CHECK(r.rrup <= cfg.rrup_max);
        CHECK(r.vs30 >= cfg.vs30_min);
        CHECK(r.vs30 <= cfg.vs30_max);
        CHECK(r.fault_flag == static_cast<int>(classify_fault(*r.rake)));
    }
    CHECK(counts.size() == 60);
    CHECK(regions == std::set<int>{1, 2, 3, 4, 5});
    for (const auto& [e, rs] : regions_of) CHECK(rs.size() == 1);
    for (const auto& [e, n] : counts) {
        CHECK(n >= cfg.min_records_per_event);
        CHECK(n <= cfg.max_records_per_event);
    }
    CHECK(screen_records(d.records).report.total_dropped() == 0);
}

TEST_CASE("flatfile round-trip preserves generated records") {
    SynthConfig cfg;
    cfg.n_events = 10;
    const SynthData d = synth_generate(cfg, 2);
    const RecordSet back = parse_flatfile(write_flatfile(d.records));
    REQUIRE(back.size() == d.records.size());
    for (std::size_t k = 0; k < back.size(); ++k) {
        CHECK(back.records[k].targets == d.records.records[k].targets);
        CHECK(back.records[k].z1 == d.records.records[k].z1);
    }
}

TEST_CASE("stored effects have the configured spread") {
    SynthConfig cfg;
    cfg.regions = {1, 2, 3, 4, 5, 6, 7};
    cfg.n_events = 300;
    cfg.min_records_per_event = 2;
    cfg.max_records_per_event = 4;
    const SynthData d = synth_generate(cfg, 21);
    // Pooled RMS over channels of effects drawn with zero mean.
    auto rms = [](const auto& m) {
        double ss = 0.0;
        std::size_t n = 0;
        for (const auto& [k, v] : m) {
            for (double x : v) {
                ss += x * x;
                ++n;
            }
        }
        return std::sqrt(ss / static_cast<double>(n));
    };
    // 189 region draws: relative SE of the RMS ~ 1/sqrt(2*189) ~ 5%.
    CHECK(rms(d.truth.region_effect) == doctest::Approx(cfg.phi_r).epsilon(0.2));
    CHECK(rms(d.truth.event_effect) == doctest::Approx(cfg.tau).epsilon(0.05));
    const RealizedSigmas s = realized_sigmas(d.truth);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
        CHECK(s.phi[c] == doctest::Approx(cfg.phi).epsilon(0.1));
        CHECK(s.tau[c] == doctest::Approx(cfg.tau).epsilon(0.25));
    }
}

TEST_CASE("magnitudes follow the truncated Gutenberg-Richter law") {
    SynthConfig cfg;
    cfg.n_events = 4000;
    cfg.min_records_per_event = cfg.max_records_per_event = 1;
    const SynthData d = synth_generate(cfg, 4);
    auto tail = [&](double m) {
        const double b = cfg.b_value, lo = cfg.mw_min, hi = cfg.mw_max;
        return (std::pow(10.0, -b * (m - lo)) - std::pow(10.0, -b * (hi - lo))) / (1.0 - std::pow(10.0, -b * (hi - lo)));
    };
    for (double m : {4.0, 5.0, 6.0, 7.0}) {
        double frac = 0.0;
        for (const auto& r : d.records.records) frac += r.mw >= m ? 1.0 : 0.0;
        frac /= static_cast<double>(d.records.size());
        const double p = tail(m);
        CHECK(std::abs(frac - p) < 4.0 * std::sqrt(p * (1 - p) / 4000.0) + 1e-3);
    }
}

TEST_CASE("invalid configurations are rejected") {
    SynthConfig cfg;
    cfg.tau = -0.1;
    CHECK_THROWS_AS(synth_generate(cfg, 1), ConfigError);
    cfg = SynthConfig{};
    cfg.min_records_per_event = 5;
    cfg.max_records_per_event = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SynthConfig{};
    cfg.region_weights = {1.0};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
