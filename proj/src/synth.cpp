#include "hazgam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace hazgam {

namespace {

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// Period-dependent shape coefficients, fixed by period_seed.
struct PeriodShape {
    Spectrum offset{};
    Spectrum mag_slope{};
    Spectrum far_decay{};
    Spectrum site_scale{};
    Spectrum basin_slope{};
    Spectrum depth_gain{};
};

PeriodShape period_shape(std::uint64_t seed) {
    PeriodShape s;
    Rng rng(mix_seed(seed, 0x9e71));
    for (std::size_t c = 0; c < kNumChannels; ++c) {
        // PGA behaves like a very short period, PGV like ~1 s.
        const double T = c == kPgaChannel ? 0.01 : (c == kPgvChannel ? 1.0 : kPsaPeriods[c - 2]);
        const double lt = std::log10(T);
        const double jitter = 0.1 * (uniform01(rng) - 0.5);
        s.offset[c] = 0.8 * std::exp(-(lt + 0.7) * (lt + 0.7) / 0.5) - 0.6 * clamp(lt, 0.0, 1.0) +
                      jitter + (c == kPgvChannel ? 3.5 : 0.0);
        s.mag_slope[c] = 0.35 * clamp(lt + 1.0, -1.0, 1.7);
        s.far_decay[c] = -0.002 * (1.0 - clamp((lt + 2.0) / 2.7, 0.0, 1.0));
        s.site_scale[c] = 1.0 + 0.3 * clamp(lt + 1.0, -1.0, 1.7);
        s.basin_slope[c] = 0.15 * clamp(lt + 0.5, -0.5, 1.2);
        s.depth_gain[c] = 0.2 * (1.0 - clamp((lt + 2.0) / 2.7, 0.0, 1.0));
    }
    return s;
}

double fault_term(int fault_flag) {
    switch (fault_flag) {
        case 0: return -0.05;
        case 1: return 0.02;
        default: return 0.05;
    }
}

double truncated_gr(Rng& rng, double lo, double hi, double b) {
    const double u = uniform01(rng);
    const double span = 1.0 - std::pow(10.0, -b * (hi - lo));
    return lo - std::log10(1.0 - u * span) / b;
}

double power_distance(Rng& rng, double lo, double hi, double p) {
    const double u = uniform01(rng);
    const double e = p + 1.0;
    if (std::abs(e) < 1e-12) return lo * std::pow(hi / lo, u);
    return std::pow(std::pow(lo, e) + u * (std::pow(hi, e) - std::pow(lo, e)), 1.0 / e);
}

}  // namespace

void SynthConfig::validate() const {
    if (!(tau >= 0 && phi_r >= 0 && phi >= 0)) throw ConfigError("synth: sigmas must be >= 0");
    if (n_events == 0) throw ConfigError("synth: n_events must be positive");
    if (min_records_per_event == 0 || min_records_per_event > max_records_per_event) {
        throw ConfigError("synth: need 0 < min_records_per_event <= max_records_per_event");
    }
    if (regions.empty()) throw ConfigError("synth: at least one region required");
    for (int r : regions) {
        if (r < 1 || r > kNumRegions) throw ConfigError("synth: region flags must be in 1..7");
    }
    if (!region_weights.empty()) {
        if (region_weights.size() != regions.size()) {
            throw ConfigError("synth: region_weights must match regions");
        }
        double s = 0.0;
        for (double w : region_weights) {
            if (!(w >= 0)) throw ConfigError("synth: region weights must be >= 0");
            s += w;
        }
        if (!(s > 0)) throw ConfigError("synth: region weights sum to zero");
    }
    if (!(mw_min > 3.0 && mw_max <= 8.0 && mw_min < mw_max)) {
        throw ConfigError("synth: magnitude range must lie inside (3, 8]");
    }
    if (!(b_value > 0)) throw ConfigError("synth: b_value must be positive");
    if (!(rrup_min > 0 && rrup_max <= 300.0 && rrup_min < rrup_max)) {
        throw ConfigError("synth: distance range must lie inside (0, 300]");
    }
    if (!(vs30_min > 0 && vs30_min < vs30_max)) throw ConfigError("synth: bad vs30 range");
    if (!(ztor_max >= 0 && ztor_max <= 20.0)) throw ConfigError("synth: ztor_max must be in [0, 20]");
    if (!(z1_log_sd >= 0)) throw ConfigError("synth: z1_log_sd must be >= 0");
}

Spectrum synth_median(const SynthConfig& cfg, const Record& r) {
    static thread_local std::uint64_t cached_seed = ~0ULL;
    static thread_local PeriodShape shape;
    if (cached_seed != cfg.period_seed) {
        shape = period_shape(cfg.period_seed);
        cached_seed = cfg.period_seed;
    }
    const double base = eval_hazard(cfg.base, r.mw, r.rrup);
    const double site = std::log(r.vs30 / 760.0);
    const double z1 = r.z1 ? *r.z1 : impute_z1(r.vs30);
    const double basin = std::log(z1 / impute_z1(r.vs30));
    const double depth = std::min(r.ztor, 10.0) / 10.0;
    Spectrum m{};
    for (std::size_t c = 0; c < kNumChannels; ++c) {
        m[c] = base + shape.offset[c] + shape.mag_slope[c] * (r.mw - 6.0) +
               shape.far_decay[c] * r.rrup + cfg.site_coeff * shape.site_scale[c] * site +
               shape.basin_slope[c] * basin + shape.depth_gain[c] * depth +
               fault_term(r.fault_flag);
    }
    return m;
}

SynthData synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SynthData out;
    out.records.provenance = "synthetic:seed=" + std::to_string(seed);
    Rng rng(mix_seed(seed, 0x5e7));

    std::vector<double> cum(cfg.regions.size());
    {
        double s = 0.0;
        for (std::size_t i = 0; i < cfg.regions.size(); ++i) {
            s += cfg.region_weights.empty() ? 1.0 : cfg.region_weights[i];
            cum[i] = s;
        }
        for (auto& c : cum) c /= s;
    }

    for (int region : cfg.regions) {
        Spectrum eff{};
        for (auto& v : eff) v = cfg.phi_r * standard_normal(rng);
        out.truth.region_effect[region] = eff;
    }

    const std::size_t span = cfg.max_records_per_event - cfg.min_records_per_event + 1;
    for (std::size_t e = 0; e < cfg.n_events; ++e) {
        char id[32];
        std::snprintf(id, sizeof(id), "E%05zu", e + 1);
        const std::string event_id = id;

        std::size_t ri = 0;
        if (cfg.regions.size() > 1) {
            // Round-robin the first events so every region is populated.
            if (e < cfg.regions.size()) {
                ri = e;
                (void)uniform01(rng);
            } else {
                const double u = uniform01(rng);
                while (ri + 1 < cum.size() && u >= cum[ri]) ++ri;
            }
        }
        const int region = cfg.regions[ri];
        const double mw = truncated_gr(rng, cfg.mw_min, cfg.mw_max, cfg.b_value);
        const double ztor = cfg.ztor_max * uniform01(rng);
        const std::size_t fault_class = uniform_index(rng, 3);
        double rake = 0.0;
        switch (fault_class) {
            case 0: rake = -140.0 + 100.0 * uniform01(rng); break;
            case 1: rake = 40.0 + 100.0 * uniform01(rng); break;
            default: rake = -20.0 + 40.0 * uniform01(rng); break;
        }
        const std::size_t n_rec = cfg.min_records_per_event + uniform_index(rng, span);

        Spectrum ev{};
        for (auto& v : ev) v = cfg.tau * standard_normal(rng);
        out.truth.event_effect[event_id] = ev;

        for (std::size_t k = 0; k < n_rec; ++k) {
            Record r;
            r.event_id = event_id;
            char sid[48];
            std::snprintf(sid, sizeof(sid), "S%05zu_%03zu", e + 1, k + 1);
            r.station_id = sid;
            r.region_flag = region;
            r.mw = mw;
            r.ztor = ztor;
            r.rake = rake;
            r.fault_flag = static_cast<int>(classify_fault(rake));
            r.rrup = power_distance(rng, cfg.rrup_min, cfg.rrup_max, cfg.distance_power);
            r.vs30 = cfg.vs30_min * std::pow(cfg.vs30_max / cfg.vs30_min, uniform01(rng));
            r.z1 = impute_z1(r.vs30) * std::exp(cfg.z1_log_sd * standard_normal(rng));

            const Spectrum med = synth_median(cfg, r);
            const Spectrum& reg = out.truth.region_effect[region];
            Spectrum noise{};
            for (std::size_t c = 0; c < kNumChannels; ++c) {
                noise[c] = cfg.phi * standard_normal(rng);
                r.targets[c] = med[c] + reg[c] + ev[c] + noise[c];
            }
            out.truth.median.push_back(med);
            out.truth.record_noise.push_back(noise);
            out.records.records.push_back(std::move(r));
        }
    }
    return out;
}

RealizedSigmas realized_sigmas(const SynthTruth& truth) {
    RealizedSigmas s;
    auto sd = [](auto begin, auto end, std::size_t c, auto get) {
        double mean = 0.0;
        std::size_t n = 0;
        for (auto it = begin; it != end; ++it, ++n) mean += get(*it)[c];
        if (n == 0) return 0.0;
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (auto it = begin; it != end; ++it) ss += (get(*it)[c] - mean) * (get(*it)[c] - mean);
        return std::sqrt(ss / static_cast<double>(n));
    };
    for (std::size_t c = 0; c < kNumChannels; ++c) {
        s.phi_r[c] = sd(truth.region_effect.begin(), truth.region_effect.end(), c,
                        [](const auto& kv) -> const Spectrum& { return kv.second; });
        s.tau[c] = sd(truth.event_effect.begin(), truth.event_effect.end(), c,
                      [](const auto& kv) -> const Spectrum& { return kv.second; });
        s.phi[c] = sd(truth.record_noise.begin(), truth.record_noise.end(), c,
                      [](const Spectrum& v) -> const Spectrum& { return v; });
    }
    return s;
}

}  // namespace hazgam
