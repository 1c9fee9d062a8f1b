#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hazgam/flatfile.hpp"
#include "hazgam/hazweight.hpp"

namespace hazgam {

// Configuration of the hierarchical synthetic generator. Events are nested
// in regions; every effect is drawn independently per output channel.
struct SynthConfig {
    std::size_t n_events = 200;
    std::size_t min_records_per_event = 10;
    std::size_t max_records_per_event = 40;
    std::vector<int> regions{1, 2, 3, 4, 5};
    std::vector<double> region_weights{};  // empty -> uniform

    // Truncated Gutenberg-Richter magnitudes.
    double mw_min = 3.3;
    double mw_max = 7.9;
    double b_value = 0.6;
    // Distance density proportional to rrup^distance_power on [rrup_min, rrup_max].
    double rrup_min = 0.5;
    double rrup_max = 300.0;
    double distance_power = 1.0;
    double vs30_min = 150.0;
    double vs30_max = 1500.0;
    double ztor_max = 15.0;
    double z1_log_sd = 0.3;  // scatter about the CY14 Z1 median

    // Aleatory components.
    double tau = 0.45;
    double phi_r = 0.3;
    double phi = 0.6;

    double site_coeff = -0.6;  // per ln(vs30 / 760)
    std::uint64_t period_seed = 17;
    HazardCoeffs base = HazardCoeffs::reference();

    /// Throws ConfigError on negative sigmas or inconsistent ranges.
    void validate() const;
};

struct SynthTruth {
    // region flag -> 27 effects; event id -> 27 effects; per record noise
    std::map<int, Spectrum> region_effect;
    std::map<std::string, Spectrum> event_effect;
    std::vector<Spectrum> record_noise;
    std::vector<Spectrum> median;  // deterministic part per record
};

struct SynthData {
    RecordSet records;
    SynthTruth truth;
};

/// Deterministic part of the generating model for one record.
Spectrum synth_median(const SynthConfig& cfg, const Record& r);

SynthData synth_generate(const SynthConfig& cfg, std::uint64_t seed);

/// Population standard deviation about the sample mean of the stored
/// effects, per channel; ground truth for variance recovery.
struct RealizedSigmas {
    Spectrum tau{};
    Spectrum phi_r{};
    Spectrum phi{};
};
RealizedSigmas realized_sigmas(const SynthTruth& truth);

}  // namespace hazgam
