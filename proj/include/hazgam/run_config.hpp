#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hazgam/flatfile.hpp"
#include "hazgam/mixedfx.hpp"
#include "hazgam/synth.hpp"
#include "hazgam/train.hpp"

namespace hazgam {

struct AblationSettings {
    double mw_min = 6.0;      // remove mw >= mw_min
    double rrup_max = 100.0;  // and rrup <= rrup_max
    std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
    bool include_mse = true;
};

struct MixedFxSettings {
    UpdateRule rule = UpdateRule::literal;
    double epsilon = 0.05;
    std::size_t max_iter = 5;
};

struct AttributionSettings {
    std::size_t permutations = 200;
    std::size_t background = 100;   // drawn from the training split
    std::size_t max_records = 200;  // explained records, drawn from the test split
    std::vector<std::size_t> channels{};  // empty -> PGA, PSA(0.1), PSA(1.0)
};

// Every random stream is derived from `seed`:
//   synth  derive_seed(seed, "synth")   split  derive_seed(seed, "split")
//   init   derive_seed(seed, "init")    train  derive_seed(seed, "train")
//   shap   derive_seed(seed, "shap")    background derive_seed(seed, "background")
struct RunConfig {
    std::uint64_t seed = 0;
    std::string flatfile;  // empty -> synthetic data
    SynthConfig synth;
    SplitFractions split;
    bool screen = true;
    TrainConfig train;     // its seed field is replaced by the derived stream
    std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
    BinGrid grid;
    int width = 16;
    int depth = 2;
    AblationSettings ablation;
    MixedFxSettings mixedfx;
    AttributionSettings attribution;
    std::string out = "out";

    std::uint64_t stream(const char* label) const { return derive_seed(seed, label); }
    TrainConfig train_config() const;
    /// Throws ConfigError on invalid values.
    void validate() const;
};

/// Parses a JSON run configuration. Relative flatfile paths resolve against
/// `base_dir`. Unknown keys raise ConfigError.
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir = {});
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& c);

}  // namespace hazgam
