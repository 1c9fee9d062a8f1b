#include "hazgam/run_config.hpp"

#include <filesystem>
#include <set>

#include "json_io.hpp"

namespace hazgam {

using detail::json;
using detail::read_opt;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

void check_alphas(const std::vector<double>& alphas, const char* where) {
    for (double a : alphas) {
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(std::string(where) + ": alpha outside [0, 1]");
    }
}

}  // namespace

TrainConfig RunConfig::train_config() const {
    TrainConfig t = train;
    t.seed = stream("train");
    return t;
}

void RunConfig::validate() const {
    train.validate();
    grid.validate();
    if (flatfile.empty()) synth.validate();
    if (!(split.train > 0 && split.val >= 0 && split.test > 0)) {
        throw ConfigError("split fractions must be positive (val may be zero)");
    }
    if (width < 1 || depth < 1) throw ConfigError("width and depth must be positive");
    check_alphas(alphas, "alphas");
    check_alphas(ablation.alphas, "ablation.alphas");
    if (!(mixedfx.epsilon > 0)) throw ConfigError("mixedfx.epsilon must be positive");
    if (mixedfx.max_iter == 0) throw ConfigError("mixedfx.max_iter must be positive");
    if (attribution.permutations == 0) throw ConfigError("attribution.permutations must be positive");
    if (attribution.background == 0) throw ConfigError("attribution.background must be positive");
    if (attribution.max_records == 0) throw ConfigError("attribution.max_records must be positive");
    for (auto c : attribution.channels) {
        if (c >= kNumChannels) throw ConfigError("attribution.channels: index out of range");
    }
    if (out.empty()) throw ConfigError("output directory must not be empty");
}

RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(json_text, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    try {
        reject_unknown(j,
                       {"seed", "flatfile", "synth", "split", "screen", "train", "alphas", "grid", "width",
                        "depth", "ablation", "mixedfx", "attribution", "out"},
                       "config");
        read_opt(j, "seed", c.seed);
        read_opt(j, "flatfile", c.flatfile);
        if (!c.flatfile.empty() && !base_dir.empty() && std::filesystem::path(c.flatfile).is_relative()) {
            c.flatfile = (std::filesystem::path(base_dir) / c.flatfile).string();
        }
        if (j.contains("synth")) c.synth = detail::synth_config_from_json(j.at("synth"));
        if (j.contains("split")) {
            const auto& s = j.at("split");
            reject_unknown(s, {"train", "val", "test"}, "split");
            read_opt(s, "train", c.split.train);
            read_opt(s, "val", c.split.val);
            read_opt(s, "test", c.split.test);
        }
        read_opt(j, "screen", c.screen);
        if (j.contains("train")) c.train = detail::train_config_from_json(j.at("train"));
        read_opt(j, "alphas", c.alphas);
        if (j.contains("grid")) c.grid = detail::grid_from_json(j.at("grid"));
        read_opt(j, "width", c.width);
        read_opt(j, "depth", c.depth);
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            reject_unknown(a, {"mw_min", "rrup_max", "alphas", "include_mse"}, "ablation");
            read_opt(a, "mw_min", c.ablation.mw_min);
            read_opt(a, "rrup_max", c.ablation.rrup_max);
            read_opt(a, "alphas", c.ablation.alphas);
            read_opt(a, "include_mse", c.ablation.include_mse);
        }
        if (j.contains("mixedfx")) {
            const auto& m = j.at("mixedfx");
            reject_unknown(m, {"rule", "epsilon", "max_iter"}, "mixedfx");
            if (m.contains("rule")) c.mixedfx.rule = update_rule_from_string(m.at("rule").get<std::string>());
            read_opt(m, "epsilon", c.mixedfx.epsilon);
            read_opt(m, "max_iter", c.mixedfx.max_iter);
        }
        if (j.contains("attribution")) {
            const auto& a = j.at("attribution");
            reject_unknown(a, {"permutations", "background", "max_records", "channels"}, "attribution");
            read_opt(a, "permutations", c.attribution.permutations);
            read_opt(a, "background", c.attribution.background);
            read_opt(a, "max_records", c.attribution.max_records);
            read_opt(a, "channels", c.attribution.channels);
        }
        read_opt(j, "out", c.out);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return parse_run_config(text, std::filesystem::path(path).parent_path().string());
}

std::string run_config_to_json(const RunConfig& c) {
    json j{{"seed", c.seed},
           {"flatfile", c.flatfile},
           {"synth", detail::to_json(c.synth)},
           {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
           {"screen", c.screen},
           {"train", detail::to_json(c.train)},
           {"alphas", c.alphas},
           {"grid", detail::to_json(c.grid)},
           {"width", c.width},
           {"depth", c.depth},
           {"ablation",
            {{"mw_min", c.ablation.mw_min},
             {"rrup_max", c.ablation.rrup_max},
             {"alphas", c.ablation.alphas},
             {"include_mse", c.ablation.include_mse}}},
           {"mixedfx",
            {{"rule", to_string(c.mixedfx.rule)},
             {"epsilon", c.mixedfx.epsilon},
             {"max_iter", c.mixedfx.max_iter}}},
           {"attribution",
            {{"permutations", c.attribution.permutations},
             {"background", c.attribution.background},
             {"max_records", c.attribution.max_records},
             {"channels", c.attribution.channels}}},
           {"out", c.out}};
    return j.dump(2) + "\n";
}

}  // namespace hazgam
