#pragma once

// Internal JSON conversions shared by checkpoint and run-config code.

#include <json.hpp>

#include "hazgam/hazweight.hpp"
#include "hazgam/synth.hpp"
#include "hazgam/train.hpp"

namespace hazgam::detail {

using json = nlohmann::json;

json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j, TrainConfig defaults = {});

json to_json(const HazardCoeffs& c);
HazardCoeffs hazard_from_json(const json& j);

json to_json(const BinGrid& g);
BinGrid grid_from_json(const json& j);

json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const json& j, SynthConfig defaults = {});

json to_json(const PathwaySpec& s);
PathwaySpec pathway_spec_from_json(const json& j);

// Reads an optional key, keeping the default when absent.
template <class T>
void read_opt(const json& j, const char* key, T& out) {
    auto it = j.find(key);
    if (it != j.end() && !it->is_null()) out = it->get<T>();
}

}  // namespace hazgam::detail
