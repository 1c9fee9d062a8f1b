#pragma once

#include <string>

#include "hazgam/train.hpp"

namespace hazgam {

inline constexpr int kCheckpointFormatVersion = 1;

// Versioned JSON checkpoint. Doubles are written in shortest round-trip
// form, so load(save(m)) reproduces predictions exactly.
std::string save_checkpoint(const TrainedModel& m);
TrainedModel load_checkpoint(const std::string& json_text);

void write_checkpoint(const std::string& path, const TrainedModel& m);
TrainedModel read_checkpoint(const std::string& path);

}  // namespace hazgam
