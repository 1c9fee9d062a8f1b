#pragma once

#include <string>
#include <vector>

#include "hazgam/flatfile.hpp"

namespace hazgam::testing {

inline Record make_record(const std::string& event, const std::string& station, double mw, double rrup,
                          int region = 1, double vs30 = 760.0, int fault = 2, double ztor = 5.0) {
    Record r;
    r.event_id = event;
    r.station_id = station;
    r.region_flag = region;
    r.mw = mw;
    r.rrup = rrup;
    r.vs30 = vs30;
    r.fault_flag = fault;
    r.ztor = ztor;
    for (std::size_t c = 0; c < kNumChannels; ++c) r.targets[c] = -1.0 - 0.01 * static_cast<double>(c);
    return r;
}

// One event with n records at increasing distance.
inline void add_event(RecordSet& rs, const std::string& event, std::size_t n, double mw = 6.0, int region = 1) {
    for (std::size_t k = 0; k < n; ++k) {
        rs.records.push_back(make_record(event, event + "_S" + std::to_string(k), mw, 10.0 + 5.0 * k, region));
    }
}

}  // namespace hazgam::testing
