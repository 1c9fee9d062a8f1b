#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hazgam/common.hpp"

namespace hazgam {

enum class FaultFlag : int { normal = 0, reverse = 1, strike_slip = 2 };

inline constexpr int kNumFaultFlags = 3;
inline constexpr int kNumRegions = 7;  // region flags 1..7

// One strong-motion observation. Mandatory numeric fields hold NaN when the
// flatfile cell was empty; screening drops such rows.
struct Record {
    std::string event_id;
    std::string station_id;
    int region_flag = 0;
    double mw = 0.0;
    double rrup = 0.0;   // km
    double vs30 = 0.0;   // m/s
    std::optional<double> rake;  // degrees
    int fault_flag = -1;         // -1 when unknown
    double ztor = 0.0;   // km
    std::optional<double> z1;    // m
    std::optional<double> sensor_depth;  // m
    std::optional<double> longest_usable_period;  // s
    Spectrum targets{};  // ln intensity, channel order per common.hpp
};

struct RecordSet {
    std::vector<Record> records;
    std::string provenance;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }
};

// Generic CSV table; lines starting with '#' and blank lines are skipped.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name, or nullopt.
    std::optional<std::size_t> column(std::string_view name) const;
};

CsvTable parse_csv_table(std::string_view text);
std::string csv_quote(const std::string& cell);

// Column names of the flatfile CSV, in canonical order.
const std::vector<std::string>& flatfile_columns();
std::string target_column(std::size_t channel);

/// Parses the documented flatfile CSV schema. Throws SchemaError on a missing
/// mandatory column and RowError listing every malformed row (1-based data
/// row numbers).
RecordSet parse_flatfile(std::string_view csv_text, std::string provenance = {});
RecordSet read_flatfile(const std::string& path);
std::string write_flatfile(const RecordSet& rs);

/// Style of faulting from rake: (-150,-30) normal, (30,150) reverse, otherwise
/// strike-slip. Throws DomainError outside [-180, 180].
FaultFlag classify_fault(double rake_deg);

/// California Z1.0-Vs30 relation (meters).
double impute_z1_cy14(double vs30);

using Z1Relation = std::function<double(double)>;
Z1Relation default_z1_relation();

/// Default Z1 imputation; throws DomainError for vs30 <= 0.
double impute_z1(double vs30);

struct ScreeningRules {
    bool max_ztor = true;          // ztor <= 20 km
    bool require_metadata = true;  // mw, rrup, vs30, ztor and all targets present
    bool distance_magnitude = true;  // rrup <= 300 km and mw > 3
    bool sensor_depth = true;      // sensor depth <= 2 m when present
    bool usable_period = true;     // longest usable period >= 5 s when present
    bool min_event_records = true;

    double ztor_limit = 20.0;
    double rrup_limit = 300.0;
    double mw_floor = 3.0;
    double sensor_depth_limit = 2.0;
    double usable_period_floor = 5.0;
    std::size_t min_records_per_event = 5;

    // Judgement-based exclusions, keyed "event_id/station_id".
    std::set<std::string> excluded;
};

struct ScreeningReport {
    // criterion name -> dropped count, in application order
    std::vector<std::pair<std::string, std::size_t>> dropped;
    std::size_t input_count = 0;
    std::size_t output_count = 0;

    std::size_t total_dropped() const;
    std::string to_json() const;
};

struct ScreenResult {
    RecordSet records;
    ScreeningReport report;
};

ScreenResult screen_records(const RecordSet& rs, const ScreeningRules& rules = {});

// Two-dimensional magnitude-distance bin structure.
struct BinGrid {
    std::vector<double> mw_edges{3.0, 4.0, 5.0, 6.0, 7.0, 7.2, 7.4, 7.6, 7.8, 8.0};
    std::vector<double> rrup_edges{0.0, 20.0, 50.0, 100.0, 300.0};

    std::size_t mw_bins() const { return mw_edges.size() - 1; }
    std::size_t rrup_bins() const { return rrup_edges.size() - 1; }
    std::size_t size() const { return mw_bins() * rrup_bins(); }
    std::size_t flat(std::size_t i, std::size_t j) const { return i * rrup_bins() + j; }
    double mw_mid(std::size_t i) const { return 0.5 * (mw_edges[i] + mw_edges[i + 1]); }
    double rrup_mid(std::size_t j) const { return 0.5 * (rrup_edges[j] + rrup_edges[j + 1]); }

    /// Throws ConfigError unless both edge lists are strictly ascending with
    /// at least two entries.
    void validate() const;
};

struct BinIndex {
    std::size_t i = 0;  // magnitude bin
    std::size_t j = 0;  // distance bin
    bool operator==(const BinIndex&) const = default;
};

/// Half-open [lo, hi) bins with the final bin closed; values outside the
/// span clamp to the terminal bins.
BinIndex assign_bin(double mw, double rrup, const BinGrid& grid);

struct Split {
    RecordSet train;
    RecordSet val;
    RecordSet test;
};

struct SplitFractions {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;
};

/// Random partition of events (not records). Event ids are sorted before the
/// seeded shuffle so the result depends only on the set of events and seed.
Split split_by_event(const RecordSet& rs, SplitFractions fractions, std::uint64_t seed);

// Network input derived from a screened record.
struct ModelInput {
    double mw = 0.0;
    double ln_rrup = 0.0;
    double rrup = 0.0;
    double ln_vs30 = 0.0;
    double ztor = 0.0;
    double ln_z1 = 0.0;
    double mw_lnr = 0.0;
    int fault_flag = 0;
    int region_flag = 1;
};

ModelInput make_input(const Record& r, const Z1Relation& z1_relation = default_z1_relation());
std::vector<ModelInput> make_inputs(std::span<const Record> records,
                                    const Z1Relation& z1_relation = default_z1_relation());

// Grouping helpers shared by downstream modules.
std::vector<std::string> event_ids(const RecordSet& rs);  // unique, sorted
std::size_t count_events(const RecordSet& rs);

}  // namespace hazgam
