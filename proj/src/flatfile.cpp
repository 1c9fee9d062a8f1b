#include "hazgam/flatfile.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace hazgam {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

// Splits one CSV line; supports double-quoted cells with "" escapes.
std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.emplace_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.emplace_back(trim(cur));
    return cells;
}

std::optional<double> parse_number(std::string_view s, bool& ok) {
    ok = true;
    s = trim(s);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        ok = false;
        return std::nullopt;
    }
    return v;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string opt_cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string{};
}

std::string num_cell(double v) {
    return std::isnan(v) ? std::string{} : format_double(v);
}

}  // namespace

std::optional<std::size_t> CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    return std::nullopt;
}

CsvTable parse_csv_table(std::string_view text) {
    CsvTable t;
    bool have_header = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        if (line.empty() || line.front() == '#') continue;
        auto cells = split_csv_line(line);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    if (!have_header) throw SchemaError("CSV has no header row");
    return t;
}

std::string csv_quote(const std::string& cell) { return csv_escape(cell); }

std::string target_column(std::size_t channel) { return "ln_" + channel_name(channel); }

const std::vector<std::string>& flatfile_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c{"event_id", "station_id", "region_flag", "mw",
                                   "rrup_km",  "vs30_ms",    "rake_deg",    "fault_flag",
                                   "ztor_km",  "z1_m",       "sensor_depth_m", "lup_s"};
        for (std::size_t ch = 0; ch < kNumChannels; ++ch) c.push_back(target_column(ch));
        return c;
    }();
    return cols;
}

RecordSet parse_flatfile(std::string_view csv_text, std::string provenance) {
    std::vector<std::string_view> lines;
    {
        std::size_t pos = 0;
        while (pos <= csv_text.size()) {
            std::size_t nl = csv_text.find('\n', pos);
            if (nl == std::string_view::npos) nl = csv_text.size();
            std::string_view line = csv_text.substr(pos, nl - pos);
            if (!trim(line).empty() && trim(line).front() != '#') lines.push_back(line);
            pos = nl + 1;
        }
    }
    if (lines.empty()) throw SchemaError("flatfile is empty (no header row)");

    const auto header = split_csv_line(lines.front());
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col.emplace(header[i], i);

    std::vector<std::string> mandatory{"event_id", "station_id", "region_flag", "mw",
                                       "rrup_km",  "vs30_ms",    "ztor_km"};
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) mandatory.push_back(target_column(ch));
    std::vector<std::string> missing;
    for (const auto& m : mandatory) {
        if (!col.contains(m)) missing.push_back(m);
    }
    if (!col.contains("rake_deg") && !col.contains("fault_flag")) {
        missing.push_back("rake_deg|fault_flag");
    }
    if (!missing.empty()) {
        std::string msg = "flatfile schema error: missing column(s):";
        for (const auto& m : missing) msg += " " + m;
        throw SchemaError(msg);
    }

    auto idx = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = col.find(name);
        if (it == col.end()) return std::nullopt;
        return it->second;
    };

    RecordSet rs;
    rs.provenance = std::move(provenance);
    rs.records.reserve(lines.size() - 1);
    std::vector<std::size_t> bad_rows;
    std::ostringstream problems;

    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t row = li;  // 1-based data row
        auto cells = split_csv_line(lines[li]);
        std::vector<std::string> row_problems;
        auto cell = [&](std::optional<std::size_t> i) -> std::string_view {
            if (!i || *i >= cells.size()) return {};
            return cells[*i];
        };
        auto number = [&](const std::string& name) -> std::optional<double> {
            bool ok = true;
            auto v = parse_number(cell(idx(name)), ok);
            if (!ok) row_problems.push_back(name + "='" + std::string(cell(idx(name))) + "'");
            return v;
        };

        if (cells.size() != header.size()) {
            row_problems.push_back("expected " + std::to_string(header.size()) + " cells, got " +
                                   std::to_string(cells.size()));
        }

        Record r;
        r.event_id = std::string(cell(idx("event_id")));
        r.station_id = std::string(cell(idx("station_id")));
        if (r.event_id.empty()) row_problems.push_back("event_id empty");

        auto region = number("region_flag");
        if (region) {
            double rf = *region;
            if (rf != std::floor(rf) || rf < 1 || rf > kNumRegions) {
                row_problems.push_back("region_flag out of 1..7");
            } else {
                r.region_flag = static_cast<int>(rf);
            }
        }
        r.mw = number("mw").value_or(kNaN);
        r.rrup = number("rrup_km").value_or(kNaN);
        r.vs30 = number("vs30_ms").value_or(kNaN);
        r.ztor = number("ztor_km").value_or(kNaN);
        r.rake = number("rake_deg");
        r.z1 = number("z1_m");
        r.sensor_depth = number("sensor_depth_m");
        r.longest_usable_period = number("lup_s");
        auto ff = number("fault_flag");
        for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
            r.targets[ch] = number(target_column(ch)).value_or(kNaN);
        }

        std::optional<int> from_rake;
        if (r.rake) {
            if (*r.rake < -180.0 || *r.rake > 180.0) {
                row_problems.push_back("rake_deg outside [-180, 180]");
            } else {
                from_rake = static_cast<int>(classify_fault(*r.rake));
            }
        }
        if (ff) {
            double f = *ff;
            if (f != std::floor(f) || f < 0 || f >= kNumFaultFlags) {
                row_problems.push_back("fault_flag not in {0,1,2}");
            } else {
                r.fault_flag = static_cast<int>(f);
                if (from_rake && *from_rake != r.fault_flag) {
                    row_problems.push_back("fault_flag inconsistent with rake_deg");
                }
            }
        } else if (from_rake) {
            r.fault_flag = *from_rake;
        }

        if (!row_problems.empty()) {
            bad_rows.push_back(row);
            problems << "\n  row " << row << ":";
            for (const auto& p : row_problems) problems << " " << p << ";";
            continue;
        }
        rs.records.push_back(std::move(r));
    }

    if (!bad_rows.empty()) {
        throw RowError("flatfile has " + std::to_string(bad_rows.size()) +
                           " malformed row(s):" + problems.str(),
                       std::move(bad_rows));
    }
    return rs;
}

RecordSet read_flatfile(const std::string& path) { return parse_flatfile(read_file(path), path); }

std::string write_flatfile(const RecordSet& rs) {
    std::ostringstream out;
    const auto& cols = flatfile_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (const auto& r : rs.records) {
        out << csv_escape(r.event_id) << ',' << csv_escape(r.station_id) << ',' << r.region_flag
            << ',' << num_cell(r.mw) << ',' << num_cell(r.rrup) << ',' << num_cell(r.vs30) << ','
            << opt_cell(r.rake) << ',' << (r.fault_flag >= 0 ? std::to_string(r.fault_flag) : "")
            << ',' << num_cell(r.ztor) << ',' << opt_cell(r.z1) << ',' << opt_cell(r.sensor_depth)
            << ',' << opt_cell(r.longest_usable_period);
        for (double t : r.targets) out << ',' << num_cell(t);
        out << '\n';
    }
    return out.str();
}

FaultFlag classify_fault(double rake_deg) {
    if (!(rake_deg >= -180.0 && rake_deg <= 180.0)) {
        throw DomainError("rake " + format_double(rake_deg) + " outside [-180, 180]");
    }
    if (rake_deg > -150.0 && rake_deg < -30.0) return FaultFlag::normal;
    if (rake_deg > 30.0 && rake_deg < 150.0) return FaultFlag::reverse;
    return FaultFlag::strike_slip;
}

double impute_z1_cy14(double vs30) {
    if (!(vs30 > 0.0)) throw DomainError("impute_z1: vs30 must be positive");
    const double a = std::pow(vs30, 4) + std::pow(571.0, 4);
    const double b = std::pow(1360.0, 4) + std::pow(571.0, 4);
    return std::exp(-7.15 / 4.0 * std::log(a / b));
}

Z1Relation default_z1_relation() { return &impute_z1_cy14; }

double impute_z1(double vs30) { return impute_z1_cy14(vs30); }

std::size_t ScreeningReport::total_dropped() const {
    std::size_t n = 0;
    for (const auto& [_, c] : dropped) n += c;
    return n;
}

std::string ScreeningReport::to_json() const {
    std::ostringstream out;
    out << "{";
    for (std::size_t i = 0; i < dropped.size(); ++i) {
        out << (i ? ", " : "") << '"' << dropped[i].first << "\": " << dropped[i].second;
    }
    out << "}";
    return out.str();
}

ScreenResult screen_records(const RecordSet& rs, const ScreeningRules& rules) {
    ScreenResult result;
    result.records.provenance = rs.provenance;
    result.report.input_count = rs.size();

    std::vector<const Record*> kept;
    kept.reserve(rs.size());
    for (const auto& r : rs.records) kept.push_back(&r);

    auto apply = [&](const std::string& name, bool enabled, auto&& keep) {
        std::size_t before = kept.size();
        if (enabled) {
            std::erase_if(kept, [&](const Record* r) { return !keep(*r); });
        }
        result.report.dropped.emplace_back(name, before - kept.size());
    };

    apply("ztor", rules.max_ztor,
          [&](const Record& r) { return std::isnan(r.ztor) || r.ztor <= rules.ztor_limit; });
    apply("missing_metadata", rules.require_metadata, [](const Record& r) {
        if (std::isnan(r.mw) || std::isnan(r.rrup) || std::isnan(r.vs30) || std::isnan(r.ztor))
            return false;
        if (r.fault_flag < 0 || r.region_flag < 1 || r.event_id.empty()) return false;
        return std::all_of(r.targets.begin(), r.targets.end(),
                           [](double t) { return std::isfinite(t); });
    });
    apply("distance_magnitude", rules.distance_magnitude, [&](const Record& r) {
        return r.rrup <= rules.rrup_limit && r.mw > rules.mw_floor;
    });
    apply("sensor_depth", rules.sensor_depth, [&](const Record& r) {
        return !r.sensor_depth || *r.sensor_depth <= rules.sensor_depth_limit;
    });
    apply("usable_period", rules.usable_period, [&](const Record& r) {
        return !r.longest_usable_period || *r.longest_usable_period >= rules.usable_period_floor;
    });
    apply("excluded", !rules.excluded.empty(), [&](const Record& r) {
        return !rules.excluded.contains(r.event_id + "/" + r.station_id);
    });

    std::unordered_map<std::string, std::size_t> per_event;
    for (const Record* r : kept) ++per_event[r->event_id];
    apply("min_event_records", rules.min_event_records,
          [&](const Record& r) { return per_event[r.event_id] >= rules.min_records_per_event; });

    result.records.records.reserve(kept.size());
    for (const Record* r : kept) result.records.records.push_back(*r);
    result.report.output_count = kept.size();
    return result;
}

void BinGrid::validate() const {
    auto ascending = [](const std::vector<double>& e) {
        if (e.size() < 2) return false;
        for (std::size_t i = 1; i < e.size(); ++i) {
            if (!(e[i] > e[i - 1])) return false;
        }
        return true;
    };
    if (!ascending(mw_edges) || !ascending(rrup_edges)) {
        throw ConfigError("bin edges must be strictly ascending with at least two entries");
    }
}

namespace {
std::size_t locate(double v, const std::vector<double>& edges) {
    const std::size_t nbins = edges.size() - 1;
    if (!(v >= edges.front())) return 0;  // also catches NaN
    if (v >= edges.back()) return nbins - 1;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    return static_cast<std::size_t>(it - edges.begin()) - 1;
}
}  // namespace

BinIndex assign_bin(double mw, double rrup, const BinGrid& grid) {
    return {locate(mw, grid.mw_edges), locate(rrup, grid.rrup_edges)};
}

Split split_by_event(const RecordSet& rs, SplitFractions f, std::uint64_t seed) {
    const double sum = f.train + f.val + f.test;
    if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
    auto events = event_ids(rs);
    const std::size_t n = events.size();
    if (n < 3) throw DomainError("split_by_event needs at least 3 events, got " + std::to_string(n));

    Rng rng(mix_seed(seed, 0x5b117));
    shuffle_in_place(events, rng);

    auto n_train = static_cast<std::size_t>(std::llround(f.train * static_cast<double>(n)));
    auto n_val = static_cast<std::size_t>(std::llround(f.val * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);

    std::unordered_map<std::string, int> which;
    for (std::size_t i = 0; i < n; ++i) {
        which[events[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
    }
    Split s;
    s.train.provenance = rs.provenance + "#train";
    s.val.provenance = rs.provenance + "#val";
    s.test.provenance = rs.provenance + "#test";
    for (const auto& r : rs.records) {
        switch (which[r.event_id]) {
            case 0: s.train.records.push_back(r); break;
            case 1: s.val.records.push_back(r); break;
            default: s.test.records.push_back(r); break;
        }
    }
    return s;
}

ModelInput make_input(const Record& r, const Z1Relation& z1_relation) {
    if (!(r.rrup > 0.0)) throw DomainError("make_input: rrup must be positive");
    if (!(r.vs30 > 0.0)) throw DomainError("make_input: vs30 must be positive");
    const double z1 = r.z1 ? *r.z1 : z1_relation(r.vs30);
    if (!(z1 > 0.0)) throw DomainError("make_input: z1 must be positive");
    if (r.fault_flag < 0 || r.fault_flag >= kNumFaultFlags) {
        throw DomainError("make_input: fault_flag must be 0, 1 or 2");
    }
    if (r.region_flag < 1 || r.region_flag > kNumRegions) {
        throw DomainError("make_input: region_flag must be in 1..7");
    }
    ModelInput x;
    x.mw = r.mw;
    x.rrup = r.rrup;
    x.ln_rrup = std::log(r.rrup);
    x.ln_vs30 = std::log(r.vs30);
    x.ztor = r.ztor;
    x.ln_z1 = std::log(z1);
    x.mw_lnr = x.mw * x.ln_rrup;
    x.fault_flag = r.fault_flag;
    x.region_flag = r.region_flag;
    return x;
}

std::vector<ModelInput> make_inputs(std::span<const Record> records, const Z1Relation& z1_relation) {
    std::vector<ModelInput> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(make_input(r, z1_relation));
    return out;
}

std::vector<std::string> event_ids(const RecordSet& rs) {
    std::vector<std::string> ids;
    ids.reserve(rs.size());
    for (const auto& r : rs.records) ids.push_back(r.event_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::size_t count_events(const RecordSet& rs) { return event_ids(rs).size(); }

}  // namespace hazgam
