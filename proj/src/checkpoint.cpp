#include "hazgam/checkpoint.hpp"

#include <cmath>
#include <limits>

#include "json_io.hpp"

namespace hazgam {
namespace detail {

json to_json(const TrainConfig& c) {
    return json{{"loss_mode", to_string(c.loss_mode)},
                {"alpha", c.alpha},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"l2", c.l2},
                {"max_epochs", c.max_epochs},
                {"patience", c.patience},
                {"seed", c.seed},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"adam_eps", c.adam_eps},
                {"init_bias_from_data", c.init_bias_from_data}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    if (j.contains("loss_mode")) c.loss_mode = loss_mode_from_string(j.at("loss_mode").get<std::string>());
    read_opt(j, "alpha", c.alpha);
    read_opt(j, "batch_size", c.batch_size);
    read_opt(j, "learning_rate", c.learning_rate);
    read_opt(j, "l2", c.l2);
    read_opt(j, "max_epochs", c.max_epochs);
    read_opt(j, "patience", c.patience);
    read_opt(j, "seed", c.seed);
    read_opt(j, "beta1", c.beta1);
    read_opt(j, "beta2", c.beta2);
    read_opt(j, "adam_eps", c.adam_eps);
    read_opt(j, "init_bias_from_data", c.init_bias_from_data);
    return c;
}

json to_json(const HazardCoeffs& c) { return json(c.c); }

HazardCoeffs hazard_from_json(const json& j) {
    if (!j.is_array() || j.size() != 7) throw ConfigError("hazard coefficients must be 7 numbers");
    HazardCoeffs c;
    for (std::size_t i = 0; i < 7; ++i) c[i] = j.at(i).get<double>();
    return c;
}

json to_json(const BinGrid& g) { return json{{"mw_edges", g.mw_edges}, {"rrup_edges", g.rrup_edges}}; }

BinGrid grid_from_json(const json& j) {
    BinGrid g;
    read_opt(j, "mw_edges", g.mw_edges);
    read_opt(j, "rrup_edges", g.rrup_edges);
    g.validate();
    return g;
}

json to_json(const SynthConfig& c) {
    return json{{"n_events", c.n_events},
                {"min_records_per_event", c.min_records_per_event},
                {"max_records_per_event", c.max_records_per_event},
                {"regions", c.regions},
                {"region_weights", c.region_weights},
                {"mw_min", c.mw_min},
                {"mw_max", c.mw_max},
                {"b_value", c.b_value},
                {"rrup_min", c.rrup_min},
                {"rrup_max", c.rrup_max},
                {"distance_power", c.distance_power},
                {"vs30_min", c.vs30_min},
                {"vs30_max", c.vs30_max},
                {"ztor_max", c.ztor_max},
                {"z1_log_sd", c.z1_log_sd},
                {"tau", c.tau},
                {"phi_r", c.phi_r},
                {"phi", c.phi},
                {"site_coeff", c.site_coeff},
                {"period_seed", c.period_seed},
                {"base", to_json(c.base)}};
}

SynthConfig synth_config_from_json(const json& j, SynthConfig c) {
    if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
    read_opt(j, "n_events", c.n_events);
    read_opt(j, "min_records_per_event", c.min_records_per_event);
    read_opt(j, "max_records_per_event", c.max_records_per_event);
    read_opt(j, "regions", c.regions);
    read_opt(j, "region_weights", c.region_weights);
    read_opt(j, "mw_min", c.mw_min);
    read_opt(j, "mw_max", c.mw_max);
    read_opt(j, "b_value", c.b_value);
    read_opt(j, "rrup_min", c.rrup_min);
    read_opt(j, "rrup_max", c.rrup_max);
    read_opt(j, "distance_power", c.distance_power);
    read_opt(j, "vs30_min", c.vs30_min);
    read_opt(j, "vs30_max", c.vs30_max);
    read_opt(j, "ztor_max", c.ztor_max);
    read_opt(j, "z1_log_sd", c.z1_log_sd);
    read_opt(j, "tau", c.tau);
    read_opt(j, "phi_r", c.phi_r);
    read_opt(j, "phi", c.phi);
    read_opt(j, "site_coeff", c.site_coeff);
    read_opt(j, "period_seed", c.period_seed);
    if (j.contains("base")) c.base = hazard_from_json(j.at("base"));
    c.validate();
    return c;
}

json to_json(const PathwaySpec& s) {
    return json{{"name", s.name},
                {"input", to_string(s.input)},
                {"hidden", s.hidden},
                {"monotone", to_string(s.monotone)},
                {"categorical_arity", s.categorical_arity},
                {"input_center", s.input_center},
                {"input_scale", s.input_scale},
                {"inject_from", s.inject_from}};
}

PathwaySpec pathway_spec_from_json(const json& j) {
    PathwaySpec s;
    s.name = j.at("name").get<std::string>();
    s.input = input_field_from_string(j.at("input").get<std::string>());
    s.hidden = j.at("hidden").get<std::vector<int>>();
    s.monotone = monotone_from_string(j.at("monotone").get<std::string>());
    s.categorical_arity = j.at("categorical_arity").get<int>();
    s.input_center = j.at("input_center").get<double>();
    s.input_scale = j.at("input_scale").get<double>();
    read_opt(j, "inject_from", s.inject_from);
    return s;
}

}  // namespace detail

namespace {

using detail::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw ConfigError("checkpoint: weight tensor has wrong row count");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j.at(static_cast<std::size_t>(r));
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ConfigError("checkpoint: weight tensor has wrong column count");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vector_from_json(const json& j, Eigen::Index n) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
        throw ConfigError("checkpoint: bias vector has wrong length");
    }
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

std::string save_checkpoint(const TrainedModel& m) {
    json arch = json::array();
    json pathways = json::array();
    for (const auto& pw : m.params.pathways) {
        arch.push_back(detail::to_json(pw.spec));
        json layers = json::array();
        for (const auto& l : pw.layers) {
            layers.push_back({{"W", matrix_to_json(l.W)}, {"b", vector_to_json(l.b)}});
        }
        pathways.push_back({{"name", pw.spec.name}, {"layers", std::move(layers)}});
    }
    json epochs = json::array();
    for (const auto& e : m.history.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", finite_or_null(e.train_loss)},
                          {"val_loss", finite_or_null(e.val_loss)}});
    }
    json doc{{"format_version", kCheckpointFormatVersion},
             {"architecture", std::move(arch)},
             {"pathways", std::move(pathways)},
             {"bias", vector_to_json(m.params.bias)},
             {"rng_seed", m.params.rng_seed},
             {"train_config", detail::to_json(m.config)},
             {"grid", detail::to_json(m.grid)},
             {"hazard_coeffs", m.hazard ? detail::to_json(*m.hazard) : json(nullptr)},
             {"history",
              {{"epochs", std::move(epochs)},
               {"best_epoch", m.history.best_epoch},
               {"best_val_loss", finite_or_null(m.history.best_val_loss)},
               {"early_stopped", m.history.early_stopped},
               {"diverged", m.history.diverged}}}};
    return doc.dump(1) + "\n";
}

TrainedModel load_checkpoint(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        const int version = doc.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion) {
            throw ConfigError("unsupported checkpoint format_version " + std::to_string(version));
        }
        std::vector<PathwaySpec> arch;
        for (const auto& s : doc.at("architecture")) arch.push_back(detail::pathway_spec_from_json(s));

        TrainedModel m;
        // init_network fixes every tensor shape; values are then overwritten.
        m.params = init_network(arch, doc.at("rng_seed").get<std::uint64_t>());
        const auto& pws = doc.at("pathways");
        if (pws.size() != m.params.pathways.size()) throw ConfigError("checkpoint: pathway count mismatch");
        for (std::size_t i = 0; i < pws.size(); ++i) {
            auto& pw = m.params.pathways[i];
            if (pws[i].at("name").get<std::string>() != pw.spec.name) {
                throw ConfigError("checkpoint: pathway order mismatch");
            }
            const auto& layers = pws[i].at("layers");
            if (layers.size() != pw.layers.size()) throw ConfigError("checkpoint: layer count mismatch");
            for (std::size_t l = 0; l < layers.size(); ++l) {
                auto& dst = pw.layers[l];
                dst.W = matrix_from_json(layers[l].at("W"), dst.W.rows(), dst.W.cols());
                dst.b = vector_from_json(layers[l].at("b"), dst.b.size());
            }
        }
        m.params.bias = vector_from_json(doc.at("bias"), static_cast<Eigen::Index>(kNumChannels));
        m.config = detail::train_config_from_json(doc.at("train_config"));
        m.grid = detail::grid_from_json(doc.at("grid"));
        if (!doc.at("hazard_coeffs").is_null()) m.hazard = detail::hazard_from_json(doc.at("hazard_coeffs"));
        const auto& h = doc.at("history");
        for (const auto& e : h.at("epochs")) {
            m.history.epochs.push_back({e.at("epoch").get<std::size_t>(), number_or_inf(e.at("train_loss")),
                                        number_or_inf(e.at("val_loss"))});
        }
        m.history.best_epoch = h.at("best_epoch").get<std::size_t>();
        m.history.best_val_loss = number_or_inf(h.at("best_val_loss"));
        m.history.early_stopped = h.at("early_stopped").get<bool>();
        m.history.diverged = h.at("diverged").get<bool>();
        return m;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed checkpoint: ") + e.what());
    }
}

void write_checkpoint(const std::string& path, const TrainedModel& m) {
    write_file_atomic(path, save_checkpoint(m));
}

TrainedModel read_checkpoint(const std::string& path) { return load_checkpoint(read_file(path)); }

}  // namespace hazgam
