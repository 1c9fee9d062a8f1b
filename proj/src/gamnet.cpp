#include "hazgam/gamnet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace hazgam {

std::string to_string(InputField f) {
    switch (f) {
        case InputField::mw: return "mw";
        case InputField::ln_rrup: return "ln_rrup";
        case InputField::rrup: return "rrup";
        case InputField::ln_vs30: return "ln_vs30";
        case InputField::ztor: return "ztor";
        case InputField::ln_z1: return "ln_z1";
        case InputField::mw_lnr: return "mw_lnr";
        case InputField::fault_flag: return "fault_flag";
        case InputField::region_flag: return "region_flag";
    }
    return "?";
}

std::string to_string(Monotone m) {
    switch (m) {
        case Monotone::none: return "none";
        case Monotone::increasing: return "increasing";
        case Monotone::decreasing: return "decreasing";
    }
    return "?";
}

InputField input_field_from_string(const std::string& s) {
    for (auto f : {InputField::mw, InputField::ln_rrup, InputField::rrup, InputField::ln_vs30,
                   InputField::ztor, InputField::ln_z1, InputField::mw_lnr, InputField::fault_flag,
                   InputField::region_flag}) {
        if (to_string(f) == s) return f;
    }
    throw ConfigError("unknown pathway input '" + s + "'");
}

Monotone monotone_from_string(const std::string& s) {
    for (auto m : {Monotone::none, Monotone::increasing, Monotone::decreasing}) {
        if (to_string(m) == s) return m;
    }
    throw ConfigError("unknown monotone direction '" + s + "'");
}

double input_value(const ModelInput& x, InputField f) {
    switch (f) {
        case InputField::mw: return x.mw;
        case InputField::ln_rrup: return x.ln_rrup;
        case InputField::rrup: return x.rrup;
        case InputField::ln_vs30: return x.ln_vs30;
        case InputField::ztor: return x.ztor;
        case InputField::ln_z1: return x.ln_z1;
        case InputField::mw_lnr: return x.mw_lnr;
        case InputField::fault_flag: return x.fault_flag;
        case InputField::region_flag: return x.region_flag;
    }
    return 0.0;
}

std::vector<PathwaySpec> default_architecture(int width, int depth) {
    std::vector<int> hidden(static_cast<std::size_t>(depth), width);
    auto mlp = [&](std::string name, InputField in, Monotone m, double center, double scale) {
        PathwaySpec s;
        s.name = std::move(name);
        s.input = in;
        s.hidden = hidden;
        s.monotone = m;
        s.input_center = center;
        s.input_scale = scale;
        return s;
    };
    std::vector<PathwaySpec> arch;
    arch.push_back(mlp("mag", InputField::mw, Monotone::increasing, 5.5, 1.5));
    PathwaySpec fm = mlp("mag_fm", InputField::fault_flag, Monotone::none, 0.0, 1.0);
    fm.categorical_arity = kNumFaultFlags;
    fm.inject_from = "mag";
    arch.push_back(fm);
    arch.push_back(mlp("geo", InputField::ln_rrup, Monotone::decreasing, 3.5, 1.5));
    arch.push_back(mlp("anelas", InputField::rrup, Monotone::decreasing, 150.0, 100.0));
    arch.push_back(mlp("linsite", InputField::ln_vs30, Monotone::decreasing, 6.2, 0.6));
    arch.push_back(mlp("depth", InputField::ztor, Monotone::increasing, 10.0, 6.0));
    arch.push_back(mlp("basin", InputField::ln_z1, Monotone::none, 5.0, 2.0));
    arch.push_back(mlp("mag_geo", InputField::mw_lnr, Monotone::none, 20.0, 10.0));
    PathwaySpec reg = mlp("region", InputField::region_flag, Monotone::none, 0.0, 1.0);
    reg.categorical_arity = kNumRegions;
    reg.hidden.clear();
    arch.push_back(reg);
    return arch;
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = static_cast<std::size_t>(bias.size());
    for (const auto& pw : pathways) {
        for (const auto& l : pw.layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
    }
    return n;
}

double NetworkParams::squared_norm() const {
    double s = bias.squaredNorm();
    for (const auto& pw : pathways) {
        for (const auto& l : pw.layers) s += l.W.squaredNorm() + l.b.squaredNorm();
    }
    return s;
}

std::optional<std::size_t> NetworkParams::find(const std::string& name) const {
    for (std::size_t i = 0; i < pathways.size(); ++i) {
        if (pathways[i].spec.name == name) return i;
    }
    return std::nullopt;
}

std::vector<std::string> NetworkParams::pathway_names() const {
    std::vector<std::string> names;
    for (const auto& pw : pathways) names.push_back(pw.spec.name);
    return names;
}

namespace {

bool is_categorical(const PathwaySpec& s) { return s.categorical_arity > 0; }

std::size_t first_hidden_width(const PathwaySpec& s) {
    return s.hidden.empty() ? 0 : static_cast<std::size_t>(s.hidden.front());
}

int category_offset(InputField f) { return f == InputField::region_flag ? 1 : 0; }

}  // namespace

void validate_architecture(const std::vector<PathwaySpec>& arch) {
    if (arch.empty()) throw ConfigError("architecture has no pathways");
    std::map<std::string, const PathwaySpec*> by_name;
    for (const auto& s : arch) {
        if (s.name.empty()) throw ConfigError("pathway with empty name");
        if (!by_name.emplace(s.name, &s).second) {
            throw ConfigError("duplicate pathway name '" + s.name + "'");
        }
        for (int w : s.hidden) {
            if (w <= 0) throw ConfigError("pathway '" + s.name + "' has a non-positive width");
        }
        const bool flag_input =
            s.input == InputField::fault_flag || s.input == InputField::region_flag;
        if (flag_input != is_categorical(s)) {
            throw ConfigError("pathway '" + s.name + "': flag inputs must be categorical and vice versa");
        }
        if (s.input == InputField::fault_flag && s.categorical_arity != kNumFaultFlags) {
            throw ConfigError("pathway '" + s.name + "': fault flag arity must be 3");
        }
        if (s.input == InputField::region_flag && s.categorical_arity != kNumRegions) {
            throw ConfigError("pathway '" + s.name + "': region flag arity must be 7");
        }
        if (is_categorical(s) && s.monotone != Monotone::none) {
            throw ConfigError("pathway '" + s.name + "': categorical pathways cannot be monotone");
        }
        if (!is_categorical(s) && !(s.input_scale > 0)) {
            throw ConfigError("pathway '" + s.name + "': input_scale must be positive");
        }
    }
    for (const auto& s : arch) {
        if (s.inject_from.empty()) continue;
        auto it = by_name.find(s.inject_from);
        if (it == by_name.end()) {
            throw ConfigError("pathway '" + s.name + "' injects from unknown '" + s.inject_from + "'");
        }
        if (!it->second->inject_from.empty()) {
            throw ConfigError("injection source '" + s.inject_from + "' may not itself inject");
        }
        if (it->second->hidden.empty() || s.hidden.empty()) {
            throw ConfigError("injection needs a hidden layer on both '" + s.name + "' and '" +
                              s.inject_from + "'");
        }
    }
}

NetworkParams init_network(const std::vector<PathwaySpec>& arch, std::uint64_t seed) {
    validate_architecture(arch);
    NetworkParams p;
    p.rng_seed = seed;
    p.bias = Eigen::VectorXd::Zero(kNumChannels);
    std::map<std::string, std::size_t> h1;
    for (const auto& s : arch) h1[s.name] = first_hidden_width(s);

    for (std::size_t pi = 0; pi < arch.size(); ++pi) {
        const auto& s = arch[pi];
        Rng rng(mix_seed(seed, 1000 + pi));
        PathwayParams pw;
        pw.spec = s;
        std::vector<std::size_t> widths;
        widths.push_back(is_categorical(s) ? static_cast<std::size_t>(s.categorical_arity) : 1);
        for (int w : s.hidden) widths.push_back(static_cast<std::size_t>(w));
        widths.push_back(kNumChannels);
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            std::size_t in = widths[l];
            if (l == 1 && !s.inject_from.empty()) in += h1[s.inject_from];
            const std::size_t out = widths[l + 1];
            const bool last = l + 2 == widths.size();
            const double limit = (last ? 0.5 : 1.0) * std::sqrt(6.0 / static_cast<double>(in + out));
            DenseLayer layer;
            layer.W.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
            for (Eigen::Index c = 0; c < layer.W.cols(); ++c) {
                for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
                    layer.W(r, c) = limit * (2.0 * uniform01(rng) - 1.0);
                }
            }
            layer.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
            pw.layers.push_back(std::move(layer));
        }
        p.pathways.push_back(std::move(pw));
    }
    // Reflect (rather than clamp) monotone pathways into the feasible set so
    // they do not start with half their weights at zero.
    for (auto& pw : p.pathways) {
        if (pw.spec.monotone == Monotone::none || is_categorical(pw.spec)) continue;
        for (std::size_t l = 0; l < pw.layers.size(); ++l) {
            auto& W = pw.layers[l].W;
            W = W.cwiseAbs();
            if (l == 0 && pw.spec.monotone == Monotone::decreasing) W = -W;
        }
    }
    return p;
}

NetworkParams zeros_like(const NetworkParams& p) {
    NetworkParams z = p;
    for_each_tensor(z, [](auto& t) { t.setZero(); });
    return z;
}

std::vector<double> flatten(const NetworkParams& p) {
    std::vector<double> out;
    out.reserve(p.parameter_count());
    NetworkParams& mp = const_cast<NetworkParams&>(p);
    for_each_tensor(mp, [&](auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) out.push_back(t.data()[i]);
    });
    return out;
}

void unflatten(NetworkParams& p, std::span<const double> values) {
    if (values.size() != p.parameter_count()) throw ShapeError("unflatten: size mismatch");
    std::size_t k = 0;
    for_each_tensor(p, [&](auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = values[k++];
    });
}

const Spectrum& PathwayContributions::operator[](const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return pathway[i];
    }
    throw DomainError("no pathway named '" + name + "'");
}

namespace {

Eigen::MatrixXd encode(const PathwaySpec& s, std::span<const ModelInput> xs) {
    const auto n = static_cast<Eigen::Index>(xs.size());
    if (!is_categorical(s)) {
        Eigen::MatrixXd m(1, n);
        for (Eigen::Index k = 0; k < n; ++k) {
            m(0, k) = (input_value(xs[static_cast<std::size_t>(k)], s.input) - s.input_center) /
                      s.input_scale;
        }
        return m;
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(s.categorical_arity, n);
    const int offset = category_offset(s.input);
    for (Eigen::Index k = 0; k < n; ++k) {
        const int flag = static_cast<int>(input_value(xs[static_cast<std::size_t>(k)], s.input));
        const int idx = flag - offset;
        if (idx < 0 || idx >= s.categorical_arity) {
            throw DomainError("pathway '" + s.name + "': " + to_string(s.input) + " value " +
                              std::to_string(flag) + " out of range");
        }
        m(idx, k) = 1.0;
    }
    return m;
}

struct PathwayTrace {
    std::vector<Eigen::MatrixXd> inputs;  // inputs[l] feeds layer l
    Eigen::MatrixXd out;                  // 27 x N
};

// Sources before consumers; otherwise architecture order.
std::vector<std::size_t> evaluation_order(const NetworkParams& p) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < p.pathways.size(); ++i) {
        if (p.pathways[i].spec.inject_from.empty()) order.push_back(i);
    }
    for (std::size_t i = 0; i < p.pathways.size(); ++i) {
        if (!p.pathways[i].spec.inject_from.empty()) order.push_back(i);
    }
    return order;
}

std::vector<PathwayTrace> run_pathways(const NetworkParams& p, std::span<const ModelInput> xs) {
    std::vector<PathwayTrace> traces(p.pathways.size());
    for (std::size_t pi : evaluation_order(p)) {
        const auto& pw = p.pathways[pi];
        auto& tr = traces[pi];
        Eigen::MatrixXd a = encode(pw.spec, xs);
        const std::size_t nl = pw.layers.size();
        tr.inputs.reserve(nl);
        for (std::size_t l = 0; l < nl; ++l) {
            if (l == 1 && !pw.spec.inject_from.empty()) {
                const auto src = *p.find(pw.spec.inject_from);
                const Eigen::MatrixXd& h = traces[src].inputs[1];
                Eigen::MatrixXd joined(a.rows() + h.rows(), a.cols());
                joined << a, h;
                a = std::move(joined);
            }
            tr.inputs.push_back(a);
            Eigen::MatrixXd z = pw.layers[l].W * a;
            z.colwise() += pw.layers[l].b;
            if (l + 1 < nl) {
                a = z.array().tanh().matrix();
            } else {
                tr.out = std::move(z);
            }
        }
        if (!tr.out.allFinite()) {
            throw NumericError("pathway '" + pw.spec.name + "' produced a non-finite output");
        }
    }
    return traces;
}

Eigen::MatrixXd sum_total(const NetworkParams& p, const std::vector<PathwayTrace>& traces,
                          Eigen::Index n) {
    Eigen::MatrixXd total = p.bias.replicate(1, n);
    for (const auto& tr : traces) total += tr.out;
    return total;
}

}  // namespace

BatchOutput forward_batch(const NetworkParams& p, std::span<const ModelInput> xs) {
    auto traces = run_pathways(p, xs);
    BatchOutput out;
    out.total = sum_total(p, traces, static_cast<Eigen::Index>(xs.size()));
    out.pathway.reserve(traces.size());
    for (auto& tr : traces) out.pathway.push_back(std::move(tr.out));
    return out;
}

PathwayContributions forward(const NetworkParams& p, const ModelInput& x) {
    const auto out = forward_batch(p, std::span<const ModelInput>(&x, 1));
    PathwayContributions pc;
    pc.names = p.pathway_names();
    pc.pathway.resize(p.pathways.size());
    for (std::size_t i = 0; i < p.pathways.size(); ++i) {
        for (std::size_t c = 0; c < kNumChannels; ++c) {
            pc.pathway[i][c] = out.pathway[i](static_cast<Eigen::Index>(c), 0);
        }
    }
    for (std::size_t c = 0; c < kNumChannels; ++c) {
        pc.bias[c] = p.bias(static_cast<Eigen::Index>(c));
        pc.total[c] = out.total(static_cast<Eigen::Index>(c), 0);
    }
    return pc;
}

PathwayContributions predict_spectrum(const NetworkParams& p, const ModelInput& scenario) {
    return forward(p, scenario);
}

Eigen::MatrixXd pathway_output(const NetworkParams& p, std::size_t pathway,
                               std::span<const ModelInput> xs) {
    if (pathway >= p.pathways.size()) throw DomainError("pathway index out of range");
    auto traces = run_pathways(p, xs);
    return std::move(traces[pathway].out);
}

namespace {

void check_batch(std::span<const ModelInput> xs, const Eigen::MatrixXd& targets,
                 std::span<const double> weights) {
    if (xs.empty()) throw ShapeError("empty batch");
    if (targets.rows() != static_cast<Eigen::Index>(kNumChannels) ||
        targets.cols() != static_cast<Eigen::Index>(xs.size()) || weights.size() != xs.size()) {
        throw ShapeError("batch shapes disagree: expected 27 x N targets and N weights");
    }
}

double weighted_loss(const Eigen::MatrixXd& residual, std::span<const double> weights) {
    const double n = static_cast<double>(weights.size());
    double total = 0.0;
    for (Eigen::Index k = 0; k < residual.cols(); ++k) {
        total += weights[static_cast<std::size_t>(k)] *
                 (residual.col(k).squaredNorm() / static_cast<double>(kNumChannels));
    }
    return total / n;
}

}  // namespace

double loss_only(const NetworkParams& p, std::span<const ModelInput> xs,
                 const Eigen::MatrixXd& targets, std::span<const double> weights, double l2) {
    check_batch(xs, targets, weights);
    const auto out = forward_batch(p, xs);
    const double reg = l2 > 0 ? l2 * p.squared_norm() : 0.0;
    return weighted_loss(out.total - targets, weights) + reg;
}

LossAndGradient loss_and_gradients(const NetworkParams& p, std::span<const ModelInput> xs,
                                   const Eigen::MatrixXd& targets, std::span<const double> weights,
                                   double l2) {
    check_batch(xs, targets, weights);
    const auto n = static_cast<Eigen::Index>(xs.size());
    auto traces = run_pathways(p, xs);
    const Eigen::MatrixXd residual = sum_total(p, traces, n) - targets;

    LossAndGradient res;
    res.loss = weighted_loss(residual, weights) + (l2 > 0 ? l2 * p.squared_norm() : 0.0);
    if (!std::isfinite(res.loss)) throw NumericError("loss is not finite");
    res.gradient = zeros_like(p);
    auto& g = res.gradient;

    // d loss / d total
    Eigen::MatrixXd G = residual;
    const double scale = 2.0 / (static_cast<double>(kNumChannels) * static_cast<double>(n));
    for (Eigen::Index k = 0; k < n; ++k) G.col(k) *= scale * weights[static_cast<std::size_t>(k)];
    g.bias = G.rowwise().sum();

    std::vector<Eigen::MatrixXd> injected(p.pathways.size());
    auto order = evaluation_order(p);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::size_t pi = *it;
        const auto& pw = p.pathways[pi];
        const auto& tr = traces[pi];
        auto& gp = g.pathways[pi];
        Eigen::MatrixXd d_out = G;
        for (std::size_t l = pw.layers.size(); l-- > 0;) {
            const Eigen::MatrixXd& a = tr.inputs[l];
            gp.layers[l].W.noalias() = d_out * a.transpose();
            gp.layers[l].b = d_out.rowwise().sum();
            if (l == 0) break;
            Eigen::MatrixXd d_a = pw.layers[l].W.transpose() * d_out;
            if (l == 1 && !pw.spec.inject_from.empty()) {
                const auto src = *p.find(pw.spec.inject_from);
                const Eigen::Index own = static_cast<Eigen::Index>(pw.spec.hidden.front());
                const Eigen::Index ext = d_a.rows() - own;
                if (injected[src].size() == 0) injected[src] = Eigen::MatrixXd::Zero(ext, n);
                injected[src] += d_a.bottomRows(ext);
                d_a = Eigen::MatrixXd(d_a.topRows(own));
            }
            if (l == 1 && injected[pi].size() != 0) d_a += injected[pi];
            const Eigen::Index own_rows = d_a.rows();
            const auto act = a.topRows(own_rows).array();
            d_out = (d_a.array() * (1.0 - act * act)).matrix();
        }
    }

    if (l2 > 0) {
        for_each_tensor(g, p, [&](auto& gt, const auto& pt) { gt += 2.0 * l2 * pt; });
    }
    return res;
}

void apply_monotonic_projection(NetworkParams& p) {
    for (auto& pw : p.pathways) {
        if (pw.spec.monotone == Monotone::none || is_categorical(pw.spec)) continue;
        for (std::size_t l = 0; l < pw.layers.size(); ++l) {
            auto& W = pw.layers[l].W;
            if (l == 0 && pw.spec.monotone == Monotone::decreasing) {
                W = W.cwiseMin(0.0);
            } else {
                W = W.cwiseMax(0.0);
            }
        }
    }
}

NetworkParams projected(NetworkParams p) {
    apply_monotonic_projection(p);
    return p;
}

bool satisfies_monotone_constraints(const NetworkParams& p) {
    for (const auto& pw : p.pathways) {
        if (pw.spec.monotone == Monotone::none || is_categorical(pw.spec)) continue;
        for (std::size_t l = 0; l < pw.layers.size(); ++l) {
            const auto& W = pw.layers[l].W;
            if (l == 0 && pw.spec.monotone == Monotone::decreasing) {
                if (W.maxCoeff() > 0.0) return false;
            } else if (W.minCoeff() < 0.0) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace hazgam
