#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "hazgam/attribution.hpp"
#include "hazgam/checkpoint.hpp"
#include "hazgam/cli.hpp"
#include "hazgam/evaluation.hpp"
#include "hazgam/flatfile.hpp"
#include "hazgam/hazweight.hpp"
#include "hazgam/mixedfx.hpp"
#include "hazgam/run_config.hpp"
#include "hazgam/synth.hpp"
#include "hazgam/train.hpp"

namespace py = pybind11;
using namespace hazgam;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

HazardCoeffs coeffs_or_reference(const std::optional<std::vector<double>>& c) {
    if (!c) return HazardCoeffs::reference();
    if (c->size() != 7) throw DomainError("hazard coefficients must have 7 entries");
    HazardCoeffs h;
    for (std::size_t i = 0; i < 7; ++i) h[i] = (*c)[i];
    return h;
}

std::vector<ModelInput> scenario_inputs(const std::vector<double>& mw, const std::vector<double>& rrup,
                                        const std::vector<double>& vs30, const std::vector<double>& ztor,
                                        const std::vector<int>& fault, const std::vector<int>& region,
                                        const std::optional<std::vector<double>>& z1) {
    const std::size_t n = mw.size();
    if (rrup.size() != n || vs30.size() != n || ztor.size() != n || fault.size() != n || region.size() != n ||
        (z1 && z1->size() != n)) {
        throw ShapeError("scenario arrays must have equal length");
    }
    std::vector<ModelInput> xs;
    for (std::size_t k = 0; k < n; ++k) {
        RawFeatures f;
        f.mw = mw[k];
        f.rrup = rrup[k];
        f.vs30 = vs30[k];
        f.ztor = ztor[k];
        f.fault_flag = fault[k];
        f.region_flag = region[k];
        f.z1 = z1 ? (*z1)[k] : impute_z1(vs30[k]);
        xs.push_back(derive_input(f));
    }
    return xs;
}

TrainedModel train_from_text(const std::string& flatfile_text, const std::string& config_json,
                             std::optional<std::uint64_t> seed) {
    RunConfig c = parse_run_config(config_json);
    if (seed) c.seed = *seed;
    RecordSet rs = parse_flatfile(flatfile_text, "python");
    if (c.screen) rs = screen_records(rs).records;
    const Split sp = split_by_event(rs, c.split, c.stream("split"));
    const HazardFit fit = fit_hazard_gmm(sp.train);
    const TrainingData tr = make_training_data(sp.train, c.grid);
    const TrainingData va = make_training_data(sp.val, c.grid);
    const WeightingContext ctx = make_weighting(fit.coeffs, c.grid);
    TrainedModel m = train(init_network(default_architecture(c.width, c.depth), c.stream("init")), tr, va,
                           c.train_config(), ctx);
    m.hazard = fit.coeffs;
    return m;
}

}  // namespace

PYBIND11_MODULE(_hazgam, m) {
    m.doc() = "Interpretable additive ground-motion model toolkit";
    m.attr("__version__") = version();

    static py::exception<Error> base_exc(m, "HazgamError", PyExc_RuntimeError);
    static py::exception<FitError> fit_exc(m, "FitError", base_exc.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const FitError& e) {
            PyErr_SetString(fit_exc.ptr(), e.what());
        } catch (const Error& e) {
            PyErr_SetString(base_exc.ptr(), e.what());
        }
    });

    m.def("reference_hazard_coeffs", [] {
        const auto c = HazardCoeffs::reference();
        return std::vector<double>(c.c.begin(), c.c.end());
    });

    m.def(
        "eval_hazard",
        [](const std::vector<double>& mw, const std::vector<double>& rrup,
           const std::optional<std::vector<double>>& coeffs) {
            if (mw.size() != rrup.size()) throw ShapeError("mw and rrup lengths differ");
            const HazardCoeffs c = coeffs_or_reference(coeffs);
            std::vector<double> out;
            for (std::size_t k = 0; k < mw.size(); ++k) out.push_back(eval_hazard(c, mw[k], rrup[k]));
            return out;
        },
        py::arg("mw"), py::arg("rrup"), py::arg("coeffs") = py::none(),
        "ln PGA from the hazard relation (reference coefficients by default).");

    m.def(
        "fit_hazard",
        [](const std::vector<double>& mw, const std::vector<double>& rrup, const std::vector<double>& ln_pga) {
            const HazardFit f = fit_hazard_gmm(mw, rrup, ln_pga);
            py::dict d;
            d["coeffs"] = std::vector<double>(f.coeffs.c.begin(), f.coeffs.c.end());
            d["mse"] = f.mse;
            d["mae"] = f.mae;
            d["r2"] = f.r2;
            d["iterations"] = f.iterations;
            d["warnings"] = f.warnings;
            return d;
        },
        py::arg("mw"), py::arg("rrup"), py::arg("ln_pga"));

    m.def("sigmoid_scale", &sigmoid_scale, py::arg("w_raw"));

    m.def(
        "combine_and_scale",
        [](const std::vector<double>& B, const std::vector<double>& H, double alpha) {
            return combine_and_scale(B, H, alpha);
        },
        py::arg("B"), py::arg("H"), py::arg("alpha"));

    m.def(
        "bin_count_component",
        [](const std::vector<double>& mw, const std::vector<double>& rrup) {
            if (mw.size() != rrup.size()) throw ShapeError("mw and rrup lengths differ");
            const BinGrid g;
            std::vector<BinIndex> bins;
            for (std::size_t k = 0; k < mw.size(); ++k) bins.push_back(assign_bin(mw[k], rrup[k], g));
            return bin_count_component(bins, g);
        },
        py::arg("mw"), py::arg("rrup"), "Per-bin inverse-density component on the default grid.");

    m.def(
        "hazbin_loss",
        [](const RowMatrix& pred, const RowMatrix& target, const std::vector<double>& w, double l2,
           double sqnorm) {
            if (pred.cols() != static_cast<Eigen::Index>(kNumChannels)) throw ShapeError("expected N x 27 arrays");
            if (target.rows() != pred.rows() || target.cols() != pred.cols()) throw ShapeError("shape mismatch");
            return hazbin_loss(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                               std::span<const double>(target.data(), static_cast<std::size_t>(target.size())), w,
                               l2, sqnorm);
        },
        py::arg("pred"), py::arg("target"), py::arg("w"), py::arg("l2") = 0.0, py::arg("params_sq_norm") = 0.0);

    m.def(
        "metrics",
        [](const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
            const MetricRow r = metrics(pred.transpose(), target.transpose());
            py::dict d;
            d["mse"] = r.mse;
            d["mae"] = r.mae;
            d["r2"] = r.r2;
            d["n_records"] = r.n_records;
            d["r2_undefined"] = r.r2_undefined;
            return d;
        },
        py::arg("pred"), py::arg("target"), "Pooled MSE, MAE and R2 (percent) for N x 27 arrays.");

    m.def(
        "synth_flatfile",
        [](std::uint64_t seed, const std::string& synth_json) {
            RunConfig c = parse_run_config(synth_json.empty() ? "{}" : "{\"synth\": " + synth_json + "}");
            return write_flatfile(synth_generate(c.synth, seed).records);
        },
        py::arg("seed"), py::arg("synth_config_json") = "", "Synthetic flatfile CSV text.");

    m.def(
        "screen_flatfile",
        [](const std::string& text) {
            const ScreenResult r = screen_records(parse_flatfile(text));
            return py::make_tuple(write_flatfile(r.records), r.report.to_json());
        },
        py::arg("text"), "Screen flatfile CSV text; returns (csv, report_json).");

    m.def(
        "flatfile_arrays",
        [](const std::string& text) {
            const RecordSet rs = parse_flatfile(text);
            std::vector<std::string> ev, st;
            std::vector<double> mw, rrup, vs30, ztor;
            std::vector<int> fault, region;
            Eigen::MatrixXd y(static_cast<Eigen::Index>(rs.size()), static_cast<Eigen::Index>(kNumChannels));
            for (std::size_t k = 0; k < rs.size(); ++k) {
                const auto& r = rs.records[k];
                ev.push_back(r.event_id);
                st.push_back(r.station_id);
                mw.push_back(r.mw);
                rrup.push_back(r.rrup);
                vs30.push_back(r.vs30);
                ztor.push_back(r.ztor);
                fault.push_back(r.fault_flag);
                region.push_back(r.region_flag);
                for (std::size_t c = 0; c < kNumChannels; ++c) {
                    y(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = r.targets[c];
                }
            }
            py::dict d;
            d["event_id"] = ev;
            d["station_id"] = st;
            d["mw"] = mw;
            d["rrup"] = rrup;
            d["vs30"] = vs30;
            d["ztor"] = ztor;
            d["fault_flag"] = fault;
            d["region_flag"] = region;
            d["targets"] = y;
            return d;
        },
        py::arg("text"));

    m.def(
        "fit_variance_components",
        [](const Eigen::MatrixXd& residuals, const std::vector<std::string>& event_id,
           const std::vector<int>& region_flag) {
            if (event_id.size() != region_flag.size()) throw ShapeError("event and region lengths differ");
            Grouping g;
            g.region = region_flag;
            std::vector<std::string> names = event_id;
            std::sort(names.begin(), names.end());
            names.erase(std::unique(names.begin(), names.end()), names.end());
            for (const auto& e : event_id) {
                g.event.push_back(static_cast<std::size_t>(
                    std::lower_bound(names.begin(), names.end(), e) - names.begin()));
            }
            g.event_names = names;
            const VarianceComponents vc = fit_variance_components(residuals, g);
            auto vec = [](const Spectrum& s) { return std::vector<double>(s.begin(), s.end()); };
            py::dict d;
            d["mu"] = vec(vc.mu);
            d["tau"] = vec(vc.tau);
            d["phi_r"] = vec(vc.phi_r);
            d["phi"] = vec(vc.phi);
            d["sigma"] = vec(vc.sigma);
            d["log_likelihood"] = vc.total_log_likelihood();
            return d;
        },
        py::arg("residuals"), py::arg("event_id"), py::arg("region_flag"),
        "Per-channel nested random-intercept fits of an N x 27 residual array.");

    py::class_<TrainedModel>(m, "Model")
        .def_static("from_json", &load_checkpoint, py::arg("text"))
        .def("to_json", &save_checkpoint)
        .def_property_readonly("pathways", [](const TrainedModel& t) { return t.params.pathway_names(); })
        .def_property_readonly("history",
                               [](const TrainedModel& t) {
                                   std::vector<std::tuple<std::size_t, double, double>> h;
                                   for (const auto& e : t.history.epochs) h.emplace_back(e.epoch, e.train_loss, e.val_loss);
                                   return h;
                               })
        .def(
            "predict",
            [](const TrainedModel& t, const std::vector<double>& mw, const std::vector<double>& rrup,
               const std::vector<double>& vs30, const std::vector<double>& ztor, const std::vector<int>& fault,
               const std::vector<int>& region, const std::optional<std::vector<double>>& z1) {
                const auto xs = scenario_inputs(mw, rrup, vs30, ztor, fault, region, z1);
                return Eigen::MatrixXd(predict_batch(t.params, xs).transpose());
            },
            py::arg("mw"), py::arg("rrup"), py::arg("vs30"), py::arg("ztor"), py::arg("fault_flag"),
            py::arg("region_flag"), py::arg("z1") = py::none(), "N x 27 ln-intensity predictions.")
        .def(
            "contributions",
            [](const TrainedModel& t, const std::vector<double>& mw, const std::vector<double>& rrup,
               const std::vector<double>& vs30, const std::vector<double>& ztor, const std::vector<int>& fault,
               const std::vector<int>& region, const std::optional<std::vector<double>>& z1) {
                const auto xs = scenario_inputs(mw, rrup, vs30, ztor, fault, region, z1);
                const BatchOutput out = forward_batch(t.params, xs);
                py::dict d;
                for (std::size_t p = 0; p < out.pathway.size(); ++p) {
                    d[py::str(t.params.pathways[p].spec.name)] = Eigen::MatrixXd(out.pathway[p].transpose());
                }
                d["bias"] = Eigen::VectorXd(t.params.bias);
                return d;
            },
            py::arg("mw"), py::arg("rrup"), py::arg("vs30"), py::arg("ztor"), py::arg("fault_flag"),
            py::arg("region_flag"), py::arg("z1") = py::none(), "Per-pathway N x 27 contributions plus bias.");

    m.def("train_model", &train_from_text, py::arg("flatfile_text"), py::arg("config_json") = "{}",
          py::arg("seed") = py::none(), "Screen, split, fit the hazard relation and train a model.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a CLI command in-process; returns (exit_code, stdout, stderr).");
}
