#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "crosslag/cli/cli.hpp"
#include "crosslag/data/dataset.hpp"
#include "crosslag/data/mutual_info.hpp"
#include "crosslag/data/synthetic.hpp"
#include "crosslag/errors.hpp"
#include "crosslag/io/checkpoint.hpp"
#include "crosslag/model/attention.hpp"
#include "crosslag/model/forecaster.hpp"
#include "crosslag/version.hpp"

namespace py = pybind11;
using namespace crosslag;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

py::array_t<bool> mask_array(const Mask& m) {
    py::array_t<bool> out({m.rows(), m.cols()});
    auto r = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) r(i, j) = m(i, j);
    return out;
}

// Wraps one history window given directly in normalized units.
WindowSample make_sample(const Array& x, const Array& z, const Array& w, const Array& y, std::size_t pred_len) {
    WindowSample s;
    s.x_hist = to_tensor(x);
    s.z_hist = to_tensor(z);
    s.w_hist = to_tensor(w);
    s.y_hist = to_tensor(y);
    s.x_future = Tensor({pred_len});
    if (s.z_hist.rank() != 2 || s.z_hist.dim(0) != s.x_hist.size())
        throw DimensionError("z_hist must be [seq_len x F]");
    return s;
}

struct Model {
    ModelConfig config;
    ModelParams params;

    Model(const std::string& config_json, std::uint64_t seed)
        : config(ModelConfig::from_json(nlohmann::json::parse(config_json))) {
        config.validate();
        params = init_model(config, seed);
    }
    explicit Model(const Checkpoint& ckpt) : config(ckpt.config), params(ckpt.params) {}
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "CrossLag forecaster core";
    m.attr("__version__") = kVersion;

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<LoadError>(m, "LoadError", base.ptr());
    py::register_exception<CompatibilityError>(m, "CompatibilityError", base.ptr());

    py::class_<TimeSeriesDataset>(m, "Dataset")
        .def_property_readonly("rows", &TimeSeriesDataset::rows)
        .def_readonly("week", &TimeSeriesDataset::week)
        .def_readonly("year", &TimeSeriesDataset::year)
        .def_readonly("target_name", &TimeSeriesDataset::target_name)
        .def_readonly("target", &TimeSeriesDataset::target)
        .def_readonly("feature_names", &TimeSeriesDataset::feature_names)
        .def("feature", &TimeSeriesDataset::feature, py::arg("name"))
        .def("slice", &TimeSeriesDataset::slice, py::arg("begin"), py::arg("end"))
        .def("select", &TimeSeriesDataset::select, py::arg("names"))
        .def("to_csv", [](const TimeSeriesDataset& ds) {
            std::ostringstream os;
            write_dataset(os, ds);
            return os.str();
        })
        .def("__len__", &TimeSeriesDataset::rows);

    m.def("load_dataset", [](const std::string& path) { return load_dataset(path); }, py::arg("path"));
    m.def("parse_dataset", [](const std::string& text) {
        std::istringstream in(text);
        return parse_dataset(in);
    }, py::arg("text"));

    m.def("split_sizes", [](std::size_t rows) {
        auto s = split_sizes(rows, SplitRatios{});
        return py::make_tuple(s.train, s.val, s.test);
    }, py::arg("rows"));

    m.def("default_outbreak_spec", [](std::uint64_t seed) { return default_outbreak_spec(seed).to_json().dump(); },
          py::arg("seed") = 7);
    // Returns (dataset, metadata json text).
    m.def("generate_synthetic", [](const std::string& spec_json) {
        auto spec = SynthSpec::from_json(nlohmann::json::parse(spec_json));
        auto r = generate_synthetic(spec);
        return py::make_tuple(r.dataset, r.metadata.to_json().dump());
    }, py::arg("spec_json"));

    m.def("estimate_mi", [](const std::vector<double>& x, const std::vector<double>& y, int k, std::uint64_t seed) {
        return estimate_mi(x, y, k, seed);
    }, py::arg("x"), py::arg("y"), py::arg("k") = 3, py::arg("seed") = 0);
    m.def("feature_mi", [](const TimeSeriesDataset& ds, int k, std::uint64_t seed) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& f : compute_feature_mi(ds, k, seed).features) out.emplace_back(f.name, f.mi);
        return out;
    }, py::arg("dataset"), py::arg("k") = 3, py::arg("seed") = 0);
    m.def("select_features", [](const TimeSeriesDataset& ds, std::optional<std::size_t> top_k,
                                std::optional<double> min_mi, std::vector<std::string> pinned, int k,
                                std::uint64_t seed) {
        return select_features(ds, SelectionCriteria{top_k, min_mi, std::move(pinned)}, k, seed);
    }, py::arg("dataset"), py::arg("top_k") = py::none(), py::arg("min_mi") = py::none(),
          py::arg("pinned") = std::vector<std::string>{}, py::arg("k") = 3, py::arg("seed") = 0);

    m.def("build_lag_vector", [](int max_lag) { return build_lag_vector(max_lag).lags(); }, py::arg("max_lag"));

    // z_exo [T x F x d] -> [T x L*F x d]
    m.def("lag_bank", [](const Array& z, const std::vector<int>& lags) {
        return to_array(build_lag_bank(Var(to_tensor(z)), LagSpec::from_list(lags)).values.value());
    }, py::arg("z_exo"), py::arg("lags"));
    m.def("valid_key_mask", [](std::size_t steps, const std::vector<int>& lags, std::size_t features) {
        return mask_array(valid_key_mask(steps, LagSpec::from_list(lags), features));
    }, py::arg("steps"), py::arg("lags"), py::arg("features"));

    // Cross-lag attention with freshly initialized projections (no dropout).
    // Returns (output [T x d], weights [T x L*F]).
    m.def("cross_lag_attention", [](const Array& x_endo, const Array& z_exo, const std::vector<int>& lags,
                                    std::size_t d, std::uint64_t seed) {
        Tensor x = to_tensor(x_endo);
        if (x.rank() != 2) throw DimensionError("x_endo must be [T x d_model]");
        Rng rng(seed);
        auto params = init_cross_attention(x.dim(1), d, rng);
        LagSpec spec = LagSpec::from_list(lags);
        auto bank = build_lag_bank(Var(to_tensor(z_exo)), spec);
        auto r = cross_lag_attention(Var(x), bank, valid_key_mask(bank.steps, spec, bank.features), params, 0.0,
                                     nullptr);
        return py::make_tuple(to_array(r.output.value()), to_array(r.trace.weights));
    }, py::arg("x_endo"), py::arg("z_exo"), py::arg("lags"), py::arg("d"), py::arg("seed") = 0);

    m.def("reference_stack_census", []() { return reference_stack_census(ReferenceStack{}); });
    m.def("sha256_hex", &sha256_hex, py::arg("data"));

    py::class_<Model>(m, "Model")
        .def(py::init<const std::string&, std::uint64_t>(), py::arg("config_json") = "{}", py::arg("seed") = 0)
        .def_static("load", [](const std::string& path) { return Model(load_checkpoint(path)); }, py::arg("path"))
        .def_property_readonly("config_json", [](const Model& md) { return md.config.to_json().dump(); })
        .def_property_readonly("parameter_count", [](const Model& md) { return md.params.parameter_count(); })
        .def("parameter_names", [](const Model& md) {
            std::vector<std::string> names;
            for (const auto& p : md.params.named()) names.push_back(p.name);
            return names;
        })
        // Eval-mode forecast from normalized inputs. Returns (forecast, cross-attention weights).
        .def("predict", [](const Model& md, const Array& x, const Array& z, const Array& w, const Array& y) {
            auto sample = make_sample(x, z, w, y, md.config.pred_len);
            ForwardTrace trace;
            auto out = predict(md.params, sample, md.config, &trace);
            return py::make_tuple(out, to_array(trace.cross.weights));
        }, py::arg("x_hist"), py::arg("z_hist"), py::arg("w_hist"), py::arg("y_hist"));

    // Runs the command-line tool in-process; returns (exit code, stdout, stderr).
    m.def("run_cli", [](std::vector<std::string> args) {
        args.insert(args.begin(), "crosslag");
        std::ostringstream out, err;
        int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"));
}
