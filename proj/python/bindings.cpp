#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "weasul/active_loop.hpp"
#include "weasul/errors.hpp"
#include "weasul/json_io.hpp"
#include "weasul/label_server.hpp"
#include "weasul/metrics.hpp"

namespace py = pybind11;
using namespace weasul;

namespace {

LabelMatrix to_label_matrix(const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& m) {
    if ((m.array() < 0).any() || (m.array() > 1).any()) {
        throw Error(ErrorKind::InvalidArgument, "weak labels must be 0 or 1");
    }
    return LabelMatrix(m.cast<std::uint8_t>());
}

LabeledSet to_labeled(const std::vector<std::pair<std::size_t, int>>& pairs) {
    LabeledSet out;
    for (const auto& [p, y] : pairs) out.add(p, y);
    return out;
}

std::vector<std::uint8_t> to_config(const std::vector<int>& config) {
    std::vector<std::uint8_t> out;
    for (int v : config) {
        if (v != 0 && v != 1) throw Error(ErrorKind::InvalidArgument, "configuration entries must be 0 or 1");
        out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

py::tuple response(const Response& r) { return py::make_tuple(r.status, r.body.dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Active weak supervision core";

    static py::exception<Error> weasul_error(m, "WeasulError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object kind = py::str(to_string(e.kind()));
            PyErr_SetObject(weasul_error.ptr(), py::make_tuple(py::str(e.what()), kind).ptr());
        }
    });

    py::class_<LabelMatrix>(m, "LabelMatrix")
        .def(py::init(&to_label_matrix), py::arg("values"))
        .def_property_readonly("rows", &LabelMatrix::rows)
        .def_property_readonly("cols", &LabelMatrix::cols)
        .def("to_numpy", [](const LabelMatrix& lm) -> Eigen::MatrixXi { return lm.values().cast<int>(); });

    py::class_<DependencyStructure>(m, "DependencyStructure")
        .def(py::init([](std::vector<std::vector<std::size_t>> c) { return DependencyStructure{std::move(c)}; }),
             py::arg("cliques") = std::vector<std::vector<std::size_t>>{})
        .def_readwrite("cliques", &DependencyStructure::cliques);

    py::class_<BucketIndex>(m, "BucketIndex")
        .def_property_readonly("configs", [](const BucketIndex& b) -> Eigen::MatrixXi { return b.configs.values().cast<int>(); })
        .def_readonly("point_to_bucket", &BucketIndex::point_to_bucket)
        .def_readonly("counts", &BucketIndex::counts)
        .def("__len__", &BucketIndex::size);
    m.def("build_buckets", &build_buckets, py::arg("label_matrix"));

    py::class_<MomentInput>(m, "MomentInput")
        .def_property_readonly("dim", &MomentInput::dim)
        .def_readonly("num_lfs", &MomentInput::num_lfs)
        .def_readonly("col_means", &MomentInput::col_means)
        .def_readonly("sigma", &MomentInput::sigma)
        .def_readonly("sigma_inv", &MomentInput::sigma_inv)
        .def_readonly("omega", &MomentInput::omega)
        .def_readonly("ridged", &MomentInput::ridged);
    m.def("make_moment_input", &make_moment_input, py::arg("label_matrix"), py::arg("dependency"));

    py::class_<FitConfig>(m, "FitConfig")
        .def(py::init<>())
        .def_readwrite("alpha", &FitConfig::alpha)
        .def_readwrite("auto_alpha", &FitConfig::auto_alpha)
        .def_readwrite("step_size", &FitConfig::step_size)
        .def_readwrite("max_iters", &FitConfig::max_iters)
        .def_readwrite("tolerance", &FitConfig::tolerance)
        .def_readwrite("seed", &FitConfig::seed)
        .def_readwrite("epsilon", &FitConfig::epsilon);

    py::class_<GenerativeParams>(m, "GenerativeParams")
        .def_readonly("z", &GenerativeParams::z)
        .def_readonly("class_prior", &GenerativeParams::class_prior)
        .def_readonly("moments", &GenerativeParams::moments)
        .def_readonly("sign", &GenerativeParams::sign);

    py::class_<FitDiagnostics>(m, "FitDiagnostics")
        .def_readonly("loss_trace", &FitDiagnostics::loss_trace)
        .def_readonly("converged", &FitDiagnostics::converged)
        .def_readonly("alpha", &FitDiagnostics::alpha)
        .def_readonly("iterations", &FitDiagnostics::iterations)
        .def_readonly("base_loss", &FitDiagnostics::base_loss)
        .def_readonly("penalty", &FitDiagnostics::penalty);

    m.def("loss_base", &loss_base, py::arg("z"), py::arg("moment_input"));
    m.def(
        "objective",
        [](const Eigen::VectorXd& z, const MomentInput& mi, double prior,
           const std::vector<std::pair<std::size_t, int>>& labeled, const BucketIndex& buckets, double alpha,
           double eps) { return objective(z, mi, prior, make_penalty_term(to_labeled(labeled), buckets), alpha, eps); },
        py::arg("z"), py::arg("moment_input"), py::arg("prior"), py::arg("labeled"), py::arg("buckets"),
        py::arg("alpha"), py::arg("epsilon") = 1e-4);
    m.def(
        "gradient",
        [](const Eigen::VectorXd& z, const MomentInput& mi, double prior,
           const std::vector<std::pair<std::size_t, int>>& labeled, const BucketIndex& buckets, double alpha,
           double eps) { return gradient(z, mi, prior, make_penalty_term(to_labeled(labeled), buckets), alpha, eps); },
        py::arg("z"), py::arg("moment_input"), py::arg("prior"), py::arg("labeled"), py::arg("buckets"),
        py::arg("alpha"), py::arg("epsilon") = 1e-4);
    m.def(
        "fit",
        [](const MomentInput& mi, double prior, const std::vector<std::pair<std::size_t, int>>& labeled,
           const BucketIndex& buckets, const FitConfig& cfg, std::optional<Eigen::VectorXd> warm_start) {
            const FitResult r = fit(mi, prior, make_penalty_term(to_labeled(labeled), buckets), cfg, warm_start);
            return py::make_tuple(r.params, r.diagnostics);
        },
        py::arg("moment_input"), py::arg("prior"), py::arg("labeled"), py::arg("buckets"), py::arg("config"),
        py::arg("warm_start") = py::none());
    m.def(
        "recover_moments",
        [](const Eigen::VectorXd& z, const MomentInput& mi, double prior) {
            const RecoveredMoments r = recover_moments(z, mi, prior);
            return py::make_tuple(r.moments, r.sign);
        },
        py::arg("z"), py::arg("moment_input"), py::arg("prior"));
    m.def(
        "predict_bucket",
        [](const GenerativeParams& p, const std::vector<int>& config, const MomentInput& mi, double eps) {
            const auto c = to_config(config);
            return predict_bucket(p, c, mi, eps);
        },
        py::arg("params"), py::arg("config"), py::arg("moment_input"), py::arg("epsilon") = 1e-4);
    m.def(
        "predict_points",
        [](const GenerativeParams& p, const MomentInput& mi, const LabelMatrix& lm, double eps) {
            return predict_points(p, mi, lm, eps);
        },
        py::arg("params"), py::arg("moment_input"), py::arg("label_matrix"), py::arg("epsilon") = 1e-4);
    m.def("auto_alpha", &auto_alpha, py::arg("moment_input"), py::arg("z0"));

    m.def(
        "binarize", [](const std::vector<double>& p) { return binarize(p); }, py::arg("probabilities"));
    m.def(
        "accuracy", [](const std::vector<int>& a, const std::vector<int>& b) { return accuracy(a, b); },
        py::arg("predicted"), py::arg("truth"));
    m.def(
        "f1", [](const std::vector<int>& a, const std::vector<int>& b) { return f1(a, b); }, py::arg("predicted"),
        py::arg("truth"));
    m.def(
        "diversity_entropy", [](const std::vector<std::size_t>& b) { return diversity_entropy(b); },
        py::arg("queried_buckets"));

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("features", &Dataset::features)
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("label_matrix", &Dataset::label_matrix)
        .def_readonly("split", &Dataset::split)
        .def("__len__", &Dataset::size);

    m.def(
        "generate_gaussian_mixture",
        [](const std::string& spec_json) {
            const auto [train, test] = generate_gaussian_mixture(spec_from_json(Json::parse(spec_json)));
            return py::make_tuple(train, test);
        },
        py::arg("spec_json"));
    m.def("synthetic_dependency", &synthetic_dependency);
    m.def(
        "load_table",
        [](const std::filesystem::path& path, const std::string& schema_json) {
            return load_table(path, schema_from_json(Json::parse(schema_json)));
        },
        py::arg("path"), py::arg("schema_json"));

    m.def(
        "run_method",
        [](const std::string& method, const Dataset& train, std::optional<Dataset> test,
           const DependencyStructure& dep, double prior, const std::string& strategy, std::size_t budget,
           std::uint64_t seed, const std::string& fit_json, bool discriminative) {
            auto data = std::make_shared<ExperimentData>(ExperimentData{train, std::move(test), dep, prior});
            LoopConfig cfg;
            cfg.strategy = parse_strategy(strategy);
            cfg.budget = budget;
            cfg.seed = seed;
            cfg.train_discriminative = discriminative;
            cfg.fit = fit_config_from_json(Json::parse(fit_json));
            GroundTruthOracle oracle(data->train);
            py::gil_scoped_release release;
            return history_to_jsonl(run_method(parse_method(method), data, cfg, oracle));
        },
        py::arg("method"), py::arg("train"), py::arg("test"), py::arg("dependency"), py::arg("prior"),
        py::arg("strategy"), py::arg("budget"), py::arg("seed"), py::arg("fit_json"), py::arg("discriminative"));

    py::class_<LabelServer>(m, "LabelServer")
        .def(py::init([](std::optional<std::filesystem::path> state_dir, std::size_t budget) {
                 ServerConfig cfg;
                 cfg.state_dir = std::move(state_dir);
                 cfg.default_budget = budget;
                 return std::make_unique<LabelServer>(cfg);
             }),
             py::arg("state_dir") = py::none(), py::arg("default_budget") = 30)
        .def(
            "register_dataset",
            [](LabelServer& s, const std::string& id, const Dataset& train, std::optional<Dataset> test,
               const DependencyStructure& dep, double prior) {
                s.register_dataset(id, std::make_shared<ExperimentData>(ExperimentData{train, std::move(test), dep, prior}));
            },
            py::arg("id"), py::arg("train"), py::arg("test"), py::arg("dependency"), py::arg("prior") = 0.5)
        .def("create_session", [](LabelServer& s, const std::string& body) { return response(s.create_session(body)); })
        .def("get_query", [](LabelServer& s, const std::string& id) { return response(s.get_query(id)); })
        .def("submit_label", [](LabelServer& s, const std::string& id, const std::string& body) {
            return response(s.submit_label(id, body));
        })
        .def("get_state", [](LabelServer& s, const std::string& id) { return response(s.get_state(id)); })
        .def("health", [](const LabelServer& s) { return response(s.health()); })
        .def("restore_sessions", &LabelServer::restore_sessions)
        .def("bind", &LabelServer::bind, py::arg("host"), py::arg("port"))
        .def("listen", &LabelServer::listen, py::call_guard<py::gil_scoped_release>())
        .def("stop", &LabelServer::stop);
}
