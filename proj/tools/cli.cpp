#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>
#include <type_traits>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "weasul/errors.hpp"
#include "weasul/label_server.hpp"

namespace weasul::cli {

namespace fs = std::filesystem;

int exit_code_for(const Error& e) noexcept {
    switch (e.kind()) {
        case ErrorKind::NonFinite:
        case ErrorKind::NumericallySingular: return kNumericFailure;
        default: return kDataError;
    }
}

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

void configure_logging() {
    spdlog::set_level(spdlog::level::warn);
    if (const char* level = std::getenv("WEASUL_LOG")) {
        spdlog::set_level(spdlog::level::from_str(level));
    }
    spdlog::set_pattern("[%l] %v");
}

}  // namespace

std::shared_ptr<ExperimentData> load_experiment(const std::optional<fs::path>& manifest,
                                                const std::optional<fs::path>& train,
                                                const std::optional<fs::path>& test) {
    Json m = Json::object();
    fs::path base = fs::current_path();
    if (manifest) {
        m = read_json_file(*manifest);
        if (!m.is_object()) throw Error(ErrorKind::SchemaError, manifest->string() + ": manifest must be an object");
        base = manifest->parent_path();
    }
    std::optional<fs::path> train_path = train;
    std::optional<fs::path> test_path = test;
    if (!train_path && m.contains("train")) train_path = resolve(base, m.at("train").get<std::string>());
    if (!test_path && m.contains("test") && !m.at("test").is_null()) {
        test_path = resolve(base, m.at("test").get<std::string>());
    }
    if (!train_path) throw Error(ErrorKind::SchemaError, "no training table: pass --train or a manifest with 'train'");

    const TableSchema schema = m.contains("schema") ? schema_from_json(m.at("schema")) : synthetic_schema();
    const DependencyStructure dep =
        m.contains("dependency") ? dependency_from_json(m.at("dependency")) : synthetic_dependency();
    const double prior = m.value("prior", 0.5);

    auto data = std::make_shared<ExperimentData>();
    spdlog::info("loading {}", train_path->string());
    data->train = load_table(*train_path, schema);
    data->train.split = "train";
    if (test_path) {
        spdlog::info("loading {}", test_path->string());
        data->test = load_table(*test_path, schema);
        data->test->split = "test";
        if (data->test->label_matrix.cols() != data->train.label_matrix.cols()) {
            throw Error(ErrorKind::DimensionMismatch, "train and test tables have different weak-label columns");
        }
    }
    dep.validate(data->train.label_matrix.cols());
    data->dependency = dep;
    data->prior = prior;
    return data;
}

Json make_manifest(const SyntheticSpec& spec) {
    Json m;
    m["seed"] = spec.seed;
    m["spec"] = spec_to_json(spec);
    m["dependency"] = dependency_to_json(synthetic_dependency());
    m["schema"] = schema_to_json(synthetic_schema());
    m["prior"] = SyntheticSpec::prior;
    m["train"] = "train.csv";
    m["test"] = "test.csv";
    return m;
}

std::string history_file_name(Method method, Strategy strategy, std::uint64_t seed) {
    std::string name(to_string(method));
    if (method == Method::ActiveWeasul) name += "_" + std::string(to_string(strategy));
    return name + "_seed" + std::to_string(seed) + ".jsonl";
}

std::optional<double> metric_value(const IterationRecord& rec, const std::string& metric) {
    if (metric == "gen_accuracy") return rec.gen_accuracy;
    if (metric == "gen_f1") return rec.gen_f1;
    if (metric == "disc_accuracy") return rec.disc_accuracy;
    if (metric == "disc_f1") return rec.disc_f1;
    if (metric == "loss") return rec.loss;
    if (metric == "diversity") return rec.diversity;
    if (metric == "score_max") return rec.score_max;
    if (metric == "alpha") return rec.alpha;
    throw Error(ErrorKind::InvalidArgument, "unknown metric '" + metric + "'");
}

namespace {

std::string group_of(const NamedHistory& h) {
    if (h.history.records.empty()) throw Error(ErrorKind::EmptyInput, h.file + " holds no records");
    const auto& first = h.history.records.front();
    return first.method + "/" + first.strategy;
}

}  // namespace

Json compare_histories(const std::vector<NamedHistory>& histories, const std::string& metric) {
    if (histories.empty()) throw Error(ErrorKind::EmptyInput, "no histories to compare");
    std::map<std::string, std::vector<const NamedHistory*>> groups;
    std::vector<std::string> order;
    for (const auto& h : histories) {
        const std::string key = group_of(h);
        if (!groups.count(key)) order.push_back(key);
        groups[key].push_back(&h);
    }

    Json out;
    out["metric"] = metric;
    out["groups"] = Json::array();
    for (const auto& key : order) {
        const auto& members = groups[key];
        const std::size_t len = members.front()->history.records.size();
        bool mismatch = false;
        for (const auto* h : members) mismatch |= h->history.records.size() != len;
        if (mismatch) {
            std::vector<std::string> listing;
            for (const auto* h : members) {
                listing.push_back(h->file + " (" + std::to_string(h->history.records.size()) + " records)");
            }
            throw Error(ErrorKind::SchemaError,
                        "histories of " + key + " have different iteration counts: " + join(listing, ", "));
        }

        Json g;
        const auto& first = members.front()->history.records.front();
        g["method"] = first.method;
        g["strategy"] = first.strategy;
        std::vector<std::string> files;
        for (const auto* h : members) files.push_back(h->file);
        g["files"] = files;
        Json ts = Json::array(), mean = Json::array(), lo = Json::array(), hi = Json::array();
        for (std::size_t i = 0; i < len; ++i) {
            ts.push_back(members.front()->history.records[i].t);
            double sum = 0.0;
            double mn = std::numeric_limits<double>::infinity();
            double mx = -mn;
            std::size_t count = 0;
            for (const auto* h : members) {
                if (auto v = metric_value(h->history.records[i], metric)) {
                    sum += *v;
                    mn = std::min(mn, *v);
                    mx = std::max(mx, *v);
                    ++count;
                }
            }
            mean.push_back(count ? Json(sum / static_cast<double>(count)) : Json(nullptr));
            lo.push_back(count ? Json(mn) : Json(nullptr));
            hi.push_back(count ? Json(mx) : Json(nullptr));
        }
        g["t"] = ts;
        g["mean"] = mean;
        g["min"] = lo;
        g["max"] = hi;
        out["groups"].push_back(std::move(g));
    }
    return out;
}

std::string render_table(const Json& summary) {
    const auto& groups = summary.at("groups");
    std::size_t rows = 0;
    for (const auto& g : groups) rows = std::max(rows, g.at("t").size());

    auto cell = [](const Json& mean, const Json& lo, const Json& hi) {
        if (mean.is_null()) return std::string("-");
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << mean.get<double>() << " [" << lo.get<double>() << ", "
          << hi.get<double>() << "]";
        return s.str();
    };

    std::vector<std::vector<std::string>> table;
    std::vector<std::string> header{"t"};
    for (const auto& g : groups) {
        header.push_back(g.at("method").get<std::string>() + "/" + g.at("strategy").get<std::string>());
    }
    table.push_back(header);
    for (std::size_t i = 0; i < rows; ++i) {
        std::vector<std::string> row{std::to_string(i)};
        for (const auto& g : groups) {
            if (i < g.at("t").size()) {
                row.push_back(cell(g.at("mean")[i], g.at("min")[i], g.at("max")[i]));
            } else {
                row.emplace_back("");
            }
        }
        table.push_back(std::move(row));
    }

    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : table) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream out;
    out << summary.at("metric").get<std::string>() << ": mean [min, max]\n";
    for (const auto& row : table) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << (c ? "  " : "") << std::setw(static_cast<int>(width[c])) << row[c];
        }
        out << '\n';
    }
    return out.str();
}

std::string plot_data(const std::vector<NamedHistory>& histories, const std::string& metric) {
    std::string out;
    for (const auto& h : histories) {
        const std::string series = group_of(h);
        for (const auto& rec : h.history.records) {
            Json j;
            j["series"] = series;
            j["file"] = h.file;
            j["t"] = rec.t;
            const auto v = metric_value(rec, metric);
            j[metric] = v ? Json(*v) : Json(nullptr);
            out += j.dump() + "\n";
        }
    }
    return out;
}

namespace {

struct SynthArgs {
    std::optional<std::string> config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_train;
    std::optional<std::size_t> n_test;
};

int cmd_synth(const SynthArgs& a) {
    Json cfg = Json::object();
    if (a.config) {
        cfg = read_json_file(*a.config);
        if (!cfg.is_object()) throw Error(ErrorKind::SchemaError, "synthetic config must be a JSON object");
    } else {
        cfg["seed"] = 0;
    }
    if (a.seed) cfg["seed"] = *a.seed;
    if (a.n_train) cfg["n_train"] = *a.n_train;
    if (a.n_test) cfg["n_test"] = *a.n_test;
    const SyntheticSpec spec = spec_from_json(cfg);

    const auto [train, test] = generate_gaussian_mixture(spec);
    const fs::path out(a.out);
    fs::create_directories(out);
    write_table(out / "train.csv", train, synthetic_schema());
    write_table(out / "test.csv", test, synthetic_schema());
    write_text_file(out / "manifest.json", make_manifest(spec).dump(2) + "\n");
    std::cout << "wrote " << train.size() << " training and " << test.size() << " test rows to "
              << out.string() << "\n";
    return kOk;
}

struct RunArgs {
    std::optional<std::string> config;
    std::optional<std::string> manifest;
    std::optional<std::string> train;
    std::optional<std::string> test;
    std::optional<std::string> method;
    std::optional<std::string> strategy;
    std::optional<std::size_t> budget;
    std::optional<std::size_t> seeds;
    std::optional<std::uint64_t> first_seed;
    std::optional<std::string> alpha;
    std::optional<std::size_t> jobs;
    bool discriminative = false;
    std::string out = "runs";
};

int cmd_run(const RunArgs& a) {
    // flag > config file > default
    Json cfg = a.config ? read_json_file(*a.config) : Json::object();
    if (!cfg.is_object()) throw Error(ErrorKind::SchemaError, "run config must be a JSON object");
    auto pick = [&](const auto& flag, const char* key, auto fallback) {
        using T = decltype(fallback);
        if (flag) return static_cast<T>(*flag);
        if (cfg.contains(key)) {
            if constexpr (std::is_unsigned_v<T>) {
                if (!cfg.at(key).is_number_unsigned()) {
                    throw Error(ErrorKind::SchemaError,
                                std::string("run config field '") + key + "' must be a non-negative integer");
                }
            }
            try {
                return cfg.at(key).template get<T>();
            } catch (const nlohmann::json::exception&) {
                throw Error(ErrorKind::SchemaError, std::string("run config field '") + key + "' has the wrong type");
            }
        }
        return fallback;
    };

    const Method method = parse_method(pick(a.method, "method", std::string("active-weasul")));
    const Strategy strategy = parse_strategy(pick(a.strategy, "strategy", std::string("maxkl")));
    const std::size_t budget = pick(a.budget, "budget", std::size_t{30});
    const std::size_t seeds = pick(a.seeds, "seeds", std::size_t{1});
    const std::uint64_t first_seed = pick(a.first_seed, "first_seed", std::uint64_t{0});
    const std::size_t jobs = std::max<std::size_t>(1, pick(a.jobs, "jobs", std::size_t{1}));

    LoopConfig loop;
    loop.strategy = strategy;
    loop.budget = budget;
    loop.train_discriminative = a.discriminative || cfg.value("discriminative", false);
    if (cfg.contains("fit")) loop.fit = fit_config_from_json(cfg.at("fit"));
    if (a.alpha) loop.fit = fit_config_from_json(Json{{"alpha", *a.alpha == "auto" ? Json("auto") : Json(std::stod(*a.alpha))}}, loop.fit);
    if (cfg.contains("disc")) {
        const Json& d = cfg.at("disc");
        loop.disc.epochs = d.value("epochs", loop.disc.epochs);
        loop.disc.step = d.value("step", loop.disc.step);
        loop.disc.patience = d.value("patience", loop.disc.patience);
        loop.disc.val_fraction = d.value("val_fraction", loop.disc.val_fraction);
        loop.disc.l2 = d.value("l2", loop.disc.l2);
        loop.disc.validate();
    }

    const auto data = load_experiment(a.manifest ? std::optional<fs::path>(*a.manifest) : std::nullopt,
                                      a.train ? std::optional<fs::path>(*a.train) : std::nullopt,
                                      a.test ? std::optional<fs::path>(*a.test) : std::nullopt);
    const fs::path out(a.out);
    fs::create_directories(out);

    // Seeds are independent; each worker writes its own files.
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> failures(seeds);
    auto worker = [&] {
        for (std::size_t k = next++; k < seeds; k = next++) {
            try {
                LoopConfig c = loop;
                c.seed = first_seed + k;
                GroundTruthOracle oracle(data->train);
                const RunHistory h = run_method(method, data, c, oracle);
                const fs::path file = out / history_file_name(method, strategy, c.seed);
                write_jsonl(file, h);
                spdlog::info("seed {} -> {}", c.seed, file.string());
            } catch (...) {
                failures[k] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < std::min(jobs, seeds); ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& f : failures) {
        if (f) std::rethrow_exception(f);
    }
    std::cout << "wrote " << seeds << " histories to " << out.string() << "\n";
    return kOk;
}

std::vector<NamedHistory> read_all(const std::vector<std::string>& files) {
    std::vector<NamedHistory> out;
    for (const auto& f : files) out.push_back({f, read_jsonl(f)});
    return out;
}

std::atomic<bool> g_interrupted{false};

extern "C" void on_interrupt(int) { g_interrupted = true; }

struct ServeArgs {
    std::optional<std::string> config;
    std::optional<std::string> manifest;
    std::optional<std::string> train;
    std::optional<std::string> test;
    std::optional<std::string> dataset_id;
    std::optional<std::string> host;
    std::optional<int> port;
    std::optional<std::string> state_dir;
    std::optional<std::string> static_dir;
    std::optional<std::size_t> budget;
};

int cmd_serve(const ServeArgs& a) {
    Json cfg = a.config ? read_json_file(*a.config) : Json::object();
    if (!cfg.is_object()) throw Error(ErrorKind::SchemaError, "serve config must be a JSON object");
    auto str = [&](const std::optional<std::string>& flag, const char* key, std::string fallback) {
        return flag ? *flag : cfg.value(key, fallback);
    };

    ServerConfig sc;
    const std::string state_dir = str(a.state_dir, "state_dir", "weasul-state");
    sc.state_dir = fs::path(state_dir);
    if (auto s = str(a.static_dir, "static_dir", ""); !s.empty()) sc.static_dir = fs::path(s);
    sc.default_budget = a.budget ? *a.budget : cfg.value("budget", sc.default_budget);

    const std::string dataset_id = str(a.dataset_id, "dataset_id", "default");
    const auto data = load_experiment(a.manifest ? std::optional<fs::path>(*a.manifest) : std::nullopt,
                                      a.train ? std::optional<fs::path>(*a.train) : std::nullopt,
                                      a.test ? std::optional<fs::path>(*a.test) : std::nullopt);

    LabelServer server(sc);
    server.register_dataset(dataset_id, data);
    const std::size_t restored = server.restore_sessions();
    const std::string host = str(a.host, "host", "127.0.0.1");
    const int port = server.bind(host, a.port ? *a.port : cfg.value("port", 8080));
    std::cout << "serving dataset '" << dataset_id << "' at http://" << host << ":" << port << "/ ("
              << restored << " sessions restored)" << std::endl;

    std::signal(SIGINT, on_interrupt);
    std::signal(SIGTERM, on_interrupt);
    std::thread watcher([&] {
        while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        server.stop();
    });
    server.listen();
    g_interrupted = true;
    watcher.join();
    server.persist_all();
    std::cout << "stopped; session state saved to " << state_dir << std::endl;
    return kOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
    configure_logging();
    CLI::App app{"Active weak supervision: label models, query strategies and experiments"};
    app.require_subcommand(1);

    const std::vector<std::string> methods{"active-weasul", "nashaat", "active-learning", "weak-only"};
    const std::vector<std::string> strategies{"maxkl", "margin", "random"};
    const std::vector<std::string> metrics{"gen_accuracy", "gen_f1",    "disc_accuracy", "disc_f1",
                                           "loss",         "diversity", "score_max",     "alpha"};

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "generate the two-Gaussian dataset");
    s->add_option("--config", synth.config, "SyntheticSpec JSON");
    s->add_option("--out", synth.out, "output directory")->capture_default_str();
    s->add_option("--seed", synth.seed);
    s->add_option("--n-train", synth.n_train);
    s->add_option("--n-test", synth.n_test);

    RunArgs run;
    auto* r = app.add_subcommand("run", "run an experiment, one JSON-lines history per seed");
    r->add_option("--config", run.config, "run config JSON");
    r->add_option("--manifest", run.manifest, "dataset manifest JSON");
    r->add_option("--train", run.train, "training table");
    r->add_option("--test", run.test, "test table");
    r->add_option("--method", run.method)->check(CLI::IsMember(methods));
    r->add_option("--strategy", run.strategy)->check(CLI::IsMember(strategies));
    r->add_option("--budget", run.budget);
    r->add_option("--seeds", run.seeds, "number of seeds");
    r->add_option("--first-seed", run.first_seed);
    r->add_option("--alpha", run.alpha, "penalty weight or 'auto'");
    r->add_option("--jobs", run.jobs, "parallel workers");
    r->add_flag("--discriminative", run.discriminative, "also train the discriminative model");
    r->add_option("--out", run.out, "output directory")->capture_default_str();

    std::vector<std::string> compare_files;
    std::string compare_metric = "gen_accuracy";
    std::optional<std::string> compare_out;
    auto* c = app.add_subcommand("compare", "summarize histories per method and strategy");
    c->add_option("files", compare_files, "history files")->required();
    c->add_option("--metric", compare_metric)->check(CLI::IsMember(metrics))->capture_default_str();
    c->add_option("--out", compare_out, "summary JSON path");

    std::vector<std::string> plot_files;
    std::string plot_metric = "gen_accuracy";
    std::optional<std::string> plot_out;
    auto* p = app.add_subcommand("plot-data", "emit {t, metric} pairs for plotting");
    p->add_option("files", plot_files, "history files")->required();
    p->add_option("--metric", plot_metric)->check(CLI::IsMember(metrics))->capture_default_str();
    p->add_option("--out", plot_out, "output path (stdout if absent)");

    ServeArgs serve;
    auto* v = app.add_subcommand("serve", "start the label server");
    v->add_option("--config", serve.config, "server config JSON");
    v->add_option("--manifest", serve.manifest, "dataset manifest JSON");
    v->add_option("--train", serve.train);
    v->add_option("--test", serve.test);
    v->add_option("--dataset-id", serve.dataset_id);
    v->add_option("--host", serve.host);
    v->add_option("--port", serve.port)->check(CLI::Range(0, 65535));
    v->add_option("--state-dir", serve.state_dir);
    v->add_option("--static", serve.static_dir, "directory served at /");
    v->add_option("--budget", serve.budget, "default session budget");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*s) return cmd_synth(synth);
        if (*r) return cmd_run(run);
        if (*c) {
            const Json summary = compare_histories(read_all(compare_files), compare_metric);
            if (compare_out) write_text_file(*compare_out, summary.dump(2) + "\n");
            std::cout << render_table(summary);
            return kOk;
        }
        if (*p) {
            const std::string text = plot_data(read_all(plot_files), plot_metric);
            if (plot_out) {
                write_text_file(*plot_out, text);
            } else {
                std::cout << text;
            }
            return kOk;
        }
        if (*v) return cmd_serve(serve);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: invalid number: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

}  // namespace weasul::cli
