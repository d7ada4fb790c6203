#include "weasul/label_server.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <random>
#include <vector>

#include <httplib.h>

#include "weasul/errors.hpp"
#include "weasul/query.hpp"

namespace weasul {

namespace fs = std::filesystem;

struct LabelServer::Session {
    std::string id;
    std::string dataset;
    Json request;  // normalized creation request, replayed on restore
    std::unique_ptr<ActiveWeasulSession> loop;
    std::string created;
    std::string updated;
    mutable std::mutex mutex;
};

struct LabelServer::Http {
    httplib::Server server;
};

namespace {

Response error(int status, const std::string& code, const std::string& message) {
    Json body;
    body["code"] = code;
    body["message"] = message;
    return Response{status, std::move(body)};
}

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Json parse_body(const std::string& text) {
    if (text.empty()) return Json::object();
    return Json::parse(text);
}

Json metrics_of(const IterationRecord& rec) {
    if (!rec.gen_accuracy) return nullptr;
    Json m;
    m["gen_accuracy"] = *rec.gen_accuracy;
    m["gen_f1"] = rec.gen_f1 ? Json(*rec.gen_f1) : Json(nullptr);
    return m;
}

Json config_of(const BucketIndex& buckets, std::size_t bucket) {
    Json config = Json::array();
    for (auto v : buckets.configs.row(static_cast<Eigen::Index>(bucket))) config.push_back(static_cast<int>(v));
    return config;
}

Json query_body(const std::string& id, const ActiveWeasulSession& loop) {
    if (!loop.pending()) return nullptr;
    const QueryDecision& q = *loop.pending();
    const auto& features = loop.data().train.features;
    Json j;
    j["session_id"] = id;
    j["t"] = loop.t();
    j["point_id"] = q.point;
    j["bucket"] = q.bucket;
    j["bucket_config"] = config_of(loop.buckets(), q.bucket);
    Json snapshot = Json::array();
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
        snapshot.push_back(features(static_cast<Eigen::Index>(q.point), c));
    }
    j["features"] = snapshot;
    j["strategy"] = std::string(to_string(loop.config().strategy));
    j["scores"] = q.scores;
    j["score"] = q.chosen_score();
    return j;
}

Json bucket_table(const ActiveWeasulSession& loop) {
    const BucketIndex& buckets = loop.buckets();
    const auto q_hat = empirical_q(loop.labeled(), buckets, loop.initial_labels());
    std::vector<std::size_t> labelled(buckets.size(), 0);
    for (std::size_t p : loop.labeled().order()) ++labelled[buckets.point_to_bucket[p]];
    Json rows = Json::array();
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        Json row;
        row["bucket"] = b;
        row["config"] = config_of(buckets, b);
        row["size"] = buckets.counts[b];
        row["p_hat"] = loop.labels().per_bucket[b];
        row["q_hat"] = q_hat[b];
        row["labelled"] = labelled[b];
        rows.push_back(std::move(row));
    }
    return rows;
}

int status_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::UnknownPoint: return 404;
        case ErrorKind::Exhausted: return 409;
        case ErrorKind::NumericallySingular:
        case ErrorKind::NonFinite:
        case ErrorKind::Io: return 500;
        default: return 422;
    }
}

std::string code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NumericallySingular:
        case ErrorKind::NonFinite: return "numeric_failure";
        case ErrorKind::Io: return "io_error";
        default: return "invalid_request";
    }
}

}  // namespace

LabelServer::LabelServer(ServerConfig cfg) : cfg_(std::move(cfg)), http_(std::make_unique<Http>()) {
    std::random_device rd;
    id_salt_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    if (cfg_.state_dir) fs::create_directories(*cfg_.state_dir);

    auto reply = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto& srv = http_->server;
    // SO_REUSEADDR only: the default SO_REUSEPORT would let a second server share a busy port.
    srv.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
    });
    srv.Post("/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, create_session(req.body));
    });
    srv.Get(R"(/sessions/([^/]+)/query)", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, get_query(req.matches[1]));
    });
    srv.Post(R"(/sessions/([^/]+)/label)", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, submit_label(req.matches[1], req.body));
    });
    srv.Get(R"(/sessions/([^/]+)/state)", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, get_state(req.matches[1]));
    });
    srv.Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, health());
    });
    srv.set_exception_handler([reply](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "unexpected failure";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        reply(res, error(500, "internal_error", what));
    });
    if (cfg_.static_dir && !srv.set_mount_point("/", cfg_.static_dir->string())) {
        throw Error(ErrorKind::Io, "static directory " + cfg_.static_dir->string() + " does not exist");
    }
}

LabelServer::~LabelServer() { stop(); }

void LabelServer::register_dataset(const std::string& id, std::shared_ptr<const ExperimentData> data) {
    if (!data) throw Error(ErrorKind::InvalidArgument, "dataset '" + id + "' is null");
    std::unique_lock lock(sessions_mutex_);
    datasets_[id] = std::move(data);
}

std::shared_ptr<LabelServer::Session> LabelServer::find(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::string LabelServer::new_session_id() {
    std::lock_guard lock(id_mutex_);
    std::mt19937_64 mix(id_salt_ + ++id_counter_);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(mix()));
    return buf;
}

std::shared_ptr<LabelServer::Session> LabelServer::build_session(const Json& request, const std::string& id) {
    if (!request.is_object()) throw Error(ErrorKind::SchemaError, "request body must be a JSON object");
    if (!request.contains("dataset") || !request.at("dataset").is_string()) {
        throw Error(ErrorKind::SchemaError, "'dataset' must be a string");
    }
    const std::string dataset = request.at("dataset").get<std::string>();
    std::shared_ptr<const ExperimentData> data;
    {
        std::shared_lock lock(sessions_mutex_);
        auto it = datasets_.find(dataset);
        if (it == datasets_.end()) throw Error(ErrorKind::InvalidArgument, "unknown dataset '" + dataset + "'");
        data = it->second;
    }

    LoopConfig loop;
    loop.budget = cfg_.default_budget;
    try {
        if (request.contains("strategy")) {
            loop.strategy = parse_strategy(request.at("strategy").get<std::string>());
        }
        for (const char* key : {"budget", "seed"}) {
            if (request.contains(key) && !request.at(key).is_number_unsigned()) {
                throw Error(ErrorKind::SchemaError, std::string("'") + key + "' must be a non-negative integer");
            }
        }
        if (request.contains("budget")) loop.budget = request.at("budget").get<std::size_t>();
        if (request.contains("seed")) loop.seed = request.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("invalid session field: ") + e.what());
    }
    if (request.contains("fit")) loop.fit = fit_config_from_json(request.at("fit"));

    auto session = std::make_shared<Session>();
    session->id = id;
    session->dataset = dataset;
    session->request["dataset"] = dataset;
    session->request["strategy"] = std::string(to_string(loop.strategy));
    session->request["budget"] = loop.budget;
    session->request["seed"] = loop.seed;
    session->request["fit"] = fit_config_to_json(loop.fit);
    session->loop = std::make_unique<ActiveWeasulSession>(std::move(data), std::move(loop));
    session->created = session->updated = now_utc();
    return session;
}

Response LabelServer::create_session(const std::string& request_body) {
    Json request;
    try {
        request = parse_body(request_body);
    } catch (const nlohmann::json::exception& e) {
        return error(400, "bad_json", e.what());
    }
    if (request.is_object() && request.contains("dataset") && request.at("dataset").is_string()) {
        const auto name = request.at("dataset").get<std::string>();
        std::shared_lock lock(sessions_mutex_);
        if (!datasets_.count(name)) return error(404, "unknown_dataset", "unknown dataset '" + name + "'");
    }
    std::shared_ptr<Session> session;
    try {
        session = build_session(request, new_session_id());
    } catch (const Error& e) {
        return error(status_for(e.kind()), code_for(e.kind()), e.what());
    }
    {
        std::unique_lock lock(sessions_mutex_);
        sessions_[session->id] = session;
    }
    persist(*session);

    const ActiveWeasulSession& loop = *session->loop;
    Json body;
    body["session_id"] = session->id;
    body["dataset"] = session->dataset;
    body["strategy"] = std::string(to_string(loop.config().strategy));
    body["budget"] = loop.config().budget;
    body["alpha"] = loop.alpha();
    body["t"] = loop.t();
    body["metrics"] = metrics_of(loop.history().records.back());
    body["query"] = query_body(session->id, loop);
    return Response{201, std::move(body)};
}

Response LabelServer::get_query(const std::string& session_id) {
    auto session = find(session_id);
    if (!session) return error(404, "unknown_session", "no session '" + session_id + "'");
    std::lock_guard lock(session->mutex);
    if (session->loop->finished()) {
        return error(409, "no_pending_query", "the labelling budget is exhausted");
    }
    return Response{200, query_body(session->id, *session->loop)};
}

Response LabelServer::submit_label(const std::string& session_id, const std::string& request_body) {
    auto session = find(session_id);
    if (!session) return error(404, "unknown_session", "no session '" + session_id + "'");

    Json request;
    try {
        request = parse_body(request_body);
    } catch (const nlohmann::json::exception& e) {
        return error(400, "bad_json", e.what());
    }
    if (!request.is_object() || !request.contains("point_id") || !request.at("point_id").is_number_unsigned()) {
        return error(422, "invalid_point", "'point_id' must be a non-negative integer");
    }
    if (!request.contains("label") || !request.at("label").is_number_integer() ||
        (request.at("label").get<int>() != 0 && request.at("label").get<int>() != 1)) {
        return error(422, "invalid_label", "'label' must be 0 or 1");
    }
    const auto point = request.at("point_id").get<std::size_t>();
    const int label = request.at("label").get<int>();

    std::lock_guard lock(session->mutex);
    ActiveWeasulSession& loop = *session->loop;
    if (!loop.pending()) return error(409, "no_pending_query", "the labelling budget is exhausted");
    if (loop.pending()->point != point) {
        return error(409, "wrong_point",
                     "point " + std::to_string(point) + " is not the pending query (" +
                         std::to_string(loop.pending()->point) + ")");
    }
    const std::vector<double> before = loop.labels().per_bucket;
    try {
        loop.submit(point, label);
    } catch (const Error& e) {
        return error(status_for(e.kind()), code_for(e.kind()), e.what());
    }
    session->updated = now_utc();
    persist(*session);

    std::vector<double> deltas(before.size());
    for (std::size_t b = 0; b < before.size(); ++b) deltas[b] = loop.labels().per_bucket[b] - before[b];
    Json body;
    body["t"] = loop.t();
    body["deltas"] = deltas;
    body["metrics"] = metrics_of(loop.history().records.back());
    body["finished"] = loop.finished();
    body["query"] = query_body(session->id, loop);
    return Response{200, std::move(body)};
}

Response LabelServer::get_state(const std::string& session_id) {
    auto session = find(session_id);
    if (!session) return error(404, "unknown_session", "no session '" + session_id + "'");
    std::lock_guard lock(session->mutex);
    const ActiveWeasulSession& loop = *session->loop;
    Json body;
    body["session_id"] = session->id;
    body["dataset"] = session->dataset;
    body["strategy"] = std::string(to_string(loop.config().strategy));
    body["budget"] = loop.config().budget;
    body["alpha"] = loop.alpha();
    body["t"] = loop.t();
    body["finished"] = loop.finished();
    body["created"] = session->created;
    body["updated"] = session->updated;
    body["history"] = history_to_json(loop.history());
    body["buckets"] = bucket_table(loop);
    Json labels = Json::array();
    for (std::size_t p : loop.labeled().order()) {
        labels.push_back(Json{{"point_id", p}, {"label", loop.labeled().label(p)}});
    }
    body["labels"] = labels;
    body["pending_point"] = loop.pending() ? Json(loop.pending()->point) : Json(nullptr);
    return Response{200, std::move(body)};
}

Response LabelServer::health() const {
    std::shared_lock lock(sessions_mutex_);
    Json body;
    body["status"] = "ok";
    body["sessions"] = sessions_.size();
    Json names = Json::array();
    for (const auto& [id, _] : datasets_) names.push_back(id);
    body["datasets"] = names;
    return Response{200, std::move(body)};
}

void LabelServer::persist(const Session& s) const {
    if (!cfg_.state_dir) return;
    Json snap;
    snap["session_id"] = s.id;
    snap["request"] = s.request;
    snap["created"] = s.created;
    snap["updated"] = s.updated;
    Json labels = Json::array();
    for (std::size_t p : s.loop->labeled().order()) {
        labels.push_back(Json{{"point_id", p}, {"label", s.loop->labeled().label(p)}});
    }
    snap["labels"] = labels;
    const fs::path target = *cfg_.state_dir / (s.id + ".json");
    const fs::path tmp = target.string() + ".tmp";
    write_text_file(tmp, snap.dump(2));
    fs::rename(tmp, target);
}

void LabelServer::persist_all() {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::shared_lock lock(sessions_mutex_);
        for (const auto& [_, s] : sessions_) all.push_back(s);
    }
    for (const auto& s : all) {
        std::lock_guard lock(s->mutex);
        persist(*s);
    }
}

std::string LabelServer::restore_session(const fs::path& snapshot) {
    const Json snap = read_json_file(snapshot);
    if (!snap.contains("session_id") || !snap.contains("request") || !snap.contains("labels")) {
        throw Error(ErrorKind::SchemaError, snapshot.string() + ": not a session snapshot");
    }
    const std::string id = snap.at("session_id").get<std::string>();
    auto session = build_session(snap.at("request"), id);
    for (const auto& entry : snap.at("labels")) {
        const auto point = entry.at("point_id").get<std::size_t>();
        if (!session->loop->pending() || session->loop->pending()->point != point) {
            throw Error(ErrorKind::SchemaError,
                        snapshot.string() + ": replay diverged at point " + std::to_string(point));
        }
        session->loop->submit(point, entry.at("label").get<int>());
    }
    session->created = snap.value("created", session->created);
    session->updated = snap.value("updated", session->updated);
    std::unique_lock lock(sessions_mutex_);
    sessions_[id] = std::move(session);
    return id;
}

std::size_t LabelServer::restore_sessions() {
    if (!cfg_.state_dir || !fs::exists(*cfg_.state_dir)) return 0;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(*cfg_.state_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) restore_session(f);
    return files.size();
}

int LabelServer::bind(const std::string& host, int port) {
    if (port < 0 || port > 65535) throw Error(ErrorKind::InvalidArgument, "port must lie in [0, 65535]");
    int bound = port;
    if (port == 0) {
        bound = http_->server.bind_to_any_port(host);
    } else if (!http_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound <= 0) {
        throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
    }
    return bound;
}

void LabelServer::listen() { http_->server.listen_after_bind(); }

void LabelServer::stop() {
    if (http_) http_->server.stop();
}

}  // namespace weasul
