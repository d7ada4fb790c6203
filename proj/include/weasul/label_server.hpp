#pragma once

// HTTP session service for a human annotator. Each session wraps one
// ActiveWeasulSession; handlers are also callable directly.
//
//   POST /sessions                 {dataset, strategy?, budget?, seed?, fit?}
//   GET  /sessions/{id}/query
//   POST /sessions/{id}/label      {point_id, label}
//   GET  /sessions/{id}/state
//   GET  /healthz
//
// Errors are {code, message}.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "weasul/active_loop.hpp"
#include "weasul/json_io.hpp"

namespace weasul {

struct ServerConfig {
    std::optional<std::filesystem::path> state_dir;   // snapshots written here after each label
    std::optional<std::filesystem::path> static_dir;  // mounted at / when set
    std::size_t default_budget = 30;
};

struct Response {
    int status = 200;
    Json body;
};

class LabelServer {
public:
    explicit LabelServer(ServerConfig cfg = {});
    ~LabelServer();
    LabelServer(const LabelServer&) = delete;
    LabelServer& operator=(const LabelServer&) = delete;

    void register_dataset(const std::string& id, std::shared_ptr<const ExperimentData> data);

    Response create_session(const std::string& request_body);
    Response get_query(const std::string& session_id);
    Response submit_label(const std::string& session_id, const std::string& request_body);
    Response get_state(const std::string& session_id);
    Response health() const;

    // Replays every snapshot in the state directory; returns the number of
    // sessions restored.
    std::size_t restore_sessions();
    // Replays one snapshot file.
    std::string restore_session(const std::filesystem::path& snapshot);
    void persist_all();

    // Port 0 picks a free port. Returns the bound port; throws Io when the
    // address cannot be bound.
    int bind(const std::string& host, int port);
    // Blocks until stop() is called.
    void listen();
    void stop();

private:
    struct Session;

    std::shared_ptr<Session> find(const std::string& id) const;
    std::string new_session_id();
    void persist(const Session& s) const;
    std::shared_ptr<Session> build_session(const Json& request, const std::string& id);

    ServerConfig cfg_;
    std::map<std::string, std::shared_ptr<const ExperimentData>> datasets_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::mutex id_mutex_;
    std::uint64_t id_counter_ = 0;
    std::uint64_t id_salt_ = 0;

    struct Http;
    std::unique_ptr<Http> http_;
};

}  // namespace weasul
