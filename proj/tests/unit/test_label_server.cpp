#include <doctest.h>

#include <thread>

#include "../support/temp_dir.hpp"
#include "weasul/errors.hpp"
#include "weasul/json_io.hpp"
#include "weasul/label_server.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines a _res macro.
#include <httplib.h>

using namespace weasul;

namespace {

std::shared_ptr<const ExperimentData> server_data() {
    static const auto data = [] {
        SyntheticSpec spec;
        spec.n_train = 1500;
        spec.n_test = 400;
        spec.seed = 77;
        auto [train, test] = generate_gaussian_mixture(spec);
        auto d = std::make_shared<ExperimentData>();
        d->train = std::move(train);
        d->test = std::move(test);
        d->dependency = synthetic_dependency();
        return std::shared_ptr<const ExperimentData>(d);
    }();
    return data;
}

int truth(std::size_t point) { return (*server_data()->train.labels)[point]; }

std::string label_body(std::size_t point, int label) {
    return Json{{"point_id", point}, {"label", label}}.dump();
}

std::string create(LabelServer& server, const Json& request) {
    const auto r = server.create_session(request.dump());
    REQUIRE(r.status == 201);
    return r.body["session_id"].get<std::string>();
}

// Answers every pending query with the ground truth until the budget runs out.
void answer_all(LabelServer& server, const std::string& id) {
    for (;;) {
        const auto q = server.get_query(id);
        if (q.status == 409) return;
        REQUIRE(q.status == 200);
        const auto point = q.body["point_id"].get<std::size_t>();
        REQUIRE(server.submit_label(id, label_body(point, truth(point))).status == 200);
    }
}

}  // namespace

TEST_CASE("session lifecycle through the handlers") {
    LabelServer server;
    server.register_dataset("synthetic", server_data());

    const auto created = server.create_session(R"({"dataset": "synthetic", "budget": 3, "seed": 4})");
    REQUIRE(created.status == 201);
    const auto id = created.body["session_id"].get<std::string>();
    CHECK(created.body["t"] == 0);
    CHECK(created.body["strategy"] == "maxkl");
    CHECK(created.body["metrics"]["gen_accuracy"].is_number());
    REQUIRE(created.body["query"].is_object());

    const auto q = server.get_query(id);
    REQUIRE(q.status == 200);
    CHECK(q.body == created.body["query"]);
    CHECK(q.body["features"].size() == 2);
    CHECK(q.body["bucket_config"].size() == 3);
    const auto point = q.body["point_id"].get<std::size_t>();

    const auto labelled = server.submit_label(id, label_body(point, truth(point)));
    REQUIRE(labelled.status == 200);
    CHECK(labelled.body["t"] == 1);
    CHECK_FALSE(labelled.body["finished"].get<bool>());
    CHECK(labelled.body["deltas"].size() == server.get_state(id).body["buckets"].size());

    answer_all(server, id);
    const auto state = server.get_state(id);
    REQUIRE(state.status == 200);
    CHECK(state.body["t"] == 3);
    CHECK(state.body["finished"] == true);
    CHECK(state.body["history"].size() == 4);
    CHECK(state.body["labels"].size() == 3);
    CHECK(state.body["labels"][0]["point_id"] == point);
    CHECK(state.body["pending_point"].is_null());
    std::size_t total = 0, labelled_rows = 0;
    for (const auto& row : state.body["buckets"]) {
        total += row["size"].get<std::size_t>();
        labelled_rows += row["labelled"].get<std::size_t>();
    }
    CHECK(total == server_data()->train.size());
    CHECK(labelled_rows == 3);

    CHECK(server.get_query(id).status == 409);
    CHECK(server.get_query(id).body["code"] == "no_pending_query");
    CHECK(server.submit_label(id, label_body(0, 1)).status == 409);

    const auto h = server.health();
    CHECK(h.body["status"] == "ok");
    CHECK(h.body["sessions"] == 1);
    CHECK(h.body["datasets"] == Json::array({"synthetic"}));
}

TEST_CASE("request validation") {
    LabelServer server;
    server.register_dataset("synthetic", server_data());
    CHECK(server.create_session("{nope").status == 400);
    CHECK(server.create_session(R"({"dataset": "missing"})").status == 404);
    CHECK(server.create_session(R"({"dataset": "missing"})").body["code"] == "unknown_dataset");
    CHECK(server.create_session(R"({"budget": 3})").status == 422);
    CHECK(server.create_session(R"({"dataset": "synthetic", "strategy": "boundary"})").status == 422);
    CHECK(server.create_session(R"({"dataset": "synthetic", "budget": -1})").status == 422);
    CHECK(server.create_session(R"({"dataset": "synthetic", "fit": {"alpha": "big"}})").status == 422);

    const auto id = create(server, Json{{"dataset", "synthetic"}, {"budget", 2}});
    const auto point = server.get_query(id).body["point_id"].get<std::size_t>();
    CHECK(server.get_query("nope").status == 404);
    CHECK(server.get_state("nope").status == 404);
    CHECK(server.submit_label("nope", label_body(point, 1)).status == 404);
    CHECK(server.submit_label(id, "{").status == 400);
    CHECK(server.submit_label(id, R"({"point_id": -3, "label": 1})").body["code"] == "invalid_point");
    CHECK(server.submit_label(id, R"({"label": 1})").status == 422);
    CHECK(server.submit_label(id, Json{{"point_id", point}, {"label", 2}}.dump()).body["code"] == "invalid_label");
    CHECK(server.submit_label(id, Json{{"point_id", point}, {"label", true}}.dump()).status == 422);
    const auto wrong = server.submit_label(id, label_body(point + 1, 1));
    CHECK(wrong.status == 409);
    CHECK(wrong.body["code"] == "wrong_point");
    CHECK(server.get_state(id).body["t"] == 0);
}

TEST_CASE("server loop matches a batch run with the same labels") {
    LabelServer server;
    server.register_dataset("synthetic", server_data());
    for (const char* strategy : {"maxkl", "margin", "random"}) {
        CAPTURE(strategy);
        const auto id = create(server, Json{{"dataset", "synthetic"}, {"strategy", strategy}, {"budget", 6}, {"seed", 9}});
        answer_all(server, id);

        LoopConfig cfg;
        cfg.strategy = parse_strategy(strategy);
        cfg.budget = 6;
        cfg.seed = 9;
        GroundTruthOracle oracle(server_data()->train);
        const auto batch = run_active_weasul(server_data(), cfg, oracle);
        CHECK(server.get_state(id).body["history"] == history_to_json(batch));
    }
}

TEST_CASE("sessions survive a restart") {
    testing::TempDir dir;
    std::string id;
    Json before;
    {
        LabelServer server(ServerConfig{dir.path(), std::nullopt, 30});
        server.register_dataset("synthetic", server_data());
        id = create(server, Json{{"dataset", "synthetic"}, {"budget", 5}, {"seed", 2}});
        for (int k = 0; k < 3; ++k) {
            const auto point = server.get_query(id).body["point_id"].get<std::size_t>();
            REQUIRE(server.submit_label(id, label_body(point, truth(point))).status == 200);
        }
        before = server.get_state(id).body;
        CHECK(std::filesystem::exists(dir / (id + ".json")));
    }
    LabelServer restarted(ServerConfig{dir.path(), std::nullopt, 30});
    restarted.register_dataset("synthetic", server_data());
    CHECK(restarted.restore_sessions() == 1);
    const auto after = restarted.get_state(id);
    REQUIRE(after.status == 200);
    CHECK(after.body["t"] == 3);
    CHECK(after.body == before);
    CHECK(restarted.get_query(id).body["point_id"] == before["pending_point"]);

    SUBCASE("a diverging snapshot is rejected") {
        Json snap = read_json_file(dir / (id + ".json"));
        snap["labels"][0]["point_id"] = snap["labels"][0]["point_id"].get<std::size_t>() + 1;
        write_text_file(dir / "broken.json", snap.dump());
        LabelServer other(ServerConfig{std::nullopt, std::nullopt, 30});
        other.register_dataset("synthetic", server_data());
        CHECK_THROWS_AS(other.restore_session(dir / "broken.json"), Error);
    }
}

TEST_CASE("HTTP transport") {
    LabelServer server;
    server.register_dataset("synthetic", server_data());
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread runner([&] { server.listen(); });

    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(30, 0);
    for (int i = 0; i < 100; ++i) {
        if (auto r = client.Get("/healthz"); r && r->status == 200) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }

    auto health = client.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(health->get_header_value("Content-Type") == "application/json");

    auto created = client.Post("/sessions", R"({"dataset": "synthetic", "budget": 2, "seed": 1})", "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 201);
    const auto id = Json::parse(created->body)["session_id"].get<std::string>();

    auto query = client.Get("/sessions/" + id + "/query");
    REQUIRE(query);
    REQUIRE(query->status == 200);
    const auto point = Json::parse(query->body)["point_id"].get<std::size_t>();

    SUBCASE("duplicate submissions: one wins, one conflicts") {
        int statuses[2] = {0, 0};
        std::thread a([&] {
            httplib::Client c("127.0.0.1", port);
            if (auto r = c.Post("/sessions/" + id + "/label", label_body(point, 1), "application/json")) statuses[0] = r->status;
        });
        std::thread b([&] {
            httplib::Client c("127.0.0.1", port);
            if (auto r = c.Post("/sessions/" + id + "/label", label_body(point, 1), "application/json")) statuses[1] = r->status;
        });
        a.join();
        b.join();
        CHECK(std::min(statuses[0], statuses[1]) == 200);
        CHECK(std::max(statuses[0], statuses[1]) == 409);
        auto state = client.Get("/sessions/" + id + "/state");
        REQUIRE(state);
        CHECK(Json::parse(state->body)["t"] == 1);
    }
    SUBCASE("errors keep the documented shape") {
        auto missing = client.Get("/sessions/zzz/state");
        REQUIRE(missing);
        CHECK(missing->status == 404);
        const auto body = Json::parse(missing->body);
        CHECK(body["code"] == "unknown_session");
        CHECK(body["message"].is_string());
    }

    SUBCASE("a busy port is reported") {
        LabelServer other;
        CHECK_THROWS_AS(other.bind("127.0.0.1", port), Error);
    }

    server.stop();
    runner.join();
}
