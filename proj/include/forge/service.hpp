#pragma once

// HTTP/JSON control plane. Routes:
//
//   POST /graphs                  {dsl}                       -> 201 | 422
//   GET  /graphs/{id}                                         -> 200 | 404
//   POST /sessions                {graph_id, train_config, dataset} -> 201 | 404 | 422
//   GET  /sessions/{id}                                       -> 200 | 404
//   POST /sessions/{id}/step      {n}                         -> 200 | 404 | 409 | 422 | 500
//   GET  /sessions/{id}/metrics?since_step=k                  -> 200 | 404
//   POST /battles                 {graph_a, graph_b, config}  -> 201 | 404 | 422 | 500
//   GET  /healthz                                             -> 200 "ok"
//
// Everything lives in memory. Each session has one writer (its step
// executor); readers see a snapshot that is only extended under a lock.

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "forge/arena.hpp"
#include "forge/complexity.hpp"
#include "forge/dataset_spec.hpp"
#include "forge/dsl.hpp"
#include "forge/training.hpp"
#include "forge/wire.hpp"

namespace forge {

enum class SessionState { Idle, Running, Finished, Failed };

inline constexpr std::string_view state_name(SessionState s) {
  switch (s) {
    case SessionState::Idle: return "idle";
    case SessionState::Running: return "running";
    case SessionState::Finished: return "finished";
    case SessionState::Failed: return "failed";
  }
  return "?";
}

class SessionService {
 public:
  static constexpr std::int64_t kMaxStepsPerCall = 10'000;

  SessionService() { install_routes(); }

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  httplib::Server& server() { return server_; }

  /// Blocks serving on host:port.
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  /// Binds an ephemeral port and returns it; call listen_after_bind() next.
  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  using json = nlohmann::json;

  struct StoredGraph {
    GraphSpec spec;
    std::string dsl;
    std::size_t node_count;
  };

  struct Session {
    std::string id;
    std::string graph_id;
    TrainConfig config;
    std::unique_ptr<TrainingSession> training;  // writer-owned
    std::mutex writer;

    mutable std::shared_mutex snapshot_mutex;
    std::int64_t step = 0;
    SessionState state = SessionState::Idle;
    std::vector<MetricPoint> points;  // append-only
    std::string failure;
  };

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }
  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
  }

  static json parse_body(const httplib::Request& req) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw wire::SchemaError("request body must be a JSON object");
    return body;
  }

  std::shared_ptr<const StoredGraph> find_graph(const std::string& id) const {
    std::shared_lock lock(graphs_mutex_);
    auto it = graphs_.find(id);
    return it == graphs_.end() ? nullptr : it->second;
  }

  std::shared_ptr<Session> find_session(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  void install_routes() {
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const NumericError& e) {
        send_error(res, 500, e.what());
      } catch (const wire::SchemaError& e) {
        send_error(res, 422, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });

    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });

    server_.Post("/graphs", [this](const httplib::Request& req, httplib::Response& res) { post_graph(req, res); });
    server_.Get(R"(/graphs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      get_graph(req.matches[1], res);
    });
    server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) { post_session(req, res); });
    server_.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      get_session(req.matches[1], res);
    });
    server_.Post(R"(/sessions/([^/]+)/step)", [this](const httplib::Request& req, httplib::Response& res) {
      post_step(req.matches[1], req, res);
    });
    server_.Get(R"(/sessions/([^/]+)/metrics)", [this](const httplib::Request& req, httplib::Response& res) {
      get_metrics(req.matches[1], req, res);
    });
    server_.Post("/battles", [this](const httplib::Request& req, httplib::Response& res) { post_battle(req, res); });
  }

  void post_graph(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.contains("dsl") || !body["dsl"].is_string()) throw wire::SchemaError("body needs a string field 'dsl'");
    auto parsed = parse(body["dsl"].get<std::string>());
    if (!parsed) return send_json(res, 422, {{"errors", wire::to_json(parsed.errors)}});

    const ValidatedGraph graph = validate(*parsed.spec).value();
    auto stored = std::make_shared<const StoredGraph>(
        StoredGraph{*parsed.spec, canonical_serialize(*parsed.spec), node_count(*parsed.spec)});
    std::string id;
    {
      std::unique_lock lock(graphs_mutex_);
      id = "g" + std::to_string(++graph_counter_);
      graphs_.emplace(id, stored);
    }
    send_json(res, 201, {{"id", id}, {"node_count", stored->node_count}, {"shapes", wire::to_json(graph.shapes())}});
  }

  void get_graph(const std::string& id, httplib::Response& res) {
    auto g = find_graph(id);
    if (!g) return send_error(res, 404, "unknown graph '" + id + "'");
    send_json(res, 200, {{"dsl", g->dsl}, {"node_count", g->node_count},
                         {"complexity", wire::to_json(complexity_report(g->spec))}});
  }

  void post_session(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.contains("graph_id") || !body["graph_id"].is_string())
      throw wire::SchemaError("body needs a string field 'graph_id'");
    const std::string graph_id = body["graph_id"].get<std::string>();
    auto g = find_graph(graph_id);
    if (!g) return send_error(res, 404, "unknown graph '" + graph_id + "'");
    const TrainConfig config = wire::train_config_from_json(body.value("train_config", json::object()));
    const DatasetSpec dspec = wire::dataset_spec_from_json(body.value("dataset", json::object()));

    auto session = std::make_shared<Session>();
    try {
      session->training = std::make_unique<TrainingSession>(validate(g->spec).value(), load_dataset(dspec), config);
    } catch (const DataError& e) {
      return send_error(res, 422, e.what());
    } catch (const std::invalid_argument& e) {
      return send_error(res, 422, e.what());
    }
    session->graph_id = graph_id;
    session->config = config;
    {
      std::unique_lock lock(sessions_mutex_);
      session->id = "s" + std::to_string(++session_counter_);
      sessions_.emplace(session->id, session);
    }
    send_json(res, 201, {{"session_id", session->id}});
  }

  static json session_json(const Session& s) {
    std::shared_lock lock(s.snapshot_mutex);
    json out = {{"session_id", s.id},
                {"graph_id", s.graph_id},
                {"train_config", wire::to_json(s.config)},
                {"step", s.step},
                {"state", std::string(state_name(s.state))},
                {"points", s.points.size()}};
    if (!s.failure.empty()) out["failure"] = s.failure;
    return out;
  }

  void get_session(const std::string& id, httplib::Response& res) {
    auto s = find_session(id);
    if (!s) return send_error(res, 404, "unknown session '" + id + "'");
    send_json(res, 200, session_json(*s));
  }

  void post_step(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto s = find_session(id);
    if (!s) return send_error(res, 404, "unknown session '" + id + "'");
    const json body = parse_body(req);
    if (!body.contains("n") || !body["n"].is_number_integer())
      throw wire::SchemaError("body needs an integer field 'n'");
    const std::int64_t n = body["n"].get<std::int64_t>();
    if (n < 1 || n > kMaxStepsPerCall)
      throw wire::SchemaError("n must be between 1 and " + std::to_string(kMaxStepsPerCall));

    std::lock_guard writer(s->writer);
    {
      std::unique_lock lock(s->snapshot_mutex);
      if (s->state == SessionState::Finished || s->state == SessionState::Failed)
        return send_error(res, 409, "session '" + id + "' is " + std::string(state_name(s->state)));
      s->state = SessionState::Running;
    }
    auto& training = *s->training;
    try {
      for (std::int64_t i = 0; i < n && !training.finished(); ++i) {
        training.advance(1);
        publish(*s, training);
      }
    } catch (const NumericError& e) {
      std::unique_lock lock(s->snapshot_mutex);
      s->state = SessionState::Failed;
      s->failure = e.what();
      return send_error(res, 500, std::string(e.what()) + " at step " + std::to_string(training.step() + 1));
    }

    std::shared_lock lock(s->snapshot_mutex);
    json latest = nullptr;
    for (auto it = s->points.rbegin(); it != s->points.rend(); ++it)
      if (it->split == Split::Eval) {
        latest = wire::to_json(*it);
        break;
      }
    send_json(res, 200, {{"step", s->step}, {"latest", latest}, {"state", std::string(state_name(s->state))}});
  }

  static void publish(Session& s, const TrainingSession& training) {
    std::unique_lock lock(s.snapshot_mutex);
    const auto& all = training.points();
    for (std::size_t i = s.points.size(); i < all.size(); ++i) s.points.push_back(all[i]);
    s.step = training.step();
    if (training.finished()) s.state = SessionState::Finished;
  }

  void get_metrics(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto s = find_session(id);
    if (!s) return send_error(res, 404, "unknown session '" + id + "'");
    std::int64_t since = -1;
    if (req.has_param("since_step")) {
      try {
        since = std::stoll(req.get_param_value("since_step"));
      } catch (const std::exception&) {
        throw wire::SchemaError("since_step must be an integer");
      }
    }
    json points = json::array();
    {
      std::shared_lock lock(s->snapshot_mutex);
      for (const auto& p : s->points)
        if (p.step > since) points.push_back(wire::to_json(p));
    }
    send_json(res, 200, {{"points", points}});
  }

  void post_battle(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    for (const char* key : {"graph_a", "graph_b"})
      if (!body.contains(key) || !body[key].is_string())
        throw wire::SchemaError(std::string("body needs a string field '") + key + "'");
    const std::string id_a = body["graph_a"], id_b = body["graph_b"];
    auto a = find_graph(id_a);
    if (!a) return send_error(res, 404, "unknown graph '" + id_a + "'");
    auto b = find_graph(id_b);
    if (!b) return send_error(res, 404, "unknown graph '" + id_b + "'");

    const json config = body.value("config", json::object());
    if (!config.is_object()) throw wire::SchemaError("config must be an object");
    BattleConfig bc;
    bc.train = wire::train_config_from_json(config.value("train_config", json::object()));
    const DatasetSpec dspec = wire::dataset_spec_from_json(config.value("dataset", json::object()));
    bc.dataset_id = dspec.id();
    if (config.contains("priority")) bc.priority = wire::priority_from_json(config["priority"]);

    try {
      auto result = run_battle(a->spec, b->spec, load_dataset(dspec), bc, id_a, id_b);
      send_json(res, 201, wire::to_json(result));
    } catch (const DataError& e) {
      send_error(res, 422, e.what());
    } catch (const IncompatibleData& e) {
      send_error(res, 422, e.what());
    }
  }

  httplib::Server server_;

  mutable std::shared_mutex graphs_mutex_;
  std::map<std::string, std::shared_ptr<const StoredGraph>> graphs_;
  std::uint64_t graph_counter_ = 0;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t session_counter_ = 0;
};

}  // namespace forge
