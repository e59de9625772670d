#pragma once

// HTTP front end: a registry of studies loaded from a JSON config file, and
// the routes that expose them.
//
// Config file:
//   {"data_dir": "var", "port": 8080,
//    "studies": [{"study_id": "compas", "dataset": "compas.csv",
//                 "schema": {...}, "load": {...}, "questionnaire": {...},
//                 "solver": {...}, "hierarchical": {...},
//                 "session_ttl_seconds": 86400, "sync_writes": false,
//                 "seed": null}]}
// Relative paths are resolved against the config file's directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "eopfair/errors.hpp"
#include "eopfair/json_io.hpp"
#include "eopfair/service/study.hpp"

namespace eopfair::service {

inline FeatureSchema parse_schema(const json& j) {
  FeatureSchema s = compas_schema();
  if (j.contains("features")) s.features = j.at("features").get<std::vector<Feature>>();
  s.label_name = j.value("label", s.label_name);
  s.prediction_name = j.value("prediction", s.prediction_name);
  s.validate();
  return s;
}

inline LoadOptions parse_load_options(const json& j) {
  LoadOptions o;
  o.score_threshold = j.value("score_threshold", o.score_threshold);
  o.count_cap = j.value("count_cap", o.count_cap);
  o.raw_counts = j.value("raw_counts", o.raw_counts);
  o.with_predictions = j.value("with_predictions", o.with_predictions);
  const std::string d = j.value("delimiter", std::string(1, o.delimiter));
  if (d.size() != 1) throw ValidationError("delimiter must be a single character");
  o.delimiter = d[0];
  if (!(o.count_cap > 0)) throw ValidationError("count_cap must be positive");
  return o;
}

inline StudyConfig parse_study_config(const json& j, const std::filesystem::path& base_dir) {
  StudyConfig c;
  c.study_id = j.at("study_id").get<std::string>();
  std::filesystem::path dataset = j.at("dataset").get<std::string>();
  if (dataset.is_relative()) dataset = base_dir / dataset;
  c.dataset = dataset.string();
  if (j.contains("schema")) c.schema = parse_schema(j["schema"]);
  if (j.contains("load")) c.load = parse_load_options(j["load"]);
  if (j.contains("questionnaire")) c.questionnaire = j["questionnaire"].get<QuestionnaireConfig>();
  if (j.contains("solver")) c.solver = j["solver"].get<SolverConfig>();
  if (j.contains("hierarchical")) c.hierarchical = j["hierarchical"].get<HierarchicalConfig>();
  c.session_ttl_seconds = j.value("session_ttl_seconds", c.session_ttl_seconds);
  c.sync_writes = j.value("sync_writes", c.sync_writes);
  if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
  if (c.session_ttl_seconds <= 0) throw ValidationError("session_ttl_seconds must be positive");
  return c;
}

struct ServiceConfig {
  std::filesystem::path data_dir = "data";
  int port = 8080;
  std::string host = "0.0.0.0";
  std::vector<StudyConfig> studies;
};

/// Reads a config file; EOPFAIR_DATA_DIR and EOPFAIR_PORT override the file.
inline ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  ServiceConfig c;
  std::filesystem::path data_dir = j.value("data_dir", std::string("data"));
  c.data_dir = data_dir.is_relative() ? base / data_dir : data_dir;
  c.port = j.value("port", c.port);
  c.host = j.value("host", c.host);
  for (const auto& s : j.at("studies")) c.studies.push_back(parse_study_config(s, base));

  if (const char* d = std::getenv("EOPFAIR_DATA_DIR"); d && *d) c.data_dir = d;
  if (const char* p = std::getenv("EOPFAIR_PORT"); p && *p) {
    try {
      c.port = std::stoi(p);
    } catch (const std::exception&) {
      throw ValidationError(std::string("EOPFAIR_PORT is not a port number: ") + p);
    }
  }
  return c;
}

class Registry {
 public:
  Registry() = default;
  Registry(const ServiceConfig& cfg, Clock clock = system_now_ms) {
    for (const auto& s : cfg.studies) add(std::make_shared<Study>(s, cfg.data_dir, clock));
  }

  void add(std::shared_ptr<Study> study) {
    const std::string id = study->config().study_id;
    if (!studies_.emplace(id, std::move(study)).second) throw ValidationError("duplicate study_id " + id);
  }

  Study& study(const std::string& id) const {
    const auto it = studies_.find(id);
    if (it == studies_.end()) throw NotFoundError("unknown study " + id);
    return *it->second;
  }

  /// The study owning a session.
  Study& study_of_session(const std::string& session_id) const {
    for (const auto& [id, s] : studies_) {
      if (s->has_session(session_id)) return *s;
    }
    throw NotFoundError("unknown session " + session_id);
  }

  std::size_t size() const noexcept { return studies_.size(); }

 private:
  std::map<std::string, std::shared_ptr<Study>> studies_;
};

inline int http_status(const std::exception& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const ConflictError*>(&e) || dynamic_cast<const EmptyStudyError*>(&e)) return 409;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const json::exception*>(&e)) return 400;
  return 500;
}

inline std::string error_kind(int status) {
  switch (status) {
    case 400: return "validation";
    case 404: return "not_found";
    case 409: return "conflict";
    default: return "internal";
  }
}

inline void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

/// Runs `fn`, mapping library errors to JSON error responses.
template <class F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    const int status = http_status(e);
    send_json(res, {{"error", error_kind(status)}, {"message", e.what()}}, status);
  }
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("request body is not valid JSON: ") + e.what());
  }
}

inline void install_routes(httplib::Server& server, const Registry& registry) {
  server.Get("/healthz", [&registry](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"}, {"studies", registry.size()}});
  });

  server.Post(R"(/studies/([^/]+)/sessions)", [&registry](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const SessionInfo info = registry.study(req.matches[1]).create_session();
      send_json(res, {{"session_id", info.session_id},
                      {"part_order", info.part_order},
                      {"total_questions", info.total_questions}},
                201);
    });
  });

  server.Get(R"(/sessions/([^/]+)/next)", [&registry](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      send_json(res, registry.study_of_session(id).next_question(id));
    });
  });

  server.Post(R"(/sessions/([^/]+)/answers)", [&registry](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      Study& study = registry.study_of_session(id);
      const std::size_t cursor = study.submit_answer(id, parse_body(req));
      send_json(res, {{"cursor", cursor}});
    });
  });

  server.Post(R"(/sessions/([^/]+)/demographics)", [&registry](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      registry.study_of_session(id).submit_demographics(id, parse_body(req));
      send_json(res, json::object());
    });
  });

  server.Get(R"(/studies/([^/]+)/results)", [&registry](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::optional<double> lambda;
      if (req.has_param("lambda")) {
        try {
          lambda = std::stod(req.get_param_value("lambda"));
        } catch (const std::exception&) {
          throw ValidationError("lambda must be a number");
        }
        if (!(*lambda >= 0)) throw ValidationError("lambda must be nonnegative");
      }
      send_json(res, registry.study(req.matches[1]).results(lambda));
    });
  });
}

}  // namespace eopfair::service
