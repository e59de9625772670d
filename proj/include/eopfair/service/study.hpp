#pragma once

// A study: one dataset, one questionnaire configuration, and the sessions of
// its participants. All state changes go through the append-only event log
// before they are acknowledged; on construction the log is replayed.

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <iomanip>
#include <string>
#include <vector>

#include "eopfair/aggregator.hpp"
#include "eopfair/domain.hpp"
#include "eopfair/errors.hpp"
#include "eopfair/estimator.hpp"
#include "eopfair/json_io.hpp"
#include "eopfair/questiongen.hpp"
#include "eopfair/service/event_log.hpp"

namespace eopfair::service {

using json = nlohmann::json;
using Clock = std::function<std::int64_t()>;

inline std::int64_t system_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct StudyConfig {
  std::string study_id;
  /// Path of the delimited dataset; empty when the dataset is supplied in memory.
  std::string dataset;
  FeatureSchema schema = compas_schema();
  LoadOptions load;
  QuestionnaireConfig questionnaire;
  SolverConfig solver;
  HierarchicalConfig hierarchical;
  /// In-progress sessions idle for longer than this are abandoned.
  std::int64_t session_ttl_seconds = 24 * 3600;
  /// fdatasync after every log record.
  bool sync_writes = false;
  /// When set, session seeds and ids are derived from this and the session's
  /// ordinal instead of std::random_device. Ids become predictable; use for
  /// reproducible runs only.
  std::optional<std::uint64_t> seed;
};

enum class SessionState { InProgress, Completed, Abandoned };

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::InProgress: return "in_progress";
    case SessionState::Completed: return "completed";
    case SessionState::Abandoned: return "abandoned";
  }
  return "in_progress";
}

/// One step of the flattened questionnaire.
struct Step {
  enum class Kind { Likert, Pairwise } kind = Kind::Likert;
  std::string question_id;
  std::size_t feature = 0;  // Likert
  Part part = Part::Desert;  // Pairwise
  std::size_t index = 0;     // Pairwise: position within the part
};

inline std::vector<Step> flatten(const Questionnaire& q) {
  std::vector<Step> steps;
  for (std::size_t j : q.likert_features) {
    steps.push_back({Step::Kind::Likert, "likert-" + std::to_string(j + 1), j, Part::Desert, 0});
  }
  for (Part p : q.part_order) {
    const auto& qs = q.questions(p);
    for (std::size_t i = 0; i < qs.size(); ++i) steps.push_back({Step::Kind::Pairwise, qs[i].question_id, 0, p, i});
  }
  return steps;
}

struct Session {
  std::string session_id;
  std::uint64_t seed = 0;
  Participant participant;
  Questionnaire questionnaire;
  std::vector<Step> steps;
  std::size_t cursor = 0;
  std::int64_t created_at = 0;
  std::int64_t updated_at = 0;
  /// Normalised payload accepted at each step (for idempotent resubmission).
  std::vector<json> accepted;
  mutable std::mutex mu;

  bool completed() const { return cursor == steps.size(); }
  SessionState state(std::int64_t now_ms, std::int64_t ttl_seconds) const {
    if (completed()) return SessionState::Completed;
    if (now_ms - updated_at > ttl_seconds * 1000) return SessionState::Abandoned;
    return SessionState::InProgress;
  }
};

struct SessionInfo {
  std::string session_id;
  std::vector<Part> part_order;
  std::size_t total_questions = 0;
};

/// Everything recorded about a completed participant, as used by results().
struct CompletedParticipant {
  Participant participant;
  Questionnaire questionnaire;
};

inline std::vector<PairwiseQuestion> all_pairwise(const Questionnaire& q) {
  std::vector<PairwiseQuestion> all = q.desert_questions;
  all.insert(all.end(), q.utility_questions.begin(), q.utility_questions.end());
  return all;
}

/// Study results, computed from a set of completed participants.
inline json compute_results(const std::string& study_id, const FeatureSchema& schema,
                            const std::vector<CompletedParticipant>& people, const SolverConfig& solver,
                            const HierarchicalConfig& hier) {
  if (people.empty()) throw EmptyStudyError("study " + study_id + " has no completed sessions");

  json fits = json::array();
  std::map<Part, std::map<std::string, FitResult>> full;
  std::map<Part, std::map<std::string, FitResult>> baseline;
  std::map<Part, std::map<std::string, std::vector<ComparisonRow>>> rows_by_part;
  std::size_t checks_total = 0;
  std::size_t checks_passed = 0;
  json attention = json::array();

  for (const auto& cp : people) {
    const Participant& p = cp.participant;
    const auto questions = all_pairwise(cp.questionnaire);
    json entry{{"participant_id", p.participant_id}};
    for (Part part : {Part::Desert, Part::Utility}) {
      const auto& responses = part == Part::Desert ? p.desert_responses : p.utility_responses;
      const auto rows = build_rows(responses, questions, part);
      const std::string key(to_string(part));
      if (rows.empty()) {
        entry[key] = nullptr;
        entry[key + "_baseline"] = nullptr;
        continue;
      }
      const FitResult f = estimate_weights(rows, rows.front().delta.size(), solver, part);
      const FitResult b = estimate_eoo_baseline(rows, solver, std::nullopt, part);
      entry[key] = f;
      entry[key + "_baseline"] = b;
      full[part].emplace(p.participant_id, f);
      baseline[part].emplace(p.participant_id, b);
      rows_by_part[part].emplace(p.participant_id, rows);
    }
    fits.push_back(std::move(entry));

    std::size_t total = 0;
    std::size_t passed = 0;
    std::map<std::string, const PairwiseQuestion*> index;
    for (const auto& q : questions) index.emplace(q.question_id, &q);
    for (const auto* list : {&p.desert_responses, &p.utility_responses}) {
      for (const auto& r : *list) {
        const auto it = index.find(r.question_id);
        if (it == index.end() || !it->second->is_attention_check) continue;
        ++total;
        if (it->second->expected_choice && r.answer.chosen_subject() == *it->second->expected_choice) ++passed;
      }
    }
    checks_total += total;
    checks_passed += passed;
    attention.push_back({{"participant_id", p.participant_id}, {"passed", passed}, {"total", total}});
  }

  std::vector<Participant> participants;
  for (const auto& cp : people) participants.push_back(cp.participant);

  json circumstance;
  {
    const CircumstanceProfile profile = vote_circumstance(participants, schema.k());
    json names = json::array();
    for (std::size_t j = 0; j < schema.k(); ++j) {
      if (profile.irrelevant_flags[j]) names.push_back(schema.features[j].name);
    }
    circumstance = profile;
    circumstance["features"] = names;
  }

  json aggregates = json::object();
  json goodness = json::object();
  json demographics = json::object();
  for (Part part : {Part::Desert, Part::Utility}) {
    const std::string key(to_string(part));
    if (full[part].empty()) {
      aggregates[key] = nullptr;
      goodness[key] = nullptr;
      demographics[key] = nullptr;
      continue;
    }
    std::map<std::string, WeightVector> ws;
    double sum_full = 0.0;
    double sum_base = 0.0;
    for (const auto& [id, f] : full[part]) {
      ws.emplace(id, f.weights);
      sum_full += f.log_likelihood;
      sum_base += baseline[part].at(id).log_likelihood;
    }
    const double n = static_cast<double>(full[part].size());
    aggregates[key] = {{"average", aggregate_average(ws)},
                       {"hierarchical", aggregate_hierarchical(rows_by_part[part], hier, part)}};
    goodness[key] = {{"mean_full_log_likelihood", sum_full / n},
                     {"mean_baseline_log_likelihood", sum_base / n},
                     {"participants", full[part].size()}};
    json groups = json::object();
    for (const auto& attr : demographic_attributes()) {
      const auto g = group_by_demographic(participants, ws, attr, default_bucketing(attr));
      json by_group = json::object();
      for (const auto& [name, mean] : g.means) by_group[name] = {{"mean", mean}, {"count", g.counts.at(name)}};
      groups[attr] = {{"groups", by_group}, {"skipped", g.skipped}};
    }
    demographics[key] = groups;
  }

  json feature_names = json::array();
  for (const auto& f : schema.features) feature_names.push_back(f.name);

  return json{{"study_id", study_id},
              {"participants", people.size()},
              {"features", feature_names},
              {"fits", fits},
              {"circumstance", circumstance},
              {"aggregates", aggregates},
              {"goodness_of_fit", goodness},
              {"demographics", demographics},
              {"attention_checks",
               {{"passed", checks_passed},
                {"total", checks_total},
                {"pass_rate", checks_total ? static_cast<double>(checks_passed) / static_cast<double>(checks_total)
                                           : 1.0},
                {"per_participant", attention}}}};
}

class Study {
 public:
  /// Loads the dataset named in the config and replays `<data_dir>/<study_id>.events.ndjson`.
  Study(StudyConfig cfg, const std::filesystem::path& data_dir, Clock clock = system_now_ms)
      : Study(cfg, load_dataset_file(cfg.dataset, cfg.schema, cfg.load), data_dir, std::move(clock)) {}

  Study(StudyConfig cfg, std::vector<Subject> dataset, const std::filesystem::path& data_dir,
        Clock clock = system_now_ms)
      : cfg_(std::move(cfg)), dataset_(std::move(dataset)), clock_(std::move(clock)) {
    if (cfg_.study_id.empty()) throw ValidationError("study_id must be non-empty");
    if (dataset_.empty()) throw InsufficientDataError("study " + cfg_.study_id + " has an empty dataset");
    cfg_.schema.validate();
    cfg_.questionnaire.validate();
    cfg_.questionnaire.count_feature_max = count_feature_max(cfg_.load);
    const auto log_path = data_dir / (cfg_.study_id + ".events.ndjson");
    for (const auto& event : EventLog::replay(log_path)) apply(event);
    ordinal_ = sessions_.size();
    log_ = std::make_unique<EventLog>(log_path, cfg_.sync_writes);
  }

  const StudyConfig& config() const noexcept { return cfg_; }
  const std::vector<Subject>& dataset() const noexcept { return dataset_; }

  SessionInfo create_session() {
    const auto [seed, id] = draw_session();
    QuestionnaireConfig qc = cfg_.questionnaire;
    qc.seed = seed;
    auto s = std::make_shared<Session>();
    s->session_id = id;
    s->seed = seed;
    s->questionnaire = build_questionnaire(dataset_, cfg_.schema, qc);
    s->steps = flatten(s->questionnaire);
    s->participant.participant_id = id;
    s->created_at = s->updated_at = clock_();

    log_->append({{"type", "session_created"},
                  {"session_id", id},
                  {"seed", seed},
                  {"questionnaire", s->questionnaire},
                  {"at", s->created_at}});
    SessionInfo info{id, s->questionnaire.part_order, s->steps.size()};
    std::unique_lock lock(sessions_mu_);
    sessions_.emplace(id, std::move(s));
    return info;
  }

  /// Question payload at the cursor, or {"done": true}.
  json next_question(const std::string& session_id) const {
    const auto s = find(session_id);
    std::lock_guard lock(s->mu);
    json out{{"cursor", s->cursor}, {"total", s->steps.size()}};
    if (s->completed()) {
      out["done"] = true;
      return out;
    }
    out["done"] = false;
    const Step& step = s->steps[s->cursor];
    out["question_id"] = step.question_id;
    if (step.kind == Step::Kind::Likert) {
      const Feature& f = cfg_.schema.features.at(step.feature);
      out["section"] = "likert";
      out["feature"] = {{"index", step.feature}, {"name", f.name}, {"description", f.display}};
      json options = json::array();
      for (int l = 0; l < 4; ++l) {
        options.push_back({{"label", kLikertLabels[l]}, {"value", static_cast<LikertLevel>(l)}});
      }
      out["options"] = options;
    } else {
      const PairwiseQuestion& q = s->questionnaire.questions(step.part)[step.index];
      const bool show = prediction_shown(step.part, s->questionnaire.show_prediction_in_desert);
      out["section"] = std::string(to_string(step.part));
      out["subject_1"] = display_subject(q.subject_1, show);
      out["subject_2"] = display_subject(q.subject_2, show);
      json options = json::array({{{"label", "Clearly subject 1"}, {"value", 2}},
                                  {{"label", "Possibly subject 1"}, {"value", 1}},
                                  {{"label", "Possibly subject 2"}, {"value", -1}},
                                  {{"label", "Clearly subject 2"}, {"value", -2}}});
      if (s->questionnaire.allow_neutral) options.push_back({{"label", "No preference"}, {"value", "no_preference"}});
      out["options"] = options;
    }
    return out;
  }

  /// Records the answer at the cursor and returns the new cursor. Resending
  /// the previous answer unchanged is acknowledged without a new record;
  /// sending a different answer for the previous question supersedes it.
  std::size_t submit_answer(const std::string& session_id, const json& body) {
    const auto s = find(session_id);
    std::lock_guard lock(s->mu);
    if (!body.is_object() || !body.contains("question_id") || !body["question_id"].is_string()) {
      throw ValidationError("answer body must contain a string question_id");
    }
    const std::string qid = body["question_id"].get<std::string>();
    if (s->cursor > 0 && s->steps[s->cursor - 1].question_id == qid) {
      const std::size_t prev = s->cursor - 1;
      const json payload = normalise(*s, prev, body);
      if (payload == s->accepted[prev]) return s->cursor;
      if (s->completed()) throw ConflictError("session " + session_id + " is completed");
      const std::int64_t now = clock_();
      log_->append(answer_record(session_id, prev, payload, now, true));
      apply_answer(*s, prev, payload, now, true);
      return s->cursor;
    }
    if (s->completed()) throw ConflictError("session " + session_id + " is completed");
    if (s->steps[s->cursor].question_id != qid) {
      throw ConflictError("expected an answer to " + s->steps[s->cursor].question_id + ", got " + qid);
    }
    const json payload = normalise(*s, s->cursor, body);
    const std::int64_t now = clock_();
    log_->append(answer_record(session_id, s->cursor, payload, now, false));
    apply_answer(*s, s->cursor, payload, now, false);
    if (s->completed()) revision_.fetch_add(1);
    return s->cursor;
  }

  void submit_demographics(const std::string& session_id, const json& body) {
    const auto s = find(session_id);
    std::lock_guard lock(s->mu);
    if (!s->completed()) throw ConflictError("session " + session_id + " is not completed");
    if (!body.is_object()) throw ValidationError("demographics must be a JSON object");
    std::map<std::string, std::string> demo;
    for (const auto& [k, v] : body.items()) {
      if (v.is_null()) continue;
      if (!v.is_string()) throw ValidationError("demographic field " + k + " must be a string");
      demo.emplace(k, v.get<std::string>());
    }
    const std::int64_t now = clock_();
    log_->append({{"type", "demographics"}, {"session_id", session_id}, {"demographics", demo}, {"at", now}});
    s->participant.demographics = std::move(demo);
    s->updated_at = now;
    revision_.fetch_add(1);
  }

  SessionState session_state(const std::string& session_id) const {
    const auto s = find(session_id);
    std::lock_guard lock(s->mu);
    return s->state(clock_(), cfg_.session_ttl_seconds);
  }

  /// Copy of a session's participant record.
  Participant participant(const std::string& session_id) const {
    const auto s = find(session_id);
    std::lock_guard lock(s->mu);
    return s->participant;
  }

  std::size_t cursor(const std::string& session_id) const {
    const auto s = find(session_id);
    std::lock_guard lock(s->mu);
    return s->cursor;
  }

  bool has_session(const std::string& session_id) const {
    std::shared_lock lock(sessions_mu_);
    return sessions_.count(session_id) > 0;
  }

  std::vector<std::string> session_ids() const {
    std::shared_lock lock(sessions_mu_);
    std::vector<std::string> ids;
    for (const auto& [id, s] : sessions_) ids.push_back(id);
    return ids;
  }

  /// Snapshot of every completed session.
  std::vector<CompletedParticipant> completed_participants() const {
    std::vector<std::shared_ptr<Session>> all;
    {
      std::shared_lock lock(sessions_mu_);
      for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    std::vector<CompletedParticipant> out;
    const std::int64_t now = clock_();
    for (const auto& s : all) {
      std::lock_guard lock(s->mu);
      if (s->state(now, cfg_.session_ttl_seconds) == SessionState::Completed) {
        out.push_back({s->participant, s->questionnaire});
      }
    }
    return out;
  }

  /// Results over all completed sessions; cached until the next completion
  /// or demographics submission. A lambda override bypasses the cache.
  json results(std::optional<double> lambda = std::nullopt) const {
    if (lambda) {
      HierarchicalConfig h = cfg_.hierarchical;
      h.lambda = *lambda;
      return compute_results(cfg_.study_id, cfg_.schema, completed_participants(), cfg_.solver, h);
    }
    std::lock_guard lock(cache_mu_);
    const std::uint64_t rev = revision_.load();
    if (cache_ && cache_revision_ == rev) return *cache_;
    json r = compute_results(cfg_.study_id, cfg_.schema, completed_participants(), cfg_.solver, cfg_.hierarchical);
    cache_ = r;
    cache_revision_ = rev;
    return r;
  }

 private:
  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(sessions_mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
    return it->second;
  }

  json display_subject(const Subject& s, bool show_prediction) const {
    json features = json::object();
    for (std::size_t j = 0; j < cfg_.schema.k(); ++j) {
      const Feature& f = cfg_.schema.features[j];
      if (f.kind == FeatureKind::BoundedCount && !cfg_.load.raw_counts) {
        features[f.name] = std::lround(s.x[j] * cfg_.load.count_cap);
      } else {
        features[f.name] = s.x[j];
      }
    }
    json out{{"features", features}, {"true_label", s.y}};
    if (show_prediction && s.y_hat) out["prediction"] = *s.y_hat;
    return out;
  }

  /// Validates an answer body for the step and returns its canonical form.
  static json normalise(const Session& s, std::size_t step_index, const json& body) {
    const Step& step = s.steps[step_index];
    if (!body.contains("answer")) throw ValidationError("answer body must contain an answer");
    json out{{"question_id", step.question_id}};
    const json& a = body["answer"];
    if (step.kind == Step::Kind::Likert) {
      if (!a.is_string()) throw ValidationError("Likert answers are one of the four level strings");
      out["answer"] = std::string(to_string(parse_likert_level(a.get<std::string>())));
    } else {
      Answer ans;
      try {
        ans = a.get<Answer>();
      } catch (const nlohmann::json::exception&) {
        throw ValidationError("pairwise answers are -2, -1, 1, 2 or \"no_preference\"");
      }
      if (ans.is_no_preference() && !s.questionnaire.allow_neutral) {
        throw ValidationError("this study does not offer a neutral answer");
      }
      out["answer"] = ans;
    }
    if (body.contains("justification") && !body["justification"].is_null()) {
      if (!body["justification"].is_string()) throw ValidationError("justification must be a string");
      const std::string text = body["justification"].get<std::string>();
      if (!text.empty()) out["justification"] = text;
    }
    return out;
  }

  static json answer_record(const std::string& session_id, std::size_t index, const json& payload, std::int64_t at,
                            bool supersede) {
    return {{"type", "answer"}, {"session_id", session_id}, {"index", index},
            {"payload", payload}, {"at", at},           {"supersede", supersede}};
  }

  static void apply_answer(Session& s, std::size_t index, const json& payload, std::int64_t at, bool supersede) {
    const Step& step = s.steps.at(index);
    if (payload.at("question_id").get<std::string>() != step.question_id) {
      throw Error("event log references question " + payload.at("question_id").get<std::string>() +
                  " at step " + std::to_string(index) + " of session " + s.session_id);
    }
    std::optional<std::string> justification;
    if (payload.contains("justification")) justification = payload["justification"].get<std::string>();
    if (step.kind == Step::Kind::Likert) {
      LikertResponse l{step.feature, payload["answer"].get<LikertLevel>(), justification};
      if (supersede) {
        s.participant.likert.back() = l;
      } else {
        s.participant.likert.push_back(l);
      }
    } else {
      Response r{step.question_id, payload["answer"].get<Answer>(), justification, at};
      auto& list = step.part == Part::Desert ? s.participant.desert_responses : s.participant.utility_responses;
      if (supersede) {
        list.back() = r;
      } else {
        list.push_back(r);
      }
    }
    if (supersede) {
      s.accepted.at(index) = payload;
    } else {
      if (index != s.cursor) throw Error("event log skips a step in session " + s.session_id);
      s.accepted.push_back(payload);
      ++s.cursor;
    }
    s.updated_at = at;
  }

  void apply(const json& event) {
    const std::string type = event.at("type").get<std::string>();
    const std::string id = event.at("session_id").get<std::string>();
    if (type == "session_created") {
      auto s = std::make_shared<Session>();
      s->session_id = id;
      s->seed = event.at("seed").get<std::uint64_t>();
      s->questionnaire = event.at("questionnaire").get<Questionnaire>();
      s->steps = flatten(s->questionnaire);
      s->participant.participant_id = id;
      s->created_at = s->updated_at = event.at("at").get<std::int64_t>();
      sessions_.emplace(id, std::move(s));
      return;
    }
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error("event log references unknown session " + id);
    Session& s = *it->second;
    if (type == "answer") {
      apply_answer(s, event.at("index").get<std::size_t>(), event.at("payload"), event.at("at").get<std::int64_t>(),
                   event.value("supersede", false));
    } else if (type == "demographics") {
      s.participant.demographics = event.at("demographics").get<std::map<std::string, std::string>>();
      s.updated_at = event.at("at").get<std::int64_t>();
    } else {
      throw Error("unknown event type " + type);
    }
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  /// Questionnaire seed and a 128-bit hex id for a new session.
  std::pair<std::uint64_t, std::string> draw_session() {
    std::array<std::uint64_t, 3> r{};
    {
      std::lock_guard lock(rd_mu_);
      const std::uint64_t n = ordinal_++;
      for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = cfg_.seed ? splitmix64(splitmix64(*cfg_.seed) + 3 * n + i)
                         : (static_cast<std::uint64_t>(rd_()) << 32) | rd_();
      }
    }
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << r[1] << std::setw(16) << r[2];
    return {r[0], os.str()};
  }

  StudyConfig cfg_;
  std::vector<Subject> dataset_;
  Clock clock_;
  std::unique_ptr<EventLog> log_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;

  std::mutex rd_mu_;
  std::random_device rd_;
  std::uint64_t ordinal_ = 0;

  std::atomic<std::uint64_t> revision_{0};
  mutable std::mutex cache_mu_;
  mutable std::optional<json> cache_;
  mutable std::uint64_t cache_revision_ = 0;
};

}  // namespace eopfair::service
