/*
 * Copyright 2026 The cleanloop Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cleanloop/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <random>
#include <thread>

#include "cleanloop/error.hpp"
#include "cleanloop/eval.hpp"
#include "cleanloop/serialization.hpp"
#include "cleanloop/version.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cleanloop {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

enum class Phase { kScoring, kAwaiting, kRetraining, kStopped };

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kScoring:
      return "scoring";
    case Phase::kAwaiting:
      return "awaiting_annotations";
    case Phase::kRetraining:
      return "retraining";
    case Phase::kStopped:
      return "stopped";
  }
  return "unknown";
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string new_session_id() {
  static std::mutex mu;
  static std::mt19937_64 engine{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(engine()));
  return buf;
}

HttpResponse reply(int status, ordered_json body) {
  body["v"] = 1;
  // Keep "v" first for readability.
  ordered_json out;
  out["v"] = 1;
  for (auto& [key, value] : body.items()) {
    if (key != "v") out[key] = std::move(value);
  }
  return {status, out.dump(), "application/json"};
}

HttpResponse error_reply(int status, const std::string& message) {
  ordered_json body;
  body["error"] = message;
  return reply(status, std::move(body));
}

std::string session_file_name(const std::string& id) {
  return "session-" + id + ".json";
}

}  // namespace

struct SessionService::Session {
  std::string id;
  std::mutex mu;
  std::unique_ptr<ActiveLoop> loop;
  Phase phase = Phase::kScoring;
  double progress = 0.0;
  bool stop_requested = false;
  std::optional<std::string> token;
  CheckpointRef ref;
  bool simulation = false;
  std::vector<std::string> original_ids;
  std::vector<bool> initial_mask;
  std::string created_at;
  std::string updated_at;
  std::optional<std::string> failure;
  std::thread worker;
};

SessionService::SessionService(ServiceOptions options)
    : options_(std::move(options)) {
  if (options_.checkpoint_dir) {
    std::filesystem::create_directories(*options_.checkpoint_dir);
  }
}

SessionService::~SessionService() { shutdown(); }

std::size_t SessionService::session_count() const {
  std::shared_lock lock(sessions_mu_);
  return sessions_.size();
}

std::shared_ptr<SessionService::Session> SessionService::find(
    const std::string& id) const {
  std::shared_lock lock(sessions_mu_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void SessionService::persist(Session& session) {
  session.updated_at = now_iso8601();
  if (!options_.checkpoint_dir) return;
  ordered_json j;
  j["v"] = 1;
  j["session_id"] = session.id;
  j["token"] = session.token ? ordered_json(*session.token) : ordered_json(nullptr);
  j["created_at"] = session.created_at;
  j["updated_at"] = session.updated_at;
  j["failure"] =
      session.failure ? ordered_json(*session.failure) : ordered_json(nullptr);
  j["state"] = checkpoint_to_json(session.loop->state(), session.ref);
  write_json_file(*options_.checkpoint_dir / session_file_name(session.id), j);
}

void SessionService::launch_worker(const std::shared_ptr<Session>& session) {
  // Caller holds session->mu. Any previous worker has finished its last
  // critical section before the phase left scoring/retraining.
  if (session->worker.joinable()) session->worker.join();
  session->progress = 0.0;
  const SessionState snapshot = session->loop->state();
  Scorer scorer = options_.scorer;
  session->worker = std::thread([this, session, snapshot, scorer]() mutable {
    try {
      ActiveLoop loop(std::move(snapshot), scorer);
      const bool first = loop.state().iteration == 0;
      loop.prepare_batch([&](LoopStage stage, double fraction) {
        std::lock_guard lock(session->mu);
        session->progress = fraction;
        session->phase = (stage == LoopStage::kTraining && !first)
                             ? Phase::kRetraining
                             : Phase::kScoring;
      });
      std::lock_guard lock(session->mu);
      *session->loop = std::move(loop);
      if (session->stop_requested) session->loop->stop("manual");
      session->phase =
          session->loop->stopped() ? Phase::kStopped : Phase::kAwaiting;
      session->progress = 1.0;
      persist(*session);
    } catch (const std::exception& e) {
      std::lock_guard lock(session->mu);
      session->failure = e.what();
      session->loop->stop("error");
      session->phase = Phase::kStopped;
      try {
        persist(*session);
      } catch (const std::exception&) {
      }
    }
  });
}

void SessionService::shutdown() {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::shared_lock lock(sessions_mu_);
    for (const auto& [id, session] : sessions_) all.push_back(session);
  }
  for (const auto& session : all) {
    std::thread worker;
    {
      std::lock_guard lock(session->mu);
      worker = std::move(session->worker);
    }
    if (worker.joinable()) worker.join();
    std::lock_guard lock(session->mu);
    persist(*session);
  }
}

void SessionService::restore_checkpoints() {
  if (!options_.checkpoint_dir) return;
  std::vector<std::filesystem::path> files;
  for (const auto& entry :
       std::filesystem::directory_iterator(*options_.checkpoint_dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("session-") &&
        entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    auto session = std::make_shared<Session>();
    try {
      const json j = read_json_file(file);
      if (j.value("v", 0) != 1) throw ValidationError("unsupported version");
      session->id = j.at("session_id").get<std::string>();
      if (j.contains("token") && !j["token"].is_null()) {
        session->token = j["token"].get<std::string>();
      }
      session->created_at = j.value("created_at", "");
      session->updated_at = j.value("updated_at", "");
      if (j.contains("failure") && !j["failure"].is_null()) {
        session->failure = j["failure"].get<std::string>();
      }
      const auto& state_json = j.at("state");
      session->ref.dataset_path = state_json.at("dataset_path").get<std::string>();
      session->ref.dataset_hash = state_json.at("dataset_hash").get<std::string>();
      const Dataset original = load_dataset(session->ref.dataset_path);
      for (const auto& instance : original.instances) {
        session->original_ids.push_back(instance.id);
      }
      session->simulation = original.has_gold();
      if (session->simulation) session->initial_mask = error_mask(original);
      session->loop = std::make_unique<ActiveLoop>(
          checkpoint_from_json(state_json), options_.scorer);
    } catch (const std::exception& e) {
      throw ValidationError("corrupt checkpoint " + file.string() + ": " +
                            e.what());
    }
    std::lock_guard lock(session->mu);
    const auto& state = session->loop->state();
    if (state.stopped()) {
      session->phase = Phase::kStopped;
    } else if (!state.outstanding.empty()) {
      session->phase = Phase::kAwaiting;
    } else {
      session->phase = state.iteration == 0 ? Phase::kScoring : Phase::kRetraining;
      launch_worker(session);
    }
    std::unique_lock map_lock(sessions_mu_);
    sessions_[session->id] = session;
  }
}

HttpResponse SessionService::handle(const std::string& method,
                                    const std::string& path,
                                    const std::string& body,
                                    const std::string& authorization) {
  try {
    if (path == "/healthz" && method == "GET") {
      ordered_json j;
      j["version"] = kVersion;
      return reply(200, std::move(j));
    }
    if (path == "/sessions") {
      if (method == "POST") return create_session(body);
      return error_reply(405, "method not allowed");
    }
    const std::string prefix = "/sessions/";
    if (!path.starts_with(prefix)) return error_reply(404, "no such endpoint");
    const auto rest = path.substr(prefix.size());
    const auto slash = rest.find('/');
    if (slash == std::string::npos) return error_reply(404, "no such endpoint");
    const auto id = rest.substr(0, slash);
    const auto action = rest.substr(slash + 1);
    const auto session = find(id);
    if (!session) return error_reply(404, "unknown session '" + id + "'");
    if (method == "GET") {
      if (action == "batch") return get_batch(*session);
      if (action == "status") return get_status(*session);
      if (action == "report") return get_report(*session);
      if (action == "dataset") return get_dataset(*session);
    } else if (method == "POST") {
      if (action == "corrections") {
        return post_corrections(*session, body, authorization);
      }
      if (action == "stop") return post_stop(*session, authorization);
    }
    return error_reply(404, "no such endpoint");
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

HttpResponse SessionService::create_session(const std::string& body) {
  json request;
  try {
    request = body.empty() ? json::object() : json::parse(body);
  } catch (const json::parse_error& e) {
    return error_reply(400, std::string("malformed JSON: ") + e.what());
  }
  if (!request.is_object()) return error_reply(400, "body must be an object");
  if (request.contains("v") && request["v"] != 1) {
    return error_reply(400, "unsupported payload version");
  }

  std::filesystem::path dataset_path;
  if (request.contains("dataset_ref") && request["dataset_ref"].is_string()) {
    dataset_path = request["dataset_ref"].get<std::string>();
  } else if (options_.default_dataset) {
    dataset_path = *options_.default_dataset;
  } else {
    return error_reply(400, "dataset_ref is required");
  }
  if (!std::filesystem::is_regular_file(dataset_path)) {
    return error_reply(404, "dataset not found: " + dataset_path.string());
  }
  dataset_path = std::filesystem::weakly_canonical(dataset_path);

  LoopConfig config;
  Dataset dataset;
  try {
    json loop_json = json::object();
    loop_json["k"] = request.value("k", options_.default_k);
    if (request.contains("folds")) loop_json["folds"] = request["folds"];
    if (request.contains("trainer")) loop_json["trainer"] = request["trainer"];
    if (request.contains("ensemble")) loop_json["ensemble"] = request["ensemble"];
    if (request.contains("stop_config")) loop_json["stop"] = request["stop_config"];
    config = loop_config_from_json(loop_json);
    dataset = load_dataset(dataset_path);
    if (static_cast<std::size_t>(config.folds) > dataset.instances.size()) {
      throw ValidationError("folds exceed the number of instances");
    }
  } catch (const Error& e) {
    return error_reply(400, e.what());
  } catch (const json::exception& e) {
    return error_reply(400, e.what());
  }

  auto session = std::make_shared<Session>();
  session->id = new_session_id();
  if (request.contains("token") && request["token"].is_string()) {
    session->token = request["token"].get<std::string>();
  }
  session->ref = {dataset_path, file_content_hash(dataset_path)};
  session->simulation = dataset.has_gold();
  if (session->simulation) session->initial_mask = error_mask(dataset);
  for (const auto& instance : dataset.instances) {
    session->original_ids.push_back(instance.id);
  }
  session->created_at = now_iso8601();
  session->loop = std::make_unique<ActiveLoop>(std::move(dataset), config,
                                               options_.scorer);
  {
    std::lock_guard lock(session->mu);
    session->phase = Phase::kScoring;
    persist(*session);
    launch_worker(session);
  }
  {
    std::unique_lock lock(sessions_mu_);
    sessions_[session->id] = session;
  }
  ordered_json j;
  j["id"] = session->id;
  j["status"] = "/sessions/" + session->id + "/status";
  return reply(202, std::move(j));
}

HttpResponse SessionService::get_batch(Session& session) {
  std::lock_guard lock(session.mu);
  if (session.phase == Phase::kStopped) {
    ordered_json j;
    j["error"] = "session stopped";
    j["report"] = "/sessions/" + session.id + "/report";
    return reply(410, std::move(j));
  }
  if (session.phase != Phase::kAwaiting) {
    ordered_json j;
    j["error"] = "session is " + std::string(to_string(session.phase));
    j["phase"] = to_string(session.phase);
    j["progress"] = session.progress;
    return reply(409, std::move(j));
  }
  const auto& state = session.loop->state();
  const auto index = state.dataset.index_by_id();
  const auto& labels = state.dataset.label_space;
  const bool sequence = state.dataset.task_kind == TaskKind::kSequence;
  ordered_json items = ordered_json::array();
  for (std::size_t r = 0; r < state.outstanding.size(); ++r) {
    const auto i = index.at(state.outstanding[r]);
    const auto& instance = state.dataset.instances[i];
    ordered_json item;
    item["id"] = instance.id;
    item["rank"] = r + 1;
    item["score"] = state.last_scores->scores[i];
    if (sequence) {
      item["tokens"] = instance.tokens;
      ordered_json names = ordered_json::array();
      for (const int l : instance.observed) names.push_back(labels.label(l));
      item["labels"] = std::move(names);
    } else {
      item["text"] = instance.text;
      item["label"] = labels.label(instance.observed.front());
    }
    items.push_back(std::move(item));
  }
  ordered_json j;
  j["session_id"] = session.id;
  j["iteration"] = state.iteration + 1;
  j["task_kind"] = to_string(state.dataset.task_kind);
  j["labels"] = labels.labels();
  j["items"] = std::move(items);
  return reply(200, std::move(j));
}

namespace {

bool authorized(const std::optional<std::string>& token,
                const std::string& header) {
  return !token || header == "Bearer " + *token;
}

AnnotatorAnswer parse_answers(const json& request, const Dataset& dataset) {
  if (!request.is_object()) throw ValidationError("body must be an object");
  if (request.contains("v") && request["v"] != 1) {
    throw ValidationError("unsupported payload version");
  }
  const auto it = request.find("answers");
  if (it == request.end() || !it->is_array()) {
    throw ValidationError("'answers' must be an array");
  }
  const auto& labels = dataset.label_space;
  AnnotatorAnswer answer;
  for (const auto& item : *it) {
    if (!item.is_object() || !item.contains("id") || !item["id"].is_string()) {
      throw ValidationError("every answer needs a string 'id'");
    }
    AnnotatorDecision decision{item["id"].get<std::string>(), std::nullopt};
    const bool confirm = item.value("confirm", false);
    if (item.contains("label")) {
      if (!item["label"].is_string()) {
        throw ValidationError("'label' must be a string");
      }
      decision.new_labels = LabelSeq{labels.index_of(item["label"].get<std::string>())};
    } else if (item.contains("labels")) {
      if (!item["labels"].is_array()) {
        throw ValidationError("'labels' must be an array");
      }
      LabelSeq seq;
      for (const auto& name : item["labels"]) {
        if (!name.is_string()) throw ValidationError("labels must be strings");
        seq.push_back(labels.index_of(name.get<std::string>()));
      }
      decision.new_labels = std::move(seq);
    } else if (!confirm) {
      throw ValidationError("answer for '" + decision.id +
                            "' needs confirm, label or labels");
    }
    answer.push_back(std::move(decision));
  }
  return answer;
}

}  // namespace

HttpResponse SessionService::post_corrections(Session& session,
                                              const std::string& body,
                                              const std::string& authorization) {
  std::shared_ptr<Session> self = find(session.id);
  std::lock_guard lock(session.mu);
  if (!authorized(session.token, authorization)) {
    return error_reply(401, "missing or wrong session token");
  }
  if (session.phase != Phase::kAwaiting) {
    return error_reply(409, "session is " + std::string(to_string(session.phase)));
  }
  ActiveLoop::SubmitResult result;
  try {
    const json request = json::parse(body);
    const auto answer = parse_answers(request, session.loop->state().dataset);
    result = session.loop->submit(answer);
  } catch (const json::parse_error& e) {
    return error_reply(422, std::string("malformed JSON: ") + e.what());
  } catch (const ValidationError& e) {
    return error_reply(422, e.what());
  }
  if (session.loop->stopped()) {
    session.phase = Phase::kStopped;
    persist(session);
  } else {
    session.phase = Phase::kRetraining;
    persist(session);
    launch_worker(self);
  }
  ordered_json j;
  j["iteration"] = result.iteration;
  j["batch_error_fraction"] = result.batch_error_fraction;
  j["changed"] = result.changed;
  j["diagnostics"] = result.diagnostics;
  j["phase"] = to_string(session.phase);
  if (result.stop.stop) j["stop_reason"] = result.stop.reason;
  return reply(200, std::move(j));
}

HttpResponse SessionService::post_stop(Session& session,
                                       const std::string& authorization) {
  std::lock_guard lock(session.mu);
  if (!authorized(session.token, authorization)) {
    return error_reply(401, "missing or wrong session token");
  }
  ordered_json j;
  if (session.phase == Phase::kStopped) {
    j["phase"] = to_string(session.phase);
    j["already_stopped"] = true;
    return reply(200, std::move(j));
  }
  if (session.phase == Phase::kAwaiting) {
    session.loop->stop("manual");
    session.phase = Phase::kStopped;
    persist(session);
    j["phase"] = to_string(session.phase);
    return reply(200, std::move(j));
  }
  session.stop_requested = true;
  j["phase"] = to_string(session.phase);
  j["stop_requested"] = true;
  return reply(202, std::move(j));
}

HttpResponse SessionService::get_status(Session& session) {
  std::lock_guard lock(session.mu);
  const auto& state = session.loop->state();
  ordered_json j;
  j["session_id"] = session.id;
  j["phase"] = to_string(session.phase);
  j["iteration"] = state.iteration;
  j["corrected_count"] = state.corrected_ids.size();
  j["total"] = state.dataset.instances.size();
  j["last_batch_error_fraction"] =
      state.last_batch_error_fraction
          ? ordered_json(*state.last_batch_error_fraction)
          : ordered_json(nullptr);
  j["progress"] = session.progress;
  if (session.phase == Phase::kStopped && state.stop_reason) {
    j["stop_reason"] = *state.stop_reason;
  }
  if (session.failure) j["failure"] = *session.failure;
  j["created_at"] = session.created_at;
  j["updated_at"] = session.updated_at;
  return reply(200, std::move(j));
}

HttpResponse SessionService::get_report(Session& session) {
  std::lock_guard lock(session.mu);
  if (session.phase != Phase::kStopped) {
    return error_reply(409, "session is still running");
  }
  const auto& state = session.loop->state();
  ordered_json j;
  j["session_id"] = session.id;
  j["mode"] = session.simulation ? "simulation" : "live";
  j["stop_reason"] = state.stop_reason.value_or("");
  ordered_json yield = ordered_json::array();
  ordered_json log = ordered_json::array();
  for (const auto& record : state.query_log) {
    ordered_json y;
    y["iteration"] = record.iteration;
    y["errors_found"] = record.changed.size();
    y["batch_size"] = record.queried.size();
    yield.push_back(std::move(y));
    ordered_json entry;
    entry["iteration"] = record.iteration;
    entry["queried"] = record.queried;
    entry["changed"] = record.changed;
    log.push_back(std::move(entry));
  }
  j["per_iteration_yield"] = std::move(yield);
  j["query_log"] = std::move(log);
  j["dataset_download"] = "/sessions/" + session.id + "/dataset";
  if (session.simulation) {
    const auto positives = static_cast<std::size_t>(std::count(
        session.initial_mask.begin(), session.initial_mask.end(), true));
    j["positives"] = positives;
    j["total"] = session.initial_mask.size();
    if (positives > 0 && (state.last_scores ||
                          state.queried_count() == state.dataset.instances.size())) {
      const auto ranking = session.loop->final_ranking();
      const auto ranked =
          mask_in_rank_order(ranking, session.original_ids, session.initial_mask);
      j["ap"] = average_precision(ranked);
      ordered_json curve = ordered_json::array();
      for (const auto& point : pr_curve(ranked)) {
        curve.push_back({point.recall, point.precision});
      }
      j["pr_curve"] = std::move(curve);
    }
  }
  return reply(200, std::move(j));
}

HttpResponse SessionService::get_dataset(Session& session) {
  std::lock_guard lock(session.mu);
  return {200, dataset_to_jsonl(session.loop->state().dataset),
          "application/x-ndjson"};
}

void SessionService::register_routes(httplib::Server& server) {
  const auto adapt = [this](const char* method) {
    return [this, method](const httplib::Request& req, httplib::Response& res) {
      const auto out = handle(method, req.path, req.body,
                              req.get_header_value("Authorization"));
      res.status = out.status;
      res.set_content(out.body, out.content_type);
    };
  };
  server.Get(R"(/.*)", adapt("GET"));
  server.Post(R"(/.*)", adapt("POST"));
}

}  // namespace cleanloop
