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

#ifndef CLEANLOOP_SERVICE_HPP_
#define CLEANLOOP_SERVICE_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "cleanloop/active_loop.hpp"

namespace httplib {
class Server;
}

namespace cleanloop {

struct ServiceOptions {
  // Checkpoints are written here when set; one file per session.
  std::optional<std::filesystem::path> checkpoint_dir;
  // Used when a create request omits dataset_ref.
  std::optional<std::filesystem::path> default_dataset;
  int default_k = 50;
  // Overrides the loop's scorer for every session (tests).
  Scorer scorer;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// JSON-over-HTTP front end for the active loop. Endpoints:
//   GET  /healthz
//   POST /sessions
//   GET  /sessions/{id}/batch
//   POST /sessions/{id}/corrections
//   POST /sessions/{id}/stop
//   GET  /sessions/{id}/status
//   GET  /sessions/{id}/report
//   GET  /sessions/{id}/dataset
// Requests on one session are serialized; scoring and retraining run on a
// background worker per session.
class SessionService {
 public:
  explicit SessionService(ServiceOptions options);
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  // Loads every checkpoint in the checkpoint dir. Throws ValidationError
  // naming the first file that cannot be restored.
  void restore_checkpoints();

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::string& body,
                      const std::string& authorization = {});

  void register_routes(httplib::Server& server);

  // Waits for background work and persists every session.
  void shutdown();

  std::size_t session_count() const;

 private:
  struct Session;

  HttpResponse create_session(const std::string& body);
  HttpResponse get_batch(Session& session);
  HttpResponse post_corrections(Session& session, const std::string& body,
                                const std::string& authorization);
  HttpResponse post_stop(Session& session, const std::string& authorization);
  HttpResponse get_status(Session& session);
  HttpResponse get_report(Session& session);
  HttpResponse get_dataset(Session& session);

  std::shared_ptr<Session> find(const std::string& id) const;
  void launch_worker(const std::shared_ptr<Session>& session);
  void persist(Session& session);  // caller holds session.mu

  ServiceOptions options_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace cleanloop

#endif  // CLEANLOOP_SERVICE_HPP_
