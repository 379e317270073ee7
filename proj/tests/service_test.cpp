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

#include <chrono>
#include <fstream>
#include <set>
#include <thread>

#include "cleanloop/error.hpp"
#include "cleanloop/serialization.hpp"
#include "cleanloop/version.hpp"
#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "test_support.hpp"

namespace cleanloop {
namespace {

using nlohmann::json;
using testing::TempDir;

std::string create_body(const std::filesystem::path& dataset, int k,
                        const json& extra = json::object()) {
  json body{{"v", 1},
            {"dataset_ref", dataset.string()},
            {"k", k},
            {"folds", 3},
            {"trainer", {{"epochs", 2}, {"learning_rate", 0.3}}}};
  for (const auto& [key, value] : extra.items()) body[key] = value;
  return body.dump();
}

json status_of(SessionService& service, const std::string& id) {
  return json::parse(service.handle("GET", "/sessions/" + id + "/status", "").body);
}

// Polls until the session leaves the scoring/retraining phases.
json wait_ready(SessionService& service, const std::string& id) {
  for (int i = 0; i < 2000; ++i) {
    const auto s = status_of(service, id);
    if (s["phase"] == "awaiting_annotations" || s["phase"] == "stopped") return s;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  FAIL("session never became ready");
  return {};
}

json confirm_all(const json& batch) {
  json answers = json::array();
  for (const auto& item : batch["items"]) {
    answers.push_back({{"id", item["id"]}, {"confirm", true}});
  }
  return {{"v", 1}, {"answers", answers}};
}

struct Fixture {
  TempDir dir;
  std::filesystem::path live;   // no gold labels
  std::filesystem::path noisy;  // gold labels embedded
  Fixture() {
    live = dir / "live.jsonl";
    noisy = dir / "noisy.jsonl";
    save_dataset(testing::two_class_dataset(60), live);
    save_dataset(perturb_labels(testing::two_class_dataset(60), 0.1, 3), noisy);
  }
};

TEST_CASE("health endpoint reports the version") {
  SessionService service({});
  const auto r = service.handle("GET", "/healthz", "");
  CHECK(r.status == 200);
  const auto j = json::parse(r.body);
  CHECK(j["v"] == 1);
  CHECK(j["version"] == std::string(kVersion));
}

TEST_CASE("session creation errors") {
  Fixture fx;
  SessionService service({});
  CHECK(service.handle("POST", "/sessions", "{bad").status == 400);
  CHECK(service.handle("POST", "/sessions", create_body(fx.live, 0)).status == 400);
  CHECK(service.handle("POST", "/sessions", create_body(fx.live, 5, {{"v", 2}})).status ==
        400);
  CHECK(service.handle("POST", "/sessions", create_body(fx.live, 5, {{"folds", 61}}))
            .status == 400);
  CHECK(service.handle("POST", "/sessions", create_body(fx.dir / "nope.jsonl", 5))
            .status == 404);
  CHECK(service.handle("POST", "/sessions", R"({"v":1})").status == 400);
  CHECK(service.handle("GET", "/sessions/unknown/status", "").status == 404);
  CHECK(service.handle("GET", "/nowhere", "").status == 404);
  CHECK(service.session_count() == 0);
}

TEST_CASE("batch, corrections, stop and report in process") {
  Fixture fx;
  SessionService service({});
  const auto created = service.handle("POST", "/sessions", create_body(fx.live, 8));
  REQUIRE(created.status == 202);
  const std::string id = json::parse(created.body)["id"];
  const std::string base = "/sessions/" + id;

  wait_ready(service, id);
  const auto batch = json::parse(service.handle("GET", base + "/batch", "").body);
  REQUIRE(batch["items"].size() == 8);
  CHECK(batch["items"][0]["rank"] == 1);
  CHECK(batch["items"][0].contains("text"));

  // Malformed, partial and unknown answers are rejected without effect.
  CHECK(service.handle("POST", base + "/corrections", "{x").status == 422);
  json partial = confirm_all(batch);
  partial["answers"].erase(partial["answers"].size() - 1);
  CHECK(service.handle("POST", base + "/corrections", partial.dump()).status == 422);
  json unknown = confirm_all(batch);
  unknown["answers"][0] = {{"id", "ghost"}, {"confirm", true}};
  CHECK(service.handle("POST", base + "/corrections", unknown.dump()).status == 422);
  json bad_label = confirm_all(batch);
  bad_label["answers"][0] = {{"id", batch["items"][0]["id"]}, {"label", "maybe"}};
  CHECK(service.handle("POST", base + "/corrections", bad_label.dump()).status == 422);
  CHECK(status_of(service, id)["iteration"] == 0);

  json answers = confirm_all(batch);
  const std::string flipped = batch["items"][1]["label"] == "pos" ? "neg" : "pos";
  answers["answers"][1] = {{"id", batch["items"][1]["id"]}, {"label", flipped}};
  const auto posted = service.handle("POST", base + "/corrections", answers.dump());
  REQUIRE(posted.status == 200);
  CHECK(json::parse(posted.body)["batch_error_fraction"] == 1.0 / 8.0);
  // A second post for the same batch is out of phase or refers to a new batch.
  const auto again = service.handle("POST", base + "/corrections", answers.dump());
  CHECK((again.status == 409 || again.status == 422));

  const auto s = wait_ready(service, id);
  CHECK(s["iteration"] == 1);
  CHECK(s["corrected_count"] == 8);
  CHECK(service.handle("GET", base + "/report", "").status == 409);

  const auto stop = service.handle("POST", base + "/stop", "");
  CHECK(stop.status == 200);
  CHECK(service.handle("POST", base + "/stop", "").status == 200);
  CHECK(service.handle("GET", base + "/batch", "").status == 410);
  const auto report = json::parse(service.handle("GET", base + "/report", "").body);
  CHECK(report["mode"] == "live");
  CHECK(report["stop_reason"] == "manual");
  CHECK(report["per_iteration_yield"].size() == 1);
  const auto download = service.handle("GET", base + "/dataset", "");
  CHECK(download.status == 200);
  CHECK(download.content_type == "application/x-ndjson");
  CHECK(download.body.find("\"corrected\":true") != std::string::npos);
}

TEST_CASE("bearer tokens guard mutations") {
  Fixture fx;
  SessionService service({});
  const auto created = service.handle(
      "POST", "/sessions", create_body(fx.live, 4, {{"token", "s3cret"}}));
  const std::string id = json::parse(created.body)["id"];
  const auto batch_status = wait_ready(service, id);
  CHECK(batch_status["phase"] == "awaiting_annotations");
  const auto batch =
      json::parse(service.handle("GET", "/sessions/" + id + "/batch", "").body);
  const auto body = confirm_all(batch).dump();
  CHECK(service.handle("POST", "/sessions/" + id + "/corrections", body).status == 401);
  CHECK(service.handle("POST", "/sessions/" + id + "/corrections", body,
                       "Bearer wrong")
            .status == 401);
  CHECK(service.handle("POST", "/sessions/" + id + "/stop", "").status == 401);
  CHECK(service.handle("POST", "/sessions/" + id + "/corrections", body,
                       "Bearer s3cret")
            .status == 200);
}

TEST_CASE("simulation sessions report average precision") {
  Fixture fx;
  SessionService service({});
  const auto created = service.handle(
      "POST", "/sessions",
      create_body(fx.noisy, 20, {{"stop_config", {{"max_iterations", 2}}}}));
  const std::string id = json::parse(created.body)["id"];
  const Dataset gold_source = load_dataset(fx.noisy);
  const auto index = gold_source.index_by_id();
  for (int it = 0; it < 2; ++it) {
    wait_ready(service, id);
    const auto batch =
        json::parse(service.handle("GET", "/sessions/" + id + "/batch", "").body);
    json answers = json::array();
    for (const auto& item : batch["items"]) {
      const auto& inst = gold_source.instances[index.at(item["id"].get<std::string>())];
      answers.push_back({{"id", item["id"]},
                         {"label", gold_source.label_space.label((*inst.gold)[0])}});
    }
    CHECK(service
              .handle("POST", "/sessions/" + id + "/corrections",
                      json{{"v", 1}, {"answers", answers}}.dump())
              .status == 200);
  }
  const auto s = wait_ready(service, id);
  CHECK(s["phase"] == "stopped");
  CHECK(s["stop_reason"] == "max_iterations");
  const auto report =
      json::parse(service.handle("GET", "/sessions/" + id + "/report", "").body);
  CHECK(report["mode"] == "simulation");
  CHECK(report["positives"] == 6);
  CHECK(report["ap"].get<double>() > 0.0);
  CHECK(report["pr_curve"].size() == 60);
}

TEST_CASE("wrong corrections in simulation mode are rejected") {
  Fixture fx;
  SessionService service({});
  const auto created =
      service.handle("POST", "/sessions", create_body(fx.noisy, 60));
  const std::string id = json::parse(created.body)["id"];
  wait_ready(service, id);
  const auto batch =
      json::parse(service.handle("GET", "/sessions/" + id + "/batch", "").body);
  // Confirming everything also confirms the six known errors.
  CHECK(service.handle("POST", "/sessions/" + id + "/corrections",
                       confirm_all(batch).dump())
            .status == 422);
}

TEST_CASE("stop during training takes effect when scoring finishes") {
  Fixture fx;
  SessionService service({});
  const auto created = service.handle("POST", "/sessions", create_body(fx.live, 5));
  const std::string id = json::parse(created.body)["id"];
  const auto stop = service.handle("POST", "/sessions/" + id + "/stop", "");
  CHECK((stop.status == 200 || stop.status == 202));
  const auto s = wait_ready(service, id);
  CHECK(s["phase"] == "stopped");
  CHECK(s["stop_reason"] == "manual");
}

TEST_CASE("checkpoints survive a restart") {
  Fixture fx;
  const auto ck = fx.dir / "checkpoints";
  std::string id;
  json first_batch;
  {
    ServiceOptions options;
    options.checkpoint_dir = ck;
    SessionService service(options);
    const auto created =
        service.handle("POST", "/sessions", create_body(fx.live, 6));
    id = json::parse(created.body)["id"];
    wait_ready(service, id);
    first_batch =
        json::parse(service.handle("GET", "/sessions/" + id + "/batch", "").body);
    CHECK(service
              .handle("POST", "/sessions/" + id + "/corrections",
                      confirm_all(first_batch).dump())
              .status == 200);
    wait_ready(service, id);
    service.shutdown();
  }
  ServiceOptions options;
  options.checkpoint_dir = ck;
  SessionService restored(options);
  restored.restore_checkpoints();
  CHECK(restored.session_count() == 1);
  const auto s = wait_ready(restored, id);
  CHECK(s["iteration"] == 1);
  CHECK(s["corrected_count"] == 6);
  const auto batch =
      json::parse(restored.handle("GET", "/sessions/" + id + "/batch", "").body);
  std::set<std::string> first;
  for (const auto& item : first_batch["items"]) first.insert(item["id"].get<std::string>());
  for (const auto& item : batch["items"]) CHECK_FALSE(first.contains(item["id"].get<std::string>()));
}

TEST_CASE("corrupt checkpoints name the file") {
  TempDir dir;
  std::ofstream(dir / "session-bad.json") << "{\"v\":1,";
  ServiceOptions options;
  options.checkpoint_dir = dir.path();
  SessionService service(options);
  try {
    service.restore_checkpoints();
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("session-bad.json") != std::string::npos);
  }
}

// Scripted client over real HTTP; the final dataset must equal an
// in-process replay of the same answers.
TEST_CASE("http round trip matches an in-process replay") {
  Fixture fx;
  SessionService service({});
  httplib::Server server;
  service.register_routes(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  const int k = 10;
  auto created = client.Post("/sessions", create_body(fx.live, k), "application/json");
  REQUIRE(created);
  REQUIRE(created->status == 202);
  const std::string id = json::parse(created->body)["id"];
  const std::string base = "/sessions/" + id;
  const auto poll = [&] {
    for (int i = 0; i < 2000; ++i) {
      const auto s = json::parse(client.Get(base + "/status")->body);
      if (s["phase"] != "scoring" && s["phase"] != "retraining") return s;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return json();
  };

  std::vector<AnnotatorAnswer> script;
  std::vector<std::set<std::string>> batches;
  for (int it = 0; it < 2; ++it) {
    poll();
    const auto batch = json::parse(client.Get(base + "/batch")->body);
    REQUIRE(batch["items"].size() == static_cast<std::size_t>(k));
    json answers = json::array();
    AnnotatorAnswer recorded;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < batch["items"].size(); ++i) {
      const auto& item = batch["items"][i];
      ids.insert(item["id"].get<std::string>());
      if (i < 3) {
        const std::string flipped = item["label"] == "pos" ? "neg" : "pos";
        answers.push_back({{"id", item["id"]}, {"label", flipped}});
        recorded.push_back({item["id"].get<std::string>(), LabelSeq{flipped == "pos" ? 1 : 0}});
      } else {
        answers.push_back({{"id", item["id"]}, {"confirm", true}});
        recorded.push_back({item["id"].get<std::string>(), std::nullopt});
      }
    }
    const auto posted = client.Post(base + "/corrections",
                                    json{{"v", 1}, {"answers", answers}}.dump(),
                                    "application/json");
    REQUIRE(posted->status == 200);
    if (it == 0) {
      const auto s = poll();
      CHECK(s["iteration"] == 1);
      CHECK(s["last_batch_error_fraction"] == 3.0 / k);
    }
    script.push_back(recorded);
    batches.push_back(ids);
  }
  for (const auto& id_in_first : batches[0]) CHECK_FALSE(batches[1].contains(id_in_first));

  poll();
  CHECK(client.Post(base + "/stop", "", "application/json")->status == 200);
  const auto report = json::parse(client.Get(base + "/report")->body);
  CHECK(report["per_iteration_yield"].size() == 2);
  CHECK(report["stop_reason"] == "manual");
  const std::string api_dataset = client.Get(base + "/dataset")->body;

  server.stop();
  listener.join();

  LoopConfig config;
  config.folds = 3;
  config.k = k;
  config.trainer.epochs = 2;
  config.trainer.learning_rate = 0.3;
  config.stop.max_iterations = 2;
  std::size_t call = 0;
  const auto replay = run_loop(
      load_dataset(fx.live), config,
      [&](const Dataset&, std::span<const std::string>) { return script.at(call++); });
  CHECK(dataset_to_jsonl(replay.state.dataset) == api_dataset);
}

}  // namespace
}  // namespace cleanloop
