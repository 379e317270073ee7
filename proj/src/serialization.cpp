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

#include "cleanloop/serialization.hpp"

#include <fstream>

#include "cleanloop/error.hpp"

namespace cleanloop {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ValidationError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ValidationError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ValidationError("");
    } else {
      if (!it->is_string()) throw ValidationError("");
    }
    return it->get<T>();
  } catch (const std::exception&) {
    throw ValidationError(std::string("invalid value for '") + key + "'");
  }
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return field<T>(j, key, T{});
}

std::vector<std::string> string_list(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_array()) {
    throw ValidationError(std::string("'") + key + "' must be an array");
  }
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) {
      throw ValidationError(std::string("'") + key + "' must hold strings");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

template <typename T>
ordered_json nullable(const std::optional<T>& value) {
  return value ? ordered_json(*value) : ordered_json(nullptr);
}

}  // namespace

ordered_json to_json(const TrainerConfig& config) {
  ordered_json j;
  j["epochs"] = config.epochs;
  j["learning_rate"] = config.learning_rate;
  j["batch_size"] = config.batch_size;
  j["l2"] = config.l2;
  j["seed"] = config.seed;
  return j;
}

ordered_json to_json(const EnsembleConfig& config) {
  ordered_json j;
  j["use_train_ensembling"] = config.use_train_ensembling;
  j["use_test_ensembling"] = config.use_test_ensembling;
  j["base_score"] = to_string(config.base_score);
  return j;
}

ordered_json to_json(const StopConfig& config) {
  ordered_json j;
  j["max_iterations"] = config.max_iterations;
  j["budget"] = nullable(config.budget);
  j["error_fraction_threshold"] = nullable(config.error_fraction_threshold);
  return j;
}

ordered_json to_json(const LoopConfig& config) {
  ordered_json j;
  j["folds"] = config.folds;
  j["k"] = config.k;
  j["trainer"] = to_json(config.trainer);
  j["ensemble"] = to_json(config.ensemble);
  j["stop"] = to_json(config.stop);
  return j;
}

TrainerConfig trainer_config_from_json(const json& j) {
  TrainerConfig c;
  if (j.is_null()) return c;
  c.epochs = field(j, "epochs", c.epochs);
  c.learning_rate = field(j, "learning_rate", c.learning_rate);
  c.batch_size = field(j, "batch_size", c.batch_size);
  c.l2 = field(j, "l2", c.l2);
  c.seed = field(j, "seed", c.seed);
  c.validate();
  return c;
}

EnsembleConfig ensemble_config_from_json(const json& j) {
  EnsembleConfig c;
  if (j.is_null()) return c;
  c.use_train_ensembling = field(j, "use_train_ensembling", c.use_train_ensembling);
  c.use_test_ensembling = field(j, "use_test_ensembling", c.use_test_ensembling);
  c.base_score = parse_score_method(
      field<std::string>(j, "base_score", std::string(to_string(c.base_score))));
  c.validate();
  return c;
}

StopConfig stop_config_from_json(const json& j) {
  StopConfig c;
  if (j.is_null()) return c;
  c.max_iterations = field(j, "max_iterations", c.max_iterations);
  if (const auto budget = optional_field<std::int64_t>(j, "budget")) {
    if (*budget < 1) throw ValidationError("budget must be >= 1");
    c.budget = static_cast<std::size_t>(*budget);
  }
  c.error_fraction_threshold =
      optional_field<double>(j, "error_fraction_threshold");
  c.validate();
  return c;
}

LoopConfig loop_config_from_json(const json& j) {
  LoopConfig c;
  if (j.is_null()) return c;
  c.folds = field(j, "folds", c.folds);
  c.k = field(j, "k", c.k);
  c.trainer = trainer_config_from_json(j.value("trainer", json()));
  c.ensemble = ensemble_config_from_json(j.value("ensemble", json()));
  c.stop = stop_config_from_json(j.value("stop", json()));
  c.validate();
  return c;
}

ordered_json to_json(const ScoreVector& scores) {
  ordered_json j;
  j["method"] = to_string(scores.method);
  j["ids"] = scores.ids;
  j["scores"] = scores.scores;
  if (!scores.s_train.empty()) {
    j["s_train"] = scores.s_train;
    j["s_test"] = scores.s_test;
  }
  return j;
}

ScoreVector score_vector_from_json(const json& j) {
  ScoreVector s;
  try {
    s.method = parse_score_method(j.at("method").get<std::string>());
    s.ids = j.at("ids").get<std::vector<std::string>>();
    s.scores = j.at("scores").get<std::vector<double>>();
    if (j.contains("s_train")) {
      s.s_train = j.at("s_train").get<std::vector<double>>();
      s.s_test = j.at("s_test").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid score vector: ") + e.what());
  }
  if (s.ids.size() != s.scores.size() ||
      (!s.s_train.empty() && (s.s_train.size() != s.ids.size() ||
                              s.s_test.size() != s.ids.size()))) {
    throw ValidationError("score vector columns have different lengths");
  }
  return s;
}

ordered_json checkpoint_to_json(const SessionState& state,
                                const CheckpointRef& ref) {
  ordered_json j;
  j["v"] = 1;
  j["dataset_path"] = ref.dataset_path.string();
  j["dataset_hash"] = ref.dataset_hash;
  j["config"] = to_json(state.config);
  j["iteration"] = state.iteration;
  ordered_json log = ordered_json::array();
  for (const auto& record : state.query_log) {
    ordered_json entry;
    entry["iteration"] = record.iteration;
    entry["queried"] = record.queried;
    entry["changed"] = record.changed;
    log.push_back(std::move(entry));
  }
  j["query_log"] = std::move(log);
  const auto index = state.dataset.index_by_id();
  const auto& labels = state.dataset.label_space;
  ordered_json corrected = ordered_json::object();
  for (const auto& id : state.corrected_ids) {
    ordered_json names = ordered_json::array();
    for (const int l : state.dataset.instances[index.at(id)].observed) {
      names.push_back(labels.label(l));
    }
    corrected[id] = std::move(names);
  }
  j["corrected"] = std::move(corrected);
  j["last_scores"] =
      state.last_scores ? to_json(*state.last_scores) : ordered_json(nullptr);
  j["outstanding"] = state.outstanding;
  j["last_batch_error_fraction"] = nullable(state.last_batch_error_fraction);
  j["stop_reason"] = nullable(state.stop_reason);
  return j;
}

SessionState checkpoint_from_json(const json& j) {
  if (!j.is_object() || j.value("v", 0) != 1) {
    throw ValidationError("unsupported checkpoint version");
  }
  const auto path = field<std::string>(j, "dataset_path", "");
  const auto hash = field<std::string>(j, "dataset_hash", "");
  if (path.empty()) throw ValidationError("checkpoint lacks a dataset path");
  if (file_content_hash(path) != hash) {
    throw ValidationError("dataset " + path +
                          " changed since the checkpoint was written");
  }
  SessionState state;
  state.dataset = load_dataset(path);
  state.config = loop_config_from_json(j.at("config"));
  state.iteration = field(j, "iteration", 0);
  if (const auto it = j.find("query_log"); it != j.end()) {
    for (const auto& entry : *it) {
      state.query_log.push_back({field(entry, "iteration", 0),
                                 string_list(entry, "queried"),
                                 string_list(entry, "changed")});
    }
  }
  const auto index = state.dataset.index_by_id();
  const auto& corrected = j.at("corrected");
  if (!corrected.is_object()) {
    throw ValidationError("checkpoint 'corrected' must be an object");
  }
  for (const auto& [id, names] : corrected.items()) {
    const auto it = index.find(id);
    if (it == index.end()) {
      throw ValidationError("checkpoint names unknown instance '" + id + "'");
    }
    auto& instance = state.dataset.instances[it->second];
    LabelSeq labels;
    for (const auto& name : names) {
      labels.push_back(state.dataset.label_space.index_of(name.get<std::string>()));
    }
    if (labels.size() != instance.unit_count()) {
      throw ValidationError("checkpoint labels for '" + id +
                            "' have the wrong shape");
    }
    instance.observed = std::move(labels);
    instance.corrected = true;
  }
  for (const auto& instance : state.dataset.instances) {
    if (instance.corrected) state.corrected_ids.insert(instance.id);
  }
  state.dataset.validate();
  if (const auto it = j.find("last_scores"); it != j.end() && !it->is_null()) {
    state.last_scores = score_vector_from_json(*it);
  }
  state.outstanding = string_list(j, "outstanding");
  for (const auto& id : state.outstanding) {
    if (!index.contains(id) || state.corrected_ids.contains(id)) {
      throw ValidationError("checkpoint batch holds invalid id '" + id + "'");
    }
  }
  state.last_batch_error_fraction =
      optional_field<double>(j, "last_batch_error_fraction");
  state.stop_reason = optional_field<std::string>(j, "stop_reason");
  return state;
}

void write_json_file(const std::filesystem::path& path, const ordered_json& j) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

}  // namespace cleanloop
