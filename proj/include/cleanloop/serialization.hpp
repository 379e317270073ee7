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

#ifndef CLEANLOOP_SERIALIZATION_HPP_
#define CLEANLOOP_SERIALIZATION_HPP_

#include <filesystem>
#include <string>

#include "cleanloop/active_loop.hpp"
#include "json.hpp"

namespace cleanloop {

nlohmann::ordered_json to_json(const TrainerConfig& config);
nlohmann::ordered_json to_json(const EnsembleConfig& config);
nlohmann::ordered_json to_json(const StopConfig& config);
nlohmann::ordered_json to_json(const LoopConfig& config);

// Missing keys keep their defaults; wrong types or out-of-range values throw
// ValidationError.
TrainerConfig trainer_config_from_json(const nlohmann::json& j);
EnsembleConfig ensemble_config_from_json(const nlohmann::json& j);
StopConfig stop_config_from_json(const nlohmann::json& j);
LoopConfig loop_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const ScoreVector& scores);
ScoreVector score_vector_from_json(const nlohmann::json& j);

// Session checkpoint: the state minus feature vectors. The dataset is
// referenced by path and content hash; corrected labels are stored per id.
struct CheckpointRef {
  std::filesystem::path dataset_path;
  std::string dataset_hash;
};

nlohmann::ordered_json checkpoint_to_json(const SessionState& state,
                                          const CheckpointRef& ref);
// Reloads the dataset, verifies its hash and replays the stored labels.
SessionState checkpoint_from_json(const nlohmann::json& j);

// Atomic write (temp file + rename).
void write_json_file(const std::filesystem::path& path,
                     const nlohmann::ordered_json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace cleanloop

#endif  // CLEANLOOP_SERIALIZATION_HPP_
