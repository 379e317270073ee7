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

#include "cleanloop/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "cleanloop/error.hpp"
#include "cleanloop/rng.hpp"
#include "json.hpp"

namespace cleanloop {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::kClassification ? "classification" : "sequence";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "classification") return TaskKind::kClassification;
  if (name == "sequence") return TaskKind::kSequence;
  throw ValidationError("unknown task_kind '" + std::string(name) + "'");
}

LabelSpace::LabelSpace(std::vector<std::string> labels)
    : labels_(std::move(labels)) {
  if (labels_.size() < 2) {
    throw ValidationError("label space needs at least 2 labels");
  }
  std::unordered_set<std::string> seen;
  for (const auto& label : labels_) {
    if (!seen.insert(label).second) {
      throw ValidationError("duplicate label '" + label + "' in label space");
    }
  }
}

const std::string& LabelSpace::label(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= labels_.size()) {
    throw ValidationError("label index " + std::to_string(index) +
                          " out of range");
  }
  return labels_[static_cast<std::size_t>(index)];
}

std::optional<int> LabelSpace::find(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return static_cast<int>(i);
  }
  return std::nullopt;
}

int LabelSpace::index_of(std::string_view label) const {
  if (auto index = find(label)) return *index;
  throw ValidationError("unknown label '" + std::string(label) + "'");
}

bool Dataset::has_gold() const {
  return !instances.empty() && instances.front().gold.has_value();
}

std::size_t Dataset::annotation_count() const {
  std::size_t total = 0;
  for (const auto& instance : instances) total += instance.unit_count();
  return total;
}

std::unordered_map<std::string, std::size_t> Dataset::index_by_id() const {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    index.emplace(instances[i].id, i);
  }
  return index;
}

void Dataset::validate() const {
  const bool gold = has_gold();
  std::unordered_set<std::string> ids;
  const auto check_labels = [&](const Instance& instance, const LabelSeq& seq) {
    for (const int label : seq) {
      if (label < 0 || static_cast<std::size_t>(label) >= label_space.size()) {
        throw ValidationError("instance '" + instance.id +
                              "': label index out of range");
      }
    }
  };
  for (const auto& instance : instances) {
    if (instance.id.empty()) throw ValidationError("instance with empty id");
    if (!ids.insert(instance.id).second) {
      throw ValidationError("duplicate instance id '" + instance.id + "'");
    }
    if (instance.observed.empty()) {
      throw ValidationError("instance '" + instance.id + "' has no labels");
    }
    if (task_kind == TaskKind::kClassification) {
      if (instance.observed.size() != 1 || !instance.tokens.empty()) {
        throw ValidationError("instance '" + instance.id +
                              "': classification instances carry one label");
      }
    } else if (instance.tokens.size() != instance.observed.size()) {
      throw ValidationError("instance '" + instance.id + "': " +
                            std::to_string(instance.tokens.size()) +
                            " tokens but " +
                            std::to_string(instance.observed.size()) +
                            " labels");
    }
    if (instance.features.size() != instance.observed.size()) {
      throw ValidationError("instance '" + instance.id +
                            "': feature/label shape mismatch");
    }
    for (const auto& features : instance.features) {
      if (features.empty()) {
        throw ValidationError("instance '" + instance.id +
                              "' has an empty feature vector");
      }
    }
    check_labels(instance, instance.observed);
    if (instance.gold.has_value() != gold) {
      throw ValidationError(
          "gold labels must be present on all instances or on none (instance '" +
          instance.id + "')");
    }
    if (instance.gold) {
      if (instance.gold->size() != instance.observed.size()) {
        throw ValidationError("instance '" + instance.id +
                              "': gold/observed shape mismatch");
      }
      check_labels(instance, *instance.gold);
      if (instance.corrected && *instance.gold != instance.observed) {
        throw ValidationError("instance '" + instance.id +
                              "' is marked corrected but disagrees with gold");
      }
    }
  }
}

Instance make_classification_instance(std::string id, std::string text,
                                      std::string_view label,
                                      const LabelSpace& labels,
                                      std::uint32_t feature_dim) {
  Instance instance;
  instance.id = std::move(id);
  instance.features.push_back(featurize_text(text, feature_dim));
  instance.text = std::move(text);
  instance.observed = {labels.index_of(label)};
  return instance;
}

Instance make_sequence_instance(std::string id, std::vector<std::string> tokens,
                                std::span<const std::string> token_labels,
                                const LabelSpace& labels,
                                std::uint32_t feature_dim) {
  if (tokens.size() != token_labels.size()) {
    throw ValidationError("instance '" + id + "': " +
                          std::to_string(tokens.size()) + " tokens but " +
                          std::to_string(token_labels.size()) + " labels");
  }
  Instance instance;
  instance.id = std::move(id);
  instance.features = featurize_tokens(tokens, feature_dim);
  instance.tokens = std::move(tokens);
  for (const auto& label : token_labels) {
    instance.observed.push_back(labels.index_of(label));
  }
  return instance;
}

namespace {

std::string require_string(const json& object, const char* key) {
  const auto it = object.find(key);
  if (it == object.end()) {
    throw ValidationError(std::string("missing key '") + key + "'");
  }
  if (!it->is_string()) {
    throw ValidationError(std::string("key '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

std::vector<std::string> require_string_array(const json& object,
                                              const char* key) {
  const auto it = object.find(key);
  if (it == object.end()) {
    throw ValidationError(std::string("missing key '") + key + "'");
  }
  if (!it->is_array()) {
    throw ValidationError(std::string("key '") + key + "' must be an array");
  }
  std::vector<std::string> out;
  for (const auto& item : *it) {
    if (!item.is_string()) {
      throw ValidationError(std::string("key '") + key +
                            "' must hold strings only");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

LabelSeq resolve(const LabelSpace& labels,
                 const std::vector<std::string>& names) {
  LabelSeq out;
  out.reserve(names.size());
  for (const auto& name : names) out.push_back(labels.index_of(name));
  return out;
}

Instance parse_instance(const json& line, TaskKind kind,
                        const LabelSpace& labels, std::uint32_t dim) {
  if (!line.is_object()) throw ValidationError("instance must be an object");
  std::string id = require_string(line, "id");
  Instance instance;
  if (kind == TaskKind::kClassification) {
    if (line.contains("tokens") || line.contains("labels")) {
      throw ValidationError("instance '" + id +
                            "': shape mismatch, sequence keys in a "
                            "classification dataset");
    }
    instance = make_classification_instance(
        id, require_string(line, "text"), require_string(line, "label"),
        labels, dim);
    if (line.contains("gold_label")) {
      instance.gold = LabelSeq{labels.index_of(require_string(line, "gold_label"))};
    }
  } else {
    if (line.contains("text") || line.contains("label")) {
      throw ValidationError("instance '" + id +
                            "': shape mismatch, classification keys in a "
                            "sequence dataset");
    }
    auto tokens = require_string_array(line, "tokens");
    const auto token_labels = require_string_array(line, "labels");
    if (tokens.empty()) {
      throw ValidationError("instance '" + id + "' has no tokens");
    }
    instance =
        make_sequence_instance(id, std::move(tokens), token_labels, labels, dim);
    if (line.contains("gold_labels")) {
      instance.gold = resolve(labels, require_string_array(line, "gold_labels"));
      if (instance.gold->size() != instance.observed.size()) {
        throw ValidationError("instance '" + id +
                              "': shape mismatch between labels and "
                              "gold_labels");
      }
    }
  }
  if (const auto it = line.find("corrected"); it != line.end()) {
    if (!it->is_boolean()) {
      throw ValidationError("key 'corrected' must be a boolean");
    }
    instance.corrected = it->get<bool>();
  }
  return instance;
}

}  // namespace

Dataset parse_dataset(std::istream& in) {
  Dataset dataset;
  std::string text;
  std::size_t line_no = 0;
  bool have_header = false;
  std::unordered_set<std::string> ids;
  while (std::getline(in, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    json line;
    try {
      line = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    try {
      if (!have_header) {
        if (!line.is_object()) throw ValidationError("header must be an object");
        dataset.task_kind = parse_task_kind(require_string(line, "task_kind"));
        dataset.label_space = LabelSpace(require_string_array(line, "labels"));
        if (const auto it = line.find("seed"); it != line.end()) {
          if (!it->is_number_integer()) {
            throw ValidationError("header 'seed' must be an integer");
          }
          dataset.seed = it->get<std::uint64_t>();
        }
        if (const auto it = line.find("feature_dim"); it != line.end()) {
          if (!it->is_number_unsigned()) {
            throw ValidationError("header 'feature_dim' must be an integer");
          }
          dataset.feature_dim = it->get<std::uint32_t>();
        }
        have_header = true;
        continue;
      }
      Instance instance = parse_instance(line, dataset.task_kind,
                                         dataset.label_space,
                                         dataset.feature_dim);
      if (!ids.insert(instance.id).second) {
        throw ValidationError("duplicate instance id '" + instance.id + "'");
      }
      dataset.instances.push_back(std::move(instance));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!have_header) throw ParseError(0, "missing header line");
  dataset.validate();
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset file " + path.string());
  return parse_dataset(in);
}

namespace {

ordered_json label_names(const LabelSpace& labels, const LabelSeq& seq) {
  ordered_json out = ordered_json::array();
  for (const int label : seq) out.push_back(labels.label(label));
  return out;
}

}  // namespace

void write_dataset(const Dataset& dataset, std::ostream& out) {
  ordered_json header;
  header["task_kind"] = to_string(dataset.task_kind);
  header["labels"] = dataset.label_space.labels();
  if (dataset.seed != 0) header["seed"] = dataset.seed;
  if (dataset.feature_dim != kDefaultFeatureDim) {
    header["feature_dim"] = dataset.feature_dim;
  }
  out << header.dump() << '\n';
  const auto& labels = dataset.label_space;
  for (const auto& instance : dataset.instances) {
    ordered_json line;
    line["id"] = instance.id;
    if (dataset.task_kind == TaskKind::kClassification) {
      line["text"] = instance.text;
      line["label"] = labels.label(instance.observed.front());
      if (instance.gold) line["gold_label"] = labels.label(instance.gold->front());
    } else {
      line["tokens"] = instance.tokens;
      line["labels"] = label_names(labels, instance.observed);
      if (instance.gold) line["gold_labels"] = label_names(labels, *instance.gold);
    }
    if (instance.corrected) line["corrected"] = true;
    out << line.dump() << '\n';
  }
}

std::string dataset_to_jsonl(const Dataset& dataset) {
  std::ostringstream out;
  write_dataset(dataset, out);
  return out.str();
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write dataset file " + path.string());
  write_dataset(dataset, out);
  if (!out) throw Error("write failed for " + path.string());
}

std::string file_content_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(buffer.str())));
  return "fnv1a64:" + std::string(hex);
}

Dataset perturb_labels(const Dataset& dataset, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0)) {
    throw ValidationError("perturbation rate must lie in (0, 1)");
  }
  if (dataset.has_gold()) {
    throw ValidationError("dataset already carries gold labels");
  }
  Dataset out = dataset;
  struct Position {
    std::size_t instance;
    std::size_t unit;
  };
  std::vector<Position> positions;
  positions.reserve(out.annotation_count());
  for (std::size_t i = 0; i < out.instances.size(); ++i) {
    auto& instance = out.instances[i];
    instance.gold = instance.observed;
    for (std::size_t u = 0; u < instance.unit_count(); ++u) {
      positions.push_back({i, u});
    }
  }
  const auto count = static_cast<std::size_t>(
      std::llround(rate * static_cast<double>(positions.size())));
  const auto label_count = out.label_space.size();
  Rng rng(mix_seed(seed, dataset.seed));
  // Partial Fisher-Yates: the first `count` slots become a uniform sample
  // without replacement.
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(
                           rng.uniform_below(positions.size() - i));
    std::swap(positions[i], positions[j]);
    auto& label = out.instances[positions[i].instance].observed[positions[i].unit];
    const auto draw = static_cast<int>(rng.uniform_below(label_count - 1));
    label = draw >= label ? draw + 1 : draw;
  }
  return out;
}

CorrectionResult apply_corrections(const Dataset& dataset,
                                   std::span<const Correction> corrections) {
  const auto index = dataset.index_by_id();
  CorrectionResult result;
  std::unordered_map<std::string, const Correction*> latest;
  for (const auto& correction : corrections) {
    const auto it = index.find(correction.instance_id);
    if (it == index.end()) {
      throw ValidationError("correction targets unknown instance '" +
                            correction.instance_id + "'");
    }
    const auto& instance = dataset.instances[it->second];
    if (correction.new_labels.size() != instance.unit_count()) {
      throw ValidationError("correction for '" + correction.instance_id +
                            "' has " +
                            std::to_string(correction.new_labels.size()) +
                            " labels, instance has " +
                            std::to_string(instance.unit_count()));
    }
    for (const int label : correction.new_labels) {
      if (label < 0 ||
          static_cast<std::size_t>(label) >= dataset.label_space.size()) {
        throw ValidationError("correction for '" + correction.instance_id +
                              "' uses an out-of-range label index");
      }
    }
    if (instance.gold && *instance.gold != correction.new_labels) {
      throw ValidationError("correction for '" + correction.instance_id +
                            "' disagrees with its gold labels");
    }
    auto [slot, inserted] = latest.try_emplace(correction.instance_id, &correction);
    if (!inserted) {
      if (slot->second->new_labels != correction.new_labels) {
        result.diagnostics.push_back("conflicting corrections for '" +
                                     correction.instance_id +
                                     "'; last write wins");
      }
      slot->second = &correction;
    }
  }

  result.dataset = dataset;
  for (const auto& correction : corrections) {
    if (latest.at(correction.instance_id) != &correction) continue;
    auto& instance = result.dataset.instances[index.at(correction.instance_id)];
    if (instance.corrected) {
      result.diagnostics.push_back("instance '" + correction.instance_id +
                                   "' was already corrected");
    }
    instance.observed = correction.new_labels;
    instance.corrected = true;
  }
  return result;
}

std::vector<bool> error_mask(const Dataset& dataset) {
  if (!dataset.has_gold()) {
    throw ValidationError("error mask requires gold labels");
  }
  std::vector<bool> mask;
  mask.reserve(dataset.instances.size());
  for (const auto& instance : dataset.instances) {
    mask.push_back(instance.observed != *instance.gold);
  }
  return mask;
}

}  // namespace cleanloop
