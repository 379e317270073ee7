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

#include "cleanloop/dynamics_io.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "cleanloop/error.hpp"
#include "json.hpp"

namespace cleanloop {

using nlohmann::json;
using nlohmann::ordered_json;

void write_dynamics(const DynamicsTensor& tensor, const Dataset& dataset,
                    std::ostream& out) {
  tensor.validate();
  const bool sequence = dataset.task_kind == TaskKind::kSequence;
  const auto& layout = tensor.layout;
  for (int fold = 0; fold < tensor.fold_count(); ++fold) {
    for (int epoch = 0; epoch < tensor.epochs; ++epoch) {
      for (std::size_t i = 0; i < layout.instance_count(); ++i) {
        const bool test = tensor.assignment.fold_of[i] == fold;
        for (auto u = layout.offsets[i]; u < layout.offsets[i + 1]; ++u) {
          const auto& r = tensor.at(fold, epoch, u);
          ordered_json line;
          line["fold"] = fold;
          line["epoch"] = epoch + 1;
          line["partition"] = test ? "test" : "train";
          line["id"] = layout.instance_ids[i];
          if (sequence) line["token"] = u - layout.offsets[i];
          line["assigned_prob"] = r.assigned_prob;
          line["max_other_prob"] = r.max_other_prob;
          line["assigned_logit"] = r.assigned_logit;
          line["max_other_logit"] = r.max_other_logit;
          line["loss"] = r.loss;
          out << line.dump() << '\n';
        }
      }
    }
  }
}

namespace {

struct RawLine {
  int fold;
  int epoch;
  bool test;
  std::size_t instance;
  std::size_t unit;
  UnitRecord record;
};

double number(const json& line, const char* key) {
  const auto& v = line.at(key);
  if (!v.is_number()) {
    throw ValidationError(std::string("key '") + key + "' must be a number");
  }
  return v.get<double>();
}

}  // namespace

DynamicsTensor read_dynamics(std::istream& in, const Dataset& dataset) {
  DynamicsTensor tensor;
  tensor.layout = UnitLayout::of(dataset);
  const auto& layout = tensor.layout;
  const auto index = dataset.index_by_id();
  const bool sequence = dataset.task_kind == TaskKind::kSequence;

  std::vector<RawLine> lines;
  std::string text;
  std::size_t line_no = 0;
  int folds = 0;
  int epochs = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json line = json::parse(text);
      RawLine raw{};
      raw.fold = line.at("fold").get<int>();
      raw.epoch = line.at("epoch").get<int>();
      const auto partition = line.at("partition").get<std::string>();
      if (partition != "train" && partition != "test") {
        throw ValidationError("partition must be 'train' or 'test'");
      }
      raw.test = partition == "test";
      const auto id = line.at("id").get<std::string>();
      const auto it = index.find(id);
      if (it == index.end()) {
        throw ValidationError("unknown instance id '" + id + "'");
      }
      raw.instance = it->second;
      const std::size_t token =
          sequence ? line.at("token").get<std::size_t>() : 0;
      if (layout.offsets[raw.instance] + token >=
          layout.offsets[raw.instance + 1]) {
        throw ValidationError("token index out of range for '" + id + "'");
      }
      raw.unit = layout.offsets[raw.instance] + token;
      if (raw.fold < 0 || raw.epoch < 1) {
        throw ValidationError("fold must be >= 0 and epoch >= 1");
      }
      raw.record = {number(line, "assigned_prob"), number(line, "max_other_prob"),
                    number(line, "assigned_logit"),
                    number(line, "max_other_logit"), number(line, "loss")};
      folds = std::max(folds, raw.fold + 1);
      epochs = std::max(epochs, raw.epoch);
      lines.push_back(raw);
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  tensor.epochs = epochs;
  tensor.assignment.fold_count = folds;
  tensor.assignment.fold_of.assign(layout.instance_count(), -1);
  for (const auto& raw : lines) {
    if (!raw.test) continue;
    auto& slot = tensor.assignment.fold_of[raw.instance];
    if (slot != -1 && slot != raw.fold) {
      throw ValidationError("instance '" + layout.instance_ids[raw.instance] +
                            "' appears in the test partition of two folds");
    }
    slot = raw.fold;
  }
  for (std::size_t i = 0; i < layout.instance_count(); ++i) {
    if (tensor.assignment.fold_of[i] == -1) {
      throw ValidationError("instance '" + layout.instance_ids[i] +
                            "' is never in a test partition");
    }
  }

  const auto units = layout.unit_count();
  tensor.records.assign(static_cast<std::size_t>(folds) * epochs * units, {});
  std::vector<bool> seen(tensor.records.size(), false);
  for (const auto& raw : lines) {
    if (raw.test != (tensor.assignment.fold_of[raw.instance] == raw.fold)) {
      throw ValidationError("instance '" + layout.instance_ids[raw.instance] +
                            "' has inconsistent partitions in fold " +
                            std::to_string(raw.fold));
    }
    const auto slot =
        (static_cast<std::size_t>(raw.fold) * epochs + (raw.epoch - 1)) * units +
        raw.unit;
    if (seen[slot]) {
      throw ValidationError("duplicate dynamics record for '" +
                            layout.instance_ids[raw.instance] + "'");
    }
    seen[slot] = true;
    tensor.records[slot] = raw.record;
  }
  if (lines.size() != tensor.records.size()) {
    throw ValidationError("dynamics file is incomplete: " +
                          std::to_string(lines.size()) + " of " +
                          std::to_string(tensor.records.size()) + " records");
  }

  tensor.test_loss.assign(static_cast<std::size_t>(folds),
                          std::vector<double>(static_cast<std::size_t>(epochs)));
  for (int fold = 0; fold < folds; ++fold) {
    for (int e = 0; e < epochs; ++e) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t u = 0; u < units; ++u) {
        if (tensor.test_fold_of_unit(u) != fold) continue;
        sum += tensor.at(fold, e, u).loss;
        ++count;
      }
      tensor.test_loss[fold][e] = count == 0 ? 0.0 : sum / count;
    }
  }
  tensor.validate();
  return tensor;
}

}  // namespace cleanloop
