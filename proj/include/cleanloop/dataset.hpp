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

#ifndef CLEANLOOP_DATASET_HPP_
#define CLEANLOOP_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cleanloop/features.hpp"

namespace cleanloop {

enum class TaskKind { kClassification, kSequence };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

// Ordered label alphabet. A label's index is its position.
class LabelSpace {
 public:
  LabelSpace() = default;
  // Throws ValidationError on fewer than two labels or duplicates.
  explicit LabelSpace(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  const std::string& label(int index) const;
  const std::vector<std::string>& labels() const { return labels_; }

  std::optional<int> find(std::string_view label) const;
  // Throws ValidationError naming the label when it is not in the space.
  int index_of(std::string_view label) const;

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  std::vector<std::string> labels_;
};

// One label index per annotation unit: a single entry for classification,
// one per token for sequence labeling.
using LabelSeq = std::vector<int>;

struct Instance {
  std::string id;
  std::string text;                 // classification only
  std::vector<std::string> tokens;  // sequence only
  std::vector<SparseVector> features;  // one per annotation unit
  LabelSeq observed;
  std::optional<LabelSeq> gold;
  bool corrected = false;

  std::size_t unit_count() const { return observed.size(); }

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Dataset {
  TaskKind task_kind = TaskKind::kClassification;
  LabelSpace label_space;
  std::vector<Instance> instances;
  std::uint64_t seed = 0;
  std::uint32_t feature_dim = kDefaultFeatureDim;

  bool has_gold() const;
  std::size_t annotation_count() const;
  std::unordered_map<std::string, std::size_t> index_by_id() const;

  // Throws ValidationError describing the first violated invariant.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct Correction {
  std::string instance_id;
  LabelSeq new_labels;
};

struct CorrectionResult {
  Dataset dataset;
  // Non-fatal findings: duplicate ids in the batch, re-corrections.
  std::vector<std::string> diagnostics;
};

// Builds an instance and computes its features. Label strings are resolved
// against `labels`.
Instance make_classification_instance(std::string id, std::string text,
                                      std::string_view label,
                                      const LabelSpace& labels,
                                      std::uint32_t feature_dim);
Instance make_sequence_instance(std::string id, std::vector<std::string> tokens,
                                std::span<const std::string> token_labels,
                                const LabelSpace& labels,
                                std::uint32_t feature_dim);

// JSONL dataset file. Line 1 is a header
//   {"task_kind": ..., "labels": [...], "seed": n?, "feature_dim": n?}
// followed by one instance object per line. Throws ParseError (with the
// 1-based line number) or ValidationError.
Dataset parse_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, std::ostream& out);
std::string dataset_to_jsonl(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Hex FNV-1a digest of a file's bytes, used to pin dataset identity in
// manifests and checkpoints.
std::string file_content_hash(const std::filesystem::path& path);

// Snapshots observed labels as gold, then resamples exactly
// round(rate * annotation_count) distinct annotation positions to a label
// different from the current one.
Dataset perturb_labels(const Dataset& dataset, double rate, std::uint64_t seed);

// Validates the whole batch before touching anything. When gold labels are
// present, a correction must agree with them.
CorrectionResult apply_corrections(const Dataset& dataset,
                                   std::span<const Correction> corrections);

// Per instance: true when any annotation differs from gold.
std::vector<bool> error_mask(const Dataset& dataset);

}  // namespace cleanloop

#endif  // CLEANLOOP_DATASET_HPP_
