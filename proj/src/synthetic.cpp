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

#include "cleanloop/synthetic.hpp"

#include <cstdio>
#include <string>
#include <vector>

#include "cleanloop/error.hpp"
#include "cleanloop/rng.hpp"

namespace cleanloop {

namespace {

std::string instance_id(char prefix, std::size_t i, std::size_t total) {
  const int width = static_cast<int>(std::to_string(total).size());
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%0*zu", prefix, width, i);
  return buf;
}

}  // namespace

Dataset make_cluster_classification(const ClusterSpec& spec) {
  if (spec.classes < 2 || spec.instances < 2 || spec.class_vocab < 1 ||
      spec.class_words < 1 || spec.shared_words < 0 ||
      (spec.shared_words > 0 && spec.shared_vocab < 1)) {
    throw ValidationError("invalid cluster spec");
  }
  Dataset dataset;
  dataset.task_kind = TaskKind::kClassification;
  dataset.seed = spec.seed;
  dataset.feature_dim = spec.feature_dim;
  std::vector<std::string> labels;
  for (int c = 0; c < spec.classes; ++c) labels.push_back("c" + std::to_string(c));
  dataset.label_space = LabelSpace(labels);

  Rng rng(mix_seed(spec.seed, 0x636c7573));
  for (std::size_t i = 0; i < spec.instances; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    std::vector<std::string> words;
    for (int w = 0; w < spec.class_words; ++w) {
      words.push_back("k" + std::to_string(label) + "w" +
                      std::to_string(rng.uniform_below(spec.class_vocab)));
    }
    for (int w = 0; w < spec.shared_words; ++w) {
      words.push_back("s" + std::to_string(rng.uniform_below(spec.shared_vocab)));
    }
    rng.shuffle(std::span<std::string>(words));
    std::string text;
    for (const auto& word : words) {
      if (!text.empty()) text += ' ';
      text += word;
    }
    dataset.instances.push_back(make_classification_instance(
        instance_id('x', i, spec.instances), std::move(text), labels[label],
        dataset.label_space, dataset.feature_dim));
  }
  return dataset;
}

Dataset make_tagging_dataset(const TaggingSpec& spec) {
  if (spec.tags < 2 || spec.sequences < 2 || spec.tag_vocab < 1 ||
      spec.min_length < 1 || spec.max_length < spec.min_length) {
    throw ValidationError("invalid tagging spec");
  }
  Dataset dataset;
  dataset.task_kind = TaskKind::kSequence;
  dataset.seed = spec.seed;
  dataset.feature_dim = spec.feature_dim;
  std::vector<std::string> labels;
  for (int t = 0; t < spec.tags; ++t) labels.push_back("T" + std::to_string(t));
  dataset.label_space = LabelSpace(labels);

  Rng rng(mix_seed(spec.seed, 0x74616773));
  const auto span = static_cast<std::uint64_t>(spec.max_length - spec.min_length + 1);
  for (std::size_t i = 0; i < spec.sequences; ++i) {
    const auto length = spec.min_length + static_cast<int>(rng.uniform_below(span));
    std::vector<std::string> tokens;
    std::vector<std::string> tags;
    for (int t = 0; t < length; ++t) {
      const auto tag = rng.uniform_below(static_cast<std::uint64_t>(spec.tags));
      tokens.push_back("t" + std::to_string(tag) + "v" +
                       std::to_string(rng.uniform_below(spec.tag_vocab)));
      tags.push_back(labels[tag]);
    }
    dataset.instances.push_back(make_sequence_instance(
        instance_id('s', i, spec.sequences), std::move(tokens), tags,
        dataset.label_space, dataset.feature_dim));
  }
  return dataset;
}

}  // namespace cleanloop
