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

#ifndef CLEANLOOP_SYNTHETIC_HPP_
#define CLEANLOOP_SYNTHETIC_HPP_

#include <cstdint>

#include "cleanloop/dataset.hpp"

namespace cleanloop {

// Two-or-more-class text whose classes draw their distinctive words from
// disjoint vocabularies, padded with words shared by every class.
struct ClusterSpec {
  std::size_t instances = 2000;
  int classes = 2;
  int class_vocab = 40;
  int shared_vocab = 60;
  int class_words = 6;   // distinctive words per instance
  int shared_words = 4;  // shared words per instance
  std::uint64_t seed = 1;
  std::uint32_t feature_dim = 1u << 16;
};

// Token tagging: each tag owns a vocabulary; tokens are drawn tag-first.
struct TaggingSpec {
  std::size_t sequences = 300;
  int tags = 4;
  int tag_vocab = 25;
  int min_length = 4;
  int max_length = 12;
  std::uint64_t seed = 1;
  std::uint32_t feature_dim = 1u << 16;
};

// Clean datasets (no gold labels); pass them to perturb_labels to inject
// errors.
Dataset make_cluster_classification(const ClusterSpec& spec);
Dataset make_tagging_dataset(const TaggingSpec& spec);

}  // namespace cleanloop

#endif  // CLEANLOOP_SYNTHETIC_HPP_
