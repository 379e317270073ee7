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

#ifndef CLEANLOOP_FEATURES_HPP_
#define CLEANLOOP_FEATURES_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cleanloop {

inline constexpr std::uint32_t kDefaultFeatureDim = 1u << 18;

struct FeatureEntry {
  std::uint32_t index = 0;
  double value = 0.0;

  friend bool operator==(const FeatureEntry&, const FeatureEntry&) = default;
};

// Sorted by index, no duplicate indices, all values > 0.
using SparseVector = std::vector<FeatureEntry>;

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

std::vector<std::string> split_whitespace(std::string_view text);
std::string to_lower_ascii(std::string_view text);

// Hashed bag of lowercased unigrams ("uni:w") and bigrams ("bi:w1 w2").
// Throws ValidationError on empty text or an invalid dim (must be a power of
// two >= 2).
SparseVector featurize_text(std::string_view text, std::uint32_t dim);

// One vector per token: the raw token ("tok:"), its lowercase form ("low:"),
// and the lowercased left/right neighbours ("prev:", "next:", with "<s>" and
// "</s>" at the edges).
std::vector<SparseVector> featurize_tokens(std::span<const std::string> tokens,
                                           std::uint32_t dim);

}  // namespace cleanloop

#endif  // CLEANLOOP_FEATURES_HPP_
