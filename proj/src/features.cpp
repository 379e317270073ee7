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

#include "cleanloop/features.hpp"

#include <algorithm>
#include <bit>
#include <map>

#include "cleanloop/error.hpp"

namespace cleanloop {

namespace {

void check_dim(std::uint32_t dim) {
  if (dim < 2 || !std::has_single_bit(dim)) {
    throw ValidationError("feature dim must be a power of two >= 2, got " +
                          std::to_string(dim));
  }
}

class FeatureCounter {
 public:
  explicit FeatureCounter(std::uint32_t dim) : dim_(dim) {}

  void add(std::string_view prefix, std::string_view body) {
    key_.assign(prefix);
    key_.append(body);
    counts_[static_cast<std::uint32_t>(fnv1a64(key_) % dim_)] += 1.0;
  }

  SparseVector finish() {
    SparseVector out;
    out.reserve(counts_.size());
    for (const auto& [index, value] : counts_) out.push_back({index, value});
    counts_.clear();
    return out;
  }

 private:
  std::uint32_t dim_;
  std::string key_;
  std::map<std::uint32_t, double> counts_;
};

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
           c == '\v';
  };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

std::string to_lower_ascii(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                  : static_cast<char>(c);
  });
  return out;
}

SparseVector featurize_text(std::string_view text, std::uint32_t dim) {
  check_dim(dim);
  const auto words = split_whitespace(to_lower_ascii(text));
  if (words.empty()) throw ValidationError("cannot featurize empty text");
  FeatureCounter counter(dim);
  for (std::size_t i = 0; i < words.size(); ++i) {
    counter.add("uni:", words[i]);
    if (i + 1 < words.size()) counter.add("bi:", words[i] + " " + words[i + 1]);
  }
  return counter.finish();
}

std::vector<SparseVector> featurize_tokens(std::span<const std::string> tokens,
                                           std::uint32_t dim) {
  check_dim(dim);
  if (tokens.empty()) throw ValidationError("cannot featurize empty sequence");
  std::vector<std::string> lower;
  lower.reserve(tokens.size());
  for (const auto& token : tokens) {
    if (token.empty()) throw ValidationError("empty token in sequence");
    lower.push_back(to_lower_ascii(token));
  }
  FeatureCounter counter(dim);
  std::vector<SparseVector> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    counter.add("tok:", tokens[i]);
    counter.add("low:", lower[i]);
    counter.add("prev:", i == 0 ? std::string_view("<s>") : lower[i - 1]);
    counter.add("next:", i + 1 == tokens.size() ? std::string_view("</s>")
                                                : lower[i + 1]);
    out.push_back(counter.finish());
  }
  return out;
}

}  // namespace cleanloop
