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

#include "cleanloop/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "cleanloop/error.hpp"

namespace cleanloop {

namespace {

std::size_t count_positives(const std::vector<bool>& mask) {
  std::size_t positives = 0;
  for (const bool m : mask) positives += m ? 1 : 0;
  if (positives == 0) {
    throw ValidationError("average precision needs at least one positive");
  }
  return positives;
}

}  // namespace

double average_precision(const std::vector<bool>& ranked_mask) {
  const auto positives = count_positives(ranked_mask);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked_mask.size(); ++r) {
    if (!ranked_mask[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(positives);
}

std::vector<PrPoint> pr_curve(const std::vector<bool>& ranked_mask) {
  const auto positives = count_positives(ranked_mask);
  std::vector<PrPoint> curve;
  curve.reserve(ranked_mask.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked_mask.size(); ++r) {
    hits += ranked_mask[r] ? 1 : 0;
    curve.push_back({static_cast<double>(hits) / static_cast<double>(positives),
                     static_cast<double>(hits) / static_cast<double>(r + 1)});
  }
  return curve;
}

std::vector<bool> mask_in_rank_order(std::span<const std::string> ranking,
                                     std::span<const std::string> ids,
                                     const std::vector<bool>& mask) {
  if (ids.size() != mask.size() || ranking.size() != ids.size()) {
    throw ValidationError("ranking, ids and mask must have equal sizes");
  }
  std::unordered_map<std::string, std::size_t> position;
  position.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) position.emplace(ids[i], i);
  std::vector<bool> seen(ids.size(), false);
  std::vector<bool> ranked;
  ranked.reserve(ranking.size());
  for (const auto& id : ranking) {
    const auto it = position.find(id);
    if (it == position.end() || seen[it->second]) {
      throw ValidationError("ranking is not a permutation of the instance ids ('" +
                            id + "')");
    }
    seen[it->second] = true;
    ranked.push_back(mask[it->second]);
  }
  return ranked;
}

double average_precision(std::span<const std::string> ranking,
                         std::span<const std::string> ids,
                         const std::vector<bool>& mask) {
  return average_precision(mask_in_rank_order(ranking, ids, mask));
}

double average_precision(const ScoreVector& scores,
                         const std::vector<bool>& mask) {
  if (mask.size() != scores.ids.size()) {
    throw ValidationError("mask and score vector sizes differ");
  }
  std::vector<bool> ranked;
  ranked.reserve(mask.size());
  for (const auto i : rank_order(scores)) ranked.push_back(mask[i]);
  return average_precision(ranked);
}

SeedAggregate seed_aggregate(std::span<const double> aps) {
  if (aps.empty()) throw ValidationError("seed aggregate needs >= 1 value");
  SeedAggregate out;
  out.aps.assign(aps.begin(), aps.end());
  const double n = static_cast<double>(aps.size());
  const auto [lo, hi] = std::minmax_element(aps.begin(), aps.end());
  if (*lo == *hi) {
    // Exact for constant input; the summed mean can be off by one ulp.
    out.mean = *lo;
    return out;
  }
  out.mean = std::accumulate(aps.begin(), aps.end(), 0.0) / n;
  double ss = 0.0;
  for (const double ap : aps) ss += (ap - out.mean) * (ap - out.mean);
  out.std = std::sqrt(ss / n);
  return out;
}

}  // namespace cleanloop
