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

#ifndef CLEANLOOP_EVAL_HPP_
#define CLEANLOOP_EVAL_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cleanloop/scoring.hpp"

namespace cleanloop {

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;

  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

struct IterationYield {
  int iteration = 0;
  std::size_t errors_found = 0;
  std::size_t batch_size = 0;
};

struct EvaluationReport {
  std::string method;
  std::uint64_t seed = 0;
  double ap = 0.0;
  std::vector<PrPoint> pr_curve;
  std::vector<IterationYield> per_iteration_yield;
  std::size_t positives = 0;
  std::size_t total = 0;
};

struct SeedAggregate {
  std::vector<double> aps;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

// `ranked_mask[r]` says whether the item at rank r (0-based) is an error.
// AP = sum over positives of precision at that positive's rank, divided by
// the number of positives. Throws ValidationError when there are none.
double average_precision(const std::vector<bool>& ranked_mask);
std::vector<PrPoint> pr_curve(const std::vector<bool>& ranked_mask);

// Projects an instance-ordered mask onto a ranking. `ranking` must be a
// permutation of `ids`.
std::vector<bool> mask_in_rank_order(std::span<const std::string> ranking,
                                     std::span<const std::string> ids,
                                     const std::vector<bool>& mask);

double average_precision(std::span<const std::string> ranking,
                         std::span<const std::string> ids,
                         const std::vector<bool>& mask);
// Ranks by descending score with ties broken by ascending id. `mask` is
// aligned with `scores.ids`.
double average_precision(const ScoreVector& scores,
                         const std::vector<bool>& mask);

SeedAggregate seed_aggregate(std::span<const double> aps);

}  // namespace cleanloop

#endif  // CLEANLOOP_EVAL_HPP_
