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

#ifndef CLEANLOOP_EXPERIMENT_HPP_
#define CLEANLOOP_EXPERIMENT_HPP_

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cleanloop/active_loop.hpp"
#include "cleanloop/eval.hpp"
#include "json.hpp"

namespace cleanloop {

enum class ExperimentMethod { kCu, kDm, kAumProb, kAumLogit, kEnsemble, kActive };

std::string_view to_string(ExperimentMethod method);
ExperimentMethod parse_experiment_method(std::string_view name);

struct ExperimentConfig {
  ExperimentMethod method = ExperimentMethod::kActive;
  int seed_count = 3;
  std::uint64_t seed_base = 0;
  LoopConfig loop;
  // Replaces the method's scoring pipeline (single-pass methods) or the
  // loop's scorer (active). Used to inject reference scorers.
  Scorer scorer;

  void validate() const;
};

struct SeedRun {
  std::uint64_t seed = 0;
  EvaluationReport report;
  ScoreVector scores;  // last computed scores
  std::vector<std::string> ranking;
};

struct ExperimentResult {
  std::string method;
  SeedAggregate aggregate;
  std::vector<SeedRun> runs;
};

// Seed i trains with seed_base + i. The dataset must carry gold labels.
ExperimentResult run_experiment(const Dataset& dataset,
                                const ExperimentConfig& config);

nlohmann::ordered_json report_to_json(const EvaluationReport& report);
nlohmann::ordered_json aggregate_to_json(const ExperimentResult& result);
// recall,precision per line.
void write_pr_csv(const EvaluationReport& report, std::ostream& out);
// Aligned table with AP mean±std in percent, one decimal.
std::string format_table(std::span<const ExperimentResult> results);

}  // namespace cleanloop

#endif  // CLEANLOOP_EXPERIMENT_HPP_
