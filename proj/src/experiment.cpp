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

#include "cleanloop/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "cleanloop/error.hpp"

namespace cleanloop {

using nlohmann::ordered_json;

std::string_view to_string(ExperimentMethod method) {
  switch (method) {
    case ExperimentMethod::kCu:
      return "cu";
    case ExperimentMethod::kDm:
      return "dm";
    case ExperimentMethod::kAumProb:
      return "aum_prob";
    case ExperimentMethod::kAumLogit:
      return "aum_logit";
    case ExperimentMethod::kEnsemble:
      return "ensemble";
    case ExperimentMethod::kActive:
      return "active";
  }
  return "unknown";
}

ExperimentMethod parse_experiment_method(std::string_view name) {
  for (auto method : {ExperimentMethod::kCu, ExperimentMethod::kDm,
                      ExperimentMethod::kAumProb, ExperimentMethod::kAumLogit,
                      ExperimentMethod::kEnsemble, ExperimentMethod::kActive}) {
    if (to_string(method) == name) return method;
  }
  throw ValidationError("unknown method '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  if (seed_count < 1) throw ValidationError("need at least one seed");
  loop.validate();
}

namespace {

ScoreVector single_pass_scores(const Dataset& dataset,
                               const ExperimentConfig& config,
                               const LoopConfig& loop) {
  if (config.scorer) return config.scorer(dataset, loop, {});
  switch (config.method) {
    case ExperimentMethod::kCu:
      return cu(cross_validate(dataset, loop.folds, loop.trainer));
    case ExperimentMethod::kDm:
      return single_run_scores(train_full_run(dataset, loop.trainer),
                               ScoreMethod::kDm);
    case ExperimentMethod::kAumProb:
      return single_run_scores(train_full_run(dataset, loop.trainer),
                               ScoreMethod::kAumProb);
    case ExperimentMethod::kAumLogit:
      return single_run_scores(train_full_run(dataset, loop.trainer),
                               ScoreMethod::kAumLogit);
    case ExperimentMethod::kEnsemble:
      return ensemble_scores(cross_validate(dataset, loop.folds, loop.trainer),
                             loop.ensemble);
    case ExperimentMethod::kActive:
      break;
  }
  throw ValidationError("active method has no single-pass pipeline");
}

}  // namespace

ExperimentResult run_experiment(const Dataset& dataset,
                                const ExperimentConfig& config) {
  config.validate();
  const auto mask = error_mask(dataset);
  std::vector<std::string> ids;
  ids.reserve(dataset.instances.size());
  for (const auto& instance : dataset.instances) ids.push_back(instance.id);

  ExperimentResult result;
  result.method = std::string(to_string(config.method));
  std::vector<double> aps;
  for (int i = 0; i < config.seed_count; ++i) {
    SeedRun run;
    run.seed = config.seed_base + static_cast<std::uint64_t>(i);
    LoopConfig loop = config.loop;
    loop.trainer.seed = run.seed;

    if (config.method == ExperimentMethod::kActive) {
      auto outcome = run_loop(dataset, loop, simulated_annotator, config.scorer);
      run.ranking = std::move(outcome.final_ranking);
      if (outcome.state.last_scores) run.scores = *outcome.state.last_scores;
      for (const auto& record : outcome.state.query_log) {
        run.report.per_iteration_yield.push_back(
            {record.iteration, record.changed.size(), record.queried.size()});
      }
    } else {
      run.scores = single_pass_scores(dataset, config, loop);
      run.ranking = rank_ids(run.scores);
    }

    const auto ranked = mask_in_rank_order(run.ranking, ids, mask);
    run.report.method = result.method;
    run.report.seed = run.seed;
    run.report.ap = average_precision(ranked);
    run.report.pr_curve = pr_curve(ranked);
    run.report.positives = static_cast<std::size_t>(
        std::count(mask.begin(), mask.end(), true));
    run.report.total = mask.size();
    aps.push_back(run.report.ap);
    result.runs.push_back(std::move(run));
  }
  result.aggregate = seed_aggregate(aps);
  return result;
}

ordered_json report_to_json(const EvaluationReport& report) {
  ordered_json j;
  j["v"] = 1;
  j["method"] = report.method;
  j["seed"] = report.seed;
  j["ap"] = report.ap;
  j["positives"] = report.positives;
  j["total"] = report.total;
  ordered_json yield = ordered_json::array();
  for (const auto& y : report.per_iteration_yield) {
    ordered_json entry;
    entry["iteration"] = y.iteration;
    entry["errors_found"] = y.errors_found;
    entry["batch_size"] = y.batch_size;
    yield.push_back(std::move(entry));
  }
  j["per_iteration_yield"] = std::move(yield);
  return j;
}

ordered_json aggregate_to_json(const ExperimentResult& result) {
  ordered_json j;
  j["v"] = 1;
  j["method"] = result.method;
  j["aps"] = result.aggregate.aps;
  j["mean"] = result.aggregate.mean;
  j["std"] = result.aggregate.std;
  j["std_kind"] = "population";
  std::vector<std::uint64_t> seeds;
  for (const auto& run : result.runs) seeds.push_back(run.seed);
  j["seeds"] = seeds;
  return j;
}

void write_pr_csv(const EvaluationReport& report, std::ostream& out) {
  out << "rank,recall,precision\n";
  char buf[96];
  for (std::size_t r = 0; r < report.pr_curve.size(); ++r) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", r + 1,
                  report.pr_curve[r].recall, report.pr_curve[r].precision);
    out << buf;
  }
}

std::string format_table(std::span<const ExperimentResult> results) {
  std::size_t width = std::string("method").size();
  for (const auto& r : results) width = std::max(width, r.method.size());
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-*s  %12s  %5s\n", static_cast<int>(width),
                "method", "AP (%)", "seeds");
  out << buf;
  for (const auto& r : results) {
    char cell[48];
    std::snprintf(cell, sizeof(cell), "%.1f±%.1f", 100.0 * r.aggregate.mean,
                  100.0 * r.aggregate.std);
    // "±" is two bytes in UTF-8; pad by display width.
    std::snprintf(buf, sizeof(buf), "%-*s  %13s  %5zu\n",
                  static_cast<int>(width), r.method.c_str(), cell,
                  r.aggregate.aps.size());
    out << buf;
  }
  out << "(mean ± population std over seeds)\n";
  return out.str();
}

}  // namespace cleanloop
