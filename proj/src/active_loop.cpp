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

#include "cleanloop/active_loop.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "cleanloop/error.hpp"

namespace cleanloop {

void StopConfig::validate() const {
  if (max_iterations < 0) throw ValidationError("max_iterations must be >= 0");
  if (budget && *budget == 0) throw ValidationError("budget must be >= 1");
  if (error_fraction_threshold &&
      !(*error_fraction_threshold >= 0.0 && *error_fraction_threshold <= 1.0)) {
    throw ValidationError("error fraction threshold must lie in [0, 1]");
  }
}

void LoopConfig::validate() const {
  if (folds < 2) throw ValidationError("folds must be >= 2");
  if (k < 1) throw ValidationError("k must be >= 1");
  trainer.validate();
  ensemble.validate();
  stop.validate();
}

std::size_t SessionState::queried_count() const {
  std::size_t total = 0;
  for (const auto& record : query_log) total += record.queried.size();
  return total;
}

std::vector<std::string> select_batch(const ScoreVector& scores,
                                      const SessionState& state) {
  std::size_t limit = static_cast<std::size_t>(state.config.k);
  if (const auto& budget = state.config.stop.budget) {
    const auto used = state.queried_count();
    limit = std::min(limit, *budget > used ? *budget - used : 0);
  }
  std::vector<std::string> batch;
  for (const auto i : rank_order(scores)) {
    if (batch.size() >= limit) break;
    if (state.corrected_ids.contains(scores.ids[i])) continue;
    batch.push_back(scores.ids[i]);
  }
  return batch;
}

AnnotatorAnswer simulated_annotator(const Dataset& dataset,
                                    std::span<const std::string> batch) {
  if (!dataset.has_gold()) {
    throw ValidationError("simulated annotator needs gold labels");
  }
  const auto index = dataset.index_by_id();
  AnnotatorAnswer answer;
  answer.reserve(batch.size());
  for (const auto& id : batch) {
    const auto it = index.find(id);
    if (it == index.end()) {
      throw ValidationError("batch holds unknown instance '" + id + "'");
    }
    const auto& instance = dataset.instances[it->second];
    AnnotatorDecision decision{id, std::nullopt};
    if (instance.observed != *instance.gold) decision.new_labels = *instance.gold;
    answer.push_back(std::move(decision));
  }
  return answer;
}

StopDecision should_stop(const SessionState& state,
                         std::optional<double> last_batch_error_fraction) {
  const auto& stop = state.config.stop;
  if (state.iteration >= stop.max_iterations) return {true, "max_iterations"};
  if (state.corrected_ids.size() >= state.dataset.instances.size()) {
    return {true, "exhausted"};
  }
  if (stop.budget && state.queried_count() >= *stop.budget) {
    return {true, "budget"};
  }
  if (stop.error_fraction_threshold && last_batch_error_fraction &&
      *last_batch_error_fraction <= *stop.error_fraction_threshold) {
    return {true, "error_fraction"};
  }
  return {};
}

ScoreVector ensemble_scorer(const Dataset& dataset, const LoopConfig& config,
                            const ProgressFn& progress) {
  CrossValidateOptions options;
  if (progress) {
    options.progress = [&](int done, int total) {
      progress(LoopStage::kTraining,
               static_cast<double>(done) / static_cast<double>(total));
    };
  }
  const auto tensor = cross_validate(dataset, config.folds, config.trainer, options);
  if (progress) progress(LoopStage::kScoring, 0.0);
  auto scores = ensemble_scores(tensor, config.ensemble);
  if (progress) progress(LoopStage::kScoring, 1.0);
  return scores;
}

namespace {

std::set<std::string> corrected_in(const Dataset& dataset) {
  std::set<std::string> ids;
  for (const auto& instance : dataset.instances) {
    if (instance.corrected) ids.insert(instance.id);
  }
  return ids;
}

}  // namespace

ActiveLoop::ActiveLoop(Dataset dataset, LoopConfig config, Scorer scorer)
    : scorer_(scorer ? std::move(scorer) : Scorer(ensemble_scorer)) {
  config.validate();
  dataset.validate();
  state_.corrected_ids = corrected_in(dataset);
  state_.dataset = std::move(dataset);
  state_.config = std::move(config);
}

ActiveLoop::ActiveLoop(SessionState state, Scorer scorer)
    : state_(std::move(state)),
      scorer_(scorer ? std::move(scorer) : Scorer(ensemble_scorer)) {
  state_.config.validate();
  if (state_.corrected_ids != corrected_in(state_.dataset)) {
    throw ValidationError("session state: corrected ids disagree with dataset");
  }
}

const std::vector<std::string>& ActiveLoop::prepare_batch(
    const ProgressFn& progress) {
  if (state_.stopped() || !state_.outstanding.empty()) return state_.outstanding;
  auto scores = scorer_(state_.dataset, state_.config, progress);
  if (scores.ids.size() != state_.dataset.instances.size()) {
    throw Error("scorer returned " + std::to_string(scores.ids.size()) +
                " scores for " +
                std::to_string(state_.dataset.instances.size()) + " instances");
  }
  state_.last_scores = std::move(scores);
  if (state_.iteration >= state_.config.stop.max_iterations) {
    state_.stop_reason = "max_iterations";
    return state_.outstanding;
  }
  auto batch = select_batch(*state_.last_scores, state_);
  if (batch.empty()) {
    state_.stop_reason = state_.config.stop.budget &&
                                 state_.queried_count() >= *state_.config.stop.budget
                             ? "budget"
                             : "exhausted";
    return state_.outstanding;
  }
  state_.outstanding = std::move(batch);
  return state_.outstanding;
}

ActiveLoop::SubmitResult ActiveLoop::submit(const AnnotatorAnswer& answer) {
  if (state_.outstanding.empty()) {
    throw ValidationError("no batch is awaiting annotations");
  }
  std::unordered_set<std::string> expected(state_.outstanding.begin(),
                                           state_.outstanding.end());
  std::unordered_set<std::string> seen;
  for (const auto& decision : answer) {
    if (!expected.contains(decision.id)) {
      throw ValidationError("answer for '" + decision.id +
                            "' which is not in the outstanding batch");
    }
    if (!seen.insert(decision.id).second) {
      throw ValidationError("duplicate answer for '" + decision.id + "'");
    }
  }
  if (seen.size() != expected.size()) {
    throw ValidationError("answer covers " + std::to_string(seen.size()) +
                          " of " + std::to_string(expected.size()) +
                          " batch items");
  }

  const auto index = state_.dataset.index_by_id();
  std::unordered_map<std::string, const AnnotatorDecision*> by_id;
  for (const auto& decision : answer) by_id.emplace(decision.id, &decision);
  std::vector<Correction> corrections;
  SubmitResult result;
  // Batch order, so the query log does not depend on answer order.
  for (const auto& id : state_.outstanding) {
    const auto& current = state_.dataset.instances[index.at(id)].observed;
    const auto* decision = by_id.at(id);
    LabelSeq labels = decision->new_labels.value_or(current);
    if (labels != current) result.changed.push_back(id);
    corrections.push_back({id, std::move(labels)});
  }
  auto applied = apply_corrections(state_.dataset, corrections);

  state_.dataset = std::move(applied.dataset);
  for (const auto& id : state_.outstanding) state_.corrected_ids.insert(id);
  ++state_.iteration;
  const double fraction = static_cast<double>(result.changed.size()) /
                          static_cast<double>(state_.outstanding.size());
  state_.query_log.push_back(
      {state_.iteration, std::move(state_.outstanding), result.changed});
  state_.outstanding.clear();
  state_.last_batch_error_fraction = fraction;

  result.iteration = state_.iteration;
  result.batch_error_fraction = fraction;
  result.diagnostics = std::move(applied.diagnostics);
  result.stop = should_stop(state_, fraction);
  if (result.stop.stop) state_.stop_reason = result.stop.reason;
  return result;
}

void ActiveLoop::stop(const std::string& reason) {
  if (state_.stopped()) return;
  state_.outstanding.clear();
  state_.stop_reason = reason;
}

std::vector<std::string> ActiveLoop::final_ranking() const {
  std::vector<std::string> ranking;
  ranking.reserve(state_.dataset.instances.size());
  std::unordered_set<std::string> queried;
  for (const auto& record : state_.query_log) {
    for (const auto& id : record.queried) {
      ranking.push_back(id);
      queried.insert(id);
    }
  }
  if (!state_.last_scores) {
    if (ranking.size() == state_.dataset.instances.size()) return ranking;
    throw ValidationError("final ranking needs at least one scoring pass");
  }
  for (const auto& id : rank_ids(*state_.last_scores)) {
    if (!queried.contains(id)) ranking.push_back(id);
  }
  return ranking;
}

LoopResult resume_loop(SessionState& state, const Annotator& annotator,
                       Scorer scorer) {
  ActiveLoop loop(state, std::move(scorer));
  while (!loop.stopped()) {
    const auto batch = loop.prepare_batch();
    state = loop.state();
    if (batch.empty()) break;
    AnnotatorAnswer answer;
    try {
      answer = annotator(loop.state().dataset, batch);
    } catch (const AnnotatorError&) {
      throw;
    } catch (const std::exception& e) {
      throw AnnotatorError(std::string("annotator failed: ") + e.what());
    }
    loop.submit(answer);
    state = loop.state();
  }
  return {loop.state(), loop.final_ranking()};
}

LoopResult run_loop(Dataset dataset, const LoopConfig& config,
                    const Annotator& annotator, Scorer scorer) {
  ActiveLoop fresh(std::move(dataset), config);
  SessionState state = fresh.state();
  return resume_loop(state, annotator, std::move(scorer));
}

}  // namespace cleanloop
