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

#ifndef CLEANLOOP_ACTIVE_LOOP_HPP_
#define CLEANLOOP_ACTIVE_LOOP_HPP_

#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cleanloop/dataset.hpp"
#include "cleanloop/scoring.hpp"
#include "cleanloop/trainer.hpp"

namespace cleanloop {

struct StopConfig {
  // 0 means a single scoring pass without queries (the non-active variant).
  int max_iterations = 40;
  std::optional<std::size_t> budget;
  std::optional<double> error_fraction_threshold;

  void validate() const;
};

struct LoopConfig {
  int folds = 10;
  TrainerConfig trainer;
  EnsembleConfig ensemble;
  int k = 50;
  StopConfig stop;

  void validate() const;
};

struct QueryRecord {
  int iteration = 0;
  std::vector<std::string> queried;
  std::vector<std::string> changed;
};

struct SessionState {
  Dataset dataset;
  LoopConfig config;
  int iteration = 0;
  std::vector<QueryRecord> query_log;
  std::set<std::string> corrected_ids;
  std::optional<ScoreVector> last_scores;
  std::vector<std::string> outstanding;  // batch waiting for answers
  std::optional<double> last_batch_error_fraction;
  std::optional<std::string> stop_reason;

  bool stopped() const { return stop_reason.has_value(); }
  std::size_t queried_count() const;
};

// One entry per queried id. An empty `new_labels` confirms the current labels.
struct AnnotatorDecision {
  std::string id;
  std::optional<LabelSeq> new_labels;
};
using AnnotatorAnswer = std::vector<AnnotatorDecision>;

struct StopDecision {
  bool stop = false;
  std::string reason;  // max_iterations | exhausted | budget | error_fraction
};

// Top-k uncorrected ids by descending score, ties by ascending id. With a
// budget the batch never exceeds what is left of it.
std::vector<std::string> select_batch(const ScoreVector& scores,
                                      const SessionState& state);

// Corrects each queried id to its gold labels when they differ.
AnnotatorAnswer simulated_annotator(const Dataset& dataset,
                                    std::span<const std::string> batch);

StopDecision should_stop(const SessionState& state,
                         std::optional<double> last_batch_error_fraction);

enum class LoopStage { kTraining, kScoring };
using ProgressFn = std::function<void(LoopStage stage, double fraction)>;
using Scorer = std::function<ScoreVector(const Dataset&, const LoopConfig&,
                                         const ProgressFn&)>;
using Annotator = std::function<AnnotatorAnswer(
    const Dataset&, std::span<const std::string> batch)>;

// Cross-validation followed by ensemble scoring.
ScoreVector ensemble_scorer(const Dataset& dataset, const LoopConfig& config,
                            const ProgressFn& progress);

// Stepwise driver shared by run_loop and the session service. Every method
// either completes or leaves the state untouched.
class ActiveLoop {
 public:
  struct SubmitResult {
    int iteration = 0;
    double batch_error_fraction = 0.0;
    std::vector<std::string> changed;
    std::vector<std::string> diagnostics;
    StopDecision stop;
  };

  ActiveLoop(Dataset dataset, LoopConfig config, Scorer scorer = {});
  explicit ActiveLoop(SessionState state, Scorer scorer = {});

  const SessionState& state() const { return state_; }
  bool stopped() const { return state_.stopped(); }

  // Scores the current dataset and fixes the next batch. Returns the
  // outstanding batch unchanged if there already is one; returns an empty
  // batch once the loop has stopped.
  const std::vector<std::string>& prepare_batch(const ProgressFn& progress = {});

  // Throws ValidationError unless `answer` covers the outstanding batch
  // exactly once per id.
  SubmitResult submit(const AnnotatorAnswer& answer);

  // Stops immediately, discarding any outstanding batch. No-op once stopped.
  void stop(const std::string& reason);

  // Queried ids in query order, then the rest by the last computed scores.
  std::vector<std::string> final_ranking() const;

 private:
  SessionState state_;
  Scorer scorer_;
};

struct LoopResult {
  SessionState state;
  std::vector<std::string> final_ranking;
};

LoopResult run_loop(Dataset dataset, const LoopConfig& config,
                    const Annotator& annotator, Scorer scorer = {});
// Continues a persisted session. Annotator failures surface as
// AnnotatorError; `state` then holds the last consistent state.
LoopResult resume_loop(SessionState& state, const Annotator& annotator,
                       Scorer scorer = {});

}  // namespace cleanloop

#endif  // CLEANLOOP_ACTIVE_LOOP_HPP_
