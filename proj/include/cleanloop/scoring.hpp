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

#ifndef CLEANLOOP_SCORING_HPP_
#define CLEANLOOP_SCORING_HPP_

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cleanloop/trainer.hpp"

namespace cleanloop {

// Every score is oriented so that higher means more likely mislabeled.
enum class ScoreMethod { kAumProb, kAumLogit, kDm, kCu, kEnsemble };

std::string_view to_string(ScoreMethod method);
ScoreMethod parse_score_method(std::string_view name);

// The assigned label's value and the best competing value at one epoch
// (probabilities for aum_prob, logits for aum_logit).
struct MarginPoint {
  double assigned = 0.0;
  double max_other = 0.0;
};

// Mean over epochs of (max_other - assigned) on probabilities, in [-1, 1].
double aum_prob(std::span<const MarginPoint> epochs);
// Same margin on raw logits; unbounded and shift-invariant.
double aum_logit(std::span<const MarginPoint> epochs);
// Negative mean assigned-label probability, in [-1, 0].
double dm(std::span<const double> assigned_probs);
// Sequence score from token scores: the maximum.
double aggregate_sequence(std::span<const double> token_scores);

struct ScoreVector {
  ScoreMethod method = ScoreMethod::kEnsemble;
  std::vector<std::string> ids;
  std::vector<double> scores;
  // Ensemble only. For sequences these are the components of the token that
  // attains the instance's maximum.
  std::vector<double> s_train;
  std::vector<double> s_test;
};

struct EnsembleConfig {
  bool use_train_ensembling = true;
  bool use_test_ensembling = true;
  ScoreMethod base_score = ScoreMethod::kAumProb;

  void validate() const;
};

// Per-fold base score of one unit over that fold's epochs.
double fold_base_score(const DynamicsTensor& tensor, ScoreMethod base, int fold,
                       std::size_t unit);

// Each unit gets one base score per fold: C - 1 from folds where it was
// trained on and one from the fold where it was held out. The train scores
// are averaged, then averaged with the test score (or either alone, per the
// config). Sequence instances take the max over their tokens' final scores.
ScoreVector ensemble_scores(const DynamicsTensor& tensor,
                            const EnsembleConfig& config);

// Negative assigned-label probability under the held-out fold's model at the
// epoch with the lowest test loss.
ScoreVector cu(const DynamicsTensor& tensor);

// aum_prob, aum_logit or dm over a single run trained on all instances.
ScoreVector single_run_scores(const SingleRunDynamics& dynamics,
                              ScoreMethod method);

// Indices into `scores.ids`, by descending score; ties by ascending id.
std::vector<std::size_t> rank_order(const ScoreVector& scores);
std::vector<std::string> rank_ids(const ScoreVector& scores);

// Columns: instance_id,score,s_train,s_test,method; rows in rank order.
void write_scores_csv(const ScoreVector& scores, std::ostream& out);

}  // namespace cleanloop

#endif  // CLEANLOOP_SCORING_HPP_
