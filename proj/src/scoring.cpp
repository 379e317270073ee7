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

#include "cleanloop/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "cleanloop/error.hpp"

namespace cleanloop {

std::string_view to_string(ScoreMethod method) {
  switch (method) {
    case ScoreMethod::kAumProb:
      return "aum_prob";
    case ScoreMethod::kAumLogit:
      return "aum_logit";
    case ScoreMethod::kDm:
      return "dm";
    case ScoreMethod::kCu:
      return "cu";
    case ScoreMethod::kEnsemble:
      return "ensemble";
  }
  return "unknown";
}

ScoreMethod parse_score_method(std::string_view name) {
  for (auto method : {ScoreMethod::kAumProb, ScoreMethod::kAumLogit,
                      ScoreMethod::kDm, ScoreMethod::kCu,
                      ScoreMethod::kEnsemble}) {
    if (to_string(method) == name) return method;
  }
  throw ValidationError("unknown score method '" + std::string(name) + "'");
}

namespace {

double mean_margin(std::span<const MarginPoint> epochs, const char* what) {
  if (epochs.empty()) {
    throw ValidationError(std::string(what) + " needs at least one epoch");
  }
  double sum = 0.0;
  for (const auto& point : epochs) sum += point.max_other - point.assigned;
  return sum / static_cast<double>(epochs.size());
}

void check_finite(const ScoreVector& scores) {
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    if (!std::isfinite(scores.scores[i])) {
      throw Error("non-finite score for instance '" + scores.ids[i] + "'");
    }
  }
}

}  // namespace

double aum_prob(std::span<const MarginPoint> epochs) {
  return mean_margin(epochs, "aum_prob");
}

double aum_logit(std::span<const MarginPoint> epochs) {
  return mean_margin(epochs, "aum_logit");
}

double dm(std::span<const double> assigned_probs) {
  if (assigned_probs.empty()) {
    throw ValidationError("dm needs at least one epoch");
  }
  return -std::accumulate(assigned_probs.begin(), assigned_probs.end(), 0.0) /
         static_cast<double>(assigned_probs.size());
}

double aggregate_sequence(std::span<const double> token_scores) {
  if (token_scores.empty()) {
    throw ValidationError("cannot aggregate an empty token sequence");
  }
  return *std::max_element(token_scores.begin(), token_scores.end());
}

void EnsembleConfig::validate() const {
  if (!use_train_ensembling && !use_test_ensembling) {
    throw ValidationError(
        "ensemble needs train ensembling, test ensembling, or both");
  }
  if (base_score != ScoreMethod::kAumProb &&
      base_score != ScoreMethod::kAumLogit && base_score != ScoreMethod::kDm) {
    throw ValidationError("ensemble base score must be aum_prob, aum_logit or dm");
  }
}

namespace {

// Base score over `epochs` records supplied by `record_at(e)`.
template <typename RecordAt>
double base_score(ScoreMethod base, int epochs, RecordAt record_at) {
  std::vector<MarginPoint> margins;
  std::vector<double> probs;
  margins.reserve(static_cast<std::size_t>(epochs));
  probs.reserve(static_cast<std::size_t>(epochs));
  for (int e = 0; e < epochs; ++e) {
    const UnitRecord& r = record_at(e);
    switch (base) {
      case ScoreMethod::kAumProb:
        margins.push_back({r.assigned_prob, r.max_other_prob});
        break;
      case ScoreMethod::kAumLogit:
        margins.push_back({r.assigned_logit, r.max_other_logit});
        break;
      case ScoreMethod::kDm:
        probs.push_back(r.assigned_prob);
        break;
      default:
        throw ValidationError("not a per-epoch base score: " +
                              std::string(to_string(base)));
    }
  }
  switch (base) {
    case ScoreMethod::kAumProb:
      return aum_prob(margins);
    case ScoreMethod::kAumLogit:
      return aum_logit(margins);
    default:
      return dm(probs);
  }
}

ScoreVector empty_vector(const UnitLayout& layout, ScoreMethod method) {
  ScoreVector out;
  out.method = method;
  out.ids = layout.instance_ids;
  out.scores.reserve(layout.instance_count());
  return out;
}

}  // namespace

double fold_base_score(const DynamicsTensor& tensor, ScoreMethod base, int fold,
                       std::size_t unit) {
  return base_score(base, tensor.epochs, [&](int e) -> const UnitRecord& {
    return tensor.at(fold, e, unit);
  });
}

ScoreVector ensemble_scores(const DynamicsTensor& tensor,
                            const EnsembleConfig& config) {
  config.validate();
  tensor.validate();
  const auto& layout = tensor.layout;
  const int folds = tensor.fold_count();
  ScoreVector out = empty_vector(layout, ScoreMethod::kEnsemble);
  out.s_train.reserve(layout.instance_count());
  out.s_test.reserve(layout.instance_count());
  for (std::size_t i = 0; i < layout.instance_count(); ++i) {
    const int test_fold = tensor.assignment.fold_of[i];
    double best = 0.0, best_train = 0.0, best_test = 0.0;
    for (auto u = layout.offsets[i]; u < layout.offsets[i + 1]; ++u) {
      double train_sum = 0.0;
      double test_score = 0.0;
      for (int fold = 0; fold < folds; ++fold) {
        const double s = fold_base_score(tensor, config.base_score, fold, u);
        if (fold == test_fold) {
          test_score = s;
        } else {
          train_sum += s;
        }
      }
      // Normalized by the number of train folds, C - 1.
      const double train_score = train_sum / static_cast<double>(folds - 1);
      double score = 0.0;
      if (config.use_train_ensembling && config.use_test_ensembling) {
        score = 0.5 * (train_score + test_score);
      } else if (config.use_train_ensembling) {
        score = train_score;
      } else {
        score = test_score;
      }
      if (u == layout.offsets[i] || score > best) {
        best = score;
        best_train = train_score;
        best_test = test_score;
      }
    }
    out.scores.push_back(best);
    out.s_train.push_back(best_train);
    out.s_test.push_back(best_test);
  }
  check_finite(out);
  return out;
}

ScoreVector cu(const DynamicsTensor& tensor) {
  tensor.validate();
  const auto& layout = tensor.layout;
  std::vector<int> best_epoch(static_cast<std::size_t>(tensor.fold_count()));
  for (int fold = 0; fold < tensor.fold_count(); ++fold) {
    best_epoch[static_cast<std::size_t>(fold)] =
        best_epoch_by_test_loss(tensor, fold) - 1;
  }
  ScoreVector out = empty_vector(layout, ScoreMethod::kCu);
  std::vector<double> tokens;
  for (std::size_t i = 0; i < layout.instance_count(); ++i) {
    const int fold = tensor.assignment.fold_of[i];
    tokens.clear();
    for (auto u = layout.offsets[i]; u < layout.offsets[i + 1]; ++u) {
      tokens.push_back(
          -tensor.at(fold, best_epoch[static_cast<std::size_t>(fold)], u)
               .assigned_prob);
    }
    out.scores.push_back(aggregate_sequence(tokens));
  }
  check_finite(out);
  return out;
}

ScoreVector single_run_scores(const SingleRunDynamics& dynamics,
                              ScoreMethod method) {
  if (method != ScoreMethod::kAumProb && method != ScoreMethod::kAumLogit &&
      method != ScoreMethod::kDm) {
    throw ValidationError("single-run scoring supports aum_prob, aum_logit, dm");
  }
  const auto& layout = dynamics.layout;
  ScoreVector out = empty_vector(layout, method);
  std::vector<double> tokens;
  for (std::size_t i = 0; i < layout.instance_count(); ++i) {
    tokens.clear();
    for (auto u = layout.offsets[i]; u < layout.offsets[i + 1]; ++u) {
      tokens.push_back(
          base_score(method, dynamics.epochs, [&](int e) -> const UnitRecord& {
            return dynamics.at(e, u);
          }));
    }
    out.scores.push_back(aggregate_sequence(tokens));
  }
  check_finite(out);
  return out;
}

std::vector<std::size_t> rank_order(const ScoreVector& scores) {
  std::vector<std::size_t> order(scores.ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores.scores[a] != scores.scores[b]) {
      return scores.scores[a] > scores.scores[b];
    }
    return scores.ids[a] < scores.ids[b];
  });
  return order;
}

std::vector<std::string> rank_ids(const ScoreVector& scores) {
  std::vector<std::string> out;
  out.reserve(scores.ids.size());
  for (const auto i : rank_order(scores)) out.push_back(scores.ids[i]);
  return out;
}

namespace {

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (const char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_scores_csv(const ScoreVector& scores, std::ostream& out) {
  const bool detail = !scores.s_train.empty();
  out << "instance_id,score,s_train,s_test,method\n";
  for (const auto i : rank_order(scores)) {
    out << csv_field(scores.ids[i]) << ',' << format_double(scores.scores[i])
        << ',' << (detail ? format_double(scores.s_train[i]) : "") << ','
        << (detail ? format_double(scores.s_test[i]) : "") << ','
        << to_string(scores.method) << '\n';
  }
}

}  // namespace cleanloop
