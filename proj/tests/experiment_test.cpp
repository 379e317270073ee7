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

#include <sstream>

#include "cleanloop/error.hpp"
#include "doctest.h"
#include "test_support.hpp"

namespace cleanloop {
namespace {

ScoreVector perfect_scorer(const Dataset& d, const LoopConfig&, const ProgressFn&) {
  ScoreVector v;
  for (const auto& inst : d.instances) {
    v.ids.push_back(inst.id);
    v.scores.push_back(inst.observed != *inst.gold ? 1.0 : 0.0);
  }
  return v;
}

ExperimentConfig base_config(ExperimentMethod method) {
  ExperimentConfig c;
  c.method = method;
  c.seed_count = 2;
  c.loop.folds = 4;
  c.loop.k = 10;
  c.loop.trainer.epochs = 4;
  c.loop.trainer.learning_rate = 0.3;
  c.loop.stop.max_iterations = 3;
  return c;
}

const Dataset& noisy() {
  static const Dataset d = perturb_labels(testing::two_class_dataset(120), 0.1, 8);
  return d;
}

TEST_CASE("perfect scorer gives AP 1 on every seed") {
  for (auto method : {ExperimentMethod::kEnsemble, ExperimentMethod::kActive}) {
    auto c = base_config(method);
    c.seed_count = 3;
    c.scorer = perfect_scorer;
    const auto r = run_experiment(noisy(), c);
    REQUIRE(r.runs.size() == 3);
    for (const auto& run : r.runs) CHECK(run.report.ap == 1.0);
    CHECK(r.aggregate.mean == 1.0);
    CHECK(r.aggregate.std == 0.0);
  }
}

TEST_CASE("every method runs and produces a complete report") {
  for (auto method : {ExperimentMethod::kCu, ExperimentMethod::kDm,
                      ExperimentMethod::kAumProb, ExperimentMethod::kAumLogit,
                      ExperimentMethod::kEnsemble, ExperimentMethod::kActive}) {
    const auto r = run_experiment(noisy(), base_config(method));
    CHECK(r.method == to_string(method));
    REQUIRE(r.runs.size() == 2);
    CHECK(r.runs[0].seed == 0);
    CHECK(r.runs[1].seed == 1);
    for (const auto& run : r.runs) {
      CHECK(run.report.positives == 12);
      CHECK(run.report.total == 120);
      CHECK(run.report.pr_curve.size() == 120);
      CHECK(run.ranking.size() == 120);
      CHECK(run.report.ap > 0.1);
    }
    if (method == ExperimentMethod::kActive) {
      CHECK(r.runs[0].report.per_iteration_yield.size() == 3);
    }
  }
}

TEST_CASE("ensemble equals the active loop without iterations") {
  auto ens = base_config(ExperimentMethod::kEnsemble);
  auto act = base_config(ExperimentMethod::kActive);
  act.loop.stop.max_iterations = 0;
  const auto a = run_experiment(noisy(), ens);
  const auto b = run_experiment(noisy(), act);
  for (int i = 0; i < 2; ++i) {
    CHECK(a.runs[i].ranking == b.runs[i].ranking);
    CHECK(a.runs[i].report.ap == b.runs[i].report.ap);
  }
}

TEST_CASE("experiments are reproducible and seed dependent") {
  const auto c = base_config(ExperimentMethod::kActive);
  const auto a = run_experiment(noisy(), c);
  const auto b = run_experiment(noisy(), c);
  CHECK(aggregate_to_json(a) == aggregate_to_json(b));
  CHECK(a.runs[0].ranking == b.runs[0].ranking);
  auto shifted = c;
  shifted.seed_base = 10;
  CHECK(run_experiment(noisy(), shifted).runs[0].seed == 10);
}

TEST_CASE("outputs") {
  auto c = base_config(ExperimentMethod::kDm);
  c.seed_count = 1;
  const auto r = run_experiment(noisy(), c);
  const auto j = report_to_json(r.runs[0].report);
  CHECK(j["method"] == "dm");
  CHECK(j["positives"] == 12);
  const auto agg = aggregate_to_json(r);
  CHECK(agg["std_kind"] == "population");
  CHECK(agg["seeds"].size() == 1);
  std::ostringstream pr;
  write_pr_csv(r.runs[0].report, pr);
  CHECK(pr.str().starts_with("rank,recall,precision\n1,"));
  const auto table = format_table(std::span(&r, 1));
  CHECK(table.find("dm") != std::string::npos);
  CHECK(table.find("±") != std::string::npos);
}

TEST_CASE("experiment preconditions") {
  auto c = base_config(ExperimentMethod::kEnsemble);
  CHECK_THROWS_AS(run_experiment(testing::two_class_dataset(20), c), ValidationError);
  c.seed_count = 0;
  CHECK_THROWS_AS(run_experiment(noisy(), c), ValidationError);
  CHECK_THROWS_AS(parse_experiment_method("magic"), ValidationError);
}

}  // namespace
}  // namespace cleanloop
