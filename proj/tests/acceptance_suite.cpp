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

// Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cleanloop/active_loop.hpp"
#include "cleanloop/dataset.hpp"
#include "cleanloop/eval.hpp"
#include "cleanloop/experiment.hpp"
#include "cleanloop/scoring.hpp"
#include "cleanloop/synthetic.hpp"
#include "cleanloop/trainer.hpp"
#include "oracles/ap_oracle.hpp"
#include "oracles/scoring_oracle.hpp"
#include "test_support.hpp"

namespace cleanloop {
namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool condition, const std::string& what) {
    if (!condition && pass) {
      pass = false;
      detail = what;
    }
  }
};

using Criterion = std::function<Outcome()>;

struct Entry {
  int number;
  std::string name;
  double limit_seconds;
  Criterion run;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c);
  return buf;
}

// 1. Scorers against the brute-force oracle on random tensors.
Outcome scorer_oracle() {
  Outcome out;
  Rng rng(20240601);
  std::size_t comparisons = 0;
  const std::pair<ScoreMethod, oracle::Base> bases[] = {
      {ScoreMethod::kAumProb, oracle::Base::kAumProb},
      {ScoreMethod::kAumLogit, oracle::Base::kAumLogit},
      {ScoreMethod::kDm, oracle::Base::kDm}};
  for (int trial = 0; trial < 100; ++trial) {
    const int folds = 2 + static_cast<int>(rng.uniform_below(3));
    const int epochs = 1 + static_cast<int>(rng.uniform_below(5));
    const int max_tokens = trial % 4 == 3 ? 3 : 1;
    // At most 100 units: max_tokens * instances <= 100.
    const auto cap = static_cast<std::uint64_t>(100 / max_tokens);
    const auto instances = static_cast<std::size_t>(folds) +
                           rng.uniform_below(cap - static_cast<std::uint64_t>(folds) + 1);
    const auto t = testing::random_tensor(rng, instances, folds, epochs, max_tokens);
    out.require(t.layout.unit_count() <= 100, "tensor exceeds 100 units");

    for (const auto& [method, base] : bases) {
      for (int f = 0; f < folds; ++f) {
        for (std::size_t u = 0; u < t.layout.unit_count(); ++u) {
          ++comparisons;
          out.require(oracle::close(fold_base_score(t, method, f, u),
                                    oracle::fold_score(t, base, f, u), 1e-9),
                      "per-fold " + std::string(to_string(method)) + " mismatch");
        }
      }
      for (const auto& [train, test] :
           {std::pair{true, true}, std::pair{true, false}, std::pair{false, true}}) {
        const auto got = ensemble_scores(t, {train, test, method}).scores;
        const auto want = oracle::ensemble(t, base, train, test);
        for (std::size_t i = 0; i < got.size(); ++i) {
          ++comparisons;
          out.require(oracle::close(got[i], want[i], 1e-9),
                      "ensemble mismatch on trial " + std::to_string(trial));
        }
      }
      SingleRunDynamics run;
      run.layout = t.layout;
      run.epochs = t.epochs;
      run.records.assign(t.records.begin(),
                         t.records.begin() + static_cast<std::ptrdiff_t>(
                                                 t.epochs * t.layout.unit_count()));
      const auto got = single_run_scores(run, method).scores;
      const auto want = oracle::single_run(run, base);
      for (std::size_t i = 0; i < got.size(); ++i) {
        ++comparisons;
        out.require(oracle::close(got[i], want[i], 1e-9),
                    std::string(to_string(method)) + " mismatch");
      }
    }
    const auto got_cu = cu(t).scores;
    const auto want_cu = oracle::cu(t);
    for (std::size_t i = 0; i < got_cu.size(); ++i) {
      ++comparisons;
      out.require(oracle::close(got_cu[i], want_cu[i], 1e-9), "cu mismatch");
    }
  }
  if (out.pass) out.detail = std::to_string(comparisons) + " comparisons, rel tol 1e-9";
  return out;
}

// 2. Average precision against cutoff enumeration.
Outcome ap_oracle() {
  Outcome out;
  Rng rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 1 + rng.uniform_below(1000);
    ScoreVector v;
    std::vector<bool> mask;
    const double prevalence = 0.02 + 0.5 * rng.uniform01();
    for (std::size_t i = 0; i < n; ++i) {
      v.ids.push_back(testing::numbered_id("r", i));
      v.scores.push_back(trial % 4 == 0 ? static_cast<double>(rng.uniform_below(6))
                                        : rng.uniform01());
      mask.push_back(rng.uniform01() < prevalence);
    }
    mask[rng.uniform_below(n)] = true;
    std::vector<bool> ranked;
    for (const auto i : oracle::ranking(v.scores, v.ids)) ranked.push_back(mask[i]);
    const double diff =
        std::abs(average_precision(v, mask) - oracle::enumerated_ap(ranked));
    worst = std::max(worst, diff);

    // Perfect ranking: positives strictly above negatives.
    ScoreVector perfect = v;
    for (std::size_t i = 0; i < n; ++i) perfect.scores[i] = mask[i] ? 1.0 : 0.0;
    out.require(average_precision(perfect, mask) == 1.0,
                "perfect ranking AP != 1.0 exactly");
  }
  out.require(worst <= 1e-12, fmt("max |AP - oracle| = %.3g", worst));
  if (out.pass) out.detail = fmt("1000 vectors, max deviation %.3g", worst);
  return out;
}

// 3. Loop completeness with the simulated annotator.
Outcome loop_completeness() {
  Outcome out;
  ClusterSpec spec;
  spec.instances = 120;
  spec.seed = 3;
  const Dataset noisy = perturb_labels(make_cluster_classification(spec), 0.05, 1);
  LoopConfig config;  // C = 10, E = 10, k = 50, no threshold
  const auto result = run_loop(noisy, config, simulated_annotator);
  const auto& st = result.state;
  out.require(st.iteration == 3, "iterations = " + std::to_string(st.iteration));
  std::map<std::string, int> times;
  std::vector<std::string> order;
  for (const auto& r : st.query_log) {
    for (const auto& id : r.queried) {
      ++times[id];
      order.push_back(id);
    }
  }
  out.require(times.size() == 120, "not every instance was queried");
  for (const auto& [id, n] : times) {
    out.require(n == 1, "instance " + id + " queried " + std::to_string(n) + " times");
  }
  for (const auto& inst : st.dataset.instances) {
    out.require(inst.observed == *inst.gold, "instance " + inst.id + " differs from gold");
  }
  out.require(std::equal(order.begin(), order.end(), result.final_ranking.begin()),
              "final ranking prefix differs from query order");
  if (out.pass) {
    out.detail = "3 iterations (" + std::to_string(st.query_log[0].queried.size()) +
                 "+" + std::to_string(st.query_log[1].queried.size()) + "+" +
                 std::to_string(st.query_log[2].queried.size()) + "), dataset == gold";
  }
  return out;
}

// Shared by criteria 4 and 5.
const Dataset& cluster_dataset() {
  static const Dataset d = [] {
    ClusterSpec spec;  // 2000 instances, 2 classes
    return perturb_labels(make_cluster_classification(spec), 0.05, 42);
  }();
  return d;
}

ExperimentConfig protocol(ExperimentMethod method) {
  ExperimentConfig c;
  c.method = method;
  c.seed_count = 3;
  c.loop.folds = 5;
  c.loop.trainer.epochs = 10;
  c.loop.k = 50;
  return c;
}

std::map<std::string, ExperimentResult>& result_cache() {
  static std::map<std::string, ExperimentResult> cache;
  return cache;
}

const ExperimentResult& cached_run(const std::string& key, const ExperimentConfig& c) {
  auto& cache = result_cache();
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, run_experiment(cluster_dataset(), c)).first;
  return it->second;
}

// 4. End-to-end directional check.
Outcome end_to_end() {
  Outcome out;
  const auto& d = cluster_dataset();
  const auto mask = error_mask(d);
  const double prevalence =
      static_cast<double>(std::count(mask.begin(), mask.end(), true)) /
      static_cast<double>(mask.size());
  out.require(std::abs(prevalence - 0.05) < 1e-12, "prevalence is not 0.05");

  auto no_active = protocol(ExperimentMethod::kActive);
  no_active.loop.stop.max_iterations = 0;
  const auto& ensemble = cached_run("ensemble", protocol(ExperimentMethod::kEnsemble));
  const auto& active = cached_run("full", protocol(ExperimentMethod::kActive));
  const auto& passive = cached_run("w/o active", no_active);

  out.require(ensemble.aggregate.mean >= 0.90,
              fmt("ensemble mean AP %.4f < 0.90", ensemble.aggregate.mean));
  out.require(active.aggregate.mean >= passive.aggregate.mean - 0.005,
              fmt("active %.4f < non-active %.4f - 0.005", active.aggregate.mean,
                  passive.aggregate.mean));
  std::string summary;
  for (const auto method : {ExperimentMethod::kCu, ExperimentMethod::kDm,
                            ExperimentMethod::kAumProb, ExperimentMethod::kAumLogit}) {
    const auto& r = cached_run(std::string(to_string(method)), protocol(method));
    // "Far exceeds" is taken as at least five times the prevalence.
    out.require(r.aggregate.mean >= 5 * prevalence,
                r.method + fmt(" mean AP %.4f not far above prevalence", r.aggregate.mean));
    summary += r.method + fmt(" %.3f, ", r.aggregate.mean);
  }
  out.require(ensemble.aggregate.mean >= 5 * prevalence, "ensemble near prevalence");
  if (out.pass) {
    out.detail = fmt("ensemble %.3f, active %.3f, w/o active %.3f, ",
                     ensemble.aggregate.mean, active.aggregate.mean,
                     passive.aggregate.mean) +
                 summary + "prevalence 0.05";
  }
  return out;
}

// Every file the CLI writes for a run, concatenated.
std::string output_bundle(const ExperimentResult& r) {
  std::ostringstream out;
  out << aggregate_to_json(r).dump(2) << '\n';
  for (const auto& run : r.runs) {
    out << report_to_json(run.report).dump(2) << '\n';
    write_scores_csv(run.scores, out);
    write_pr_csv(run.report, out);
  }
  return out.str();
}

// 5. Ablation configurations execute, differ and reproduce.
Outcome ablations() {
  Outcome out;
  std::vector<std::pair<std::string, ExperimentConfig>> configs;
  configs.emplace_back("full", protocol(ExperimentMethod::kActive));
  auto no_active = protocol(ExperimentMethod::kActive);
  no_active.loop.stop.max_iterations = 0;
  configs.emplace_back("w/o active", no_active);
  auto no_test = protocol(ExperimentMethod::kActive);
  no_test.loop.ensemble.use_test_ensembling = false;
  configs.emplace_back("w/o test ens.", no_test);
  auto no_train = protocol(ExperimentMethod::kActive);
  no_train.loop.ensemble.use_train_ensembling = false;
  configs.emplace_back("w/o train ens.", no_train);
  for (const int k : {100, 200}) {
    auto c = protocol(ExperimentMethod::kActive);
    c.loop.k = k;
    configs.emplace_back("k = " + std::to_string(k), c);
  }

  std::map<std::string, std::string> bundles;
  std::string summary;
  for (const auto& [name, config] : configs) {
    const auto& first = cached_run(name, config);
    const auto again = run_experiment(cluster_dataset(), config);
    const auto bundle = output_bundle(first);
    out.require(bundle == output_bundle(again), name + " is not byte-reproducible");
    for (const auto& [other, other_bundle] : bundles) {
      out.require(bundle != other_bundle, name + " and " + other + " produced identical reports");
    }
    bundles.emplace(name, bundle);
    summary += name + fmt(" %.3f; ", first.aggregate.mean);
  }
  if (out.pass) out.detail = "k=50 is the full row; " + summary;
  return out;
}

// 6. Sequence protocol.
Outcome sequence_protocol() {
  Outcome out;
  TaggingSpec spec;
  spec.sequences = 120;
  spec.min_length = 10;
  spec.max_length = 10;
  spec.seed = 5;
  Dataset d = make_tagging_dataset(spec);
  for (auto& inst : d.instances) inst.gold = inst.observed;
  auto& target = d.instances[17];
  out.require(target.unit_count() == 10, "sequence length is not 10");
  target.observed[4] = (target.observed[4] + 1) % static_cast<int>(d.label_space.size());

  const auto mask = error_mask(d);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out.require(mask[i] == (i == 17), "error mask wrong for instance " + d.instances[i].id);
  }

  TrainerConfig config;
  config.epochs = 5;
  const auto t = cross_validate(d, 5, config);
  const auto scores = ensemble_scores(t, {});
  const auto cu_scores = cu(t);
  const auto best = best_epoch_by_test_loss(t, t.assignment.fold_of[17]) - 1;
  for (std::size_t i = 0; i < d.instances.size(); ++i) {
    std::vector<double> token_scores;
    double cu_max = -2.0;
    for (auto u = t.layout.offsets[i]; u < t.layout.offsets[i + 1]; ++u) {
      std::vector<double> per_fold;
      double train = 0.0, test = 0.0;
      for (int f = 0; f < t.fold_count(); ++f) {
        const double s = fold_base_score(t, ScoreMethod::kAumProb, f, u);
        if (f == t.assignment.fold_of[i]) {
          test = s;
        } else {
          train += s;
        }
      }
      token_scores.push_back(0.5 * (train / (t.fold_count() - 1) + test));
      if (i == 17) {
        cu_max = std::max(cu_max, -t.at(t.assignment.fold_of[i], best, u).assigned_prob);
      }
    }
    const double max_token = *std::max_element(token_scores.begin(), token_scores.end());
    out.require(scores.scores[i] == max_token,
                "instance score != max token score for " + d.instances[i].id);
    if (i == 17) {
      out.require(cu_scores.scores[i] == cu_max, "cu score != max token score");
    }
  }
  const auto rank = rank_ids(scores);
  const auto pos = std::find(rank.begin(), rank.end(), target.id) - rank.begin();
  if (out.pass) {
    out.detail = "flagged; score == max over 10 tokens exactly; ranked " +
                 std::to_string(pos + 1) + " of 120";
  }
  return out;
}

// 7. Trainer soundness.
Outcome trainer_soundness() {
  Outcome out;
  std::mutex mu;
  double worst_norm = 0.0;
  std::size_t snapshots = 0;
  CrossValidateOptions options;
  options.observer = [&](int, int, std::size_t, std::span<const double> p) {
    double sum = 0.0;
    for (const double v : p) sum += v;
    std::lock_guard lock(mu);
    ++snapshots;
    worst_norm = std::max(worst_norm, std::abs(sum - 1.0));
  };
  TrainerConfig config;
  config.epochs = 5;
  ClusterSpec cls;
  cls.instances = 400;
  cls.classes = 3;
  cross_validate(perturb_labels(make_cluster_classification(cls), 0.05, 1), 4, config,
                 options);
  TaggingSpec tags;
  tags.sequences = 60;
  cross_validate(make_tagging_dataset(tags), 3, config, options);
  SnapshotObserver full_run_observer = options.observer;
  train_full_run(make_tagging_dataset(tags), config, full_run_observer);
  out.require(worst_norm <= 1e-9, fmt("softmax deviates by %.3g", worst_norm));

  Rng rng(31337);
  const int labels = 3;
  double worst_grad = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    LinearModel model(16, labels);
    for (std::uint32_t f = 0; f < 10; ++f) {
      for (int l = 0; l < labels; ++l) model.set_weight(f, l, 2 * rng.uniform01() - 1);
    }
    for (int l = 0; l < labels; ++l) model.set_bias(l, rng.uniform01() - 0.5);
    std::vector<SparseVector> xs(8);
    std::vector<LinearModel::Example> batch;
    for (auto& x : xs) {
      for (std::uint32_t f = 0; f < 10; ++f) x.push_back({f, 2 * rng.uniform01()});
      batch.push_back({&x, static_cast<int>(rng.uniform_below(labels))});
    }
    const auto g = model.cross_entropy_gradient(batch);
    const double h = 1e-5;
    for (std::size_t k = 0; k < g.features.size(); ++k) {
      for (int l = 0; l < labels; ++l) {
        const auto f = g.features[k];
        const double w = model.weight(f, l);
        model.set_weight(f, l, w + h);
        const double up = model.objective(batch, 0.0);
        model.set_weight(f, l, w - h);
        const double down = model.objective(batch, 0.0);
        model.set_weight(f, l, w);
        const double numeric = (up - down) / (2 * h);
        const double analytic = g.rows[k * labels + static_cast<std::size_t>(l)];
        const double rel = std::abs(analytic - numeric) /
                           std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        worst_grad = std::max(worst_grad, rel);
      }
    }
  }
  out.require(worst_grad <= 1e-4, fmt("gradient relative error %.3g", worst_grad));
  if (out.pass) {
    out.detail = std::to_string(snapshots) + " snapshots, max |sum-1| " +
                 fmt("%.2g; max gradient rel error %.2g", worst_norm, worst_grad);
  }
  return out;
}

}  // namespace
}  // namespace cleanloop

int main() {
  using namespace cleanloop;
  const std::vector<Entry> criteria{
      {1, "scorer oracle equivalence", 10, scorer_oracle},
      {2, "AP oracle equivalence", 5, ap_oracle},
      {3, "loop completeness", 120, loop_completeness},
      {4, "end-to-end directional check", 300, end_to_end},
      {5, "ablation machinery", 0, ablations},
      {6, "sequence protocol", 0, sequence_protocol},
      {7, "trainer soundness", 0, trainer_soundness},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.pass && c.limit_seconds > 0 && seconds > c.limit_seconds) {
      outcome.pass = false;
      outcome.detail = fmt("took %.1f s, limit %.0f s", seconds, c.limit_seconds);
    }
    failures += outcome.pass ? 0 : 1;
    std::printf("%s criterion %d: %s (%.2f s) %s\n", outcome.pass ? "PASS" : "FAIL",
                c.number, c.name.c_str(), seconds, outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n",
              static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
