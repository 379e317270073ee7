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

#ifndef CLEANLOOP_TRAINER_HPP_
#define CLEANLOOP_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cleanloop/dataset.hpp"

namespace cleanloop {

struct FoldAssignment {
  int fold_count = 0;
  std::vector<int> fold_of;  // indexed by instance position

  std::vector<std::size_t> members(int fold) const;
};

// Shuffled round-robin over instances; all tokens of a sequence share a fold.
// Throws ValidationError unless 2 <= folds <= instance count.
FoldAssignment assign_folds(const Dataset& dataset, int folds,
                            std::uint64_t seed);

struct TrainerConfig {
  int epochs = 10;
  double learning_rate = 0.1;
  int batch_size = 32;
  double l2 = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

// Maps instances onto flat annotation-unit indices.
struct UnitLayout {
  std::vector<std::string> instance_ids;
  std::vector<std::size_t> offsets;  // instance_ids.size() + 1 entries

  static UnitLayout of(const Dataset& dataset);
  std::size_t instance_count() const { return instance_ids.size(); }
  std::size_t unit_count() const { return offsets.empty() ? 0 : offsets.back(); }

  friend bool operator==(const UnitLayout&, const UnitLayout&) = default;
};

// What a trained model says about one annotation unit at one epoch end.
struct UnitRecord {
  double assigned_prob = 0.0;
  double max_other_prob = 0.0;
  double assigned_logit = 0.0;
  double max_other_logit = 0.0;
  double loss = 0.0;  // cross-entropy of the assigned label

  friend bool operator==(const UnitRecord&, const UnitRecord&) = default;
};

enum class Partition { kTrain, kTest };

// Receives the full predictive distribution behind every recorded snapshot.
using SnapshotObserver = std::function<void(
    int fold, int epoch, std::size_t unit, std::span<const double> probs)>;

// Multinomial logistic regression over hashed sparse features. Weights are
// held as scale * raw so that L2 decay costs O(1) per step.
class LinearModel {
 public:
  struct Example {
    const SparseVector* features;
    int label;
  };

  // Gradient of the mean cross-entropy over a batch (no L2 term). Rows are
  // laid out feature-major: rows[k * label_count + l] belongs to features[k].
  struct Gradient {
    std::vector<std::uint32_t> features;
    std::vector<double> rows;
    std::vector<double> bias;
    double loss = 0.0;
  };

  LinearModel(std::uint32_t dim, int label_count);

  std::uint32_t dim() const { return dim_; }
  int label_count() const { return label_count_; }

  double weight(std::uint32_t feature, int label) const;
  void set_weight(std::uint32_t feature, int label, double value);
  double bias(int label) const { return bias_[static_cast<std::size_t>(label)]; }
  void set_bias(int label, double value) {
    bias_[static_cast<std::size_t>(label)] = value;
  }

  void logits(const SparseVector& x, std::span<double> out) const;
  // Max-subtracted softmax; `logit_buf` and `out` hold label_count values.
  void probabilities(const SparseVector& x, std::span<double> logit_buf,
                     std::span<double> out) const;

  Gradient cross_entropy_gradient(std::span<const Example> batch) const;
  // Mean cross-entropy + (l2 / 2) * ||W||^2. The bias is not regularized.
  double objective(std::span<const Example> batch, double l2) const;
  // W <- (1 - lr * l2) W - lr * g_W;  b <- b - lr * g_b.
  void apply_step(const Gradient& gradient, double learning_rate, double l2);

 private:
  void renormalize();

  std::uint32_t dim_;
  int label_count_;
  std::vector<double> raw_;
  std::vector<double> bias_;
  double scale_ = 1.0;
};

// Per-epoch records of one fold's model over every unit of the dataset.
struct FoldDynamics {
  int fold = 0;
  int epochs = 0;
  std::vector<UnitRecord> records;  // [epoch][unit]
  std::vector<double> test_loss;    // per epoch, mean over test units
};

// Cross-validation training dynamics for every fold, epoch and unit.
struct DynamicsTensor {
  UnitLayout layout;
  FoldAssignment assignment;
  int epochs = 0;
  std::vector<UnitRecord> records;             // [fold][epoch][unit]
  std::vector<std::vector<double>> test_loss;  // [fold][epoch]

  int fold_count() const { return assignment.fold_count; }
  // `epoch` is 0-based here.
  const UnitRecord& at(int fold, int epoch, std::size_t unit) const {
    return records[(static_cast<std::size_t>(fold) * epochs + epoch) *
                       layout.unit_count() +
                   unit];
  }
  int test_fold_of_unit(std::size_t unit) const;
  Partition partition(int fold, std::size_t unit) const {
    return test_fold_of_unit(unit) == fold ? Partition::kTest
                                           : Partition::kTrain;
  }
  // Throws ValidationError on any completeness or shape violation.
  void validate() const;
};

// Dynamics of one run trained on every instance (used by the single-run
// AUM and DM baselines).
struct SingleRunDynamics {
  UnitLayout layout;
  int epochs = 0;
  std::vector<UnitRecord> records;  // [epoch][unit]

  const UnitRecord& at(int epoch, std::size_t unit) const {
    return records[static_cast<std::size_t>(epoch) * layout.unit_count() + unit];
  }
};

// Trains on the fold's train partition and snapshots both partitions at the
// end of every epoch.
FoldDynamics train_fold(const Dataset& dataset, int fold,
                        const FoldAssignment& assignment,
                        const TrainerConfig& config,
                        const SnapshotObserver& observer = {});

SingleRunDynamics train_full_run(const Dataset& dataset,
                                 const TrainerConfig& config,
                                 const SnapshotObserver& observer = {});

struct CrossValidateOptions {
  // 0 picks CLEANLOOP_THREADS or the hardware concurrency.
  int threads = 0;
  SnapshotObserver observer;  // must be thread-safe when threads > 1
  std::function<void(int folds_done, int folds_total)> progress;
};

// Fold assignment derives from (dataset.seed, config.seed). The result does
// not depend on the thread count.
DynamicsTensor cross_validate(const Dataset& dataset, int folds,
                              const TrainerConfig& config,
                              const CrossValidateOptions& options = {});

// 1-based epoch with the lowest mean test loss; ties go to the earliest.
int best_epoch_by_test_loss(const DynamicsTensor& tensor, int fold);

int default_thread_count();

}  // namespace cleanloop

#endif  // CLEANLOOP_TRAINER_HPP_
