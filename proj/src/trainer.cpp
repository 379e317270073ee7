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

#include "cleanloop/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "cleanloop/error.hpp"
#include "cleanloop/rng.hpp"

namespace cleanloop {

std::vector<std::size_t> FoldAssignment::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

FoldAssignment assign_folds(const Dataset& dataset, int folds,
                            std::uint64_t seed) {
  const auto n = dataset.instances.size();
  if (folds < 2 || static_cast<std::size_t>(folds) > n) {
    throw ValidationError("fold count " + std::to_string(folds) +
                          " must lie in [2, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(dataset.seed, seed));
  rng.shuffle(std::span<std::size_t>(order));
  FoldAssignment assignment;
  assignment.fold_count = folds;
  assignment.fold_of.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    assignment.fold_of[order[j]] = static_cast<int>(j % folds);
  }
  return assignment;
}

void TrainerConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning rate must be a finite value >= 0");
  }
  if (!(l2 >= 0.0) || !std::isfinite(l2)) {
    throw ValidationError("l2 must be a finite value >= 0");
  }
  if (learning_rate * l2 >= 1.0) {
    throw ValidationError("learning_rate * l2 must be < 1");
  }
}

UnitLayout UnitLayout::of(const Dataset& dataset) {
  UnitLayout layout;
  layout.offsets.reserve(dataset.instances.size() + 1);
  layout.offsets.push_back(0);
  for (const auto& instance : dataset.instances) {
    layout.instance_ids.push_back(instance.id);
    layout.offsets.push_back(layout.offsets.back() + instance.unit_count());
  }
  return layout;
}

LinearModel::LinearModel(std::uint32_t dim, int label_count)
    : dim_(dim),
      label_count_(label_count),
      raw_(static_cast<std::size_t>(dim) * label_count, 0.0),
      bias_(static_cast<std::size_t>(label_count), 0.0) {}

double LinearModel::weight(std::uint32_t feature, int label) const {
  return scale_ *
         raw_[static_cast<std::size_t>(feature) * label_count_ + label];
}

void LinearModel::set_weight(std::uint32_t feature, int label, double value) {
  raw_[static_cast<std::size_t>(feature) * label_count_ + label] =
      value / scale_;
}

void LinearModel::logits(const SparseVector& x, std::span<double> out) const {
  std::copy(bias_.begin(), bias_.end(), out.begin());
  const auto labels = static_cast<std::size_t>(label_count_);
  for (const auto& [feature, value] : x) {
    const double* row = &raw_[static_cast<std::size_t>(feature) * labels];
    const double v = value * scale_;
    for (std::size_t l = 0; l < labels; ++l) out[l] += v * row[l];
  }
}

void LinearModel::probabilities(const SparseVector& x,
                                std::span<double> logit_buf,
                                std::span<double> out) const {
  logits(x, logit_buf);
  const double top = *std::max_element(logit_buf.begin(), logit_buf.end());
  double total = 0.0;
  for (std::size_t l = 0; l < out.size(); ++l) {
    out[l] = std::exp(logit_buf[l] - top);
    total += out[l];
  }
  for (auto& p : out) p /= total;
}

LinearModel::Gradient LinearModel::cross_entropy_gradient(
    std::span<const Example> batch) const {
  Gradient gradient;
  const auto labels = static_cast<std::size_t>(label_count_);
  gradient.bias.assign(labels, 0.0);
  if (batch.empty()) return gradient;
  std::unordered_map<std::uint32_t, std::size_t> slot;
  std::vector<double> z(labels);
  std::vector<double> p(labels);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& example : batch) {
    logits(*example.features, z);
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t l = 0; l < labels; ++l) {
      p[l] = std::exp(z[l] - top);
      total += p[l];
    }
    const auto y = static_cast<std::size_t>(example.label);
    gradient.loss += (std::log(total) - (z[y] - top)) * inv;
    for (std::size_t l = 0; l < labels; ++l) {
      p[l] = (p[l] / total - (l == y ? 1.0 : 0.0)) * inv;
      gradient.bias[l] += p[l];
    }
    for (const auto& [feature, value] : *example.features) {
      auto [it, inserted] = slot.try_emplace(feature, gradient.features.size());
      if (inserted) {
        gradient.features.push_back(feature);
        gradient.rows.resize(gradient.rows.size() + labels, 0.0);
      }
      double* row = &gradient.rows[it->second * labels];
      for (std::size_t l = 0; l < labels; ++l) row[l] += value * p[l];
    }
  }
  return gradient;
}

double LinearModel::objective(std::span<const Example> batch,
                              double l2) const {
  double penalty = 0.0;
  for (const double w : raw_) penalty += w * w;
  penalty *= scale_ * scale_;
  return cross_entropy_gradient(batch).loss + 0.5 * l2 * penalty;
}

void LinearModel::apply_step(const Gradient& gradient, double learning_rate,
                             double l2) {
  const auto labels = static_cast<std::size_t>(label_count_);
  scale_ *= 1.0 - learning_rate * l2;
  if (scale_ < 1e-6) renormalize();
  const double step = learning_rate / scale_;
  for (std::size_t k = 0; k < gradient.features.size(); ++k) {
    double* row = &raw_[static_cast<std::size_t>(gradient.features[k]) * labels];
    const double* g = &gradient.rows[k * labels];
    for (std::size_t l = 0; l < labels; ++l) row[l] -= step * g[l];
  }
  for (std::size_t l = 0; l < labels; ++l) {
    bias_[l] -= learning_rate * gradient.bias[l];
  }
}

void LinearModel::renormalize() {
  for (auto& w : raw_) w *= scale_;
  scale_ = 1.0;
}

namespace {

struct UnitView {
  const SparseVector* features;
  int label;
};

std::vector<UnitView> flatten_units(const Dataset& dataset) {
  std::vector<UnitView> units;
  units.reserve(dataset.annotation_count());
  for (const auto& instance : dataset.instances) {
    for (std::size_t u = 0; u < instance.unit_count(); ++u) {
      units.push_back({&instance.features[u], instance.observed[u]});
    }
  }
  return units;
}

// Trains on units whose flag in `is_train` is set; snapshots every unit at
// each epoch end. Returns records laid out [epoch][unit].
std::vector<UnitRecord> train_and_record(const Dataset& dataset,
                                         const std::vector<bool>& is_train,
                                         const TrainerConfig& config,
                                         std::uint64_t stream_seed, int fold,
                                         const SnapshotObserver& observer) {
  config.validate();
  const auto units = flatten_units(dataset);
  const int label_count = static_cast<int>(dataset.label_space.size());
  const auto labels = static_cast<std::size_t>(label_count);
  LinearModel model(dataset.feature_dim, label_count);

  std::vector<LinearModel::Example> train;
  for (std::size_t u = 0; u < units.size(); ++u) {
    if (is_train[u]) train.push_back({units[u].features, units[u].label});
  }

  Rng rng(stream_seed);
  std::vector<UnitRecord> records;
  records.reserve(units.size() * static_cast<std::size_t>(config.epochs));
  std::vector<double> z(labels);
  std::vector<double> p(labels);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<LinearModel::Example>(train));
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const auto size = std::min(batch, train.size() - start);
      const auto gradient = model.cross_entropy_gradient(
          std::span<const LinearModel::Example>(train).subspan(start, size));
      model.apply_step(gradient, config.learning_rate, config.l2);
    }
    for (std::size_t u = 0; u < units.size(); ++u) {
      model.probabilities(*units[u].features, z, p);
      const auto y = static_cast<std::size_t>(units[u].label);
      UnitRecord record;
      record.assigned_prob = p[y];
      record.assigned_logit = z[y];
      record.max_other_prob = 0.0;
      record.max_other_logit = -std::numeric_limits<double>::infinity();
      double top = z[0];
      for (std::size_t l = 0; l < labels; ++l) {
        top = std::max(top, z[l]);
        if (l == y) continue;
        record.max_other_prob = std::max(record.max_other_prob, p[l]);
        record.max_other_logit = std::max(record.max_other_logit, z[l]);
      }
      double total = 0.0;
      for (std::size_t l = 0; l < labels; ++l) total += std::exp(z[l] - top);
      record.loss = std::log(total) - (z[y] - top);
      if (!std::isfinite(record.loss) || !std::isfinite(record.assigned_logit)) {
        throw Error("non-finite model output at epoch " + std::to_string(epoch));
      }
      records.push_back(record);
      if (observer) observer(fold, epoch, u, p);
    }
  }
  return records;
}

}  // namespace

FoldDynamics train_fold(const Dataset& dataset, int fold,
                        const FoldAssignment& assignment,
                        const TrainerConfig& config,
                        const SnapshotObserver& observer) {
  if (fold < 0 || fold >= assignment.fold_count ||
      assignment.fold_of.size() != dataset.instances.size()) {
    throw ValidationError("invalid fold index " + std::to_string(fold));
  }
  const auto layout = UnitLayout::of(dataset);
  std::vector<bool> is_train(layout.unit_count());
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
    for (auto u = layout.offsets[i]; u < layout.offsets[i + 1]; ++u) {
      is_train[u] = assignment.fold_of[i] != fold;
    }
  }
  FoldDynamics out;
  out.fold = fold;
  out.epochs = config.epochs;
  out.records = train_and_record(dataset, is_train, config,
                                 mix_seed(config.seed, 1 + fold), fold,
                                 observer);
  const auto units = layout.unit_count();
  for (int e = 0; e < config.epochs; ++e) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t u = 0; u < units; ++u) {
      if (is_train[u]) continue;
      sum += out.records[static_cast<std::size_t>(e) * units + u].loss;
      ++count;
    }
    out.test_loss.push_back(count == 0 ? 0.0 : sum / static_cast<double>(count));
  }
  return out;
}

SingleRunDynamics train_full_run(const Dataset& dataset,
                                 const TrainerConfig& config,
                                 const SnapshotObserver& observer) {
  SingleRunDynamics out;
  out.layout = UnitLayout::of(dataset);
  out.epochs = config.epochs;
  const std::vector<bool> all(out.layout.unit_count(), true);
  out.records = train_and_record(dataset, all, config, mix_seed(config.seed, 0),
                                 -1, observer);
  return out;
}

int default_thread_count() {
  if (const char* env = std::getenv("CLEANLOOP_THREADS")) {
    const int value = std::atoi(env);
    if (value > 0) return value;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

DynamicsTensor cross_validate(const Dataset& dataset, int folds,
                              const TrainerConfig& config,
                              const CrossValidateOptions& options) {
  config.validate();
  DynamicsTensor tensor;
  tensor.assignment = assign_folds(dataset, folds, config.seed);
  tensor.layout = UnitLayout::of(dataset);
  tensor.epochs = config.epochs;

  std::vector<FoldDynamics> results(static_cast<std::size_t>(folds));
  std::atomic<int> next{0};
  std::mutex mu;
  int done = 0;
  std::exception_ptr failure;
  const auto worker = [&] {
    for (int fold = next++; fold < folds; fold = next++) {
      try {
        results[static_cast<std::size_t>(fold)] =
            train_fold(dataset, fold, tensor.assignment, config,
                       options.observer);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = folds;
        return;
      }
      std::lock_guard lock(mu);
      ++done;
      if (options.progress) options.progress(done, folds);
    }
  };
  const int threads = std::clamp(
      options.threads > 0 ? options.threads : default_thread_count(), 1, folds);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  tensor.records.reserve(static_cast<std::size_t>(folds) * config.epochs *
                         tensor.layout.unit_count());
  for (auto& fold : results) {
    tensor.records.insert(tensor.records.end(), fold.records.begin(),
                          fold.records.end());
    tensor.test_loss.push_back(std::move(fold.test_loss));
  }
  return tensor;
}

int DynamicsTensor::test_fold_of_unit(std::size_t unit) const {
  const auto it =
      std::upper_bound(layout.offsets.begin(), layout.offsets.end(), unit);
  const auto instance = static_cast<std::size_t>(it - layout.offsets.begin()) - 1;
  return assignment.fold_of[instance];
}

void DynamicsTensor::validate() const {
  const auto n = layout.instance_count();
  if (layout.offsets.size() != n + 1) {
    throw ValidationError("dynamics layout offsets are inconsistent");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (layout.offsets[i + 1] <= layout.offsets[i]) {
      throw ValidationError("instance '" + layout.instance_ids[i] +
                            "' has no annotation units");
    }
  }
  if (assignment.fold_count < 2 || assignment.fold_of.size() != n) {
    throw ValidationError("dynamics fold assignment is incomplete");
  }
  for (const int fold : assignment.fold_of) {
    if (fold < 0 || fold >= assignment.fold_count) {
      throw ValidationError("fold index out of range in dynamics");
    }
  }
  if (epochs < 1) throw ValidationError("dynamics must hold >= 1 epoch");
  const auto expected = static_cast<std::size_t>(assignment.fold_count) *
                        static_cast<std::size_t>(epochs) * layout.unit_count();
  if (records.size() != expected) {
    throw ValidationError("dynamics tensor is incomplete: " +
                          std::to_string(records.size()) + " of " +
                          std::to_string(expected) + " records");
  }
  if (test_loss.size() != static_cast<std::size_t>(assignment.fold_count)) {
    throw ValidationError("dynamics tensor lacks per-fold test losses");
  }
  for (const auto& losses : test_loss) {
    if (losses.size() != static_cast<std::size_t>(epochs)) {
      throw ValidationError("per-fold test loss list must have one entry per epoch");
    }
  }
}

int best_epoch_by_test_loss(const DynamicsTensor& tensor, int fold) {
  const auto& losses = tensor.test_loss.at(static_cast<std::size_t>(fold));
  if (losses.empty()) throw ValidationError("fold has no test losses");
  // min_element returns the first minimum, which is the earliest epoch.
  return static_cast<int>(std::min_element(losses.begin(), losses.end()) -
                          losses.begin()) +
         1;
}

}  // namespace cleanloop
