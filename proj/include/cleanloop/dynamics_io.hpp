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

#ifndef CLEANLOOP_DYNAMICS_IO_HPP_
#define CLEANLOOP_DYNAMICS_IO_HPP_

#include <iosfwd>

#include "cleanloop/dataset.hpp"
#include "cleanloop/trainer.hpp"

namespace cleanloop {

// One JSON line per (fold, epoch, partition, unit):
//   {"fold":0,"epoch":1,"partition":"test","id":"q7","token":2,
//    "assigned_prob":...,"max_other_prob":...,"assigned_logit":...,
//    "max_other_logit":...,"loss":...}
// "token" is present for sequence datasets only; epochs are 1-based. This is
// the hand-off format for trainers other than the built-in one.
void write_dynamics(const DynamicsTensor& tensor, const Dataset& dataset,
                    std::ostream& out);

// Rebuilds a tensor for `dataset`. The fold assignment is inferred from the
// test-partition lines and per-fold test losses are recomputed from the
// per-unit losses. Throws ParseError or ValidationError if the records are
// incomplete, duplicated or inconsistent.
DynamicsTensor read_dynamics(std::istream& in, const Dataset& dataset);

}  // namespace cleanloop

#endif  // CLEANLOOP_DYNAMICS_IO_HPP_
