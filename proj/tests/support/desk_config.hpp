/*
 * Copyright 2026 The FACTS Slicer Authors.
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

#ifndef FACTS_TESTS_SUPPORT_DESK_CONFIG_HPP_
#define FACTS_TESTS_SUPPORT_DESK_CONFIG_HPP_

#include <cstdint>

#include "core/amplify.hpp"
#include "core/slicing.hpp"
#include "core/synthgen.hpp"

// The 6-class, 0.95-correlation synthetic setting and the training settings
// that learn it in well under a second. Mirrors configs/synthetic.json.
namespace facts::testing {

inline synth::SynthConfig DeskSynth(uint64_t seed) {
  synth::SynthConfig c;
  c.num_classes = 6;
  c.num_attributes = 6;
  c.correlation = 0.95;
  c.class_sizes = {1900, 1400, 1100, 900, 700, 500};
  c.core_separation = 8.0;
  c.spurious_separation = 8.0;
  c.spurious_ease = 2.0;
  c.noise_sigma = 1.0;
  c.embed_noise_sigma = 0.03;
  c.feature_dim = 16;
  c.embed_dim = 8;
  c.seed = seed;
  return c;
}

inline amplify::TrainHyper DeskHyper(uint64_t seed) {
  amplify::TrainHyper h;
  h.learning_rate = 0.01;
  h.momentum = 0.9;
  h.batch_size = 64;
  h.max_epochs = 40;
  h.arch = amplify::Arch::kLinear;
  h.seed = seed;
  return h;
}

inline constexpr double kErmLambda = 1e-4;

}  // namespace facts::testing

#endif  // FACTS_TESTS_SUPPORT_DESK_CONFIG_HPP_
