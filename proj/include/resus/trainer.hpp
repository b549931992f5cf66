// Copyright 2026 The Resus Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RESUS_TRAINER_HPP_
#define RESUS_TRAINER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "resus/nn.hpp"
#include "resus/tensor.hpp"

namespace resus {

struct DatasetSpec {
  int num_classes = 4;
  int channels = 3, height = 16, width = 16;
  int train_count = 1024, test_count = 512;
  double sigma = 0.3;
  std::uint64_t seed = 1;
};

struct Dataset {
  Tensor4 images;            // (N, c, h, w)
  std::vector<int> labels;   // length N
  int num_classes = 0;

  int count() const { return images.n(); }
};

// Deterministic class template k (bars / checker / blob / ring patterns),
// values in {-1, +1}, identical across channels. Distinct for k in [0, 10).
Tensor4 class_template(const DatasetSpec& spec, int k);

// Template-plus-Gaussian-noise splits; per-sample seeding, balanced labels.
struct DatasetPair {
  Dataset train, test;
};
DatasetPair generate_dataset(const DatasetSpec& spec);

struct TrainConfig {
  int epochs = 8;
  int batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

template <typename T>
struct LayerGradsT {
  Tensor4T<T> weight;
  std::vector<T> bias, bn_scale, bn_shift;
};

template <typename T>
struct GradientsT {
  std::vector<LayerGradsT<T>> layers;
};

using Gradients = GradientsT<float>;

// Mean softmax cross-entropy over the batch plus analytic gradients for
// every trainable tensor (manual backprop: conv2d, train-mode BN through
// batch statistics, ReLU, pooling, linear). BN normalizes with the current
// batch; running stats are updated only when update_running is set.
template <typename T>
double loss_and_gradients(const NetworkSpec& net, ParametersT<T>& params,
                          const Tensor4T<T>& batch, const std::vector<int>& labels,
                          GradientsT<T>* grads, bool update_running);

// Forward-only loss in batch-stat mode (finite differencing support).
template <typename T>
double batch_loss(const NetworkSpec& net, const ParametersT<T>& params,
                  const Tensor4T<T>& batch, const std::vector<int>& labels);

struct TrainResult {
  Parameters params;
  std::vector<double> epoch_losses;
};

// SGD with momentum. After the epochs, BN running statistics are reset and
// re-accumulated in one pass under the final weights, so eval-mode
// normalization matches what was actually trained.
TrainResult train(const NetworkSpec& net, const Parameters& initial,
                  const Dataset& data, const TrainConfig& cfg);

// Top-1 accuracy; argmax ties resolved toward the lowest class index.
double evaluate(const NetworkSpec& net, const Parameters& params, const Dataset& split);

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::vector<std::string> failures;  // tensors exceeding the tolerance
};

// Analytic gradients vs central finite differences (step 1e-5), run in a
// 64-bit shadow of the engine.
GradCheckReport grad_check(const NetworkSpec& net, const Parameters& params,
                           const Tensor4& batch, const std::vector<int>& labels,
                           double tol);

}  // namespace resus

#endif  // RESUS_TRAINER_HPP_
