// Copyright 2026 The UnTrac-CPP Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Feed-forward n-gram language model.
//
// Each answer position t is predicted from the `context_window` tokens before
// it (left-padded with PAD = 0). The context embeddings are concatenated and
// passed through 1-2 dense hidden layers to vocabulary logits. Only positions
// with loss_mask == 1 contribute to the loss.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "untrac/hvp.hpp"
#include "untrac/param_vector.hpp"

namespace untrac {

enum class Activation { kTanh, kRelu };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t context_window = 12;
  std::size_t embed_dim = 8;
  std::size_t hidden_dim = 32;
  std::size_t n_hidden_layers = 2;
  Activation activation = Activation::kTanh;
  std::uint64_t seed = 0;

  // Throws ConfigError unless vocab_size >= 8, context_window >= 4,
  // embed/hidden dims >= 1 and n_hidden_layers in {1, 2}.
  void validate() const;

  // V*E + C*E*H + H + (L-1)*(H*H + H) + H*V + V
  std::size_t param_count() const;

  // Tensor order: embedding, hidden0.{weight,bias}, [hidden1.{weight,bias}],
  // output.{weight,bias}. A pure function of the config.
  std::shared_ptr<const Layout> layout() const;

  bool operator==(const ModelConfig&) const = default;
};

inline constexpr std::size_t kPadToken = 0;

// One sequence: prompt tokens followed by answer tokens. loss_mask marks the
// answer positions.
struct Example {
  std::vector<std::size_t> tokens;
  std::vector<int> loss_mask;

  std::size_t n_masked() const;
  bool operator==(const Example&) const = default;
};

// Throws ConfigError for length mismatch, no masked position, or a token
// outside the vocabulary.
void validate_example(const Example& ex, std::size_t vocab_size);

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. The embedding
// table is treated as a map from one-hot vectors, so its fan_in is vocab_size.
ParamVector init_params(const ModelConfig& config);

// Mean over examples of each example's mean masked next-token NLL.
LossFn make_loss_fn(const ModelConfig& config, std::span<const Example> batch);

double loss(const ParamVector& params, const ModelConfig& config,
            std::span<const Example> batch);
ValueAndGrad loss_grad(const ParamVector& params, const ModelConfig& config,
                       std::span<const Example> batch);

// Sum over consecutive batches of `batch_size` examples of the per-batch mean
// loss. batch_size == 0 puts the whole dataset in one batch. This is the
// "sum over N batches" aggregate used by every attribution score.
LossFn make_batched_sum_loss_fn(const ModelConfig& config,
                                std::span<const Example> examples,
                                std::size_t batch_size);
double batched_loss_sum(const ParamVector& params, const ModelConfig& config,
                        std::span<const Example> examples, std::size_t batch_size);
ValueAndGrad batched_loss_sum_grad(const ParamVector& params, const ModelConfig& config,
                                   std::span<const Example> examples,
                                   std::size_t batch_size);

// Checkpoint file: a magic line, one line of JSON header (model config and
// layout manifest), then the flat parameter array as little-endian f64.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParamVector& params);

struct Checkpoint {
  ModelConfig config;
  ParamVector params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Raw little-endian f64 helpers shared by the checkpoint and trainer-state
// files.
void write_f64_le(std::ostream& os, std::span<const double> values);
std::vector<double> read_f64_le(std::istream& is, std::size_t count);

}  // namespace untrac
