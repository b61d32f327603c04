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

#include "untrac/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <string>

#include "untrac/errors.hpp"
#include "untrac/json_io.hpp"
#include "untrac/rng.hpp"

namespace untrac {

namespace {

constexpr std::string_view kCheckpointMagic = "UNTRAC-CHECKPOINT v1";

// Flattened training rows for one forward pass.
struct Rows {
  std::shared_ptr<const std::vector<std::size_t>> context;  // R * C token ids
  std::shared_ptr<const std::vector<std::size_t>> targets;  // R
  std::shared_ptr<const std::vector<double>> weights;       // R
  std::size_t n_rows = 0;
};

// example_weight[e] is multiplied by 1 / n_masked(e) for each of its rows.
Rows build_rows(const ModelConfig& config, std::span<const Example> examples,
                std::span<const double> example_weight) {
  const std::size_t c = config.context_window;
  auto context = std::make_shared<std::vector<std::size_t>>();
  auto targets = std::make_shared<std::vector<std::size_t>>();
  auto weights = std::make_shared<std::vector<double>>();
  for (std::size_t e = 0; e < examples.size(); ++e) {
    const Example& ex = examples[e];
    validate_example(ex, config.vocab_size);
    const double w = example_weight[e] / static_cast<double>(ex.n_masked());
    for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
      if (!ex.loss_mask[t]) continue;
      for (std::size_t k = 0; k < c; ++k) {
        // Slot k holds token t - c + k.
        const std::ptrdiff_t pos =
            static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(c) +
            static_cast<std::ptrdiff_t>(k);
        context->push_back(pos < 0 ? kPadToken : ex.tokens[static_cast<std::size_t>(pos)]);
      }
      targets->push_back(ex.tokens[t]);
      weights->push_back(w);
    }
  }
  Rows rows;
  rows.n_rows = targets->size();
  rows.context = std::move(context);
  rows.targets = std::move(targets);
  rows.weights = std::move(weights);
  return rows;
}

ad::Var activate(Activation a, ad::Var x) {
  return a == Activation::kTanh ? ad::tanh(x) : ad::relu(x);
}

ad::Var forward_loss(const ModelConfig& config, const Rows& rows, ad::Tape& tape,
                     std::span<const ad::Var> leaves) {
  const std::size_t n = rows.n_rows;
  const std::size_t h = config.hidden_dim;
  const ad::Var ones = tape.constant(Tensor::full({n, 1}, 1.0));

  std::size_t li = 0;
  const ad::Var embedding = leaves[li++];
  ad::Var x = ad::gather_rows(embedding, rows.context);
  x = ad::reshape(x, {n, config.context_window * config.embed_dim});
  for (std::size_t layer = 0; layer < config.n_hidden_layers; ++layer) {
    const ad::Var w = leaves[li++];
    const ad::Var b = ad::reshape(leaves[li++], {1, h});
    x = activate(config.activation, ad::add(ad::matmul(x, w), ad::matmul(ones, b)));
  }
  const ad::Var w_out = leaves[li++];
  const ad::Var b_out = ad::reshape(leaves[li++], {1, config.vocab_size});
  const ad::Var logits = ad::add(ad::matmul(x, w_out), ad::matmul(ones, b_out));
  return ad::weighted_cross_entropy(logits, rows.targets, rows.weights);
}

LossFn make_weighted_loss_fn(const ModelConfig& config, std::span<const Example> examples,
                             std::span<const double> example_weight) {
  auto rows = std::make_shared<const Rows>(build_rows(config, examples, example_weight));
  return [config, rows](ad::Tape& tape, std::span<const ad::Var> leaves) {
    return forward_loss(config, *rows, tape, leaves);
  };
}

}  // namespace

std::string_view activation_name(Activation a) {
  return a == Activation::kTanh ? "tanh" : "relu";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (vocab_size < 8) throw ConfigError("model.vocab_size must be >= 8");
  if (context_window < 4) throw ConfigError("model.context_window must be >= 4");
  if (embed_dim < 1 || hidden_dim < 1) {
    throw ConfigError("model.embed_dim and model.hidden_dim must be >= 1");
  }
  if (n_hidden_layers < 1 || n_hidden_layers > 2) {
    throw ConfigError("model.n_hidden_layers must be 1 or 2");
  }
}

std::size_t ModelConfig::param_count() const {
  const std::size_t v = vocab_size, c = context_window, e = embed_dim, h = hidden_dim;
  return v * e + c * e * h + h + (n_hidden_layers - 1) * (h * h + h) + h * v + v;
}

std::shared_ptr<const Layout> ModelConfig::layout() const {
  validate();
  std::vector<std::pair<std::string, Shape>> t;
  t.emplace_back("embedding", Shape{vocab_size, embed_dim});
  t.emplace_back("hidden0.weight", Shape{context_window * embed_dim, hidden_dim});
  t.emplace_back("hidden0.bias", Shape{hidden_dim});
  if (n_hidden_layers == 2) {
    t.emplace_back("hidden1.weight", Shape{hidden_dim, hidden_dim});
    t.emplace_back("hidden1.bias", Shape{hidden_dim});
  }
  t.emplace_back("output.weight", Shape{hidden_dim, vocab_size});
  t.emplace_back("output.bias", Shape{vocab_size});
  return std::make_shared<const Layout>(std::move(t));
}

std::size_t Example::n_masked() const {
  std::size_t n = 0;
  for (int m : loss_mask) n += (m != 0);
  return n;
}

void validate_example(const Example& ex, std::size_t vocab_size) {
  if (ex.tokens.size() != ex.loss_mask.size()) {
    throw ConfigError("example has " + std::to_string(ex.tokens.size()) +
                      " tokens but a loss mask of length " +
                      std::to_string(ex.loss_mask.size()));
  }
  if (ex.n_masked() == 0) {
    throw DegenerateBatchError("example has no masked-in (answer) position");
  }
  for (std::size_t t : ex.tokens) {
    if (t >= vocab_size) {
      throw ConfigError("token " + std::to_string(t) + " outside vocabulary of " +
                        std::to_string(vocab_size));
    }
  }
}

ParamVector init_params(const ModelConfig& config) {
  ParamVector p(config.layout());
  Rng rng(config.seed);
  const auto& entries = p.layout().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const LayoutEntry& e = entries[i];
    if (e.shape.size() == 1) continue;  // biases start at zero
    const double fan_in = static_cast<double>(e.shape[0]);
    const double bound = 1.0 / std::sqrt(fan_in);
    for (double& v : p.entry(i)) v = rng.uniform(-bound, bound);
  }
  return p;
}

LossFn make_loss_fn(const ModelConfig& config, std::span<const Example> batch) {
  if (batch.empty()) throw DegenerateBatchError("loss of an empty batch");
  const std::vector<double> w(batch.size(), 1.0 / static_cast<double>(batch.size()));
  return make_weighted_loss_fn(config, batch, w);
}

double loss(const ParamVector& params, const ModelConfig& config,
            std::span<const Example> batch) {
  return loss_value(make_loss_fn(config, batch), params);
}

ValueAndGrad loss_grad(const ParamVector& params, const ModelConfig& config,
                       std::span<const Example> batch) {
  return value_and_grad(make_loss_fn(config, batch), params);
}

LossFn make_batched_sum_loss_fn(const ModelConfig& config,
                                std::span<const Example> examples,
                                std::size_t batch_size) {
  if (examples.empty()) throw DegenerateBatchError("loss of an empty dataset");
  const std::size_t n = examples.size();
  const std::size_t b = batch_size == 0 ? n : batch_size;
  std::vector<double> w(n);
  for (std::size_t start = 0; start < n; start += b) {
    const std::size_t len = std::min(b, n - start);
    for (std::size_t i = start; i < start + len; ++i) {
      w[i] = 1.0 / static_cast<double>(len);
    }
  }
  return make_weighted_loss_fn(config, examples, w);
}

double batched_loss_sum(const ParamVector& params, const ModelConfig& config,
                        std::span<const Example> examples, std::size_t batch_size) {
  return loss_value(make_batched_sum_loss_fn(config, examples, batch_size), params);
}

ValueAndGrad batched_loss_sum_grad(const ParamVector& params, const ModelConfig& config,
                                   std::span<const Example> examples,
                                   std::size_t batch_size) {
  return value_and_grad(make_batched_sum_loss_fn(config, examples, batch_size), params);
}

void write_f64_le(std::ostream& os, std::span<const double> values) {
  std::vector<char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) {
      buf[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<double> read_f64_le(std::istream& is, std::size_t count) {
  std::vector<char> buf(count * 8);
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) {
    throw FormatError("truncated f64 payload: expected " + std::to_string(count) +
                      " values");
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(buf[i * 8 + static_cast<std::size_t>(b)]))
              << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParamVector& params) {
  if (params.layout() != *config.layout()) {
    throw FormatError("save_checkpoint: parameters do not match the model layout");
  }
  nlohmann::json header;
  header["config"] = config;
  header["layout"] = params.layout();
  header["count"] = params.size();
  header["dtype"] = "f64";
  header["byte_order"] = "little";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write checkpoint " + path.string());
  os << kCheckpointMagic << '\n' << header.dump() << '\n';
  write_f64_le(os, params.values());
  if (!os) throw FormatError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  std::string magic, header_line;
  std::getline(is, magic);
  if (magic != kCheckpointMagic) {
    throw FormatError(path.string() + " is not an untrac checkpoint");
  }
  std::getline(is, header_line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  Checkpoint ck;
  ck.config = header.at("config").get<ModelConfig>();
  const Layout layout = header.at("layout").get<Layout>();
  auto expected = ck.config.layout();
  if (layout != *expected) {
    throw FormatError("checkpoint layout in " + path.string() +
                      " does not match its model config");
  }
  const auto count = header.at("count").get<std::size_t>();
  if (count != expected->total_size()) {
    throw FormatError("checkpoint value count mismatch in " + path.string());
  }
  ck.params = ParamVector(std::move(expected), read_f64_le(is, count));
  return ck;
}

}  // namespace untrac
