// Copyright 2026 The Osq Authors
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

#ifndef OSQ_MODEL_HPP_
#define OSQ_MODEL_HPP_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "osq/rng.hpp"
#include "osq/tensor.hpp"

namespace osq {

struct Hyperparams {
  int num_layers = 1;
  int hidden_size = 8;
  int input_dim = 1;
  // Token count, including the end-of-sequence and beginning-of-sequence
  // tokens (the two highest ids).
  int vocab_size = 2;
  double dropout_target = 0.0;
  double init_scale = 0.1;

  int eos_token() const { return vocab_size - 1; }
  int bos_token() const { return vocab_size - 2; }

  // Layer 0 consumes concat(x_i, previous decision bit, one-hot previous
  // token); upper layers consume the layer below.
  int layer_input_width(int layer) const {
    return layer == 0 ? input_dim + 1 + vocab_size : hidden_size;
  }

  void validate() const;
};

// One stacked-LSTM layer. Weight rows are the four gates in order
// (input, forget, output, candidate); columns are concat(input, h_prev).
struct LayerParams {
  Tensor w;  // [4H, in + H]
  Tensor b;  // [4H]
};

struct ModelParams {
  Hyperparams hyper;
  std::vector<LayerParams> layers;
  Tensor emit_w;  // [H]   emission head
  Tensor emit_b;  // [1]
  Tensor out_w;   // [V, H] output head
  Tensor out_b;   // [V]
  Tensor base_w;  // [H]   baseline head (trained by least squares, not Adam)
  Tensor base_b;  // [1]

  /// Visits every tensor in a fixed order (checkpoints, optimizer moments
  /// and gradients all rely on this order).
  void for_each_tensor(
      const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_tensor(
      const std::function<void(const std::string&, const Tensor&)>& fn) const;

  std::vector<Tensor*> tensor_ptrs();
  std::size_t tensor_count() const;
};

/// Weights uniform in [-init_scale, +init_scale], biases zero except the
/// forget gates (1.0). Deterministic given the generator state.
ModelParams init_params(const Hyperparams& hyper, RngState& rng);

struct LstmState {
  std::vector<std::vector<double>> h;  // [L][H]
  std::vector<std::vector<double>> c;  // [L][H]

  static LstmState zeros(const Hyperparams& hyper);
};

/// Standard LSTM cell update: gates through sigmoid, candidate through
/// tanh, c' = f*c + i*g, h' = o*tanh(c'). `gates` (optional, length 4H,
/// order i/f/o/g) receives the post-activation gate values for backprop.
void lstm_step(const LayerParams& layer, std::span<const double> input,
               std::span<const double> h_prev, std::span<const double> c_prev,
               std::span<double> h_out, std::span<double> c_out,
               double* gates = nullptr);

/// Inverted dropout: units zeroed with probability rate, survivors scaled
/// by 1/(1-rate). rate == 0 is the identity and consumes no draws.
/// `mask_out`, when given, receives the per-unit multipliers.
std::vector<double> apply_dropout(std::span<const double> h, double rate,
                                  RngState& rng,
                                  std::vector<double>* mask_out = nullptr);

struct StepOutputs {
  double emit_prob = 0.0;       // b_i
  std::vector<double> dist;     // d_i over vocab
  std::vector<double> top_h;    // head input (top layer output after dropout)
};

// Per-step activation record kept for backpropagation.
struct StepTape {
  std::vector<double> in0;  // concat(x, prev_emit, one-hot prev_token)
  struct Layer {
    std::vector<double> gates;  // [4H] post-activation, order i/f/o/g
    std::vector<double> c;
    std::vector<double> h;      // before dropout (recurrent value)
    std::vector<double> mask;   // dropout multipliers (empty => identity)
    std::vector<double> hdrop;  // after dropout (feeds upward)
  };
  std::vector<Layer> layers;
  double emit_logit = 0.0;
  double emit_prob = 0.0;
  std::vector<double> dist;
};

/// One time step of the full model: builds the feedback input, runs the
/// stack, applies the heads. Pure in `state`; the successor state is
/// returned. Dropout draws come from `dropout_rng` and are skipped
/// entirely when dropout_rate == 0.
StepOutputs forward_step(const ModelParams& params, const LstmState& state,
                         std::span<const double> x, int prev_emit,
                         int prev_token, LstmState& next_state,
                         double dropout_rate = 0.0,
                         RngState* dropout_rng = nullptr,
                         StepTape* tape = nullptr);

}  // namespace osq

#endif  // OSQ_MODEL_HPP_
