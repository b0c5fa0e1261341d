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

#include "osq/model.hpp"

#include <cmath>
#include <cstddef>

#include "osq/error.hpp"

namespace osq {

void Hyperparams::validate() const {
  require(num_layers >= 1, ErrorKind::kConfig, "num_layers must be >= 1");
  require(hidden_size >= 1, ErrorKind::kConfig, "hidden_size must be >= 1");
  require(input_dim >= 1, ErrorKind::kConfig, "input_dim must be >= 1");
  require(vocab_size >= 2, ErrorKind::kConfig,
          "vocab_size must be >= 2 (end and begin tokens are reserved)");
  require(dropout_target >= 0.0 && dropout_target < 1.0, ErrorKind::kConfig,
          "dropout_target must be in [0, 1)");
  require(init_scale > 0.0, ErrorKind::kConfig, "init_scale must be > 0");
}

namespace {

template <typename Params, typename Fn>
void visit_tensors(Params& p, const Fn& fn) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string prefix = "lstm" + std::to_string(l);
    fn(prefix + ".W", p.layers[l].w);
    fn(prefix + ".b", p.layers[l].b);
  }
  fn("emit.W", p.emit_w);
  fn("emit.b", p.emit_b);
  fn("out.W", p.out_w);
  fn("out.b", p.out_b);
  fn("baseline.w", p.base_w);
  fn("baseline.b", p.base_b);
}

}  // namespace

void ModelParams::for_each_tensor(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_tensors(*this, fn);
}

void ModelParams::for_each_tensor(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_tensors(*this, fn);
}

std::vector<Tensor*> ModelParams::tensor_ptrs() {
  std::vector<Tensor*> out;
  for_each_tensor([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::size_t ModelParams::tensor_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const Tensor&) { ++n; });
  return n;
}

ModelParams init_params(const Hyperparams& hyper, RngState& rng) {
  hyper.validate();
  const auto h = static_cast<std::size_t>(hyper.hidden_size);
  const auto v = static_cast<std::size_t>(hyper.vocab_size);

  ModelParams p;
  p.hyper = hyper;
  for (int l = 0; l < hyper.num_layers; ++l) {
    const auto in = static_cast<std::size_t>(hyper.layer_input_width(l));
    LayerParams layer{Tensor({4 * h, in + h}), Tensor({4 * h})};
    // Forget-gate biases start at 1 so early gradients flow through the
    // cell state; everything else starts near zero.
    for (std::size_t i = h; i < 2 * h; ++i) layer.b.data[i] = 1.0;
    p.layers.push_back(std::move(layer));
  }
  p.emit_w = Tensor({h});
  p.emit_b = Tensor({1});
  p.out_w = Tensor({v, h});
  p.out_b = Tensor({v});
  p.base_w = Tensor({h});
  p.base_b = Tensor({1});

  const double s = hyper.init_scale;
  auto fill_uniform = [&](Tensor& t) {
    for (double& x : t.data) x = (2.0 * rng.uniform01() - 1.0) * s;
  };
  for (auto& layer : p.layers) fill_uniform(layer.w);
  fill_uniform(p.emit_w);
  fill_uniform(p.out_w);
  fill_uniform(p.base_w);
  return p;
}

LstmState LstmState::zeros(const Hyperparams& hyper) {
  LstmState s;
  s.h.assign(static_cast<std::size_t>(hyper.num_layers),
             std::vector<double>(static_cast<std::size_t>(hyper.hidden_size),
                                 0.0));
  s.c = s.h;
  return s;
}

void lstm_step(const LayerParams& layer, std::span<const double> input,
               std::span<const double> h_prev, std::span<const double> c_prev,
               std::span<double> h_out, std::span<double> c_out,
               double* gates) {
  const std::size_t hs = h_prev.size();
  const std::size_t in = input.size();
  require(layer.w.rows() == 4 * hs && layer.w.cols() == in + hs,
          ErrorKind::kShape, "lstm weight shape mismatch");
  require(layer.b.size() == 4 * hs, ErrorKind::kShape,
          "lstm bias shape mismatch");
  require(c_prev.size() == hs && h_out.size() == hs && c_out.size() == hs,
          ErrorKind::kShape, "lstm state shape mismatch");

  for (std::size_t u = 0; u < hs; ++u) {
    double pre[4];
    for (int g = 0; g < 4; ++g) {
      const std::size_t r = static_cast<std::size_t>(g) * hs + u;
      const double* wrow = layer.w.row(r);
      double acc = layer.b.data[r];
      for (std::size_t k = 0; k < in; ++k) acc += wrow[k] * input[k];
      for (std::size_t k = 0; k < hs; ++k) acc += wrow[in + k] * h_prev[k];
      pre[g] = acc;
    }
    const double gi = sigmoid(pre[0]);
    const double gf = sigmoid(pre[1]);
    const double go = sigmoid(pre[2]);
    const double gg = std::tanh(pre[3]);
    const double c_new = gf * c_prev[u] + gi * gg;
    c_out[u] = c_new;
    h_out[u] = go * std::tanh(c_new);
    if (gates != nullptr) {
      gates[0 * hs + u] = gi;
      gates[1 * hs + u] = gf;
      gates[2 * hs + u] = go;
      gates[3 * hs + u] = gg;
    }
  }
}

std::vector<double> apply_dropout(std::span<const double> h, double rate,
                                  RngState& rng,
                                  std::vector<double>* mask_out) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::kDomain,
          "dropout rate must be in [0, 1)");
  std::vector<double> out(h.begin(), h.end());
  if (mask_out != nullptr) mask_out->assign(h.size(), 1.0);
  if (rate == 0.0) return out;
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = rng.uniform01() < rate ? 0.0 : 1.0 / keep;
    out[i] *= m;
    if (mask_out != nullptr) (*mask_out)[i] = m;
  }
  return out;
}

StepOutputs forward_step(const ModelParams& params, const LstmState& state,
                         std::span<const double> x, int prev_emit,
                         int prev_token, LstmState& next_state,
                         double dropout_rate, RngState* dropout_rng,
                         StepTape* tape) {
  const Hyperparams& hp = params.hyper;
  require(static_cast<int>(x.size()) == hp.input_dim, ErrorKind::kShape,
          "input frame width mismatch");
  require(prev_emit == 0 || prev_emit == 1, ErrorKind::kInvalidArgument,
          "prev_emit must be 0 or 1");
  require(prev_token >= 0 && prev_token < hp.vocab_size,
          ErrorKind::kInvalidArgument, "prev_token out of range");
  require(dropout_rate == 0.0 || dropout_rng != nullptr,
          ErrorKind::kInvalidArgument,
          "dropout requires a generator");

  const auto hs = static_cast<std::size_t>(hp.hidden_size);
  const auto layers = static_cast<std::size_t>(hp.num_layers);
  require(state.h.size() == layers && state.c.size() == layers,
          ErrorKind::kShape, "state layer count mismatch");

  std::vector<double> in0(static_cast<std::size_t>(hp.layer_input_width(0)),
                          0.0);
  for (std::size_t i = 0; i < x.size(); ++i) in0[i] = x[i];
  in0[x.size()] = static_cast<double>(prev_emit);
  in0[x.size() + 1 + static_cast<std::size_t>(prev_token)] = 1.0;

  next_state.h.assign(layers, std::vector<double>(hs, 0.0));
  next_state.c.assign(layers, std::vector<double>(hs, 0.0));
  if (tape != nullptr) {
    tape->in0 = in0;
    tape->layers.assign(layers, {});
  }

  std::vector<double> input = in0;
  std::vector<double> hdrop;
  for (std::size_t l = 0; l < layers; ++l) {
    require(state.h[l].size() == hs && state.c[l].size() == hs,
            ErrorKind::kShape, "state width mismatch");
    double* gates_out = nullptr;
    if (tape != nullptr) {
      tape->layers[l].gates.assign(4 * hs, 0.0);
      gates_out = tape->layers[l].gates.data();
    }
    lstm_step(params.layers[l], input, state.h[l], state.c[l],
              next_state.h[l], next_state.c[l], gates_out);
    std::vector<double>* mask_out =
        tape != nullptr ? &tape->layers[l].mask : nullptr;
    if (dropout_rate > 0.0) {
      hdrop = apply_dropout(next_state.h[l], dropout_rate, *dropout_rng,
                            mask_out);
    } else {
      hdrop = next_state.h[l];
      if (mask_out != nullptr) mask_out->clear();
    }
    if (tape != nullptr) {
      tape->layers[l].c = next_state.c[l];
      tape->layers[l].h = next_state.h[l];
      tape->layers[l].hdrop = hdrop;
    }
    input = hdrop;
  }

  StepOutputs out;
  out.top_h = hdrop;
  double logit = params.emit_b.data[0];
  for (std::size_t k = 0; k < hs; ++k) logit += params.emit_w.data[k] * hdrop[k];
  out.emit_prob = sigmoid(logit);

  const auto v = static_cast<std::size_t>(hp.vocab_size);
  std::vector<double> logits(v, 0.0);
  for (std::size_t t = 0; t < v; ++t) {
    const double* wrow = params.out_w.row(t);
    double acc = params.out_b.data[t];
    for (std::size_t k = 0; k < hs; ++k) acc += wrow[k] * hdrop[k];
    logits[t] = acc;
  }
  out.dist = softmax(logits);

  if (tape != nullptr) {
    tape->emit_logit = logit;
    tape->emit_prob = out.emit_prob;
    tape->dist = out.dist;
  }
  return out;
}

}  // namespace osq
