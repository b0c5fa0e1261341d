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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "osq/error.hpp"
#include "osq/model.hpp"
#include "osq/rng.hpp"

using namespace osq;

namespace {

ModelParams zero_params(const Hyperparams& hp) {
  RngState rng(0);
  ModelParams p = init_params(hp, rng);
  p.for_each_tensor([](const std::string&, Tensor& t) { t.fill(0.0); });
  return p;
}

}  // namespace

TEST_CASE("layer input widths follow the feedback layout") {
  Hyperparams hp;
  hp.num_layers = 2;
  hp.hidden_size = 8;
  hp.input_dim = 5;
  hp.vocab_size = 5;
  CHECK(hp.layer_input_width(0) == 11);  // 5 + decision bit + 5-way one-hot
  CHECK(hp.layer_input_width(1) == 8);
  CHECK(hp.eos_token() == 4);
  CHECK(hp.bos_token() == 3);
}

TEST_CASE("hyperparameter validation rejects bad settings") {
  Hyperparams hp;
  hp.vocab_size = 1;
  CHECK_THROWS_AS(hp.validate(), Error);
  hp.vocab_size = 3;
  hp.dropout_target = 1.0;
  CHECK_THROWS_AS(hp.validate(), Error);
  hp.dropout_target = 0.0;
  hp.num_layers = 0;
  CHECK_THROWS_AS(hp.validate(), Error);
}

TEST_CASE("initialization: shapes, forget-gate bias, determinism") {
  Hyperparams hp;
  hp.num_layers = 2;
  hp.hidden_size = 8;
  hp.input_dim = 5;
  hp.vocab_size = 5;
  hp.init_scale = 0.1;

  RngState rng(11);
  ModelParams p = init_params(hp, rng);
  REQUIRE(p.layers.size() == 2);
  CHECK(p.layers[0].w.rows() == 32);
  CHECK(p.layers[0].w.cols() == 19);  // 11 input + 8 recurrent
  CHECK(p.layers[1].w.cols() == 16);
  CHECK(p.emit_w.size() == 8);
  CHECK(p.out_w.rows() == 5);
  CHECK(p.out_w.cols() == 8);
  CHECK(p.base_w.size() == 8);

  for (const auto& layer : p.layers) {
    for (std::size_t i = 0; i < 32; ++i) {
      const double expected = (i >= 8 && i < 16) ? 1.0 : 0.0;
      CHECK(layer.b.data[i] == expected);
    }
    for (double w : layer.w.data) CHECK(std::abs(w) <= 0.1);
  }
  for (double b : p.out_b.data) CHECK(b == 0.0);
  CHECK(p.emit_b.data[0] == 0.0);

  RngState rng2(11);
  ModelParams q = init_params(hp, rng2);
  bool identical = true;
  p.for_each_tensor([&](const std::string& name, Tensor& t) {
    q.for_each_tensor([&](const std::string& name2, Tensor& t2) {
      if (name == name2 && t.data != t2.data) identical = false;
    });
  });
  CHECK(identical);
}

TEST_CASE("tensor registry order is fixed") {
  Hyperparams hp;
  hp.num_layers = 2;
  hp.hidden_size = 3;
  hp.input_dim = 2;
  hp.vocab_size = 4;
  RngState rng(1);
  ModelParams p = init_params(hp, rng);
  std::vector<std::string> names;
  p.for_each_tensor(
      [&](const std::string& n, Tensor&) { names.push_back(n); });
  const std::vector<std::string> expected = {
      "lstm0.W", "lstm0.b", "lstm1.W", "lstm1.b", "emit.W",
      "emit.b",  "out.W",   "out.b",   "baseline.w", "baseline.b"};
  CHECK(names == expected);
  CHECK(p.tensor_count() == expected.size());
  CHECK(p.tensor_ptrs().size() == expected.size());
}

TEST_CASE("cell update matches closed-form saturated-gate values") {
  // One unit, all pre-activations forced to 10 via the bias alone:
  //   c' = sigmoid(10) * tanh(10), h' = sigmoid(10) * tanh(c').
  LayerParams layer{Tensor({4, 2}), Tensor({4}, 10.0)};
  std::vector<double> input = {0.0};
  std::vector<double> h_prev = {0.0}, c_prev = {0.0};
  std::vector<double> h(1), c(1);
  double gates[4];
  lstm_step(layer, input, h_prev, c_prev, h, c, gates);
  CHECK(c[0] == doctest::Approx(0.999954598009177473).epsilon(1e-14));
  CHECK(h[0] == doctest::Approx(0.761540513739396626).epsilon(1e-14));
  CHECK(gates[0] == doctest::Approx(gates[1]).epsilon(1e-15));
  CHECK(gates[3] == doctest::Approx(std::tanh(10.0)).epsilon(1e-15));
}

TEST_CASE("cell update at zero weights is a fixed point of the state") {
  LayerParams layer{Tensor({4, 3}), Tensor({4})};
  std::vector<double> input = {0.4, -0.2};
  std::vector<double> h_prev = {0.0}, c_prev = {0.0};
  std::vector<double> h(1), c(1);
  lstm_step(layer, input, h_prev, c_prev, h, c);
  CHECK(c[0] == 0.0);
  CHECK(h[0] == 0.0);
}

TEST_CASE("forget gate carries the cell state") {
  // Pre-activations 0 except candidate path disabled: with i=f=o=0.5 and
  // g=0, c' = 0.5*c and h' = 0.5*tanh(0.5*c).
  LayerParams layer{Tensor({4, 2}), Tensor({4})};
  std::vector<double> input = {0.0};
  std::vector<double> h_prev = {0.0}, c_prev = {0.8};
  std::vector<double> h(1), c(1);
  lstm_step(layer, input, h_prev, c_prev, h, c);
  CHECK(c[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(h[0] == doctest::Approx(0.5 * std::tanh(0.4)).epsilon(1e-15));
}

TEST_CASE("cell update validates shapes") {
  LayerParams layer{Tensor({4, 2}), Tensor({4})};
  std::vector<double> input = {0.0, 0.0};  // too wide for [4,2] weights
  std::vector<double> h_prev = {0.0}, c_prev = {0.0};
  std::vector<double> h(1), c(1);
  CHECK_THROWS_AS(lstm_step(layer, input, h_prev, c_prev, h, c), Error);
}

TEST_CASE("step input concatenates frame, decision bit and token one-hot") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 2;
  hp.input_dim = 2;
  hp.vocab_size = 4;
  ModelParams p = zero_params(hp);
  LstmState s = LstmState::zeros(hp);
  LstmState next;
  StepTape tape;
  std::vector<double> x = {0.25, -0.5};
  (void)forward_step(p, s, x, 1, 2, next, 0.0, nullptr, &tape);
  const std::vector<double> expected = {0.25, -0.5, 1.0, 0.0, 0.0, 1.0, 0.0};
  CHECK(tape.in0 == expected);
}

TEST_CASE("step heads produce known outputs on a crafted unit") {
  // Force the single hidden unit to h = sigmoid(10)*tanh(c1) via saturated
  // gates, then read the heads: emission logit 2 gives sigmoid(2); output
  // biases (1,2,3) with zero weights give the reference softmax.
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 1;
  hp.input_dim = 1;
  hp.vocab_size = 3;
  ModelParams p = zero_params(hp);
  p.layers[0].b.fill(10.0);
  p.emit_b.data[0] = 2.0;
  p.out_b.data = {1.0, 2.0, 3.0};

  LstmState s = LstmState::zeros(hp);
  LstmState next;
  std::vector<double> x = {0.0};
  StepOutputs out = forward_step(p, s, x, 0, hp.bos_token(), next);
  CHECK(next.c[0][0] == doctest::Approx(0.999954598009177473).epsilon(1e-14));
  CHECK(next.h[0][0] == doctest::Approx(0.761540513739396626).epsilon(1e-14));
  CHECK(out.top_h[0] == doctest::Approx(next.h[0][0]).epsilon(1e-15));
  CHECK(out.emit_prob == doctest::Approx(0.880797077977882444).epsilon(1e-14));
  REQUIRE(out.dist.size() == 3);
  CHECK(out.dist[0] == doctest::Approx(0.090030573170380458).epsilon(1e-13));
  CHECK(out.dist[1] == doctest::Approx(0.244728471054797653).epsilon(1e-13));
  CHECK(out.dist[2] == doctest::Approx(0.665240955774821889).epsilon(1e-13));
}

TEST_CASE("step does not mutate the incoming state") {
  Hyperparams hp;
  hp.num_layers = 2;
  hp.hidden_size = 4;
  hp.input_dim = 3;
  hp.vocab_size = 4;
  RngState rng(3);
  ModelParams p = init_params(hp, rng);
  LstmState s = LstmState::zeros(hp);
  LstmState next1, next2;
  std::vector<double> x = {0.1, 0.2, 0.3};

  StepOutputs o1 = forward_step(p, s, x, 0, 1, next1);
  LstmState snapshot = s;
  StepOutputs o2 = forward_step(p, s, x, 0, 1, next2);
  CHECK(s.h == snapshot.h);
  CHECK(s.c == snapshot.c);
  CHECK(o1.emit_prob == o2.emit_prob);
  CHECK(o1.dist == o2.dist);
  CHECK(next1.h == next2.h);

  // Different feedback must change the step input (and generally the
  // outputs, given random weights).
  LstmState next3;
  StepOutputs o3 = forward_step(p, s, x, 1, 2, next3);
  CHECK(o3.emit_prob != o1.emit_prob);
}

TEST_CASE("step validates its discrete inputs") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 2;
  hp.input_dim = 1;
  hp.vocab_size = 3;
  ModelParams p = zero_params(hp);
  LstmState s = LstmState::zeros(hp);
  LstmState next;
  std::vector<double> x = {0.0};
  CHECK_THROWS_AS((void)forward_step(p, s, x, 2, 0, next), Error);
  CHECK_THROWS_AS((void)forward_step(p, s, x, 0, 3, next), Error);
  CHECK_THROWS_AS((void)forward_step(p, s, x, 0, -1, next), Error);
  std::vector<double> wide = {0.0, 0.0};
  CHECK_THROWS_AS((void)forward_step(p, s, wide, 0, 0, next), Error);
  CHECK_THROWS_AS((void)forward_step(p, s, x, 0, 0, next, 0.5, nullptr), Error);
}

TEST_CASE("dropout identity at rate zero consumes no draws") {
  RngState rng(5);
  std::vector<double> h = {1.0, -2.0, 3.0};
  std::vector<double> mask;
  auto out = apply_dropout(h, 0.0, rng, &mask);
  CHECK(out == h);
  CHECK(mask == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(rng.draws() == 0);
}

TEST_CASE("dropout masks are zero-or-rescale and unbiased") {
  RngState rng(17);
  std::vector<double> h = {2.0};
  const double rate = 0.25;
  const int n = 400000;
  double sum = 0.0;
  int zeros = 0;
  for (int i = 0; i < n; ++i) {
    auto out = apply_dropout(h, rate, rng);
    const bool is_zero = out[0] == 0.0;
    const bool is_scaled =
        std::abs(out[0] - 2.0 / 0.75) < 1e-12;
    CHECK((is_zero || is_scaled));
    zeros += is_zero ? 1 : 0;
    sum += out[0];
  }
  CHECK(rng.draws() == static_cast<std::uint64_t>(n));
  CHECK(static_cast<double>(zeros) / n == doctest::Approx(rate).epsilon(0.02));
  CHECK(sum / n == doctest::Approx(2.0).epsilon(0.01));
  CHECK_THROWS_AS((void)apply_dropout(h, 1.0, rng), Error);
}

TEST_CASE("step consumes one dropout draw per hidden unit per layer") {
  Hyperparams hp;
  hp.num_layers = 2;
  hp.hidden_size = 4;
  hp.input_dim = 2;
  hp.vocab_size = 3;
  RngState rng(21);
  ModelParams p = init_params(hp, rng);
  LstmState s = LstmState::zeros(hp);
  LstmState next;
  std::vector<double> x = {0.3, 0.4};

  RngState drop(99);
  StepTape tape;
  (void)forward_step(p, s, x, 0, 1, next, 0.5, &drop, &tape);
  CHECK(drop.draws() == 8);  // 2 layers * 4 units
  REQUIRE(tape.layers.size() == 2);
  CHECK(tape.layers[0].mask.size() == 4);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t u = 0; u < 4; ++u) {
      const double m = tape.layers[l].mask[u];
      CHECK((m == 0.0 || m == doctest::Approx(2.0).epsilon(1e-15)));
      CHECK(tape.layers[l].hdrop[u] ==
            doctest::Approx(tape.layers[l].h[u] * m).epsilon(1e-15));
    }
  }
  // The recurrent state stores the un-dropped activations.
  CHECK(tape.layers[0].h == next.h[0]);
  CHECK(tape.layers[1].h == next.h[1]);
}

TEST_CASE("tape records the activations the heads saw") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 3;
  hp.input_dim = 2;
  hp.vocab_size = 4;
  RngState rng(8);
  ModelParams p = init_params(hp, rng);
  LstmState s = LstmState::zeros(hp);
  LstmState next;
  std::vector<double> x = {0.5, 0.6};
  StepTape tape;
  StepOutputs out = forward_step(p, s, x, 0, 2, next, 0.0, nullptr, &tape);
  CHECK(tape.emit_prob == out.emit_prob);
  CHECK(tape.dist == out.dist);
  CHECK(tape.layers[0].hdrop == out.top_h);
  CHECK(tape.layers[0].gates.size() == 12);
  CHECK(sigmoid(tape.emit_logit) == doctest::Approx(out.emit_prob).epsilon(1e-15));
}
