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
#include <vector>

#include "osq/episode.hpp"
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

Example synthetic_example(const Hyperparams& hp, int t1, int t2,
                          std::uint64_t seed) {
  Example ex;
  ex.id = "synthetic";
  RngState rng(seed);
  ex.inputs.assign(static_cast<std::size_t>(t1),
                   std::vector<double>(static_cast<std::size_t>(hp.input_dim)));
  for (auto& frame : ex.inputs)
    for (double& v : frame) v = rng.normal(0.0, 1.0);
  for (int k = 0; k + 1 < t2; ++k)
    ex.targets.push_back(static_cast<int>(rng.next_u64() %
                                          static_cast<std::uint64_t>(
                                              hp.vocab_size - 2)));
  ex.targets.push_back(hp.eos_token());
  return ex;
}

// All decision vectors consistent with the forcing rule. The forced
// pattern depends only on (t1, t2, positions), never on the model.
void enumerate_paths(int t1, int t2, int i, int p_prev,
                     std::vector<int>& prefix,
                     std::vector<std::vector<int>>& out) {
  if (i > t1) {
    out.push_back(prefix);
    return;
  }
  auto forced = forcing_rule(t1, t2, i, p_prev);
  for (int bit = 0; bit <= 1; ++bit) {
    if (forced && *forced != bit) continue;
    prefix.push_back(bit);
    enumerate_paths(t1, t2, i + 1, p_prev + bit, prefix, out);
    prefix.pop_back();
  }
}

std::vector<std::vector<int>> all_paths(int t1, int t2) {
  std::vector<std::vector<int>> out;
  std::vector<int> prefix;
  enumerate_paths(t1, t2, 1, 0, prefix, out);
  return out;
}

double path_probability(const Rollout& ro) {
  double rho = 1.0;
  for (const auto& s : ro.steps)
    if (!s.forced) rho *= s.decision == 1 ? s.b : 1.0 - s.b;
  return rho;
}

}  // namespace

TEST_CASE("forcing rule on saturated, slack and exhausted cases") {
  // T1 == T2 forces emission from the first step onward.
  for (int i = 1; i <= 5; ++i) {
    auto f = forcing_rule(5, 5, i, i - 1);
    REQUIRE(f.has_value());
    CHECK(*f == 1);
  }
  CHECK_FALSE(forcing_rule(10, 2, 1, 0).has_value());
  auto done = forcing_rule(10, 2, 5, 2);
  REQUIRE(done.has_value());
  CHECK(*done == 0);
  // When every target is out at the last step, waiting wins over the
  // just-fits condition (emitting would run past the target sequence).
  auto last = forcing_rule(2, 1, 2, 1);
  REQUIRE(last.has_value());
  CHECK(*last == 0);
  CHECK_THROWS_AS((void)forcing_rule(5, 5, 0, 0), Error);
  CHECK_THROWS_AS((void)forcing_rule(5, 5, 6, 0), Error);
  CHECK_THROWS_AS((void)forcing_rule(5, 2, 1, 3), Error);
}

TEST_CASE("every rule-respecting path emits exactly T2 tokens") {
  for (int t1 = 1; t1 <= 8; ++t1) {
    for (int t2 = 1; t2 <= t1; ++t2) {
      for (const auto& path : all_paths(t1, t2)) {
        int emitted = 0;
        for (int bit : path) emitted += bit;
        CHECK(emitted == t2);
      }
    }
  }
}

TEST_CASE("uniform model: reward is the same constant on every path") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 2;
  hp.input_dim = 1;
  hp.vocab_size = 4;
  ModelParams p = zero_params(hp);
  Example ex = synthetic_example(hp, 3, 1, 3);
  RewardConfig rc;  // lambda = 0

  const double expected = std::log(1.0 / 4.0);
  CHECK(all_paths(3, 1).size() == 2);
  for (const auto& path : all_paths(3, 1)) {
    Rollout ro = rollout_with_decisions(p, ex, rc, path);
    CHECK(ro.total_reward == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("sampled rollouts are reproducible from the seed") {
  Hyperparams hp;
  hp.num_layers = 2;
  hp.hidden_size = 3;
  hp.input_dim = 2;
  hp.vocab_size = 4;
  RngState init(5);
  ModelParams p = init_params(hp, init);
  Example ex = synthetic_example(hp, 6, 3, 11);
  RewardConfig rc;
  rc.lambda = 0.2;

  RngState r1(77), r2(77);
  Rollout a = rollout_train(p, ex, rc, r1, 0.25);
  Rollout b = rollout_train(p, ex, rc, r2, 0.25);
  REQUIRE(a.steps.size() == b.steps.size());
  CHECK(a.total_reward == b.total_reward);
  CHECK(a.dropout_seed == b.dropout_seed);
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].b == b.steps[i].b);
    CHECK(a.steps[i].decision == b.steps[i].decision);
    CHECK(a.steps[i].reward == b.steps[i].reward);
    CHECK(a.steps[i].top_h == b.steps[i].top_h);
  }
}

TEST_CASE("free steps draw once, forced steps draw nothing") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 2;
  hp.input_dim = 1;
  hp.vocab_size = 3;
  RngState init(9);
  ModelParams p = init_params(hp, init);
  Example ex = synthetic_example(hp, 7, 3, 2);
  RewardConfig rc;

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngState rng(seed);
    Rollout ro = rollout_train(p, ex, rc, rng);
    std::uint64_t free = 0;
    for (const auto& s : ro.steps) free += s.forced ? 0 : 1;
    CHECK(rng.draws() == free);
  }

  // Dropout adds exactly one extra draw (the stream seed).
  RngState rng(4);
  Rollout ro = rollout_train(p, ex, rc, rng, 0.5);
  std::uint64_t free = 0;
  for (const auto& s : ro.steps) free += s.forced ? 0 : 1;
  CHECK(rng.draws() == free + 1);

  // A fully forced episode consumes no draws at all.
  Example sat = synthetic_example(hp, 4, 4, 6);
  RngState rng2(8);
  Rollout forced_ro = rollout_train(p, sat, rc, rng2);
  CHECK(rng2.draws() == 0);
  for (const auto& s : forced_ro.steps) CHECK(s.forced);
}

TEST_CASE("path probabilities sum to one on enumerable shapes") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 3;
  hp.input_dim = 2;
  hp.vocab_size = 3;
  RngState init(13);
  ModelParams p = init_params(hp, init);
  RewardConfig rc;

  for (auto [t1, t2] : std::vector<std::pair<int, int>>{
           {4, 2}, {6, 3}, {10, 4}, {5, 1}}) {
    Example ex = synthetic_example(hp, t1, t2, 100 + static_cast<std::uint64_t>(t1));
    double total = 0.0;
    for (const auto& path : all_paths(t1, t2))
      total += path_probability(rollout_with_decisions(p, ex, rc, path));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("rollout bookkeeping invariants") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 4;
  hp.input_dim = 2;
  hp.vocab_size = 5;
  RngState init(21);
  ModelParams p = init_params(hp, init);
  RewardConfig rc;

  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    RngState shape_rng(trial);
    const int t1 = 1 + static_cast<int>(shape_rng.next_u64() % 12);
    const int t2 = 1 + static_cast<int>(shape_rng.next_u64() %
                                        static_cast<std::uint64_t>(t1));
    Example ex = synthetic_example(hp, t1, t2, trial + 500);
    RngState rng(trial);
    Rollout ro = rollout_train(p, ex, rc, rng);

    int prev_pos = 0;
    std::vector<int> emitted;
    double reward_sum = 0.0;
    for (const auto& s : ro.steps) {
      CHECK(s.position >= prev_pos);
      CHECK(s.position - prev_pos == s.decision);
      if (s.decision == 1) {
        emitted.push_back(s.emitted_token);
        CHECK_FALSE(s.dist.empty());
      } else {
        CHECK(s.reward == 0.0);  // lambda = 0: only emissions score
        CHECK(s.dist.empty());
      }
      CHECK(static_cast<int>(s.top_h.size()) == hp.hidden_size);
      prev_pos = s.position;
      reward_sum += s.reward;
    }
    CHECK(prev_pos == t2);
    CHECK(emitted == ex.targets);
    CHECK(ro.total_reward == doctest::Approx(reward_sum).epsilon(1e-12));
  }
}

TEST_CASE("forcing completion under fuzzed shapes and random models") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 2;
  hp.input_dim = 1;
  hp.vocab_size = 3;
  RngState init(31);
  ModelParams p = init_params(hp, init);
  RewardConfig rc;

  RngState fuzz(2026);
  for (int trial = 0; trial < 2000; ++trial) {
    const int t1 = 1 + static_cast<int>(fuzz.next_u64() % 30);
    const int t2 = 1 + static_cast<int>(fuzz.next_u64() %
                                        static_cast<std::uint64_t>(t1));
    Example ex = synthetic_example(hp, t1, t2, fuzz.next_u64());
    RngState rng(fuzz.next_u64());
    Rollout ro = rollout_train(p, ex, rc, rng);
    CHECK(ro.steps.back().position == t2);
  }
}

TEST_CASE("regularizer values at reference points") {
  RewardConfig entropy;
  entropy.lambda = 1.0;
  CHECK(regularizer_terms(0.5, 1, entropy) ==
        doctest::Approx(0.693147180559945309).epsilon(1e-14));
  CHECK(regularizer_terms(0.5, 0, entropy) ==
        doctest::Approx(0.693147180559945309).epsilon(1e-14));

  RewardConfig off;
  CHECK(regularizer_terms(0.9, 1, off) == 0.0);

  RewardConfig kl;
  kl.regularizer = Regularizer::kKl;
  kl.lambda = 0.7;
  kl.kl_target_rate = 0.3;
  CHECK(regularizer_terms(0.3, 1, kl) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(regularizer_terms(0.3, 0, kl) == doctest::Approx(0.0).epsilon(1e-14));
  // Away from the target rate: -lambda*log(b/q) for an emission.
  CHECK(regularizer_terms(0.6, 1, kl) ==
        doctest::Approx(-0.7 * std::log(0.6 / 0.3)).epsilon(1e-12));

  CHECK_THROWS_AS((void)regularizer_terms(1.5, 1, entropy), Error);
  CHECK_THROWS_AS((void)regularizer_terms(0.5, 2, entropy), Error);
}

TEST_CASE("enumerated regularizer reward equals its expected entropy") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 3;
  hp.input_dim = 1;
  hp.vocab_size = 3;
  RngState init(41);
  ModelParams p = init_params(hp, init);
  Example ex = synthetic_example(hp, 5, 2, 77);
  RewardConfig rc;
  rc.lambda = 0.8;

  // E[sum of -lambda*log p(chosen bit)] should equal lambda times the
  // expected summed Bernoulli entropy of the free steps.
  double reg_expectation = 0.0;
  double entropy_expectation = 0.0;
  for (const auto& path : all_paths(5, 2)) {
    Rollout ro = rollout_with_decisions(p, ex, rc, path);
    const double rho = path_probability(ro);
    double reg = 0.0, ent = 0.0;
    for (const auto& s : ro.steps) {
      if (s.forced) continue;
      reg += regularizer_terms(s.b, s.decision, rc);
      ent += -(s.b * std::log(s.b) + (1.0 - s.b) * std::log(1.0 - s.b));
    }
    reg_expectation += rho * reg;
    entropy_expectation += rho * ent;
  }
  CHECK(reg_expectation ==
        doctest::Approx(rc.lambda * entropy_expectation).epsilon(1e-10));
}

TEST_CASE("pinned replay reproduces a sampled rollout") {
  Hyperparams hp;
  hp.num_layers = 2;
  hp.hidden_size = 3;
  hp.input_dim = 2;
  hp.vocab_size = 4;
  RngState init(51);
  ModelParams p = init_params(hp, init);
  Example ex = synthetic_example(hp, 8, 4, 99);
  RewardConfig rc;
  rc.lambda = 0.3;

  RngState rng(123);
  Rollout sampled = rollout_train(p, ex, rc, rng, 0.4);
  std::vector<int> decisions;
  for (const auto& s : sampled.steps) decisions.push_back(s.decision);
  Rollout replay = rollout_with_decisions(p, ex, rc, decisions, 0.4,
                                          sampled.dropout_seed);
  CHECK(replay.total_reward == sampled.total_reward);
  for (std::size_t i = 0; i < sampled.steps.size(); ++i) {
    CHECK(replay.steps[i].b == sampled.steps[i].b);
    CHECK(replay.steps[i].forced == sampled.steps[i].forced);
    CHECK(replay.steps[i].reward == sampled.steps[i].reward);
  }

  // Contradicting a forced step is rejected.
  Example tight = synthetic_example(hp, 3, 3, 7);
  CHECK_THROWS_AS(
      (void)rollout_with_decisions(p, tight, rc, std::vector<int>{0, 1, 1}),
      Error);
  CHECK_THROWS_AS(
      (void)rollout_with_decisions(p, ex, rc, std::vector<int>{1}), Error);
}

TEST_CASE("greedy decoding stops on end token, threshold, or budget") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 2;
  hp.input_dim = 1;
  hp.vocab_size = 3;
  ModelParams never = zero_params(hp);
  never.emit_b.data[0] = -10.0;
  std::vector<std::vector<double>> inputs(6, std::vector<double>{0.0});

  DecodeResult out = decode_greedy(never, inputs, 10);
  CHECK(out.tokens.empty());
  CHECK(out.trace.steps.size() == 6);

  ModelParams always = zero_params(hp);
  always.emit_b.data[0] = 10.0;
  always.out_b.data[static_cast<std::size_t>(hp.eos_token())] = 10.0;
  DecodeResult eos = decode_greedy(always, inputs, 10);
  REQUIRE(eos.tokens.size() == 1);
  CHECK(eos.tokens[0] == hp.eos_token());
  CHECK(eos.trace.steps.size() == 1);

  ModelParams chatty = zero_params(hp);
  chatty.emit_b.data[0] = 10.0;
  chatty.out_b.data[0] = 10.0;  // peak on a regular token, never EOS
  DecodeResult budget = decode_greedy(chatty, inputs, 4);
  CHECK(budget.tokens.size() == 4);
}

TEST_CASE("trace rendering groups input steps") {
  auto with_emissions = [](int t1, std::vector<int> at) {
    Rollout ro;
    ro.steps.assign(static_cast<std::size_t>(t1), StepRecord{});
    for (int i : at) ro.steps[static_cast<std::size_t>(i - 1)].decision = 1;
    return ro;
  };
  CHECK(render_trace(with_emissions(9, {1, 2, 3})) == "x--");
  CHECK(render_trace(with_emissions(9, {4, 9})) == "-xx");
  CHECK(render_trace(with_emissions(6, {})) == "--");
  CHECK(render_trace(with_emissions(7, {7})) == "--x");
  CHECK(render_trace(with_emissions(4, {2}), 1) == "-x--");
  CHECK_THROWS_AS((void)render_trace(with_emissions(4, {}), 0), Error);
}

TEST_CASE("example validation rejects malformed data") {
  Hyperparams hp;
  hp.num_layers = 1;
  hp.hidden_size = 2;
  hp.input_dim = 2;
  hp.vocab_size = 4;

  Example good = synthetic_example(hp, 4, 2, 1);
  CHECK_NOTHROW(good.validate(hp));

  Example more_targets = good;
  more_targets.targets = {0, 1, 0, 1, hp.eos_token()};
  CHECK_THROWS_AS(more_targets.validate(hp), Error);

  Example no_end = good;
  no_end.targets.back() = 0;
  CHECK_THROWS_AS(no_end.validate(hp), Error);

  Example early_end = good;
  early_end.targets = {hp.eos_token(), hp.eos_token()};
  CHECK_THROWS_AS(early_end.validate(hp), Error);

  Example bad_width = good;
  bad_width.inputs[1].push_back(0.0);
  CHECK_THROWS_AS(bad_width.validate(hp), Error);

  Example bad_token = good;
  bad_token.targets[0] = 9;
  CHECK_THROWS_AS(bad_token.validate(hp), Error);

  Example empty;
  empty.id = "empty";
  CHECK_THROWS_AS(empty.validate(hp), Error);
}
