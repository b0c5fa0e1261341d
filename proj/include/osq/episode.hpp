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

#ifndef OSQ_EPISODE_HPP_
#define OSQ_EPISODE_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "osq/model.hpp"
#include "osq/rng.hpp"

namespace osq {

struct Example {
  std::string id;
  std::vector<std::vector<double>> inputs;  // T1 frames of width input_dim
  std::vector<int> targets;                 // T2 tokens, last one EOS

  int t1() const { return static_cast<int>(inputs.size()); }
  int t2() const { return static_cast<int>(targets.size()); }

  // Checks T2 <= T1, frame widths, token ranges, and the final EOS.
  void validate(const Hyperparams& hyper) const;
};

enum class Regularizer { kEntropy, kKl };

struct RewardConfig {
  Regularizer regularizer = Regularizer::kEntropy;
  double lambda = 0.0;
  double kl_target_rate = 0.5;  // only read by the kl variant

  void validate() const;
  bool operator==(const RewardConfig&) const = default;
};

/// Reward contribution of the emission decision itself at a free step:
/// entropy variant -lambda * log p(chosen bit); kl variant additionally
/// subtracts the log-probability under a fixed Bernoulli(q) reference.
double regularizer_terms(double b, int decision, const RewardConfig& cfg);

/// Decision constraint before step i (1-based). All targets already
/// emitted => forced 0; remaining input steps no more than remaining
/// targets => forced 1; otherwise the decision is free.
std::optional<int> forcing_rule(int t1, int t2, int i, int p_prev);

struct StepRecord {
  double b = 0.0;          // emission probability
  int decision = 0;        // sampled or forced bit
  bool forced = false;
  int position = 0;        // tokens emitted through this step
  int emitted_token = -1;  // target emitted at this step, -1 if none
  double reward = 0.0;
  std::vector<double> dist;   // output distribution, kept at emissions only
  std::vector<double> top_h;  // top-layer activations the heads consumed
};

struct Rollout {
  Example example;  // kept so gradients can replay the episode
  std::vector<StepRecord> steps;
  double total_reward = 0.0;
  RewardConfig reward_cfg;
  std::uint64_t seed = 0;  // decision-stream seed (caller-assigned tag)
  double dropout_rate = 0.0;
  std::uint64_t dropout_seed = 0;

  int emission_count() const;
  double mean_emission_prob() const;
};

/// Training episode: teacher-forced feedback, forcing rule, Bernoulli
/// sampling at free steps (exactly one draw each; forced steps draw
/// nothing), reward accumulation. When dropout_rate > 0 one extra draw
/// seeds a dedicated dropout stream, recorded for replay.
Rollout rollout_train(const ModelParams& params, const Example& example,
                      const RewardConfig& reward_cfg, RngState& rng,
                      double dropout_rate = 0.0);

/// Deterministic replay of an episode with the decision sequence pinned
/// (free steps read decisions[i-1]; forced steps must agree with the
/// recorded bit). Used by gradient replay and path enumeration.
Rollout rollout_with_decisions(const ModelParams& params,
                               const Example& example,
                               const RewardConfig& reward_cfg,
                               const std::vector<int>& decisions,
                               double dropout_rate = 0.0,
                               std::uint64_t dropout_seed = 0);

struct DecodeResult {
  std::vector<int> tokens;  // emitted tokens, including EOS if produced
  Rollout trace;            // rewards zero; records b, decisions, tokens
};

/// Inference: threshold the emission probability at 0.5, emit the argmax
/// token, feed back the model's own outputs; stops at end-of-sequence,
/// input exhaustion, or max_outputs emissions.
DecodeResult decode_greedy(const ModelParams& params,
                           const std::vector<std::vector<double>>& inputs,
                           int max_outputs);

/// One character per `group` consecutive input steps: 'x' if the episode
/// emitted inside the group, '-' otherwise.
std::string render_trace(const Rollout& rollout, int group = 3);

}  // namespace osq

#endif  // OSQ_EPISODE_HPP_
