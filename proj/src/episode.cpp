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

#include "osq/episode.hpp"

#include <algorithm>
#include <cmath>

#include "osq/error.hpp"
#include "osq/tensor.hpp"

namespace osq {

void Example::validate(const Hyperparams& hyper) const {
  require(!inputs.empty(), ErrorKind::kInvalidArgument,
          "example '" + id + "': inputs are empty");
  require(!targets.empty(), ErrorKind::kInvalidArgument,
          "example '" + id + "': targets are empty");
  require(t2() <= t1(), ErrorKind::kInvalidArgument,
          "example '" + id + "': more targets than input steps");
  for (const auto& frame : inputs) {
    require(static_cast<int>(frame.size()) == hyper.input_dim,
            ErrorKind::kInvalidArgument,
            "example '" + id + "': frame width mismatch");
    for (double v : frame)
      require(std::isfinite(v), ErrorKind::kInvalidArgument,
              "example '" + id + "': non-finite input value");
  }
  for (int tok : targets)
    require(tok >= 0 && tok < hyper.vocab_size, ErrorKind::kInvalidArgument,
            "example '" + id + "': target token out of range");
  require(targets.back() == hyper.eos_token(), ErrorKind::kInvalidArgument,
          "example '" + id + "': targets must end with the end token");
  for (std::size_t k = 0; k + 1 < targets.size(); ++k)
    require(targets[k] != hyper.eos_token(), ErrorKind::kInvalidArgument,
            "example '" + id + "': end token before the final position");
}

void RewardConfig::validate() const {
  require(std::isfinite(lambda) && lambda >= 0.0, ErrorKind::kConfig,
          "regularizer weight must be finite and nonnegative");
  require(kl_target_rate > 0.0 && kl_target_rate < 1.0, ErrorKind::kConfig,
          "kl target rate must lie strictly inside (0, 1)");
}

double regularizer_terms(double b, int decision, const RewardConfig& cfg) {
  require(decision == 0 || decision == 1, ErrorKind::kInvalidArgument,
          "decision must be 0 or 1");
  require(std::isfinite(b) && b >= 0.0 && b <= 1.0, ErrorKind::kDomain,
          "emission probability outside [0, 1]");
  if (cfg.lambda == 0.0) return 0.0;
  const double log_chosen =
      decision == 1 ? safe_log(b) : safe_log(1.0 - b);
  double value = -cfg.lambda * log_chosen;
  if (cfg.regularizer == Regularizer::kKl) {
    const double q = cfg.kl_target_rate;
    const double log_ref =
        decision == 1 ? std::log(q) : std::log(1.0 - q);
    value += cfg.lambda * log_ref;
  }
  return value;
}

std::optional<int> forcing_rule(int t1, int t2, int i, int p_prev) {
  require(i >= 1 && i <= t1, ErrorKind::kInvalidArgument,
          "step index outside 1..T1");
  require(p_prev >= 0 && p_prev <= t2, ErrorKind::kInvalidArgument,
          "position outside 0..T2");
  // Checked first: once every target is out, emitting again would run
  // past the target sequence.
  if (p_prev == t2) return 0;
  // The remaining input steps can only just fit the remaining targets.
  if (t1 - i <= t2 - p_prev) return 1;
  return std::nullopt;
}

int Rollout::emission_count() const {
  int n = 0;
  for (const auto& s : steps) n += s.decision;
  return n;
}

double Rollout::mean_emission_prob() const {
  if (steps.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : steps) sum += s.b;
  return sum / static_cast<double>(steps.size());
}

namespace {

// Shared episode loop; `decide` supplies the bit at free steps.
template <typename DecideFn>
Rollout run_episode(const ModelParams& params, const Example& example,
                    const RewardConfig& reward_cfg, DecideFn&& decide,
                    double dropout_rate, std::uint64_t dropout_seed) {
  example.validate(params.hyper);
  reward_cfg.validate();

  Rollout ro;
  ro.example = example;
  ro.reward_cfg = reward_cfg;
  ro.dropout_rate = dropout_rate;
  ro.dropout_seed = dropout_seed;

  const int t1 = example.t1();
  const int t2 = example.t2();
  RngState drop_rng(dropout_seed);
  RngState* drop = dropout_rate > 0.0 ? &drop_rng : nullptr;

  LstmState state = LstmState::zeros(params.hyper);
  LstmState next;
  int position = 0;
  int prev_emit = 0;
  int prev_token = params.hyper.bos_token();
  ro.steps.reserve(static_cast<std::size_t>(t1));

  for (int i = 1; i <= t1; ++i) {
    StepOutputs out =
        forward_step(params, state, example.inputs[static_cast<std::size_t>(i - 1)],
                     prev_emit, prev_token, next, dropout_rate, drop);
    StepRecord rec;
    rec.b = out.emit_prob;
    rec.top_h = out.top_h;

    const std::optional<int> forced = forcing_rule(t1, t2, i, position);
    rec.forced = forced.has_value();
    rec.decision = rec.forced ? *forced : decide(i, out.emit_prob);

    double reward = 0.0;
    if (!rec.forced)
      reward += regularizer_terms(out.emit_prob, rec.decision, reward_cfg);
    if (rec.decision == 1) {
      rec.emitted_token = example.targets[static_cast<std::size_t>(position)];
      reward += -softmax_logprob(out.dist, static_cast<std::size_t>(rec.emitted_token));
      rec.dist = out.dist;
      ++position;
    }
    rec.position = position;
    rec.reward = reward;
    ro.total_reward += reward;
    ro.steps.push_back(std::move(rec));

    prev_emit = rec.decision;
    prev_token = position == 0
                     ? params.hyper.bos_token()
                     : example.targets[static_cast<std::size_t>(position - 1)];
    state = next;
  }
  return ro;
}

}  // namespace

Rollout rollout_train(const ModelParams& params, const Example& example,
                      const RewardConfig& reward_cfg, RngState& rng,
                      double dropout_rate) {
  const std::uint64_t dropout_seed =
      dropout_rate > 0.0 ? rng.next_u64() : 0;
  return run_episode(
      params, example, reward_cfg,
      [&rng](int, double b) { return rng.bernoulli(b); }, dropout_rate,
      dropout_seed);
}

Rollout rollout_with_decisions(const ModelParams& params,
                               const Example& example,
                               const RewardConfig& reward_cfg,
                               const std::vector<int>& decisions,
                               double dropout_rate,
                               std::uint64_t dropout_seed) {
  require(static_cast<int>(decisions.size()) == example.t1(),
          ErrorKind::kInvalidArgument,
          "decision sequence length must equal the input length");
  for (int d : decisions)
    require(d == 0 || d == 1, ErrorKind::kInvalidArgument,
            "decisions must be bits");
  Rollout ro = run_episode(
      params, example, reward_cfg,
      [&decisions](int i, double) {
        return decisions[static_cast<std::size_t>(i - 1)];
      },
      dropout_rate, dropout_seed);
  for (int i = 0; i < example.t1(); ++i) {
    const auto& rec = ro.steps[static_cast<std::size_t>(i)];
    require(rec.decision == decisions[static_cast<std::size_t>(i)],
            ErrorKind::kInvalidArgument,
            "decision sequence conflicts with a forced step");
  }
  return ro;
}

DecodeResult decode_greedy(const ModelParams& params,
                           const std::vector<std::vector<double>>& inputs,
                           int max_outputs) {
  require(!inputs.empty(), ErrorKind::kInvalidArgument, "inputs are empty");
  require(max_outputs >= 1, ErrorKind::kInvalidArgument,
          "max_outputs must be positive");

  DecodeResult res;
  res.trace.example.id = "decode";
  res.trace.example.inputs = inputs;

  LstmState state = LstmState::zeros(params.hyper);
  LstmState next;
  int prev_emit = 0;
  int prev_token = params.hyper.bos_token();

  for (const auto& frame : inputs) {
    StepOutputs out =
        forward_step(params, state, frame, prev_emit, prev_token, next);
    StepRecord rec;
    rec.b = out.emit_prob;
    rec.top_h = out.top_h;
    rec.decision = out.emit_prob >= 0.5 ? 1 : 0;
    if (rec.decision == 1) {
      const auto arg = std::max_element(out.dist.begin(), out.dist.end());
      rec.emitted_token = static_cast<int>(arg - out.dist.begin());
      rec.dist = out.dist;
      res.tokens.push_back(rec.emitted_token);
      prev_token = rec.emitted_token;
    }
    prev_emit = rec.decision;
    rec.position = static_cast<int>(res.tokens.size());
    res.trace.steps.push_back(std::move(rec));
    state = next;

    const bool hit_eos =
        !res.tokens.empty() && res.tokens.back() == params.hyper.eos_token();
    if (hit_eos || static_cast<int>(res.tokens.size()) >= max_outputs) break;
  }
  return res;
}

std::string render_trace(const Rollout& rollout, int group) {
  require(group >= 1, ErrorKind::kInvalidArgument, "group must be >= 1");
  std::string line;
  const std::size_t n = rollout.steps.size();
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(group)) {
    bool any = false;
    for (std::size_t j = start;
         j < std::min(n, start + static_cast<std::size_t>(group)); ++j)
      any = any || rollout.steps[j].decision == 1;
    line.push_back(any ? 'x' : '-');
  }
  return line;
}

}  // namespace osq
