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

#ifndef OSQ_TRAINING_HPP_
#define OSQ_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "osq/episode.hpp"
#include "osq/gradient.hpp"
#include "osq/model.hpp"

namespace osq {

enum class ScheduleVariant { kTimit, kWsj, kConstant };

/// Decaying regularizer weight: base * rate^(step/divisor - offset) +
/// floor, optionally held at hold_value for the first hold_steps steps
/// (the wsj shape), or a constant. cap, when set, upper-bounds the
/// result.
struct EntropyScheduleSpec {
  ScheduleVariant variant = ScheduleVariant::kTimit;
  double base = 1.0;
  double rate = 0.97;
  double divisor = 10000.0;
  double offset = 0.0;
  double floor = 0.1;
  std::uint64_t hold_steps = 0;
  double hold_value = 1.0;
  double value = 1.0;  // constant variant
  std::optional<double> cap;

  void validate() const;
};

double entropy_schedule(std::uint64_t step, const EntropyScheduleSpec& spec);

struct DropoutRamp {
  std::uint64_t start = 5000;
  std::uint64_t end = 20000;
  double target = 0.15;

  void validate() const;
};

double dropout_schedule(std::uint64_t step, const DropoutRamp& ramp);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  static OptimizerState zeros_like(const ModelParams& params);
};

/// One Adam update in the ascent direction (params += step). Returns
/// false — leaving params and moments untouched — when the gradient
/// contains a non-finite value.
bool adam_step(OptimizerState& opt, ModelParams& params,
               const GradEstimate& grad, const AdamConfig& cfg);

struct TrainConfig {
  Hyperparams model;
  AdamConfig adam;
  double clip_norm = 30.0;
  int batch_size = 16;
  std::uint64_t max_steps = 1000;
  std::uint64_t seed = 0;
  std::uint64_t eval_interval = 200;
  std::uint64_t checkpoint_interval = 1000;
  double baseline_lr = 0.05;
  double stop_ler = -1.0;  // early stop when eval error <= this; <0 disables
  std::string out_dir = "out";
  EstimatorConfig estimator;  // reward_cfg.lambda is driven by the schedule
  EntropyScheduleSpec entropy;
  DropoutRamp dropout;
  std::vector<int> buckets = {16, 32, 64, 128};

  void validate() const;

  /// Reads a flat object of dotted keys ("train.lr", "model.hidden",
  /// "buckets", ...). Unknown keys and wrong value types are config
  /// errors; missing keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& flat);
  nlohmann::json to_json() const;  // flat form with every key explicit
};

struct Bucket {
  int cutoff = 0;  // pad-to length; -1 for the overflow bucket
  std::vector<std::size_t> indices;
};

/// Groups example indices by input length: smallest boundary >= T1, with
/// everything past the last boundary in one overflow bucket. Buckets
/// appear in boundary order; empty buckets are dropped.
std::vector<Bucket> make_buckets(const std::vector<Example>& examples,
                                 const std::vector<int>& boundaries);

/// Copy of the example with zero input frames appended up to `length`.
Example pad_example(const Example& example, int length);

/// Inverse of pad_example: drops trailing frames down to true_t1. Padded
/// steps never reach an episode, which is what keeps them out of every
/// reward, decision-probability, and gradient sum.
Example unpad_example(const Example& example, int true_t1);

/// Deterministic batch plan for one epoch: per-bucket Fisher-Yates
/// shuffle, chunks of batch_size (tail chunk kept), then the chunk order
/// itself shuffled. Every batch stays inside one bucket.
std::vector<std::vector<std::size_t>> make_batch_plan(
    const std::vector<Bucket>& buckets, int batch_size, std::uint64_t seed,
    std::uint64_t epoch);

struct Checkpoint {
  ModelParams params;
  OptimizerState opt;
  BaselineStats stats;
  std::uint64_t step = 0;
};

/// Binary format: magic "OSQ2SQ1\0", little-endian u64 JSON-header
/// length, the UTF-8 JSON header (hyperparameters, train step, tensor
/// manifest), then raw little-endian f64 payloads in manifest order.
/// save -> load -> save is byte-identical.
void save_checkpoint(const ModelParams& params, const OptimizerState& opt,
                     const BaselineStats& stats, std::uint64_t step,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

using EvalFn = std::function<double(const ModelParams&)>;
using ProgressFn =
    std::function<void(std::uint64_t step, const std::string& json_line)>;

struct TrainResult {
  ModelParams params;
  OptimizerState opt;
  BaselineStats stats;
  std::uint64_t steps_completed = 0;
  bool early_stopped = false;
  double last_ler = -1.0;
  std::string final_checkpoint;
  std::vector<std::string> log_lines;
};

/// Synchronous training: per step draws a bucketed batch, rolls every
/// example out under the scheduled regularizer weight and dropout rate,
/// estimates the hybrid gradient, clips by global norm, applies Adam,
/// and refreshes the baseline. Writes checkpoints (one up front, one per
/// interval, one at the end) and one JSON log line per step to
/// out_dir/train_log.jsonl. eval_fn, when given, is called every
/// eval_interval steps and its error rate is logged (and checked against
/// stop_ler). Ten consecutive non-finite gradients abort, naming the
/// last good checkpoint.
TrainResult train_loop(const TrainConfig& config,
                       const std::vector<Example>& train_set,
                       const EvalFn& eval_fn = nullptr,
                       const ProgressFn& progress = nullptr);

}  // namespace osq

#endif  // OSQ_TRAINING_HPP_
