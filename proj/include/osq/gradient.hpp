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

#ifndef OSQ_GRADIENT_HPP_
#define OSQ_GRADIENT_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "osq/episode.hpp"
#include "osq/model.hpp"

namespace osq {

/// Gradients in the fixed tensor-registry order of ModelParams, plus
/// batch diagnostics.
struct GradEstimate {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  double mean_reward = 0.0;
  double mean_log_rho = 0.0;
  double mean_emission_prob = 0.0;
  std::vector<std::vector<double>> returns;  // per rollout, per step

  static GradEstimate zeros_like(const ModelParams& params);
  bool all_finite() const;
  void scale(double factor);
  void add(const GradEstimate& other);  // tensors only
};

/// Running first/second moments of observed returns (Welford); used to
/// normalize the regression target of the baseline head.
struct BaselineStats {
  double mean = 0.0;
  double m2 = 0.0;
  std::uint64_t count = 0;

  void observe(double value);
  double variance() const;
  /// Standard deviation with a floor of 1 until it is well defined.
  double stddev() const;
};

struct EstimatorConfig {
  bool use_baseline = false;
  bool use_rao_blackwell = false;
  // Whether the regularizer's direct dependence on the emission
  // probability is backpropagated (its effect through the sampled
  // decisions always is).
  bool regularizer_pathwise = true;
  // Multiplies the score-function term. Always 1 for training; the
  // gradient checker sets -1 as a negative control to prove it can
  // detect a wrong estimator.
  double score_scale = 1.0;
  RewardConfig reward_cfg;
};

/// Log-probability of the episode's free decisions under the recorded
/// emission probabilities; forced steps contribute nothing.
double log_rho(const Rollout& rollout);

/// Suffix sums of the per-step rewards: G_t = sum of rewards from t on.
std::vector<double> returns_to_go(const Rollout& rollout);

/// Predicted return for one step: affine read-out of the top hidden
/// vector, denormalized by the running return statistics.
double baseline_predict(const ModelParams& params, const BaselineStats& stats,
                        std::span<const double> top_h);

/// Folds the batch's returns into the running statistics, then takes one
/// averaged least-mean-squares step fitting the baseline head to the
/// normalized returns at free steps. No gradient reaches the rest of the
/// model. An empty batch leaves everything unchanged.
void baseline_update(ModelParams& params, BaselineStats& stats,
                     std::span<const Rollout> rollouts, double learning_rate);

/// Hybrid estimator of the gradient of expected total reward (ascent
/// direction): backpropagation through the realized reward terms with
/// decisions held fixed, plus a score-function term whose per-step
/// coefficient is the total reward (optionally minus a baseline) or,
/// with use_rao_blackwell, the return-to-go (optionally minus a per-step
/// baseline). Averaged over the batch in order. Baseline tensors get
/// zero gradient here; baseline_update trains them.
GradEstimate estimate_gradient(const ModelParams& params,
                               std::span<const Rollout> rollouts,
                               const EstimatorConfig& cfg,
                               const BaselineStats& stats = {});

/// Exact expected total reward: sum over every forcing-consistent
/// decision sequence of its probability times its reward. Capacity error
/// above 2^20 paths.
double enumerate_expected_reward(const ModelParams& params,
                                 const Example& example,
                                 const RewardConfig& reward_cfg);

/// Central finite differences of enumerate_expected_reward, one
/// coordinate at a time. epsilon must lie in [1e-7, 1e-3].
GradEstimate finite_difference_gradient(const ModelParams& params,
                                        const Example& example,
                                        const RewardConfig& reward_cfg,
                                        double epsilon);

/// Exact expectation of estimate_gradient under the policy: enumerates
/// every decision path, weights each path's single-rollout estimate by
/// its probability. Verification oracle.
GradEstimate enumerate_expected_gradient(const ModelParams& params,
                                         const Example& example,
                                         const EstimatorConfig& cfg,
                                         const BaselineStats& stats = {});

}  // namespace osq

#endif  // OSQ_GRADIENT_HPP_
