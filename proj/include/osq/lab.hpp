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

#ifndef OSQ_LAB_HPP_
#define OSQ_LAB_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "osq/gradient.hpp"

namespace osq {

// On-demand estimator verification: the same oracle machinery the test
// suite uses, packaged so the shipped binary can rerun it.

/// The four estimator variants, in reporting order.
std::vector<EstimatorConfig> estimator_variants(const RewardConfig& rc);
std::string variant_name(const EstimatorConfig& cfg);

struct GradcheckOptions {
  int layers = 1;
  int hidden = 2;
  int input_dim = 2;
  int t1 = 4;
  int t2 = 2;          // includes the end token
  int vocab = 3;
  double lambda = 0.5;
  Regularizer regularizer = Regularizer::kEntropy;
  std::uint64_t seed = 0;
  int instances = 4;   // independent random model/example draws
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Negative control: flips the score-function sign so the check MUST
  // fail; proves the harness can detect a wrong estimator.
  bool corrupt_score_sign = false;

  void validate() const;
};

struct GradcheckVariant {
  std::string variant;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckVariant> variants;
  double tolerance = 0.0;
  int instances = 0;
  bool pass = false;
};

/// Draws `instances` random tiny models and examples, enumerates every
/// estimator variant's expected gradient, and compares each coordinate
/// against central finite differences of the enumerated expected reward.
GradcheckReport gradcheck_run(const GradcheckOptions& opts);
std::string render_gradcheck(const GradcheckReport& report);

/// Options from {"layers","hidden","input_dim","t1","t2","vocab",
/// "lambda","regularizer","seed","instances","epsilon","tolerance",
/// "corrupt_score_sign"}; missing keys keep defaults.
GradcheckOptions gradcheck_options_from_json(const nlohmann::json& j);

struct VarlabOptions {
  int layers = 1;
  int hidden = 2;
  int input_dim = 2;
  int t1 = 4;
  int t2 = 2;          // includes the end token
  int vocab = 3;
  double lambda = 0.5;
  Regularizer regularizer = Regularizer::kEntropy;
  std::uint64_t seed = 0;
  int samples = 10000;

  void validate() const;
};

struct VarlabRow {
  std::string variant;
  std::size_t coord = 0;
  double mean = 0.0;
  double variance = 0.0;
  double bias = 0.0;
};

struct VarlabSummary {
  std::string variant;
  double total_variance = 0.0;  // summed over coordinates
  double max_abs_bias = 0.0;
  double max_bias_sigmas = 0.0;  // |bias| / standard error, worst coord
};

struct VarlabReport {
  std::vector<VarlabRow> rows;
  std::vector<VarlabSummary> summaries;
  int samples = 0;
};

/// Fixes one tiny model (with a baseline fitted on warmup rollouts),
/// samples single-rollout gradient estimates per variant, and reports
/// per-coordinate mean, variance and bias against the enumerated truth.
VarlabReport varlab_run(const VarlabOptions& opts);
std::string render_varlab_csv(const VarlabReport& report);

/// Options from {"layers","hidden","input_dim","t1","t2","vocab",
/// "lambda","regularizer","seed","samples"}; missing keys keep defaults.
VarlabOptions varlab_options_from_json(const nlohmann::json& j);

}  // namespace osq

#endif  // OSQ_LAB_HPP_
