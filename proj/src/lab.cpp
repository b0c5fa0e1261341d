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

#include "osq/lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <type_traits>

#include "osq/error.hpp"

namespace osq {

namespace {

// Strict flat-JSON reader shared by the option parsers below.
class OptionReader {
 public:
  explicit OptionReader(const nlohmann::json& j) : j_(j) {
    require(j.is_object(), ErrorKind::kConfig,
            "options must be a JSON object");
  }

  template <typename T>
  void number(const char* key, T& target) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if constexpr (std::is_integral_v<T>) {
      require(j_.at(key).is_number_integer(), ErrorKind::kConfig,
              std::string("option '") + key + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>)
        require(j_.at(key).get<double>() >= 0.0, ErrorKind::kConfig,
                std::string("option '") + key + "' must be nonnegative");
    } else {
      require(j_.at(key).is_number(), ErrorKind::kConfig,
              std::string("option '") + key + "' must be a number");
    }
    target = j_.at(key).get<T>();
  }

  void boolean(const char* key, bool& target) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    require(j_.at(key).is_boolean(), ErrorKind::kConfig,
            std::string("option '") + key + "' must be a boolean");
    target = j_.at(key).get<bool>();
  }

  void regularizer(const char* key, Regularizer& target) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    require(j_.at(key).is_string(), ErrorKind::kConfig,
            std::string("option '") + key + "' must be a string");
    const std::string name = j_.at(key).get<std::string>();
    if (name == "entropy") {
      target = Regularizer::kEntropy;
    } else if (name == "kl") {
      target = Regularizer::kKl;
    } else {
      fail(ErrorKind::kConfig, "regularizer must be 'entropy' or 'kl'");
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      require(seen_.count(it.key()) != 0, ErrorKind::kConfig,
              "unknown option '" + it.key() + "'");
  }

 private:
  const nlohmann::json& j_;
  std::set<std::string> seen_;
};

}  // namespace

namespace {

constexpr std::uint64_t kTagInstance = 23;
constexpr std::uint64_t kTagWarmup = 29;
constexpr std::uint64_t kTagSample = 31;

struct Instance {
  ModelParams params;
  BaselineStats stats;
  Example example;
};

Instance build_instance(std::uint64_t seed, int layers, int hidden,
                        int input_dim, int t1, int t2, int vocab) {
  RngState rng(seed);
  Hyperparams h;
  h.num_layers = layers;
  h.hidden_size = hidden;
  h.input_dim = input_dim;
  h.vocab_size = vocab;
  h.init_scale = 0.4;
  Instance inst{init_params(h, rng), {}, {}};
  for (int k = 0; k < 3; ++k) inst.stats.observe(rng.normal(-2.0, 1.0));

  inst.example.id = "lab-" + std::to_string(seed);
  for (int i = 0; i < t1; ++i) {
    std::vector<double> frame;
    for (int d = 0; d < input_dim; ++d)
      frame.push_back(rng.normal(0.0, 1.0));
    inst.example.inputs.push_back(std::move(frame));
  }
  for (int j = 0; j < t2 - 1; ++j)
    inst.example.targets.push_back(
        static_cast<int>(rng.uniform_int(0, vocab - 3)));
  inst.example.targets.push_back(h.eos_token());
  inst.example.validate(h);
  return inst;
}

double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

void validate_shape(int layers, int hidden, int input_dim, int t1, int t2,
                    int vocab, double lambda) {
  require(layers >= 1 && hidden >= 1 && input_dim >= 1, ErrorKind::kConfig,
          "model sizes must be positive");
  require(t2 >= 1 && t1 >= t2, ErrorKind::kConfig,
          "need 1 <= t2 <= t1");
  require(vocab >= 3, ErrorKind::kConfig,
          "vocab must hold at least one plain token");
  require(std::isfinite(lambda) && lambda >= 0.0, ErrorKind::kConfig,
          "regularizer weight must be nonnegative");
}

}  // namespace

std::vector<EstimatorConfig> estimator_variants(const RewardConfig& rc) {
  std::vector<EstimatorConfig> variants(4);
  for (std::size_t i = 0; i < variants.size(); ++i) {
    variants[i].use_rao_blackwell = (i & 2) != 0;
    variants[i].use_baseline = (i & 1) != 0;
    variants[i].reward_cfg = rc;
  }
  return variants;
}

std::string variant_name(const EstimatorConfig& cfg) {
  if (cfg.use_rao_blackwell)
    return cfg.use_baseline ? "per_step+baseline" : "per_step";
  return cfg.use_baseline ? "whole+baseline" : "whole";
}

void GradcheckOptions::validate() const {
  validate_shape(layers, hidden, input_dim, t1, t2, vocab, lambda);
  require(instances >= 1, ErrorKind::kConfig, "need at least one instance");
  require(epsilon >= 1e-7 && epsilon <= 1e-3, ErrorKind::kConfig,
          "step size must lie in [1e-7, 1e-3]");
  require(std::isfinite(tolerance) && tolerance > 0.0, ErrorKind::kConfig,
          "tolerance must be positive");
}

GradcheckReport gradcheck_run(const GradcheckOptions& opts) {
  opts.validate();
  RewardConfig rc;
  rc.regularizer = opts.regularizer;
  rc.lambda = opts.lambda;

  GradcheckReport report;
  report.tolerance = opts.tolerance;
  report.instances = opts.instances;
  const std::vector<EstimatorConfig> variants = estimator_variants(rc);
  report.variants.resize(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v)
    report.variants[v].variant = variant_name(variants[v]);

  for (int inst = 0; inst < opts.instances; ++inst) {
    Instance in = build_instance(
        derive_seed(opts.seed, kTagInstance, static_cast<std::uint64_t>(inst)),
        opts.layers, opts.hidden, opts.input_dim, opts.t1, opts.t2,
        opts.vocab);
    const GradEstimate fd =
        finite_difference_gradient(in.params, in.example, rc, opts.epsilon);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      EstimatorConfig cfg = variants[v];
      if (opts.corrupt_score_sign) cfg.score_scale = -1.0;
      const GradEstimate eg =
          enumerate_expected_gradient(in.params, in.example, cfg, in.stats);
      double worst = 0.0;
      for (std::size_t t = 0; t < eg.tensors.size(); ++t)
        for (std::size_t k = 0; k < eg.tensors[t].size(); ++k)
          worst = std::max(worst, rel_error(eg.tensors[t].data[k],
                                            fd.tensors[t].data[k]));
      report.variants[v].max_rel_error =
          std::max(report.variants[v].max_rel_error, worst);
    }
  }

  report.pass = true;
  for (auto& v : report.variants) {
    v.pass = v.max_rel_error <= opts.tolerance;
    report.pass = report.pass && v.pass;
  }
  return report;
}

std::string render_gradcheck(const GradcheckReport& report) {
  std::ostringstream out;
  char buf[128];
  for (const auto& v : report.variants) {
    std::snprintf(buf, sizeof buf, "%-18s max-rel-error %.3e  %s\n",
                  v.variant.c_str(), v.max_rel_error,
                  v.pass ? "ok" : "FAIL");
    out << buf;
  }
  std::snprintf(buf, sizeof buf,
                "gradcheck: %s (tolerance %.1e, %d instances)\n",
                report.pass ? "PASS" : "FAIL", report.tolerance,
                report.instances);
  out << buf;
  return out.str();
}

GradcheckOptions gradcheck_options_from_json(const nlohmann::json& j) {
  GradcheckOptions opts;
  OptionReader r(j);
  r.number("layers", opts.layers);
  r.number("hidden", opts.hidden);
  r.number("input_dim", opts.input_dim);
  r.number("t1", opts.t1);
  r.number("t2", opts.t2);
  r.number("vocab", opts.vocab);
  r.number("lambda", opts.lambda);
  r.regularizer("regularizer", opts.regularizer);
  r.number("seed", opts.seed);
  r.number("instances", opts.instances);
  r.number("epsilon", opts.epsilon);
  r.number("tolerance", opts.tolerance);
  r.boolean("corrupt_score_sign", opts.corrupt_score_sign);
  r.finish();
  opts.validate();
  return opts;
}

void VarlabOptions::validate() const {
  validate_shape(layers, hidden, input_dim, t1, t2, vocab, lambda);
  require(samples >= 1000, ErrorKind::kConfig,
          "need at least 1000 samples for stable variance estimates");
}

VarlabOptions varlab_options_from_json(const nlohmann::json& j) {
  VarlabOptions opts;
  OptionReader r(j);
  r.number("layers", opts.layers);
  r.number("hidden", opts.hidden);
  r.number("input_dim", opts.input_dim);
  r.number("t1", opts.t1);
  r.number("t2", opts.t2);
  r.number("vocab", opts.vocab);
  r.number("lambda", opts.lambda);
  r.regularizer("regularizer", opts.regularizer);
  r.number("seed", opts.seed);
  r.number("samples", opts.samples);
  r.finish();
  opts.validate();
  return opts;
}

VarlabReport varlab_run(const VarlabOptions& opts) {
  opts.validate();
  RewardConfig rc;
  rc.regularizer = opts.regularizer;
  rc.lambda = opts.lambda;

  Instance in =
      build_instance(derive_seed(opts.seed, kTagInstance, 0), opts.layers,
                     opts.hidden, opts.input_dim, opts.t1, opts.t2,
                     opts.vocab);

  // Fit the baseline before measuring, so the baseline variants are
  // compared at a useful operating point rather than a random one.
  {
    std::vector<Rollout> warmup;
    for (int i = 0; i < 200; ++i) {
      RngState rng(
          derive_seed(opts.seed, kTagWarmup, static_cast<std::uint64_t>(i)));
      warmup.push_back(rollout_train(in.params, in.example, rc, rng));
    }
    in.stats = BaselineStats{};
    for (int pass = 0; pass < 50; ++pass)
      baseline_update(in.params, in.stats, warmup, 0.05);
  }

  const std::vector<EstimatorConfig> variants = estimator_variants(rc);
  std::vector<GradEstimate> truths;
  for (const auto& cfg : variants)
    truths.push_back(
        enumerate_expected_gradient(in.params, in.example, cfg, in.stats));

  const std::size_t coords = [&] {
    std::size_t n = 0;
    for (const auto& t : truths.front().tensors) n += t.size();
    return n;
  }();

  // Per-variant running moments per coordinate.
  std::vector<std::vector<double>> mean(variants.size(),
                                        std::vector<double>(coords, 0.0));
  std::vector<std::vector<double>> m2 = mean;

  for (int s = 0; s < opts.samples; ++s) {
    RngState rng(
        derive_seed(opts.seed, kTagSample, static_cast<std::uint64_t>(s)));
    const Rollout ro = rollout_train(in.params, in.example, rc, rng);
    const std::span<const Rollout> batch(&ro, 1);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const GradEstimate est =
          estimate_gradient(in.params, batch, variants[v], in.stats);
      std::size_t c = 0;
      for (const auto& t : est.tensors)
        for (double x : t.data) {
          const double delta = x - mean[v][c];
          mean[v][c] += delta / static_cast<double>(s + 1);
          m2[v][c] += delta * (x - mean[v][c]);
          ++c;
        }
    }
  }

  VarlabReport report;
  report.samples = opts.samples;
  const double n = static_cast<double>(opts.samples);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    VarlabSummary summary;
    summary.variant = variant_name(variants[v]);
    std::size_t c = 0;
    for (const auto& t : truths[v].tensors)
      for (double truth : t.data) {
        VarlabRow row;
        row.variant = summary.variant;
        row.coord = c;
        row.mean = mean[v][c];
        row.variance = m2[v][c] / (n - 1.0);
        row.bias = mean[v][c] - truth;
        summary.total_variance += row.variance;
        summary.max_abs_bias = std::max(summary.max_abs_bias,
                                        std::abs(row.bias));
        if (row.variance > 0.0)
          summary.max_bias_sigmas =
              std::max(summary.max_bias_sigmas,
                       std::abs(row.bias) / std::sqrt(row.variance / n));
        report.rows.push_back(std::move(row));
        ++c;
      }
    report.summaries.push_back(std::move(summary));
  }
  return report;
}

std::string render_varlab_csv(const VarlabReport& report) {
  std::ostringstream out;
  out << "variant,coord,mean,variance,bias\n";
  char buf[160];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%.17g,%.17g\n",
                  row.variant.c_str(), row.coord, row.mean, row.variance,
                  row.bias);
    out << buf;
  }
  return out.str();
}

}  // namespace osq
