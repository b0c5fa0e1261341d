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

#include "osq/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>

#include "osq/error.hpp"
#include "osq/tensor.hpp"

namespace osq {

namespace {

// Stream tags for derived seeds.
constexpr std::uint64_t kTagInit = 1;
constexpr std::uint64_t kTagShuffle = 2;
constexpr std::uint64_t kTagOrder = 3;
constexpr std::uint64_t kTagRollout = 4;

}  // namespace

void EntropyScheduleSpec::validate() const {
  require(std::isfinite(base) && base >= 0.0, ErrorKind::kConfig,
          "schedule base must be nonnegative");
  require(std::isfinite(rate) && rate > 0.0, ErrorKind::kConfig,
          "schedule rate must be positive");
  require(std::isfinite(divisor) && divisor > 0.0, ErrorKind::kConfig,
          "schedule divisor must be positive");
  require(std::isfinite(offset), ErrorKind::kConfig,
          "schedule offset must be finite");
  require(std::isfinite(floor) && floor >= 0.0, ErrorKind::kConfig,
          "schedule floor must be nonnegative");
  require(std::isfinite(hold_value) && hold_value >= 0.0, ErrorKind::kConfig,
          "schedule hold value must be nonnegative");
  require(std::isfinite(value) && value >= 0.0, ErrorKind::kConfig,
          "schedule constant value must be nonnegative");
  if (cap)
    require(std::isfinite(*cap) && *cap >= 0.0, ErrorKind::kConfig,
            "schedule cap must be nonnegative");
}

double entropy_schedule(std::uint64_t step, const EntropyScheduleSpec& spec) {
  double lam = 0.0;
  switch (spec.variant) {
    case ScheduleVariant::kConstant:
      lam = spec.value;
      break;
    case ScheduleVariant::kTimit:
      lam = spec.base * std::pow(spec.rate,
                                 static_cast<double>(step) / spec.divisor -
                                     spec.offset) +
            spec.floor;
      break;
    case ScheduleVariant::kWsj:
      lam = step < spec.hold_steps
                ? spec.hold_value
                : spec.base * std::pow(spec.rate,
                                       static_cast<double>(step) /
                                               spec.divisor -
                                           spec.offset) +
                      spec.floor;
      break;
  }
  if (spec.cap) lam = std::min(lam, *spec.cap);
  require(std::isfinite(lam) && lam >= 0.0, ErrorKind::kConfig,
          "schedule produced an invalid regularizer weight");
  return lam;
}

void DropoutRamp::validate() const {
  require(std::isfinite(target) && target >= 0.0 && target < 1.0,
          ErrorKind::kConfig, "dropout target must lie in [0, 1)");
  require(end > start, ErrorKind::kConfig,
          "dropout ramp must end after it starts");
}

double dropout_schedule(std::uint64_t step, const DropoutRamp& ramp) {
  if (step <= ramp.start) return 0.0;
  if (step >= ramp.end) return ramp.target;
  const double progress = static_cast<double>(step - ramp.start) /
                          static_cast<double>(ramp.end - ramp.start);
  return ramp.target * progress;
}

OptimizerState OptimizerState::zeros_like(const ModelParams& params) {
  OptimizerState opt;
  params.for_each_tensor([&](const std::string&, const Tensor& t) {
    opt.m.push_back(Tensor::zeros_like(t));
    opt.v.push_back(Tensor::zeros_like(t));
  });
  return opt;
}

bool adam_step(OptimizerState& opt, ModelParams& params,
               const GradEstimate& grad, const AdamConfig& cfg) {
  std::vector<Tensor*> tensors = params.tensor_ptrs();
  require(tensors.size() == grad.tensors.size() &&
              tensors.size() == opt.m.size() && tensors.size() == opt.v.size(),
          ErrorKind::kShape, "optimizer tensor count mismatch");
  if (!grad.all_finite()) return false;

  ++opt.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.t));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    require(tensors[i]->size() == grad.tensors[i].size(), ErrorKind::kShape,
            "optimizer tensor shape mismatch");
    for (std::size_t k = 0; k < tensors[i]->size(); ++k) {
      const double g = grad.tensors[i].data[k];
      double& m = opt.m[i].data[k];
      double& v = opt.v[i].data[k];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      tensors[i]->data[k] +=
          cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
    }
  }
  return true;
}

void TrainConfig::validate() const {
  model.validate();
  require(std::isfinite(adam.lr) && adam.lr > 0.0, ErrorKind::kConfig,
          "learning rate must be positive");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0, ErrorKind::kConfig,
          "beta1 must lie in [0, 1)");
  require(adam.beta2 >= 0.0 && adam.beta2 < 1.0, ErrorKind::kConfig,
          "beta2 must lie in [0, 1)");
  require(std::isfinite(adam.epsilon) && adam.epsilon > 0.0,
          ErrorKind::kConfig, "adam epsilon must be positive");
  require(std::isfinite(clip_norm) && clip_norm > 0.0, ErrorKind::kConfig,
          "clip norm must be positive");
  require(batch_size >= 1, ErrorKind::kConfig, "batch size must be >= 1");
  require(eval_interval >= 1, ErrorKind::kConfig,
          "eval interval must be >= 1");
  require(checkpoint_interval >= 1, ErrorKind::kConfig,
          "checkpoint interval must be >= 1");
  require(std::isfinite(baseline_lr) && baseline_lr >= 0.0,
          ErrorKind::kConfig, "baseline learning rate must be nonnegative");
  require(!out_dir.empty(), ErrorKind::kConfig, "output directory is empty");
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    require(buckets[i] >= 1, ErrorKind::kConfig,
            "bucket boundaries must be positive");
    require(i == 0 || buckets[i] > buckets[i - 1], ErrorKind::kConfig,
            "bucket boundaries must increase strictly");
  }
  entropy.validate();
  dropout.validate();
  estimator.reward_cfg.validate();
}

namespace {

EntropyScheduleSpec default_schedule(ScheduleVariant variant) {
  EntropyScheduleSpec s;
  s.variant = variant;
  if (variant == ScheduleVariant::kWsj) {
    s.base = 0.8;
    s.offset = 20.0;
    s.floor = 0.2;
    s.hold_steps = 200000;
    s.hold_value = 1.0;
  }
  return s;
}

// Flat-config reader that tracks which keys were consumed so leftovers
// can be rejected by name.
class FlatReader {
 public:
  explicit FlatReader(const nlohmann::json& j) : j_(j) {
    require(j.is_object(), ErrorKind::kConfig,
            "configuration must be a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  void number(const std::string& key, double& target) {
    if (!has(key)) return;
    require(j_.at(key).is_number(), ErrorKind::kConfig,
            "config key '" + key + "' must be a number");
    target = j_.at(key).get<double>();
  }

  void integer(const std::string& key, int& target) {
    if (!has(key)) return;
    require(j_.at(key).is_number_integer(), ErrorKind::kConfig,
            "config key '" + key + "' must be an integer");
    target = j_.at(key).get<int>();
  }

  void unsigned64(const std::string& key, std::uint64_t& target) {
    if (!has(key)) return;
    require(j_.at(key).is_number_integer() && j_.at(key).get<double>() >= 0,
            ErrorKind::kConfig,
            "config key '" + key + "' must be a nonnegative integer");
    target = j_.at(key).get<std::uint64_t>();
  }

  void boolean(const std::string& key, bool& target) {
    if (!has(key)) return;
    require(j_.at(key).is_boolean(), ErrorKind::kConfig,
            "config key '" + key + "' must be a boolean");
    target = j_.at(key).get<bool>();
  }

  void text(const std::string& key, std::string& target) {
    if (!has(key)) return;
    require(j_.at(key).is_string(), ErrorKind::kConfig,
            "config key '" + key + "' must be a string");
    target = j_.at(key).get<std::string>();
  }

  void int_array(const std::string& key, std::vector<int>& target) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    require(v.is_array(), ErrorKind::kConfig,
            "config key '" + key + "' must be an array of integers");
    target.clear();
    for (const auto& e : v) {
      require(e.is_number_integer(), ErrorKind::kConfig,
              "config key '" + key + "' must be an array of integers");
      target.push_back(e.get<int>());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      require(seen_.count(it.key()) != 0, ErrorKind::kConfig,
              "unknown config key '" + it.key() + "'");
  }

 private:
  const nlohmann::json& j_;
  std::set<std::string> seen_;
};

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& flat) {
  TrainConfig cfg;
  FlatReader r(flat);

  r.integer("model.layers", cfg.model.num_layers);
  r.integer("model.hidden", cfg.model.hidden_size);
  r.integer("model.input_dim", cfg.model.input_dim);
  r.integer("model.vocab", cfg.model.vocab_size);
  r.number("model.init_scale", cfg.model.init_scale);

  r.number("train.lr", cfg.adam.lr);
  r.number("train.beta1", cfg.adam.beta1);
  r.number("train.beta2", cfg.adam.beta2);
  r.number("train.epsilon", cfg.adam.epsilon);
  r.number("train.clip_norm", cfg.clip_norm);
  r.integer("train.batch_size", cfg.batch_size);
  r.unsigned64("train.max_steps", cfg.max_steps);
  r.unsigned64("train.seed", cfg.seed);
  r.unsigned64("train.eval_interval", cfg.eval_interval);
  r.unsigned64("train.checkpoint_interval", cfg.checkpoint_interval);
  r.number("train.baseline_lr", cfg.baseline_lr);
  r.number("train.stop_ler", cfg.stop_ler);
  r.text("train.out_dir", cfg.out_dir);

  r.boolean("estimator.use_baseline", cfg.estimator.use_baseline);
  r.boolean("estimator.use_rao_blackwell", cfg.estimator.use_rao_blackwell);
  r.boolean("estimator.regularizer_pathwise",
            cfg.estimator.regularizer_pathwise);

  std::string reg = "entropy";
  r.text("reward.regularizer", reg);
  if (reg == "entropy") {
    cfg.estimator.reward_cfg.regularizer = Regularizer::kEntropy;
  } else if (reg == "kl") {
    cfg.estimator.reward_cfg.regularizer = Regularizer::kKl;
  } else {
    fail(ErrorKind::kConfig,
         "reward.regularizer must be 'entropy' or 'kl'");
  }
  r.number("reward.kl_target_rate", cfg.estimator.reward_cfg.kl_target_rate);

  std::string variant = "timit";
  r.text("entropy.variant", variant);
  if (variant == "timit") {
    cfg.entropy = default_schedule(ScheduleVariant::kTimit);
  } else if (variant == "wsj") {
    cfg.entropy = default_schedule(ScheduleVariant::kWsj);
  } else if (variant == "constant") {
    cfg.entropy = default_schedule(ScheduleVariant::kConstant);
  } else {
    fail(ErrorKind::kConfig,
         "entropy.variant must be 'timit', 'wsj' or 'constant'");
  }
  r.number("entropy.base", cfg.entropy.base);
  r.number("entropy.rate", cfg.entropy.rate);
  r.number("entropy.divisor", cfg.entropy.divisor);
  r.number("entropy.offset", cfg.entropy.offset);
  r.number("entropy.floor", cfg.entropy.floor);
  r.unsigned64("entropy.hold_steps", cfg.entropy.hold_steps);
  r.number("entropy.hold_value", cfg.entropy.hold_value);
  r.number("entropy.value", cfg.entropy.value);
  if (r.has("entropy.cap")) {
    double cap = 0.0;
    r.number("entropy.cap", cap);
    cfg.entropy.cap = cap;
  }

  r.unsigned64("dropout.start", cfg.dropout.start);
  r.unsigned64("dropout.end", cfg.dropout.end);
  r.number("dropout.target", cfg.dropout.target);

  r.int_array("buckets", cfg.buckets);

  r.finish();
  cfg.validate();
  return cfg;
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["model.layers"] = model.num_layers;
  j["model.hidden"] = model.hidden_size;
  j["model.input_dim"] = model.input_dim;
  j["model.vocab"] = model.vocab_size;
  j["model.init_scale"] = model.init_scale;
  j["train.lr"] = adam.lr;
  j["train.beta1"] = adam.beta1;
  j["train.beta2"] = adam.beta2;
  j["train.epsilon"] = adam.epsilon;
  j["train.clip_norm"] = clip_norm;
  j["train.batch_size"] = batch_size;
  j["train.max_steps"] = max_steps;
  j["train.seed"] = seed;
  j["train.eval_interval"] = eval_interval;
  j["train.checkpoint_interval"] = checkpoint_interval;
  j["train.baseline_lr"] = baseline_lr;
  j["train.stop_ler"] = stop_ler;
  j["train.out_dir"] = out_dir;
  j["estimator.use_baseline"] = estimator.use_baseline;
  j["estimator.use_rao_blackwell"] = estimator.use_rao_blackwell;
  j["estimator.regularizer_pathwise"] = estimator.regularizer_pathwise;
  j["reward.regularizer"] =
      estimator.reward_cfg.regularizer == Regularizer::kKl ? "kl" : "entropy";
  j["reward.kl_target_rate"] = estimator.reward_cfg.kl_target_rate;
  switch (entropy.variant) {
    case ScheduleVariant::kTimit: j["entropy.variant"] = "timit"; break;
    case ScheduleVariant::kWsj: j["entropy.variant"] = "wsj"; break;
    case ScheduleVariant::kConstant: j["entropy.variant"] = "constant"; break;
  }
  j["entropy.base"] = entropy.base;
  j["entropy.rate"] = entropy.rate;
  j["entropy.divisor"] = entropy.divisor;
  j["entropy.offset"] = entropy.offset;
  j["entropy.floor"] = entropy.floor;
  j["entropy.hold_steps"] = entropy.hold_steps;
  j["entropy.hold_value"] = entropy.hold_value;
  j["entropy.value"] = entropy.value;
  if (entropy.cap) j["entropy.cap"] = *entropy.cap;
  j["dropout.start"] = dropout.start;
  j["dropout.end"] = dropout.end;
  j["dropout.target"] = dropout.target;
  j["buckets"] = buckets;
  return j;
}

std::vector<Bucket> make_buckets(const std::vector<Example>& examples,
                                 const std::vector<int>& boundaries) {
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    require(boundaries[i] >= 1, ErrorKind::kConfig,
            "bucket boundaries must be positive");
    require(i == 0 || boundaries[i] > boundaries[i - 1], ErrorKind::kConfig,
            "bucket boundaries must increase strictly");
  }
  std::vector<Bucket> buckets(boundaries.size() + 1);
  for (std::size_t b = 0; b < boundaries.size(); ++b)
    buckets[b].cutoff = boundaries[b];
  buckets.back().cutoff = -1;  // overflow

  for (std::size_t i = 0; i < examples.size(); ++i) {
    const int len = examples[i].t1();
    std::size_t slot = boundaries.size();
    for (std::size_t b = 0; b < boundaries.size(); ++b) {
      if (len <= boundaries[b]) {
        slot = b;
        break;
      }
    }
    buckets[slot].indices.push_back(i);
  }
  std::vector<Bucket> filled;
  for (auto& b : buckets)
    if (!b.indices.empty()) filled.push_back(std::move(b));
  return filled;
}

Example pad_example(const Example& example, int length) {
  require(length >= example.t1(), ErrorKind::kInvalidArgument,
          "pad length shorter than the example");
  require(!example.inputs.empty(), ErrorKind::kInvalidArgument,
          "cannot pad an empty example");
  Example padded = example;
  const std::size_t width = example.inputs.front().size();
  padded.inputs.resize(static_cast<std::size_t>(length),
                       std::vector<double>(width, 0.0));
  return padded;
}

Example unpad_example(const Example& example, int true_t1) {
  require(true_t1 >= 1 && true_t1 <= example.t1(), ErrorKind::kInvalidArgument,
          "true length outside the padded example");
  require(true_t1 >= example.t2(), ErrorKind::kInvalidArgument,
          "true length cannot hold the targets");
  Example out = example;
  out.inputs.resize(static_cast<std::size_t>(true_t1));
  return out;
}

namespace {

template <typename T>
void shuffle_in_place(std::vector<T>& v, RngState& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng.next_u64() % static_cast<std::uint64_t>(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::vector<std::vector<std::size_t>> make_batch_plan(
    const std::vector<Bucket>& buckets, int batch_size, std::uint64_t seed,
    std::uint64_t epoch) {
  require(batch_size >= 1, ErrorKind::kConfig, "batch size must be >= 1");
  std::vector<std::vector<std::size_t>> plan;
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    std::vector<std::size_t> idx = buckets[b].indices;
    RngState rng(derive_seed(seed, kTagShuffle, epoch, b));
    shuffle_in_place(idx, rng);
    for (std::size_t pos = 0; pos < idx.size();
         pos += static_cast<std::size_t>(batch_size)) {
      const std::size_t stop =
          std::min(idx.size(), pos + static_cast<std::size_t>(batch_size));
      plan.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                        idx.begin() + static_cast<std::ptrdiff_t>(stop));
    }
  }
  RngState order_rng(derive_seed(seed, kTagOrder, epoch));
  shuffle_in_place(plan, order_rng);
  return plan;
}

namespace {

std::string checkpoint_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt-%08llu.osq",
                static_cast<unsigned long long>(step));
  return buf;
}

double batch_nll_per_token(std::span<const Rollout> rollouts) {
  double total = 0.0;
  for (const auto& ro : rollouts) {
    double nll = 0.0;
    for (const auto& s : ro.steps)
      if (s.decision == 1)
        nll += -safe_log(s.dist[static_cast<std::size_t>(s.emitted_token)]);
    total += nll / static_cast<double>(ro.example.t2());
  }
  return total / static_cast<double>(rollouts.size());
}

}  // namespace

TrainResult train_loop(const TrainConfig& config,
                       const std::vector<Example>& train_set,
                       const EvalFn& eval_fn, const ProgressFn& progress) {
  config.validate();
  require(!train_set.empty(), ErrorKind::kInvalidArgument,
          "training set is empty");
  for (const auto& ex : train_set) ex.validate(config.model);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  require(!ec, ErrorKind::kIo,
          "cannot create output directory '" + config.out_dir + "'");

  TrainResult res{.params = [&] {
                    RngState rng(derive_seed(config.seed, kTagInit));
                    return init_params(config.model, rng);
                  }(),
                  .opt = {},
                  .stats = {}};
  res.opt = OptimizerState::zeros_like(res.params);

  const std::vector<Bucket> buckets = make_buckets(train_set, config.buckets);

  const std::string log_path =
      (fs::path(config.out_dir) / "train_log.jsonl").string();
  std::ofstream log(log_path, std::ios::trunc);
  require(log.good(), ErrorKind::kIo, "cannot open log '" + log_path + "'");

  auto save = [&](std::uint64_t step, const std::string& name) {
    const std::string path = (fs::path(config.out_dir) / name).string();
    save_checkpoint(res.params, res.opt, res.stats, step, path);
    return path;
  };
  std::string last_good = save(0, checkpoint_name(0));

  std::uint64_t epoch = 0;
  std::vector<std::vector<std::size_t>> plan =
      make_batch_plan(buckets, config.batch_size, config.seed, epoch);
  std::size_t cursor = 0;
  int consecutive_skips = 0;

  for (std::uint64_t step = 0; step < config.max_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cursor >= plan.size()) {
      ++epoch;
      plan = make_batch_plan(buckets, config.batch_size, config.seed, epoch);
      cursor = 0;
    }
    const std::vector<std::size_t>& batch = plan[cursor++];

    const double lambda = entropy_schedule(step, config.entropy);
    const double drate = dropout_schedule(step, config.dropout);
    RewardConfig rc = config.estimator.reward_cfg;
    rc.lambda = lambda;
    EstimatorConfig ecfg = config.estimator;
    ecfg.reward_cfg = rc;

    std::vector<Rollout> rollouts;
    rollouts.reserve(batch.size());
    for (std::size_t idx : batch) {
      const std::uint64_t rollout_seed =
          derive_seed(config.seed, kTagRollout, step, idx);
      RngState rng(rollout_seed);
      Rollout ro = rollout_train(res.params, train_set[idx], rc, rng, drate);
      ro.seed = rollout_seed;
      rollouts.push_back(std::move(ro));
    }

    GradEstimate grad = estimate_gradient(res.params, rollouts, ecfg, res.stats);

    nlohmann::json line;
    line["step"] = step;
    line["lambda"] = lambda;
    line["dropout"] = drate;
    line["mean_reward"] = grad.mean_reward;
    line["nll_per_token"] = batch_nll_per_token(rollouts);
    line["emission_rate"] = grad.mean_emission_prob;

    bool applied = false;
    if (grad.all_finite()) {
      const ClipResult clip =
          clip_global_norm(grad.tensors, config.clip_norm);
      line["grad_norm_preclip"] = clip.preclip_norm;
      line["clipped"] = clip.clipped;
      applied = adam_step(res.opt, res.params, grad, config.adam);
    } else {
      line["grad_norm_preclip"] = nullptr;
      line["clipped"] = false;
    }
    if (applied) {
      consecutive_skips = 0;
    } else {
      ++consecutive_skips;
      if (consecutive_skips >= 10)
        fail(ErrorKind::kAborted,
             "10 consecutive non-finite gradients; last good checkpoint: " +
                 last_good);
    }

    baseline_update(res.params, res.stats, rollouts, config.baseline_lr);

    bool stop_now = false;
    if (eval_fn && (step + 1) % config.eval_interval == 0) {
      res.last_ler = eval_fn(res.params);
      line["ler"] = res.last_ler;
      if (config.stop_ler >= 0.0 && res.last_ler <= config.stop_ler)
        stop_now = true;
    }

    const auto t1 = std::chrono::steady_clock::now();
    line["wall_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    const std::string text = line.dump();
    log << text << '\n';
    require(log.good(), ErrorKind::kIo, "cannot write log '" + log_path + "'");
    res.log_lines.push_back(text);
    if (progress) progress(step, text);

    res.steps_completed = step + 1;
    if ((step + 1) % config.checkpoint_interval == 0)
      last_good = save(step + 1, checkpoint_name(step + 1));
    if (stop_now) {
      res.early_stopped = true;
      break;
    }
  }

  log.flush();
  res.final_checkpoint = save(res.steps_completed, "ckpt-final.osq");
  return res;
}

}  // namespace osq
