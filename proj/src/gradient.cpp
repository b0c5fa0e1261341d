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

#include "osq/gradient.hpp"

#include <cmath>
#include <cstddef>
#include <utility>

#include "osq/error.hpp"
#include "osq/tensor.hpp"

namespace osq {

GradEstimate GradEstimate::zeros_like(const ModelParams& params) {
  GradEstimate g;
  params.for_each_tensor([&](const std::string& name, const Tensor& t) {
    g.names.push_back(name);
    g.tensors.push_back(Tensor::zeros_like(t));
  });
  return g;
}

bool GradEstimate::all_finite() const {
  for (const auto& t : tensors)
    if (!t.all_finite()) return false;
  return true;
}

void GradEstimate::scale(double factor) {
  for (auto& t : tensors)
    for (double& v : t.data) v *= factor;
}

void GradEstimate::add(const GradEstimate& other) {
  require(tensors.size() == other.tensors.size(), ErrorKind::kShape,
          "gradient accumulation shape mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    require(tensors[i].size() == other.tensors[i].size(), ErrorKind::kShape,
            "gradient accumulation shape mismatch");
    for (std::size_t k = 0; k < tensors[i].size(); ++k)
      tensors[i].data[k] += other.tensors[i].data[k];
  }
}

void BaselineStats::observe(double value) {
  require(std::isfinite(value), ErrorKind::kDomain,
          "return statistic must be finite");
  ++count;
  const double delta = value - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (value - mean);
}

double BaselineStats::variance() const {
  if (count < 2) return 0.0;
  return m2 / static_cast<double>(count - 1);
}

double BaselineStats::stddev() const {
  const double var = variance();
  // Degenerate spread (including the fresh state) normalizes by 1 so the
  // regression target stays bounded.
  if (var < 1e-12) return 1.0;
  return std::sqrt(var);
}

double log_rho(const Rollout& rollout) {
  double total = 0.0;
  for (const auto& s : rollout.steps) {
    if (s.forced) continue;
    total += s.decision == 1 ? safe_log(s.b) : safe_log(1.0 - s.b);
  }
  return total;
}

std::vector<double> returns_to_go(const Rollout& rollout) {
  std::vector<double> g(rollout.steps.size(), 0.0);
  double acc = 0.0;
  for (std::size_t t = rollout.steps.size(); t-- > 0;) {
    acc += rollout.steps[t].reward;
    g[t] = acc;
  }
  return g;
}

double baseline_predict(const ModelParams& params, const BaselineStats& stats,
                        std::span<const double> top_h) {
  require(top_h.size() == params.base_w.size(), ErrorKind::kShape,
          "baseline input width mismatch");
  double a = params.base_b.data[0];
  for (std::size_t k = 0; k < top_h.size(); ++k)
    a += params.base_w.data[k] * top_h[k];
  return stats.mean + stats.stddev() * a;
}

void baseline_update(ModelParams& params, BaselineStats& stats,
                     std::span<const Rollout> rollouts, double learning_rate) {
  require(std::isfinite(learning_rate) && learning_rate >= 0.0,
          ErrorKind::kConfig, "baseline learning rate must be nonnegative");
  // Collect (hidden, return) pairs at free steps.
  std::vector<std::pair<const std::vector<double>*, double>> samples;
  for (const auto& ro : rollouts) {
    const std::vector<double> g = returns_to_go(ro);
    for (std::size_t t = 0; t < ro.steps.size(); ++t) {
      if (ro.steps[t].forced) continue;
      samples.emplace_back(&ro.steps[t].top_h, g[t]);
    }
  }
  if (samples.empty()) return;

  for (const auto& [h, g] : samples) stats.observe(g);

  const double mu = stats.mean;
  const double sd = stats.stddev();
  const std::size_t width = params.base_w.size();
  std::vector<double> grad_w(width, 0.0);
  double grad_b = 0.0;
  for (const auto& [h, g] : samples) {
    require(h->size() == width, ErrorKind::kShape,
            "baseline input width mismatch");
    double a = params.base_b.data[0];
    for (std::size_t k = 0; k < width; ++k)
      a += params.base_w.data[k] * (*h)[k];
    const double residual = a - (g - mu) / sd;
    for (std::size_t k = 0; k < width; ++k) grad_w[k] += residual * (*h)[k];
    grad_b += residual;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (std::size_t k = 0; k < width; ++k)
    params.base_w.data[k] -= learning_rate * grad_w[k] * inv;
  params.base_b.data[0] -= learning_rate * grad_b * inv;
}

namespace {

// Re-runs the recorded episode under `params`, capturing activations.
// The recorded emission probabilities must reproduce exactly; anything
// else means the rollout came from different parameters.
std::vector<StepTape> replay_with_tapes(const ModelParams& params,
                                        const Rollout& ro) {
  const Example& ex = ro.example;
  ex.validate(params.hyper);
  require(ro.steps.size() == static_cast<std::size_t>(ex.t1()),
          ErrorKind::kInvalidArgument, "rollout step count mismatch");

  std::vector<StepTape> tapes(ro.steps.size());
  RngState drop_rng(ro.dropout_seed);
  RngState* drop = ro.dropout_rate > 0.0 ? &drop_rng : nullptr;
  LstmState state = LstmState::zeros(params.hyper);
  LstmState next;
  int prev_emit = 0;
  int prev_token = params.hyper.bos_token();

  for (std::size_t t = 0; t < ro.steps.size(); ++t) {
    StepOutputs out = forward_step(params, state, ex.inputs[t], prev_emit,
                                   prev_token, next, ro.dropout_rate, drop,
                                   &tapes[t]);
    require(out.emit_prob == ro.steps[t].b, ErrorKind::kInvalidArgument,
            "rollout does not replay under these parameters");
    prev_emit = ro.steps[t].decision;
    const int position = ro.steps[t].position;
    prev_token = position == 0
                     ? params.hyper.bos_token()
                     : ex.targets[static_cast<std::size_t>(position - 1)];
    state = next;
  }
  return tapes;
}

// Backpropagation through the whole episode given per-step gradients on
// the emission logit (de) and on the output-head logits (dlogits, empty
// at non-emission steps). Accumulates into `grad` (no scaling).
void backward_episode(const ModelParams& params,
                      const std::vector<StepTape>& tapes,
                      std::span<const double> de,
                      const std::vector<std::vector<double>>& dlogits,
                      GradEstimate& grad) {
  const Hyperparams& hp = params.hyper;
  const auto layers = static_cast<std::size_t>(hp.num_layers);
  const auto hs = static_cast<std::size_t>(hp.hidden_size);
  const auto vs = static_cast<std::size_t>(hp.vocab_size);
  const std::size_t steps = tapes.size();

  Tensor& g_emit_w = grad.tensors[2 * layers + 0];
  Tensor& g_emit_b = grad.tensors[2 * layers + 1];
  Tensor& g_out_w = grad.tensors[2 * layers + 2];
  Tensor& g_out_b = grad.tensors[2 * layers + 3];

  std::vector<std::vector<double>> dh_rec(layers,
                                          std::vector<double>(hs, 0.0));
  std::vector<std::vector<double>> dc_rec = dh_rec;
  const std::vector<double> zeros(hs, 0.0);
  std::vector<double> dhdrop(hs), dh(hs), dz(4 * hs), new_dh(hs), new_dc(hs);

  for (std::size_t t = steps; t-- > 0;) {
    const StepTape& tp = tapes[t];
    const std::vector<double>& top = tp.layers[layers - 1].hdrop;

    // Heads.
    std::fill(dhdrop.begin(), dhdrop.end(), 0.0);
    const double det = de[t];
    if (det != 0.0) {
      for (std::size_t k = 0; k < hs; ++k) {
        dhdrop[k] += params.emit_w.data[k] * det;
        g_emit_w.data[k] += det * top[k];
      }
      g_emit_b.data[0] += det;
    }
    if (!dlogits[t].empty()) {
      for (std::size_t v = 0; v < vs; ++v) {
        const double dv = dlogits[t][v];
        if (dv == 0.0) continue;
        const double* wrow = params.out_w.row(v);
        double* grow = g_out_w.row(v);
        for (std::size_t k = 0; k < hs; ++k) {
          dhdrop[k] += wrow[k] * dv;
          grow[k] += dv * top[k];
        }
        g_out_b.data[v] += dv;
      }
    }

    // Stacked cells, top to bottom.
    for (std::size_t l = layers; l-- > 0;) {
      const StepTape::Layer& lt = tp.layers[l];
      const double* gi = lt.gates.data();
      const double* gf = gi + hs;
      const double* go = gi + 2 * hs;
      const double* gg = gi + 3 * hs;
      const std::vector<double>& c_prev =
          t > 0 ? tapes[t - 1].layers[l].c : zeros;
      const std::vector<double>& h_prev =
          t > 0 ? tapes[t - 1].layers[l].h : zeros;
      const std::vector<double>& u_in = l == 0 ? tp.in0 : tp.layers[l - 1].hdrop;
      const std::size_t in = u_in.size();

      for (std::size_t u = 0; u < hs; ++u) {
        const double m = lt.mask.empty() ? 1.0 : lt.mask[u];
        dh[u] = dhdrop[u] * m + dh_rec[l][u];
        const double tc = std::tanh(lt.c[u]);
        const double dou = dh[u] * tc;
        const double dcu = dh[u] * go[u] * (1.0 - tc * tc) + dc_rec[l][u];
        const double diu = dcu * gg[u];
        const double dfu = dcu * c_prev[u];
        const double dgu = dcu * gi[u];
        new_dc[u] = dcu * gf[u];
        dz[0 * hs + u] = diu * gi[u] * (1.0 - gi[u]);
        dz[1 * hs + u] = dfu * gf[u] * (1.0 - gf[u]);
        dz[2 * hs + u] = dou * go[u] * (1.0 - go[u]);
        dz[3 * hs + u] = dgu * (1.0 - gg[u] * gg[u]);
      }

      Tensor& g_w = grad.tensors[2 * l + 0];
      Tensor& g_b = grad.tensors[2 * l + 1];
      const Tensor& w = params.layers[l].w;
      std::fill(new_dh.begin(), new_dh.end(), 0.0);
      if (l > 0) std::fill(dhdrop.begin(), dhdrop.end(), 0.0);
      for (std::size_t r = 0; r < 4 * hs; ++r) {
        const double dzr = dz[r];
        g_b.data[r] += dzr;
        if (dzr == 0.0) continue;
        const double* wrow = w.row(r);
        double* grow = g_w.row(r);
        for (std::size_t k = 0; k < in; ++k) grow[k] += dzr * u_in[k];
        for (std::size_t k = 0; k < hs; ++k) {
          grow[in + k] += dzr * h_prev[k];
          new_dh[k] += wrow[in + k] * dzr;
        }
        if (l > 0)
          for (std::size_t k = 0; k < in; ++k) dhdrop[k] += wrow[k] * dzr;
      }
      dh_rec[l] = new_dh;
      dc_rec[l] = new_dc;
    }
  }
}

// Counts forcing-consistent decision sequences without running the model.
std::uint64_t count_paths(int t1, int t2, int i, int p_prev) {
  if (i > t1) return 1;
  std::uint64_t total = 0;
  const auto forced = forcing_rule(t1, t2, i, p_prev);
  for (int bit = 0; bit <= 1; ++bit) {
    if (forced && *forced != bit) continue;
    total += count_paths(t1, t2, i + 1, p_prev + bit);
    if (total > (1ULL << 20)) return total;
  }
  return total;
}

template <typename Fn>
void for_each_path(int t1, int t2, int i, int p_prev, std::vector<int>& prefix,
                   const Fn& fn) {
  if (i > t1) {
    fn(prefix);
    return;
  }
  const auto forced = forcing_rule(t1, t2, i, p_prev);
  for (int bit = 0; bit <= 1; ++bit) {
    if (forced && *forced != bit) continue;
    prefix.push_back(bit);
    for_each_path(t1, t2, i + 1, p_prev + bit, prefix, fn);
    prefix.pop_back();
  }
}

void check_enumeration_bound(const Example& example) {
  require(count_paths(example.t1(), example.t2(), 1, 0) <= (1ULL << 20),
          ErrorKind::kCapacity,
          "too many decision paths to enumerate exactly");
}

double path_probability(const Rollout& ro) {
  double rho = 1.0;
  for (const auto& s : ro.steps)
    if (!s.forced) rho *= s.decision == 1 ? s.b : 1.0 - s.b;
  return rho;
}

}  // namespace

GradEstimate estimate_gradient(const ModelParams& params,
                               std::span<const Rollout> rollouts,
                               const EstimatorConfig& cfg,
                               const BaselineStats& stats) {
  require(!rollouts.empty(), ErrorKind::kInvalidArgument,
          "estimator needs at least one rollout");
  cfg.reward_cfg.validate();

  GradEstimate grad = GradEstimate::zeros_like(params);
  const double lambda = cfg.reward_cfg.lambda;

  for (const Rollout& ro : rollouts) {
    require(ro.reward_cfg == cfg.reward_cfg, ErrorKind::kInvalidArgument,
            "rollout was scored under a different reward configuration");
    const std::vector<StepTape> tapes = replay_with_tapes(params, ro);
    const std::vector<double> g = returns_to_go(ro);
    const double baseline_whole =
        cfg.use_baseline && !cfg.use_rao_blackwell
            ? baseline_predict(params, stats, ro.steps.front().top_h)
            : 0.0;

    std::vector<double> de(ro.steps.size(), 0.0);
    std::vector<std::vector<double>> dlogits(ro.steps.size());
    for (std::size_t t = 0; t < ro.steps.size(); ++t) {
      const StepRecord& s = ro.steps[t];
      if (s.decision == 1) {
        // d/dlogits of log d[emitted] = onehot - d.
        dlogits[t] = tapes[t].dist;
        for (double& v : dlogits[t]) v = -v;
        dlogits[t][static_cast<std::size_t>(s.emitted_token)] += 1.0;
      }
      if (s.forced) continue;
      const double dl_de = s.decision - s.b;  // d log p(bit) / d logit
      double coef;
      if (cfg.use_rao_blackwell) {
        coef = g[t];
        if (cfg.use_baseline)
          coef -= baseline_predict(params, stats, s.top_h);
      } else {
        coef = ro.total_reward - baseline_whole;
      }
      de[t] = cfg.score_scale * coef * dl_de;
      if (cfg.regularizer_pathwise && lambda > 0.0)
        de[t] += -lambda * dl_de;
    }

    backward_episode(params, tapes, de, dlogits, grad);
    grad.mean_reward += ro.total_reward;
    grad.mean_log_rho += log_rho(ro);
    grad.mean_emission_prob += ro.mean_emission_prob();
    grad.returns.push_back(g);
  }

  const double inv = 1.0 / static_cast<double>(rollouts.size());
  grad.scale(inv);
  grad.mean_reward *= inv;
  grad.mean_log_rho *= inv;
  grad.mean_emission_prob *= inv;
  return grad;
}

double enumerate_expected_reward(const ModelParams& params,
                                 const Example& example,
                                 const RewardConfig& reward_cfg) {
  example.validate(params.hyper);
  check_enumeration_bound(example);
  double expected = 0.0;
  std::vector<int> prefix;
  for_each_path(example.t1(), example.t2(), 1, 0, prefix,
                [&](const std::vector<int>& path) {
                  Rollout ro = rollout_with_decisions(params, example,
                                                      reward_cfg, path);
                  expected += path_probability(ro) * ro.total_reward;
                });
  return expected;
}

GradEstimate finite_difference_gradient(const ModelParams& params,
                                        const Example& example,
                                        const RewardConfig& reward_cfg,
                                        double epsilon) {
  require(epsilon >= 1e-7 && epsilon <= 1e-3, ErrorKind::kInvalidArgument,
          "step size outside [1e-7, 1e-3]");
  check_enumeration_bound(example);

  ModelParams work = params;
  GradEstimate grad = GradEstimate::zeros_like(params);
  std::vector<Tensor*> tensors = work.tensor_ptrs();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    for (std::size_t k = 0; k < tensors[i]->size(); ++k) {
      const double saved = tensors[i]->data[k];
      tensors[i]->data[k] = saved + epsilon;
      const double up = enumerate_expected_reward(work, example, reward_cfg);
      tensors[i]->data[k] = saved - epsilon;
      const double down = enumerate_expected_reward(work, example, reward_cfg);
      tensors[i]->data[k] = saved;
      grad.tensors[i].data[k] = (up - down) / (2.0 * epsilon);
    }
  }
  return grad;
}

GradEstimate enumerate_expected_gradient(const ModelParams& params,
                                         const Example& example,
                                         const EstimatorConfig& cfg,
                                         const BaselineStats& stats) {
  example.validate(params.hyper);
  check_enumeration_bound(example);

  GradEstimate total = GradEstimate::zeros_like(params);
  std::vector<int> prefix;
  for_each_path(
      example.t1(), example.t2(), 1, 0, prefix,
      [&](const std::vector<int>& path) {
        Rollout ro =
            rollout_with_decisions(params, example, cfg.reward_cfg, path);
        const double rho = path_probability(ro);
        GradEstimate est = estimate_gradient(
            params, std::span<const Rollout>(&ro, 1), cfg, stats);
        est.scale(rho);
        total.add(est);
        total.mean_reward += rho * ro.total_reward;
        total.mean_log_rho += rho * log_rho(ro);
        total.mean_emission_prob += rho * ro.mean_emission_prob();
      });
  return total;
}

}  // namespace osq
