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

#include "osq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace osq {

Tensor::Tensor(std::vector<std::size_t> shape_in, double fill)
    : shape(std::move(shape_in)) {
  std::size_t n = 1;
  for (std::size_t extent : shape) {
    require(extent > 0, ErrorKind::kShape, "tensor extents must be positive");
    n *= extent;
  }
  data.assign(shape.empty() ? 0 : n, fill);
}

bool Tensor::all_finite() const noexcept {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) {
  std::fill(data.begin(), data.end(), value);
}

double safe_log(double x) { return std::log(std::max(x, kProbFloor)); }

double sigmoid(double x) {
  require(std::isfinite(x), ErrorKind::kDomain, "sigmoid: non-finite input");
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> logits) {
  require(!logits.empty(), ErrorKind::kShape, "softmax: empty input");
  double m = logits[0];
  for (double v : logits) {
    require(std::isfinite(v), ErrorKind::kDomain, "softmax: non-finite input");
    m = std::max(m, v);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

double logsumexp(std::span<const double> values) {
  require(!values.empty(), ErrorKind::kShape, "logsumexp: empty input");
  double m = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - m);
  return m + std::log(sum);
}

double softmax_logprob(std::span<const double> dist, std::size_t target) {
  require(target < dist.size(), ErrorKind::kInvalidArgument,
          "softmax_logprob: target index out of range");
  return -safe_log(dist[target]);
}

double global_norm(std::span<const Tensor> tensors) {
  double sq = 0.0;
  for (const Tensor& t : tensors) {
    for (double v : t.data) sq += v * v;
  }
  return std::sqrt(sq);
}

ClipResult clip_global_norm(std::span<Tensor> tensors, double max_norm) {
  require(max_norm > 0.0, ErrorKind::kInvalidArgument,
          "clip_global_norm: max_norm must be positive");
  for (const Tensor& t : tensors) {
    require(t.all_finite(), ErrorKind::kDomain,
            "clip_global_norm: non-finite gradient");
  }
  ClipResult result;
  result.preclip_norm = global_norm(tensors);
  if (result.preclip_norm > max_norm) {
    double scale = max_norm / result.preclip_norm;
    for (Tensor& t : tensors) {
      for (double& v : t.data) v *= scale;
    }
    result.clipped = true;
  }
  return result;
}

}  // namespace osq
