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

#ifndef OSQ_TENSOR_HPP_
#define OSQ_TENSOR_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "osq/error.hpp"

namespace osq {

/// Probability floor applied inside logarithms so degenerate distributions
/// produce a large finite loss instead of -Inf.
inline constexpr double kProbFloor = 1e-12;

/// Dense 64-bit float tensor, row-major.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_in, double fill = 0.0);

  static Tensor zeros_like(const Tensor& other) {
    return Tensor(other.shape, 0.0);
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  /// Pointer to the start of row r of a 2-D tensor.
  double* row(std::size_t r) { return data.data() + r * cols(); }
  const double* row(std::size_t r) const { return data.data() + r * cols(); }

  bool all_finite() const noexcept;
  void fill(double value);
};

double safe_log(double x);  // log(max(x, kProbFloor))

double sigmoid(double x);  // domain error on non-finite input

/// Numerically stable softmax (max subtraction); output sums to 1.
std::vector<double> softmax(std::span<const double> logits);

double logsumexp(std::span<const double> values);

/// -log d[target] for a probability vector d; probabilities below the
/// floor are clamped so the result stays finite.
double softmax_logprob(std::span<const double> dist, std::size_t target);

/// L2 norm over the concatenation of all tensors.
double global_norm(std::span<const Tensor> tensors);

struct ClipResult {
  double preclip_norm = 0.0;
  bool clipped = false;
};

/// Scales all tensors by max_norm / norm when the global norm exceeds
/// max_norm; otherwise leaves them unchanged. Non-finite entries are a
/// domain error (the caller decides whether to skip or abort).
ClipResult clip_global_norm(std::span<Tensor> tensors, double max_norm);

}  // namespace osq

#endif  // OSQ_TENSOR_HPP_
