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

#ifndef OSQ_TASKS_HPP_
#define OSQ_TASKS_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "osq/episode.hpp"
#include "osq/model.hpp"
#include "osq/rng.hpp"

namespace osq {

// ---------------------------------------------------------------------------
// Synthetic monotonic transduction tasks
// ---------------------------------------------------------------------------

enum class TaskKind {
  // Each target token's one-hot frame repeated a random number of times.
  kStretchCopy,
  // Target token frames separated by runs of all-zero frames.
  kBlankInterleave,
};

/// Generator settings for one task family. Construction guarantees that
/// every produced example fits its targets into its input steps (each
/// target token, and the end token, owns at least one input frame).
struct TaskSpec {
  TaskKind kind = TaskKind::kStretchCopy;
  int vocab_size = 8;     // includes the two reserved control tokens
  int min_targets = 5;    // drawn target count, end token excluded
  int max_targets = 10;
  int stretch_min = 1;    // frames per token (stretch-copy)
  int stretch_max = 3;
  int blank_min = 0;      // zero frames before each token (interleave)
  int blank_max = 3;
  double noise_sigma = 0.1;  // Gaussian noise added to every component

  void validate() const;
};

/// Builds a spec from {"kind", "vocab", "min_targets", "max_targets",
/// "stretch_min", "stretch_max", "blank_min", "blank_max", "sigma"};
/// missing keys keep defaults, unknown keys are errors. A "prefix" key
/// is tolerated (consumed by dataset generation).
TaskSpec task_spec_from_json(const nlohmann::json& j);

/// Draws one example: targets, their frames, the end-token frame, plus
/// Gaussian noise. When `alignment` is given it receives, per target
/// (end token included), the input step at which that target's frame run
/// completes; strictly increasing, last entry = T1-1.
Example gen_example(const TaskSpec& spec, RngState& rng,
                    std::vector<int>* alignment = nullptr);

/// count examples with ids "<prefix>-<i>", each from its own stream
/// derived from (seed, i). Pure: same arguments, same dataset.
std::vector<Example> gen_dataset(const TaskSpec& spec, int count,
                                 std::uint64_t seed,
                                 const std::string& prefix = "ex");

// ---------------------------------------------------------------------------
// Input preprocessing
// ---------------------------------------------------------------------------

/// Concatenates non-overlapping groups of k consecutive frames into
/// width k*d vectors, zero-padding the final group; output length
/// ceil(T1 / k). k = 1 is the identity.
std::vector<std::vector<double>> stack_frames(
    const std::vector<std::vector<double>>& inputs, int k);

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Total map raw label -> scored label, indexed by raw id.
using CollapseMap = std::vector<int>;

/// Elementwise relabeling; length preserved, adjacent duplicates kept.
/// Tokens outside the map's domain are an input error.
std::vector<int> collapse_labels(std::span<const int> seq,
                                 const CollapseMap& map);

/// Levenshtein distance: minimal insertions + deletions + substitutions
/// at unit cost.
int edit_distance(std::span<const int> a, std::span<const int> b);

/// Corpus error rate: sum of edit distances over the sum of reference
/// lengths, with every `eos_token` occurrence removed from both sides
/// first. Empty corpus or zero total reference length is an error.
double label_error_rate(const std::vector<std::vector<int>>& refs,
                        const std::vector<std::vector<int>>& hyps,
                        int eos_token);

/// One scored example: greedy-decoded hypothesis vs. reference.
struct EvalRow {
  std::string id;
  int distance = 0;
  int ref_len = 0;           // end token excluded
  std::vector<int> ref;      // end token excluded
  std::vector<int> hyp;      // end token excluded
};

struct EvalReport {
  double ler = 0.0;
  std::vector<EvalRow> rows;
};

/// Greedy-decodes every example and scores it against its targets.
EvalReport evaluate(const ModelParams& params,
                    const std::vector<Example>& examples);

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

/// JSON-lines, one example per line: {"id", "inputs", "targets"}.
void save_dataset(const std::string& path,
                  const std::vector<Example>& examples);
std::vector<Example> load_dataset(const std::string& path);

}  // namespace osq

#endif  // OSQ_TASKS_HPP_
