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

#include "osq/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "osq/error.hpp"

namespace osq {

namespace {

constexpr std::uint64_t kTagGen = 17;

}  // namespace

void TaskSpec::validate() const {
  // Two ids are reserved for the control tokens, so at least one plain
  // token must remain drawable.
  require(vocab_size >= 3, ErrorKind::kConfig,
          "task vocab must hold at least one plain token");
  require(min_targets >= 1 && max_targets >= min_targets, ErrorKind::kConfig,
          "target length range is empty or nonpositive");
  require(stretch_min >= 1 && stretch_max >= stretch_min, ErrorKind::kConfig,
          "stretch range must start at 1 or more");
  require(blank_min >= 0 && blank_max >= blank_min, ErrorKind::kConfig,
          "blank range must be nonnegative");
  require(std::isfinite(noise_sigma) && noise_sigma >= 0.0,
          ErrorKind::kConfig, "noise level must be nonnegative");
}

TaskSpec task_spec_from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorKind::kConfig,
          "task settings must be a JSON object");
  TaskSpec spec;
  std::set<std::string> seen{"prefix"};
  auto number = [&](const char* key, auto& target) {
    seen.insert(key);
    if (!j.contains(key)) return;
    using T = std::decay_t<decltype(target)>;
    if constexpr (std::is_integral_v<T>) {
      require(j.at(key).is_number_integer(), ErrorKind::kConfig,
              std::string("task key '") + key + "' must be an integer");
    } else {
      require(j.at(key).is_number(), ErrorKind::kConfig,
              std::string("task key '") + key + "' must be a number");
    }
    target = j.at(key).get<T>();
  };
  seen.insert("kind");
  if (j.contains("kind")) {
    require(j.at("kind").is_string(), ErrorKind::kConfig,
            "task key 'kind' must be a string");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "stretch_copy") {
      spec.kind = TaskKind::kStretchCopy;
    } else if (kind == "blank_interleave") {
      spec.kind = TaskKind::kBlankInterleave;
    } else {
      fail(ErrorKind::kConfig,
           "task kind must be 'stretch_copy' or 'blank_interleave'");
    }
  }
  number("vocab", spec.vocab_size);
  number("min_targets", spec.min_targets);
  number("max_targets", spec.max_targets);
  number("stretch_min", spec.stretch_min);
  number("stretch_max", spec.stretch_max);
  number("blank_min", spec.blank_min);
  number("blank_max", spec.blank_max);
  number("sigma", spec.noise_sigma);
  for (auto it = j.begin(); it != j.end(); ++it)
    require(seen.count(it.key()) != 0, ErrorKind::kConfig,
            "unknown task key '" + it.key() + "'");
  spec.validate();
  return spec;
}

namespace {

std::vector<double> noisy_onehot(int vocab, int hot, double sigma,
                                 RngState& rng) {
  std::vector<double> frame(static_cast<std::size_t>(vocab), 0.0);
  if (hot >= 0) frame[static_cast<std::size_t>(hot)] = 1.0;
  if (sigma > 0.0)
    for (double& v : frame) v += sigma * rng.normal(0.0, 1.0);
  return frame;
}

}  // namespace

Example gen_example(const TaskSpec& spec, RngState& rng,
                    std::vector<int>* alignment) {
  spec.validate();
  Hyperparams tokens_only;
  tokens_only.vocab_size = spec.vocab_size;
  const int plain_count = spec.vocab_size - 2;  // control tokens excluded

  Example ex;
  if (alignment) alignment->clear();
  const int len =
      static_cast<int>(rng.uniform_int(spec.min_targets, spec.max_targets));
  for (int j = 0; j < len; ++j)
    ex.targets.push_back(
        static_cast<int>(rng.uniform_int(0, plain_count - 1)));
  ex.targets.push_back(tokens_only.eos_token());

  for (int tok : ex.targets) {
    if (spec.kind == TaskKind::kStretchCopy) {
      const bool is_end = tok == tokens_only.eos_token();
      const int run = is_end ? 1
                             : static_cast<int>(rng.uniform_int(
                                   spec.stretch_min, spec.stretch_max));
      for (int r = 0; r < run; ++r)
        ex.inputs.push_back(
            noisy_onehot(spec.vocab_size, tok, spec.noise_sigma, rng));
    } else {
      const int blanks =
          static_cast<int>(rng.uniform_int(spec.blank_min, spec.blank_max));
      for (int g = 0; g < blanks; ++g)
        ex.inputs.push_back(
            noisy_onehot(spec.vocab_size, -1, spec.noise_sigma, rng));
      ex.inputs.push_back(
          noisy_onehot(spec.vocab_size, tok, spec.noise_sigma, rng));
    }
    if (alignment)
      alignment->push_back(static_cast<int>(ex.inputs.size()) - 1);
  }
  return ex;
}

std::vector<Example> gen_dataset(const TaskSpec& spec, int count,
                                 std::uint64_t seed,
                                 const std::string& prefix) {
  spec.validate();
  require(count >= 0, ErrorKind::kInvalidArgument,
          "dataset size must be nonnegative");
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    RngState rng(derive_seed(seed, kTagGen, static_cast<std::uint64_t>(i)));
    Example ex = gen_example(spec, rng);
    ex.id = prefix + "-" + std::to_string(i);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<std::vector<double>> stack_frames(
    const std::vector<std::vector<double>>& inputs, int k) {
  require(k >= 1, ErrorKind::kInvalidArgument,
          "stacking factor must be at least 1");
  if (inputs.empty()) return {};
  const std::size_t width = inputs.front().size();
  for (const auto& f : inputs)
    require(f.size() == width, ErrorKind::kInvalidArgument,
            "stack_frames: ragged input frames");

  std::vector<std::vector<double>> out;
  const std::size_t uk = static_cast<std::size_t>(k);
  for (std::size_t base = 0; base < inputs.size(); base += uk) {
    std::vector<double> stacked(uk * width, 0.0);
    for (std::size_t r = 0; r < uk && base + r < inputs.size(); ++r)
      std::copy(inputs[base + r].begin(), inputs[base + r].end(),
                stacked.begin() + static_cast<std::ptrdiff_t>(r * width));
    out.push_back(std::move(stacked));
  }
  return out;
}

std::vector<int> collapse_labels(std::span<const int> seq,
                                 const CollapseMap& map) {
  std::vector<int> out;
  out.reserve(seq.size());
  for (int tok : seq) {
    require(tok >= 0 && static_cast<std::size_t>(tok) < map.size(),
            ErrorKind::kInvalidArgument,
            "collapse map does not cover token " + std::to_string(tok));
    out.push_back(map[static_cast<std::size_t>(tok)]);
  }
  return out;
}

int edit_distance(std::span<const int> a, std::span<const int> b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

namespace {

std::vector<int> without_token(const std::vector<int>& seq, int drop) {
  std::vector<int> out;
  out.reserve(seq.size());
  for (int tok : seq)
    if (tok != drop) out.push_back(tok);
  return out;
}

}  // namespace

double label_error_rate(const std::vector<std::vector<int>>& refs,
                        const std::vector<std::vector<int>>& hyps,
                        int eos_token) {
  require(refs.size() == hyps.size(), ErrorKind::kInvalidArgument,
          "reference and hypothesis counts differ");
  require(!refs.empty(), ErrorKind::kInvalidArgument,
          "error rate over an empty corpus is undefined");
  long long total_dist = 0;
  long long total_len = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const std::vector<int> ref = without_token(refs[i], eos_token);
    const std::vector<int> hyp = without_token(hyps[i], eos_token);
    total_dist += edit_distance(ref, hyp);
    total_len += static_cast<long long>(ref.size());
  }
  require(total_len > 0, ErrorKind::kInvalidArgument,
          "error rate with empty references is undefined");
  return static_cast<double>(total_dist) / static_cast<double>(total_len);
}

EvalReport evaluate(const ModelParams& params,
                    const std::vector<Example>& examples) {
  require(!examples.empty(), ErrorKind::kInvalidArgument,
          "error rate over an empty corpus is undefined");
  const int eos = params.hyper.eos_token();
  EvalReport report;
  std::vector<std::vector<int>> refs, hyps;
  for (const auto& ex : examples) {
    ex.validate(params.hyper);
    DecodeResult dec = decode_greedy(params, ex.inputs, ex.t1());
    EvalRow row;
    row.id = ex.id;
    row.ref = without_token(ex.targets, eos);
    row.hyp = without_token(dec.tokens, eos);
    row.ref_len = static_cast<int>(row.ref.size());
    row.distance = edit_distance(row.ref, row.hyp);
    refs.push_back(ex.targets);
    hyps.push_back(dec.tokens);
    report.rows.push_back(std::move(row));
  }
  report.ler = label_error_rate(refs, hyps, eos);
  return report;
}

void save_dataset(const std::string& path,
                  const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot open '" + path + "' to write");
  for (const auto& ex : examples) {
    nlohmann::json j;
    j["id"] = ex.id;
    j["inputs"] = ex.inputs;
    j["targets"] = ex.targets;
    out << j.dump() << '\n';
  }
  out.flush();
  require(out.good(), ErrorKind::kIo, "failed writing '" + path + "'");
}

std::vector<Example> load_dataset(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open '" + path + "'");
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, "dataset line " + std::to_string(lineno) +
                                   " is not valid JSON: " + e.what());
    }
    require(j.is_object() && j.contains("id") && j.contains("inputs") &&
                j.contains("targets"),
            ErrorKind::kFormat,
            "dataset line " + std::to_string(lineno) +
                " is missing id/inputs/targets");
    Example ex;
    try {
      ex.id = j.at("id").get<std::string>();
      ex.inputs = j.at("inputs").get<std::vector<std::vector<double>>>();
      ex.targets = j.at("targets").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, "dataset line " + std::to_string(lineno) +
                                   " has wrong field types: " + e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace osq
