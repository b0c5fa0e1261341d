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

#include "osq.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>
#include <vector>

#include <json.hpp>

#include "osq/error.hpp"
#include "osq/lab.hpp"
#include "osq/tasks.hpp"
#include "osq/training.hpp"

struct osq_dataset {
  std::vector<osq::Example> examples;
};

struct osq_model {
  osq::ModelParams params;
};

namespace {

thread_local std::string g_last_error;

osq_status status_of(osq::ErrorKind kind) {
  using osq::ErrorKind;
  switch (kind) {
    case ErrorKind::kInvalidArgument: return OSQ_ERR_INVALID_ARGUMENT;
    case ErrorKind::kDomain: return OSQ_ERR_DOMAIN;
    case ErrorKind::kShape: return OSQ_ERR_SHAPE;
    case ErrorKind::kConfig: return OSQ_ERR_CONFIG;
    case ErrorKind::kIo: return OSQ_ERR_IO;
    case ErrorKind::kFormat: return OSQ_ERR_FORMAT;
    case ErrorKind::kCapacity: return OSQ_ERR_CAPACITY;
    case ErrorKind::kAborted: return OSQ_ERR_ABORTED;
  }
  return OSQ_ERR_UNKNOWN;
}

template <typename Fn>
osq_status guarded(Fn&& fn) {
  try {
    fn();
    return OSQ_OK;
  } catch (const osq::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return OSQ_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown failure";
    return OSQ_ERR_UNKNOWN;
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require_arg(bool ok, const char* message) {
  osq::require(ok, osq::ErrorKind::kInvalidArgument, message);
}

nlohmann::json parse_json_text(const char* text, const char* what) {
  require_arg(text != nullptr, "missing JSON argument");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    osq::fail(osq::ErrorKind::kConfig,
              std::string(what) + " is not valid JSON: " + e.what());
  }
}

}  // namespace

extern "C" {

const char* osq_version(void) { return "0.1.0"; }

const char* osq_last_error(void) { return g_last_error.c_str(); }

void osq_string_free(char* s) { std::free(s); }

osq_status osq_dataset_generate(const char* task_json, int count,
                                uint64_t seed, osq_dataset** out) {
  return guarded([&] {
    require_arg(out != nullptr, "missing output handle");
    const nlohmann::json j = parse_json_text(task_json, "task settings");
    const osq::TaskSpec spec = osq::task_spec_from_json(j);
    std::string prefix = "ex";
    if (j.contains("prefix")) {
      osq::require(j.at("prefix").is_string(), osq::ErrorKind::kConfig,
                   "task key 'prefix' must be a string");
      prefix = j.at("prefix").get<std::string>();
    }
    auto* ds = new osq_dataset{osq::gen_dataset(spec, count, seed, prefix)};
    *out = ds;
  });
}

osq_status osq_dataset_load(const char* path, osq_dataset** out) {
  return guarded([&] {
    require_arg(path != nullptr && out != nullptr,
                "missing path or output handle");
    auto* ds = new osq_dataset{osq::load_dataset(path)};
    *out = ds;
  });
}

osq_status osq_dataset_save(const osq_dataset* dataset, const char* path) {
  return guarded([&] {
    require_arg(dataset != nullptr && path != nullptr,
                "missing dataset or path");
    osq::save_dataset(path, dataset->examples);
  });
}

int osq_dataset_size(const osq_dataset* dataset) {
  return dataset == nullptr ? 0 : static_cast<int>(dataset->examples.size());
}

void osq_dataset_free(osq_dataset* dataset) { delete dataset; }

osq_status osq_model_load(const char* checkpoint_path, osq_model** out) {
  return guarded([&] {
    require_arg(checkpoint_path != nullptr && out != nullptr,
                "missing path or output handle");
    osq::Checkpoint ck = osq::load_checkpoint(checkpoint_path);
    auto* m = new osq_model{std::move(ck.params)};
    *out = m;
  });
}

void osq_model_free(osq_model* model) { delete model; }

osq_status osq_train(const char* config_json, const osq_dataset* train_set,
                     const osq_dataset* eval_set, osq_progress_fn progress,
                     void* user, char** result_json) {
  return guarded([&] {
    require_arg(train_set != nullptr, "missing training dataset");
    const nlohmann::json j = parse_json_text(config_json, "configuration");
    const osq::TrainConfig cfg = osq::TrainConfig::from_json(j);

    osq::EvalFn eval_fn;
    if (eval_set != nullptr) {
      const std::vector<osq::Example>* held = &eval_set->examples;
      eval_fn = [held](const osq::ModelParams& params) {
        return osq::evaluate(params, *held).ler;
      };
    }
    osq::ProgressFn progress_fn;
    if (progress != nullptr) {
      progress_fn = [progress, user](std::uint64_t step,
                                     const std::string& line) {
        progress(step, line.c_str(), user);
      };
    }

    const osq::TrainResult res =
        osq::train_loop(cfg, train_set->examples, eval_fn, progress_fn);
    if (result_json != nullptr) {
      nlohmann::json out;
      out["steps_completed"] = res.steps_completed;
      out["early_stopped"] = res.early_stopped;
      out["last_ler"] = res.last_ler;
      out["final_checkpoint"] = res.final_checkpoint;
      *result_json = copy_string(out.dump());
    }
  });
}

osq_status osq_evaluate(const osq_model* model, const osq_dataset* dataset,
                        char** report_json) {
  return guarded([&] {
    require_arg(model != nullptr && dataset != nullptr &&
                    report_json != nullptr,
                "missing model, dataset or output");
    const osq::EvalReport rep =
        osq::evaluate(model->params, dataset->examples);
    nlohmann::json out;
    out["ler"] = rep.ler;
    out["rows"] = nlohmann::json::array();
    for (const auto& row : rep.rows)
      out["rows"].push_back({{"id", row.id},
                             {"distance", row.distance},
                             {"ref_len", row.ref_len},
                             {"ref", row.ref},
                             {"hyp", row.hyp}});
    *report_json = copy_string(out.dump());
  });
}

osq_status osq_trace(const osq_model* model, const osq_dataset* dataset,
                     int group, int with_probs, uint64_t seed, char** text) {
  return guarded([&] {
    require_arg(model != nullptr && dataset != nullptr && text != nullptr,
                "missing model, dataset or output");
    std::string out;
    if (with_probs != 0) out += "id,step,b,sampled\n";
    for (std::size_t i = 0; i < dataset->examples.size(); ++i) {
      const osq::Example& ex = dataset->examples[i];
      osq::RewardConfig rc;  // rewards are irrelevant for the trace
      osq::RngState rng(
          osq::derive_seed(seed, 41, static_cast<std::uint64_t>(i)));
      const osq::Rollout ro =
          osq::rollout_train(model->params, ex, rc, rng);
      out += ex.id + " " + osq::render_trace(ro, group) + "\n";
      if (with_probs != 0) {
        char buf[128];
        for (std::size_t t = 0; t < ro.steps.size(); ++t) {
          std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%d\n", ex.id.c_str(),
                        t, ro.steps[t].b, ro.steps[t].decision);
          out += buf;
        }
      }
    }
    *text = copy_string(out);
  });
}

osq_status osq_gradcheck(const char* options_json, char** report_text,
                         int* pass) {
  return guarded([&] {
    require_arg(report_text != nullptr && pass != nullptr,
                "missing output arguments");
    const nlohmann::json j =
        options_json == nullptr ? nlohmann::json::object()
                                : parse_json_text(options_json, "options");
    const osq::GradcheckOptions opts = osq::gradcheck_options_from_json(j);
    const osq::GradcheckReport report = osq::gradcheck_run(opts);
    *report_text = copy_string(osq::render_gradcheck(report));
    *pass = report.pass ? 1 : 0;
  });
}

osq_status osq_varlab(const char* options_json, char** csv) {
  return guarded([&] {
    require_arg(csv != nullptr, "missing output argument");
    const nlohmann::json j =
        options_json == nullptr ? nlohmann::json::object()
                                : parse_json_text(options_json, "options");
    const osq::VarlabOptions opts = osq::varlab_options_from_json(j);
    const osq::VarlabReport report = osq::varlab_run(opts);
    *csv = copy_string(osq::render_varlab_csv(report));
  });
}

}  // extern "C"
