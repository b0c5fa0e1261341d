/* Copyright 2026 The Osq Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the online transducer library: training, evaluation,
 * trace rendering, estimator verification, and dataset tooling behind
 * opaque handles and status codes. Every function returns OSQ_OK or an
 * error code; osq_last_error() describes the most recent failure on the
 * calling thread. Strings returned through char** are heap-allocated
 * and must be released with osq_string_free().
 */

#ifndef OSQ_H_
#define OSQ_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum osq_status {
  OSQ_OK = 0,
  OSQ_ERR_INVALID_ARGUMENT = 1,
  OSQ_ERR_DOMAIN = 2,
  OSQ_ERR_SHAPE = 3,
  OSQ_ERR_CONFIG = 4,
  OSQ_ERR_IO = 5,
  OSQ_ERR_FORMAT = 6,
  OSQ_ERR_CAPACITY = 7,
  OSQ_ERR_ABORTED = 8,
  OSQ_ERR_UNKNOWN = 9
} osq_status;

/* Library version, e.g. "0.1.0". Static storage; do not free. */
const char* osq_version(void);

/* Message for the last failure on this thread. Static storage per
 * thread; valid until the next failing call on the same thread. */
const char* osq_last_error(void);

/* Releases a string returned through a char** out-parameter. */
void osq_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Datasets                                                            */
/* ------------------------------------------------------------------ */

typedef struct osq_dataset osq_dataset;

/* Generates `count` synthetic examples. task_json is a JSON object:
 *   {"kind": "stretch_copy" | "blank_interleave", "vocab": 8,
 *    "min_targets": 5, "max_targets": 10, "stretch_min": 1,
 *    "stretch_max": 3, "blank_min": 0, "blank_max": 3, "sigma": 0.1,
 *    "prefix": "ex"}
 * Missing keys keep the defaults shown; unknown keys are an error. */
osq_status osq_dataset_generate(const char* task_json, int count,
                                uint64_t seed, osq_dataset** out);

/* Reads or writes the JSON-lines dataset format:
 * {"id": ..., "inputs": [[...], ...], "targets": [...]} per line. */
osq_status osq_dataset_load(const char* path, osq_dataset** out);
osq_status osq_dataset_save(const osq_dataset* dataset, const char* path);

int osq_dataset_size(const osq_dataset* dataset);
void osq_dataset_free(osq_dataset* dataset);

/* ------------------------------------------------------------------ */
/* Models                                                              */
/* ------------------------------------------------------------------ */

typedef struct osq_model osq_model;

/* Loads the model weights stored in a training checkpoint. */
osq_status osq_model_load(const char* checkpoint_path, osq_model** out);
void osq_model_free(osq_model* model);

/* ------------------------------------------------------------------ */
/* Training                                                            */
/* ------------------------------------------------------------------ */

/* Called once per completed step with the step's JSON log line. */
typedef void (*osq_progress_fn)(uint64_t step, const char* json_line,
                                void* user);

/* Runs the full training loop. config_json holds flat dotted keys (see
 * the CLI's --help for the schema); eval_set may be NULL to skip
 * periodic evaluation. On success *result_json describes the run:
 *   {"steps_completed": N, "early_stopped": bool, "last_ler": x,
 *    "final_checkpoint": "path"}  (last_ler is -1 before any eval). */
osq_status osq_train(const char* config_json, const osq_dataset* train_set,
                     const osq_dataset* eval_set, osq_progress_fn progress,
                     void* user, char** result_json);

/* ------------------------------------------------------------------ */
/* Evaluation and traces                                               */
/* ------------------------------------------------------------------ */

/* Greedy-decodes every example and scores it. On success *report_json
 * holds {"ler": x, "rows": [{"id", "distance", "ref_len", "ref", "hyp"},
 * ...]} with end-of-sequence tokens already stripped. */
osq_status osq_evaluate(const osq_model* model, const osq_dataset* dataset,
                        char** report_json);

/* Renders sampled emission traces, one block per example: a line
 * "<id> <pattern>" where the pattern has one character per group of
 * `group` input steps ('x' = emitted in that group). with_probs != 0
 * appends CSV lines "id,step,b,sampled" for every input step. */
osq_status osq_trace(const osq_model* model, const osq_dataset* dataset,
                     int group, int with_probs, uint64_t seed, char** text);

/* ------------------------------------------------------------------ */
/* Estimator verification                                              */
/* ------------------------------------------------------------------ */

/* options_json (all keys optional): {"layers", "hidden", "input_dim",
 * "t1", "t2", "vocab", "lambda", "regularizer": "entropy"|"kl",
 * "seed", "instances", "epsilon", "tolerance", "corrupt_score_sign"}.
 * *pass is 1 iff every estimator variant matched finite differences
 * within tolerance; *report_text is the human-readable table. */
osq_status osq_gradcheck(const char* options_json, char** report_text,
                         int* pass);

/* options_json (all keys optional): {"layers", "hidden", "input_dim",
 * "t1", "t2", "vocab", "lambda", "regularizer", "seed", "samples"}.
 * *csv has columns variant,coord,mean,variance,bias. */
osq_status osq_varlab(const char* options_json, char** csv);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* OSQ_H_ */
