/* Copyright 2026 The IMLS Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C ABI of the IMLS spiking-Transformer library.
 *
 * All objects are opaque handles created and destroyed through this API.
 * Every fallible call returns an imls_status; on failure a human-readable
 * message is available from imls_last_error() (thread-local, valid until
 * the next failing call on the same thread). Strings returned through
 * char** out-parameters are heap-allocated and must be released with
 * imls_free_string().
 *
 * Configuration is `key = value` text with '#' comments; unknown keys are
 * rejected. See the project README for the key table and file formats.
 */

#ifndef IMLS_IMLS_H
#define IMLS_IMLS_H

#include <stdint.h>

#if defined(_WIN32)
#  define IMLS_API __declspec(dllexport)
#else
#  define IMLS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum imls_status {
  IMLS_OK = 0,
  IMLS_ERR_INVALID_ARGUMENT = 1, /* null handle, bad flag value */
  IMLS_ERR_DIMENSION = 2,        /* shape or range violation */
  IMLS_ERR_STATE = 3,            /* operation illegal in current state */
  IMLS_ERR_PARSE = 4,            /* config/CSV/manifest parse failure */
  IMLS_ERR_FORMAT = 5,           /* checkpoint format violation */
  IMLS_ERR_IO = 6,               /* file system failure */
  IMLS_ERR_CHECK_FAILED = 7,     /* a self-check sweep found mismatches */
  IMLS_ERR_INTERNAL = 8
} imls_status;

typedef struct imls_model imls_model;
typedef struct imls_dataset imls_dataset;

IMLS_API const char* imls_status_string(imls_status status);
IMLS_API const char* imls_last_error(void);
IMLS_API void imls_free_string(char* s);

/* Expands config text over the built-in defaults and returns the fully
 * resolved `key = value` listing. */
IMLS_API imls_status imls_resolve_config(const char* config_text, char** out);

/* --- model lifecycle --------------------------------------------------- */

IMLS_API imls_status imls_model_create(const char* config_text, uint64_t seed,
                                       imls_model** out);
IMLS_API void imls_model_free(imls_model* model);
IMLS_API imls_status imls_model_save(const imls_model* model, const char* path);
IMLS_API imls_status imls_model_load(const char* path, imls_model** out);

/* Fuses the per-head query/key weights and freezes threshold statistics.
 * Fails with IMLS_ERR_STATE if the model is already fused. */
IMLS_API imls_status imls_model_reparameterize(imls_model* model);
IMLS_API int imls_model_is_fused(const imls_model* model); /* 0/1, -1 on null */
IMLS_API imls_status imls_model_config_text(const imls_model* model, char** out);
IMLS_API imls_status imls_model_num_classes(const imls_model* model, int32_t* out);
IMLS_API imls_status imls_model_input_dim(const imls_model* model, int32_t* out);

/* --- datasets ----------------------------------------------------------- */

/* Synthetic sequence-classification corpus from the data.* config keys.
 * test_split != 0 draws the held-out split (disjoint seed, test size). */
IMLS_API imls_status imls_dataset_synthetic(const char* config_text,
                                            int test_split, imls_dataset** out);
IMLS_API imls_status imls_dataset_load_manifest(const char* manifest_path,
                                                int32_t num_classes,
                                                imls_dataset** out);
/* Writes feature CSVs plus manifest.csv under dir; returns the manifest
 * path. */
IMLS_API imls_status imls_dataset_write(const imls_dataset* data,
                                        const char* dir, char** manifest_out);
IMLS_API int64_t imls_dataset_size(const imls_dataset* data);
IMLS_API int32_t imls_dataset_label(const imls_dataset* data, int64_t index);
IMLS_API int64_t imls_dataset_length(const imls_dataset* data, int64_t index);
IMLS_API void imls_dataset_free(imls_dataset* data);

/* --- training and inference --------------------------------------------- */

/* Cross-entropy training with the train.* config keys. Writes per-epoch
 * metrics CSV when metrics_csv_path is non-null; reports the final test
 * accuracy when final_test_acc is non-null. */
IMLS_API imls_status imls_train(imls_model* model, const imls_dataset* train_set,
                                const imls_dataset* test_set,
                                const char* config_text,
                                const char* metrics_csv_path,
                                double* final_test_acc);

IMLS_API imls_status imls_evaluate(const imls_model* model,
                                   const imls_dataset* data, int spike_driven,
                                   int threads, double* accuracy_out);

/* Logits for one utterance; features is row-major length x c_in and
 * logits_out must hold num_classes floats. spike_driven requires a fused
 * model. */
IMLS_API imls_status imls_infer(const imls_model* model, const float* features,
                                int64_t length, int64_t c_in, int spike_driven,
                                float* logits_out);
IMLS_API imls_status imls_infer_csv(const imls_model* model,
                                    const char* feature_csv, int spike_driven,
                                    float* logits_out);

/* --- energy estimation --------------------------------------------------- */

/* Event-driven inference over the dataset with dual-route energy
 * accounting. Any out-parameter may be null; csv_path may be null. */
IMLS_API imls_status imls_energy_report(const imls_model* model,
                                        const imls_dataset* data,
                                        const char* csv_path, double* e_ann_mj,
                                        double* e_snn_mj, double* saving_ratio,
                                        double* dual_route_rel_diff);

/* --- self checks --------------------------------------------------------- */

/* Multi-level vs iterative firing sweep, spike-train expansion identity and
 * the event-driven matmul oracle. Returns IMLS_ERR_CHECK_FAILED on any
 * mismatch; the report text is always produced. */
IMLS_API imls_status imls_check_equivalence(char** report_out);
IMLS_API imls_status imls_check_reparam(uint64_t seed, int32_t trials,
                                        char** report_out);

/* --- decay mask and attention maps --------------------------------------- */

IMLS_API imls_status imls_decay_mask_csv(int32_t layer_index, int64_t seq_len,
                                         const char* out_csv);
IMLS_API imls_status imls_decay_mask_value(int32_t layer_index, int64_t distance,
                                           double* out);

/* Per-head attention map of one layer for one utterance, written as long
 * format CSV (head,row,col,value). Softmax variants dump post-softmax
 * probabilities; linear variants dump the decay-masked logits. */
IMLS_API imls_status imls_attention_dump(const imls_model* model,
                                         const char* feature_csv,
                                         int32_t layer_index,
                                         const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* IMLS_IMLS_H */
