/* Copyright 2026 The alrnet Authors.
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

/* C interface to libalrnet.
 *
 * Every function returns an alr_status. On failure, alr_last_error() returns
 * a message for the calling thread that stays valid until its next call into
 * the library. Output parameters are written only on success. */

#ifndef ALRNET_ALRNET_H_
#define ALRNET_ALRNET_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define ALR_API __attribute__((visibility("default")))
#else
#define ALR_API
#endif

typedef enum alr_status {
  ALR_OK = 0,
  ALR_ERR_INTERNAL = 1,
  ALR_ERR_CONFIG = 2,
  ALR_ERR_IO = 3,
  ALR_ERR_MISSING = 4,
  ALR_ERR_NUMERIC = 5,
  ALR_ERR_DEGENERATE = 6,
  ALR_ERR_USAGE = 7,
  ALR_ERR_SKIPPED = 8
} alr_status;

typedef enum alr_log_level {
  ALR_LOG_DEBUG = 0,
  ALR_LOG_INFO = 1,
  ALR_LOG_WARN = 2,
  ALR_LOG_ERROR = 3,
  ALR_LOG_OFF = 4
} alr_log_level;

ALR_API const char* alr_version(void);
ALR_API const char* alr_last_error(void);
ALR_API const char* alr_status_name(alr_status s);
ALR_API alr_status alr_set_log_level(alr_log_level level);

/* ---- volumes ---------------------------------------------------------- */

typedef struct alr_grid alr_grid;

ALR_API alr_status alr_grid_read(const char* path, alr_grid** out);
ALR_API void alr_grid_free(alr_grid* g);
ALR_API alr_status alr_grid_dims(const alr_grid* g, size_t dims[3]);
ALR_API alr_status alr_grid_spacing(const alr_grid* g, double spacing[3]);
ALR_API alr_status alr_grid_count(const alr_grid* g, size_t* count);

typedef struct alr_proxy_result {
  double proxy_alr;
  int n_branches_used;
  double mean_diam_mm;
  double lung_vol_mm3;
} alr_proxy_result;

ALR_API alr_status alr_proxy(const alr_grid* lung, const alr_grid* airway, alr_proxy_result* out);

/* ---- pipeline --------------------------------------------------------- */

/* Writes `out_dir/volumes/`, `out_dir/manifest.csv` and, when `rescan` is
 * nonzero, `out_dir/rescan.csv`. */
ALR_API alr_status alr_phantom_gen(size_t n, uint64_t seed, int strata, int rescan, const char* out_dir);

/* `fov_mm` may be NULL for the dataset-maximum field of view. */
ALR_API alr_status alr_preprocess(const char* manifest, size_t dims, const char* out_dir, const double* fov_mm,
                                  size_t* n_subjects);

/* Training options. `config_path` may be NULL for defaults. A nonzero
 * `has_seed` replaces the config's seed. */
typedef struct alr_train_options {
  const char* config_path;
  int has_seed;
  uint64_t seed;
} alr_train_options;

/* `view` is one of cor, sag, ax (or the long names). The checkpoint path is
 * copied into `ckpt_out` (capacity `cap`, NUL-terminated) when non-NULL. */
ALR_API alr_status alr_train_stage1(const char* run_dir, const char* manifest, const char* proj_dir, const char* view,
                                    const alr_train_options* opts, char* ckpt_out, size_t cap);

/* `mode` is gated or concat. */
ALR_API alr_status alr_train_stage2(const char* run_dir, const char* mode, const alr_train_options* opts,
                                    char* ckpt_out, size_t cap);

typedef struct alr_eval_summary {
  size_t n;
  double r2;
  double residual_mean;
  double residual_sd;
  double mse;
  double fixed_bias;
  double prop_slope;
} alr_eval_summary;

/* `split` is train, val or test. `outcome_csv` may be NULL. */
ALR_API alr_status alr_evaluate(const char* checkpoint, const char* split, const char* out_dir,
                                const char* outcome_csv, alr_eval_summary* out);

/* Proxy ALR for every subject of a manifest. `n_ok` receives the number of
 * subjects with a measurable proxy. */
ALR_API alr_status alr_proxy_batch(const char* manifest, const char* out_csv, int full_lung, size_t* n_ok);

typedef struct alr_repro_summary {
  size_t n;
  double icc;
  double rescan_r2;
} alr_repro_summary;

ALR_API alr_status alr_repro(const char* rescan_manifest, const char* checkpoint, const char* out_dir, int duplicate,
                             alr_repro_summary* out);

typedef struct alr_search_options {
  size_t n_iters;
  uint64_t seed;
  double lr_lo, lr_hi;
  double wd_lo, wd_hi;
} alr_search_options;

ALR_API void alr_search_defaults(alr_search_options* opts);

/* Random search for Stage 1 of `view`; `best_lr`/`best_wd` may be NULL. */
ALR_API alr_status alr_search(const char* manifest, const char* proj_dir, const char* view,
                              const alr_train_options* train, const alr_search_options* search, const char* out_dir,
                              double* best_lr, double* best_wd);

#ifdef __cplusplus
}
#endif

#endif /* ALRNET_ALRNET_H_ */
