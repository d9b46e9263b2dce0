// Copyright 2026 The alrnet Authors.
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

#include "alrnet/alrnet.h"

#include <cstring>
#include <new>
#include <string>

#include "alrnet/error.hpp"
#include "alrnet/log.hpp"
#include "alrnet/pipeline.hpp"

struct alr_grid {
  alr::VoxelGrid grid;
};

namespace {

thread_local std::string g_last_error;

template <class F>
alr_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return ALR_OK;
  } catch (const alr::Error& e) {
    g_last_error = e.what();
    return static_cast<alr_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return ALR_ERR_INTERNAL;
}

void require(const void* p, const char* name) {
  if (p == nullptr) throw alr::UsageError(std::string(name) + " must not be NULL");
}

void copy_out(const std::string& s, char* buf, size_t cap) {
  if (buf == nullptr) return;
  if (s.size() + 1 > cap) throw alr::UsageError("output buffer too small for '" + s + "'");
  std::memcpy(buf, s.c_str(), s.size() + 1);
}

alr::TrainConfig train_config(const alr_train_options* opts) {
  alr::TrainConfig cfg;
  if (opts != nullptr && opts->config_path != nullptr) cfg = alr::load_train_config(opts->config_path);
  if (opts != nullptr && opts->has_seed) cfg.seed = opts->seed;
  cfg.validate();
  return cfg;
}

}  // namespace

extern "C" {

const char* alr_version(void) { return "0.1.0"; }

const char* alr_last_error(void) { return g_last_error.c_str(); }

const char* alr_status_name(alr_status s) {
  switch (s) {
    case ALR_OK: return "ok";
    case ALR_ERR_INTERNAL: return "internal";
    case ALR_ERR_CONFIG: return "config";
    case ALR_ERR_IO: return "io";
    case ALR_ERR_MISSING: return "missing";
    case ALR_ERR_NUMERIC: return "numeric";
    case ALR_ERR_DEGENERATE: return "degenerate";
    case ALR_ERR_USAGE: return "usage";
    case ALR_ERR_SKIPPED: return "skipped";
  }
  return "unknown";
}

alr_status alr_set_log_level(alr_log_level level) {
  return guarded([&] {
    if (level < ALR_LOG_DEBUG || level > ALR_LOG_OFF) throw alr::ConfigError("unknown log level");
    alr::set_log_level(static_cast<alr::LogLevel>(level));
  });
}

alr_status alr_grid_read(const char* path, alr_grid** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new alr_grid{alr::read_mvol(path)};
  });
}

void alr_grid_free(alr_grid* g) { delete g; }

alr_status alr_grid_dims(const alr_grid* g, size_t dims[3]) {
  return guarded([&] {
    require(g, "grid");
    require(dims, "dims");
    for (int a = 0; a < 3; ++a) dims[a] = g->grid.dims()[a];
  });
}

alr_status alr_grid_spacing(const alr_grid* g, double spacing[3]) {
  return guarded([&] {
    require(g, "grid");
    require(spacing, "spacing");
    for (int a = 0; a < 3; ++a) spacing[a] = g->grid.spacing()[a];
  });
}

alr_status alr_grid_count(const alr_grid* g, size_t* count) {
  return guarded([&] {
    require(g, "grid");
    require(count, "count");
    *count = g->grid.count();
  });
}

alr_status alr_proxy(const alr_grid* lung, const alr_grid* airway, alr_proxy_result* out) {
  return guarded([&] {
    require(lung, "lung");
    require(airway, "airway");
    require(out, "out");
    const auto r = alr::proxy_alr(lung->grid, airway->grid);
    *out = {r.proxy_alr, r.n_branches_used, r.mean_diam_mm, r.lung_vol_mm3};
  });
}

alr_status alr_phantom_gen(size_t n, uint64_t seed, int strata, int rescan, const char* out_dir) {
  return guarded([&] {
    require(out_dir, "out_dir");
    alr::DatasetOptions o;
    o.n = n;
    o.master_seed = seed;
    o.strata_count = strata;
    o.rescan = rescan != 0;
    alr::gen_dataset(o, out_dir);
  });
}

alr_status alr_preprocess(const char* manifest, size_t dims, const char* out_dir, const double* fov_mm,
                          size_t* n_subjects) {
  return guarded([&] {
    require(manifest, "manifest");
    require(out_dir, "out_dir");
    std::optional<alr::Vec3> fov;
    if (fov_mm != nullptr) fov = alr::Vec3{fov_mm[0], fov_mm[1], fov_mm[2]};
    const auto r = alr::preprocess(manifest, dims, out_dir, fov);
    if (n_subjects != nullptr) *n_subjects = r.n_subjects;
  });
}

alr_status alr_train_stage1(const char* run_dir, const char* manifest, const char* proj_dir, const char* view,
                            const alr_train_options* opts, char* ckpt_out, size_t cap) {
  return guarded([&] {
    require(run_dir, "run_dir");
    require(manifest, "manifest");
    require(proj_dir, "proj_dir");
    require(view, "view");
    const auto v = alr::parse_view(view);
    const auto cfg = train_config(opts);
    copy_out(alr::run_stage1(run_dir, manifest, proj_dir, v, cfg).string(), ckpt_out, cap);
  });
}

alr_status alr_train_stage2(const char* run_dir, const char* mode, const alr_train_options* opts, char* ckpt_out,
                            size_t cap) {
  return guarded([&] {
    require(run_dir, "run_dir");
    require(mode, "mode");
    const auto m = alr::parse_head_mode(mode);
    const auto cfg = train_config(opts);
    copy_out(alr::run_stage2(run_dir, m, cfg).string(), ckpt_out, cap);
  });
}

alr_status alr_evaluate(const char* checkpoint, const char* split, const char* out_dir, const char* outcome_csv,
                        alr_eval_summary* out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(split, "split");
    require(out_dir, "out_dir");
    std::optional<std::filesystem::path> outcome;
    if (outcome_csv != nullptr) outcome = outcome_csv;
    const auto e = alr::evaluate(checkpoint, alr::parse_split(split), out_dir, outcome);
    if (out != nullptr)
      *out = {e.report.n,  e.report.r2, e.report.residual_mean, e.report.residual_sd, e.report.mse,
              e.bland_altman.fixed_bias, e.bland_altman.prop_slope};
  });
}

alr_status alr_proxy_batch(const char* manifest, const char* out_csv, int full_lung, size_t* n_ok) {
  return guarded([&] {
    require(manifest, "manifest");
    require(out_csv, "out_csv");
    const auto rows = alr::proxy_batch(manifest, out_csv, full_lung != 0);
    if (n_ok != nullptr) {
      *n_ok = 0;
      for (const auto& r : rows) *n_ok += r.ok ? 1 : 0;
    }
  });
}

alr_status alr_repro(const char* rescan_manifest, const char* checkpoint, const char* out_dir, int duplicate,
                     alr_repro_summary* out) {
  return guarded([&] {
    require(rescan_manifest, "rescan_manifest");
    require(checkpoint, "checkpoint");
    require(out_dir, "out_dir");
    const auto r = alr::repro(rescan_manifest, checkpoint, out_dir, duplicate != 0);
    if (out != nullptr) *out = {r.icc.n, r.icc.icc, r.rescan_r2};
  });
}

void alr_search_defaults(alr_search_options* opts) {
  if (opts == nullptr) return;
  const alr::SearchSpace s;
  *opts = {20, 0, s.lr_lo, s.lr_hi, s.wd_lo, s.wd_hi};
}

alr_status alr_search(const char* manifest, const char* proj_dir, const char* view, const alr_train_options* train,
                      const alr_search_options* search, const char* out_dir, double* best_lr, double* best_wd) {
  return guarded([&] {
    require(manifest, "manifest");
    require(proj_dir, "proj_dir");
    require(view, "view");
    require(search, "search");
    require(out_dir, "out_dir");
    if (search->n_iters == 0) throw alr::ConfigError("--iters must be positive");
    if (!(search->lr_lo > 0.0 && search->lr_lo <= search->lr_hi) || !(search->wd_lo > 0.0 && search->wd_lo <= search->wd_hi))
      throw alr::ConfigError("search ranges must be positive with lo <= hi");
    const alr::SearchSpace space{search->lr_lo, search->lr_hi, search->wd_lo, search->wd_hi};
    const auto trials = alr::run_search(manifest, proj_dir, alr::parse_view(view), train_config(train), space,
                                        search->n_iters, search->seed, out_dir);
    if (trials.empty() || !trials.front().ok) throw alr::NumericError("every search trial failed");
    if (best_lr != nullptr) *best_lr = trials.front().lr;
    if (best_wd != nullptr) *best_wd = trials.front().weight_decay;
  });
}

}  // extern "C"
