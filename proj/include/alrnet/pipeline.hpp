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

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "alrnet/airway.hpp"
#include "alrnet/phantom.hpp"
#include "alrnet/stats.hpp"
#include "alrnet/train.hpp"

namespace alr {

namespace fs = std::filesystem;

inline constexpr std::size_t kDefaultGridDims = 64;

// --- projections ----------------------------------------------------------------

/// Largest cardiac-mask physical extent over every subject of the manifest.
Vec3 dataset_fov(const Manifest& m);

/// Pads (or, for volumes larger than the FOV, center-crops) both masks to
/// `fov`, resamples to dims^3 and projects along the three views, in
/// kAllViews order.
std::array<ViewStack, 3> view_stacks(const VoxelGrid& lung, const VoxelGrid& airway, Vec3 fov, std::size_t dims);

struct ProjectionInfo {
  fs::path dir;
  std::size_t dims = kDefaultGridDims;
  Vec3 fov_mm{};
};

struct PreprocessResult {
  ProjectionInfo info;
  std::size_t n_subjects = 0;
  std::vector<std::string> empty_airway_ids;
};

/// Writes `<out>/<id>_<view>.mvol` per subject and view plus
/// `<out>/projections.json`. `fov` defaults to the dataset maximum. Throws
/// IoError listing every subject whose volumes are missing.
PreprocessResult preprocess(const fs::path& manifest_path, std::size_t dims, const fs::path& out_dir,
                            std::optional<Vec3> fov = std::nullopt);

ProjectionInfo read_projection_info(const fs::path& dir);
ViewStack load_view(const ProjectionInfo& info, const std::string& id, View view);

// --- run directory ----------------------------------------------------------------

struct ArtifactRecord {
  std::string file;  // relative to the run directory
  std::uint64_t config_hash = 0;
};

/// `run.json`: which dataset and projections a run directory was trained
/// on, the target scaler, and every checkpoint with the hash of the config
/// that produced it.
struct RunManifest {
  fs::path manifest;
  fs::path projections;
  std::optional<TargetScaler> scaler;
  std::map<std::string, ArtifactRecord> checkpoints;  // "stage1_cor", "stage2_gated", ...
};

RunManifest read_run_manifest(const fs::path& run_dir);
void write_run_manifest(const fs::path& run_dir, const RunManifest& rm);

std::string stage1_key(View v);
std::string stage2_key(HeadMode m);

/// Trains Stage 1 for `view`; writes `stage1_<view>.json`,
/// `stage1_<view>_curve.csv` and updates `run.json`. Returns the checkpoint.
fs::path run_stage1(const fs::path& run_dir, const fs::path& manifest_path, const fs::path& proj_dir, View view,
                    const TrainConfig& cfg);

/// Trains a Stage-2 head on the run's three Stage-1 extractors. Throws
/// MissingError when any Stage-1 checkpoint is absent.
fs::path run_stage2(const fs::path& run_dir, HeadMode mode, const TrainConfig& cfg);

// --- inference -------------------------------------------------------------------

struct LoadedModel {
  std::string kind;  // "stage1" or "stage2"
  View view = View::Coronal;
  HeadMode mode = HeadMode::Gated;
  ModelConfig model;
  std::array<ParamSet, 3> extractors;  // kAllViews order; one used for stage1
  ParamSet head;
  TargetScaler scaler;
  RunManifest run;
};

/// Loads a checkpoint and the run it belongs to (`run.json` next to it).
/// Verifies every involved checkpoint against its recorded config hash.
LoadedModel load_model(const fs::path& checkpoint);

struct Prediction {
  double alr = 0.0;  // raw ALR units
  std::array<double, 3> attention{};  // NaN unless gated
};

Prediction predict(const LoadedModel& model, const std::array<ViewStack, 3>& views);

struct SubjectPrediction {
  std::string id;
  double alr_true = 0.0;
  Prediction pred;
};

struct EvalOutputs {
  std::string split;
  EvalReport report;
  BlandAltman bland_altman;
  std::optional<VarIncrement> var_increment;
  std::string var_increment_note;
  std::array<double, 3> mean_attention{};
  std::vector<SubjectPrediction> subjects;
};

/// Predicts every subject of `split`, computes the statistics and writes
/// `eval.json` and `predictions.csv` into `out_dir`. `outcome_csv`, when
/// given, has header `id,y[,covariate...]` and replaces the default
/// variance-increment design (y = true ALR, base = stratum indicators).
EvalOutputs evaluate(const fs::path& checkpoint, Split split, const fs::path& out_dir,
                     const std::optional<fs::path>& outcome_csv = std::nullopt);

std::string eval_json(const EvalOutputs& e);

struct ProxyRow {
  std::string id;
  bool ok = false;
  ProxyResult result;
  double alr_gt = 0.0;
};

/// Proxy ALR of every subject on the cardiac masks (or the full-lung masks
/// when `full_lung`); writes `id,proxy_alr,n_branches_used,mean_diam_mm,lung_vol_mm3`.
std::vector<ProxyRow> proxy_batch(const fs::path& manifest_path, const fs::path& out_csv, bool full_lung = false);

struct ReproOutputs {
  IccResult icc;
  double rescan_r2 = 0.0;  // scan-b prediction against scan-a prediction
  std::vector<std::string> ids;
  std::vector<double> alr_true, pred_a, pred_b;
};

/// Scan-rescan agreement of `checkpoint` on a `rescan.csv`. `duplicate`
/// feeds scan a twice. Writes `repro.json` and `repro.csv`.
ReproOutputs repro(const fs::path& rescan_manifest, const fs::path& checkpoint, const fs::path& out_dir,
                   bool duplicate = false);

/// Random search over (lr, weight_decay) for Stage 1 of `view`; writes
/// `search.csv` and `best_config.json`.
std::vector<Trial> run_search(const fs::path& manifest_path, const fs::path& proj_dir, View view,
                              const TrainConfig& base, const SearchSpace& space, std::size_t n_iters,
                              std::uint64_t seed, const fs::path& out_dir);

TrainConfig load_train_config(const fs::path& path);

}  // namespace alr
