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

#include "alrnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "alrnet/error.hpp"
#include "alrnet/log.hpp"
#include "csvutil.hpp"
#include "fmtutil.hpp"

namespace alr {

namespace {

using ojson = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos, 16);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("config_hash", "bad hash '" + s + "'");
  }
}

ojson parse_json_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw MissingError(std::string(what) + " not found: " + p.string());
  try {
    return ojson::parse(read_text_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what, p.string() + ": " + e.what());
  }
}

// Crops centrally along axes where the grid exceeds `fov`, then pads.
VoxelGrid conform_to_fov(const VoxelGrid& g, Vec3 fov) {
  const auto& d = g.dims();
  const auto& s = g.spacing();
  Dims3 nd = d, off{0, 0, 0};
  bool crop = false;
  for (int a = 0; a < 3; ++a) {
    const auto fit = static_cast<std::size_t>(std::floor(fov[a] / s[a] + 1e-9));
    if (fit < d[a]) {
      nd[a] = std::max<std::size_t>(fit, 1);
      off[a] = (d[a] - nd[a]) / 2;
      crop = true;
    }
  }
  if (!crop) return pad_to_fov(g, fov);
  VoxelGrid c(nd, s);
  for (std::size_t z = 0; z < nd[2]; ++z)
    for (std::size_t y = 0; y < nd[1]; ++y)
      for (std::size_t x = 0; x < nd[0]; ++x) c.set(x, y, z, g.at(x + off[0], y + off[1], z + off[2]) != 0);
  return pad_to_fov(c, fov);
}

fs::path view_file(const ProjectionInfo& info, const std::string& id, View v) {
  return info.dir / (id + "_" + std::string(view_short(v)) + ".mvol");
}

ojson scaler_json(const TargetScaler& s) {
  ojson j;
  j["mu"] = s.mu;
  j["sigma"] = s.sigma;
  return j;
}

TargetScaler scaler_from_json(const ojson& j) { return {j.at("mu").get<double>(), j.at("sigma").get<double>()}; }

TargetScaler training_scaler(const Manifest& m) {
  std::vector<double> y;
  for (const auto* r : m.select(Split::Train)) y.push_back(r->alr_gt);
  if (y.empty()) throw MissingError("manifest has no training subjects");
  return fit_scaler(y);
}

void load_split(const Manifest& m, Split split, const ProjectionInfo& info, View view, const TargetScaler& scaler,
                std::vector<ViewStack>& xs, std::vector<double>& ys) {
  for (const auto* r : m.select(split)) {
    xs.push_back(load_view(info, r->id, view));
    ys.push_back(scaler.apply(r->alr_gt));
  }
}

// Checks the recorded config hash of a checkpoint against its embedded config.
TrainConfig verified_config(const Checkpoint& c, const fs::path& path, std::optional<std::uint64_t> expected) {
  TrainConfig cfg;
  std::uint64_t stored;
  try {
    cfg = train_config_from_json(c.meta.at("config"));
    stored = parse_hex64(c.meta.at("config_hash").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta", path.string() + ": " + e.what());
  }
  if (config_hash(cfg) != stored) throw ConfigError(path.string() + ": config hash does not match its config");
  if (expected && *expected != stored)
    throw ConfigError(path.string() + ": checkpoint config hash differs from the run manifest record");
  return cfg;
}

Checkpoint load_recorded(const fs::path& run_dir, const RunManifest& rm, const std::string& key, TrainConfig* cfg_out) {
  auto it = rm.checkpoints.find(key);
  if (it == rm.checkpoints.end()) throw MissingError("run has no " + key + " checkpoint");
  const fs::path p = run_dir / it->second.file;
  Checkpoint c = load_checkpoint(p);
  TrainConfig cfg = verified_config(c, p, it->second.config_hash);
  if (cfg_out) *cfg_out = cfg;
  return c;
}

ParamSet extractor_part(const ParamSet& p) {
  ParamSet out;
  for (const auto& n : p.names())
    if (n.rfind("head.", 0) != 0) out.add(n, p.at(n), p.frozen(n));
  return out;
}

ParamSet head_part(const ParamSet& p) {
  ParamSet out;
  for (const auto& n : p.names())
    if (n.rfind("head.", 0) == 0) out.add(n, p.at(n), p.frozen(n));
  return out;
}

std::size_t view_index(View v) {
  for (std::size_t i = 0; i < 3; ++i)
    if (kAllViews[i] == v) return i;
  return 0;
}

std::string csv_num(double v) { return std::isfinite(v) ? fmt_g17(v) : std::string("nan"); }

}  // namespace

// --- projections ----------------------------------------------------------------

Vec3 dataset_fov(const Manifest& m) {
  Vec3 fov{0.0, 0.0, 0.0};
  for (const auto& r : m.rows) {
    const VoxelGrid g = read_mvol(r.cc_lung);
    const Vec3 e = g.extent_mm();
    for (int a = 0; a < 3; ++a) fov[a] = std::max(fov[a], e[a]);
  }
  return fov;
}

std::array<ViewStack, 3> view_stacks(const VoxelGrid& lung, const VoxelGrid& airway, Vec3 fov, std::size_t dims) {
  if (dims == 0) throw ConfigError("--dims must be positive");
  const Dims3 target{dims, dims, dims};
  const VoxelGrid l = resample_nn(conform_to_fov(lung, fov), target);
  const VoxelGrid a = resample_nn(conform_to_fov(airway, fov), target);
  std::array<ViewStack, 3> out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = project(a, l, kAllViews[i]);
  return out;
}

PreprocessResult preprocess(const fs::path& manifest_path, std::size_t dims, const fs::path& out_dir,
                            std::optional<Vec3> fov) {
  if (dims == 0) throw ConfigError("--dims must be positive");
  const Manifest m = read_manifest(manifest_path);
  std::vector<std::string> missing;
  for (const auto& r : m.rows)
    if (!fs::exists(r.cc_lung) || !fs::exists(r.cc_airway)) missing.push_back(r.id);
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ",") + id;
    throw IoError("missing volume files for subjects: " + ids);
  }
  PreprocessResult res;
  res.info.dir = out_dir;
  res.info.dims = dims;
  res.info.fov_mm = fov ? *fov : dataset_fov(m);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  for (const auto& r : m.rows) {
    const VoxelGrid lung = read_mvol(r.cc_lung);
    const VoxelGrid airway = read_mvol(r.cc_airway);
    if (airway.count() == 0) {
      log_warn("subject " + r.id + " has an empty airway mask; airway channels are zero");
      res.empty_airway_ids.push_back(r.id);
    }
    const auto stacks = view_stacks(lung, airway, res.info.fov_mm, dims);
    for (const auto& s : stacks) write_view_stack(s, view_file(res.info, r.id, s.view));
    ++res.n_subjects;
  }
  ojson j;
  j["dims"] = dims;
  j["fov_mm"] = {res.info.fov_mm[0], res.info.fov_mm[1], res.info.fov_mm[2]};
  j["n_subjects"] = res.n_subjects;
  write_text_file(out_dir / "projections.json", j.dump(1) + "\n");
  log_info("wrote projections for " + std::to_string(res.n_subjects) + " subjects to " + out_dir.string());
  return res;
}

ProjectionInfo read_projection_info(const fs::path& dir) {
  const ojson j = parse_json_file(dir / "projections.json", "projection index");
  ProjectionInfo info;
  info.dir = dir;
  try {
    info.dims = j.at("dims").get<std::size_t>();
    const auto f = j.at("fov_mm").get<std::vector<double>>();
    if (f.size() != 3) throw FormatError("fov_mm", "expected three values");
    info.fov_mm = {f[0], f[1], f[2]};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("projections.json", e.what());
  }
  return info;
}

ViewStack load_view(const ProjectionInfo& info, const std::string& id, View view) {
  const fs::path p = view_file(info, id, view);
  if (!fs::exists(p)) throw MissingError("projection not found: " + p.string());
  return read_view_stack(p);
}

// --- run directory ----------------------------------------------------------------

std::string stage1_key(View v) { return "stage1_" + std::string(view_short(v)); }
std::string stage2_key(HeadMode m) { return "stage2_" + std::string(head_mode_name(m)); }

RunManifest read_run_manifest(const fs::path& run_dir) {
  const ojson j = parse_json_file(run_dir / "run.json", "run manifest");
  RunManifest rm;
  try {
    rm.manifest = j.at("manifest").get<std::string>();
    rm.projections = j.at("projections").get<std::string>();
    if (j.contains("scaler") && !j.at("scaler").is_null()) rm.scaler = scaler_from_json(j.at("scaler"));
    for (const auto& [key, rec] : j.at("checkpoints").items())
      rm.checkpoints[key] = {rec.at("file").get<std::string>(), parse_hex64(rec.at("config_hash").get<std::string>())};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("run.json", e.what());
  }
  return rm;
}

void write_run_manifest(const fs::path& run_dir, const RunManifest& rm) {
  ojson j;
  j["manifest"] = rm.manifest.string();
  j["projections"] = rm.projections.string();
  j["scaler"] = rm.scaler ? scaler_json(*rm.scaler) : ojson(nullptr);
  ojson ck = ojson::object();
  for (const auto& [key, rec] : rm.checkpoints) ck[key] = {{"file", rec.file}, {"config_hash", hex64(rec.config_hash)}};
  j["checkpoints"] = ck;
  write_text_file(run_dir / "run.json", j.dump(1) + "\n");
}

fs::path run_stage1(const fs::path& run_dir, const fs::path& manifest_path, const fs::path& proj_dir, View view,
                    const TrainConfig& cfg) {
  cfg.validate();
  const Manifest m = read_manifest(manifest_path);
  const ProjectionInfo info = read_projection_info(proj_dir);
  if (info.dims != cfg.model.image_h || info.dims != cfg.model.image_w)
    throw ConfigError("projections are " + std::to_string(info.dims) + " px but the model expects " +
                      std::to_string(cfg.model.image_h) + "x" + std::to_string(cfg.model.image_w));
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw IoError("cannot create '" + run_dir.string() + "': " + ec.message());

  RunManifest rm;
  if (fs::exists(run_dir / "run.json")) {
    rm = read_run_manifest(run_dir);
    if (fs::weakly_canonical(rm.manifest) != fs::weakly_canonical(manifest_path))
      throw ConfigError("run directory " + run_dir.string() + " belongs to manifest " + rm.manifest.string());
  }
  rm.manifest = fs::absolute(manifest_path);
  rm.projections = fs::absolute(proj_dir);
  const TargetScaler scaler = training_scaler(m);
  if (rm.scaler && (rm.scaler->mu != scaler.mu || rm.scaler->sigma != scaler.sigma))
    throw ConfigError("run scaler does not match the manifest's training targets");
  rm.scaler = scaler;

  Stage1Data data;
  load_split(m, Split::Train, info, view, scaler, data.train_x, data.train_y);
  load_split(m, Split::Val, info, view, scaler, data.val_x, data.val_y);
  if (data.train_x.empty() || data.val_x.empty()) throw MissingError("manifest needs train and val subjects");
  log_info("stage 1 " + std::string(view_name(view)) + ": " + std::to_string(data.train_x.size()) + " train, " +
           std::to_string(data.val_x.size()) + " val");
  const TrainResult r = train_stage1(data, cfg);

  Checkpoint c;
  c.kind = "stage1";
  c.meta["view"] = std::string(view_short(view));
  c.meta["config"] = to_json(cfg);
  c.meta["config_hash"] = hex64(config_hash(cfg));
  c.meta["scaler"] = scaler_json(scaler);
  c.meta["best_epoch"] = r.best_epoch;
  c.meta["best_val_mse"] = r.best_val_mse;
  c.meta["epochs_run"] = r.curve.size() - 1;
  c.params = r.params;
  const std::string key = stage1_key(view);
  save_checkpoint(c, run_dir / (key + ".json"));
  write_text_file(run_dir / (key + "_curve.csv"), curve_csv(r.curve));
  rm.checkpoints[key] = {key + ".json", config_hash(cfg)};
  write_run_manifest(run_dir, rm);
  log_info("stage 1 " + std::string(view_name(view)) + ": best val mse " + fmt_g(r.best_val_mse, 6) + " at epoch " +
           std::to_string(r.best_epoch));
  return run_dir / (key + ".json");
}

fs::path run_stage2(const fs::path& run_dir, HeadMode mode, const TrainConfig& cfg) {
  cfg.validate();
  if (!fs::exists(run_dir / "run.json")) throw MissingError("no run manifest in " + run_dir.string() + "; run stage 1 first");
  RunManifest rm = read_run_manifest(run_dir);
  if (!rm.scaler) throw MissingError("run manifest has no target scaler");
  std::array<ParamSet, 3> ext;
  std::array<std::uint64_t, 3> hashes{};
  for (std::size_t v = 0; v < 3; ++v) {
    TrainConfig c1;
    const Checkpoint c = load_recorded(run_dir, rm, stage1_key(kAllViews[v]), &c1);
    if (!(c1.model == cfg.model)) throw ConfigError("stage-2 model config differs from the " + stage1_key(kAllViews[v]) + " model");
    ext[v] = extractor_part(c.params);
    hashes[v] = param_hash(c.params);
  }
  const Manifest m = read_manifest(rm.manifest);
  const ProjectionInfo info = read_projection_info(rm.projections);
  const TargetScaler scaler = *rm.scaler;

  auto features = [&](Split s, std::vector<ViewFeatures>& xs, std::vector<double>& ys) {
    for (const auto* r : m.select(s)) {
      ViewFeatures f;
      for (std::size_t v = 0; v < 3; ++v) f[v] = extract_features(load_view(info, r->id, kAllViews[v]), ext[v], cfg.model);
      xs.push_back(std::move(f));
      ys.push_back(scaler.apply(r->alr_gt));
    }
  };
  Stage2Data data;
  features(Split::Train, data.train_x, data.train_y);
  features(Split::Val, data.val_x, data.val_y);
  const TrainResult r = train_stage2(data, mode, cfg);

  Checkpoint c;
  c.kind = "stage2";
  c.meta["mode"] = std::string(head_mode_name(mode));
  c.meta["config"] = to_json(cfg);
  c.meta["config_hash"] = hex64(config_hash(cfg));
  c.meta["scaler"] = scaler_json(scaler);
  c.meta["best_epoch"] = r.best_epoch;
  c.meta["best_val_mse"] = r.best_val_mse;
  c.meta["epochs_run"] = r.curve.size() - 1;
  ojson sh = ojson::object();
  for (std::size_t v = 0; v < 3; ++v) sh[stage1_key(kAllViews[v])] = hex64(hashes[v]);
  c.meta["stage1_param_hash"] = sh;
  c.params = r.params;
  const std::string key = stage2_key(mode);
  save_checkpoint(c, run_dir / (key + ".json"));
  write_text_file(run_dir / (key + "_curve.csv"), curve_csv(r.curve));
  rm.checkpoints[key] = {key + ".json", config_hash(cfg)};
  write_run_manifest(run_dir, rm);
  log_info("stage 2 " + std::string(head_mode_name(mode)) + ": best val mse " + fmt_g(r.best_val_mse, 6) +
           " at epoch " + std::to_string(r.best_epoch));
  return run_dir / (key + ".json");
}

// --- inference -------------------------------------------------------------------

LoadedModel load_model(const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw MissingError("checkpoint not found: " + checkpoint.string());
  const fs::path run_dir = checkpoint.parent_path().empty() ? fs::path(".") : checkpoint.parent_path();
  LoadedModel lm;
  lm.run = read_run_manifest(run_dir);
  if (!lm.run.scaler) throw MissingError("run manifest has no target scaler");
  lm.scaler = *lm.run.scaler;
  const Checkpoint c = load_checkpoint(checkpoint);
  std::optional<std::uint64_t> expected;
  for (const auto& [key, rec] : lm.run.checkpoints)
    if (rec.file == checkpoint.filename().string()) expected = rec.config_hash;
  const TrainConfig cfg = verified_config(c, checkpoint, expected);
  lm.model = cfg.model;
  lm.kind = c.kind;
  try {
    if (c.kind == "stage1") {
      lm.view = parse_view(c.meta.at("view").get<std::string>());
      lm.extractors[view_index(lm.view)] = extractor_part(c.params);
      lm.head = head_part(c.params);
    } else if (c.kind == "stage2") {
      lm.mode = parse_head_mode(c.meta.at("mode").get<std::string>());
      for (std::size_t v = 0; v < 3; ++v) {
        const Checkpoint s1 = load_recorded(run_dir, lm.run, stage1_key(kAllViews[v]), nullptr);
        const std::string want = c.meta.at("stage1_param_hash").at(stage1_key(kAllViews[v])).get<std::string>();
        if (hex64(param_hash(s1.params)) != want)
          throw ConfigError(stage1_key(kAllViews[v]) + " checkpoint changed after stage 2 was trained");
        lm.extractors[v] = extractor_part(s1.params);
      }
      lm.head = c.params;
    } else {
      throw FormatError("kind", "unknown checkpoint kind '" + c.kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta", checkpoint.string() + ": " + e.what());
  }
  return lm;
}

Prediction predict(const LoadedModel& model, const std::array<ViewStack, 3>& views) {
  Prediction p;
  p.attention.fill(std::nan(""));
  if (model.kind == "stage1") {
    const std::size_t v = view_index(model.view);
    const Feature f = extract_features(views[v], model.extractors[v], model.model);
    p.alr = model.scaler.invert(stage1_forward(f, model.head));
    return p;
  }
  ViewFeatures f;
  for (std::size_t v = 0; v < 3; ++v) f[v] = extract_features(views[v], model.extractors[v], model.model);
  std::array<double, 3> w{};
  p.alr = model.scaler.invert(stage2_predict(f, model.mode, model.head, &w));
  if (model.mode == HeadMode::Gated) p.attention = w;
  return p;
}

std::string eval_json(const EvalOutputs& e) {
  ojson j;
  j["split"] = e.split;
  j["n"] = e.report.n;
  j["report"] = {{"r2", e.report.r2},
                 {"residual_mean", e.report.residual_mean},
                 {"residual_sd", e.report.residual_sd},
                 {"mse", e.report.mse}};
  const auto& b = e.bland_altman;
  j["bland_altman"] = {{"fixed_bias", b.fixed_bias},         {"fixed_bias_t", std::isfinite(b.fixed_bias_t) ? ojson(b.fixed_bias_t) : ojson(nullptr)},
                       {"fixed_bias_p", b.fixed_bias_p},     {"sd_diff", b.sd_diff},
                       {"loa_low", b.loa_low},               {"loa_high", b.loa_high},
                       {"prop_intercept", b.prop_intercept}, {"prop_slope", b.prop_slope},
                       {"prop_slope_se", b.prop_slope_se},   {"prop_ci_low", b.prop_ci_low},
                       {"prop_ci_high", b.prop_ci_high},     {"prop_slope_p", b.prop_slope_p}};
  if (e.var_increment) {
    const auto& v = *e.var_increment;
    j["var_increment"] = {{"r2_base", v.r2_base}, {"r2_full", v.r2_full}, {"increment", v.increment},
                          {"f_stat", std::isfinite(v.f_stat) ? ojson(v.f_stat) : ojson(nullptr)},
                          {"p_value", v.p_value}, {"df1", v.df1}, {"df2", v.df2}};
  } else {
    j["var_increment"] = nullptr;
  }
  if (!e.var_increment_note.empty()) j["var_increment_note"] = e.var_increment_note;
  if (std::isfinite(e.mean_attention[0]))
    j["mean_attention"] = {{"coronal", e.mean_attention[0]}, {"sagittal", e.mean_attention[1]}, {"axial", e.mean_attention[2]}};
  return j.dump(1) + "\n";
}

EvalOutputs evaluate(const fs::path& checkpoint, Split split, const fs::path& out_dir,
                     const std::optional<fs::path>& outcome_csv) {
  const LoadedModel model = load_model(checkpoint);
  const Manifest m = read_manifest(model.run.manifest);
  const ProjectionInfo info = read_projection_info(model.run.projections);
  const auto rows = m.select(split);
  if (rows.empty()) throw MissingError("split '" + std::string(split_name(split)) + "' is empty");

  EvalOutputs out;
  out.split = std::string(split_name(split));
  std::vector<double> pred, truth;
  std::array<double, 3> att_sum{0.0, 0.0, 0.0};
  for (const auto* r : rows) {
    std::array<ViewStack, 3> views;
    for (std::size_t v = 0; v < 3; ++v)
      if (model.kind == "stage2" || kAllViews[v] == model.view) views[v] = load_view(info, r->id, kAllViews[v]);
    SubjectPrediction sp{r->id, r->alr_gt, predict(model, views)};
    for (std::size_t v = 0; v < 3; ++v) att_sum[v] += sp.pred.attention[v];
    pred.push_back(sp.pred.alr);
    truth.push_back(r->alr_gt);
    out.subjects.push_back(std::move(sp));
  }
  const double n = static_cast<double>(rows.size());
  for (std::size_t v = 0; v < 3; ++v) out.mean_attention[v] = att_sum[v] / n;
  out.report = eval_report(pred, truth);
  out.bland_altman = bland_altman(pred, truth);

  try {
    if (outcome_csv) {
      const std::string header = read_text_file(*outcome_csv).substr(0, read_text_file(*outcome_csv).find('\n'));
      std::vector<std::string> cols;
      std::stringstream hs(header);
      for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
      if (cols.size() < 2 || cols[0] != "id" || cols[1] != "y")
        throw FormatError("header", outcome_csv->string() + ": expected header id,y[,covariate...]");
      const auto table = read_csv(*outcome_csv, cols);
      std::map<std::string, const std::vector<std::string>*> by_id;
      for (const auto& rec : table) by_id[rec[0]] = &rec;
      const auto k = static_cast<Eigen::Index>(cols.size() - 2);
      Eigen::MatrixXd base(static_cast<Eigen::Index>(rows.size()), k);
      std::vector<double> y(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        auto it = by_id.find(rows[i]->id);
        if (it == by_id.end()) throw MissingError("outcome table has no row for " + rows[i]->id);
        y[i] = parse_real((*it->second)[1], "y");
        for (Eigen::Index c = 0; c < k; ++c)
          base(static_cast<Eigen::Index>(i), c) = parse_real((*it->second)[static_cast<std::size_t>(c + 2)], cols[static_cast<std::size_t>(c + 2)]);
      }
      out.var_increment = r2_increment(y, base, pred, std::vector<std::string>(cols.begin() + 2, cols.end()));
    } else {
      std::vector<int> strata;
      for (const auto* r : rows)
        if (std::find(strata.begin(), strata.end(), r->stratum) == strata.end()) strata.push_back(r->stratum);
      std::sort(strata.begin(), strata.end());
      const auto k = static_cast<Eigen::Index>(strata.empty() ? 0 : strata.size() - 1);
      Eigen::MatrixXd base = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), k);
      std::vector<std::string> names;
      for (Eigen::Index c = 0; c < k; ++c) names.push_back("stratum " + std::to_string(strata[static_cast<std::size_t>(c + 1)]));
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (Eigen::Index c = 0; c < k; ++c)
          base(static_cast<Eigen::Index>(i), c) = rows[i]->stratum == strata[static_cast<std::size_t>(c + 1)] ? 1.0 : 0.0;
      out.var_increment = r2_increment(truth, base, pred, names);
    }
  } catch (const DegenerateError& e) {
    out.var_increment_note = e.what();
    log_warn(std::string("variance increment skipped: ") + e.what());
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  write_text_file(out_dir / "eval.json", eval_json(out));
  std::ostringstream csv;
  csv << "id,alr_true,alr_pred,residual,attention_cor,attention_sag,attention_ax\n";
  for (const auto& s : out.subjects) {
    csv << s.id << ',' << fmt_g17(s.alr_true) << ',' << fmt_g17(s.pred.alr) << ',' << fmt_g17(s.pred.alr - s.alr_true);
    for (double a : s.pred.attention) csv << ',' << (std::isfinite(a) ? fmt_g17(a) : std::string());
    csv << '\n';
  }
  write_text_file(out_dir / "predictions.csv", csv.str());
  return out;
}

std::vector<ProxyRow> proxy_batch(const fs::path& manifest_path, const fs::path& out_csv, bool full_lung) {
  const Manifest m = read_manifest(manifest_path);
  std::vector<ProxyRow> rows;
  std::ostringstream csv;
  csv << "id,proxy_alr,n_branches_used,mean_diam_mm,lung_vol_mm3\n";
  for (const auto& r : m.rows) {
    ProxyRow pr;
    pr.id = r.id;
    pr.alr_gt = r.alr_gt;
    try {
      pr.result = full_lung ? proxy_alr(read_mvol(r.fl_lung), read_mvol(r.fl_airway))
                            : proxy_alr(read_mvol(r.cc_lung), read_mvol(r.cc_airway));
      pr.ok = true;
    } catch (const DegenerateError& e) {
      log_warn("proxy for " + r.id + " unavailable: " + e.what());
      pr.result = {std::nan(""), 0, std::nan(""), std::nan("")};
    }
    csv << pr.id << ',' << csv_num(pr.result.proxy_alr) << ',' << pr.result.n_branches_used << ','
        << csv_num(pr.result.mean_diam_mm) << ',' << csv_num(pr.result.lung_vol_mm3) << '\n';
    rows.push_back(pr);
  }
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  write_text_file(out_csv, csv.str());
  return rows;
}

ReproOutputs repro(const fs::path& rescan_manifest, const fs::path& checkpoint, const fs::path& out_dir, bool duplicate) {
  const LoadedModel model = load_model(checkpoint);
  const ProjectionInfo info = read_projection_info(model.run.projections);
  const auto rows = read_rescan_manifest(rescan_manifest);
  ReproOutputs out;
  std::vector<std::array<double, 2>> pairs;
  for (const auto& r : rows) {
    const auto va = view_stacks(read_mvol(r.cc_lung_a), read_mvol(r.cc_airway_a), info.fov_mm, info.dims);
    const double pa = predict(model, va).alr;
    const double pb = duplicate
                          ? predict(model, va).alr
                          : predict(model, view_stacks(read_mvol(r.cc_lung_b), read_mvol(r.cc_airway_b), info.fov_mm, info.dims)).alr;
    out.ids.push_back(r.id);
    out.alr_true.push_back(r.alr_gt);
    out.pred_a.push_back(pa);
    out.pred_b.push_back(pb);
    pairs.push_back({pa, pb});
  }
  out.icc = icc_oneway(pairs);
  out.rescan_r2 = r2(out.pred_b, out.pred_a);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  ojson j;
  j["n"] = out.icc.n;
  j["icc"] = {{"value", out.icc.icc}, {"variant", out.icc.variant}, {"k", out.icc.k},
              {"ms_between", out.icc.ms_between}, {"ms_within", out.icc.ms_within}};
  j["rescan_r2"] = {{"value", out.rescan_r2}, {"definition", "R2 of scan-b predictions against scan-a predictions"}};
  j["duplicate_inputs"] = duplicate;
  write_text_file(out_dir / "repro.json", j.dump(1) + "\n");
  std::ostringstream csv;
  csv << "id,alr_true,pred_a,pred_b\n";
  for (std::size_t i = 0; i < out.ids.size(); ++i)
    csv << out.ids[i] << ',' << fmt_g17(out.alr_true[i]) << ',' << fmt_g17(out.pred_a[i]) << ','
        << fmt_g17(out.pred_b[i]) << '\n';
  write_text_file(out_dir / "repro.csv", csv.str());
  return out;
}

std::vector<Trial> run_search(const fs::path& manifest_path, const fs::path& proj_dir, View view, const TrainConfig& base,
                              const SearchSpace& space, std::size_t n_iters, std::uint64_t seed, const fs::path& out_dir) {
  base.validate();
  const Manifest m = read_manifest(manifest_path);
  const ProjectionInfo info = read_projection_info(proj_dir);
  const TargetScaler scaler = training_scaler(m);
  Stage1Data data;
  load_split(m, Split::Train, info, view, scaler, data.train_x, data.train_y);
  load_split(m, Split::Val, info, view, scaler, data.val_x, data.val_y);
  const auto trials = random_search(space, n_iters, seed, [&](const Trial& t) {
    TrainConfig c = base;
    c.lr = t.lr;
    c.weight_decay = t.weight_decay;
    c.eta_min = std::min(c.eta_min, c.lr);
    log_info("trial " + std::to_string(t.index) + ": lr " + fmt_g(t.lr, 4) + " weight_decay " + fmt_g(t.weight_decay, 4));
    return train_stage1(data, c).best_val_mse;
  });
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  std::ostringstream csv;
  csv << "rank,trial,lr,weight_decay,ok,val_mse,error\n";
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    std::string err = t.error;
    std::replace(err.begin(), err.end(), ',', ';');
    csv << i << ',' << t.index << ',' << fmt_g17(t.lr) << ',' << fmt_g17(t.weight_decay) << ',' << (t.ok ? 1 : 0) << ','
        << (t.ok ? fmt_g17(t.val_mse) : std::string()) << ',' << err << '\n';
  }
  write_text_file(out_dir / "search.csv", csv.str());
  if (!trials.empty() && trials.front().ok) {
    TrainConfig best = base;
    best.lr = trials.front().lr;
    best.weight_decay = trials.front().weight_decay;
    write_text_file(out_dir / "best_config.json", to_json(best).dump(1) + "\n");
    log_info("best trial " + std::to_string(trials.front().index) + ": lr " + fmt_g(best.lr, 6) + " weight_decay " +
             fmt_g(best.weight_decay, 6));
  }
  return trials;
}

TrainConfig load_train_config(const fs::path& path) { return train_config_from_json(parse_json_file(path, "train config")); }

}  // namespace alr
