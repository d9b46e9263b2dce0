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

// alrnet: batch command-line front end over the C API.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "alrnet/alrnet.h"

namespace {

int exit_code(alr_status s) {
  switch (s) {
    case ALR_OK: return 0;
    case ALR_ERR_CONFIG:
    case ALR_ERR_USAGE: return 2;
    case ALR_ERR_IO: return 3;
    case ALR_ERR_MISSING: return 4;
    default: return 1;
  }
}

int report(alr_status s) {
  if (s != ALR_OK) std::fprintf(stderr, "alrnet: error (%s): %s\n", alr_status_name(s), alr_last_error());
  return exit_code(s);
}

const char* opt_cstr(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Airway-to-lung ratio estimation from cardiac-FOV airway and lung masks"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  // phantom-gen
  auto* gen = app.add_subcommand("phantom-gen", "Generate a synthetic phantom dataset");
  std::size_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  int gen_strata = 1;
  bool gen_rescan = false;
  std::string gen_out;
  gen->add_option("--n", gen_n, "Number of subjects")->required();
  gen->add_option("--seed", gen_seed, "Master seed")->capture_default_str();
  gen->add_option("--strata", gen_strata, "Number of acquisition strata")->capture_default_str();
  gen->add_flag("--rescan", gen_rescan, "Also write two jittered cardiac crops per subject and rescan.csv");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Write cached 2-D projections for every subject");
  std::string pre_manifest, pre_out;
  std::size_t pre_dims = 64;
  pre->add_option("--manifest", pre_manifest, "Dataset manifest.csv")->required();
  pre->add_option("--dims", pre_dims, "Resampled grid size per axis")->capture_default_str();
  pre->add_option("--out", pre_out, "Projection directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train Stage 1 (one view) or Stage 2 (fusion head)");
  int tr_stage = 1;
  std::string tr_view, tr_mode = "gated", tr_config, tr_run, tr_manifest, tr_proj;
  std::uint64_t tr_seed = 0;
  train->add_option("--stage", tr_stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--view", tr_view, "Stage 1 view: cor, sag or ax");
  train->add_option("--mode", tr_mode, "Stage 2 head: gated or concat")->capture_default_str();
  train->add_option("--config", tr_config, "Training config JSON (defaults when absent)");
  train->add_option("--run", tr_run, "Run directory holding checkpoints and run.json")->required();
  train->add_option("--manifest", tr_manifest, "Dataset manifest.csv (Stage 1)");
  train->add_option("--proj", tr_proj, "Projection directory (Stage 1)");
  auto* tr_seed_opt = train->add_option("--seed", tr_seed, "Override the config seed");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on one split");
  std::string ev_ckpt, ev_split = "test", ev_out, ev_outcome;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint JSON inside a run directory")->required();
  ev->add_option("--split", ev_split, "train, val or test")->capture_default_str();
  ev->add_option("--out", ev_out, "Output directory for eval.json and predictions.csv")->required();
  ev->add_option("--outcome", ev_outcome, "CSV with header id,y[,covariate...] for the variance increment");

  // proxy
  auto* px = app.add_subcommand("proxy", "Direct geometric proxy ALR for every subject");
  std::string px_manifest, px_out;
  bool px_full = false;
  px->add_option("--manifest", px_manifest, "Dataset manifest.csv")->required();
  px->add_option("--out", px_out, "Output CSV")->required();
  px->add_flag("--full", px_full, "Use the full-lung masks instead of the cardiac crops");

  // repro
  auto* rp = app.add_subcommand("repro", "Scan-rescan reproducibility of a checkpoint");
  std::string rp_pairs, rp_ckpt, rp_out;
  bool rp_dup = false;
  rp->add_option("--manifest-pairs", rp_pairs, "rescan.csv written by phantom-gen --rescan")->required();
  rp->add_option("--checkpoint", rp_ckpt, "Checkpoint JSON inside a run directory")->required();
  rp->add_option("--out", rp_out, "Output directory")->required();
  rp->add_flag("--duplicate", rp_dup, "Feed scan a twice instead of scan a and scan b");

  // search
  auto* se = app.add_subcommand("search", "Random search over learning rate and weight decay for Stage 1");
  alr_search_options so;
  alr_search_defaults(&so);
  std::string se_manifest, se_proj, se_view, se_config, se_out;
  se->add_option("--manifest", se_manifest, "Dataset manifest.csv")->required();
  se->add_option("--proj", se_proj, "Projection directory")->required();
  se->add_option("--view", se_view, "cor, sag or ax")->required();
  se->add_option("--config", se_config, "Base training config JSON");
  se->add_option("--iters", so.n_iters, "Number of trials")->capture_default_str();
  se->add_option("--seed", so.seed, "Search seed")->capture_default_str();
  se->add_option("--lr-lo", so.lr_lo, "Lower learning-rate bound")->capture_default_str();
  se->add_option("--lr-hi", so.lr_hi, "Upper learning-rate bound")->capture_default_str();
  se->add_option("--wd-lo", so.wd_lo, "Lower weight-decay bound")->capture_default_str();
  se->add_option("--wd-hi", so.wd_hi, "Upper weight-decay bound")->capture_default_str();
  se->add_option("--out", se_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const alr_log_level lvl = log_level == "debug"  ? ALR_LOG_DEBUG
                            : log_level == "warn" ? ALR_LOG_WARN
                            : log_level == "error" ? ALR_LOG_ERROR
                            : log_level == "off"   ? ALR_LOG_OFF
                                                   : ALR_LOG_INFO;
  alr_set_log_level(lvl);

  if (gen->parsed()) {
    if (gen_n == 0) {
      std::fprintf(stderr, "alrnet: error (config): --n must be positive\n");
      return 2;
    }
    return report(alr_phantom_gen(gen_n, gen_seed, gen_strata, gen_rescan ? 1 : 0, gen_out.c_str()));
  }
  if (pre->parsed()) {
    if (pre_dims == 0) {
      std::fprintf(stderr, "alrnet: error (config): --dims must be positive\n");
      return 2;
    }
    std::size_t n = 0;
    return report(alr_preprocess(pre_manifest.c_str(), pre_dims, pre_out.c_str(), nullptr, &n));
  }
  if (train->parsed()) {
    alr_train_options opts{opt_cstr(tr_config), tr_seed_opt->count() > 0 ? 1 : 0, tr_seed};
    char ckpt[4096];
    alr_status s;
    if (tr_stage == 1) {
      if (tr_view.empty() || tr_manifest.empty() || tr_proj.empty()) {
        std::fprintf(stderr, "alrnet: error (config): --stage 1 needs --view, --manifest and --proj\n");
        return 2;
      }
      s = alr_train_stage1(tr_run.c_str(), tr_manifest.c_str(), tr_proj.c_str(), tr_view.c_str(), &opts, ckpt,
                           sizeof ckpt);
    } else {
      s = alr_train_stage2(tr_run.c_str(), tr_mode.c_str(), &opts, ckpt, sizeof ckpt);
    }
    if (s == ALR_OK) std::fprintf(stderr, "alrnet: wrote %s\n", ckpt);
    return report(s);
  }
  if (ev->parsed()) {
    alr_eval_summary sum;
    const alr_status s = alr_evaluate(ev_ckpt.c_str(), ev_split.c_str(), ev_out.c_str(), opt_cstr(ev_outcome), &sum);
    if (s == ALR_OK)
      std::fprintf(stderr, "alrnet: %s n=%zu r2=%.6g residual=%.6g +- %.6g\n", ev_split.c_str(), sum.n, sum.r2,
                   sum.residual_mean, sum.residual_sd);
    return report(s);
  }
  if (px->parsed()) {
    std::size_t ok = 0;
    return report(alr_proxy_batch(px_manifest.c_str(), px_out.c_str(), px_full ? 1 : 0, &ok));
  }
  if (rp->parsed()) {
    alr_repro_summary sum;
    const alr_status s = alr_repro(rp_pairs.c_str(), rp_ckpt.c_str(), rp_out.c_str(), rp_dup ? 1 : 0, &sum);
    if (s == ALR_OK) std::fprintf(stderr, "alrnet: n=%zu icc=%.6g rescan_r2=%.6g\n", sum.n, sum.icc, sum.rescan_r2);
    return report(s);
  }
  if (se->parsed()) {
    alr_train_options opts{opt_cstr(se_config), 0, 0};
    double lr = 0.0, wd = 0.0;
    const alr_status s =
        alr_search(se_manifest.c_str(), se_proj.c_str(), se_view.c_str(), &opts, &so, se_out.c_str(), &lr, &wd);
    if (s == ALR_OK) std::fprintf(stderr, "alrnet: best lr=%.6g weight_decay=%.6g\n", lr, wd);
    return report(s);
  }
  return 2;
}
