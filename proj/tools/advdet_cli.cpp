// advdet: prepare data, calibrate tau, train, evaluate and probe adversarial detectors.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "advdet/cli/commands.hpp"

namespace {

using namespace advdet;

void add_oracle_flags(CLI::App* cmd, cli::OracleFlags& f) {
  cmd->add_option("--provider", f.provider, "Embedding source: cache, synthetic or arcface")
      ->check(CLI::IsMember({"cache", "synthetic", "arcface"}));
  cmd->add_option("--embeddings", f.embeddings, "Embedding cache file (default: embeddings.bin beside the manifest)");
  cmd->add_option("--arcface-model", f.arcface_model, "Serialized recognition model for the arcface provider");
  cmd->add_option("--oracle-seed", f.synthetic_seed, "Seed of the synthetic provider");
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees large im2col buffers every step; keeping them
  // on the heap avoids an mmap/munmap pair and page faults per allocation.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);  // glibc's upper limit
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif

  CLI::App app{"Adversarial face-forgery detection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "advdet 0.1.0");

  // prepare-synthetic
  FactorDatasetSpec spec;
  std::string prep_out = "synthetic";
  auto* prep = app.add_subcommand("prepare-synthetic", "Render the synthetic factor dataset");
  prep->add_option("--run-dir,--out", prep_out, "Output directory")->capture_default_str();
  prep->add_option("--seed", spec.seed, "Generation seed")->capture_default_str();
  prep->add_option("--identities", spec.n_identities, "Number of identities")->capture_default_str();
  prep->add_option("--methods", spec.n_methods, "Number of forgery methods (1-4)")->capture_default_str();
  prep->add_option("--videos-per-combo", spec.images_per_combo, "Videos per identity and real/method combination")
      ->capture_default_str();
  prep->add_option("--frames-per-video", spec.frames_per_video, "Frames per video")->capture_default_str();
  prep->add_option("--image-size", spec.image_size, "Image side in pixels")->capture_default_str();
  prep->add_option("--artifact-amplitude", spec.artifact_amplitude, "Strength of the method artifacts")
      ->capture_default_str();
  prep->add_option("--frame-noise", spec.frame_noise, "Per-frame Gaussian noise sigma")->capture_default_str();

  // calibrate-tau
  cli::CalibrateArgs cal;
  std::string band = "0.60,0.85";
  std::string cal_out;
  auto* calc = app.add_subcommand("calibrate-tau", "Sample pairwise embedding similarities and propose tau");
  calc->add_option("--manifest", cal.manifest, "Manifest file")->required();
  calc->add_option("--quantile-band", band, "Quantile band 'lo,hi' bounding the candidate range")
      ->capture_default_str();
  calc->add_option("--batches", cal.options.n_batches, "Batches to sample")->capture_default_str();
  calc->add_option("--batch-size", cal.options.batch_size, "Records per sampled batch")->capture_default_str();
  calc->add_option("--grid-step", cal.options.grid_step, "Spacing of candidate tau values")->capture_default_str();
  calc->add_option("--seed", cal.options.seed, "Sampling seed")->capture_default_str();
  calc->add_option("--out", cal.out, "Report JSON path")->capture_default_str();
  calc->add_option("--run-dir", cal_out, "Write tau_calibration.json and its curve here instead of --out");
  calc->add_option("--curve-out", cal.curve_out, "Cumulative curve CSV (default: <out>_curve.csv)");
  add_oracle_flags(calc, cal.oracle);

  // train
  cli::TrainArgs tr;
  std::string tr_config, adv_f, adv_id;
  double tau = 0;
  std::int64_t tr_seed = 0;
  bool quiet = false;
  auto* trc = app.add_subcommand("train", "Train a detector; ablation modes are flags");
  trc->add_option("--manifest", tr.manifest, "Manifest file")->required();
  trc->add_option("--config", tr_config, "Config JSON (missing keys keep defaults)");
  trc->add_option("--run-dir", tr.run_dir, "Run directory (resumed when it holds a checkpoint)")->required();
  auto* f_opt = trc->add_option("--adv-forgery", adv_f, "Forgery-method adversary: on|off")
                    ->check(CLI::IsMember({"on", "off"}));
  auto* id_opt = trc->add_option("--adv-identity", adv_id, "Identity adversary: hard|sim|pseudo|off")
                     ->check(CLI::IsMember({"hard", "sim", "pseudo", "off"}));
  auto* tau_opt = trc->add_option("--tau", tau, "Identity similarity threshold");
  auto* seed_opt = trc->add_option("--seed", tr_seed, "Run seed (overrides the config)");
  trc->add_flag("--quiet", quiet, "No progress lines on stderr");
  add_oracle_flags(trc, tr.oracle);

  // evaluate
  cli::EvaluateArgs ev;
  std::string ev_config;
  auto* evc = app.add_subcommand("evaluate", "Frame- and video-level AUC/ACC of a trained run");
  evc->add_option("--run-dir", ev.run_dir, "Run directory")->required();
  evc->add_option("--manifest", ev.manifest, "Manifest file")->required();
  evc->add_option("--split", ev.split, "train, val, test, heldout or all")->capture_default_str();
  evc->add_option("--checkpoint", ev.checkpoint, "latest or best")
      ->check(CLI::IsMember({"latest", "best"}))
      ->capture_default_str();
  evc->add_option("--out", ev.out, "Report path (default: <run-dir>/eval_<split>.json)");
  evc->add_option("--config", ev_config, "Ignored; the run directory's config.json is authoritative");

  // probe-clustering
  cli::ProbeArgs pr;
  std::string pr_config;
  auto* prc = app.add_subcommand("probe-clustering", "Clustering accuracy of generator features");
  prc->add_option("--run-dir", pr.run_dir, "Run directory")->required();
  prc->add_option("--manifest", pr.manifest, "Manifest file")->required();
  prc->add_option("--target", pr.target, "method or identity")->required();
  prc->add_option("--algorithm", pr.algorithm, "kmeans or gmm")->capture_default_str();
  prc->add_option("--split", pr.split, "train, val, test, heldout or all")->capture_default_str();
  prc->add_option("--checkpoint", pr.checkpoint, "latest or best")
      ->check(CLI::IsMember({"latest", "best"}))
      ->capture_default_str();
  prc->add_option("--seed", pr.seed, "Clustering seed")->capture_default_str();
  prc->add_option("--out", pr.out, "Report path");
  prc->add_option("--config", pr_config, "Ignored; the run directory's config.json is authoritative");

  // export-features
  cli::ExportArgs ex;
  std::string ex_config;
  std::int64_t ex_seed = 0;
  auto* exc = app.add_subcommand("export-features", "Write generator features with labels as CSV");
  exc->add_option("--run-dir", ex.run_dir, "Run directory")->required();
  exc->add_option("--manifest", ex.manifest, "Manifest file")->required();
  exc->add_option("--split", ex.split, "train, val, test, heldout or all")->capture_default_str();
  exc->add_option("--checkpoint", ex.checkpoint, "latest or best")
      ->check(CLI::IsMember({"latest", "best"}))
      ->capture_default_str();
  exc->add_option("--out", ex.out, "CSV path (default: <run-dir>/features_<split>.csv)");
  exc->add_option("--config", ex_config, "Ignored; the run directory's config.json is authoritative");
  exc->add_option("--seed", ex_seed, "Ignored; export is deterministic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  return cli::run_guarded([&] {
    if (*prep) {
      cli::cmd_prepare_synthetic(spec, prep_out);
    } else if (*calc) {
      cal.options.quantile_band = cli::parse_band(band);
      if (!cal_out.empty()) cal.out = std::filesystem::path(cal_out) / "tau_calibration.json";
      cli::cmd_calibrate_tau(cal);
    } else if (*trc) {
      if (!tr_config.empty()) tr.config = tr_config;
      if (*f_opt) tr.adv_forgery = adv_f;
      if (*id_opt) tr.adv_identity = adv_id;
      if (*tau_opt) tr.tau = tau;
      if (*seed_opt) tr.seed = tr_seed;
      if (!quiet) tr.progress = &std::cerr;
      cli::cmd_train(tr);
    } else if (*evc) {
      cli::cmd_evaluate(ev);
    } else if (*prc) {
      cli::cmd_probe_clustering(pr);
    } else if (*exc) {
      cli::cmd_export_features(ex);
    }
  });
}
