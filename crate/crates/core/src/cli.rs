//! The `sfgru` command line.
//!
//! Every command that writes `--out PATH` also writes
//! `PATH.manifest.json` with the arguments, the resolved configuration and
//! SHA-256 digests of the inputs. Exit codes: 0 success, 2 usage or invalid
//! value, 3 input schema, 4 numerical failure, 5 I/O.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dataset::{load_tracks, synth_generate, SynthConfig, sample_windows, save_tracks, seconds_to_frames, split_train_test, SamplingSpec, Track, TRAIN_RATIO};
use crate::error::{Error, Result};
use crate::features::FeatureKey;
use crate::gradcheck::{gradcheck, DEFAULT_STEP, TOLERANCE};
use crate::model::{Model, ModelKind, ModelSpec, DEFAULT_HIDDEN};
use crate::sweep::{
    ablate_features, default_fusion_orders, sweep_fusion_order, sweep_obs_length, sweep_tte, RowOutcome, SweepConfig,
    SweepResult, SweepRow, ABLATION_SETS, DEFAULT_TTE_S, OBS_LENGTHS_S, OBS_TTES_S,
};
use crate::train::{evaluate, train, Mode, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "sfgru", version, about = "Pedestrian crossing anticipation with stacked fusion GRUs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic track file.
    Synth(SynthArgs),
    /// Train one model and save a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Retrain and evaluate every model at each TTE grid point.
    SweepTte(SweepTteArgs),
    /// Observation length by TTE grid.
    SweepObs(SweepObsArgs),
    /// Feature ablation rows.
    Ablate(AblateArgs),
    /// SF-GRU fusion order permutations.
    FusionOrder(FusionOrderArgs),
}

/// A comma separated flag value. Wrapped so clap treats the whole list as
/// one value; a bare `Vec` would be read as repeated occurrences.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
struct List<T>(Vec<T>);

fn parse_keys(s: &str) -> std::result::Result<List<FeatureKey>, String> {
    FeatureKey::parse_list(s).map(List).map_err(|e| e.to_string())
}

fn parse_kinds(s: &str) -> std::result::Result<List<ModelKind>, String> {
    s.split(',')
        .map(|k| k.trim().parse::<ModelKind>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()
        .map(List)
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 140)]
    n: usize,
    /// Non-crossing to crossing ratio.
    #[arg(long, default_value_t = 2.5)]
    ratio: f64,
    #[arg(long, default_value_t = 8.0)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 140)]
    track_len: usize,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Omit the full-context vector.
    #[arg(long)]
    no_full_context: bool,
    /// Emit mirrored context vectors.
    #[arg(long)]
    flipped_context: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Model selection shared by train and the sweeps.
#[derive(Debug, Args, Serialize)]
struct ModelArgs {
    #[arg(long, default_value = "sf-gru")]
    model: ModelKind,
    /// Input features for non-stacked models, e.g. `Cp,Cs,P,B,S`.
    #[arg(long, value_parser = parse_keys)]
    features: Option<List<FeatureKey>>,
    /// Level order for SF-GRU, bottom to top.
    #[arg(long, value_parser = parse_keys)]
    fusion_order: Option<List<FeatureKey>>,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
}

impl ModelArgs {
    fn spec(&self, obs_len: usize) -> Result<ModelSpec> {
        let keys = match (&self.features, &self.fusion_order) {
            (Some(f), Some(o)) if f != o => {
                return Err(Error::InvalidArgument("--features and --fusion-order disagree".into()));
            }
            (Some(k), _) | (None, Some(k)) => k.0.clone(),
            (None, None) => self.model.default_features(),
        };
        ModelSpec::new(self.model, keys, self.hidden, obs_len)
    }
}

#[derive(Debug, Args, Serialize)]
struct OptimArgs {
    /// Hyperparameter preset.
    #[arg(long, value_enum, default_value = "paper")]
    mode: Mode,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_balance: bool,
    #[arg(long)]
    no_flip: bool,
}

impl OptimArgs {
    fn config(&self) -> Result<TrainConfig> {
        let base = TrainConfig::for_mode(self.mode);
        let cfg = TrainConfig {
            lr: self.lr.unwrap_or(base.lr),
            epochs: self.epochs.unwrap_or(base.epochs),
            batch_size: self.batch.unwrap_or(base.batch_size),
            l2: self.l2.unwrap_or(base.l2),
            seed: self.seed,
            balance: !self.no_balance,
            flip_augment: !self.no_flip,
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    tracks: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long, default_value_t = 0.5)]
    obs_len_s: f64,
    #[arg(long, default_value_t = DEFAULT_TTE_S)]
    tte_s: f64,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// One-row CSV report.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TTE_S)]
    tte_s: f64,
    /// Split seed; match the training `--seed`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate on every track instead of the test split.
    #[arg(long)]
    all: bool,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value = "sf-gru")]
    model: ModelKind,
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    /// Observed frames.
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_keys)]
    features: Option<List<FeatureKey>>,
    /// Number of random windows in the loss.
    #[arg(long, default_value_t = 2)]
    samples: usize,
    /// Optional JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    optim: OptimArgs,
}

impl SweepArgs {
    fn config(&self) -> Result<SweepConfig> {
        if self.jobs == 0 {
            return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
        }
        Ok(SweepConfig {
            jobs: self.jobs,
            ..SweepConfig::new(self.optim.config()?)
        })
    }
}

#[derive(Debug, Args, Serialize)]
struct SweepTteArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Comma-separated models; all six by default.
    #[arg(long, value_parser = parse_kinds)]
    model: Option<List<ModelKind>>,
    #[arg(long, value_parser = parse_keys)]
    features: Option<List<FeatureKey>>,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    obs_len_s: f64,
}

#[derive(Debug, Args, Serialize)]
struct SweepObsArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args, Serialize)]
struct AblateArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(long, default_value = "sf-gru")]
    model: ModelKind,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    obs_len_s: f64,
    #[arg(long, default_value_t = DEFAULT_TTE_S)]
    tte_s: f64,
}

#[derive(Debug, Args, Serialize)]
struct FusionOrderArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// A permutation of Cp,Cs,P,B,S; repeat for several rows. Defaults to
    /// the six reference permutations.
    #[arg(long, value_parser = parse_keys)]
    fusion_order: Vec<List<FeatureKey>>,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    obs_len_s: f64,
    #[arg(long, default_value_t = DEFAULT_TTE_S)]
    tte_s: f64,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Schema { .. }
        | Error::Json(_)
        | Error::Track { .. }
        | Error::Checkpoint(_)
        | Error::InvalidLabel(_)
        | Error::DegenerateBox(..)
        | Error::MissingModality(_)
        | Error::ClassAbsent(_) => EXIT_SCHEMA,
        Error::NonFinite(_) | Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_) | Error::GradCheck(_) => EXIT_NUMERICAL,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn error_kind(code: i32) -> &'static str {
    match code {
        EXIT_SCHEMA => "schema",
        EXIT_NUMERICAL => "numerical",
        EXIT_IO => "io",
        _ => "usage",
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, &args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error[{}]: {e}", error_kind(code));
            code
        }
    }
}

fn dispatch(cmd: Command, args: &[String]) -> Result<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(a, args),
        Command::Train(a) => cmd_train(a, args),
        Command::Eval(a) => cmd_eval(a, args),
        Command::Gradcheck(a) => cmd_gradcheck(a, args),
        Command::SweepTte(a) => cmd_sweep_tte(a, args),
        Command::SweepObs(a) => cmd_sweep_obs(a, args),
        Command::Ablate(a) => cmd_ablate(a, args),
        Command::FusionOrder(a) => cmd_fusion_order(a, args),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes `<out>.manifest.json`. No timestamps, so reruns are byte-identical.
fn write_manifest(out: &Path, command: &str, args: &[String], config: Value, inputs: &[&Path], result: Value) -> Result<()> {
    let inputs = inputs
        .iter()
        .map(|p| Ok(json!({ "path": p.display().to_string(), "sha256": sha256_file(p)? })))
        .collect::<Result<Vec<_>>>()?;
    let manifest = json!({
        "tool": "sfgru",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "args": args,
        "config": config,
        "inputs": inputs,
        "output": { "path": out.display().to_string(), "sha256": sha256_file(out)? },
        "result": result,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(manifest_path(out), text)?;
    Ok(())
}

fn load(path: &Path) -> Result<Vec<Track>> {
    let tracks = load_tracks(path)?;
    if tracks.is_empty() {
        return Err(Error::Schema {
            line: 0,
            message: format!("{} contains no tracks", path.display()),
        });
    }
    log::info!("loaded {} tracks from {}", tracks.len(), path.display());
    Ok(tracks)
}

fn track_fps(tracks: &[Track]) -> Result<f64> {
    let fps = tracks[0].fps;
    if tracks.iter().any(|t| t.fps != fps) {
        return Err(Error::InvalidArgument("tracks disagree on fps".into()));
    }
    Ok(fps)
}

fn frames(seconds: f64, fps: f64, flag: &str) -> Result<usize> {
    if !(seconds >= 0.0 && seconds.is_finite()) {
        return Err(Error::InvalidArgument(format!("{flag} must be a non-negative number, got {seconds}")));
    }
    Ok(seconds_to_frames(seconds, fps))
}

fn obs_frames(seconds: f64, fps: f64) -> Result<usize> {
    let m = frames(seconds, fps, "--obs-len-s")?;
    if m == 0 {
        return Err(Error::InvalidArgument(format!("--obs-len-s {seconds} is shorter than one frame")));
    }
    Ok(m)
}

fn cmd_synth(a: SynthArgs, args: &[String]) -> Result<()> {
    let cfg = SynthConfig {
        n_tracks: a.n,
        track_len_frames: a.track_len,
        class_ratio: a.ratio,
        snr: a.snr,
        seed: a.seed,
        fps: a.fps,
        full_context: !a.no_full_context,
        flipped_context: a.flipped_context,
        ..SynthConfig::default()
    };
    let tracks = synth_generate(&cfg)?;
    save_tracks(&a.out, &tracks)?;
    let (non, cross) = cfg.class_counts();
    write_manifest(&a.out, "synth", args, json!(cfg), &[], json!({ "crossing": cross, "non_crossing": non }))
}

fn cmd_train(a: TrainArgs, args: &[String]) -> Result<()> {
    let tracks = load(&a.tracks)?;
    let fps = track_fps(&tracks)?;
    let spec = a.model.spec(obs_frames(a.obs_len_s, fps)?)?;
    let cfg = a.optim.config()?;
    let sampling = SamplingSpec::new(spec.obs_len, frames(a.tte_s, fps, "--tte-s")?);
    let split = split_train_test(&tracks, TRAIN_RATIO, cfg.seed)?;
    let refs: Vec<&Track> = tracks.iter().collect();
    let (train_tracks, _) = split.partition(&refs);
    let (windows, skipped) = sample_windows(&train_tracks, &sampling)?;
    log::info!("{} training windows, {skipped} tracks skipped", windows.len());
    let outcome = train(&spec, &windows, &cfg)?;
    outcome.model.save(&a.out)?;
    write_manifest(
        &a.out,
        "train",
        args,
        json!({ "spec": spec, "train": cfg, "sampling": sampling, "split_ratio": TRAIN_RATIO }),
        &[&a.tracks],
        json!({ "n_train": windows.len(), "skipped_tracks": skipped, "epoch_losses": outcome.epoch_losses }),
    )
}

fn cmd_eval(a: EvalArgs, args: &[String]) -> Result<()> {
    let tracks = load(&a.tracks)?;
    let fps = track_fps(&tracks)?;
    let model = Model::load(&a.checkpoint)?;
    let sampling = SamplingSpec::new(model.spec.obs_len, frames(a.tte_s, fps, "--tte-s")?);
    let refs: Vec<&Track> = tracks.iter().collect();
    let (train_tracks, test_tracks) = if a.all {
        (Vec::new(), refs)
    } else {
        split_train_test(&tracks, TRAIN_RATIO, a.seed)?.partition(&refs)
    };
    let (train_w, _) = sample_windows(&train_tracks, &sampling)?;
    let (test_w, skipped) = sample_windows(&test_tracks, &sampling)?;
    let report = evaluate(&model, &test_w, 0.5)?;
    let result = SweepResult {
        rows: vec![SweepRow {
            model: model.spec.kind,
            fusion_order: model.spec.fusion_order.clone(),
            tte_s: sampling.tte_frames as f64 / fps,
            obs_len_s: sampling.obs_len as f64 / fps,
            n_train: train_w.len(),
            n_test: test_w.len(),
            seed: a.seed,
            outcome: RowOutcome::Done(report.clone()),
        }],
    };
    result.write_csv(&a.out)?;
    write_manifest(
        &a.out,
        "eval",
        args,
        json!({ "sampling": sampling, "split_seed": a.seed, "all": a.all, "threshold": 0.5 }),
        &[&a.tracks, &a.checkpoint],
        json!({ "metrics": report, "skipped_tracks": skipped }),
    )
}

fn cmd_gradcheck(a: GradcheckArgs, args: &[String]) -> Result<()> {
    let keys = a.features.clone().map_or_else(|| a.model.default_features(), |l| l.0);
    let spec = ModelSpec::new(a.model, keys, a.hidden, a.m)?;
    let report = gradcheck(&spec, a.seed, a.samples, DEFAULT_STEP)?;
    println!(
        "{}: {} parameters, max relative error {:.3e} at {}, {} refined in double-double ({})",
        spec.kind,
        report.n_params,
        report.max_rel_err,
        report.worst,
        report.refined,
        if report.passed() { "pass" } else { "FAIL" }
    );
    if let Some(out) = &a.out {
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(out, text)?;
        write_manifest(out, "gradcheck", args, json!({ "spec": spec, "seed": a.seed, "step": DEFAULT_STEP }), &[], json!(report))?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Error::GradCheck(format!(
            "relative error {:.3e} at {} exceeds {TOLERANCE:e}",
            report.max_rel_err, report.worst
        )))
    }
}

fn finish_sweep(res: &SweepResult, sweep: &SweepArgs, command: &str, args: &[String], config: Value) -> Result<()> {
    res.write_csv(&sweep.out)?;
    let skipped: Vec<Value> = res
        .skipped()
        .map(|(r, why)| json!({ "model": r.model, "features": FeatureKey::join(&r.fusion_order, ","), "tte_s": r.tte_s, "reason": why }))
        .collect();
    write_manifest(
        &sweep.out,
        command,
        args,
        config,
        &[&sweep.tracks],
        json!({ "rows": res.rows.len(), "skipped": skipped }),
    )
}

fn cmd_sweep_tte(a: SweepTteArgs, args: &[String]) -> Result<()> {
    let cfg = a.sweep.config()?;
    let tracks = load(&a.sweep.tracks)?;
    let m = obs_frames(a.obs_len_s, track_fps(&tracks)?)?;
    let kinds = a.model.clone().map_or_else(|| ModelKind::ALL.to_vec(), |l| l.0);
    let specs = kinds
        .iter()
        .map(|&k| ModelSpec::new(k, a.features.clone().map_or_else(|| k.default_features(), |l| l.0), a.hidden, m))
        .collect::<Result<Vec<_>>>()?;
    let res = sweep_tte(&specs, &tracks, m, &cfg)?;
    finish_sweep(&res, &a.sweep, "sweep-tte", args, json!({ "specs": specs, "sweep": cfg, "obs_len": m }))
}

fn cmd_sweep_obs(a: SweepObsArgs, args: &[String]) -> Result<()> {
    let cfg = a.sweep.config()?;
    let tracks = load(&a.sweep.tracks)?;
    let spec = a.model.spec(1)?;
    let res = sweep_obs_length(&spec, &tracks, &OBS_LENGTHS_S, &OBS_TTES_S, &cfg)?;
    finish_sweep(
        &res,
        &a.sweep,
        "sweep-obs",
        args,
        json!({ "spec": spec, "sweep": cfg, "obs_lengths_s": OBS_LENGTHS_S, "ttes_s": OBS_TTES_S }),
    )
}

fn cmd_ablate(a: AblateArgs, args: &[String]) -> Result<()> {
    let cfg = a.sweep.config()?;
    let tracks = load(&a.sweep.tracks)?;
    let fps = track_fps(&tracks)?;
    let tte = frames(a.tte_s, fps, "--tte-s")?;
    let base = ModelSpec::new(a.model, a.model.default_features(), a.hidden, obs_frames(a.obs_len_s, fps)?)?;
    let res = ablate_features(&base, &tracks, &ABLATION_SETS, tte as f64 / fps, &cfg)?;
    let sets: Vec<String> = ABLATION_SETS.iter().map(|s| FeatureKey::join(s, ",")).collect();
    finish_sweep(&res, &a.sweep, "ablate", args, json!({ "base": base, "sweep": cfg, "sets": sets, "tte_s": a.tte_s }))
}

fn cmd_fusion_order(a: FusionOrderArgs, args: &[String]) -> Result<()> {
    let cfg = a.sweep.config()?;
    let tracks = load(&a.sweep.tracks)?;
    let fps = track_fps(&tracks)?;
    frames(a.tte_s, fps, "--tte-s")?;
    let orders = if a.fusion_order.is_empty() {
        default_fusion_orders()
    } else {
        a.fusion_order.iter().map(|l| l.0.clone()).collect()
    };
    let base = ModelSpec::new(ModelKind::StackedFusionGru, orders[0].clone(), a.hidden, obs_frames(a.obs_len_s, fps)?)?;
    let res = sweep_fusion_order(&base, &tracks, &orders, a.tte_s, &cfg)?;
    let names: Vec<String> = orders.iter().map(|o| FeatureKey::join(o, ",")).collect();
    finish_sweep(&res, &a.sweep, "fusion-order", args, json!({ "base": base, "sweep": cfg, "orders": names, "tte_s": a.tte_s }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["sfgru", "bogus"]), EXIT_USAGE);
        assert_eq!(run(["sfgru", "synth", "--n", "3"]), EXIT_USAGE);
        assert_eq!(run(["sfgru", "synth", "--out", "x", "--unknown"]), EXIT_USAGE);
        assert_eq!(run(["sfgru", "gradcheck", "--model", "lstm"]), EXIT_USAGE);
        assert_eq!(run(["sfgru", "--help"]), EXIT_OK);
    }

    #[test]
    fn error_codes_are_distinct() {
        let codes = [
            exit_code(&Error::InvalidArgument("x".into())),
            exit_code(&Error::Schema { line: 1, message: "x".into() }),
            exit_code(&Error::NonFiniteGradient("w".into())),
            exit_code(&Error::Io(std::io::Error::other("x"))),
        ];
        assert_eq!(codes, [EXIT_USAGE, EXIT_SCHEMA, EXIT_NUMERICAL, EXIT_IO]);
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("out/t3.csv")), PathBuf::from("out/t3.csv.manifest.json"));
    }
}
