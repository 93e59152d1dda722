//! Experiment sweeps: TTE, observation length, feature ablation and fusion
//! order. Every condition trains a fresh model on the train split and is
//! evaluated on the test split at the same sampling point.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    filter_min_length, sample_windows, seconds_to_frames, split_ids, tte_grid, SamplingSpec, Track, TRAIN_RATIO,
};
use crate::error::{Error, Result};
use crate::features::FeatureKey;
use crate::metrics::MetricsReport;
use crate::model::{ModelKind, ModelSpec};
use crate::numerics::Rng;
use crate::train::{evaluate, train, TrainConfig};

use FeatureKey::{Cp, Cps, Cs, B, D, P, S};

pub const CSV_HEADER: &str = "model,fusion_order,features,tte_s,obs_len_s,acc,auc,f1,precision,recall,n_train,n_test,seed";

/// Feature configurations of the ablation table, in row order.
pub const ABLATION_SETS: [&[FeatureKey]; 7] = [
    &[Cp],
    &[Cps],
    &[Cp, Cs],
    &[Cp, Cs, P],
    &[Cp, Cs, P, D],
    &[Cp, Cs, P, B],
    &[Cp, Cs, P, B, S],
];

/// Fusion orders of the permutation table, worst to best.
pub const FUSION_ORDERS: [[FeatureKey; 5]; 6] = [
    [P, S, B, Cp, Cs],
    [S, B, Cp, Cs, P],
    [B, Cp, Cs, P, S],
    [S, Cp, Cs, P, B],
    [Cp, B, Cs, S, P],
    [Cp, Cs, P, B, S],
];

pub const OBS_LENGTHS_S: [f64; 4] = [0.3, 0.5, 1.0, 1.5];
pub const OBS_TTES_S: [f64; 4] = [0.0, 1.0, 2.0, 3.0];
/// Single-point protocol used by the ablation and fusion-order sweeps.
pub const DEFAULT_TTE_S: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub train: TrainConfig,
    /// Seed of the track-level train/test split.
    pub split_seed: u64,
    pub split_ratio: f64,
    pub threshold: f64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl SweepConfig {
    pub fn new(train: TrainConfig) -> Self {
        SweepConfig {
            split_seed: train.seed,
            train,
            split_ratio: TRAIN_RATIO,
            threshold: 0.5,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RowOutcome {
    Done(MetricsReport),
    Skipped(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: ModelKind,
    pub fusion_order: Vec<FeatureKey>,
    pub tte_s: f64,
    pub obs_len_s: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub outcome: RowOutcome,
}

impl SweepRow {
    pub fn metrics(&self) -> Option<&MetricsReport> {
        match &self.outcome {
            RowOutcome::Done(m) => Some(m),
            RowOutcome::Skipped(_) => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

impl SweepResult {
    /// CSV report. Skipped rows print `NA` for every metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let mut sorted = r.fusion_order.clone();
            sorted.sort();
            let metrics = match r.metrics() {
                Some(m) => [
                    f4(m.accuracy),
                    m.auc.map_or_else(|| "NA".to_string(), f4),
                    f4(m.f1),
                    f4(m.precision),
                    f4(m.recall),
                ],
                None => std::array::from_fn(|_| "NA".to_string()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.model,
                FeatureKey::join(&r.fusion_order, "-"),
                FeatureKey::join(&sorted, "+"),
                f4(r.tte_s),
                f4(r.obs_len_s),
                metrics.join(","),
                r.n_train,
                r.n_test,
                r.seed
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn skipped(&self) -> impl Iterator<Item = (&SweepRow, &str)> {
        self.rows.iter().filter_map(|r| match &r.outcome {
            RowOutcome::Skipped(why) => Some((r, why.as_str())),
            RowOutcome::Done(_) => None,
        })
    }
}

/// One cell of a sweep grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub spec: ModelSpec,
    pub sampling: SamplingSpec,
}

fn common_fps(tracks: &[&Track]) -> Result<f64> {
    let fps = tracks
        .first()
        .ok_or_else(|| Error::InvalidArgument("no tracks left after filtering".into()))?
        .fps;
    if tracks.iter().any(|t| t.fps != fps) {
        return Err(Error::InvalidArgument("tracks disagree on fps".into()));
    }
    Ok(fps)
}

/// Seed for condition `index`; independent of thread scheduling.
pub fn condition_seed(base: u64, index: usize) -> u64 {
    Rng::new(base).fork(index as u64).next_u64()
}

fn run_condition(cond: &Condition, seed: u64, train_set: &[&Track], test_set: &[&Track], cfg: &SweepConfig) -> Result<SweepRow> {
    let fps = common_fps(train_set).or_else(|_| common_fps(test_set)).unwrap_or(crate::dataset::DEFAULT_FPS);
    let (train_w, _) = sample_windows(train_set, &cond.sampling)?;
    let (test_w, _) = sample_windows(test_set, &cond.sampling)?;
    let mut row = SweepRow {
        model: cond.spec.kind,
        fusion_order: cond.spec.fusion_order.clone(),
        tte_s: cond.sampling.tte_frames as f64 / fps,
        obs_len_s: cond.sampling.obs_len as f64 / fps,
        n_train: train_w.len(),
        n_test: test_w.len(),
        seed,
        outcome: RowOutcome::Skipped(String::new()),
    };
    let skip = |mut row: SweepRow, why: String| {
        log::warn!("skipping {} {} tte {:.4}s: {why}", row.model, FeatureKey::join(&row.fusion_order, "-"), row.tte_s);
        row.outcome = RowOutcome::Skipped(why);
        Ok(row)
    };
    if train_w.is_empty() || test_w.is_empty() {
        return skip(row, "no windows in train or test split".into());
    }
    for &key in &cond.spec.fusion_order {
        if !train_w.iter().chain(&test_w).all(|w| w.window.has_modality(key)) {
            return skip(row, format!("missing modality {key}"));
        }
    }
    let tcfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let outcome = match train(&cond.spec, &train_w, &tcfg) {
        Ok(o) => o,
        Err(Error::ClassAbsent(class)) => return skip(row, format!("no {class} samples in training split")),
        Err(e) => return Err(e),
    };
    row.outcome = RowOutcome::Done(evaluate(&outcome.model, &test_w, cfg.threshold)?);
    Ok(row)
}

/// Runs every condition, in parallel when `cfg.jobs > 1`. Row order follows
/// `conditions` regardless of scheduling.
pub fn run_conditions(conditions: &[Condition], tracks: &[&Track], cfg: &SweepConfig) -> Result<SweepResult> {
    let ids: Vec<&str> = tracks.iter().map(|t| t.id.as_str()).collect();
    let split = split_ids(&ids, cfg.split_ratio, cfg.split_seed)?;
    let (train_set, test_set) = split.partition(tracks);
    let seeds: Vec<u64> = (0..conditions.len()).map(|i| condition_seed(cfg.train.seed, i)).collect();

    let jobs = cfg.jobs.max(1).min(conditions.len().max(1));
    let rows = if jobs == 1 {
        conditions
            .iter()
            .zip(&seeds)
            .map(|(c, &s)| run_condition(c, s, &train_set, &test_set, cfg))
            .collect::<Result<Vec<_>>>()?
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<SweepRow>>>> = Mutex::new((0..conditions.len()).map(|_| None).collect());
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= conditions.len() {
                        break;
                    }
                    let r = run_condition(&conditions[i], seeds[i], &train_set, &test_set, cfg);
                    slots.lock().unwrap()[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|r| r.expect("every condition runs"))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(SweepResult { rows })
}

fn with_obs_len(spec: &ModelSpec, obs_len: usize) -> ModelSpec {
    ModelSpec {
        obs_len,
        ..spec.clone()
    }
}

/// Tracks long enough for `seconds` of history, as a reference list.
fn filtered(tracks: &[Track], seconds: f64) -> Result<Vec<&Track>> {
    let kept = filter_min_length(tracks, seconds);
    log::info!("{} of {} tracks have at least {seconds}s of history", kept.len(), tracks.len());
    if kept.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "only {} tracks have at least {seconds}s of history",
            kept.len()
        )));
    }
    Ok(kept)
}

/// Every spec at every TTE grid point with `obs_len` frames observed.
/// Tracks shorter than the observation plus the largest TTE are dropped.
pub fn sweep_tte(specs: &[ModelSpec], tracks: &[Track], obs_len: usize, cfg: &SweepConfig) -> Result<SweepResult> {
    let all: Vec<&Track> = tracks.iter().collect();
    let fps = common_fps(&all)?;
    let grid = tte_grid(fps);
    let max_tte = *grid.last().expect("grid is non-empty");
    let kept = filtered(tracks, (obs_len + max_tte) as f64 / fps)?;
    let mut conditions = Vec::with_capacity(grid.len() * specs.len());
    for &tte in &grid {
        for spec in specs {
            let spec = with_obs_len(spec, obs_len);
            spec.validate()?;
            conditions.push(Condition {
                spec,
                sampling: SamplingSpec::new(obs_len, tte),
            });
        }
    }
    run_conditions(&conditions, &kept, cfg)
}

/// The `obs_lengths_s` by `ttes_s` grid for one spec.
pub fn sweep_obs_length(spec: &ModelSpec, tracks: &[Track], obs_lengths_s: &[f64], ttes_s: &[f64], cfg: &SweepConfig) -> Result<SweepResult> {
    let all: Vec<&Track> = tracks.iter().collect();
    let fps = common_fps(&all)?;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let kept = filtered(tracks, max(obs_lengths_s) + max(ttes_s))?;
    let mut conditions = Vec::new();
    for &obs in obs_lengths_s {
        let m = seconds_to_frames(obs, fps);
        for &tte in ttes_s {
            let spec = with_obs_len(spec, m);
            spec.validate()?;
            conditions.push(Condition {
                spec,
                sampling: SamplingSpec::new(m, seconds_to_frames(tte, fps)),
            });
        }
    }
    run_conditions(&conditions, &kept, cfg)
}

/// One row per feature set, all at the same sampling point.
pub fn ablate_features(base: &ModelSpec, tracks: &[Track], sets: &[&[FeatureKey]], tte_s: f64, cfg: &SweepConfig) -> Result<SweepResult> {
    let all: Vec<&Track> = tracks.iter().collect();
    let fps = common_fps(&all)?;
    let sampling = SamplingSpec::new(base.obs_len, seconds_to_frames(tte_s, fps));
    let conditions = sets
        .iter()
        .map(|set| {
            let spec = ModelSpec {
                fusion_order: set.to_vec(),
                ..base.clone()
            };
            spec.validate()?;
            Ok(Condition { spec, sampling })
        })
        .collect::<Result<Vec<_>>>()?;
    run_conditions(&conditions, &all, cfg)
}

/// Checks that `order` is a permutation of the five default keys.
pub fn validate_fusion_order(order: &[FeatureKey]) -> Result<()> {
    let mut got = order.to_vec();
    got.sort();
    let mut want = FeatureKey::DEFAULT_ORDER.to_vec();
    want.sort();
    if got != want {
        return Err(Error::InvalidSpec(format!(
            "fusion order {} is not a permutation of {}",
            FeatureKey::join(order, ","),
            FeatureKey::join(&FeatureKey::DEFAULT_ORDER, ",")
        )));
    }
    Ok(())
}

/// One SF-GRU per fusion order. `base` supplies hidden size, obs_len and
/// bias settings; its kind is forced to SF-GRU.
pub fn sweep_fusion_order(base: &ModelSpec, tracks: &[Track], orders: &[Vec<FeatureKey>], tte_s: f64, cfg: &SweepConfig) -> Result<SweepResult> {
    for o in orders {
        validate_fusion_order(o)?;
    }
    let all: Vec<&Track> = tracks.iter().collect();
    let fps = common_fps(&all)?;
    let sampling = SamplingSpec::new(base.obs_len, seconds_to_frames(tte_s, fps));
    let conditions: Vec<Condition> = orders
        .iter()
        .map(|o| Condition {
            spec: ModelSpec {
                kind: ModelKind::StackedFusionGru,
                fusion_order: o.clone(),
                ..base.clone()
            },
            sampling,
        })
        .collect();
    run_conditions(&conditions, &all, cfg)
}

pub fn default_fusion_orders() -> Vec<Vec<FeatureKey>> {
    FUSION_ORDERS.iter().map(|o| o.to_vec()).collect()
}
