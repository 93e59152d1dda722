//! Train SF-GRU on synthetic tracks and report held-out metrics.
//!
//!     cargo run --release --example train_sf_gru -- [snr] [hidden] [epochs] [n_tracks]

use std::time::Instant;

use sfgru::dataset::{sample_windows, split_train_test, SamplingSpec, SynthConfig, Track, TRAIN_RATIO};
use sfgru::train::{evaluate, train, TrainConfig};
use sfgru::{ModelKind, ModelSpec};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> sfgru::Result<()> {
    let snr: f64 = arg(1, 8.0);
    let hidden: usize = arg(2, 32);
    let epochs: usize = arg(3, 60);
    let n_tracks: usize = arg(4, 600);
    let (m, tte) = (15, 60);

    let tracks = sfgru::dataset::synth_generate(&SynthConfig {
        n_tracks,
        track_len_frames: m + tte + 5,
        snr,
        seed: 11,
        full_context: false,
        ..SynthConfig::default()
    })?;
    let split = split_train_test(&tracks, TRAIN_RATIO, 0)?;
    let refs: Vec<&Track> = tracks.iter().collect();
    let (train_t, test_t) = split.partition(&refs);
    let sampling = SamplingSpec::new(m, tte);
    let (train_w, _) = sample_windows(&train_t, &sampling)?;
    let (test_w, _) = sample_windows(&test_t, &sampling)?;
    drop(tracks);

    let spec = ModelSpec {
        hidden_dim: hidden,
        obs_len: m,
        ..ModelSpec::with_defaults(ModelKind::StackedFusionGru)
    };
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::synthetic()
    };
    println!(
        "snr {snr}, hidden {hidden}: {} train / {} test windows, {} parameters",
        train_w.len(),
        test_w.len(),
        spec.param_count()
    );

    let start = Instant::now();
    let out = train(&spec, &train_w, &cfg)?;
    for (e, l) in out.epoch_losses.iter().enumerate().step_by(10.max(epochs / 6)) {
        println!("epoch {e:>3}  loss {l:.4}");
    }
    let m = evaluate(&out.model, &test_w, 0.5)?;
    println!(
        "held-out acc {:.4}  auc {}  f1 {:.4}  precision {:.4}  recall {:.4}  ({:.1}s)",
        m.accuracy,
        m.auc.map_or("NA".into(), |a| format!("{a:.4}")),
        m.f1,
        m.precision,
        m.recall,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
