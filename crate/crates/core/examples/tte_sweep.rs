//! Accuracy against time to event for several models, written as CSV.
//!
//!     cargo run --release --example tte_sweep -- [hidden] [epochs]

use sfgru::dataset::{synth_generate, SynthConfig};
use sfgru::sweep::{sweep_tte, SweepConfig};
use sfgru::train::TrainConfig;
use sfgru::{ModelKind, ModelSpec};

fn main() -> sfgru::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let hidden = args.next().flatten().unwrap_or(8);
    let epochs = args.next().flatten().unwrap_or(5);

    let tracks = synth_generate(&SynthConfig {
        n_tracks: 120,
        track_len_frames: 110,
        full_context: false,
        seed: 21,
        ..SynthConfig::default()
    })?;
    let specs = [ModelKind::Static, ModelKind::SingleGru, ModelKind::StackedFusionGru]
        .into_iter()
        .map(|k| ModelSpec::new(k, k.default_features(), hidden, 15))
        .collect::<sfgru::Result<Vec<_>>>()?;
    let cfg = SweepConfig::new(TrainConfig {
        epochs,
        ..TrainConfig::synthetic()
    });
    let result = sweep_tte(&specs, &tracks, 15, &cfg)?;
    print!("{}", result.to_csv());
    for (row, why) in result.skipped() {
        eprintln!("skipped {} at {:.2}s: {why}", row.model, row.tte_s);
    }
    Ok(())
}
