//! Feature ablation and fusion-order permutations for SF-GRU on one dataset.
//!
//!     cargo run --release --example ablation_and_fusion_order -- [hidden] [epochs] [jobs]

use sfgru::dataset::{synth_generate, SynthConfig};
use sfgru::sweep::{ablate_features, default_fusion_orders, sweep_fusion_order, SweepConfig, SweepResult, ABLATION_SETS};
use sfgru::train::TrainConfig;
use sfgru::{FeatureKey, ModelSpec};

fn show(title: &str, res: &SweepResult) {
    println!("{title}");
    for row in &res.rows {
        let keys = FeatureKey::join(&row.fusion_order, "-");
        match row.metrics() {
            Some(m) => println!("  {keys:<14} acc {:.3}  auc {:.3}", m.accuracy, m.auc.unwrap_or(f64::NAN)),
            None => println!("  {keys:<14} skipped"),
        }
    }
}

fn main() -> sfgru::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let hidden = args.next().flatten().unwrap_or(8);
    let epochs = args.next().flatten().unwrap_or(10);
    let jobs = args.next().flatten().unwrap_or(1);

    let tracks = synth_generate(&SynthConfig {
        n_tracks: 150,
        track_len_frames: 110,
        snr: 2.0,
        seed: 9,
        ..SynthConfig::default()
    })?;
    let base = ModelSpec {
        hidden_dim: hidden,
        ..ModelSpec::sf_gru()
    };
    let cfg = SweepConfig {
        jobs,
        ..SweepConfig::new(TrainConfig {
            epochs,
            ..TrainConfig::synthetic()
        })
    };
    show("feature ablation", &ablate_features(&base, &tracks, &ABLATION_SETS, 2.0, &cfg)?);
    show("fusion order", &sweep_fusion_order(&base, &tracks, &default_fusion_orders(), 2.0, &cfg)?);
    Ok(())
}
