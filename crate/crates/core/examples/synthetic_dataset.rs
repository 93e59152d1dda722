//! Generate a synthetic track file, read it back, split by track and cut
//! windows at a few times-to-event.
//!
//!     cargo run --release --example synthetic_dataset

use sfgru::dataset::{
    balance_subsample, load_tracks, sample_windows, save_tracks, seconds_to_frames, split_train_test, synth_generate,
    tte_grid, SamplingSpec, SynthConfig, Track, TRAIN_RATIO,
};

fn main() -> sfgru::Result<()> {
    let cfg = SynthConfig {
        n_tracks: 70,
        track_len_frames: 120,
        full_context: false,
        seed: 5,
        ..SynthConfig::default()
    };
    let path = std::env::temp_dir().join("sfgru_synthetic_example.jsonl");
    save_tracks(&path, &synth_generate(&cfg)?)?;
    let tracks = load_tracks(&path)?;
    let crossing = tracks.iter().filter(|t| t.label.is_crossing()).count();
    println!(
        "{} tracks ({crossing} crossing) written to {} ({} KiB)",
        tracks.len(),
        path.display(),
        std::fs::metadata(&path)?.len() / 1024
    );

    let split = split_train_test(&tracks, TRAIN_RATIO, 0)?;
    let refs: Vec<&Track> = tracks.iter().collect();
    let (train, test) = split.partition(&refs);
    println!("split: {} train / {} test tracks", train.len(), test.len());

    let grid = tte_grid(30.0);
    println!("tte grid at 30 fps: {grid:?}");
    for tte_s in [0.0, 1.0, 2.0, 3.0] {
        let spec = SamplingSpec::new(15, seconds_to_frames(tte_s, 30.0));
        let (windows, skipped) = sample_windows(&train, &spec)?;
        let balanced = balance_subsample(&windows, 0)?;
        let pos = balanced.iter().filter(|w| w.label.is_crossing()).count();
        println!(
            "tte {tte_s:.1}s: {} windows, {skipped} skipped, balanced to {pos} + {}",
            windows.len(),
            balanced.len() - pos
        );
    }
    std::fs::remove_file(&path)?;
    Ok(())
}
