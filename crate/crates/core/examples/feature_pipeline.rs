//! From raw per-frame observations to model inputs: surround crop geometry,
//! pose normalisation, mirroring and window-relative displacements.
//!
//!     cargo run --example feature_pipeline

use sfgru::dataset::{assemble_window, synth_generate, SynthConfig};
use sfgru::features::{normalize_pose, scale_squarify_box, suppression_region, JOINT_NAMES, SUPPRESSION_RGB};
use sfgru::{BBox, FeatureKey, Pose};

fn main() -> sfgru::Result<()> {
    let (w, h) = (1920.0, 1080.0);
    let ped = BBox::new(900.0, 400.0, 960.0, 560.0);
    let surround = scale_squarify_box(&ped, 1.5, w, h)?;
    let hole = suppression_region(&ped, &surround)?;
    println!("pedestrian {ped:?}");
    println!("surround   {surround:?} ({} x {})", surround.width(), surround.height());
    println!("suppressed {hole:?} in crop coordinates, filled with {SUPPRESSION_RGB:?}");
    println!("near the border: {:?}", scale_squarify_box(&BBox::new(10.0, 300.0, 60.0, 440.0), 1.5, w, h)?);

    let track = &synth_generate(&SynthConfig {
        n_tracks: 1,
        track_len_frames: 20,
        flipped_context: true,
        ..SynthConfig::default()
    })?[0];
    let pose = Pose::from_interleaved(&track.frames[0].pose)?;
    let norm = normalize_pose(&pose, track.frame_w, track.frame_h);
    for j in [0, 2, 5] {
        println!("{:<10} ({:.4}, {:.4})", JOINT_NAMES[j], norm[2 * j], norm[2 * j + 1]);
    }

    let window = assemble_window(track, 10, 5)?;
    let mirrored = window.flipped(track.frame_w);
    let b = window.sequence(FeatureKey::B)?;
    let bm = mirrored.sequence(FeatureKey::B)?;
    for t in 0..window.len() {
        println!("t={t}  B {:?}  mirrored {:?}", fmt(&b[t]), fmt(&bm[t]));
    }
    println!(
        "flipping twice restores the window: {}",
        mirrored.flipped(track.frame_w) == window
    );
    let input = window.model_input(&FeatureKey::DEFAULT_ORDER)?;
    for (k, seq) in &input {
        println!("{k:<3} {} x {}", seq.len(), seq[0].len());
    }
    Ok(())
}

fn fmt(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| format!("{x:+.2}")).collect()
}
