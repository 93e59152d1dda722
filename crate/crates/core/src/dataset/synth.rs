//! Synthetic tracks with a controllable label signal.
//!
//! Crossing pedestrians drift laterally toward the image centre, turn their
//! head that way, and the ego-vehicle decelerates; both classes also get
//! opposite mean offsets along fixed random directions in the three context
//! vectors. With `g = snr / (1 + snr)` as signal gain and
//! `sigma = 1 / (1 + snr)` as per-frame noise, noise relative to signal
//! scales as `1 / snr`: `snr = 0` gives label-independent tracks and large
//! `snr` makes the dynamics alone nearly separable.

use serde::{Deserialize, Serialize};

use super::{Label, Track, TrackFrame};
use crate::error::{Error, Result};
use crate::features::{CONTEXT_DIM, NUM_JOINTS};
use crate::numerics::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_tracks: usize,
    pub track_len_frames: usize,
    /// Non-crossing to crossing ratio.
    pub class_ratio: f64,
    pub snr: f64,
    pub seed: u64,
    pub fps: f64,
    pub frame_w: f64,
    pub frame_h: f64,
    /// Emit `c_ps` vectors (needed by the full-context ablation row).
    pub full_context: bool,
    /// Emit `c_p_flip` / `c_s_flip` vectors.
    pub flipped_context: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_tracks: 140,
            track_len_frames: 140,
            class_ratio: 2.5,
            snr: 8.0,
            seed: 0,
            fps: 30.0,
            frame_w: 1920.0,
            frame_h: 1080.0,
            full_context: true,
            flipped_context: false,
        }
    }
}

impl SynthConfig {
    /// `(non_crossing, crossing)` track counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let crossing = (self.n_tracks as f64 / (1.0 + self.class_ratio)).round() as usize;
        (self.n_tracks - crossing, crossing)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_tracks == 0 || self.track_len_frames == 0 {
            return bad("n_tracks and track_len_frames must be positive".into());
        }
        if !(self.class_ratio > 0.0 && self.class_ratio.is_finite()) {
            return bad(format!("class ratio must be positive, got {}", self.class_ratio));
        }
        if !(self.snr >= 0.0) || self.snr.is_nan() {
            return bad(format!("snr must be >= 0, got {}", self.snr));
        }
        if !(self.fps > 0.0 && self.frame_w > 0.0 && self.frame_h > 0.0) {
            return bad("fps and frame size must be positive".into());
        }
        Ok(())
    }
}

/// Joint layout relative to the box centre, in box widths/heights.
const POSE_TEMPLATE: [[f64; 2]; NUM_JOINTS] = [
    [0.00, -0.42],
    [0.00, -0.30],
    [-0.30, -0.28],
    [-0.36, -0.10],
    [-0.38, 0.05],
    [0.30, -0.28],
    [0.36, -0.10],
    [0.38, 0.05],
    [-0.15, 0.05],
    [-0.16, 0.25],
    [-0.17, 0.45],
    [0.15, 0.05],
    [0.16, 0.25],
    [0.17, 0.45],
    [-0.05, -0.45],
    [0.05, -0.45],
    [-0.10, -0.44],
    [0.10, -0.44],
];
const HEAD_JOINTS: [usize; 5] = [0, 14, 15, 16, 17];

const CONTEXT_OFFSET: f64 = 0.05;
const APPEARANCE_SD: f64 = 0.4;
const DRIFT_PX: f64 = 2.5;
const DECEL_KMH: f64 = 0.15;

/// Rounds to 1e-4 so files stay compact; values still round-trip exactly.
fn q(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn normal_vec(rng: &mut Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * rng.normal()).collect()
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<Track>> {
    cfg.validate()?;
    let gain = cfg.snr / (1.0 + cfg.snr);
    let sigma = 1.0 / (1.0 + cfg.snr);
    let root = Rng::new(cfg.seed);

    let mut proj_rng = root.fork(1);
    let dir_p = normal_vec(&mut proj_rng, CONTEXT_DIM, 1.0);
    let dir_s = normal_vec(&mut proj_rng, CONTEXT_DIM, 1.0);
    let dir_ps = normal_vec(&mut proj_rng, CONTEXT_DIM, 1.0);

    let (n_non, n_cross) = cfg.class_counts();
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::NonCrossing, n_non)
        .chain(std::iter::repeat_n(Label::Crossing, n_cross))
        .collect();
    root.fork(2).shuffle(&mut labels);

    let (fw, fh) = (cfg.frame_w, cfg.frame_h);
    let width = (cfg.n_tracks.max(1) as f64).log10() as usize + 1;
    let mut tracks = Vec::with_capacity(cfg.n_tracks);
    for (i, &label) in labels.iter().enumerate() {
        let mut rng = root.fork(1000 + i as u64);
        let crossing = label.is_crossing();
        let sign = if crossing { 1.0 } else { -1.0 };

        let h0 = rng.uniform(80.0, 220.0);
        let w0 = 0.41 * h0;
        let cx0 = rng.uniform(0.1 * fw, 0.9 * fw);
        let cy0 = rng.uniform(0.45 * fh, 0.65 * fh);
        let growth = rng.uniform(0.0, 0.004);
        let toward = if cx0 < fw / 2.0 { 1.0 } else { -1.0 };
        let vx = rng.normal() * 0.6 + if crossing { gain * DRIFT_PX * toward } else { 0.0 };
        let v0 = rng.uniform(15.0, 45.0);
        let slope = rng.normal() * 0.02 - if crossing { gain * DECEL_KMH } else { 0.0 };
        let head_shift = if crossing { gain * 0.15 * toward } else { 0.0 };
        let app_p = normal_vec(&mut rng, CONTEXT_DIM, APPEARANCE_SD);
        let app_s = normal_vec(&mut rng, CONTEXT_DIM, APPEARANCE_SD);

        let context = |rng: &mut Rng, base: &[f64], dir: &[f64]| -> Vec<f64> {
            base.iter()
                .zip(dir)
                .map(|(b, d)| q(b + CONTEXT_OFFSET * gain * sign * d + sigma * rng.normal()))
                .collect()
        };

        let mut frames = Vec::with_capacity(cfg.track_len_frames);
        for t in 0..cfg.track_len_frames {
            let tf = t as f64;
            let scale = 1.0 + growth * tf;
            let (bh, bw) = (h0 * scale, w0 * scale);
            let cx = (cx0 + vx * tf).clamp(bw / 2.0 + 2.0, fw - bw / 2.0 - 2.0);
            let cy = cy0.clamp(bh / 2.0 + 2.0, fh - bh / 2.0 - 2.0);
            let raw = [cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0];
            let limit = [fw, fh, fw, fh];
            let mut bbox = [0.0; 4];
            for k in 0..4 {
                bbox[k] = q((raw[k] + 2.0 * sigma * rng.normal()).clamp(0.0, limit[k]));
            }
            if bbox[2] <= bbox[0] {
                bbox[2] = bbox[0] + 1.0;
            }
            if bbox[3] <= bbox[1] {
                bbox[3] = bbox[1] + 1.0;
            }

            let mut pose = Vec::with_capacity(2 * NUM_JOINTS);
            for (j, [ox, oy]) in POSE_TEMPLATE.iter().enumerate() {
                if rng.next_f64() < 0.03 {
                    pose.extend_from_slice(&[0.0, 0.0]);
                    continue;
                }
                let shift = if HEAD_JOINTS.contains(&j) { head_shift * bw } else { 0.0 };
                let x = cx + ox * bw + shift + 1.5 * sigma * rng.normal();
                let y = cy + oy * bh + 1.5 * sigma * rng.normal();
                pose.push(q(x.clamp(1.0, fw)));
                pose.push(q(y.clamp(1.0, fh)));
            }

            let speed = q((v0 + slope * tf + 0.8 * sigma * rng.normal()).max(0.0));
            let c_p = context(&mut rng, &app_p, &dir_p);
            let c_s = context(&mut rng, &app_s, &dir_s);
            let c_ps = cfg.full_context.then(|| {
                let base: Vec<f64> = app_p.iter().zip(&app_s).map(|(a, b)| 0.5 * (a + b)).collect();
                context(&mut rng, &base, &dir_ps)
            });
            let (c_p_flip, c_s_flip) = if cfg.flipped_context {
                (Some(context(&mut rng, &app_p, &dir_p)), Some(context(&mut rng, &app_s, &dir_s)))
            } else {
                (None, None)
            };
            frames.push(TrackFrame {
                bbox,
                pose,
                speed,
                c_p,
                c_s,
                c_p_flip,
                c_s_flip,
                c_ps,
            });
        }

        tracks.push(Track {
            id: format!("synth-{i:0width$}"),
            fps: cfg.fps,
            frame_w: fw,
            frame_h: fh,
            label,
            event_frame: cfg.track_len_frames - 1,
            frames,
        });
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::write_tracks;

    fn small(snr: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            n_tracks: 14,
            track_len_frames: 20,
            snr,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn class_counts_follow_ratio() {
        let cfg = SynthConfig {
            n_tracks: 140,
            ..SynthConfig::default()
        };
        assert_eq!(cfg.class_counts(), (100, 40));
        let tracks = synth_generate(&small(4.0, 1)).unwrap();
        let crossing = tracks.iter().filter(|t| t.label.is_crossing()).count();
        assert_eq!(crossing, 4);
    }

    #[test]
    fn tracks_validate() {
        for t in synth_generate(&small(8.0, 2)).unwrap() {
            t.validate().unwrap();
        }
        let cfg = SynthConfig {
            flipped_context: true,
            ..small(0.0, 3)
        };
        for t in synth_generate(&cfg).unwrap() {
            t.validate().unwrap();
            assert!(t.frames[0].c_p_flip.is_some());
        }
    }

    #[test]
    fn generation_is_byte_identical() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_tracks(&mut a, &synth_generate(&small(8.0, 7)).unwrap()).unwrap();
        write_tracks(&mut b, &synth_generate(&small(8.0, 7)).unwrap()).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        write_tracks(&mut c, &synth_generate(&small(8.0, 8)).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs() {
        assert!(synth_generate(&SynthConfig { class_ratio: 0.0, ..small(1.0, 0) }).is_err());
        assert!(synth_generate(&SynthConfig { snr: -1.0, ..small(1.0, 0) }).is_err());
        assert!(synth_generate(&SynthConfig { n_tracks: 0, ..small(1.0, 0) }).is_err());
    }

    #[test]
    fn zero_snr_has_no_label_signal() {
        // With snr = 0 the per-track draws do not depend on the label, so the
        // generated frames of track i are identical whichever label it gets.
        let cfg = small(0.0, 5);
        let tracks = synth_generate(&cfg).unwrap();
        let mut flipped_labels = cfg.clone();
        flipped_labels.class_ratio = 1.0 / cfg.class_ratio;
        let other = synth_generate(&flipped_labels).unwrap();
        for (a, b) in tracks.iter().zip(&other) {
            assert_eq!(a.frames, b.frames);
        }
    }
}
