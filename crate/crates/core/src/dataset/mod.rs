//! Pedestrian tracks: the JSON-lines file format, track-level train/test
//! splitting, TTE-anchored window sampling, length filtering and class
//! balancing.

mod synth;

pub use synth::{synth_generate, SynthConfig};

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{normalize_pose, BBox, FrameFeatures, ObservationWindow, Pose, CONTEXT_DIM, POSE_DIM};
use crate::numerics::Rng;

pub const DEFAULT_FPS: f64 = 30.0;
/// Train share of the track-level split.
pub const TRAIN_RATIO: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Crossing,
    NonCrossing,
}

impl Label {
    pub fn is_crossing(self) -> bool {
        self == Label::Crossing
    }

    /// 1.0 for crossing, 0.0 otherwise.
    pub fn target(self) -> f64 {
        if self.is_crossing() {
            1.0
        } else {
            0.0
        }
    }
}

/// One frame of a track record as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackFrame {
    pub bbox: [f64; 4],
    /// 18 joints, pixel `x, y` interleaved; `(0, 0)` marks a missing joint.
    pub pose: Vec<f64>,
    pub speed: f64,
    pub c_p: Vec<f64>,
    pub c_s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_p_flip: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_s_flip: Option<Vec<f64>>,
    /// Full (undivided) context vector, needed only for `Cps` ablations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_ps: Option<Vec<f64>>,
}

fn default_fps() -> f64 {
    DEFAULT_FPS
}

/// One pedestrian: per-frame observations, the label and the event frame.
///
/// For crossers the event is the frame they start crossing; for everyone
/// else it is the frame they leave the field of view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Track {
    pub id: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub frame_w: f64,
    pub frame_h: f64,
    pub label: Label,
    pub event_frame: usize,
    pub frames: Vec<TrackFrame>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::Track {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(bad("empty id".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(bad(format!("fps must be positive, got {}", self.fps)));
        }
        if !(self.frame_w > 0.0 && self.frame_h > 0.0) {
            return Err(bad("frame size must be positive".into()));
        }
        if self.frames.is_empty() {
            return Err(bad("no frames".into()));
        }
        if self.event_frame >= self.frames.len() {
            return Err(bad(format!(
                "event_frame {} outside [0, {})",
                self.event_frame,
                self.frames.len()
            )));
        }
        for (t, f) in self.frames.iter().enumerate() {
            let field = |name: &str, v: &[f64], want: usize| -> Result<()> {
                if v.len() != want {
                    return Err(bad(format!("frame {t}: {name} has {} values, expected {want}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(bad(format!("frame {t}: {name} has a non-finite value")));
                }
                Ok(())
            };
            field("bbox", &f.bbox, 4)?;
            BBox::from_array(f.bbox)
                .validate()
                .map_err(|e| bad(format!("frame {t}: {e}")))?;
            field("pose", &f.pose, POSE_DIM)?;
            field("c_p", &f.c_p, CONTEXT_DIM)?;
            field("c_s", &f.c_s, CONTEXT_DIM)?;
            for (name, v) in [("c_p_flip", &f.c_p_flip), ("c_s_flip", &f.c_s_flip), ("c_ps", &f.c_ps)] {
                if let Some(v) = v {
                    field(name, v, CONTEXT_DIM)?;
                }
            }
            if f.c_p_flip.is_some() != f.c_s_flip.is_some() {
                return Err(bad(format!("frame {t}: c_p_flip and c_s_flip must be given together")));
            }
            if !(f.speed >= 0.0 && f.speed.is_finite()) {
                return Err(bad(format!("frame {t}: speed must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Model-ready features of frame `t`.
    pub fn frame_features(&self, t: usize) -> Result<FrameFeatures> {
        let f = self.frames.get(t).ok_or_else(|| Error::Track {
            id: self.id.clone(),
            reason: format!("frame {t} out of range ({} frames)", self.frames.len()),
        })?;
        let pose = Pose::from_interleaved(&f.pose)?;
        let mut ff = FrameFeatures::new(
            f.c_p.clone(),
            f.c_s.clone(),
            normalize_pose(&pose, self.frame_w, self.frame_h),
            BBox::from_array(f.bbox),
            f.speed,
            self.frame_w,
        )?;
        if let (Some(p), Some(s)) = (&f.c_p_flip, &f.c_s_flip) {
            ff = ff.with_flipped_context(p.clone(), s.clone())?;
        }
        if let Some(ps) = &f.c_ps {
            ff = ff.with_full_context(ps.clone())?;
        }
        Ok(ff)
    }
}

/// The `m` frames `start..start + m` as an observation window.
pub fn assemble_window(track: &Track, start: usize, m: usize) -> Result<ObservationWindow> {
    if m == 0 || start + m > track.len() {
        return Err(Error::Track {
            id: track.id.clone(),
            reason: format!("window {start}..{} exceeds {} frames", start + m, track.len()),
        });
    }
    ObservationWindow::new((start..start + m).map(|t| track.frame_features(t)).collect::<Result<_>>()?)
}

/// Reads a JSON-lines track file. Blank lines are ignored.
pub fn load_tracks(path: impl AsRef<Path>) -> Result<Vec<Track>> {
    read_tracks(BufReader::new(File::open(path)?))
}

pub fn read_tracks(reader: impl BufRead) -> Result<Vec<Track>> {
    let mut tracks: Vec<Track> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema { line: lineno, message };
        let track: Track = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        track.validate().map_err(|e| schema(e.to_string()))?;
        if !seen.insert(track.id.clone()) {
            return Err(schema(format!("duplicate track id {:?}", track.id)));
        }
        tracks.push(track);
    }
    Ok(tracks)
}

pub fn save_tracks(path: impl AsRef<Path>, tracks: &[Track]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tracks(&mut w, tracks)?;
    w.flush()?;
    Ok(())
}

pub fn write_tracks(mut w: impl Write, tracks: &[Track]) -> Result<()> {
    for t in tracks {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl DatasetSplit {
    /// `(train, test)` tracks in their original order.
    pub fn partition<'a>(&self, tracks: &[&'a Track]) -> (Vec<&'a Track>, Vec<&'a Track>) {
        let train: HashSet<&str> = self.train.iter().map(String::as_str).collect();
        tracks.iter().copied().partition(|t| train.contains(t.id.as_str()))
    }
}

/// Track-level random split; `floor(ratio * n)` tracks go to training.
pub fn split_train_test(tracks: &[Track], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    let ids: Vec<&str> = tracks.iter().map(|t| t.id.as_str()).collect();
    split_ids(&ids, ratio, seed)
}

/// [`split_train_test`] on bare track ids.
pub fn split_ids(ids: &[&str], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if ids.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 tracks to split, got {}", ids.len())));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let n_train = (ratio * ids.len() as f64).floor() as usize;
    let mut in_train = vec![false; ids.len()];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (id, &tr) in ids.iter().zip(&in_train) {
        if tr {
            train.push(id.to_string());
        } else {
            test.push(id.to_string());
        }
    }
    Ok(DatasetSplit { train, test, seed })
}

/// How windows are cut from tracks: `obs_len` frames ending `tte_frames`
/// before the event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub obs_len: usize,
    pub tte_frames: usize,
    pub min_track_frames: usize,
}

impl SamplingSpec {
    pub fn new(obs_len: usize, tte_frames: usize) -> Self {
        SamplingSpec {
            obs_len,
            tte_frames,
            min_track_frames: obs_len + tte_frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_len == 0 || self.min_track_frames < self.obs_len + self.tte_frames {
            return Err(Error::InvalidArgument(format!(
                "bad sampling spec: obs_len {}, tte {}, min_track_frames {}",
                self.obs_len, self.tte_frames, self.min_track_frames
            )));
        }
        Ok(())
    }
}

/// Why a track yields no window for a sampling condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SkipReason {
    TrackTooShort { frames: usize, needed: usize },
    InsufficientHistory { event_frame: usize, needed: usize },
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::TrackTooShort { frames, needed } => write!(f, "track has {frames} frames, needs {needed}"),
            SkipReason::InsufficientHistory { event_frame, needed } => {
                write!(f, "event at frame {event_frame}, needs {needed} frames of history")
            }
        }
    }
}

/// A window with its label and the frame width needed to mirror it.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindow {
    pub track_id: String,
    pub label: Label,
    pub frame_w: f64,
    pub window: ObservationWindow,
}

impl LabeledWindow {
    pub fn flipped(&self) -> LabeledWindow {
        LabeledWindow {
            track_id: self.track_id.clone(),
            label: self.label,
            frame_w: self.frame_w,
            window: self.window.flipped(self.frame_w),
        }
    }
}

/// First frame of the window ending `tte_frames` before the event, if the
/// track has enough history.
pub fn window_start(track: &Track, spec: &SamplingSpec) -> std::result::Result<usize, SkipReason> {
    let needed = spec.min_track_frames.max(spec.obs_len + spec.tte_frames);
    if track.len() < needed {
        return Err(SkipReason::TrackTooShort {
            frames: track.len(),
            needed,
        });
    }
    let history = spec.obs_len + spec.tte_frames;
    if track.event_frame + 1 < history {
        return Err(SkipReason::InsufficientHistory {
            event_frame: track.event_frame,
            needed: history,
        });
    }
    Ok(track.event_frame + 1 - history)
}

/// The window whose last frame is `event_frame - tte_frames`.
///
/// Never touches frames after that point. `Ok(Err(_))` is the non-fatal
/// skip signal; `Err(_)` means the track itself is malformed.
pub fn sample_window(track: &Track, spec: &SamplingSpec) -> Result<std::result::Result<LabeledWindow, SkipReason>> {
    spec.validate()?;
    let start = match window_start(track, spec) {
        Ok(s) => s,
        Err(skip) => return Ok(Err(skip)),
    };
    Ok(Ok(LabeledWindow {
        track_id: track.id.clone(),
        label: track.label,
        frame_w: track.frame_w,
        window: assemble_window(track, start, spec.obs_len)?,
    }))
}

/// One window per track; skipped tracks are counted.
pub fn sample_windows(tracks: &[&Track], spec: &SamplingSpec) -> Result<(Vec<LabeledWindow>, usize)> {
    let mut out = Vec::with_capacity(tracks.len());
    let mut skipped = 0;
    for t in tracks {
        match sample_window(t, spec)? {
            Ok(w) => out.push(w),
            Err(_) => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// TTE sampling points from 0 s to 3 s in 18 equal steps (19 points);
/// exactly `0, 5, ..., 90` frames at 30 fps.
pub fn tte_grid(fps: f64) -> Vec<usize> {
    (0..19).map(|i| (i as f64 * 3.0 * fps / 18.0).round() as usize).collect()
}

/// Seconds to whole frames, rounding to the nearest frame.
pub fn seconds_to_frames(seconds: f64, fps: f64) -> usize {
    (seconds * fps).round() as usize
}

/// Tracks with at least `seconds` of usable history before (and including)
/// the event frame.
pub fn filter_min_length<'a>(tracks: impl IntoIterator<Item = &'a Track>, seconds: f64) -> Vec<&'a Track> {
    tracks
        .into_iter()
        .filter(|t| t.event_frame + 1 >= seconds_to_frames(seconds, t.fps))
        .collect()
}

/// Indices of a class-balanced subset: the majority class is randomly
/// subsampled down to the minority count. Order of the input is kept.
pub fn balance_indices(positive: &[bool], rng: &mut Rng) -> Result<Vec<usize>> {
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..positive.len()).partition(|&i| positive[i]);
    if pos.is_empty() {
        return Err(Error::ClassAbsent("crossing"));
    }
    if neg.is_empty() {
        return Err(Error::ClassAbsent("non-crossing"));
    }
    let n = pos.len().min(neg.len());
    for class in [&mut pos, &mut neg] {
        if class.len() > n {
            rng.shuffle(class);
            class.truncate(n);
        }
    }
    let mut keep: Vec<usize> = pos.into_iter().chain(neg).collect();
    keep.sort_unstable();
    Ok(keep)
}

pub fn balance_subsample(samples: &[LabeledWindow], seed: u64) -> Result<Vec<LabeledWindow>> {
    let labels: Vec<bool> = samples.iter().map(|s| s.label.is_crossing()).collect();
    Ok(balance_indices(&labels, &mut Rng::new(seed))?
        .into_iter()
        .map(|i| samples[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_track(id: &str, len: usize, event_frame: usize, label: Label) -> Track {
        let frames = (0..len)
            .map(|t| TrackFrame {
                bbox: [100.0 + t as f64, 200.0, 140.0 + t as f64, 300.0],
                pose: (0..POSE_DIM).map(|i| 10.0 + i as f64).collect(),
                speed: 20.0,
                c_p: vec![t as f64; CONTEXT_DIM],
                c_s: vec![0.5; CONTEXT_DIM],
                c_p_flip: None,
                c_s_flip: None,
                c_ps: None,
            })
            .collect();
        Track {
            id: id.into(),
            fps: 30.0,
            frame_w: 1920.0,
            frame_h: 1080.0,
            label,
            event_frame,
            frames,
        }
    }

    fn read_str(s: &str) -> Result<Vec<Track>> {
        read_tracks(s.as_bytes())
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(read_str("").unwrap().is_empty());
        assert!(read_str("\n\n").unwrap().is_empty());
    }

    #[test]
    fn short_context_is_a_schema_error_with_line() {
        let mut t = toy_track("a", 3, 2, Label::Crossing);
        let good = serde_json::to_string(&t).unwrap();
        t.id = "b".into();
        t.frames[1].c_p.pop();
        let bad = serde_json::to_string(&t).unwrap();
        let err = read_str(&format!("{good}\n{bad}\n")).unwrap_err();
        match err {
            Error::Schema { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("c_p"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_rejects_unknown_fields_and_bad_values() {
        let t = toy_track("a", 3, 2, Label::NonCrossing);
        let mut v = serde_json::to_value(&t).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(matches!(read_str(&v.to_string()), Err(Error::Schema { line: 1, .. })));

        let mut v = serde_json::to_value(&t).unwrap();
        v["label"] = serde_json::json!("maybe");
        assert!(read_str(&v.to_string()).is_err());

        let mut v = serde_json::to_value(&t).unwrap();
        v["event_frame"] = serde_json::json!(3);
        assert!(read_str(&v.to_string()).is_err());

        let mut bad = t.clone();
        bad.frames[0].bbox = [5.0, 5.0, 5.0, 9.0];
        assert!(read_str(&serde_json::to_string(&bad).unwrap()).is_err());

        let line = serde_json::to_string(&t).unwrap();
        assert!(read_str(&format!("{line}\n{line}")).is_err(), "duplicate ids");
        assert!(read_str("{not json").is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let mut t = toy_track("x", 4, 3, Label::Crossing);
        t.frames[2].c_p[7] = 0.1 + 0.2;
        t.frames[0].speed = std::f64::consts::PI;
        t.frames[1].c_ps = Some(vec![1e-300; CONTEXT_DIM]);
        let tracks = vec![t, toy_track("y", 2, 0, Label::NonCrossing)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        save_tracks(&path, &tracks).unwrap();
        assert_eq!(load_tracks(&path).unwrap(), tracks);
    }

    #[test]
    fn split_examples() {
        let tracks: Vec<Track> = (0..10).map(|i| toy_track(&format!("t{i}"), 2, 1, Label::Crossing)).collect();
        let s = split_train_test(&tracks, TRAIN_RATIO, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (6, 4));
        assert_eq!(s, split_train_test(&tracks, TRAIN_RATIO, 3).unwrap());
        let train: HashSet<_> = s.train.iter().collect();
        assert!(s.test.iter().all(|id| !train.contains(id)));
        assert!(split_train_test(&tracks[..1], 0.6, 0).is_err());
    }

    #[test]
    fn sampling_examples() {
        let t = toy_track("a", 220, 200, Label::Crossing);
        let w = sample_window(&t, &SamplingSpec::new(15, 60)).unwrap().unwrap();
        // c_p holds the frame index
        let frames: Vec<f64> = w.window.frames().iter().map(|f| f.c_p()[0]).collect();
        assert_eq!(frames, (126..=140).map(|x| x as f64).collect::<Vec<_>>());

        let w = sample_window(&t, &SamplingSpec::new(15, 0)).unwrap().unwrap();
        assert_eq!(w.window.frames().last().unwrap().c_p()[0], 200.0);

        let short = toy_track("b", 50, 49, Label::Crossing);
        assert!(matches!(
            sample_window(&short, &SamplingSpec::new(15, 60)).unwrap(),
            Err(SkipReason::TrackTooShort { .. })
        ));
        let early = toy_track("c", 100, 30, Label::Crossing);
        assert!(matches!(
            sample_window(&early, &SamplingSpec::new(15, 60)).unwrap(),
            Err(SkipReason::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn assemble_examples() {
        let t = toy_track("a", 200, 199, Label::Crossing);
        let w = assemble_window(&t, 10, 1).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.bbox_displacement(), vec![[0.0; 4]]);
        let w = assemble_window(&t, 126, 15).unwrap();
        assert_eq!(w.frames()[0].c_p()[0], 126.0);
        assert_eq!(w.frames()[14].c_p()[0], 140.0);
        assert!(assemble_window(&t, 190, 15).is_err());

        // boxes move one pixel per frame; displacement is window relative
        let a = assemble_window(&t, 0, 5).unwrap().bbox_displacement();
        let b = assemble_window(&t, 50, 5).unwrap().bbox_displacement();
        assert_eq!(a, b);
    }

    #[test]
    fn tte_grid_points() {
        let g = tte_grid(30.0);
        assert_eq!(g.len(), 19);
        assert_eq!((g[0], g[18]), (0, 90));
        assert!(g.windows(2).all(|w| w[1] - w[0] == 5));
        assert!((5.0 / 30.0 - 0.1667f64).abs() < 1e-4);
    }

    #[test]
    fn min_length_filter() {
        assert_eq!(seconds_to_frames(3.5, 30.0), 105);
        assert_eq!(seconds_to_frames(4.5, 30.0), 135);
        let tracks = vec![
            toy_track("a", 110, 103, Label::Crossing),
            toy_track("b", 110, 104, Label::Crossing),
            toy_track("c", 200, 150, Label::NonCrossing),
        ];
        let ids: Vec<&str> = filter_min_length(&tracks, 3.5).iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
        assert!(filter_min_length(&tracks, 10.0).is_empty());
    }

    #[test]
    fn every_filtered_track_samples_at_every_tte() {
        let mut rng = Rng::new(8);
        let tracks: Vec<Track> = (0..40)
            .map(|i| {
                let len = 60 + rng.below(150);
                toy_track(&format!("t{i}"), len, rng.below(len), Label::Crossing)
            })
            .collect();
        for t in filter_min_length(&tracks, 3.5) {
            for tte in tte_grid(30.0) {
                assert!(sample_window(t, &SamplingSpec::new(15, tte)).unwrap().is_ok());
            }
        }
    }

    #[test]
    fn balance_examples() {
        let labels: Vec<bool> = (0..70).map(|i| i < 20).collect();
        let idx = balance_indices(&labels, &mut Rng::new(1)).unwrap();
        let pos = idx.iter().filter(|&&i| labels[i]).count();
        assert_eq!((pos, idx.len() - pos), (20, 20));
        assert_eq!(idx, balance_indices(&labels, &mut Rng::new(1)).unwrap());

        let even = [true, false, true, false];
        assert_eq!(balance_indices(&even, &mut Rng::new(0)).unwrap(), vec![0, 1, 2, 3]);
        assert!(matches!(balance_indices(&[true, true], &mut Rng::new(0)), Err(Error::ClassAbsent(_))));
    }
}
