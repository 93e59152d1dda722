//! Box geometry, pose normalisation, displacement features, horizontal flip
//! and observation windows.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of the precomputed CNN context vectors.
pub const CONTEXT_DIM: usize = 512;
pub const NUM_JOINTS: usize = 18;
pub const POSE_DIM: usize = 2 * NUM_JOINTS;

/// Feature modalities a model can consume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureKey {
    /// Pedestrian appearance context.
    Cp,
    /// Surround context (scaled, squarified, pedestrian suppressed).
    Cs,
    /// Normalised pose, 18 joints.
    P,
    /// Bounding-box displacement from the window's first frame.
    B,
    /// Ego-vehicle speed, km/h.
    S,
    /// Undivided full context, a single vector per frame.
    Cps,
    /// Box-centre displacement from the window's first frame.
    D,
}

impl FeatureKey {
    pub const ALL: [FeatureKey; 7] = [
        FeatureKey::Cp,
        FeatureKey::Cs,
        FeatureKey::P,
        FeatureKey::B,
        FeatureKey::S,
        FeatureKey::Cps,
        FeatureKey::D,
    ];

    /// The default fusion order, complex visual features at the bottom.
    pub const DEFAULT_ORDER: [FeatureKey; 5] = [
        FeatureKey::Cp,
        FeatureKey::Cs,
        FeatureKey::P,
        FeatureKey::B,
        FeatureKey::S,
    ];

    pub fn dim(self) -> usize {
        match self {
            FeatureKey::Cp | FeatureKey::Cs | FeatureKey::Cps => CONTEXT_DIM,
            FeatureKey::P => POSE_DIM,
            FeatureKey::B => 4,
            FeatureKey::S => 1,
            FeatureKey::D => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKey::Cp => "Cp",
            FeatureKey::Cs => "Cs",
            FeatureKey::P => "P",
            FeatureKey::B => "B",
            FeatureKey::S => "S",
            FeatureKey::Cps => "Cps",
            FeatureKey::D => "D",
        }
    }

    /// Parses a comma separated list such as `Cp,Cs,P,B,S`.
    pub fn parse_list(s: &str) -> Result<Vec<FeatureKey>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }

    pub fn join(keys: &[FeatureKey], sep: &str) -> String {
        keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(sep)
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '+'], "").as_str() {
            "cp" => Ok(FeatureKey::Cp),
            "cs" => Ok(FeatureKey::Cs),
            "p" => Ok(FeatureKey::P),
            "b" => Ok(FeatureKey::B),
            "s" => Ok(FeatureKey::S),
            "cps" => Ok(FeatureKey::Cps),
            "d" => Ok(FeatureKey::D),
            _ => Err(Error::InvalidArgument(format!("unknown feature key {s:?}"))),
        }
    }
}

/// Axis-aligned box in frame pixels, `(x1, y1)` top-left and `(x2, y2)` bottom-right.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        BBox::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.to_array().iter().all(|v| v.is_finite());
        if finite && self.x1 < self.x2 && self.y1 < self.y2 {
            Ok(())
        } else {
            Err(Error::DegenerateBox(self.x1, self.y1, self.x2, self.y2))
        }
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x1.max(other.x1),
            self.y1.max(other.y1),
            self.x2.min(other.x2),
            self.y2.min(other.y2),
        );
        (b.x1 < b.x2 && b.y1 < b.y2).then_some(b)
    }
}

/// Surround crop: scale the height by `scale` about the centre, set the width
/// equal to the new height, then clamp to the frame.
pub fn scale_squarify_box(b: &BBox, scale: f64, frame_w: f64, frame_h: f64) -> Result<BBox> {
    b.validate()?;
    if !(scale >= 1.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("scale must be >= 1, got {scale}")));
    }
    let (cx, cy) = b.center();
    let half = b.height() * scale / 2.0;
    Ok(BBox::new(
        (cx - half).max(0.0),
        (cy - half).max(0.0),
        (cx + half).min(frame_w),
        (cy + half).min(frame_h),
    ))
}

/// The part of `original` that falls inside `crop`, in crop-local
/// coordinates. Image tooling paints this region RGB (128, 128, 128).
pub fn suppression_region(original: &BBox, crop: &BBox) -> Result<BBox> {
    original.validate()?;
    crop.validate()?;
    let inter = original.intersect(crop).ok_or(Error::EmptyIntersection)?;
    Ok(BBox::new(
        inter.x1 - crop.x1,
        inter.y1 - crop.y1,
        inter.x2 - crop.x1,
        inter.y2 - crop.y1,
    ))
}

/// Neutral gray used to suppress the pedestrian inside the surround crop.
pub const SUPPRESSION_RGB: [u8; 3] = [128, 128, 128];

/// 18-joint pose in pixels. A joint at exactly `(0, 0)` is missing.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub joints: [[f64; 2]; NUM_JOINTS],
}

impl Pose {
    /// From `x, y` interleaved pixel coordinates.
    pub fn from_interleaved(values: &[f64]) -> Result<Self> {
        if values.len() != POSE_DIM {
            return Err(Error::shape("Pose::from_interleaved", POSE_DIM, values.len()));
        }
        let mut joints = [[0.0; 2]; NUM_JOINTS];
        for (j, xy) in joints.iter_mut().enumerate() {
            *xy = [values[2 * j], values[2 * j + 1]];
        }
        Ok(Pose { joints })
    }

    pub fn is_missing(&self, joint: usize) -> bool {
        self.joints[joint] == [0.0, 0.0]
    }
}

/// Joint order of the 18-keypoint body model:
/// nose, neck, r-shoulder, r-elbow, r-wrist, l-shoulder, l-elbow, l-wrist,
/// r-hip, r-knee, r-ankle, l-hip, l-knee, l-ankle, r-eye, l-eye, r-ear, l-ear.
pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow", "l_wrist", "r_hip", "r_knee",
    "r_ankle", "l_hip", "l_knee", "l_ankle", "r_eye", "l_eye", "r_ear", "l_ear",
];

/// Index of the mirrored joint (left <-> right) under a horizontal flip.
pub const FLIP_PERMUTATION: [usize; NUM_JOINTS] = [0, 1, 5, 6, 7, 2, 3, 4, 11, 12, 13, 8, 9, 10, 15, 14, 17, 16];

/// `(x / w, y / h)` per joint, interleaved, clamped to `[0, 1]`; missing
/// joints stay `(0, 0)`.
pub fn normalize_pose(p: &Pose, frame_w: f64, frame_h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(POSE_DIM);
    for (j, &[x, y]) in p.joints.iter().enumerate() {
        if p.is_missing(j) {
            out.extend_from_slice(&[0.0, 0.0]);
        } else {
            out.push((x / frame_w).clamp(0.0, 1.0));
            out.push((y / frame_h).clamp(0.0, 1.0));
        }
    }
    out
}

/// Per-frame coordinate offsets from the first box.
pub fn bbox_displacement(boxes: &[BBox]) -> Vec<[f64; 4]> {
    let Some(first) = boxes.first() else {
        return Vec::new();
    };
    boxes
        .iter()
        .map(|b| [b.x1 - first.x1, b.y1 - first.y1, b.x2 - first.x2, b.y2 - first.y2])
        .collect()
}

/// Per-frame centre offsets from the first box.
pub fn center_displacement(boxes: &[BBox]) -> Vec<[f64; 2]> {
    let Some(first) = boxes.first() else {
        return Vec::new();
    };
    let (cx0, cy0) = first.center();
    boxes
        .iter()
        .map(|b| {
            let (cx, cy) = b.center();
            [cx - cx0, cy - cy0]
        })
        .collect()
}

/// One frame of model inputs.
///
/// A horizontal flip is recorded as a toggle rather than applied to the
/// stored values, so flipping twice restores the frame bit for bit. The
/// accessors return the (possibly mirrored) view.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatures {
    c_p: Vec<f64>,
    c_s: Vec<f64>,
    c_ps: Option<Vec<f64>>,
    c_p_flip: Option<Vec<f64>>,
    c_s_flip: Option<Vec<f64>>,
    pose_norm: Vec<f64>,
    bbox: BBox,
    pub speed_kmh: f64,
    frame_w: f64,
    mirrored: bool,
}

impl FrameFeatures {
    pub fn new(c_p: Vec<f64>, c_s: Vec<f64>, pose_norm: Vec<f64>, bbox: BBox, speed_kmh: f64, frame_w: f64) -> Result<Self> {
        check_dim("c_p", &c_p, CONTEXT_DIM)?;
        check_dim("c_s", &c_s, CONTEXT_DIM)?;
        check_dim("pose", &pose_norm, POSE_DIM)?;
        bbox.validate()?;
        if !speed_kmh.is_finite() || speed_kmh < 0.0 {
            return Err(Error::InvalidArgument(format!("speed must be finite and >= 0, got {speed_kmh}")));
        }
        Ok(FrameFeatures {
            c_p,
            c_s,
            c_ps: None,
            c_p_flip: None,
            c_s_flip: None,
            pose_norm,
            bbox,
            speed_kmh,
            frame_w,
            mirrored: false,
        })
    }

    /// Attaches context vectors computed on the mirrored crops.
    pub fn with_flipped_context(mut self, c_p_flip: Vec<f64>, c_s_flip: Vec<f64>) -> Result<Self> {
        check_dim("c_p_flip", &c_p_flip, CONTEXT_DIM)?;
        check_dim("c_s_flip", &c_s_flip, CONTEXT_DIM)?;
        self.c_p_flip = Some(c_p_flip);
        self.c_s_flip = Some(c_s_flip);
        Ok(self)
    }

    pub fn with_full_context(mut self, c_ps: Vec<f64>) -> Result<Self> {
        check_dim("c_ps", &c_ps, CONTEXT_DIM)?;
        self.c_ps = Some(c_ps);
        Ok(self)
    }

    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }

    pub fn has_flipped_context(&self) -> bool {
        self.c_p_flip.is_some() && self.c_s_flip.is_some()
    }

    pub fn c_p(&self) -> &[f64] {
        match (&self.c_p_flip, self.mirrored) {
            (Some(f), true) => f,
            _ => &self.c_p,
        }
    }

    pub fn c_s(&self) -> &[f64] {
        match (&self.c_s_flip, self.mirrored) {
            (Some(f), true) => f,
            _ => &self.c_s,
        }
    }

    pub fn c_ps(&self) -> Option<&[f64]> {
        self.c_ps.as_deref()
    }

    pub fn bbox(&self) -> BBox {
        if self.mirrored {
            let b = self.bbox;
            BBox::new(self.frame_w - b.x2, b.y1, self.frame_w - b.x1, b.y2)
        } else {
            self.bbox
        }
    }

    pub fn pose_norm(&self) -> Vec<f64> {
        if !self.mirrored {
            return self.pose_norm.clone();
        }
        let mut out = vec![0.0; POSE_DIM];
        for (j, &src) in FLIP_PERMUTATION.iter().enumerate() {
            let (x, y) = (self.pose_norm[2 * src], self.pose_norm[2 * src + 1]);
            if x == 0.0 && y == 0.0 {
                continue;
            }
            out[2 * j] = 1.0 - x;
            out[2 * j + 1] = y;
        }
        out
    }
}

fn check_dim(name: &str, v: &[f64], want: usize) -> Result<()> {
    if v.len() != want {
        return Err(Error::shape("FrameFeatures", format!("{name} {want}"), format!("{name} {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(name.to_string()));
    }
    Ok(())
}

/// Mirrors a frame about the vertical axis of a `frame_w` wide image.
///
/// Boxes map to `(w - x2, y1, w - x1, y2)`, normalised pose x to `1 - x` with
/// left/right joints swapped, speed is kept, and context vectors switch to
/// their flipped variants when the record carries them (otherwise they stay
/// as-is; check [`FrameFeatures::has_flipped_context`]).
pub fn horizontal_flip(f: &FrameFeatures, frame_w: f64) -> FrameFeatures {
    let mut out = f.clone();
    if f.mirrored && f.frame_w != frame_w {
        // Mirrored about a different width: bake the first flip in.
        out.bbox = f.bbox();
        out.pose_norm = f.pose_norm();
        if let (Some(pf), Some(sf)) = (&f.c_p_flip, &f.c_s_flip) {
            out.c_p = pf.clone();
            out.c_s = sf.clone();
            out.c_p_flip = Some(f.c_p.clone());
            out.c_s_flip = Some(f.c_s.clone());
        }
        out.mirrored = false;
    }
    out.frame_w = frame_w;
    out.mirrored = !out.mirrored;
    out
}

/// `m` consecutive frames. Derived per-modality sequences (displacements in
/// particular) are computed relative to the window's own first frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationWindow {
    frames: Vec<FrameFeatures>,
}

/// Per-modality input sequences, `steps x dim` each.
pub type ModelInput = BTreeMap<FeatureKey, Vec<Vec<f64>>>;

impl ObservationWindow {
    pub fn new(frames: Vec<FrameFeatures>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidArgument("observation window needs at least one frame".into()));
        }
        Ok(ObservationWindow { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[FrameFeatures] {
        &self.frames
    }

    pub fn flipped(&self, frame_w: f64) -> ObservationWindow {
        ObservationWindow {
            frames: self.frames.iter().map(|f| horizontal_flip(f, frame_w)).collect(),
        }
    }

    pub fn bbox_displacement(&self) -> Vec<[f64; 4]> {
        bbox_displacement(&self.frames.iter().map(|f| f.bbox()).collect::<Vec<_>>())
    }

    pub fn center_displacement(&self) -> Vec<[f64; 2]> {
        center_displacement(&self.frames.iter().map(|f| f.bbox()).collect::<Vec<_>>())
    }

    /// The `m x dim` sequence for one modality.
    pub fn sequence(&self, key: FeatureKey) -> Result<Vec<Vec<f64>>> {
        Ok(match key {
            FeatureKey::Cp => self.frames.iter().map(|f| f.c_p().to_vec()).collect(),
            FeatureKey::Cs => self.frames.iter().map(|f| f.c_s().to_vec()).collect(),
            FeatureKey::Cps => self
                .frames
                .iter()
                .map(|f| f.c_ps().map(<[f64]>::to_vec).ok_or(Error::MissingModality(key)))
                .collect::<Result<_>>()?,
            FeatureKey::P => self.frames.iter().map(FrameFeatures::pose_norm).collect(),
            FeatureKey::B => self.bbox_displacement().into_iter().map(|d| d.to_vec()).collect(),
            FeatureKey::D => self.center_displacement().into_iter().map(|d| d.to_vec()).collect(),
            FeatureKey::S => self.frames.iter().map(|f| vec![f.speed_kmh]).collect(),
        })
    }

    pub fn has_modality(&self, key: FeatureKey) -> bool {
        key != FeatureKey::Cps || self.frames.iter().all(|f| f.c_ps().is_some())
    }

    /// Extracts every requested modality.
    pub fn model_input(&self, keys: &[FeatureKey]) -> Result<ModelInput> {
        keys.iter().map(|&k| Ok((k, self.sequence(k)?))).collect()
    }
}
