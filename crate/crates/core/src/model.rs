//! The six sequence classifiers built from GRU cells.
//!
//! | kind | structure |
//! |------|-----------|
//! | `Static` | logistic read-out of the last frame's features |
//! | `SingleGru` | one GRU over the per-step concatenation of all features |
//! | `MultiStreamGru` | one GRU per feature, last states concatenated into the read-out |
//! | `HierarchicalGru` | one GRU per feature, per-step states concatenated into a top GRU |
//! | `StackedGru` | all features enter level 0, level `j > 0` sees only `h_{j-1}` |
//! | `StackedFusionGru` | level 0 sees feature 0, level `j` sees `[h_{j-1}, feature j]` |
//!
//! Every variant ends in `sigmoid(linear(.))` and is trained with BCE.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKey, ModelInput, ObservationWindow};
use crate::gru::{self, bce_logit_grad, gru_param_count, GruParams, GruStepCache, LinearParams};
use crate::numerics::{sigmoid, Rng};

/// Hidden units per GRU unless configured otherwise.
pub const DEFAULT_HIDDEN: usize = 256;
/// 0.5 s at 30 fps.
pub const DEFAULT_OBS_LEN: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Static,
    SingleGru,
    MultiStreamGru,
    HierarchicalGru,
    StackedGru,
    StackedFusionGru,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Static,
        ModelKind::SingleGru,
        ModelKind::MultiStreamGru,
        ModelKind::HierarchicalGru,
        ModelKind::StackedGru,
        ModelKind::StackedFusionGru,
    ];

    /// Short name used on the command line and in reports.
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Static => "static",
            ModelKind::SingleGru => "gru",
            ModelKind::MultiStreamGru => "m-gru",
            ModelKind::HierarchicalGru => "h-gru",
            ModelKind::StackedGru => "s-gru",
            ModelKind::StackedFusionGru => "sf-gru",
        }
    }

    /// Features used when none are specified.
    pub fn default_features(self) -> Vec<FeatureKey> {
        match self {
            ModelKind::Static => vec![FeatureKey::Cp, FeatureKey::Cs],
            _ => FeatureKey::DEFAULT_ORDER.to_vec(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Features in input order; for `StackedFusionGru` this is the level order.
    pub fusion_order: Vec<FeatureKey>,
    pub hidden_dim: usize,
    pub obs_len: usize,
    pub use_bias: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, fusion_order: Vec<FeatureKey>, hidden_dim: usize, obs_len: usize) -> Result<Self> {
        let spec = ModelSpec {
            kind,
            fusion_order,
            hidden_dim,
            obs_len,
            use_bias: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `kind` with its default features, 256 hidden units, 15 frames.
    pub fn with_defaults(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            fusion_order: kind.default_features(),
            hidden_dim: DEFAULT_HIDDEN,
            obs_len: DEFAULT_OBS_LEN,
            use_bias: true,
        }
    }

    pub fn sf_gru() -> Self {
        ModelSpec::with_defaults(ModelKind::StackedFusionGru)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fusion_order.is_empty() {
            return Err(Error::InvalidSpec("feature list is empty".into()));
        }
        for (i, k) in self.fusion_order.iter().enumerate() {
            if self.fusion_order[..i].contains(k) {
                return Err(Error::InvalidSpec(format!("feature {k} listed twice")));
            }
        }
        if self.hidden_dim == 0 || self.obs_len == 0 {
            return Err(Error::InvalidSpec("hidden_dim and obs_len must be positive".into()));
        }
        Ok(())
    }

    fn input_sum(&self) -> usize {
        self.fusion_order.iter().map(|k| k.dim()).sum()
    }

    fn layout(&self) -> Layout {
        let h = self.hidden_dim;
        let n = self.fusion_order.len();
        let dims: Vec<usize> = self.fusion_order.iter().map(|k| k.dim()).collect();
        match self.kind {
            ModelKind::Static => Layout {
                streams: vec![],
                levels: vec![],
                head: self.input_sum(),
            },
            ModelKind::SingleGru => Layout {
                streams: vec![],
                levels: vec![self.input_sum()],
                head: h,
            },
            ModelKind::StackedGru => Layout {
                streams: vec![],
                levels: std::iter::once(self.input_sum()).chain(std::iter::repeat_n(h, n - 1)).collect(),
                head: h,
            },
            ModelKind::StackedFusionGru => Layout {
                streams: vec![],
                levels: dims.iter().enumerate().map(|(j, d)| if j == 0 { *d } else { h + d }).collect(),
                head: h,
            },
            ModelKind::MultiStreamGru => Layout {
                streams: dims,
                levels: vec![],
                head: n * h,
            },
            ModelKind::HierarchicalGru => Layout {
                streams: dims,
                levels: vec![n * h],
                head: h,
            },
        }
    }

    /// Input width of each stacked level (or of the single / top GRU).
    pub fn level_input_dims(&self) -> Vec<usize> {
        self.layout().levels
    }

    pub fn stream_input_dims(&self) -> Vec<usize> {
        self.layout().streams
    }

    pub fn classifier_input_dim(&self) -> usize {
        self.layout().head
    }

    /// Trainable scalars, from the closed form per GRU plus the read-out.
    pub fn param_count(&self) -> usize {
        let l = self.layout();
        l.streams
            .iter()
            .chain(&l.levels)
            .map(|&i| gru_param_count(i, self.hidden_dim, self.use_bias))
            .sum::<usize>()
            + l.head
            + 1
    }
}

struct Layout {
    streams: Vec<usize>,
    levels: Vec<usize>,
    head: usize,
}

/// Learnable state of one model; also used as the gradient buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-feature GRUs (M-GRU, H-GRU).
    pub streams: Vec<GruParams>,
    /// Stacked levels, the single GRU, or the H-GRU top GRU.
    pub levels: Vec<GruParams>,
    pub classifier: LinearParams,
}

impl ModelParams {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let l = spec.layout();
        let mk = |dims: &[usize]| {
            dims.iter()
                .map(|&i| GruParams::zeros(i, spec.hidden_dim, spec.use_bias))
                .collect()
        };
        ModelParams {
            streams: mk(&l.streams),
            levels: mk(&l.levels),
            classifier: LinearParams::zeros(l.head),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            streams: self.streams.iter().map(GruParams::zeros_like).collect(),
            levels: self.levels.iter().map(GruParams::zeros_like).collect(),
            classifier: LinearParams::zeros(self.classifier.input_dim()),
        }
    }

    /// Visits every trainable tensor in a fixed order as `(name, values, is_bias)`.
    pub fn for_each_tensor(&self, mut f: impl FnMut(String, &[f64], bool)) {
        for (i, g) in self.streams.iter().enumerate() {
            g.for_each_tensor(|n, v, b| f(format!("stream{i}.{n}"), v, b));
        }
        for (i, g) in self.levels.iter().enumerate() {
            g.for_each_tensor(|n, v, b| f(format!("level{i}.{n}"), v, b));
        }
        f("classifier.w".into(), self.classifier.w.data(), false);
        f("classifier.b".into(), std::slice::from_ref(&self.classifier.b), true);
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(String, &mut [f64], bool)) {
        for (i, g) in self.streams.iter_mut().enumerate() {
            g.for_each_tensor_mut(|n, v, b| f(format!("stream{i}.{n}"), v, b));
        }
        for (i, g) in self.levels.iter_mut().enumerate() {
            g.for_each_tensor_mut(|n, v, b| f(format!("level{i}.{n}"), v, b));
        }
        f("classifier.w".into(), self.classifier.w.data_mut(), false);
        f("classifier.b".into(), std::slice::from_mut(&mut self.classifier.b), true);
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|_, v, _| n += v.len());
        n
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_tensor(|_, v, _| out.extend_from_slice(v));
        out
    }

    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        let n = self.param_count();
        if values.len() != n {
            return Err(Error::shape("assign_flat", n, values.len()));
        }
        let mut off = 0;
        self.for_each_tensor_mut(|_, v, _| {
            v.copy_from_slice(&values[off..off + v.len()]);
            off += v.len();
        });
        Ok(())
    }

    /// `self += k * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &ModelParams, k: f64) -> Result<()> {
        let src = other.flatten();
        if src.len() != self.param_count() {
            return Err(Error::shape("add_scaled", self.param_count(), src.len()));
        }
        let mut off = 0;
        self.for_each_tensor_mut(|_, v, _| {
            for (a, b) in v.iter_mut().zip(&src[off..]) {
                *a += k * b;
            }
            off += v.len();
        });
        Ok(())
    }
}

/// Everything `backward` needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    streams: Vec<Vec<GruStepCache>>,
    levels: Vec<Vec<GruStepCache>>,
    head_input: Vec<f64>,
    pub logit: f64,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ModelParams,
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}

impl Model {
    /// Glorot weights, zero biases, deterministic in the RNG state.
    pub fn init(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let l = spec.layout();
        let mut mk = |dims: &[usize]| -> Result<Vec<GruParams>> {
            dims.iter()
                .map(|&i| GruParams::init(rng, i, spec.hidden_dim, spec.use_bias))
                .collect()
        };
        let streams = mk(&l.streams)?;
        let levels = mk(&l.levels)?;
        let classifier = LinearParams::init(rng, l.head)?;
        Ok(Model {
            spec,
            params: ModelParams {
                streams,
                levels,
                classifier,
            },
        })
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let params = ModelParams::zeros(&spec);
        Ok(Model { spec, params })
    }

    /// Checks that `params` has the layout `spec` implies.
    pub fn from_parts(spec: ModelSpec, params: ModelParams) -> Result<Self> {
        spec.validate()?;
        let l = spec.layout();
        let dims = |gs: &[GruParams]| gs.iter().map(|g| (g.input_dim, g.hidden_dim)).collect::<Vec<_>>();
        let want = |ds: &[usize]| ds.iter().map(|&d| (d, spec.hidden_dim)).collect::<Vec<_>>();
        if dims(&params.streams) != want(&l.streams)
            || dims(&params.levels) != want(&l.levels)
            || params.classifier.input_dim() != l.head
        {
            return Err(Error::InvalidSpec("parameter shapes do not match the model spec".into()));
        }
        Ok(Model { spec, params })
    }

    fn feature<'a>(&self, input: &'a ModelInput, key: FeatureKey) -> Result<&'a [Vec<f64>]> {
        let seq = input.get(&key).ok_or(Error::MissingModality(key))?;
        if seq.len() != self.spec.obs_len {
            return Err(Error::shape(
                "Model::forward",
                format!("obs_len {}", self.spec.obs_len),
                format!("{key} sequence of {}", seq.len()),
            ));
        }
        if let Some(v) = seq.iter().find(|v| v.len() != key.dim()) {
            return Err(Error::shape("Model::forward", format!("{key} dim {}", key.dim()), v.len()));
        }
        Ok(seq)
    }

    pub fn forward_window(&self, window: &ObservationWindow) -> Result<ForwardCache> {
        self.forward(&window.model_input(&self.spec.fusion_order)?)
    }

    pub fn predict(&self, window: &ObservationWindow) -> Result<f64> {
        Ok(self.forward_window(window)?.prob)
    }

    pub fn forward(&self, input: &ModelInput) -> Result<ForwardCache> {
        let spec = &self.spec;
        let p = &self.params;
        let feats: Vec<&[Vec<f64>]> = spec
            .fusion_order
            .iter()
            .map(|&k| self.feature(input, k))
            .collect::<Result<_>>()?;
        let m = spec.obs_len;
        let h0 = vec![0.0; spec.hidden_dim];
        let all_features = |t: usize| concat(&feats.iter().map(|f| f[t].as_slice()).collect::<Vec<_>>());

        let mut streams = Vec::new();
        let mut levels = Vec::new();
        let head_input = match spec.kind {
            ModelKind::Static => all_features(m - 1),
            ModelKind::SingleGru | ModelKind::StackedGru => {
                let mut xs: Vec<Vec<f64>> = (0..m).map(all_features).collect();
                for g in &p.levels {
                    let (hs, caches) = gru::sequence_forward_unchecked(g, &xs, &h0);
                    levels.push(caches);
                    xs = hs;
                }
                xs.pop().expect("non-empty sequence")
            }
            ModelKind::StackedFusionGru => {
                let mut hs: Vec<Vec<f64>> = Vec::new();
                for (j, g) in p.levels.iter().enumerate() {
                    let xs: Vec<Vec<f64>> = if j == 0 {
                        feats[0].to_vec()
                    } else {
                        (0..m).map(|t| concat(&[&hs[t], &feats[j][t]])).collect()
                    };
                    let (next, caches) = gru::sequence_forward_unchecked(g, &xs, &h0);
                    levels.push(caches);
                    hs = next;
                }
                hs.pop().expect("non-empty sequence")
            }
            ModelKind::MultiStreamGru | ModelKind::HierarchicalGru => {
                let mut stream_hs = Vec::with_capacity(feats.len());
                for (g, f) in p.streams.iter().zip(&feats) {
                    let (hs, caches) = gru::sequence_forward_unchecked(g, f, &h0);
                    streams.push(caches);
                    stream_hs.push(hs);
                }
                let joined = |t: usize| concat(&stream_hs.iter().map(|hs| hs[t].as_slice()).collect::<Vec<_>>());
                if spec.kind == ModelKind::MultiStreamGru {
                    joined(m - 1)
                } else {
                    let xs: Vec<Vec<f64>> = (0..m).map(joined).collect();
                    let (mut hs, caches) = gru::sequence_forward_unchecked(&p.levels[0], &xs, &h0);
                    levels.push(caches);
                    hs.pop().expect("non-empty sequence")
                }
            }
        };

        let logit = gru::linear_forward(&p.classifier, &head_input)?;
        Ok(ForwardCache {
            streams,
            levels,
            head_input,
            logit,
            prob: sigmoid(logit),
        })
    }

    /// Gradient of `BCE(prob, label)` w.r.t. every parameter.
    pub fn backward(&self, cache: &ForwardCache, label: f64) -> Result<ModelParams> {
        let mut grads = self.params.zeros_like();
        self.backward_acc(cache, bce_logit_grad(cache.prob, label)?, &mut grads)?;
        Ok(grads)
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative
    /// w.r.t. the logit is `dlogit`.
    pub fn backward_acc(&self, cache: &ForwardCache, dlogit: f64, grads: &mut ModelParams) -> Result<()> {
        let p = &self.params;
        if cache.levels.len() != p.levels.len()
            || cache.streams.len() != p.streams.len()
            || cache.head_input.len() != p.classifier.input_dim()
            || grads.levels.len() != p.levels.len()
            || grads.streams.len() != p.streams.len()
        {
            return Err(Error::InvalidSpec("forward cache or gradient buffer does not match this model".into()));
        }
        let hd = self.spec.hidden_dim;
        let m = self.spec.obs_len;
        let d_head = gru::linear_backward_acc(&p.classifier, &cache.head_input, dlogit, &mut grads.classifier);
        let last_only = |d: Vec<f64>| {
            let mut dhs = vec![vec![0.0; hd]; m];
            dhs[m - 1] = d;
            dhs
        };

        match self.spec.kind {
            ModelKind::Static => {}
            ModelKind::SingleGru | ModelKind::StackedGru | ModelKind::StackedFusionGru => {
                let fusion = self.spec.kind == ModelKind::StackedFusionGru;
                let mut dhs = last_only(d_head);
                for j in (0..p.levels.len()).rev() {
                    let dxs = gru::sequence_backward_acc(&p.levels[j], &cache.levels[j], &dhs, &mut grads.levels[j], j > 0);
                    if j > 0 {
                        dhs = if fusion {
                            dxs.into_iter().map(|mut dx| {
                                dx.truncate(hd);
                                dx
                            }).collect()
                        } else {
                            dxs
                        };
                    }
                }
            }
            ModelKind::MultiStreamGru => {
                for (i, g) in p.streams.iter().enumerate() {
                    let dhs = last_only(d_head[i * hd..(i + 1) * hd].to_vec());
                    gru::sequence_backward_acc(g, &cache.streams[i], &dhs, &mut grads.streams[i], false);
                }
            }
            ModelKind::HierarchicalGru => {
                let dxs = gru::sequence_backward_acc(&p.levels[0], &cache.levels[0], &last_only(d_head), &mut grads.levels[0], true);
                for (i, g) in p.streams.iter().enumerate() {
                    let dhs: Vec<Vec<f64>> = dxs.iter().map(|dx| dx[i * hd..(i + 1) * hd].to_vec()).collect();
                    gru::sequence_backward_acc(g, &cache.streams[i], &dhs, &mut grads.streams[i], false);
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_checkpoint_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Model::from_checkpoint_json(&fs::read_to_string(path)?)
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        let mut tensors = Vec::new();
        let shapes = tensor_shapes(&self.params);
        self.params.for_each_tensor(|name, v, _| {
            let shape = shapes[&name];
            tensors.push(TensorRecord {
                name,
                shape,
                data: v.to_vec(),
            });
        });
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            tensors,
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format {} v{}", ck.format, ck.version)));
        }
        let mut model = Model::zeros(ck.spec)?;
        let shapes = tensor_shapes(&model.params);
        let mut by_name: HashMap<String, TensorRecord> = HashMap::new();
        for t in ck.tensors {
            if by_name.contains_key(&t.name) {
                return Err(Error::Checkpoint(format!("duplicate tensor {}", t.name)));
            }
            by_name.insert(t.name.clone(), t);
        }
        let mut problem = None;
        model.params.for_each_tensor_mut(|name, v, _| {
            if problem.is_some() {
                return;
            }
            match by_name.remove(&name) {
                None => problem = Some(format!("missing tensor {name}")),
                Some(t) if t.shape != shapes[&name] || t.data.len() != v.len() => {
                    problem = Some(format!("tensor {name}: shape {:?}, expected {:?}", t.shape, shapes[&name]))
                }
                Some(t) if t.data.iter().any(|x| !x.is_finite()) => problem = Some(format!("tensor {name}: non-finite value")),
                Some(t) => v.copy_from_slice(&t.data),
            }
        });
        if let Some(p) = problem {
            return Err(Error::Checkpoint(p));
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
        }
        Ok(model)
    }
}

const CHECKPOINT_FORMAT: &str = "sfgru-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    spec: ModelSpec,
    tensors: Vec<TensorRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

fn tensor_shapes(p: &ModelParams) -> HashMap<String, [usize; 2]> {
    let mut out = HashMap::new();
    let mut add = |prefix: String, g: &GruParams| {
        let (i, h) = (g.input_dim, g.hidden_dim);
        for (n, s) in [
            ("w_xr", [h, i]),
            ("w_xz", [h, i]),
            ("w_xh", [h, i]),
            ("w_hr", [h, h]),
            ("w_hz", [h, h]),
            ("w_hh", [h, h]),
            ("b_r", [h, 1]),
            ("b_z", [h, 1]),
            ("b_h", [h, 1]),
        ] {
            out.insert(format!("{prefix}.{n}"), s);
        }
    };
    for (i, g) in p.streams.iter().enumerate() {
        add(format!("stream{i}"), g);
    }
    for (i, g) in p.levels.iter().enumerate() {
        add(format!("level{i}"), g);
    }
    out.insert("classifier.w".into(), [1, p.classifier.input_dim()]);
    out.insert("classifier.b".into(), [1, 1]);
    out
}
