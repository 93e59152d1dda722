//! ADAM with L2 weight decay, the minibatch epoch loop and evaluation.

use serde::{Deserialize, Serialize};

use crate::dataset::{balance_indices, LabeledWindow};
use crate::error::{Error, Result};
use crate::features::ModelInput;
use crate::gru::bce_loss;
use crate::metrics::MetricsReport;
use crate::model::{Model, ModelParams, ModelSpec};
use crate::numerics::Rng;

/// Hyperparameter presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// lr 5e-6, tuned for pretrained CNN features.
    Paper,
    /// lr 1e-3, for synthetic data.
    Synth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight decay added to weight gradients; biases are exempt.
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub flip_augment: bool,
    pub balance: bool,
}

impl TrainConfig {
    pub fn paper() -> Self {
        TrainConfig {
            lr: 5e-6,
            epochs: 60,
            batch_size: 32,
            l2: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            flip_augment: true,
            balance: true,
        }
    }

    pub fn synthetic() -> Self {
        TrainConfig {
            lr: 1e-3,
            ..TrainConfig::paper()
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Paper => TrainConfig::paper(),
            Mode::Synth => TrainConfig::synthetic(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && self.batch_size > 0
            && self.l2 >= 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid training config {self:?}")))
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::paper()
    }
}

/// First and second moment estimates, laid out like `ModelParams::flatten`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let n = params.param_count();
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One ADAM update with L2 decay folded into the weight gradients.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    let n = params.param_count();
    if grads.param_count() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::shape("adam_step", n, grads.param_count()));
    }
    let mut bad = None;
    grads.for_each_tensor(|name, g, _| {
        if bad.is_none() && g.iter().any(|x| !x.is_finite()) {
            bad = Some(name);
        }
    });
    if let Some(name) = bad {
        return Err(Error::NonFiniteGradient(name));
    }

    let g = grads.flatten();
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let mut off = 0;
    params.for_each_tensor_mut(|_, w, is_bias| {
        for (k, wk) in w.iter_mut().enumerate() {
            let i = off + k;
            let gi = if is_bias { g[i] } else { g[i] + cfg.l2 * *wk };
            state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gi;
            state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = state.m[i] / bc1;
            let v_hat = state.v[i] / bc2;
            *wk -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        off += w.len();
    });
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean BCE over the samples seen in each epoch.
    pub epoch_losses: Vec<f64>,
    /// Samples per epoch after balancing and augmentation.
    pub samples_per_epoch: Vec<usize>,
}

/// Trains a freshly initialised model.
///
/// Each epoch: optional class balancing (fresh draw), optional flip
/// augmentation (one mirrored copy per sample), a seeded shuffle, then
/// minibatches of mean BCE minimised with ADAM.
pub fn train(spec: &ModelSpec, samples: &[LabeledWindow], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let rng = Rng::new(cfg.seed);
    let mut model = Model::init(spec.clone(), &mut rng.fork(0))?;
    let mut state = AdamState::new(&model.params);

    let inputs: Vec<ModelInput> = samples
        .iter()
        .map(|s| s.window.model_input(&spec.fusion_order))
        .collect::<Result<_>>()?;
    let flipped: Vec<ModelInput> = if cfg.flip_augment {
        let missing = samples
            .iter()
            .filter(|s| !s.window.frames().iter().all(|f| f.has_flipped_context()))
            .count();
        if missing > 0 {
            log::warn!("{missing} of {} training samples lack flipped context vectors; mirrored copies reuse the original context", samples.len());
        }
        samples
            .iter()
            .map(|s| s.flipped().window.model_input(&spec.fusion_order))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let labels: Vec<bool> = samples.iter().map(|s| s.label.is_crossing()).collect();

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut samples_per_epoch = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut erng = rng.fork(epoch as u64 + 1);
        let chosen = if cfg.balance {
            balance_indices(&labels, &mut erng)?
        } else {
            (0..samples.len()).collect()
        };
        let mut order: Vec<(usize, bool)> = chosen.iter().map(|&i| (i, false)).collect();
        if cfg.flip_augment {
            order.extend(chosen.iter().map(|&i| (i, true)));
        }
        erng.shuffle(&mut order);

        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = model.params.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &(i, flip) in batch {
                let input = if flip { &flipped[i] } else { &inputs[i] };
                let y = if labels[i] { 1.0 } else { 0.0 };
                let cache = model.forward(input)?;
                batch_loss += bce_loss(cache.prob, y)?;
                model.backward_acc(&cache, (cache.prob - y) * scale, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    lr: cfg.lr,
                });
            }
            total += batch_loss;
            adam_step(&mut model.params, &grads, &mut state, cfg)?;
        }
        epoch_losses.push(total / order.len() as f64);
        samples_per_epoch.push(order.len());
        log::debug!("epoch {epoch}: loss {:.6}", total / order.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
        samples_per_epoch,
    })
}

/// Probabilities for each window.
pub fn predict_all(model: &Model, samples: &[LabeledWindow]) -> Result<Vec<f64>> {
    samples.iter().map(|s| model.predict(&s.window)).collect()
}

pub fn evaluate(model: &Model, samples: &[LabeledWindow], threshold: f64) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let scores = predict_all(model, samples)?;
    let labels: Vec<bool> = samples.iter().map(|s| s.label.is_crossing()).collect();
    Ok(MetricsReport::from_scores(&scores, &labels, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Label, LabeledWindow};
    use crate::features::{BBox, FeatureKey, FrameFeatures, ObservationWindow};
    use crate::model::ModelKind;

    fn tiny_model(seed: u64) -> Model {
        let spec = ModelSpec::new(ModelKind::SingleGru, vec![FeatureKey::S, FeatureKey::B], 3, 2).unwrap();
        Model::init(spec, &mut Rng::new(seed)).unwrap()
    }

    fn window(speed: f64, label: Label) -> LabeledWindow {
        let frames = (0..2)
            .map(|t| {
                FrameFeatures::new(
                    vec![0.0; 512],
                    vec![0.0; 512],
                    vec![0.5; 36],
                    BBox::new(10.0 + t as f64, 10.0, 20.0, 30.0),
                    speed,
                    100.0,
                )
                .unwrap()
            })
            .collect();
        LabeledWindow {
            track_id: format!("{speed}"),
            label,
            frame_w: 100.0,
            window: ObservationWindow::new(frames).unwrap(),
        }
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut model = tiny_model(0);
        let before = model.params.flatten();
        let mut grads = model.params.zeros_like();
        let n = grads.param_count();
        grads.assign_flat(&(0..n).map(|i| if i % 3 == 0 { 0.7 } else { -2.5 }).collect::<Vec<_>>()).unwrap();
        let cfg = TrainConfig { lr: 0.01, l2: 0.0, ..TrainConfig::paper() };
        let mut st = AdamState::new(&model.params);
        adam_step(&mut model.params, &grads, &mut st, &cfg).unwrap();
        let g = grads.flatten();
        for ((a, b), gi) in model.params.flatten().iter().zip(&before).zip(&g) {
            assert!(((a - b) + 0.01 * gi.signum()).abs() < 1e-8);
        }
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op_and_decay_shrinks_weights() {
        let mut model = tiny_model(1);
        let before = model.params.clone();
        let zeros = model.params.zeros_like();
        let mut st = AdamState::new(&model.params);
        let cfg = TrainConfig { lr: 0.01, l2: 0.0, ..TrainConfig::paper() };
        adam_step(&mut model.params, &zeros, &mut st, &cfg).unwrap();
        assert_eq!(model.params, before);

        let cfg = TrainConfig { lr: 0.01, l2: 0.1, ..TrainConfig::paper() };
        let mut st = AdamState::new(&model.params);
        adam_step(&mut model.params, &zeros, &mut st, &cfg).unwrap();
        let mut checked = 0;
        let after = model.params.flatten();
        let mut off = 0;
        before.for_each_tensor(|_, w, is_bias| {
            for (k, &wk) in w.iter().enumerate() {
                let moved = after[off + k] - wk;
                if !is_bias && wk != 0.0 {
                    assert_eq!(moved.signum(), -wk.signum());
                    checked += 1;
                } else if is_bias {
                    assert_eq!(moved, 0.0);
                }
            }
            off += w.len();
        });
        assert!(checked > 0);
    }

    #[test]
    fn adam_rejects_bad_gradients() {
        let mut model = tiny_model(2);
        let mut grads = model.params.zeros_like();
        grads.levels[0].w_hz.data_mut()[0] = f64::NAN;
        let mut st = AdamState::new(&model.params);
        let err = adam_step(&mut model.params, &grads, &mut st, &TrainConfig::paper()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "level0.w_hz"), "{err}");

        let other = Model::zeros(ModelSpec::new(ModelKind::Static, vec![FeatureKey::S], 1, 2).unwrap()).unwrap();
        assert!(adam_step(&mut model.params, &other.params, &mut st, &TrainConfig::paper()).is_err());
    }

    #[test]
    fn zero_lr_leaves_params_bitwise_unchanged() {
        let spec = tiny_model(0).spec;
        let samples = vec![window(5.0, Label::Crossing), window(30.0, Label::NonCrossing)];
        let cfg = TrainConfig { lr: 0.0, epochs: 4, batch_size: 1, ..TrainConfig::paper() };
        let out = train(&spec, &samples, &cfg).unwrap();
        let fresh = Model::init(spec, &mut Rng::new(cfg.seed).fork(0)).unwrap();
        let bits = |p: &ModelParams| p.flatten().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out.model.params), bits(&fresh.params));
        for l in &out.epoch_losses {
            assert!((l - out.epoch_losses[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sample_is_memorised() {
        let spec = tiny_model(0).spec;
        let samples = vec![window(5.0, Label::Crossing)];
        let cfg = TrainConfig {
            lr: 0.05,
            epochs: 400,
            batch_size: 1,
            l2: 0.0,
            balance: false,
            flip_augment: false,
            ..TrainConfig::paper()
        };
        let out = train(&spec, &samples, &cfg).unwrap();
        assert!(*out.epoch_losses.last().unwrap() < 1e-3, "{:?}", out.epoch_losses.last());
    }

    #[test]
    fn flip_doubles_epoch_size() {
        let spec = tiny_model(0).spec;
        let samples = vec![
            window(5.0, Label::Crossing),
            window(6.0, Label::NonCrossing),
            window(7.0, Label::NonCrossing),
        ];
        let base = TrainConfig { epochs: 2, ..TrainConfig::synthetic() };
        let plain = train(&spec, &samples, &TrainConfig { flip_augment: false, ..base.clone() }).unwrap();
        let flip = train(&spec, &samples, &base).unwrap();
        assert_eq!(plain.samples_per_epoch, vec![2, 2]);
        assert_eq!(flip.samples_per_epoch, vec![4, 4]);
    }

    #[test]
    fn training_is_deterministic() {
        let spec = tiny_model(0).spec;
        let samples: Vec<_> = (0..10)
            .map(|i| window(i as f64, if i % 3 == 0 { Label::Crossing } else { Label::NonCrossing }))
            .collect();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, seed: 17, ..TrainConfig::synthetic() };
        let a = train(&spec, &samples, &cfg).unwrap();
        let b = train(&spec, &samples, &cfg).unwrap();
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
        assert_eq!(evaluate(&a.model, &samples, 0.5).unwrap(), evaluate(&b.model, &samples, 0.5).unwrap());
    }

    #[test]
    fn balance_requires_both_classes() {
        let spec = tiny_model(0).spec;
        let samples = vec![window(1.0, Label::Crossing)];
        assert!(matches!(
            train(&spec, &samples, &TrainConfig::synthetic()),
            Err(Error::ClassAbsent(_))
        ));
        assert!(train(&spec, &[], &TrainConfig::synthetic()).is_err());
        assert!(evaluate(&tiny_model(0), &[], 0.5).is_err());
    }
}
