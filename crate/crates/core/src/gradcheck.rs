//! Analytic BPTT gradients against central finite differences.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::ModelInput;
use crate::model::{Model, ModelSpec};
use crate::numerics::{finite_diff_grad, Rng};
use crate::reference::{bce_from_logit, reference_logit, Dd, Real};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Coordinates whose f64 difference quotient disagrees with the analytic
/// gradient by more than this are re-evaluated in double-double.
pub const REFINE_ABOVE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Tensor name and index of the worst coordinate.
    pub worst: String,
    pub n_params: usize,
    pub n_samples: usize,
    pub step: f64,
    /// Coordinates whose difference quotient was recomputed in double-double.
    pub refined: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Standard-normal features of the right shape for `spec`.
pub fn random_input(spec: &ModelSpec, rng: &mut Rng) -> ModelInput {
    spec.fusion_order
        .iter()
        .map(|&k| {
            let seq = (0..spec.obs_len).map(|_| (0..k.dim()).map(|_| rng.normal()).collect()).collect();
            (k, seq)
        })
        .collect()
}

fn label(i: usize) -> f64 {
    if i.is_multiple_of(2) {
        1.0
    } else {
        0.0
    }
}

/// Total BCE over `inputs`, labels alternating 1, 0, ...
pub fn total_loss(model: &Model, inputs: &[ModelInput]) -> Result<f64> {
    let mut loss = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        loss += bce_from_logit(model.forward(x)?.logit, label(i));
    }
    Ok(loss)
}

fn total_loss_dd(spec: &ModelSpec, flat: &[Dd], inputs: &[ModelInput]) -> Result<Dd> {
    let mut loss = Dd::zero();
    for (i, x) in inputs.iter().enumerate() {
        loss = loss + bce_from_logit(reference_logit(spec, flat, x)?, label(i));
    }
    Ok(loss)
}

/// Central difference for one coordinate with the loss in double-double;
/// `theta +- h` is formed exactly.
fn dd_difference(spec: &ModelSpec, flat: &mut [Dd], i: usize, h: f64, inputs: &[ModelInput]) -> Result<f64> {
    let orig = flat[i];
    flat[i] = orig + Dd::from_f64(h);
    let plus = total_loss_dd(spec, flat, inputs)?;
    flat[i] = orig - Dd::from_f64(h);
    let minus = total_loss_dd(spec, flat, inputs)?;
    flat[i] = orig;
    Ok(((plus - minus) / Dd::from_f64(2.0 * h)).to_f64())
}

/// Checks every parameter of a randomly initialised `spec` model on
/// `n_samples` random windows.
///
/// Difference quotients are taken in f64 first. Where they disagree with
/// the analytic value by more than [`REFINE_ABOVE`] the loss is recomputed
/// in double-double, since f64 roundoff (about 1e-11 at this step) swamps
/// gradients near 1e-8.
pub fn gradcheck(spec: &ModelSpec, seed: u64, n_samples: usize, step: f64) -> Result<GradCheckReport> {
    spec.validate()?;
    let rng = Rng::new(seed);
    let model = Model::init(spec.clone(), &mut rng.fork(0))?;
    let mut data_rng = rng.fork(1);
    let inputs: Vec<ModelInput> = (0..n_samples.max(1)).map(|_| random_input(spec, &mut data_rng)).collect();

    let mut analytic = model.params.zeros_like();
    for (i, x) in inputs.iter().enumerate() {
        let cache = model.forward(x)?;
        model.backward_acc(&cache, cache.prob - label(i), &mut analytic)?;
    }
    let analytic = analytic.flatten();

    let theta = model.params.flatten();
    let mut probe = model.clone();
    let mut numeric = finite_diff_grad(
        |t| {
            probe.params.assign_flat(t).expect("same layout");
            total_loss(&probe, &inputs).unwrap_or(f64::NAN)
        },
        &theta,
        step,
    )?;

    let mut flat_dd: Vec<Dd> = theta.iter().map(|&v| Dd::from_f64(v)).collect();
    let mut refined = 0;
    for i in 0..theta.len() {
        if !(relative_error(analytic[i], numeric[i]) <= REFINE_ABOVE) {
            numeric[i] = dd_difference(spec, &mut flat_dd, i, step, &inputs)?;
            refined += 1;
        }
    }

    let mut names = Vec::new();
    model.params.for_each_tensor(|name, t, _| names.extend((0..t.len()).map(|k| (name.clone(), k))));
    let (mut max_rel_err, mut worst) = (0.0, 0);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = relative_error(*a, *n);
        if !(e <= max_rel_err) {
            max_rel_err = e;
            worst = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst: names.get(worst).map_or_else(String::new, |(n, k)| format!("{n}[{k}]")),
        n_params: analytic.len(),
        n_samples: inputs.len(),
        step,
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert_eq!(relative_error(0.0, 1e-9), 0.1);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn small_sf_gru_passes() {
        let spec = ModelSpec {
            hidden_dim: 3,
            obs_len: 2,
            ..ModelSpec::with_defaults(ModelKind::StackedFusionGru)
        };
        let r = gradcheck(&spec, 3, 2, DEFAULT_STEP).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.n_params, spec.param_count());
    }
}
