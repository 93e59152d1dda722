//! GRU cell, sequence unrolling, the linear read-out and binary cross-entropy.
//!
//! Per step:
//!
//! ```text
//! r  = sigmoid(W_xr x + W_hr h_prev + b_r)
//! z  = sigmoid(W_xz x + W_hz h_prev + b_z)
//! h~ = tanh(W_xh x + W_hh (r * h_prev) + b_h)
//! h  = (1 - z) * h_prev + z * h~
//! ```
//!
//! Backward functions accumulate into a gradient buffer with the same shape
//! as the parameters so that BPTT and stacked levels compose by repeated
//! calls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, gemv_acc, gemv_into, gemv_t_acc, init_uniform, outer_acc, sigmoid, Matrix, Rng, Vector};

/// Lower clamp applied to probabilities before taking logs.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_xr: Matrix,
    pub w_xz: Matrix,
    pub w_xh: Matrix,
    pub w_hr: Matrix,
    pub w_hz: Matrix,
    pub w_hh: Matrix,
    pub b_r: Vector,
    pub b_z: Vector,
    pub b_h: Vector,
    /// When false the biases stay zero and are not trainable.
    pub use_bias: bool,
}

impl GruParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, use_bias: bool) -> Self {
        let wx = || Matrix::zeros(hidden_dim, input_dim);
        let wh = || Matrix::zeros(hidden_dim, hidden_dim);
        GruParams {
            input_dim,
            hidden_dim,
            w_xr: wx(),
            w_xz: wx(),
            w_xh: wx(),
            w_hr: wh(),
            w_hz: wh(),
            w_hh: wh(),
            b_r: Vector::zeros(hidden_dim),
            b_z: Vector::zeros(hidden_dim),
            b_h: Vector::zeros(hidden_dim),
            use_bias,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(rng: &mut Rng, input_dim: usize, hidden_dim: usize, use_bias: bool) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "GRU dims must be positive, got input {input_dim}, hidden {hidden_dim}"
            )));
        }
        let mut wx = || init_uniform(rng, hidden_dim, input_dim, input_dim, hidden_dim);
        let (w_xr, w_xz, w_xh) = (wx()?, wx()?, wx()?);
        let mut wh = || init_uniform(rng, hidden_dim, hidden_dim, hidden_dim, hidden_dim);
        let (w_hr, w_hz, w_hh) = (wh()?, wh()?, wh()?);
        Ok(GruParams {
            input_dim,
            hidden_dim,
            w_xr,
            w_xz,
            w_xh,
            w_hr,
            w_hz,
            w_hh,
            b_r: Vector::zeros(hidden_dim),
            b_z: Vector::zeros(hidden_dim),
            b_h: Vector::zeros(hidden_dim),
            use_bias,
        })
    }

    /// Trainable scalar count: `3h(i + h)` plus `3h` with biases.
    pub fn param_count(&self) -> usize {
        gru_param_count(self.input_dim, self.hidden_dim, self.use_bias)
    }

    /// Zero-filled buffer shaped like `self`, for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        GruParams::zeros(self.input_dim, self.hidden_dim, self.use_bias)
    }

    /// Visits every trainable tensor as `(name, values, is_bias)`.
    pub fn for_each_tensor<'a>(&'a self, mut f: impl FnMut(&'static str, &'a [f64], bool)) {
        f("w_xr", self.w_xr.data(), false);
        f("w_xz", self.w_xz.data(), false);
        f("w_xh", self.w_xh.data(), false);
        f("w_hr", self.w_hr.data(), false);
        f("w_hz", self.w_hz.data(), false);
        f("w_hh", self.w_hh.data(), false);
        if self.use_bias {
            f("b_r", &self.b_r, true);
            f("b_z", &self.b_z, true);
            f("b_h", &self.b_h, true);
        }
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&'static str, &mut [f64], bool)) {
        f("w_xr", self.w_xr.data_mut(), false);
        f("w_xz", self.w_xz.data_mut(), false);
        f("w_xh", self.w_xh.data_mut(), false);
        f("w_hr", self.w_hr.data_mut(), false);
        f("w_hz", self.w_hz.data_mut(), false);
        f("w_hh", self.w_hh.data_mut(), false);
        if self.use_bias {
            f("b_r", &mut self.b_r, true);
            f("b_z", &mut self.b_z, true);
            f("b_h", &mut self.b_h, true);
        }
    }
}

pub fn gru_param_count(input_dim: usize, hidden_dim: usize, use_bias: bool) -> usize {
    3 * hidden_dim * (input_dim + hidden_dim) + if use_bias { 3 * hidden_dim } else { 0 }
}

/// Intermediates of one forward step.
#[derive(Clone, Debug, PartialEq)]
pub struct GruStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub h: Vec<f64>,
}

fn check_step_shapes(p: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<()> {
    if x.len() != p.input_dim {
        return Err(Error::shape("gru_step_forward", format!("input_dim {}", p.input_dim), format!("x {}", x.len())));
    }
    if h_prev.len() != p.hidden_dim {
        return Err(Error::shape(
            "gru_step_forward",
            format!("hidden_dim {}", p.hidden_dim),
            format!("h_prev {}", h_prev.len()),
        ));
    }
    Ok(())
}

pub fn gru_step_forward(p: &GruParams, x: &[f64], h_prev: &[f64]) -> Result<(Vec<f64>, GruStepCache)> {
    check_step_shapes(p, x, h_prev)?;
    let cache = step_forward_unchecked(p, x, h_prev);
    Ok((cache.h.clone(), cache))
}

pub(crate) fn step_forward_unchecked(p: &GruParams, x: &[f64], h_prev: &[f64]) -> GruStepCache {
    let hd = p.hidden_dim;
    let mut r = vec![0.0; hd];
    let mut z = vec![0.0; hd];
    let mut a_h = vec![0.0; hd];

    gemv_into(&p.w_xr, x, &mut r);
    gemv_acc(&p.w_hr, h_prev, &mut r);
    gemv_into(&p.w_xz, x, &mut z);
    gemv_acc(&p.w_hz, h_prev, &mut z);
    for i in 0..hd {
        r[i] = sigmoid(r[i] + p.b_r[i]);
        z[i] = sigmoid(z[i] + p.b_z[i]);
    }

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    gemv_into(&p.w_xh, x, &mut a_h);
    gemv_acc(&p.w_hh, &rh, &mut a_h);
    let h_tilde: Vec<f64> = a_h.iter().zip(p.b_h.iter()).map(|(a, b)| (a + b).tanh()).collect();

    let h = (0..hd)
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * h_tilde[i])
        .collect();

    GruStepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r,
        z,
        h_tilde,
        h,
    }
}

/// Gradients of one step given `dh = dL/dh`. Returns `(dx, dh_prev, dparams)`.
pub fn gru_step_backward(p: &GruParams, cache: &GruStepCache, dh: &[f64]) -> Result<(Vec<f64>, Vec<f64>, GruParams)> {
    check_step_shapes(p, &cache.x, &cache.h_prev)?;
    if dh.len() != p.hidden_dim || cache.h.len() != p.hidden_dim {
        return Err(Error::shape("gru_step_backward", format!("hidden_dim {}", p.hidden_dim), format!("dh {}", dh.len())));
    }
    let mut grads = p.zeros_like();
    let mut dx = vec![0.0; p.input_dim];
    let dh_prev = step_backward_acc(p, cache, dh, &mut grads, Some(&mut dx));
    Ok((dx, dh_prev, grads))
}

/// Accumulates parameter gradients into `grads`, adds `dL/dx` into `dx`
/// when requested, and returns `dL/dh_prev`.
pub(crate) fn step_backward_acc(
    p: &GruParams,
    c: &GruStepCache,
    dh: &[f64],
    grads: &mut GruParams,
    dx: Option<&mut [f64]>,
) -> Vec<f64> {
    let hd = p.hidden_dim;
    let mut dh_prev = vec![0.0; hd];
    let mut da_h = vec![0.0; hd];
    let mut da_z = vec![0.0; hd];
    for i in 0..hd {
        let (z, ht, hp) = (c.z[i], c.h_tilde[i], c.h_prev[i]);
        dh_prev[i] = dh[i] * (1.0 - z);
        da_h[i] = dh[i] * z * (1.0 - ht * ht);
        da_z[i] = dh[i] * (ht - hp) * z * (1.0 - z);
    }

    let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
    outer_acc(&mut grads.w_xh, &da_h, &c.x);
    outer_acc(&mut grads.w_hh, &da_h, &rh);

    let mut d_rh = vec![0.0; hd];
    gemv_t_acc(&p.w_hh, &da_h, &mut d_rh);
    let mut da_r = vec![0.0; hd];
    for i in 0..hd {
        dh_prev[i] += d_rh[i] * c.r[i];
        let r = c.r[i];
        da_r[i] = d_rh[i] * c.h_prev[i] * r * (1.0 - r);
    }

    outer_acc(&mut grads.w_xz, &da_z, &c.x);
    outer_acc(&mut grads.w_hz, &da_z, &c.h_prev);
    outer_acc(&mut grads.w_xr, &da_r, &c.x);
    outer_acc(&mut grads.w_hr, &da_r, &c.h_prev);
    gemv_t_acc(&p.w_hz, &da_z, &mut dh_prev);
    gemv_t_acc(&p.w_hr, &da_r, &mut dh_prev);

    if p.use_bias {
        for i in 0..hd {
            grads.b_r[i] += da_r[i];
            grads.b_z[i] += da_z[i];
            grads.b_h[i] += da_h[i];
        }
    }

    if let Some(dx) = dx {
        gemv_t_acc(&p.w_xh, &da_h, dx);
        gemv_t_acc(&p.w_xz, &da_z, dx);
        gemv_t_acc(&p.w_xr, &da_r, dx);
    }
    dh_prev
}

/// Runs the cell over `xs` starting from `h0`. `hs[t]` is the state after `xs[t]`.
pub fn gru_sequence_forward(p: &GruParams, xs: &[Vec<f64>], h0: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<GruStepCache>)> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("gru_sequence_forward on an empty sequence".into()));
    }
    if h0.len() != p.hidden_dim {
        return Err(Error::shape("gru_sequence_forward", format!("hidden_dim {}", p.hidden_dim), format!("h0 {}", h0.len())));
    }
    for (t, x) in xs.iter().enumerate() {
        if x.len() != p.input_dim {
            return Err(Error::shape(
                "gru_sequence_forward",
                format!("input_dim {}", p.input_dim),
                format!("x[{t}] {}", x.len()),
            ));
        }
    }
    Ok(sequence_forward_unchecked(p, xs, h0))
}

pub(crate) fn sequence_forward_unchecked(p: &GruParams, xs: &[Vec<f64>], h0: &[f64]) -> (Vec<Vec<f64>>, Vec<GruStepCache>) {
    let mut caches = Vec::with_capacity(xs.len());
    let mut h = h0.to_vec();
    for x in xs {
        let c = step_forward_unchecked(p, x, &h);
        h.clone_from(&c.h);
        caches.push(c);
    }
    let hs = caches.iter().map(|c| c.h.clone()).collect();
    (hs, caches)
}

/// BPTT over a cached sequence. `dhs[t]` is the external gradient on `hs[t]`
/// (zero vectors where nothing flows in). Returns per-step `dx` when
/// `want_dx`, otherwise an empty vector.
pub(crate) fn sequence_backward_acc(
    p: &GruParams,
    caches: &[GruStepCache],
    dhs: &[Vec<f64>],
    grads: &mut GruParams,
    want_dx: bool,
) -> Vec<Vec<f64>> {
    debug_assert_eq!(caches.len(), dhs.len());
    let mut dxs = if want_dx {
        vec![vec![0.0; p.input_dim]; caches.len()]
    } else {
        Vec::new()
    };
    let mut carry = vec![0.0; p.hidden_dim];
    for t in (0..caches.len()).rev() {
        for (c, d) in carry.iter_mut().zip(&dhs[t]) {
            *c += d;
        }
        let dx = if want_dx { Some(dxs[t].as_mut_slice()) } else { None };
        carry = step_backward_acc(p, &caches[t], &carry, grads, dx);
    }
    dxs
}

/// Final read-out `logit = w . x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub w: Matrix,
    pub b: f64,
}

impl LinearParams {
    pub fn zeros(input_dim: usize) -> Self {
        LinearParams {
            w: Matrix::zeros(1, input_dim),
            b: 0.0,
        }
    }

    pub fn init(rng: &mut Rng, input_dim: usize) -> Result<Self> {
        Ok(LinearParams {
            w: init_uniform(rng, 1, input_dim, input_dim, 1)?,
            b: 0.0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn param_count(&self) -> usize {
        self.w.cols() + 1
    }
}

pub fn linear_forward(p: &LinearParams, x: &[f64]) -> Result<f64> {
    if x.len() != p.input_dim() {
        return Err(Error::shape("linear_forward", format!("input_dim {}", p.input_dim()), format!("x {}", x.len())));
    }
    Ok(numerics::dot(p.w.row(0), x) + p.b)
}

/// Given `dlogit`, returns `(dx, grads)`.
pub fn linear_backward(p: &LinearParams, x: &[f64], dlogit: f64) -> Result<(Vec<f64>, LinearParams)> {
    if x.len() != p.input_dim() {
        return Err(Error::shape("linear_backward", format!("input_dim {}", p.input_dim()), format!("x {}", x.len())));
    }
    let mut g = LinearParams::zeros(p.input_dim());
    let dx = linear_backward_acc(p, x, dlogit, &mut g);
    Ok((dx, g))
}

pub(crate) fn linear_backward_acc(p: &LinearParams, x: &[f64], dlogit: f64, grads: &mut LinearParams) -> Vec<f64> {
    for (g, &xi) in grads.w.data_mut().iter_mut().zip(x) {
        *g += dlogit * xi;
    }
    grads.b += dlogit;
    p.w.row(0).iter().map(|w| w * dlogit).collect()
}

fn check_label(label: f64) -> Result<()> {
    if label == 0.0 || label == 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLabel(label))
    }
}

/// `-(y ln p + (1 - y) ln(1 - p))` with `p` clamped to `[eps, 1 - eps]`.
pub fn bce_loss(prob: f64, label: f64) -> Result<f64> {
    check_label(label)?;
    let p = prob.clamp(BCE_EPS, 1.0 - BCE_EPS);
    Ok(-(label * p.ln() + (1.0 - label) * (1.0 - p).ln()))
}

/// Gradient of `bce_loss(sigmoid(logit), y)` w.r.t. the logit: `p - y`.
pub fn bce_logit_grad(prob: f64, label: f64) -> Result<f64> {
    check_label(label)?;
    Ok(prob - label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    fn scalar_cell(wx: f64, wh_gates: f64, whh: f64) -> GruParams {
        let one = |v: f64| Matrix::from_vec(1, 1, vec![v]).unwrap();
        let mut p = GruParams::zeros(1, 1, true);
        p.w_xr = one(wx);
        p.w_xz = one(wx);
        p.w_xh = one(wx);
        p.w_hr = one(wh_gates);
        p.w_hz = one(wh_gates);
        p.w_hh = one(whh);
        p
    }

    use crate::reference::{bce_from_logit, reference_gru, Dd, Real};

    fn random_cell(rng: &mut Rng, i: usize, h: usize) -> GruParams {
        let mut p = GruParams::init(rng, i, h, true).unwrap();
        for b in [&mut p.b_r, &mut p.b_z, &mut p.b_h] {
            for v in b.iter_mut() {
                *v = rng.uniform(-0.5, 0.5);
            }
        }
        p
    }

    fn rand_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    fn flat(p: &GruParams) -> Vec<f64> {
        let mut out = Vec::new();
        p.for_each_tensor(|_, v, _| out.extend_from_slice(v));
        out
    }

    fn assign(p: &mut GruParams, values: &[f64]) {
        let mut off = 0;
        p.for_each_tensor_mut(|_, v, _| {
            v.copy_from_slice(&values[off..off + v.len()]);
            off += v.len();
        });
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn zero_cell_step() {
        let p = GruParams::zeros(3, 2, true);
        let (h, c) = gru_step_forward(&p, &[0.3, -2.0, 9.0], &[1.0, 1.0]).unwrap();
        assert_eq!(c.r, vec![0.5, 0.5]);
        assert_eq!(c.z, vec![0.5, 0.5]);
        assert_eq!(c.h_tilde, vec![0.0, 0.0]);
        assert_eq!(h, vec![0.5, 0.5]);
    }

    #[test]
    fn scalar_cell_step() {
        let p = scalar_cell(1.0, 0.0, 1.0);
        let (h, c) = gru_step_forward(&p, &[1.0], &[0.0]).unwrap();
        // h = z * tanh(1) = sigmoid(1) * tanh(1) = 0.556770 (to 6 digits)
        assert!((c.r[0] - 0.731059).abs() < 1e-6);
        assert!((c.z[0] - 0.731059).abs() < 1e-6);
        assert!((c.h_tilde[0] - 0.761594).abs() < 1e-6);
        assert!((h[0] - 0.556770).abs() < 1e-6);
        let independent = 1.0 / (1.0 + (-1.0f64).exp()) * 1.0f64.tanh();
        assert!((h[0] - independent).abs() < 1e-15);
    }

    #[test]
    fn saturated_update_gate_passes_candidate() {
        let mut p = scalar_cell(0.0, 0.0, 0.0);
        p.b_z[0] = 60.0;
        p.w_xh = Matrix::from_vec(1, 1, vec![0.8]).unwrap();
        let (h, c) = gru_step_forward(&p, &[1.0], &[0.0]).unwrap();
        assert!((h[0] - c.h_tilde[0]).abs() < 1e-15);
    }

    #[test]
    fn step_shape_errors() {
        let p = GruParams::zeros(3, 2, true);
        assert!(matches!(gru_step_forward(&p, &[0.0; 2], &[0.0; 2]), Err(Error::Shape { .. })));
        assert!(matches!(gru_step_forward(&p, &[0.0; 3], &[0.0; 3]), Err(Error::Shape { .. })));
        let (_, c) = gru_step_forward(&p, &[0.0; 3], &[0.0; 2]).unwrap();
        assert!(gru_step_backward(&p, &c, &[0.0; 3]).is_err());
    }

    #[test]
    fn backward_of_zero_upstream_is_zero() {
        let mut rng = Rng::new(1);
        let p = random_cell(&mut rng, 3, 3);
        let x = rand_vec(&mut rng, 3);
        let hp = rand_vec(&mut rng, 3);
        let (_, c) = gru_step_forward(&p, &x, &hp).unwrap();
        let (dx, dhp, g) = gru_step_backward(&p, &c, &[0.0; 3]).unwrap();
        assert!(dx.iter().chain(&dhp).chain(&flat(&g)).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_cell_backward_halves() {
        let p = GruParams::zeros(2, 3, true);
        let (_, c) = gru_step_forward(&p, &[0.4, -0.1], &[0.2, -0.7, 1.0]).unwrap();
        let dh = [1.0, -2.0, 0.25];
        let (_, dhp, _) = gru_step_backward(&p, &c, &dh).unwrap();
        for (a, b) in dhp.iter().zip(dh) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn step_backward_matches_finite_differences() {
        let mut rng = Rng::new(7);
        let p = random_cell(&mut rng, 3, 3);
        let x = rand_vec(&mut rng, 3);
        let hp = rand_vec(&mut rng, 3);
        let w = rand_vec(&mut rng, 3);
        // scalar objective: w . h
        let (_, c) = gru_step_forward(&p, &x, &hp).unwrap();
        let (dx, dhp, g) = gru_step_backward(&p, &c, &w).unwrap();

        let base = flat(&p);
        let fd = finite_diff_grad(
            |v| {
                let mut q = p.clone();
                assign(&mut q, v);
                let (h, _) = gru_step_forward(&q, &x, &hp).unwrap();
                h.iter().zip(&w).map(|(a, b)| a * b).sum()
            },
            &base,
            1e-5,
        )
        .unwrap();
        for (a, b) in flat(&g).iter().zip(&fd) {
            assert!(rel_err(*a, *b) < 1e-6, "{a} vs {b}");
        }

        let fdx = finite_diff_grad(
            |v| {
                let (h, _) = gru_step_forward(&p, v, &hp).unwrap();
                h.iter().zip(&w).map(|(a, b)| a * b).sum()
            },
            &x,
            1e-5,
        )
        .unwrap();
        for (a, b) in dx.iter().zip(&fdx) {
            assert!(rel_err(*a, *b) < 1e-6);
        }
        let fdh = finite_diff_grad(
            |v| {
                let (h, _) = gru_step_forward(&p, &x, v).unwrap();
                h.iter().zip(&w).map(|(a, b)| a * b).sum()
            },
            &hp,
            1e-5,
        )
        .unwrap();
        for (a, b) in dhp.iter().zip(&fdh) {
            assert!(rel_err(*a, *b) < 1e-6);
        }
    }

    #[test]
    fn sequence_examples() {
        let mut rng = Rng::new(2);
        let p = random_cell(&mut rng, 2, 3);
        let x = rand_vec(&mut rng, 2);
        let h0 = rand_vec(&mut rng, 3);
        let (hs, _) = gru_sequence_forward(&p, &[x.clone()], &h0).unwrap();
        let (h, _) = gru_step_forward(&p, &x, &h0).unwrap();
        assert_eq!(hs, vec![h]);

        let z = GruParams::zeros(1, 1, true);
        let (hs, _) = gru_sequence_forward(&z, &[vec![3.0], vec![-1.0], vec![0.5]], &[1.0]).unwrap();
        assert_eq!(hs, vec![vec![0.5], vec![0.25], vec![0.125]]);

        assert!(gru_sequence_forward(&z, &[], &[0.0]).is_err());
    }

    #[test]
    fn sequence_matches_scalar_loop() {
        let mut rng = Rng::new(4);
        let p = random_cell(&mut rng, 3, 2);
        let xs: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, 3)).collect();
        let (hs, _) = gru_sequence_forward(&p, &xs, &[0.0, 0.0]).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = [0.0f64; 2];
        for (t, x) in xs.iter().enumerate() {
            let mut next = [0.0; 2];
            let mut r = [0.0; 2];
            let mut z = [0.0; 2];
            for i in 0..2 {
                let mut ar = p.b_r[i];
                let mut az = p.b_z[i];
                for k in 0..3 {
                    ar += p.w_xr.get(i, k) * x[k];
                    az += p.w_xz.get(i, k) * x[k];
                }
                for k in 0..2 {
                    ar += p.w_hr.get(i, k) * h[k];
                    az += p.w_hz.get(i, k) * h[k];
                }
                r[i] = sig(ar);
                z[i] = sig(az);
            }
            for i in 0..2 {
                let mut ah = p.b_h[i];
                for k in 0..3 {
                    ah += p.w_xh.get(i, k) * x[k];
                }
                for k in 0..2 {
                    ah += p.w_hh.get(i, k) * r[k] * h[k];
                }
                next[i] = (1.0 - z[i]) * h[i] + z[i] * ah.tanh();
            }
            h = next;
            for i in 0..2 {
                assert!((hs[t][i] - h[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for seed in 0..4u64 {
            let mut rng = Rng::new(100 + seed);
            let (i, hd, m) = (1 + rng.below(5), 1 + rng.below(8), 1 + rng.below(6));
            let p = random_cell(&mut rng, i, hd);
            let lin = LinearParams::init(&mut rng, hd).unwrap();
            let xs: Vec<Vec<f64>> = (0..m).map(|_| rand_vec(&mut rng, i)).collect();
            let y = (seed % 2) as f64;
            let h0 = vec![0.0; hd];

            let loss = |q: &GruParams| {
                let (hs, _) = gru_sequence_forward(q, &xs, &h0).unwrap();
                let prob = sigmoid(linear_forward(&lin, &hs[m - 1]).unwrap());
                bce_loss(prob, y).unwrap()
            };

            let (hs, caches) = gru_sequence_forward(&p, &xs, &h0).unwrap();
            let prob = sigmoid(linear_forward(&lin, &hs[m - 1]).unwrap());
            let (dh_last, _) = linear_backward(&lin, &hs[m - 1], bce_logit_grad(prob, y).unwrap()).unwrap();
            let mut dhs = vec![vec![0.0; hd]; m];
            dhs[m - 1] = dh_last;
            let mut g = p.zeros_like();
            sequence_backward_acc(&p, &caches, &dhs, &mut g, false);

            let fd = finite_diff_grad(
                |v| {
                    let mut q = p.clone();
                    assign(&mut q, v);
                    loss(&q)
                },
                &flat(&p),
                1e-5,
            )
            .unwrap();
            // f64 roundoff in the loss is ~1e-11 / h; recheck disagreeing
            // coordinates with a double-double loss.
            let theta = flat(&p);
            let xs_dd: Vec<Vec<Dd>> = xs.iter().map(|x| x.iter().map(|&v| Dd::from_f64(v)).collect()).collect();
            let loss_dd = |q: &[Dd]| {
                let hs = reference_gru(q, i, hd, true, &xs_dd);
                let mut logit = Dd::from_f64(lin.b);
                for (w, h) in lin.w.data().iter().zip(&hs[m - 1]) {
                    logit = logit + Dd::from_f64(*w) * *h;
                }
                bce_from_logit(logit, y)
            };
            for (k, (a, b)) in flat(&g).iter().zip(&fd).enumerate() {
                let mut b = *b;
                if rel_err(*a, b) > 1e-6 {
                    let mut q: Vec<Dd> = theta.iter().map(|&v| Dd::from_f64(v)).collect();
                    q[k] = Dd::from_f64(theta[k]) + Dd::from_f64(1e-5);
                    let plus = loss_dd(&q);
                    q[k] = Dd::from_f64(theta[k]) - Dd::from_f64(1e-5);
                    let minus = loss_dd(&q);
                    b = ((plus - minus) / Dd::from_f64(2e-5)).to_f64();
                }
                assert!(rel_err(*a, b) < 1e-4, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn cache_replay_is_bitwise() {
        let mut rng = Rng::new(12);
        let p = random_cell(&mut rng, 4, 3);
        let xs: Vec<Vec<f64>> = (0..5).map(|_| rand_vec(&mut rng, 4)).collect();
        let (_, caches) = gru_sequence_forward(&p, &xs, &[0.0; 3]).unwrap();
        for c in &caches {
            let (_, again) = gru_step_forward(&p, &c.x, &c.h_prev).unwrap();
            assert_eq!(&again, c);
        }
    }

    #[test]
    fn linear_examples() {
        let z = LinearParams::zeros(3);
        let logit = linear_forward(&z, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(logit, 0.0);
        assert_eq!(sigmoid(logit), 0.5);

        let p = LinearParams {
            w: Matrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap(),
            b: 0.5,
        };
        assert_eq!(linear_forward(&p, &[2.0, 1.0]).unwrap(), 1.5);
        assert!(linear_forward(&p, &[2.0]).is_err());

        let x = [0.3, -0.9];
        let (dx, g) = linear_backward(&p, &x, 1.0).unwrap();
        let mut vals = p.w.data().to_vec();
        vals.push(p.b);
        let fd = finite_diff_grad(
            |v| {
                let q = LinearParams {
                    w: Matrix::from_vec(1, 2, v[..2].to_vec()).unwrap(),
                    b: v[2],
                };
                linear_forward(&q, &x).unwrap()
            },
            &vals,
            1e-5,
        )
        .unwrap();
        assert!((g.w.get(0, 0) - fd[0]).abs() < 1e-8);
        assert!((g.w.get(0, 1) - fd[1]).abs() < 1e-8);
        assert!((g.b - fd[2]).abs() < 1e-8);
        assert_eq!(dx, vec![1.0, -1.0]);
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(0.5, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(1.0 - BCE_EPS, 1.0).unwrap() < 1e-11);
        assert!(bce_loss(1.0, 0.0).unwrap().is_finite());
        assert!((bce_logit_grad(0.8, 0.0).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(bce_loss(0.5, 0.5), Err(Error::InvalidLabel(_))));
        assert!(bce_logit_grad(0.5, 2.0).is_err());
    }

    #[test]
    fn bias_free_cell_excludes_biases() {
        let p = GruParams::init(&mut Rng::new(0), 4, 3, false).unwrap();
        assert_eq!(p.param_count(), 3 * 3 * (4 + 3));
        assert_eq!(flat(&p).len(), p.param_count());
        assert!(p.b_r.iter().chain(p.b_z.iter()).chain(p.b_h.iter()).all(|&b| b == 0.0));
    }

    proptest! {
        #[test]
        fn gates_and_state_stay_bounded(seed in any::<u64>(), scale in 0.1f64..20.0) {
            let mut rng = Rng::new(seed);
            let p = random_cell(&mut rng, 3, 4);
            let x: Vec<f64> = rand_vec(&mut rng, 3).iter().map(|v| v * scale).collect();
            let hp = rand_vec(&mut rng, 4);
            let (h, c) = gru_step_forward(&p, &x, &hp).unwrap();
            for i in 0..4 {
                prop_assert!(c.r[i] >= 0.0 && c.r[i] <= 1.0);
                prop_assert!(c.z[i] >= 0.0 && c.z[i] <= 1.0);
                prop_assert!(c.h_tilde[i] >= -1.0 && c.h_tilde[i] <= 1.0);
                prop_assert!(h[i].abs() <= 1.0);
            }
        }
    }
}
