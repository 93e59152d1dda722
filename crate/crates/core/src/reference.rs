//! Loop-by-loop forward pass, generic over the scalar type.
//!
//! Shares no code with [`crate::model`] beyond the parameter layout. With
//! [`Dd`] (double-double, about 32 significant digits) it gives loss values
//! precise enough that finite differences of tiny gradients are not drowned
//! in f64 roundoff.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::features::ModelInput;
use crate::model::{ModelKind, ModelSpec};

pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn sigmoid(self) -> Self {
        if self.to_f64() >= 0.0 {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    fn tanh(self) -> Self {
        let neg = self.to_f64() < 0.0;
        let a = if neg { -self } else { self };
        let e = (-(a + a)).exp();
        let t = (Self::one() - e) / (Self::one() + e);
        if neg {
            -t
        } else {
            t
        }
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sigmoid(self) -> Self {
        crate::numerics::sigmoid(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Dd { hi, lo }
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    /// Exact multiplication by a power of two.
    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Dd::new(self.hi * s, self.lo * s)
    }
}

const LN2: Dd = Dd::new(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::norm(s, e + f)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd::new(-self.hi, -self.lo)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from_f64(q2);
        let q3 = r.hi / o.hi;
        Dd::norm(q1, q2) + Dd::from_f64(q3)
    }
}

impl Real for Dd {
    fn from_f64(x: f64) -> Self {
        Dd::new(x, 0.0)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Dd::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::zero();
        }
        // x = k ln2 + r, |r| <= ln2 / 2; expm1(r / 1024) by Taylor series,
        // then undo the scaling with expm1(2y) = 2 expm1(y) + expm1(y)^2.
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::from_f64(k)).ldexp(-10);
        let mut term = r;
        let mut s = r;
        for n in 2..=14 {
            term = term * r / Dd::from_f64(n as f64);
            s = s + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..10 {
            s = s.ldexp(1) + s * s;
        }
        (s + Dd::one()).ldexp(k as i32)
    }

    fn ln(self) -> Self {
        // Newton on exp(y) = x.
        let mut y = Dd::from_f64(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::one();
        }
        y
    }
}

/// Sequential reader over a flat parameter vector.
struct Cursor<'a, T> {
    p: &'a [T],
    off: usize,
}

impl<'a, T> Cursor<'a, T> {
    fn take(&mut self, n: usize) -> &'a [T] {
        let s = &self.p[self.off..self.off + n];
        self.off += n;
        s
    }
}

struct Cell<'a, T> {
    h: usize,
    w: [&'a [T]; 6],
    b: Option<[&'a [T]; 3]>,
}

impl<'a, T: Real> Cell<'a, T> {
    fn read(c: &mut Cursor<'a, T>, input: usize, h: usize, bias: bool) -> Self {
        let w = [
            c.take(h * input),
            c.take(h * input),
            c.take(h * input),
            c.take(h * h),
            c.take(h * h),
            c.take(h * h),
        ];
        let b = bias.then(|| [c.take(h), c.take(h), c.take(h)]);
        Cell { h, w, b }
    }

    fn affine(&self, gate: usize, i: usize, x: &[T], hv: &[T]) -> T {
        let wx = self.w[gate];
        let wh = self.w[gate + 3];
        let n = x.len();
        let mut a = match self.b {
            Some(b) => b[gate][i],
            None => T::zero(),
        };
        for j in 0..n {
            a = a + wx[i * n + j] * x[j];
        }
        for k in 0..self.h {
            a = a + wh[i * self.h + k] * hv[k];
        }
        a
    }

    /// Hidden state at every step from a zero start.
    fn run(&self, xs: &[Vec<T>]) -> Vec<Vec<T>> {
        let mut h = vec![T::zero(); self.h];
        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            let r: Vec<T> = (0..self.h).map(|i| self.affine(0, i, x, &h).sigmoid()).collect();
            let z: Vec<T> = (0..self.h).map(|i| self.affine(1, i, x, &h).sigmoid()).collect();
            let rh: Vec<T> = (0..self.h).map(|k| r[k] * h[k]).collect();
            let next = (0..self.h)
                .map(|i| {
                    let cand = self.affine(2, i, x, &rh).tanh();
                    (T::one() - z[i]) * h[i] + z[i] * cand
                })
                .collect();
            h = next;
            out.push(h.clone());
        }
        out
    }
}

/// Hidden states of one GRU whose tensors are laid out in
/// [`crate::gru::GruParams::for_each_tensor`] order.
pub fn reference_gru<T: Real>(flat: &[T], input_dim: usize, hidden_dim: usize, use_bias: bool, xs: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut cur = Cursor { p: flat, off: 0 };
    Cell::read(&mut cur, input_dim, hidden_dim, use_bias).run(xs)
}

fn concat<T: Copy>(parts: &[&[T]]) -> Vec<T> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Classifier logit for `input` under the parameters `flat`, laid out as
/// [`crate::model::ModelParams::flatten`].
pub fn reference_logit<T: Real>(spec: &ModelSpec, flat: &[T], input: &ModelInput) -> Result<T> {
    if flat.len() != spec.param_count() {
        return Err(Error::shape("reference_logit", spec.param_count(), flat.len()));
    }
    let m = spec.obs_len;
    let feats: Vec<Vec<Vec<T>>> = spec
        .fusion_order
        .iter()
        .map(|k| {
            let seq = input.get(k).ok_or(Error::MissingModality(*k))?;
            if seq.len() != m || seq.iter().any(|v| v.len() != k.dim()) {
                return Err(Error::shape("reference_logit", format!("{m}x{}", k.dim()), k));
            }
            Ok(seq.iter().map(|v| v.iter().map(|&x| T::from_f64(x)).collect()).collect())
        })
        .collect::<Result<_>>()?;

    let hd = spec.hidden_dim;
    let mut cur = Cursor { p: flat, off: 0 };
    let streams: Vec<Cell<T>> = spec
        .stream_input_dims()
        .into_iter()
        .map(|d| Cell::read(&mut cur, d, hd, spec.use_bias))
        .collect();
    let levels: Vec<Cell<T>> = spec
        .level_input_dims()
        .into_iter()
        .map(|d| Cell::read(&mut cur, d, hd, spec.use_bias))
        .collect();
    let head_w = cur.take(spec.classifier_input_dim());
    let head_b = cur.take(1)[0];

    let step = |t: usize| concat(&feats.iter().map(|f| f[t].as_slice()).collect::<Vec<_>>());
    let head: Vec<T> = match spec.kind {
        ModelKind::Static => step(m - 1),
        ModelKind::SingleGru | ModelKind::StackedGru => {
            let mut xs: Vec<Vec<T>> = (0..m).map(step).collect();
            for cell in &levels {
                xs = cell.run(&xs);
            }
            xs[m - 1].clone()
        }
        ModelKind::StackedFusionGru => {
            let mut hs = levels[0].run(&feats[0]);
            for (cell, f) in levels.iter().zip(&feats).skip(1) {
                let xs: Vec<Vec<T>> = (0..m).map(|t| concat(&[&hs[t], &f[t]])).collect();
                hs = cell.run(&xs);
            }
            hs[m - 1].clone()
        }
        ModelKind::MultiStreamGru | ModelKind::HierarchicalGru => {
            let outs: Vec<Vec<Vec<T>>> = streams.iter().zip(&feats).map(|(c, f)| c.run(f)).collect();
            let joined = |t: usize| concat(&outs.iter().map(|o| o[t].as_slice()).collect::<Vec<_>>());
            if spec.kind == ModelKind::MultiStreamGru {
                joined(m - 1)
            } else {
                let xs: Vec<Vec<T>> = (0..m).map(joined).collect();
                levels[0].run(&xs)[m - 1].clone()
            }
        }
    };
    let mut logit = head_b;
    for (w, x) in head_w.iter().zip(&head) {
        logit = logit + *w * *x;
    }
    Ok(logit)
}

/// `BCE(sigmoid(logit), y)` without forming the probability.
pub fn bce_from_logit<T: Real>(logit: T, y: f64) -> T {
    let z = logit.to_f64();
    let abs = if z < 0.0 { -logit } else { logit };
    let pos = if z > 0.0 { logit } else { T::zero() };
    pos + (T::one() + (-abs).exp()).ln() - logit * T::from_f64(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::random_input;
    use crate::model::Model;
    use crate::numerics::Rng;

    fn close(a: Dd, b: f64, tol: f64) -> bool {
        (a.to_f64() - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn dd_arithmetic_beats_f64() {
        let third = Dd::one() / Dd::from_f64(3.0);
        let back = third * Dd::from_f64(3.0) - Dd::one();
        assert!(back.to_f64().abs() < 1e-31);
        // 1 + 2^-80 survives in double-double.
        let tiny = Dd::from_f64(2f64.powi(-80));
        assert_eq!(((Dd::one() + tiny) - Dd::one()).to_f64(), 2f64.powi(-80));
    }

    #[test]
    fn dd_transcendentals_match_libm() {
        for &x in &[-30.0, -2.5, -1e-3, 0.0, 1e-9, 0.7, 1.0, 5.0, 40.0] {
            let d = Dd::from_f64(x);
            assert!(close(d.exp(), x.exp(), 1e-15), "exp {x}");
            assert!(close(Real::tanh(d), x.tanh(), 1e-15) || x == 0.0, "tanh {x}");
            assert!(close(d.sigmoid(), crate::numerics::sigmoid(x), 1e-15), "sigmoid {x}");
            if x > 0.0 {
                assert!(close(d.ln(), x.ln(), 1e-15) || x == 1.0, "ln {x}");
            }
        }
        // exp(ln 2) = 2 to double-double accuracy.
        let two = Dd::from_f64(2.0).ln().exp();
        assert!((two - Dd::from_f64(2.0)).to_f64().abs() < 1e-30);
        let e = Dd::one().exp();
        assert!((e.hi - std::f64::consts::E).abs() <= f64::EPSILON * 3.0);
    }

    #[test]
    fn matches_production_forward_for_every_kind() {
        for (s, kind) in ModelKind::ALL.into_iter().enumerate() {
            let spec = ModelSpec {
                hidden_dim: 3,
                obs_len: 3,
                ..ModelSpec::with_defaults(kind)
            };
            let mut rng = Rng::new(s as u64);
            let model = Model::init(spec.clone(), &mut rng).unwrap();
            let x = random_input(&spec, &mut rng);
            let flat = model.params.flatten();
            let want = model.forward(&x).unwrap().logit;
            let got: f64 = reference_logit(&spec, &flat, &x).unwrap();
            assert!((got - want).abs() < 1e-12, "{kind}: {got} vs {want}");
            let dd_flat: Vec<Dd> = flat.iter().map(|&v| Dd::from_f64(v)).collect();
            let got_dd = reference_logit(&spec, &dd_flat, &x).unwrap();
            assert!((got_dd.to_f64() - want).abs() < 1e-12, "{kind} dd");
        }
    }

    #[test]
    fn bce_from_logit_agrees() {
        for &(z, y) in &[(0.3, 1.0), (-2.0, 0.0), (5.0, 0.0), (-7.0, 1.0)] {
            let p = 1.0 / (1.0 + f64::exp(-z));
            let direct = -(y * f64::ln(p) + (1.0 - y) * f64::ln(1.0 - p));
            assert!((bce_from_logit(z, y) - direct).abs() < 1e-12);
            assert!((bce_from_logit(Dd::from_f64(z), y).to_f64() - direct).abs() < 1e-12);
        }
    }
}
