//! Dense linear algebra, elementwise nonlinearities, Glorot initialisation,
//! a seeded PRNG and a central-difference gradient oracle.
//!
//! Everything is `f64`. The slice-level helpers (`gemv_into`, ...) are the hot
//! paths used by the GRU code; the `Matrix`/`Vector` methods wrap them with
//! shape checks.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense column vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(pub Vec<f64>);

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Vector(values.to_vec())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn sigmoid(&self) -> Vector {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Vector {
        self.map(f64::tanh)
    }

    pub fn hadamard(&self, other: &Vector) -> Result<Vector> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn scale(&self, k: f64) -> Vector {
        self.map(|x| k * x)
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::shape("dot", self.len(), other.len()));
        }
        Ok(dot(&self.0, &other.0))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    fn zip_with(&self, op: &'static str, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(Error::shape(op, self.len(), other.len()));
        }
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("matrix entry {bad}")));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::shape("Matrix::from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(Error::shape(
                "matvec",
                format!("matrix {}", self.shape_str()),
                format!("vector {}", v.len()),
            ));
        }
        let mut out = vec![0.0; self.rows];
        gemv_into(self, v, &mut out);
        Ok(Vector(out))
    }

    /// `self^T * v`.
    pub fn matvec_t(&self, v: &Vector) -> Result<Vector> {
        if self.rows != v.len() {
            return Err(Error::shape(
                "matvec_t",
                format!("matrix {}", self.shape_str()),
                format!("vector {}", v.len()),
            ));
        }
        let mut out = vec![0.0; self.cols];
        gemv_t_acc(self, v, &mut out);
        Ok(Vector(out))
    }
}

/// `out = m * x`; shapes are the caller's responsibility.
#[inline]
pub(crate) fn gemv_into(m: &Matrix, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.cols, x.len());
    debug_assert_eq!(m.rows, out.len());
    for (o, row) in out.iter_mut().zip(m.data.chunks_exact(m.cols.max(1))) {
        *o = dot(row, x);
    }
}

/// `out += m * x`.
#[inline]
pub(crate) fn gemv_acc(m: &Matrix, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.cols, x.len());
    for (o, row) in out.iter_mut().zip(m.data.chunks_exact(m.cols.max(1))) {
        *o += dot(row, x);
    }
}

/// `out += m^T * y`.
#[inline]
pub(crate) fn gemv_t_acc(m: &Matrix, y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.rows, y.len());
    debug_assert_eq!(m.cols, out.len());
    for (&yi, row) in y.iter().zip(m.data.chunks_exact(m.cols.max(1))) {
        if yi != 0.0 {
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * yi;
            }
        }
    }
}

/// `m += y x^T`.
#[inline]
pub(crate) fn outer_acc(m: &mut Matrix, y: &[f64], x: &[f64]) {
    debug_assert_eq!(m.rows, y.len());
    debug_assert_eq!(m.cols, x.len());
    let cols = m.cols.max(1);
    for (&yi, row) in y.iter().zip(m.data.chunks_exact_mut(cols)) {
        if yi != 0.0 {
            for (w, &xj) in row.iter_mut().zip(x) {
                *w += yi * xj;
            }
        }
    }
}

/// Eight independent partial sums so the loop vectorises; the summation
/// order is fixed, so results stay bitwise reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Matrix with entries drawn uniformly from the Glorot interval.
pub fn init_uniform(rng: &mut Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Result<Matrix> {
    if rows == 0 || cols == 0 || fan_in + fan_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "init_uniform needs positive dimensions, got {rows}x{cols} (fan {fan_in}/{fan_out})"
        )));
    }
    let bound = glorot_bound(fan_in, fan_out);
    let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Ok(Matrix { rows, cols, data })
}

/// Central-difference gradient of `f` at `params`.
pub fn finite_diff_grad<F>(mut f: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let plus = f(&p);
        p[i] = orig - h;
        let minus = f(&p);
        p[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// xoshiro256** seeded through splitmix64.
///
/// Identical seeds and call sequences give identical streams on every
/// platform. Not `Sync`-shared: use [`Rng::fork`] for independent streams.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    s: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Rng { seed, s }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream keyed by `stream`; does not advance `self`.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut sm = self.seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
        Rng::new(splitmix64(&mut sm))
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below(0)");
        // Lemire's multiply-shift with rejection.
        let n = n as u64;
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (n as u128);
            let low = m as u64;
            if low >= n || low >= n.wrapping_neg() % n {
                return (m >> 64) as usize;
            }
        }
    }

    /// Standard normal via Box-Muller (one draw per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::numerics::Rng;

    #[test]
    fn matvec_examples() {
        let id = Matrix::identity(2);
        assert_eq!(id.matvec(&Vector(vec![3.0, -1.0])).unwrap().0, vec![3.0, -1.0]);

        let z = Matrix::zeros(2, 3);
        assert_eq!(z.matvec(&Vector(vec![1.0, 2.0, 3.0])).unwrap().0, vec![0.0, 0.0]);

        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(m.matvec(&Vector(vec![1.0, 1.0])).unwrap().0, vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let m = Matrix::zeros(2, 3);
        let err = m.matvec(&Vector(vec![1.0, 2.0])).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("vector 2"), "{err}");
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(Vector(vec![0.0]).sigmoid().0, vec![0.5]);
        assert_eq!(Vector(vec![0.0]).tanh().0, vec![0.0]);
        assert!((sigmoid(1.0) - 0.7310585786).abs() < 1e-10);
        assert!(Vector(vec![1.0]).add(&Vector(vec![1.0, 2.0])).is_err());
        assert!(Vector(vec![1.0]).hadamard(&Vector(vec![])).is_err());
        let h = Vector(vec![2.0, 3.0]).hadamard(&Vector(vec![4.0, -1.0])).unwrap();
        assert_eq!(h.0, vec![8.0, -3.0]);
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = Rng::new(3);
        let m = init_uniform(&mut rng, 10, 10, 3, 3).unwrap();
        assert!(m.data().iter().all(|x| x.abs() <= 1.0));
        let m = init_uniform(&mut rng, 10, 10, 6, 6).unwrap();
        assert!(m.data().iter().all(|x| x.abs() <= 0.5f64.sqrt()));
        assert!(init_uniform(&mut rng, 0, 3, 1, 1).is_err());
    }

    #[test]
    fn init_is_reproducible() {
        let a = init_uniform(&mut Rng::new(11), 4, 5, 5, 4).unwrap();
        let b = init_uniform(&mut Rng::new(11), 4, 5, 5, 4).unwrap();
        let bits = |m: &Matrix| m.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|p| p[0] * p[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);

        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-10));

        // 1-d logistic unit: loss = BCE(sigmoid(w * x), y), analytic dL/dw = (sigmoid(w x) - y) x
        let (x, y) = (1.7, 1.0);
        let loss = |p: &[f64]| {
            let q = sigmoid(p[0] * x);
            -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
        };
        let g = finite_diff_grad(loss, &[0.0], 1e-5).unwrap();
        let analytic = (sigmoid(0.0) - y) * x;
        assert!((g[0] - analytic).abs() < 1e-6);
    }

    #[test]
    fn finite_diff_rejects_bad_inputs() {
        assert!(finite_diff_grad(|p| p[0], &[1.0], 0.0).is_err());
        assert!(matches!(
            finite_diff_grad(|p| p[0].ln(), &[0.0], 1e-3),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rng_streams() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let base = Rng::new(42);
        assert_ne!(base.fork(1).next_u64(), base.fork(2).next_u64());
        let mut r = Rng::new(5);
        for _ in 0..1000 {
            let k = r.below(7);
            assert!(k < 7);
            let u = r.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments() {
        let mut r = Rng::new(9);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    proptest! {
        #[test]
        fn matvec_is_linear(
            seed in any::<u64>(),
            a in -1.0f64..1.0,
            b in -1.0f64..1.0,
        ) {
            let mut rng = Rng::new(seed);
            let (r, c) = (1 + rng.below(6), 1 + rng.below(6));
            let m = Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
            let u = Vector((0..c).map(|_| rng.uniform(-1.0, 1.0)).collect());
            let v = Vector((0..c).map(|_| rng.uniform(-1.0, 1.0)).collect());
            let combo = u.scale(a).add(&v.scale(b)).unwrap();
            let lhs = m.matvec(&combo).unwrap();
            let rhs = m.matvec(&u).unwrap().scale(a).add(&m.matvec(&v).unwrap().scale(b)).unwrap();
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn sigmoid_is_symmetric(x in -50.0f64..50.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
