//! Dense vector/matrix arithmetic, seeded randomness, and the similarity
//! primitives the rest of the crate is built on.
//!
//! Everything is 64-bit: the projection networks are small enough that
//! throughput is a non-issue, and double precision keeps the finite-difference
//! gradient checks sharp. Cosine similarity over unit vectors is a plain dot
//! product, clamped against the ~1e-16 overshoot that floating-point rounding
//! can introduce.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Norms below this are treated as a collapsed projection.
pub const NORM_EPSILON: f64 = 1e-12;

/// A dense column vector of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector {
            data: vec![0.0; dim],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Plain dot product; callers are responsible for matching dimensions.
    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: f64, other: &Vector) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.data {
            *a *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// A dense row-major matrix of `f64` values.
#[derive(Debug, Clone, PartialEq)]
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

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `y = M x` with `x.dim() == cols`.
    pub fn matvec(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.cols, x.dim());
        let xs = x.as_slice();
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(xs.iter()) {
                acc += w * v;
            }
            out.push(acc);
        }
        Vector::from_vec(out)
    }

    /// `x = Mᵀ y` with `y.dim() == rows`.
    pub fn matvec_transpose(&self, y: &Vector) -> Vector {
        debug_assert_eq!(self.rows, y.dim());
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let yr = y[r];
            for (o, w) in out.iter_mut().zip(row.iter()) {
                *o += yr * w;
            }
        }
        Vector::from_vec(out)
    }

    /// Rank-1 update `M += scale * u vᵀ` with `u.dim() == rows`, `v.dim() == cols`.
    pub fn add_outer_scaled(&mut self, scale: f64, u: &Vector, v: &Vector) {
        debug_assert_eq!(self.rows, u.dim());
        debug_assert_eq!(self.cols, v.dim());
        let vs = v.as_slice();
        for r in 0..self.rows {
            let s = scale * u[r];
            let row = self.row_mut(r);
            for (w, x) in row.iter_mut().zip(vs.iter()) {
                *w += s * x;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Returns `v / (‖v‖₂ + ε)` with ε = 1e-12.
///
/// Fails with [`Error::DegenerateVector`] when the norm itself is below the
/// guard, which signals a collapsed projection rather than a unit to rescue.
pub fn l2_normalize(v: &Vector) -> Result<Vector> {
    let norm = v.norm();
    if norm < NORM_EPSILON {
        return Err(Error::DegenerateVector {
            context: "l2_normalize",
            norm,
        });
    }
    let inv = 1.0 / (norm + NORM_EPSILON);
    let mut out = v.clone();
    out.scale(inv);
    Ok(out)
}

/// Cosine similarity of two ℓ2-normalized vectors: their dot product,
/// clamped to `[-1, 1]` against rounding overshoot.
pub fn cosine_sim(u: &Vector, v: &Vector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            context: "cosine_sim",
            left: u.dim(),
            right: v.dim(),
        });
    }
    Ok(u.dot(v).clamp(-1.0, 1.0))
}

/// Euclidean distance `‖u − v‖₂`.
pub fn euclidean_dist(u: &Vector, v: &Vector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            context: "euclidean_dist",
            left: u.dim(),
            right: v.dim(),
        });
    }
    let sum: f64 = u
        .iter()
        .zip(v.iter())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// Seeded, splittable pseudo-random generator.
///
/// Backed by ChaCha8 in counter mode: a fixed seed plus a fixed call sequence
/// always reproduces the same stream, and [`Rng::substream`] derives
/// independent streams from one master seed so shuffling, dropout masks and
/// negative sampling never interleave. Instances are single-owner; parallel
/// code derives one generator per worker instead of sharing.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derives an independent generator for the same master seed.
    ///
    /// `stream` 0 is the master's own stream; callers should use distinct
    /// non-zero ids. The derived generator starts at position zero no matter
    /// how far the parent has advanced.
    pub fn substream(&self, stream: u64) -> Self {
        let mut inner = self.inner.clone();
        inner.set_stream(stream);
        inner.set_word_pos(0);
        Rng { inner }
    }

    /// Uniform draw from `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.inner.gen_range(0..n)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal draw via Box–Muller.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps ln finite
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_normalize_three_four() {
        let v = Vector::from_vec(vec![3.0, 4.0]);
        let n = l2_normalize(&v).unwrap();
        assert!((n[0] - 0.6).abs() < 1e-12);
        assert!((n[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn l2_normalize_unit_input() {
        let v = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let n = l2_normalize(&v).unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-9);
        assert!((n[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn l2_normalize_zero_vector_errors() {
        let v = Vector::zeros(2);
        assert!(matches!(
            l2_normalize(&v),
            Err(Error::DegenerateVector { .. })
        ));
    }

    #[test]
    fn l2_normalize_idempotent() {
        let mut rng = Rng::from_seed(3);
        for _ in 0..50 {
            let v = Vector::from_vec((0..8).map(|_| rng.uniform(-5.0, 5.0)).collect());
            if v.norm() < 1e-6 {
                continue;
            }
            let once = l2_normalize(&v).unwrap();
            let twice = l2_normalize(&once).unwrap();
            for (a, b) in once.iter().zip(twice.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cosine_basic_cases() {
        let e1 = Vector::from_vec(vec![1.0, 0.0]);
        let e2 = Vector::from_vec(vec![0.0, 1.0]);
        let neg = Vector::from_vec(vec![-1.0, 0.0]);
        assert_eq!(cosine_sim(&e1, &e1).unwrap(), 1.0);
        assert_eq!(cosine_sim(&e1, &e2).unwrap(), 0.0);
        assert_eq!(cosine_sim(&e1, &neg).unwrap(), -1.0);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let u = Vector::zeros(2);
        let v = Vector::zeros(3);
        assert!(matches!(
            cosine_sim(&u, &v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_symmetry_exact() {
        let mut rng = Rng::from_seed(11);
        for _ in 0..100 {
            let u = l2_normalize(&Vector::from_vec(
                (0..6).map(|_| rng.standard_normal()).collect(),
            ))
            .unwrap();
            let v = l2_normalize(&Vector::from_vec(
                (0..6).map(|_| rng.standard_normal()).collect(),
            ))
            .unwrap();
            assert_eq!(cosine_sim(&u, &v).unwrap(), cosine_sim(&v, &u).unwrap());
        }
    }

    #[test]
    fn euclidean_cases() {
        let a = Vector::from_vec(vec![0.0, 0.0]);
        let b = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(euclidean_dist(&a, &a).unwrap(), 0.0);
        assert_eq!(euclidean_dist(&a, &b).unwrap(), 5.0);
        let x = Vector::from_vec(vec![1.0]);
        let y = Vector::from_vec(vec![4.0]);
        assert_eq!(euclidean_dist(&x, &y).unwrap(), 3.0);
    }

    #[test]
    fn euclidean_triangle_inequality() {
        let mut rng = Rng::from_seed(19);
        for _ in 0..200 {
            let draw = |rng: &mut Rng| {
                Vector::from_vec((0..5).map(|_| rng.uniform(-10.0, 10.0)).collect())
            };
            let a = draw(&mut rng);
            let b = draw(&mut rng);
            let c = draw(&mut rng);
            let ab = euclidean_dist(&a, &b).unwrap();
            let bc = euclidean_dist(&b, &c).unwrap();
            let ac = euclidean_dist(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-9);
        }
    }

    #[test]
    fn rng_same_seed_same_stream() {
        let mut a = Rng::from_seed(42);
        let mut b = Rng::from_seed(42);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rng_substreams_are_independent_and_reproducible() {
        let master = Rng::from_seed(7);
        let mut s1 = master.substream(1);
        let mut s2 = master.substream(2);
        let first_s1: Vec<u64> = (0..32).map(|_| s1.next_u64()).collect();
        let first_s2: Vec<u64> = (0..32).map(|_| s2.next_u64()).collect();
        assert_ne!(first_s1, first_s2);

        // Deriving again (even after the master advanced) replays the stream.
        let mut master2 = Rng::from_seed(7);
        let _ = master2.next_u64();
        let mut s1_again = master2.substream(1);
        let replay: Vec<u64> = (0..32).map(|_| s1_again.next_u64()).collect();
        assert_eq!(first_s1, replay);
    }

    #[test]
    fn matvec_and_transpose_agree_with_manual() {
        let m = Matrix::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
        let x = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let y = m.matvec(&x);
        assert_eq!(y.as_slice(), &[8.0, 26.0]);
        let yt = Vector::from_vec(vec![1.0, 1.0]);
        let xt = m.matvec_transpose(&yt);
        assert_eq!(xt.as_slice(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn outer_update_matches_manual() {
        let mut m = Matrix::zeros(2, 2);
        let u = Vector::from_vec(vec![1.0, 2.0]);
        let v = Vector::from_vec(vec![3.0, 4.0]);
        m.add_outer_scaled(0.5, &u, &v);
        assert_eq!(m.row(0), &[1.5, 2.0]);
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn vec3() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-100.0f64..100.0, 3)
        }

        proptest! {
            #[test]
            fn normalize_is_idempotent(data in vec3()) {
                let v = Vector::from_vec(data);
                prop_assume!(v.norm() >= 1e-6);
                let once = l2_normalize(&v).unwrap();
                prop_assert!((once.norm() - 1.0).abs() < 1e-9);
                let twice = l2_normalize(&once).unwrap();
                for (a, b) in once.iter().zip(twice.iter()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }

            #[test]
            fn cosine_is_symmetric_and_bounded(a in vec3(), b in vec3()) {
                let ua = Vector::from_vec(a);
                let ub = Vector::from_vec(b);
                prop_assume!(ua.norm() >= 1e-6 && ub.norm() >= 1e-6);
                let ua = l2_normalize(&ua).unwrap();
                let ub = l2_normalize(&ub).unwrap();
                let ab = cosine_sim(&ua, &ub).unwrap();
                prop_assert_eq!(ab, cosine_sim(&ub, &ua).unwrap());
                prop_assert!((-1.0..=1.0).contains(&ab));
            }

            #[test]
            fn distance_satisfies_triangle_inequality(a in vec3(), b in vec3(), c in vec3()) {
                let (a, b, c) = (Vector::from_vec(a), Vector::from_vec(b), Vector::from_vec(c));
                let ab = euclidean_dist(&a, &b).unwrap();
                let bc = euclidean_dist(&b, &c).unwrap();
                let ac = euclidean_dist(&a, &c).unwrap();
                prop_assert!(ac <= ab + bc + 1e-9);
            }
        }
    }
}
