//! Small dense complex linear algebra (q ≤ 8).
//!
//! Everything here works on row-major `q×q` matrices of [`C64`]. The
//! dimensions involved are tiny, so the routines favour clarity and
//! robustness over blocking or vectorisation.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::LinalgError;

pub type C64 = Complex64;

/// Largest supported dimension.
pub const MAX_DIM: usize = 8;

const JACOBI_MAX_SWEEPS: usize = 64;
const QR_ITERS_PER_EIGENVALUE: usize = 60;

/// Dense square complex matrix with `1 ≤ dim ≤ 8` and finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim).map(|j| format!("{:.6}", self[(i, j)])).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, validating dimension and finiteness.
    pub fn from_row_major(dim: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        check_dim(dim)?;
        if data.len() != dim * dim {
            return Err(LinalgError::Shape { expected: dim * dim, got: data.len() });
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LinalgError::NonFinite { row: pos / dim, col: pos % dim });
        }
        Ok(Self { dim, data })
    }

    /// Real matrix from nested rows.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(LinalgError::Shape { expected: dim, got: row.len() });
            }
            data.extend(row.iter().map(|&x| C64::new(x, 0.0)));
        }
        Self::from_row_major(dim, data)
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Self { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diagonal(&d)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    /// `(A + A*)/2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub fn mul_vec_into(&self, v: &[C64], out: &mut [C64]) {
        let n = self.dim;
        debug_assert_eq!(v.len(), n);
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let row = &self.data[i * n..(i + 1) * n];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Spectral norm, the largest singular value.
    pub fn operator_norm(&self) -> f64 {
        let gram = &self.adjoint() * self;
        let eig = hermitian_eigenvalues(&gram);
        eig.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    /// 2-norm condition number from the extreme singular values.
    pub fn condition_number(&self) -> f64 {
        let gram = &self.adjoint() * self;
        let eig = hermitian_eigenvalues(&gram);
        let hi = eig.last().copied().unwrap_or(0.0).max(0.0);
        let lo = eig.first().copied().unwrap_or(0.0).max(0.0);
        if lo <= 0.0 {
            return f64::INFINITY;
        }
        (hi / lo).sqrt()
    }

    /// `AB − BA`.
    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }
}

fn check_dim(dim: usize) -> Result<(), LinalgError> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(LinalgError::Dimension(dim))
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let n = self.dim;
        assert_eq!(n, rhs.dim);
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale(-1.0)
    }
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian product `⟨a, b⟩ = Σ a_i conj(b_i)`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Eigenvalues of the Hermitian matrix `h`, ascending.
///
/// Cyclic complex Jacobi: each `(p, q)` rotation first removes the phase
/// of `h[p][q]` and then applies the classical real rotation. Only the
/// Hermitian part of the input is read (the upper triangle is trusted).
pub fn hermitian_eigenvalues(h: &ComplexMatrix) -> Vec<f64> {
    let n = h.dim();
    let mut a = h.clone();
    // Enforce exact Hermitian symmetry so the real-diagonal bookkeeping holds.
    for i in 0..n {
        a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            a[(j, i)] = a[(i, j)].conj();
        }
    }
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return vec![0.0; n];
    }
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-17 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                jacobi_rotate(&mut a, p, q);
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

fn jacobi_rotate(a: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let g = apq.norm();
    if g == 0.0 {
        return;
    }
    let phase = apq / g;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * g);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.dim();
    // U = [[c, s], [-s conj(phase), c conj(phase)]] on the (p, q) plane; A ← U* A U.
    let pc = phase.conj();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c - akq * s * pc;
        a[(k, q)] = akp * s + akq * c * pc;
    }
    for j in 0..n {
        let apj = a[(p, j)];
        let aqj = a[(q, j)];
        a[(p, j)] = apj * c - aqj * s * phase;
        a[(q, j)] = apj * s + aqj * c * phase;
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
}

/// Eigenvalues of a general complex matrix via Hessenberg reduction and
/// shifted complex QR with Wilkinson shifts.
pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<C64>, LinalgError> {
    let n = a.dim();
    let mut h = a.clone();
    hessenberg_reduce(&mut h);
    let mut eig = Vec::with_capacity(n);
    let mut hi = n - 1;
    let mut iter_total = 0usize;
    let mut iter_here = 0usize;
    let max_total = QR_ITERS_PER_EIGENVALUE * n;
    while hi > 0 {
        // Locate the start of the active unreduced block.
        let mut l = hi;
        while l > 0 {
            let sub = h[(l, l - 1)].norm();
            let diag = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            let small = if diag == 0.0 { f64::MIN_POSITIVE } else { f64::EPSILON * diag };
            if sub <= small {
                h[(l, l - 1)] = C64::new(0.0, 0.0);
                break;
            }
            l -= 1;
        }
        if l == hi {
            eig.push(h[(hi, hi)]);
            hi -= 1;
            iter_here = 0;
            continue;
        }
        iter_total += 1;
        iter_here += 1;
        if iter_total > max_total {
            return Err(LinalgError::NoConvergence { iterations: iter_total });
        }
        let shift = if iter_here % 11 == 10 {
            // Exceptional shift to break cycles.
            h[(hi, hi)] + C64::new(h[(hi, hi - 1)].norm() * 0.75, 0.0)
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };
        qr_step(&mut h, l, hi, shift);
    }
    eig.push(h[(0, 0)]);
    eig.reverse();
    Ok(eig)
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &ComplexMatrix) -> Result<f64, LinalgError> {
    Ok(eigenvalues(a)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

fn hessenberg_reduce(h: &mut ComplexMatrix) {
    let n = h.dim();
    for k in 0..n.saturating_sub(2) {
        let alpha_norm: f64 = ((k + 1)..n).map(|i| h[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { C64::new(1.0, 0.0) } else { x0 / x0.norm() };
        // v = x + phase·‖x‖·e1, reflect P = I − 2vv*/(v*v).
        let mut v: Vec<C64> = ((k + 1)..n).map(|i| h[(i, k)]).collect();
        v[0] += phase * alpha_norm;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // Left: rows k+1..n.
        for j in 0..n {
            let dot: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * h[(k + 1 + i, j)]).sum();
            let f = dot * (2.0 / vnorm2);
            for (i, vi) in v.iter().enumerate() {
                h[(k + 1 + i, j)] -= vi * f;
            }
        }
        // Right: columns k+1..n.
        for i in 0..n {
            let dot: C64 = v.iter().enumerate().map(|(j, vj)| h[(i, k + 1 + j)] * vj).sum();
            let f = dot * (2.0 / vnorm2);
            for (j, vj) in v.iter().enumerate() {
                h[(i, k + 1 + j)] -= f * vj.conj();
            }
        }
        for i in (k + 2)..n {
            h[(i, k)] = C64::new(0.0, 0.0);
        }
    }
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    let tr_half = (a + d) * 0.5;
    let disc = ((a - d) * 0.5 * ((a - d) * 0.5) + b * c).sqrt();
    let l1 = tr_half + disc;
    let l2 = tr_half - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

fn qr_step(h: &mut ComplexMatrix, lo: usize, hi: usize, shift: C64) {
    for i in lo..=hi {
        h[(i, i)] -= shift;
    }
    let mut rotations = Vec::with_capacity(hi - lo);
    for k in lo..hi {
        let x = h[(k, k)];
        let y = h[(k + 1, k)];
        let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
        let (c, s) = if r == 0.0 { (C64::new(1.0, 0.0), C64::new(0.0, 0.0)) } else { (x / r, y / r) };
        for j in k..=hi {
            let hk = h[(k, j)];
            let hk1 = h[(k + 1, j)];
            h[(k, j)] = c.conj() * hk + s.conj() * hk1;
            h[(k + 1, j)] = -s * hk + c * hk1;
        }
        rotations.push((c, s));
    }
    for (idx, (c, s)) in rotations.into_iter().enumerate() {
        let k = lo + idx;
        let top = (k + 2).min(hi);
        for i in lo..=top {
            let hk = h[(i, k)];
            let hk1 = h[(i, k + 1)];
            h[(i, k)] = hk * c + hk1 * s;
            h[(i, k + 1)] = -hk * s.conj() + hk1 * c.conj();
        }
    }
    for i in lo..=hi {
        h[(i, i)] += shift;
    }
}

/// LU factorisation with partial pivoting, used to apply inverses by solving.
#[derive(Clone, Debug)]
pub struct LuFactors {
    lu: ComplexMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn new(a: &ComplexMatrix) -> Result<Self, LinalgError> {
        let n = a.dim();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        for k in 0..n {
            let (piv, pval) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("non-empty pivot range");
            if pval == 0.0 || pval <= f64::EPSILON * 1e-3 * scale {
                return Err(LinalgError::Singular { column: k });
            }
            if piv != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = tmp;
                }
                perm.swap(k, piv);
            }
            let d = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                for j in (k + 1)..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.lu.dim();
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        b.copy_from_slice(&x);
    }
}
