//! Spectral and hypothesis analysis of the linear part `A(t)` of a field.
//!
//! `m(A)` and `k(A)` are the minimum and maximum of `Re⟨Az, z⟩` over the
//! unit sphere, i.e. the extreme eigenvalues of the Hermitian part of `A`.

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, LuFactors, C64};
use crate::ode::{self, OdeOptions};
use crate::quadrature::adaptive_simpson_vec;

/// Default absolute tolerance of the `m`/`k` quadratures.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
/// Transitions with a larger 2-norm condition number are refused.
pub const CONDITION_CAP: f64 = 1e12;
/// Margin below which a strict inequality that holds is reported as undecidable.
pub const DECIDABLE_MARGIN: f64 = 1e-8;
/// Relative tolerance of the commutation test on integrated matrices.
pub const COMMUTATOR_TOL: f64 = 1e-10;

const CACHE_KNOT_SPACING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermitianBounds {
    pub m: f64,
    pub k: f64,
}

/// Extreme eigenvalues of `(A + A*)/2`.
pub fn hermitian_bounds(a: &ComplexMatrix) -> Result<HermitianBounds> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let eig = linalg::hermitian_eigenvalues(&a.hermitian_part());
    Ok(HermitianBounds { m: eig[0], k: eig[eig.len() - 1] })
}

/// Largest real part over the spectrum of `A`.
pub fn spectral_abscissa(a: &ComplexMatrix) -> Result<f64> {
    Ok(linalg::spectral_abscissa(a)?)
}

type MatrixFn = dyn Fn(f64, usize) -> ComplexMatrix + Send + Sync;

struct PathInner {
    dim: usize,
    breakpoints: Vec<f64>,
    eval: Arc<MatrixFn>,
    quad_tol: f64,
    // cumulative (M, K) at knots j·CACHE_KNOT_SPACING
    cache: RwLock<Vec<[f64; 2]>>,
}

/// The curve `t ↦ A(t)` with cached cumulative integrals of `m(A)` and `k(A)`.
///
/// Cheap to clone; clones share the quadrature cache. The cache is
/// extended knot by knot in a fixed order, so returned values do not
/// depend on the order of queries.
#[derive(Clone)]
pub struct LinearPath {
    inner: Arc<PathInner>,
}

impl fmt::Debug for LinearPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearPath")
            .field("dim", &self.inner.dim)
            .field("breakpoints", &self.inner.breakpoints)
            .field("quad_tol", &self.inner.quad_tol)
            .finish()
    }
}

impl LinearPath {
    /// `eval(t, piece)` must return `A(t)` using the definition valid on
    /// piece `piece` (pieces are delimited by `breakpoints`).
    pub fn new<F>(dim: usize, breakpoints: Vec<f64>, quad_tol: f64, eval: F) -> Result<Self>
    where
        F: Fn(f64, usize) -> ComplexMatrix + Send + Sync + 'static,
    {
        Self::from_arc(dim, breakpoints, quad_tol, Arc::new(eval))
    }

    pub(crate) fn from_arc(dim: usize, breakpoints: Vec<f64>, quad_tol: f64, eval: Arc<MatrixFn>) -> Result<Self> {
        if !(1..=linalg::MAX_DIM).contains(&dim) {
            return Err(Error::Linalg(crate::error::LinalgError::Dimension(dim)));
        }
        if !(quad_tol > 0.0) {
            return Err(Error::InvalidInput(format!("quadrature tolerance must be positive, got {quad_tol}")));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) || breakpoints.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidInput("breakpoints must be positive, finite and strictly increasing".into()));
        }
        let a0 = eval(0.0, 0);
        if a0.dim() != dim {
            return Err(Error::InvalidInput(format!("A(0) has dimension {}, expected {dim}", a0.dim())));
        }
        Ok(Self {
            inner: Arc::new(PathInner {
                dim,
                breakpoints,
                eval,
                quad_tol,
                cache: RwLock::new(vec![[0.0, 0.0]]),
            }),
        })
    }

    /// Time-independent `A`.
    pub fn constant(a: ComplexMatrix, quad_tol: f64) -> Result<Self> {
        let dim = a.dim();
        Self::new(dim, Vec::new(), quad_tol, move |_, _| a.clone())
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.inner.breakpoints
    }

    pub fn quad_tol(&self) -> f64 {
        self.inner.quad_tol
    }

    /// `A(t)` (right-continuous at breakpoints).
    pub fn matrix_at(&self, t: f64) -> ComplexMatrix {
        (self.inner.eval)(t, ode::piece_index(&self.inner.breakpoints, t))
    }

    pub fn matrix_on_piece(&self, t: f64, piece: usize) -> ComplexMatrix {
        (self.inner.eval)(t, piece)
    }

    pub fn bounds_at(&self, t: f64) -> Result<HermitianBounds> {
        hermitian_bounds(&self.matrix_at(t)).map_err(|_| Error::NonFiniteField { t })
    }

    fn bounds_on_piece(&self, t: f64, piece: usize) -> [f64; 2] {
        match hermitian_bounds(&self.matrix_on_piece(t, piece)) {
            Ok(b) => [b.m, b.k],
            Err(_) => [f64::NAN, f64::NAN],
        }
    }

    /// `(∫_a^b m(A), ∫_a^b k(A))` without touching the cache.
    pub fn integrals_between(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        if !(a <= b) || a < 0.0 {
            return Err(Error::InvalidInput(format!("bad integration interval [{a}, {b}]")));
        }
        let mut acc = [0.0, 0.0];
        for (lo, hi, piece) in ode::segments(&self.inner.breakpoints, a, b) {
            let v = adaptive_simpson_vec(|t| self.bounds_on_piece(t, piece).to_vec(), lo, hi, self.inner.quad_tol);
            acc[0] += v[0];
            acc[1] += v[1];
        }
        if !(acc[0].is_finite() && acc[1].is_finite()) {
            return Err(Error::NonFiniteField { t: a });
        }
        Ok((acc[0], acc[1]))
    }

    fn cumulative(&self, t: f64) -> Result<[f64; 2]> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("time must be finite and non-negative, got {t}")));
        }
        let j = (t / CACHE_KNOT_SPACING).floor() as usize;
        let base = {
            let cache = self.inner.cache.read().expect("quadrature cache poisoned");
            cache.get(j).copied()
        };
        let base = match base {
            Some(b) => b,
            None => {
                let mut cache = self.inner.cache.write().expect("quadrature cache poisoned");
                while cache.len() <= j {
                    let i = cache.len() - 1;
                    let last = cache[i];
                    let (dm, dk) =
                        self.integrals_between(i as f64 * CACHE_KNOT_SPACING, (i + 1) as f64 * CACHE_KNOT_SPACING)?;
                    cache.push([last[0] + dm, last[1] + dk]);
                }
                cache[j]
            }
        };
        let knot = j as f64 * CACHE_KNOT_SPACING;
        let (dm, dk) = self.integrals_between(knot, t)?;
        Ok([base[0] + dm, base[1] + dk])
    }

    /// `M(t) = ∫_0^t m(A(τ)) dτ`.
    pub fn m_integral(&self, t: f64) -> Result<f64> {
        Ok(self.cumulative(t)?[0])
    }

    /// `K(t) = ∫_0^t k(A(τ)) dτ`.
    pub fn k_integral(&self, t: f64) -> Result<f64> {
        Ok(self.cumulative(t)?[1])
    }

    /// `∫_a^b A(τ) dτ` entrywise.
    pub fn integrate_matrix(&self, a: f64, b: f64) -> Result<ComplexMatrix> {
        let q = self.inner.dim;
        let mut out = ComplexMatrix::zeros(q);
        for (lo, hi, piece) in ode::segments(&self.inner.breakpoints, a, b) {
            let v = adaptive_simpson_vec(
                |t| {
                    let m = self.matrix_on_piece(t, piece);
                    m.as_slice().iter().flat_map(|z| [z.re, z.im]).collect()
                },
                lo,
                hi,
                self.inner.quad_tol,
            );
            for (dst, pair) in out.as_mut_slice().iter_mut().zip(v.chunks(2)) {
                *dst += C64::new(pair[0], pair[1]);
            }
        }
        Ok(out)
    }
}

/// Uniform grid of `n ≥ 1` points on `[t0, t1]`.
pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![t0];
    }
    (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect()
}

/// Grid estimate of the bunching constant `ℓ = sup k(A(t))/m(A(t))`.
///
/// Grid-limited, so a lower estimate of the true constant.
pub fn ell_estimate(path: &LinearPath, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    let mut ell = f64::NEG_INFINITY;
    for &t in grid {
        let b = path.bounds_at(t)?;
        if b.m <= 0.0 {
            return Err(Error::NonPositiveLowerBound { t, m: b.m });
        }
        ell = ell.max(b.k / b.m);
    }
    Ok(ell)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    UndecidableOnGrid,
}

impl Verdict {
    /// Verdict for a strict inequality `quantity > 0` given its margin.
    ///
    /// Margins at round-off level (`≤ 1e-12·scale`) count as equality.
    pub fn from_margin(margin: f64, scale: f64) -> Self {
        if !margin.is_finite() {
            Verdict::Violated
        } else if margin >= DECIDABLE_MARGIN {
            Verdict::Satisfied
        } else if margin <= 1e-12 * scale.max(1.0) {
            Verdict::Violated
        } else {
            Verdict::UndecidableOnGrid
        }
    }

    fn combine(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Violated, _) | (_, Violated) => Violated,
            (UndecidableOnGrid, _) | (_, UndecidableOnGrid) => UndecidableOnGrid,
            _ => Satisfied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub quantity: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub verdict: Verdict,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    pub name: String,
    pub statement: String,
    pub verdict: Verdict,
    pub conditions: Vec<ConditionCheck>,
    pub witnesses: Vec<Witness>,
}

impl TheoremVerdict {
    fn new(name: &str, statement: &str) -> Self {
        Self {
            name: name.into(),
            statement: statement.into(),
            verdict: Verdict::Satisfied,
            conditions: Vec::new(),
            witnesses: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, margin: f64, scale: f64, witness: Option<Witness>) {
        let verdict = Verdict::from_margin(margin, scale);
        self.verdict = self.verdict.combine(verdict);
        if verdict == Verdict::Violated {
            self.witnesses.push(witness.unwrap_or(Witness { t: f64::NAN, quantity: name.into(), value: margin }));
        }
        self.conditions.push(ConditionCheck { name: name.into(), verdict, margin });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub grid_points: usize,
    pub grid_span: [f64; 2],
    /// Grid estimate of ℓ; absent when `m(A(t)) ≤ 0` somewhere on the grid.
    pub ell: Option<f64>,
    pub min_m: f64,
    pub max_norm: f64,
    pub max_commutator_ratio: f64,
    pub theorems: Vec<TheoremVerdict>,
}

impl HypothesisReport {
    pub fn theorem(&self, name: &str) -> Option<&TheoremVerdict> {
        self.theorems.iter().find(|t| t.name == name)
    }
}

pub const THM_CONSTANT_STRICT: &str = "constant_strict_bunching";
pub const THM_CONSTANT_POSITIVE_SPECTRUM: &str = "constant_positive_spectrum";
pub const THM_COMMUTING_UNIFORM: &str = "commuting_uniform_bunching";
pub const THM_ELL_BUNCHING: &str = "ell_bunching";

struct GridSample {
    t: f64,
    a: ComplexMatrix,
    bounds: HermitianBounds,
    norm: f64,
}

/// Classifies the family `A(t)` against the four existence theorems.
///
/// All verdicts are grid-based: a condition that holds on the grid but
/// with margin under `1e-8` is reported as undecidable.
pub fn classify_hypotheses(path: &LinearPath, grid: &[f64]) -> Result<HypothesisReport> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("time grid must be non-empty and strictly increasing".into()));
    }
    let samples: Vec<GridSample> = grid
        .iter()
        .map(|&t| {
            let a = path.matrix_at(t);
            let bounds = hermitian_bounds(&a)?;
            let norm = a.operator_norm();
            Ok(GridSample { t, a, bounds, norm })
        })
        .collect::<Result<_>>()?;

    let max_norm = samples.iter().map(|s| s.norm).fold(0.0, f64::max);
    let scale = max_norm.max(1.0);
    let (argmin_m, min_m) = samples
        .iter()
        .map(|s| (s.t, s.bounds.m))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    let ell = if min_m > 0.0 {
        Some(samples.iter().map(|s| s.bounds.k / s.bounds.m).fold(f64::NEG_INFINITY, f64::max))
    } else {
        None
    };

    // Constant linear part: measured against A(grid[0]).
    let a0 = &samples[0].a;
    let (var_t, variation) = samples
        .iter()
        .map(|s| (s.t, (&s.a - a0).frobenius_norm()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    let is_constant = variation <= 1e-12 * scale;
    let eig0 = linalg::eigenvalues(a0)?;
    let abscissa = eig0.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let min_re = eig0.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let constancy_margin = if is_constant { 1.0 } else { -variation };
    let constancy_witness = Witness { t: var_t, quantity: "linear_part_variation".into(), value: variation };

    let mut thm_const = TheoremVerdict::new(THM_CONSTANT_STRICT, "A constant and 2 m(A) > max Re sp(A)");
    thm_const.add("constant_linear_part", constancy_margin, scale, Some(constancy_witness.clone()));
    let margin = 2.0 * samples[0].bounds.m - abscissa;
    thm_const.add(
        "two_m_exceeds_spectral_abscissa",
        margin,
        scale,
        Some(Witness { t: samples[0].t, quantity: "2m(A)-max_re_spectrum".into(), value: margin }),
    );

    let mut thm_spec = TheoremVerdict::new(THM_CONSTANT_POSITIVE_SPECTRUM, "A constant with spectrum in Re > 0");
    thm_spec.add("constant_linear_part", constancy_margin, scale, Some(constancy_witness));
    thm_spec.add(
        "positive_spectrum",
        min_re,
        scale,
        Some(Witness { t: samples[0].t, quantity: "min_re_spectrum".into(), value: min_re }),
    );

    let m_witness = Witness { t: argmin_m, quantity: "m(A(t))".into(), value: min_m };

    let mut thm_comm = TheoremVerdict::new(
        THM_COMMUTING_UNIFORM,
        "m > 0, sup |A| < inf, 2m >= k + delta, integrals of A commute",
    );
    thm_comm.add("m_positive", min_m, scale, Some(m_witness.clone()));
    thm_comm.add("uniformly_bounded", if max_norm.is_finite() { 1.0 } else { -1.0 }, scale, None);
    let (delta_t, delta) = samples
        .iter()
        .map(|s| (s.t, 2.0 * s.bounds.m - s.bounds.k))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    thm_comm.add(
        "uniform_strict_bunching",
        delta,
        scale,
        Some(Witness { t: delta_t, quantity: "2m(A(t))-k(A(t))".into(), value: delta }),
    );
    let (comm_ratio, comm_witness) = commutation_check(path, grid)?;
    let comm_margin = if comm_ratio <= COMMUTATOR_TOL { 1.0 } else { -comm_ratio };
    thm_comm.add("integrals_commute", comm_margin, scale, comm_witness);

    let mut thm_ell = TheoremVerdict::new(THM_ELL_BUNCHING, "m > 0, |A| locally bounded, ell m >= k");
    thm_ell.add("m_positive", min_m, scale, Some(m_witness));
    thm_ell.add("locally_bounded", if max_norm.is_finite() { 1.0 } else { -1.0 }, scale, None);
    match ell {
        Some(l) if l.is_finite() => thm_ell.add("ell_exists", 1.0, scale, None),
        _ => thm_ell.add("ell_exists", -1.0, scale, None),
    }

    Ok(HypothesisReport {
        grid_points: grid.len(),
        grid_span: [grid[0], grid[grid.len() - 1]],
        ell,
        min_m,
        max_norm,
        max_commutator_ratio: comm_ratio,
        theorems: vec![thm_const, thm_spec, thm_comm, thm_ell],
    })
}

/// Maximum over sampled triples `r < s < t` of
/// `|[∫_s^t A, ∫_r^s A]| / (|∫_s^t A| |∫_r^s A|)`.
fn commutation_check(path: &LinearPath, grid: &[f64]) -> Result<(f64, Option<Witness>)> {
    let n = grid.len();
    if n < 3 {
        return Ok((0.0, None));
    }
    let mut triples = vec![(0, n / 3, 2 * n / 3), (0, n / 2, n - 1), (n / 4, n / 2, (3 * n) / 4), (0, 1, n - 1)];
    // a few more spread deterministically over the grid
    for i in 0..8 {
        let a = (i * 7) % n;
        let b = (a + 1 + (i * 5) % (n - a).max(1)).min(n - 1);
        let c = (b + 1 + (i * 3) % (n - b).max(1)).min(n - 1);
        triples.push((a, b, c));
    }
    let mut worst = (0.0_f64, None);
    for (i, j, k) in triples {
        if !(i < j && j < k) {
            continue;
        }
        let (r, s, t) = (grid[i], grid[j], grid[k]);
        let x = path.integrate_matrix(s, t)?;
        let y = path.integrate_matrix(r, s)?;
        let denom = x.frobenius_norm() * y.frobenius_norm();
        if denom == 0.0 {
            continue;
        }
        let ratio = x.commutator(&y).frobenius_norm() / denom;
        if ratio > worst.0 {
            worst = (ratio, Some(Witness { t: s, quantity: format!("commutator[r={r},s={s},t={t}]"), value: ratio }));
        }
    }
    Ok(worst)
}

/// `J(t)` solving `J' = −A(τ)J`, `J(s) = I`: the derivative at the origin
/// of the linearised flow from `s` to `t`.
pub fn transition_matrix(path: &LinearPath, s: f64, t: f64, tol: f64) -> Result<ComplexMatrix> {
    if !(0.0 <= s && s <= t) {
        return Err(Error::InvalidInput(format!("transition needs 0 <= s <= t, got s={s}, t={t}")));
    }
    let q = path.dim();
    let mut state = ComplexMatrix::identity(q).as_slice().to_vec();
    let rhs = |tau: f64, piece: usize, y: &[C64], dy: &mut [C64]| {
        let a = path.matrix_on_piece(tau, piece);
        for i in 0..q {
            for j in 0..q {
                let mut acc = C64::new(0.0, 0.0);
                for l in 0..q {
                    acc += a[(i, l)] * y[l * q + j];
                }
                dy[i * q + j] = -acc;
            }
        }
        Ok(())
    };
    ode::integrate(rhs, s, t, &mut state, path.breakpoints(), &OdeOptions::with_tol(tol), |_, _| Ok(()))?;
    Ok(ComplexMatrix::from_row_major(q, state)?)
}

/// Accumulated inverse of a product of transitions, `Λ_{0,m}^{-1} = Λ_0^{-1} ⋯ Λ_{m−1}^{-1}`.
///
/// Inverses are never formed; application solves against the stored LU
/// factors of each `Λ_j`, innermost first.
#[derive(Debug, Clone)]
pub struct InverseProduct {
    dim: usize,
    factors: Vec<LuFactors>,
    conditions: Vec<f64>,
    running_condition: Vec<f64>,
    cap: f64,
}

impl InverseProduct {
    pub fn new(dim: usize) -> Self {
        Self::with_cap(dim, CONDITION_CAP)
    }

    pub fn with_cap(dim: usize, cap: f64) -> Self {
        Self { dim, factors: Vec::new(), conditions: Vec::new(), running_condition: Vec::new(), cap }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// `Λ_{0,m+1}^{-1} = Λ_{0,m}^{-1} Λ_m^{-1}`.
    pub fn push(&mut self, next: &ComplexMatrix) -> Result<()> {
        if next.dim() != self.dim {
            return Err(Error::InvalidInput(format!("factor has dimension {}, expected {}", next.dim(), self.dim)));
        }
        let cond = next.condition_number();
        if !(cond <= self.cap) {
            return Err(Error::DegenerateTransition { index: self.factors.len(), cond, cap: self.cap });
        }
        let lu = LuFactors::new(next).map_err(|_| Error::DegenerateTransition {
            index: self.factors.len(),
            cond,
            cap: self.cap,
        })?;
        let running = self.running_condition.last().copied().unwrap_or(1.0) * cond;
        self.factors.push(lu);
        self.conditions.push(cond);
        self.running_condition.push(running);
        Ok(())
    }

    /// Applies `Λ_{0,len}^{-1}`.
    pub fn apply(&self, z: &[C64]) -> Vec<C64> {
        self.apply_prefix(self.factors.len(), z)
    }

    /// Applies `Λ_{0,m}^{-1}` using only the first `m` factors.
    pub fn apply_prefix(&self, m: usize, z: &[C64]) -> Vec<C64> {
        let mut v = z.to_vec();
        for lu in self.factors[..m].iter().rev() {
            lu.solve_in_place(&mut v);
        }
        v
    }

    /// Per-factor 2-norm condition numbers.
    pub fn conditions(&self) -> &[f64] {
        &self.conditions
    }

    /// Product of factor condition numbers, an upper bound for the
    /// condition of the accumulated product.
    pub fn running_condition(&self) -> &[f64] {
        &self.running_condition
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_const(diag: &[f64]) -> LinearPath {
        LinearPath::constant(ComplexMatrix::real_diagonal(diag), DEFAULT_QUAD_TOL).unwrap()
    }

    #[test]
    fn bounds_of_simple_matrices() {
        let b = hermitian_bounds(&ComplexMatrix::identity(2)).unwrap();
        assert_eq!((b.m, b.k), (1.0, 1.0));
        let b = hermitian_bounds(&ComplexMatrix::real_diagonal(&[1.0, 3.0])).unwrap();
        assert_eq!((b.m, b.k), (1.0, 3.0));
    }

    #[test]
    fn ell_for_constant_paths() {
        let grid = uniform_grid(0.0, 5.0, 11);
        assert_eq!(ell_estimate(&path_const(&[1.0, 1.0]), &grid).unwrap(), 1.0);
        assert_eq!(ell_estimate(&path_const(&[2.0, 3.0]), &grid).unwrap(), 1.5);
    }

    #[test]
    fn ell_rejects_nonpositive_m() {
        let grid = uniform_grid(0.0, 1.0, 3);
        let err = ell_estimate(&path_const(&[-1.0, 1.0]), &grid).unwrap_err();
        assert!(matches!(err, Error::NonPositiveLowerBound { t, .. } if t == 0.0));
    }

    #[test]
    fn cumulative_integrals_of_unit_rate() {
        let p = path_const(&[1.0, 2.0]);
        assert!((p.m_integral(3.3).unwrap() - 3.3).abs() < 1e-13);
        assert!((p.k_integral(3.3).unwrap() - 6.6).abs() < 1e-13);
        // querying out of order hits the cache consistently
        let early = p.m_integral(0.7).unwrap();
        assert!((early - 0.7).abs() < 1e-14);
    }

    #[test]
    fn transition_of_empty_interval_is_identity() {
        let p = path_const(&[1.0, 2.0]);
        let j = transition_matrix(&p, 0.4, 0.4, 1e-10).unwrap();
        assert_eq!(j, ComplexMatrix::identity(2));
    }

    #[test]
    fn inverse_product_examples() {
        let mut acc = InverseProduct::new(1);
        let one = [C64::new(1.0, 0.0)];
        assert_eq!(acc.apply(&one), one.to_vec());
        acc.push(&ComplexMatrix::real_diagonal(&[(-1.0_f64).exp()])).unwrap();
        assert!((acc.apply(&one)[0].re - std::f64::consts::E).abs() < 1e-14);

        let mut acc = InverseProduct::new(1);
        acc.push(&ComplexMatrix::real_diagonal(&[0.5])).unwrap();
        acc.push(&ComplexMatrix::real_diagonal(&[1.0 / 3.0])).unwrap();
        assert!((acc.apply(&one)[0].re - 6.0).abs() < 1e-14);
        assert!((acc.apply_prefix(1, &one)[0].re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_product_rejects_ill_conditioned_factor() {
        let mut acc = InverseProduct::new(2);
        let err = acc.push(&ComplexMatrix::real_diagonal(&[1.0, 1e-13])).unwrap_err();
        assert!(matches!(err, Error::DegenerateTransition { index: 0, .. }));
        assert!(acc.is_empty());
    }

    #[test]
    fn margins_map_to_verdicts() {
        assert_eq!(Verdict::from_margin(1.0, 1.0), Verdict::Satisfied);
        assert_eq!(Verdict::from_margin(0.0, 1.0), Verdict::Violated);
        assert_eq!(Verdict::from_margin(-4e-16, 1.0), Verdict::Violated);
        assert_eq!(Verdict::from_margin(1e-9, 1.0), Verdict::UndecidableOnGrid);
    }
}
