//! The Loewner chain `f_t(z) = lim_m Λ_{0,m}^{-1} φ_{t,u_m}(z)`, where
//! `Λ_n = Dφ_{u_n,u_{n+1}}(0)` and `Λ_{0,m} = Λ_{m−1} ⋯ Λ_0`. Linear maps
//! agree with `φ_{u_n,u_{n+1}}` to first order, which suffices when the
//! bunching constant is below 2.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::flow::evolve_point_with;
use crate::linalg::{vec_dist, vec_norm, ComplexMatrix, C64};
use crate::linear::{transition_matrix, InverseProduct};
use crate::ode::OdeOptions;
use crate::sampling::sphere_directions;
use crate::schedule::{schedule_for_path, Schedule};

/// Default convergence tolerance of chain increments.
pub const DEFAULT_CHAIN_TOL: f64 = 1e-8;
/// Step of the central differences in `z`.
pub const SPACE_FD_STEP: f64 = 1e-5;
/// Trajectories below this norm are too close to underflow to renormalize.
pub const UNDERFLOW_NORM: f64 = 1e-280;
/// Points per pair of consecutive times used by the range spot check.
pub const RANGE_SPOT_POINTS: usize = 4;

/// Result of one chain evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainValue {
    pub value: Vec<C64>,
    /// Index `m` of the last renormalized iterate `Λ_{0,m}^{-1} φ_{t,u_m}(z)`.
    pub m_used: usize,
    pub last_increment: f64,
    pub converged: bool,
    /// `|g_{m+1} − g_m|` for `m` from the first index with `u_m ≥ t`.
    pub increments: Vec<f64>,
    /// `|φ_{t,u_m}(z)|` at the start of each increment.
    pub radii: Vec<f64>,
}

/// Precomputed renormalization for a field and an accepted schedule.
#[derive(Debug, Clone)]
pub struct ChainEvaluator {
    field: FieldSpec,
    schedule: Schedule,
    tol_ode: f64,
    tol_chain: f64,
    lambdas: Vec<ComplexMatrix>,
    renorms: InverseProduct,
}

impl ChainEvaluator {
    /// Requires an accepted schedule with `ℓ < 2`; computes every `Λ_n`
    /// over the horizon and aborts if one has condition number above the cap.
    pub fn new(field: FieldSpec, schedule: Schedule, tol_ode: f64, tol_chain: f64) -> Result<Self> {
        if schedule.h_int > 2 {
            return Err(Error::RequiresHigherOrderMatching { ell: schedule.ell });
        }
        if let Some(index) = schedule.failing_index() {
            return Err(Error::ScheduleRejected {
                index,
                mu_h: schedule.mu.powi(schedule.h_int as i32),
                nu: schedule.nu_per_step[index],
            });
        }
        if !(tol_ode > 0.0 && tol_chain > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        let lambdas: Vec<ComplexMatrix> = schedule
            .u
            .par_windows(2)
            .map(|w| transition_matrix(field.linear(), w[0], w[1], tol_ode))
            .collect::<Result<_>>()?;
        let mut renorms = InverseProduct::new(field.dim());
        for lambda in &lambdas {
            renorms.push(lambda)?;
        }
        Ok(Self { field, schedule, tol_ode, tol_chain, lambdas, renorms })
    }

    /// Builds the schedule from the grid estimate of `ℓ` over `horizon` steps.
    pub fn for_field(field: FieldSpec, horizon: usize, tol_ode: f64, tol_chain: f64) -> Result<Self> {
        let schedule = schedule_for_path(field.linear(), horizon, None)?;
        Self::new(field, schedule, tol_ode, tol_chain)
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn tol_ode(&self) -> f64 {
        self.tol_ode
    }

    pub fn tol_chain(&self) -> f64 {
        self.tol_chain
    }

    /// `Λ_n` for `n = 0..N`.
    pub fn lambdas(&self) -> &[ComplexMatrix] {
        &self.lambdas
    }

    /// Applicator of `Λ_{0,m}^{-1}`.
    pub fn renorms(&self) -> &InverseProduct {
        &self.renorms
    }

    /// Increments below this count towards convergence: the geometric tail
    /// after such an increment is at most `tol_chain`.
    pub fn increment_threshold(&self) -> f64 {
        let rho = self.schedule.contraction_ratio();
        self.tol_chain * ((1.0 - rho) / rho).min(1.0)
    }

    fn opts(&self) -> OdeOptions {
        OdeOptions::relative(self.tol_ode)
    }

    /// Least `m` with `u_m ≥ t`.
    pub fn first_index(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!("chain time must be finite and non-negative, got {t}")));
        }
        let u = &self.schedule.u;
        let m = u.partition_point(|&x| x < t);
        if m >= u.len() {
            return Err(Error::BeyondHorizon { t, u_max: self.schedule.last_time() });
        }
        Ok(m)
    }

    fn check_point(&self, z: &[C64]) -> Result<()> {
        if z.len() != self.field.dim() {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates, field has dimension {}",
                z.len(),
                self.field.dim()
            )));
        }
        if !(vec_norm(z) < 1.0) {
            return Err(Error::InvalidInput(format!("point must lie in the open unit ball, |z| = {}", vec_norm(z))));
        }
        Ok(())
    }

    /// `f_t(z)` with convergence metadata. Stops after two consecutive
    /// increments below [`Self::increment_threshold`], each taken from a
    /// point inside the working radius `r`.
    pub fn eval(&self, t: f64, z: &[C64]) -> Result<ChainValue> {
        self.check_point(z)?;
        let m0 = self.first_index(t)?;
        let q = self.field.dim();
        if z.iter().all(|c| *c == C64::new(0.0, 0.0)) {
            return Ok(ChainValue {
                value: vec![C64::new(0.0, 0.0); q],
                m_used: m0,
                last_increment: 0.0,
                converged: true,
                increments: Vec::new(),
                radii: Vec::new(),
            });
        }
        let u = &self.schedule.u;
        let opts = self.opts();
        let threshold = self.increment_threshold();
        let mut w = evolve_point_with(&self.field, t, u[m0], z, &opts, |_, _| {})?.0;
        let mut g = self.renorms.apply_prefix(m0, &w);
        let mut out = ChainValue {
            value: g.clone(),
            m_used: m0,
            last_increment: f64::INFINITY,
            converged: false,
            increments: Vec::new(),
            radii: Vec::new(),
        };
        let mut small = 0;
        for m in m0..self.schedule.horizon_n {
            let before = vec_norm(&w);
            if before < UNDERFLOW_NORM {
                break;
            }
            w = evolve_point_with(&self.field, u[m], u[m + 1], &w, &opts, |_, _| {})?.0;
            let next = self.renorms.apply_prefix(m + 1, &w);
            let inc = vec_dist(&next, &g);
            g = next;
            out.increments.push(inc);
            out.radii.push(before);
            out.last_increment = inc;
            out.m_used = m + 1;
            if inc <= threshold && before <= self.schedule.r {
                small += 1;
            } else {
                small = 0;
            }
            if small >= 2 {
                out.converged = true;
                break;
            }
        }
        out.value = g;
        Ok(out)
    }

    /// As [`Self::eval`], failing unless the evaluation converged.
    pub fn eval_converged(&self, t: f64, z: &[C64]) -> Result<ChainValue> {
        let v = self.eval(t, z)?;
        if !v.converged {
            return Err(Error::ChainNotConverged { t, m_used: v.m_used, last_increment: v.last_increment });
        }
        Ok(v)
    }

    pub fn eval_many(&self, t: f64, points: &[Vec<C64>]) -> Result<Vec<ChainValue>> {
        points.par_iter().map(|z| self.eval(t, z)).collect()
    }

    /// The renormalized iterate `Λ_{0,m}^{-1} φ_{t,u_m}(z)` at a fixed `m`
    /// with `u_m ≥ t`.
    pub fn eval_fixed(&self, t: f64, z: &[C64], m: usize) -> Result<Vec<C64>> {
        self.check_point(z)?;
        let m0 = self.first_index(t)?;
        if m < m0 || m > self.schedule.horizon_n {
            return Err(Error::InvalidInput(format!(
                "fixed index {m} must lie in [{m0}, {}] for t = {t}",
                self.schedule.horizon_n
            )));
        }
        let u = &self.schedule.u;
        let opts = self.opts();
        let mut w = evolve_point_with(&self.field, t, u[m0], z, &opts, |_, _| {})?.0;
        for n in m0..m {
            w = evolve_point_with(&self.field, u[n], u[n + 1], &w, &opts, |_, _| {})?.0;
        }
        Ok(self.renorms.apply_prefix(m, &w))
    }

    /// `Df_t(0) = Λ_{0,m}^{-1} Dφ_{t,u_m}(0)` for the least `m` with `u_m ≥ t`.
    pub fn derivative_at_origin(&self, t: f64) -> Result<ComplexMatrix> {
        let m = self.first_index(t)?;
        let q = self.field.dim();
        let d = transition_matrix(self.field.linear(), t, self.schedule.u[m], self.tol_ode)?;
        let mut out = ComplexMatrix::zeros(q);
        for j in 0..q {
            let col: Vec<C64> = (0..q).map(|i| d[(i, j)]).collect();
            let img = self.renorms.apply_prefix(m, &col);
            for i in 0..q {
                out.as_mut_slice()[i * q + j] = img[i];
            }
        }
        Ok(out)
    }

    /// `max_z |f_s(z) − f_t(φ_{s,t}(z))| / (1 + |f_s(z)|)`.
    pub fn identity_residual(&self, s: f64, t: f64, points: &[Vec<C64>]) -> Result<f64> {
        if !(0.0 <= s && s <= t) {
            return Err(Error::InvalidInput(format!("identity residual needs 0 <= s <= t, got ({s}, {t})")));
        }
        let per_point: Vec<f64> = points
            .par_iter()
            .map(|z| {
                let fs = self.eval_converged(s, z)?;
                let w = evolve_point_with(&self.field, s, t, z, &self.opts(), |_, _| {})?.0;
                let ft = self.eval_converged(t, &w)?;
                Ok(vec_dist(&fs.value, &ft.value) / (1.0 + vec_norm(&fs.value)))
            })
            .collect::<Result<_>>()?;
        Ok(per_point.into_iter().fold(0.0, f64::max))
    }

    /// Residual of `∂_t f_t(z) = Df_t(z) h(z,t)`. All evaluations for one
    /// point share a fixed index `m`, past the converged index of `f_t(z)`.
    /// The time derivative is a central difference, or a forward one when
    /// `t < dt`; `Df_t(z) h` is a central difference along `h/|h|` with
    /// step [`SPACE_FD_STEP`]. Each residual is relative to `1 + |∂_t f|`.
    pub fn pde_residual(&self, t: f64, points: &[Vec<C64>], dt: f64) -> Result<PdeResidual> {
        if !(1e-6..=1e-2).contains(&dt) {
            return Err(Error::InvalidInput(format!("dt must lie in [1e-6, 1e-2], got {dt}")));
        }
        let one_sided = t < dt;
        let per_point: Vec<f64> = points
            .par_iter()
            .map(|z| {
                let cv = self.eval_converged(t, z)?;
                let m = cv.m_used.max(self.first_index(t + dt)?);
                let lhs: Vec<C64> = if one_sided {
                    let plus = self.eval_fixed(t + dt, z, m)?;
                    let here = self.eval_fixed(t, z, m)?;
                    plus.iter().zip(&here).map(|(a, b)| (a - b) / dt).collect()
                } else {
                    let plus = self.eval_fixed(t + dt, z, m)?;
                    let minus = self.eval_fixed(t - dt, z, m)?;
                    plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * dt)).collect()
                };
                let h = self.field.eval(z, t);
                let h_norm = vec_norm(&h);
                let rhs: Vec<C64> = if h_norm == 0.0 {
                    vec![C64::new(0.0, 0.0); z.len()]
                } else {
                    let shifted = |sign: f64| -> Vec<C64> {
                        z.iter().zip(&h).map(|(zi, hi)| zi + hi * (sign * SPACE_FD_STEP / h_norm)).collect()
                    };
                    let plus = self.eval_fixed(t, &shifted(1.0), m)?;
                    let minus = self.eval_fixed(t, &shifted(-1.0), m)?;
                    plus.iter().zip(&minus).map(|(a, b)| (a - b) * (h_norm / (2.0 * SPACE_FD_STEP))).collect()
                };
                Ok(vec_dist(&lhs, &rhs) / (1.0 + vec_norm(&lhs)))
            })
            .collect::<Result<_>>()?;
        let residual = per_point.iter().copied().fold(0.0, f64::max);
        Ok(PdeResidual { residual, one_sided, per_point })
    }

    /// `min |f_t(z) − f_t(w)|` over distinct pairs of the given points.
    pub fn injectivity_gap(&self, t: f64, points: &[Vec<C64>]) -> Result<f64> {
        let values = self.eval_many(t, points)?;
        let mut gap = f64::INFINITY;
        for i in 0..values.len() {
            for j in i + 1..values.len() {
                if points[i] != points[j] {
                    gap = gap.min(vec_dist(&values[i].value, &values[j].value));
                }
            }
        }
        Ok(gap)
    }

    /// Samples `f_t(r·d)` for every time, radius and sphere direction, and
    /// spot-checks `f_s = f_t ∘ φ_{s,t}` between consecutive sampled times.
    pub fn range_sample(&self, times: &[f64], radii: &[f64], directions: usize, seed: u64) -> Result<RangeCloud> {
        let q = self.field.dim();
        for &r in radii {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidInput(format!("radius {r} outside [0, 1)")));
            }
        }
        let dirs = sphere_directions(q, directions, seed);
        let mut inputs = Vec::with_capacity(times.len() * radii.len() * dirs.len());
        for &t in times {
            for &r in radii {
                for d in &dirs {
                    inputs.push((t, d.iter().map(|c| c * r).collect::<Vec<C64>>()));
                }
            }
        }
        let points: Vec<RangePoint> = inputs
            .par_iter()
            .map(|(t, z)| {
                let v = self.eval(*t, z)?;
                Ok(RangePoint { t: *t, z: z.clone(), f: v.value, m_used: v.m_used, converged: v.converged })
            })
            .collect::<Result<_>>()?;
        let mut sorted: Vec<f64> = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let spot: Vec<Vec<C64>> = radii
            .iter()
            .flat_map(|&r| dirs.iter().take(RANGE_SPOT_POINTS).map(move |d| d.iter().map(|c| c * r).collect()))
            .take(RANGE_SPOT_POINTS)
            .collect();
        let mut spot_check_residual = None;
        if !spot.is_empty() {
            for w in sorted.windows(2) {
                let res = self.identity_residual(w[0], w[1], &spot)?;
                spot_check_residual = Some(spot_check_residual.unwrap_or(0.0_f64).max(res));
            }
        }
        Ok(RangeCloud { points, spot_check_residual })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeResidual {
    pub residual: f64,
    /// True when the time difference was one-sided (`t < dt`).
    pub one_sided: bool,
    pub per_point: Vec<f64>,
}

/// One sample `(t, z, f_t(z))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangePoint {
    pub t: f64,
    pub z: Vec<C64>,
    pub f: Vec<C64>,
    pub m_used: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeCloud {
    pub points: Vec<RangePoint>,
    /// Largest `f_s = f_t ∘ φ_{s,t}` residual over consecutive times, if any.
    pub spot_check_residual: Option<f64>,
}

/// CSV with columns `t, re_z_1.., im_z_1.., re_f_1.., im_f_1.., m_used, converged`.
pub fn chain_csv(rows: &[RangePoint], q: usize) -> String {
    let mut out = String::from("t");
    for prefix in ["re_z", "im_z", "re_f", "im_f"] {
        for i in 1..=q {
            out.push_str(&format!(",{prefix}_{i}"));
        }
    }
    out.push_str(",m_used,converged\n");
    for row in rows {
        out.push_str(&format!("{}", row.t));
        for v in [&row.z, &row.f] {
            for c in v.iter() {
                out.push_str(&format!(",{}", c.re));
            }
            for c in v.iter() {
                out.push_str(&format!(",{}", c.im));
            }
        }
        out.push_str(&format!(",{},{}\n", row.m_used, row.converged));
    }
    out
}
