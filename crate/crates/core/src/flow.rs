//! The evolution family `φ_{s,t}`: solutions of `∂_t φ_{s,t}(z) = −h(φ_{s,t}(z), t)`,
//! `φ_{s,s} = id`, together with checks of its structural identities and
//! transport of the 1- and 2-jet at the fixed origin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CheckReport, FieldSpec};
use crate::linalg::{vec_dist, vec_norm, ComplexMatrix, C64};
use crate::ode::{self, OdeOptions, OdeStats};

/// Trajectories reaching this radius signal an invalid field.
pub const ESCAPE_RADIUS: f64 = 1.0 - 1e-9;
/// Default local error tolerance of flow integrations.
pub const DEFAULT_ODE_TOL: f64 = 1e-10;

/// Evaluation of `φ_{s,t}` at a list of points.
#[derive(Debug, Clone)]
pub struct FlowRequest<'a> {
    pub field: &'a FieldSpec,
    pub s: f64,
    pub t: f64,
    pub points: Vec<Vec<C64>>,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub images: Vec<Vec<C64>>,
    pub steps_taken: usize,
    pub steps_rejected: usize,
    pub max_local_error: f64,
}

fn check_interval(s: f64, t: f64) -> Result<()> {
    if !(s.is_finite() && t.is_finite() && 0.0 <= s && s <= t) {
        return Err(Error::InvalidInput(format!("flow needs 0 <= s <= t, got s={s}, t={t}")));
    }
    Ok(())
}

fn check_point(field: &FieldSpec, z: &[C64]) -> Result<()> {
    if z.len() != field.dim() {
        return Err(Error::InvalidInput(format!("point has {} coordinates, field has dimension {}", z.len(), field.dim())));
    }
    let n = vec_norm(z);
    if !(n < 1.0) {
        return Err(Error::InvalidInput(format!("point must lie in the open unit ball, |z| = {n}")));
    }
    Ok(())
}

/// `φ_{s,t}(z)` for one point; `observer` sees each accepted step.
pub fn evolve_point_observed<O>(
    field: &FieldSpec,
    s: f64,
    t: f64,
    z: &[C64],
    tol: f64,
    observer: O,
) -> Result<(Vec<C64>, OdeStats)>
where
    O: FnMut(f64, &[C64]),
{
    evolve_point_with(field, s, t, z, &OdeOptions::with_tol(tol), observer)
}

/// `φ_{s,t}(z)` under explicit integrator options.
pub fn evolve_point_with<O>(
    field: &FieldSpec,
    s: f64,
    t: f64,
    z: &[C64],
    opts: &OdeOptions,
    mut observer: O,
) -> Result<(Vec<C64>, OdeStats)>
where
    O: FnMut(f64, &[C64]),
{
    check_interval(s, t)?;
    check_point(field, z)?;
    let mut y = z.to_vec();
    let rhs = |tau: f64, piece: usize, y: &[C64], dy: &mut [C64]| {
        field.eval_on_piece(y, tau, piece, dy);
        for d in dy.iter_mut() {
            *d = -*d;
        }
        Ok(())
    };
    let stats = ode::integrate(rhs, s, t, &mut y, field.breakpoints(), opts, |tau, y| {
        let norm = vec_norm(y);
        if norm >= ESCAPE_RADIUS {
            return Err(Error::Escape { t: tau, norm });
        }
        observer(tau, y);
        Ok(())
    })?;
    Ok((y, stats))
}

pub fn evolve_point(field: &FieldSpec, s: f64, t: f64, z: &[C64], tol: f64) -> Result<(Vec<C64>, OdeStats)> {
    evolve_point_observed(field, s, t, z, tol, |_, _| {})
}

/// Integrates every point of the request. Points are independent, so the
/// result does not depend on scheduling.
pub fn evolve(req: &FlowRequest) -> Result<FlowResult> {
    check_interval(req.s, req.t)?;
    let per_point: Vec<(Vec<C64>, OdeStats)> = req
        .points
        .par_iter()
        .map(|z| evolve_point(req.field, req.s, req.t, z, req.tol))
        .collect::<Result<_>>()?;
    let mut stats = OdeStats::default();
    let mut images = Vec::with_capacity(per_point.len());
    for (img, st) in per_point {
        stats.merge(&st);
        images.push(img);
    }
    Ok(FlowResult {
        images,
        steps_taken: stats.steps_taken,
        steps_rejected: stats.steps_rejected,
        max_local_error: stats.max_local_error,
    })
}

/// `max_z |φ_{s,t}(z) − φ_{u,t}(φ_{s,u}(z))|`.
pub fn semigroup_defect(field: &FieldSpec, s: f64, u: f64, t: f64, points: &[Vec<C64>], tol: f64) -> Result<f64> {
    if !(s <= u && u <= t) {
        return Err(Error::InvalidInput(format!("semigroup defect needs s <= u <= t, got ({s}, {u}, {t})")));
    }
    let defects: Vec<f64> = points
        .par_iter()
        .map(|z| {
            let direct = evolve_point(field, s, t, z, tol)?.0;
            let mid = evolve_point(field, s, u, z, tol)?.0;
            let composed = evolve_point(field, u, t, &mid, tol)?.0;
            Ok(vec_dist(&direct, &composed))
        })
        .collect::<Result<_>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}

/// Checks `e^{−C(|z|)∫_s^t k} ≤ |φ_{s,t}(z)|/|z| ≤ e^{−c(|z|)∫_s^t m}` in
/// log form, with multiplicative slack `e^{quad_tol + 20·tol}`.
pub fn decay_bounds_check(field: &FieldSpec, s: f64, t: f64, points: &[Vec<C64>], tol: f64) -> Result<CheckReport> {
    check_interval(s, t)?;
    let (int_m, int_k) = field.linear().integrals_between(s, t)?;
    let allowance = field.linear().quad_tol() + 20.0 * tol;
    let images: Vec<Vec<C64>> =
        points.par_iter().map(|z| evolve_point(field, s, t, z, tol).map(|r| r.0)).collect::<Result<_>>()?;
    let mut report = CheckReport::new("decay_bounds");
    for (z, img) in points.iter().zip(&images) {
        let r = vec_norm(z);
        if r == 0.0 {
            return Err(Error::InvalidInput("decay bounds need z != 0".into()));
        }
        let log_ratio = (vec_norm(img) / r).ln();
        let log_lower = -crate::field::big_c(r) * int_k;
        let log_upper = -crate::field::small_c(r) * int_m;
        let slack = (log_ratio - log_lower).min(log_upper - log_ratio);
        report.record(slack, allowance, z, t);
    }
    Ok(report)
}

/// Checks `|φ_{s,t}(z)| ≤ |z| + 1e-9` along every accepted step of the
/// flow from `s` to `t`.
pub fn contraction_check(field: &FieldSpec, s: f64, t: f64, points: &[Vec<C64>], tol: f64) -> Result<CheckReport> {
    let per_point: Vec<(f64, f64)> = points
        .par_iter()
        .map(|z| {
            let r = vec_norm(z);
            let mut worst = (f64::INFINITY, s);
            let (img, _) = evolve_point_observed(field, s, t, z, tol, |tau, y| {
                let slack = r - vec_norm(y);
                if slack < worst.0 {
                    worst = (slack, tau);
                }
            })?;
            let end = r - vec_norm(&img);
            Ok(if end < worst.0 { (end, t) } else { worst })
        })
        .collect::<Result<_>>()?;
    let mut report = CheckReport::new("contraction");
    for (z, (slack, tau)) in points.iter().zip(per_point) {
        report.record(if slack.is_infinite() { 0.0 } else { slack }, 1e-9, z, tau);
    }
    Ok(report)
}

/// Spot check of local Lipschitz continuity in `t`:
/// `|φ_{s,t}(z) − φ_{s,u}(z)| ≤ L·(t − u)` with `L = sup_τ 4ρ/(1−ρ)² ‖A(τ)‖`,
/// `ρ = |z|` (valid since `|φ_{s,τ}(z)| ≤ |z|`).
pub fn lipschitz_check(field: &FieldSpec, s: f64, times: &[f64], points: &[Vec<C64>], tol: f64) -> Result<CheckReport> {
    let mut report = CheckReport::new("lipschitz_in_t");
    if times.len() < 2 {
        return Ok(report);
    }
    let norm_sup = crate::linear::uniform_grid(s, times[times.len() - 1], 201)
        .into_iter()
        .map(|tau| field.linear().matrix_at(tau).operator_norm())
        .fold(0.0, f64::max);
    for z in points {
        let rho = vec_norm(z);
        let lip = 4.0 * rho / (1.0 - rho).powi(2) * norm_sup;
        let mut prev: Option<(f64, Vec<C64>)> = None;
        for &t in times {
            let img = evolve_point(field, s, t, z, tol)?.0;
            if let Some((u, prev_img)) = &prev {
                let slack = lip * (t - u) - vec_dist(&img, prev_img);
                report.record(slack, 1e-9, z, t);
            }
            prev = Some((t, img));
        }
    }
    Ok(report)
}

/// 2-jet of `φ_{s,t}` at the origin: `φ(z) = L z + Q[z] + O(|z|³)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub linear: ComplexMatrix,
    /// Monomial coefficients: for each output `i`, the coefficients of
    /// `z_j z_k` with `j ≤ k` in lexicographic order (`q·q(q+1)/2` total).
    pub quadratic: Vec<C64>,
}

impl Jet2 {
    pub fn dim(&self) -> usize {
        self.linear.dim()
    }

    fn packed_index(q: usize, i: usize, j: usize, k: usize) -> usize {
        let (j, k) = if j <= k { (j, k) } else { (k, j) };
        let per_out = q * (q + 1) / 2;
        // pairs (a, b), a ≤ b, preceding (j, k)
        let before = (0..j).map(|a| q - a).sum::<usize>() + (k - j);
        i * per_out + before
    }

    /// Coefficient of `z_j z_k` in output `i`.
    pub fn quadratic_coefficient(&self, i: usize, j: usize, k: usize) -> C64 {
        self.quadratic[Self::packed_index(self.dim(), i, j, k)]
    }

    /// `L z + Q[z]`.
    pub fn apply(&self, z: &[C64]) -> Vec<C64> {
        let q = self.dim();
        let mut out = self.linear.mul_vec(z);
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..q {
                for k in j..q {
                    *o += self.quadratic_coefficient(i, j, k) * z[j] * z[k];
                }
            }
        }
        out
    }
}

/// Transports the 1- and 2-jet at the origin along `[s, t]`:
/// `J' = −A J`, `T' = −A T − H[J·, J·]` where `H` is the quadratic part of
/// the remainder (exact from the model, else by finite differences).
pub fn jet2_transition(field: &FieldSpec, s: f64, t: f64, tol: f64) -> Result<Jet2> {
    check_interval(s, t)?;
    let q = field.dim();
    let nj = q * q;
    let zero = C64::new(0.0, 0.0);
    let mut state = vec![zero; nj + q * q * q];
    for i in 0..q {
        state[i * q + i] = C64::new(1.0, 0.0);
    }
    let rhs = |tau: f64, piece: usize, y: &[C64], dy: &mut [C64]| {
        let a = field.linear().matrix_on_piece(tau, piece);
        let h = field.quadratic_part(tau, piece);
        let (jm, tt) = y.split_at(nj);
        let (djm, dtt) = dy.split_at_mut(nj);
        for i in 0..q {
            for j in 0..q {
                let mut acc = zero;
                for l in 0..q {
                    acc += a[(i, l)] * jm[l * q + j];
                }
                djm[i * q + j] = -acc;
            }
        }
        for i in 0..q {
            for j in 0..q {
                for k in 0..q {
                    let mut acc = zero;
                    for l in 0..q {
                        acc += a[(i, l)] * tt[(l * q + j) * q + k];
                    }
                    for aa in 0..q {
                        for bb in 0..q {
                            acc += h.get(i, aa, bb) * jm[aa * q + j] * jm[bb * q + k];
                        }
                    }
                    dtt[(i * q + j) * q + k] = -acc;
                }
            }
        }
        Ok(())
    };
    ode::integrate(rhs, s, t, &mut state, field.breakpoints(), &OdeOptions::with_tol(tol), |_, _| Ok(()))?;
    let linear = ComplexMatrix::from_row_major(q, state[..nj].to_vec())?;
    let tensor = &state[nj..];
    let mut quadratic = Vec::with_capacity(q * q * (q + 1) / 2);
    for i in 0..q {
        for j in 0..q {
            for k in j..q {
                let c = if j == k {
                    tensor[(i * q + j) * q + j]
                } else {
                    tensor[(i * q + j) * q + k] + tensor[(i * q + k) * q + j]
                };
                quadratic.push(c);
            }
        }
    }
    Ok(Jet2 { linear, quadratic })
}

/// One row of a trajectory table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub point_index: usize,
    pub z: Vec<C64>,
}

/// Trajectory rows for every point: endpoints only, or every accepted
/// step when `dense` is set (including the start point).
pub fn trajectories(req: &FlowRequest, dense: bool) -> Result<Vec<TrajectoryRow>> {
    check_interval(req.s, req.t)?;
    let per_point: Vec<Vec<TrajectoryRow>> = req
        .points
        .par_iter()
        .enumerate()
        .map(|(idx, z)| {
            let mut rows = Vec::new();
            if dense {
                rows.push(TrajectoryRow { t: req.s, point_index: idx, z: z.clone() });
            }
            let (img, _) = evolve_point_observed(req.field, req.s, req.t, z, req.tol, |tau, y| {
                if dense {
                    rows.push(TrajectoryRow { t: tau, point_index: idx, z: y.to_vec() });
                }
            })?;
            if !dense || rows.last().is_none_or(|r| r.t < req.t) {
                rows.push(TrajectoryRow { t: req.t, point_index: idx, z: img });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// CSV with columns `t, point_index, re_1..re_q, im_1..im_q, abs`.
pub fn trajectory_csv(rows: &[TrajectoryRow], q: usize) -> String {
    let mut out = String::from("t,point_index");
    for i in 1..=q {
        out.push_str(&format!(",re_{i}"));
    }
    for i in 1..=q {
        out.push_str(&format!(",im_{i}"));
    }
    out.push_str(",abs\n");
    for row in rows {
        out.push_str(&format!("{},{}", row.t, row.point_index));
        for z in &row.z {
            out.push_str(&format!(",{}", z.re));
        }
        for z in &row.z {
            out.push_str(&format!(",{}", z.im));
        }
        out.push_str(&format!(",{}\n", vec_norm(&row.z)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{builtin_field, Family, ParamTable};

    fn identity1() -> FieldSpec {
        builtin_field(Family::ConstantLinear, &[("q".to_string(), 1.0)].into()).unwrap()
    }

    fn real(x: f64) -> Vec<C64> {
        vec![C64::new(x, 0.0)]
    }

    #[test]
    fn empty_interval_is_identity() {
        let f = identity1();
        let (img, st) = evolve_point(&f, 0.7, 0.7, &real(0.3), 1e-10).unwrap();
        assert_eq!(img, real(0.3));
        assert_eq!(st.steps_taken, 0);
    }

    #[test]
    fn linear_flow_matches_exponential() {
        let f = identity1();
        let (img, _) = evolve_point(&f, 0.0, 1.0, &real(0.5), 1e-10).unwrap();
        assert!((img[0].re - 0.5 * (-1.0_f64).exp()).abs() < 1e-11);
        assert!((img[0].re - 0.1839397).abs() < 1e-7);
    }

    #[test]
    fn origin_is_fixed() {
        let f = builtin_field(Family::Koebe1d, &ParamTable::new()).unwrap();
        let (img, _) = evolve_point(&f, 0.2, 3.0, &real(0.0), 1e-10).unwrap();
        assert_eq!(img, real(0.0));
    }

    #[test]
    fn points_outside_ball_are_rejected() {
        let f = identity1();
        assert!(evolve_point(&f, 0.0, 1.0, &real(1.0), 1e-10).is_err());
        assert!(evolve_point(&f, 1.0, 0.0, &real(0.1), 1e-10).is_err());
    }

    #[test]
    fn repelling_field_escapes() {
        let f = crate::field::polynomial::field_from_json(
            r#"{ "dim": 1, "linear": [ { "constant": { "re": [[-1]] } } ] }"#,
            1e-10,
        )
        .unwrap();
        let err = evolve_point(&f, 0.0, 5.0, &real(0.5), 1e-10).unwrap_err();
        assert!(matches!(err, Error::Escape { .. }), "{err:?}");
    }

    #[test]
    fn semigroup_examples() {
        let f = identity1();
        let pts = vec![real(0.5)];
        assert!(semigroup_defect(&f, 0.0, 0.0, 2.0, &pts, 1e-10).unwrap() <= 1e-12);
        assert!(semigroup_defect(&f, 0.0, 2.0, 2.0, &pts, 1e-10).unwrap() <= 1e-12);
        assert!(semigroup_defect(&f, 0.0, 1.0, 2.0, &pts, 1e-10).unwrap() <= 20.0 * 1e-10);
    }

    #[test]
    fn decay_bounds_linear_and_trivial() {
        let f = identity1();
        let rep = decay_bounds_check(&f, 0.0, 1.0, &[real(0.5)], 1e-10).unwrap();
        assert!(rep.passed);
        // upper bound e^{-1/3} vs ratio e^{-1}: log slack 2/3
        assert!((rep.tightest_slack - 2.0 / 3.0).abs() < 1e-9, "{}", rep.tightest_slack);
        let rep = decay_bounds_check(&f, 1.0, 1.0, &[real(0.5)], 1e-10).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.tightest_slack, 0.0);
    }

    #[test]
    fn koebe_decay_bounds() {
        let f = builtin_field(Family::Koebe1d, &ParamTable::new()).unwrap();
        let rep = decay_bounds_check(&f, 0.0, 2.0, &[real(0.3)], 1e-10).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn jet_of_trivial_and_linear_flows() {
        let f = identity1();
        let j = jet2_transition(&f, 0.4, 0.4, 1e-10).unwrap();
        assert_eq!(j.linear, ComplexMatrix::identity(1));
        assert_eq!(j.quadratic, vec![C64::new(0.0, 0.0)]);
        let j = jet2_transition(&f, 0.0, 1.0, 1e-10).unwrap();
        assert!((j.linear[(0, 0)].re - (-1.0_f64).exp()).abs() < 1e-11);
        assert_eq!(j.quadratic[0], C64::new(0.0, 0.0));
    }

    const Z_PLUS_Z2: &str = r#"{ "dim": 1, "linear": [ { "constant": { "re": [[1]] } } ],
        "quadratic": [ { "out_index": 0, "in_indices": [0, 0], "coeff_re": 1.0, "time_profile": "constant" } ] }"#;

    #[test]
    fn jet_quadratic_coefficient_closed_form() {
        // φ' = −φ − φ²: linear coefficient e^{-t}, quadratic a' = −a − e^{-2t}
        let f = crate::field::polynomial::field_from_json(Z_PLUS_Z2, 1e-10).unwrap();
        let j = jet2_transition(&f, 0.0, 1.0, 1e-11).unwrap();
        let e = (-1.0_f64).exp();
        assert!((j.linear[(0, 0)] - C64::new(e, 0.0)).norm() < 1e-10);
        assert!((j.quadratic[0] - C64::new(e * (e - 1.0), 0.0)).norm() < 1e-10, "{:?}", j.quadratic);
    }

    #[test]
    fn jet_matches_finite_differences_of_the_flow() {
        let f = builtin_field(Family::QuadraticPerturbation, &ParamTable::new()).unwrap();
        let q = f.dim();
        let j = jet2_transition(&f, 0.3, 1.3, 1e-12).unwrap();
        let eps = 1e-3;
        for a in 0..q {
            for b in a..q {
                let point = |sa: f64, sb: f64| {
                    let mut z = vec![C64::new(0.0, 0.0); q];
                    z[a] += C64::new(sa * eps, 0.0);
                    z[b] += C64::new(sb * eps, 0.0);
                    evolve_point(&f, 0.3, 1.3, &z, 1e-13).unwrap().0
                };
                let (pp, pm, mp, mm) = (point(1.0, 1.0), point(1.0, -1.0), point(-1.0, 1.0), point(-1.0, -1.0));
                for i in 0..q {
                    let fd = if a == b {
                        (pp[i] + mm[i]) / (8.0 * eps * eps)
                    } else {
                        (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * eps * eps)
                    };
                    let jet = j.quadratic_coefficient(i, a, b);
                    assert!((fd - jet).norm() < 1e-5, "i={i} a={a} b={b}: fd {fd} jet {jet}");
                }
            }
        }
    }

    #[test]
    fn packed_layout() {
        // q = 2: per output (0,0), (0,1), (1,1)
        assert_eq!(Jet2::packed_index(2, 0, 0, 0), 0);
        assert_eq!(Jet2::packed_index(2, 0, 1, 0), 1);
        assert_eq!(Jet2::packed_index(2, 0, 1, 1), 2);
        assert_eq!(Jet2::packed_index(2, 1, 0, 0), 3);
        assert_eq!(Jet2::packed_index(3, 0, 1, 2), 4);
        assert_eq!(Jet2::packed_index(3, 0, 2, 2), 5);
    }

    #[test]
    fn dense_trajectory_rows_increase() {
        let f = identity1();
        let req = FlowRequest { field: &f, s: 0.0, t: 1.0, points: vec![real(0.5), real(0.2)], tol: 1e-8 };
        let rows = trajectories(&req, true).unwrap();
        for idx in 0..2 {
            let ts: Vec<f64> = rows.iter().filter(|r| r.point_index == idx).map(|r| r.t).collect();
            assert!(ts.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(ts.first(), Some(&0.0));
            assert_eq!(ts.last(), Some(&1.0));
        }
        let csv = trajectory_csv(&rows, 1);
        assert!(csv.starts_with("t,point_index,re_1,im_1,abs\n"));
    }
}
