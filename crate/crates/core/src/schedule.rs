//! Time discretization: the unit-mass times `M(u_n) = n` with
//! `M(t) = ∫_0^t m(A)`, the parameters `ℓ, h, r, μ, ν`, and the key
//! inequality `μ^h < ν`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{big_c, small_c, CheckReport, FieldSpec};
use crate::flow::evolve_point;
use crate::linalg::{vec_norm, C64};
use crate::linear::{ell_estimate, LinearPath};

/// Times beyond this are not searched when inverting `M`.
pub const MAX_SEARCH_TIME: f64 = 1e5;
/// Default accuracy of `|M(u_n) − n|`.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
/// Maximal spacing of the grid used to estimate `ℓ`.
pub const ELL_GRID_SPACING: f64 = 0.01;
/// Cap on the number of points of the `ℓ` grid.
pub const ELL_GRID_MAX_POINTS: usize = 200_001;
/// Slack in the log-ratio bound.
pub const LOG_RATIO_SLACK: f64 = 1e-9;

/// Inverts `M(u) = target` on `[lo, ∞)` given `M(lo) < target`, by a
/// doubling bracket, then Illinois-modified secant steps safeguarded by
/// bisection.
fn invert_mass(path: &LinearPath, target: f64, lo: f64, m_lo: f64, tol: f64, n: usize) -> Result<f64> {
    let mass = |t: f64| path.m_integral(t);
    let m_rate = path.bounds_at(lo)?.m;
    let mut width = if m_rate > 0.0 { ((target - m_lo) / m_rate).clamp(1e-6, 1e3) } else { 1.0 };
    let (mut a, mut fa) = (lo, m_lo - target);
    let (mut b, mut fb);
    loop {
        b = (a + width).min(MAX_SEARCH_TIME);
        fb = mass(b)? - target;
        if fb >= 0.0 {
            break;
        }
        if b >= MAX_SEARCH_TIME {
            return Err(Error::HorizonExhausted { target: n, reached: fb + target, t_max: MAX_SEARCH_TIME });
        }
        a = b;
        fa = fb;
        width *= 2.0;
    }
    if fb.abs() <= tol {
        return Ok(b);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let secant = b - fb * (b - a) / (fb - fa);
        let mid = 0.5 * (a + b);
        let x = if secant > a && secant < b { secant } else { mid };
        let fx = mass(x)? - target;
        if fx.abs() <= tol || (b - a) <= 4.0 * f64::EPSILON * b.abs() {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// `u_1 < … < u_N` with `|M(u_n) − n| ≤ tol`.
pub fn compute_times(path: &LinearPath, n_max: usize, tol: f64) -> Result<Vec<f64>> {
    if n_max == 0 {
        return Err(Error::InvalidInput("schedule horizon must be at least 1".into()));
    }
    let mut times = Vec::with_capacity(n_max);
    let (mut lo, mut m_lo) = (0.0, 0.0);
    for n in 1..=n_max {
        let u = invert_mass(path, n as f64, lo, m_lo, tol, n)?;
        if !(u > lo) {
            return Err(Error::NonPositiveLowerBound { t: lo, m: path.bounds_at(lo)?.m });
        }
        times.push(u);
        lo = u;
        m_lo = path.m_integral(u)?;
    }
    Ok(times)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EllSource {
    /// Supremum of `k/m` over a grid of this many points on `[0, span]`.
    GridEstimate { points: usize, span: f64 },
    UserSupplied,
}

/// The discretization. Serializes to exactly the keys
/// `ell, h, r, mu, nu, horizon_N, u, nu_per_step, accepted`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub ell: f64,
    #[serde(rename = "h")]
    pub h_int: u32,
    pub r: f64,
    pub mu: f64,
    pub nu: f64,
    #[serde(rename = "horizon_N")]
    pub horizon_n: usize,
    /// `u_0 = 0, u_1, …, u_N`.
    pub u: Vec<f64>,
    /// `ν_{u_n,u_{n+1}}` for `n = 0..N`.
    pub nu_per_step: Vec<f64>,
    pub accepted: bool,
    #[serde(skip, default = "default_source")]
    pub ell_source: EllSource,
}

fn default_source() -> EllSource {
    EllSource::UserSupplied
}

impl Schedule {
    /// First `n` with `μ^h ≥ ν_{u_n,u_{n+1}}`.
    pub fn failing_index(&self) -> Option<usize> {
        let mu_h = self.mu.powi(self.h_int as i32);
        self.nu_per_step.iter().position(|&nu| !(mu_h < nu))
    }

    /// `μ^h/ν`, the theoretical bound on the ratio of consecutive chain increments.
    pub fn contraction_ratio(&self) -> f64 {
        self.mu.powi(self.h_int as i32) / self.nu
    }

    pub fn last_time(&self) -> f64 {
        *self.u.last().expect("schedule has u_0")
    }
}

/// Least integer strictly greater than `ell`.
pub fn h_int_for(ell: f64) -> u32 {
    ell.floor() as u32 + 1
}

/// Geometric-midpoint radius: `C(r)² = (1 + h/ℓ)/2`.
pub fn midpoint_radius(ell: f64, h_int: u32) -> f64 {
    let target = (1.0 + h_int as f64 / ell) / 2.0;
    let s = target.sqrt();
    (s - 1.0) / (s + 1.0)
}

/// Grid on `[0, span]` with spacing at most `ELL_GRID_SPACING`, plus
/// points just either side of each breakpoint.
pub fn ell_grid(path: &LinearPath, span: f64) -> Vec<f64> {
    let n = ((span / ELL_GRID_SPACING).ceil() as usize + 1).clamp(2, ELL_GRID_MAX_POINTS);
    let mut grid = crate::linear::uniform_grid(0.0, span, n);
    for &bp in path.breakpoints() {
        if bp > 0.0 && bp < span {
            grid.push(bp);
            grid.push((bp - 1e-9).max(0.0));
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Builds the schedule without failing on `μ^h ≥ ν`; `accepted` records
/// the verdict. `r_override` replaces the midpoint policy and must satisfy
/// `C(r)² < h/ℓ`.
pub fn build_schedule(
    path: &LinearPath,
    ell: f64,
    ell_source: EllSource,
    n_max: usize,
    r_override: Option<f64>,
) -> Result<Schedule> {
    if !(ell.is_finite() && ell >= 1.0) {
        return Err(Error::InvalidInput(format!("bunching constant must be finite and >= 1, got {ell}")));
    }
    let h_int = h_int_for(ell);
    let r = match r_override {
        None => midpoint_radius(ell, h_int),
        Some(r) => {
            if !(r > 0.0 && r < 1.0 && big_c(r).powi(2) < h_int as f64 / ell) {
                return Err(Error::BadParameter {
                    key: "r".into(),
                    reason: format!("need 0 < r < 1 with C(r)^2 < h/ell = {}", h_int as f64 / ell),
                });
            }
            r
        }
    };
    let mut u = vec![0.0];
    u.extend(compute_times(path, n_max, DEFAULT_ROOT_TOL)?);
    let cr = big_c(r);
    let nu_per_step: Vec<f64> = u
        .windows(2)
        .map(|w| path.integrals_between(w[0], w[1]).map(|(_, k)| (-cr * k).exp()))
        .collect::<Result<_>>()?;
    let nu = nu_per_step.iter().copied().fold(f64::INFINITY, f64::min);
    let mu = (-small_c(r)).exp();
    let mut schedule =
        Schedule { ell, h_int, r, mu, nu, horizon_n: n_max, u, nu_per_step, accepted: false, ell_source };
    schedule.accepted = schedule.failing_index().is_none();
    Ok(schedule)
}

/// As [`build_schedule`] with `ℓ` supplied, but rejects when `μ^h ≥ ν`.
pub fn derive_parameters(path: &LinearPath, ell: f64, n_max: usize) -> Result<Schedule> {
    let schedule = build_schedule(path, ell, EllSource::UserSupplied, n_max, None)?;
    reject_unless_accepted(schedule)
}

fn reject_unless_accepted(schedule: Schedule) -> Result<Schedule> {
    match schedule.failing_index() {
        None => Ok(schedule),
        Some(index) => Err(Error::ScheduleRejected {
            index,
            mu_h: schedule.mu.powi(schedule.h_int as i32),
            nu: schedule.nu_per_step[index],
        }),
    }
}

/// Estimates `ℓ` on a grid covering `[0, u_N]` and builds the schedule.
pub fn schedule_for_path(path: &LinearPath, n_max: usize, r_override: Option<f64>) -> Result<Schedule> {
    let times = compute_times(path, n_max, DEFAULT_ROOT_TOL)?;
    let span = *times.last().expect("n_max >= 1");
    let grid = ell_grid(path, span);
    let ell = ell_estimate(path, &grid)?;
    build_schedule(path, ell, EllSource::GridEstimate { points: grid.len(), span }, n_max, r_override)
}

/// `max_n |M(u_{n+1}) − M(u_n) − 1|` from fresh quadratures, which also
/// bounds `|μ_{u_n,u_{n+1}}/e^{−c(r)} − 1|` to first order.
pub fn unit_mass_defect(path: &LinearPath, schedule: &Schedule) -> Result<f64> {
    let mut worst = 0.0_f64;
    for w in schedule.u.windows(2) {
        let (m, _) = path.integrals_between(w[0], w[1])?;
        worst = worst.max((m - 1.0).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRatioEntry {
    pub s: f64,
    pub t: f64,
    pub ratio: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRatioReport {
    pub r: f64,
    pub ell: f64,
    pub passed: bool,
    pub entries: Vec<LogRatioEntry>,
}

/// `log ν_{s,t} / log μ_{s,t} = C(r)²·∫k/∫m ≤ C(r)²·ℓ + 1e-9` per interval.
pub fn log_ratio_check(path: &LinearPath, r: f64, ell: f64, intervals: &[(f64, f64)]) -> Result<LogRatioReport> {
    let c2 = big_c(r).powi(2);
    let mut report = LogRatioReport { r, ell, passed: true, entries: Vec::with_capacity(intervals.len()) };
    for &(s, t) in intervals {
        if !(s < t) {
            return Err(Error::InvalidInput(format!("log-ratio interval needs s < t, got ({s}, {t})")));
        }
        let (m, k) = path.integrals_between(s, t)?;
        if !(m > 0.0) {
            return Err(Error::NonPositiveLowerBound { t: s, m });
        }
        let ratio = c2 * k / m;
        let bound = c2 * ell;
        report.passed &= ratio <= bound + LOG_RATIO_SLACK;
        report.entries.push(LogRatioEntry { s, t, ratio, bound });
    }
    Ok(report)
}

/// `ν·|z| ≤ |φ_{u_n,u_{n+1}}(z)| ≤ μ·|z|` for the given points (each with
/// `|z| ≤ r`) and steps, with relative slack `20·tol + quad_tol`.
pub fn sandwich_check(
    field: &FieldSpec,
    schedule: &Schedule,
    steps: &[usize],
    points: &[Vec<C64>],
    tol: f64,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("contraction_sandwich");
    let allowance = 20.0 * tol + field.linear().quad_tol();
    for &n in steps {
        if n + 1 >= schedule.u.len() {
            return Err(Error::BeyondHorizon { t: schedule.u[schedule.u.len() - 1], u_max: schedule.last_time() });
        }
        let (s, t) = (schedule.u[n], schedule.u[n + 1]);
        for z in points {
            let r = vec_norm(z);
            if r > schedule.r * (1.0 + 1e-12) || r == 0.0 {
                return Err(Error::InvalidInput(format!("sandwich points need 0 < |z| <= r, got {r}")));
            }
            let ratio = vec_norm(&evolve_point(field, s, t, z, tol)?.0) / r;
            let slack = (ratio.ln() - schedule.nu.ln()).min(schedule.mu.ln() - ratio.ln());
            report.record(slack, allowance, z, t);
        }
    }
    Ok(report)
}
