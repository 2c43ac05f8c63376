//! Sampling checks of class N membership and of the pointwise bounds a
//! class-N field must satisfy.

use serde::{Deserialize, Serialize};

use super::FieldSpec;
use crate::linalg::{inner, vec_norm, C64};
use crate::sampling::{sphere_directions, SamplePlan};

/// Witness lists are truncated to this many entries; counts are exact.
pub const MAX_WITNESSES: usize = 32;
/// Slack allowed in the two-sided bound on `Re⟨h(w), w⟩`.
pub const GURGANUS_SLACK: f64 = 1e-10;
/// Bound on the Jacobian of the remainder at the origin.
pub const REMAINDER_JACOBIAN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWitness {
    /// Point as `[re, im]` pairs.
    pub z: Vec<[f64; 2]>,
    pub t: f64,
    pub value: f64,
}

impl SampleWitness {
    pub fn new(z: &[C64], t: f64, value: f64) -> Self {
        Self { z: z.iter().map(|c| [c.re, c.im]).collect(), t, value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassNReport {
    pub samples: usize,
    /// Minimum of `Re⟨h(z,t), z⟩ / |z|²` over the samples.
    pub min_inner: f64,
    pub passed: bool,
    pub violations: usize,
    pub witnesses: Vec<SampleWitness>,
}

/// Generic pass/fail report of a sampled inequality. `tightest_slack` is
/// the smallest observed slack (negative means violated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub violations: usize,
    pub tightest_slack: f64,
    pub tightest_at: Option<SampleWitness>,
    pub witnesses: Vec<SampleWitness>,
}

impl CheckReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            passed: true,
            samples: 0,
            violations: 0,
            tightest_slack: f64::INFINITY,
            tightest_at: None,
            witnesses: Vec::new(),
        }
    }

    /// Records one sample; `slack < -allowance` is a violation.
    pub fn record(&mut self, slack: f64, allowance: f64, z: &[C64], t: f64) {
        self.samples += 1;
        if slack < self.tightest_slack || slack.is_nan() {
            self.tightest_slack = slack;
            self.tightest_at = Some(SampleWitness::new(z, t, slack));
        }
        if !(slack >= -allowance) {
            self.passed = false;
            self.violations += 1;
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(SampleWitness::new(z, t, slack));
            }
        }
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.samples += other.samples;
        self.violations += other.violations;
        self.passed &= other.passed;
        if other.tightest_slack < self.tightest_slack {
            self.tightest_slack = other.tightest_slack;
            self.tightest_at = other.tightest_at;
        }
        let room = MAX_WITNESSES.saturating_sub(self.witnesses.len());
        self.witnesses.extend(other.witnesses.into_iter().take(room));
    }
}

/// `C(r) = (1 + r)/(1 − r)`.
pub fn big_c(r: f64) -> f64 {
    (1.0 + r) / (1.0 - r)
}

/// `c(r) = (1 − r)/(1 + r)`.
pub fn small_c(r: f64) -> f64 {
    (1.0 - r) / (1.0 + r)
}

/// Samples `Re⟨h(z,t), z⟩ > 0` over the plan.
pub fn class_n_check(field: &FieldSpec, plan: &SamplePlan) -> ClassNReport {
    let mut report =
        ClassNReport { samples: 0, min_inner: f64::INFINITY, passed: true, violations: 0, witnesses: Vec::new() };
    let mut h = vec![C64::new(0.0, 0.0); field.dim()];
    for (z, t) in plan.samples(field.dim()) {
        field.eval_into(&z, t, &mut h);
        let n2 = vec_norm(&z).powi(2);
        let value = inner(&h, &z).re / n2;
        report.samples += 1;
        if value < report.min_inner || value.is_nan() {
            report.min_inner = value;
        }
        if !(value > 0.0) {
            report.passed = false;
            report.violations += 1;
            if report.witnesses.len() < MAX_WITNESSES {
                report.witnesses.push(SampleWitness::new(&z, t, value));
            }
        }
    }
    report
}

/// Samples `Re⟨A w, w⟩ c(|w|) ≤ Re⟨h(w), w⟩ ≤ Re⟨A w, w⟩ C(|w|)`.
pub fn gurganus_check(field: &FieldSpec, plan: &SamplePlan) -> CheckReport {
    let mut report = CheckReport::new("gurganus");
    let mut h = vec![C64::new(0.0, 0.0); field.dim()];
    for (w, t) in plan.samples(field.dim()) {
        let r = vec_norm(&w);
        field.eval_into(&w, t, &mut h);
        let a = field.linear().matrix_at(t);
        let lin = inner(&a.mul_vec(&w), &w).re;
        let mid = inner(&h, &w).re;
        let lower = mid - lin * small_c(r);
        let upper = lin * big_c(r) - mid;
        report.record(lower.min(upper), GURGANUS_SLACK, &w, t);
    }
    report
}

/// Checks `|h(z,t)| ≤ 4r/(1−r)² ‖A(t)‖` for `|z| ≤ r`, `t` on the grid.
pub fn growth_check(field: &FieldSpec, r: f64, grid: &[f64], directions: usize, seed: u64) -> CheckReport {
    let mut report = CheckReport::new("growth");
    if !(r > 0.0 && r < 1.0) {
        report.passed = false;
        report.tightest_slack = f64::NAN;
        return report;
    }
    let dirs = sphere_directions(field.dim(), directions, seed);
    let mut h = vec![C64::new(0.0, 0.0); field.dim()];
    for &t in grid {
        let bound = 4.0 * r / (1.0 - r).powi(2) * field.linear().matrix_at(t).operator_norm();
        for frac in [0.25, 0.5, 0.75, 1.0] {
            for d in &dirs {
                let z: Vec<C64> = d.iter().map(|x| x * (r * frac)).collect();
                field.eval_into(&z, t, &mut h);
                report.record(bound - vec_norm(&h), 1e-12 * bound.max(1.0), &z, t);
            }
        }
    }
    report
}

/// Checks `h(0, t) = 0` and that the remainder's Jacobian at the origin
/// vanishes, estimated by Richardson extrapolation of central
/// differences at steps `1e-3` and `5e-4`.
pub fn remainder_vanishing_check(field: &FieldSpec, grid: &[f64]) -> CheckReport {
    let q = field.dim();
    let zero = vec![C64::new(0.0, 0.0); q];
    let mut report = CheckReport::new("remainder_vanishing");
    for &t in grid {
        let at_origin = vec_norm(&field.eval(&zero, t));
        report.record(-at_origin, 0.0, &zero, t);
        let mut jac_norm2 = 0.0;
        for j in 0..q {
            let column = |eps: f64| -> Vec<C64> {
                let mut zp = zero.clone();
                zp[j] = C64::new(eps, 0.0);
                let mut zm = zero.clone();
                zm[j] = C64::new(-eps, 0.0);
                let rp = field.remainder(&zp, t);
                let rm = field.remainder(&zm, t);
                rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
            };
            let coarse = column(1e-3);
            let fine = column(5e-4);
            let extrapolated: Vec<C64> = fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
            jac_norm2 += vec_norm(&extrapolated).powi(2);
        }
        report.record(REMAINDER_JACOBIAN_TOL - jac_norm2.sqrt(), 0.0, &zero, t);
    }
    report
}
