//! Consolidated per-field check suites: the hypothesis analysis and the
//! full invariant suite over flow, schedule and chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::ChainEvaluator;
use crate::error::{Error, Result};
use crate::field::{
    class_n_check, growth_check, gurganus_check, remainder_vanishing_check, CheckReport, ClassNReport, FieldSpec,
    SampleWitness, GURGANUS_SLACK,
};
use crate::flow::{contraction_check, decay_bounds_check, lipschitz_check, semigroup_defect};
use crate::linalg::{vec_dist, vec_norm, C64};
use crate::linear::{classify_hypotheses, uniform_grid, HypothesisReport, Verdict};
use crate::sampling::{sphere_directions, SamplePlan, DEFAULT_PER_SHELL};
use crate::schedule::{
    log_ratio_check, sandwich_check, schedule_for_path, unit_mass_defect, Schedule, DEFAULT_ROOT_TOL,
};

/// Sampling and tolerance settings shared by the suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub tol_ode: f64,
    pub tol_chain: f64,
    pub horizon: usize,
    pub seed: u64,
    /// Samples per radius shell for the class N and Gurganus checks.
    pub per_shell: usize,
    /// Sphere directions per radius for flow checks.
    pub directions: usize,
    /// Time span `[0, t_max]` of sampled checks.
    pub t_max: f64,
    /// Number of random `(s, u, t)` triples in the semigroup check.
    pub semigroup_triples: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            tol_ode: 1e-10,
            tol_chain: 1e-8,
            horizon: 200,
            seed: 0,
            per_shell: DEFAULT_PER_SHELL,
            directions: 16,
            t_max: 4.0,
            semigroup_triples: 20,
        }
    }
}

impl SuiteConfig {
    fn radii() -> Vec<f64> {
        (1..=9).map(|i| i as f64 / 10.0).collect()
    }

    fn time_grid(&self) -> Vec<f64> {
        uniform_grid(0.0, self.t_max, 41)
    }

    fn intervals(&self) -> Vec<(f64, f64)> {
        vec![(0.0, self.t_max / 4.0), (self.t_max / 8.0, self.t_max / 2.0), (self.t_max / 4.0, self.t_max)]
    }
}

/// Output of the hypothesis analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub field: String,
    pub hypotheses: HypothesisReport,
    /// True when at least one existence theorem has all hypotheses satisfied.
    pub some_theorem_applies: bool,
    pub class_n: ClassNReport,
    pub gurganus: CheckReport,
    pub growth: CheckReport,
    pub remainder_vanishing: CheckReport,
    pub passed: bool,
}

/// Classifies `A(t)` against the existence theorems and samples the
/// class N, Gurganus and growth bounds.
pub fn analyze_field(label: &str, field: &FieldSpec, cfg: &SuiteConfig) -> Result<AnalysisReport> {
    let grid = uniform_grid(0.0, cfg.t_max.max(1.0) * 4.0, 401);
    let hypotheses = classify_hypotheses(field.linear(), &grid)?;
    let some_theorem_applies = hypotheses.theorems.iter().any(|t| t.verdict == Verdict::Satisfied);
    let plan = SamplePlan::new(0.0, cfg.t_max, cfg.per_shell, cfg.seed);
    let class_n = class_n_check(field, &plan);
    let gurganus = gurganus_check(field, &plan);
    let mut growth = growth_check(field, 0.5, &cfg.time_grid(), cfg.directions, cfg.seed);
    growth.merge(growth_check(field, 0.9, &cfg.time_grid(), cfg.directions, cfg.seed));
    let remainder_vanishing = remainder_vanishing_check(field, &cfg.time_grid());
    let passed =
        some_theorem_applies && class_n.passed && gurganus.passed && growth.passed && remainder_vanishing.passed;
    Ok(AnalysisReport {
        field: label.into(),
        hypotheses,
        some_theorem_applies,
        class_n,
        gurganus,
        growth,
        remainder_vanishing,
        passed,
    })
}

/// One entry of the invariant suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub violations: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    /// Threshold the worst value is compared against.
    pub tolerance: f64,
    pub witnesses: Vec<SampleWitness>,
    pub note: Option<String>,
}

impl SuiteCheck {
    fn from_report(report: CheckReport, tolerance: f64) -> Self {
        Self {
            name: report.name,
            passed: report.passed,
            samples: report.samples,
            violations: report.violations,
            worst: report.tightest_slack,
            tolerance,
            witnesses: report.witnesses,
            note: Some("worst is the tightest slack; violated below -tolerance".into()),
        }
    }

    fn at_most(name: &str, worst: f64, tolerance: f64, samples: usize) -> Self {
        let passed = worst <= tolerance;
        Self {
            name: name.into(),
            passed,
            samples,
            violations: usize::from(!passed),
            worst,
            tolerance,
            witnesses: Vec::new(),
            note: None,
        }
    }

    fn at_least(name: &str, worst: f64, tolerance: f64, samples: usize) -> Self {
        let passed = worst >= tolerance;
        Self { passed, violations: usize::from(!passed), ..Self::at_most(name, worst, tolerance, samples) }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn failed_with(name: &str, err: &Error) -> Self {
        Self {
            name: name.into(),
            passed: false,
            samples: 0,
            violations: 1,
            worst: f64::NAN,
            tolerance: f64::NAN,
            witnesses: Vec::new(),
            note: Some(err.to_string()),
        }
    }
}

/// Output of the invariant suite for one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub field: String,
    pub passed: bool,
    pub first_failure: Option<String>,
    pub schedule: Option<Schedule>,
    pub chain_available: bool,
    pub chain_unavailable_reason: Option<String>,
    pub checks: Vec<SuiteCheck>,
}

impl SuiteReport {
    fn push(&mut self, check: SuiteCheck) {
        if !check.passed && self.first_failure.is_none() {
            self.first_failure = Some(check.name.clone());
        }
        self.passed &= check.passed;
        self.checks.push(check);
    }

    /// Runs a check; mathematical failures become failing entries,
    /// numerical failures abort the suite.
    fn run(&mut self, name: &str, f: impl FnOnce() -> Result<SuiteCheck>) -> Result<()> {
        match f() {
            Ok(c) => self.push(c),
            Err(e) if e.is_numerical() => return Err(e),
            Err(e) => self.push(SuiteCheck::failed_with(name, &e)),
        }
        Ok(())
    }
}

fn shell_points(q: usize, radii: &[f64], directions: usize, seed: u64) -> Vec<Vec<C64>> {
    let dirs = sphere_directions(q, directions, seed);
    radii.iter().flat_map(|&r| dirs.iter().map(move |d| d.iter().map(|c| c * r).collect::<Vec<_>>())).collect()
}

/// Runs every invariant check on one field. Class N is checked first and
/// a failure there stops the suite, since the flow checks presuppose it.
pub fn run_suite(label: &str, field: &FieldSpec, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut report = SuiteReport {
        field: label.into(),
        passed: true,
        first_failure: None,
        schedule: None,
        chain_available: false,
        chain_unavailable_reason: None,
        checks: Vec::new(),
    };
    let q = field.dim();
    let plan = SamplePlan::new(0.0, cfg.t_max, cfg.per_shell, cfg.seed);
    let class_n = class_n_check(field, &plan);
    report.push(SuiteCheck {
        name: "class_n".into(),
        passed: class_n.passed,
        samples: class_n.samples,
        violations: class_n.violations,
        worst: class_n.min_inner,
        tolerance: 0.0,
        witnesses: class_n.witnesses,
        note: Some("worst is min Re<h(z,t),z>/|z|^2; must be > 0".into()),
    });
    if !report.passed {
        return Ok(report);
    }
    let grid = cfg.time_grid();
    report.push(SuiteCheck::from_report(remainder_vanishing_check(field, &grid), 0.0));
    report.push(SuiteCheck::from_report(gurganus_check(field, &plan), GURGANUS_SLACK));
    let mut growth = growth_check(field, 0.5, &grid, cfg.directions, cfg.seed);
    growth.merge(growth_check(field, 0.9, &grid, cfg.directions, cfg.seed));
    report.push(SuiteCheck::from_report(growth, 0.0));

    let flow_points = shell_points(q, &SuiteConfig::radii(), cfg.directions, cfg.seed);
    report.run("semigroup", || {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let pts: Vec<Vec<C64>> = flow_points.iter().step_by(flow_points.len().div_ceil(4).max(1)).cloned().collect();
        let mut worst = 0.0_f64;
        for _ in 0..cfg.semigroup_triples {
            let mut st = [0.0; 3].map(|_: f64| rng.random_range(0.0..cfg.t_max));
            st.sort_by(f64::total_cmp);
            worst = worst.max(semigroup_defect(field, st[0], st[1], st[2], &pts, cfg.tol_ode)?);
        }
        Ok(SuiteCheck::at_most("semigroup", worst, 20.0 * cfg.tol_ode, cfg.semigroup_triples * pts.len()))
    })?;
    report.run("decay_bounds", || {
        let mut merged = CheckReport::new("decay_bounds");
        for (s, t) in cfg.intervals() {
            merged.merge(decay_bounds_check(field, s, t, &flow_points, cfg.tol_ode)?);
        }
        Ok(SuiteCheck::from_report(merged, field.linear().quad_tol() + 20.0 * cfg.tol_ode))
    })?;
    report.run("contraction", || {
        let mut merged = CheckReport::new("contraction");
        for (s, t) in cfg.intervals() {
            merged.merge(contraction_check(field, s, t, &flow_points, cfg.tol_ode)?);
        }
        Ok(SuiteCheck::from_report(merged, 1e-9))
    })?;
    report.run("lipschitz_in_t", || {
        let times = uniform_grid(0.0, cfg.t_max, 9);
        let pts = shell_points(q, &[0.3, 0.8], 4, cfg.seed);
        Ok(SuiteCheck::from_report(lipschitz_check(field, 0.0, &times, &pts, cfg.tol_ode)?, 1e-9))
    })?;

    let schedule = match schedule_for_path(field.linear(), cfg.horizon, None) {
        Ok(s) => s,
        Err(e) if e.is_numerical() => return Err(e),
        Err(e) => {
            report.push(SuiteCheck::failed_with("schedule", &e));
            return Ok(report);
        }
    };
    report.schedule = Some(schedule.clone());
    let mut accepted =
        SuiteCheck::at_most("schedule_accepted", schedule.contraction_ratio(), 1.0, schedule.nu_per_step.len())
            .with_note("worst is mu^h/nu over the horizon; accepted iff mu^h < nu_n for every step");
    accepted.passed = schedule.accepted;
    accepted.violations = usize::from(!schedule.accepted);
    report.push(accepted);
    report.run("unit_mass", || {
        let defect = unit_mass_defect(field.linear(), &schedule)?;
        let tol = 2.0 * (DEFAULT_ROOT_TOL + field.linear().quad_tol());
        Ok(SuiteCheck::at_most("unit_mass", defect, tol, schedule.horizon_n))
    })?;
    report.run("log_ratio", || {
        let intervals: Vec<(f64, f64)> = schedule.u.windows(2).take(50).map(|w| (w[0], w[1])).collect();
        let lr = log_ratio_check(field.linear(), schedule.r, schedule.ell, &intervals)?;
        let worst = lr.entries.iter().map(|e| e.ratio - e.bound).fold(f64::NEG_INFINITY, f64::max);
        Ok(SuiteCheck::at_most("log_ratio", worst, crate::schedule::LOG_RATIO_SLACK, lr.entries.len())
            .with_note("worst is max of C(r)^2 (int k/int m) - C(r)^2 ell"))
    })?;
    report.run("contraction_sandwich", || {
        let steps: Vec<usize> = (0..schedule.horizon_n.min(5)).collect();
        let pts = shell_points(q, &[0.5 * schedule.r, schedule.r], 8, cfg.seed);
        let sw = sandwich_check(field, &schedule, &steps, &pts, cfg.tol_ode)?;
        let tol = 20.0 * cfg.tol_ode + field.linear().quad_tol();
        Ok(SuiteCheck::from_report(sw, tol))
    })?;

    let ev = match ChainEvaluator::new(field.clone(), schedule.clone(), cfg.tol_ode, cfg.tol_chain) {
        Ok(ev) => ev,
        Err(e @ (Error::RequiresHigherOrderMatching { .. } | Error::ScheduleRejected { .. })) => {
            report.chain_unavailable_reason = Some(e.to_string());
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    report.chain_available = true;
    let chain_points = shell_points(q, &[0.2, 0.5, 0.8], 4, cfg.seed);
    report.run("chain_identity", || {
        let mut worst = 0.0_f64;
        for (s, t) in [(0.0, 1.0), (1.0, 2.0)] {
            worst = worst.max(ev.identity_residual(s, t, &chain_points)?);
        }
        Ok(SuiteCheck::at_most(
            "chain_identity",
            worst,
            50.0 * (cfg.tol_ode + cfg.tol_chain),
            2 * chain_points.len(),
        ))
    })?;
    report.run("pde_residual", || {
        let mut worst = 0.0_f64;
        for t in [0.5, 1.0] {
            worst = worst.max(ev.pde_residual(t, &chain_points, 1e-4)?.residual);
        }
        Ok(SuiteCheck::at_most("pde_residual", worst, 1e-4, 2 * chain_points.len()))
    })?;
    report.run("normalization", || {
        let mut worst = 0.0_f64;
        for t in [0.0, 1.0] {
            let d = ev.derivative_at_origin(t)?;
            let origin = vec![C64::new(0.0, 0.0); q];
            worst = worst.max(vec_norm(&ev.eval(t, &origin)?.value));
            let step = 1e-5;
            for j in 0..q {
                let mut plus = origin.clone();
                plus[j] = C64::new(step, 0.0);
                let mut minus = origin.clone();
                minus[j] = C64::new(-step, 0.0);
                let fp = ev.eval_converged(t, &plus)?.value;
                let fm = ev.eval_converged(t, &minus)?.value;
                for i in 0..q {
                    let fd = (fp[i] - fm[i]) / (2.0 * step);
                    worst = worst.max((fd - d[(i, j)]).norm() / (1.0 + d[(i, j)].norm()));
                }
            }
        }
        Ok(SuiteCheck::at_most("normalization", worst, 1e-6, 2 * q))
    })?;
    report.run("injectivity", || {
        let pts = shell_points(q, &[0.1, 0.4, 0.7, 0.9], 8, cfg.seed);
        let gap = ev.injectivity_gap(1.0, &pts)?;
        Ok(SuiteCheck::at_least("injectivity", gap, 1e-10, pts.len()).with_note("worst is the smallest |f_t(z) - f_t(w)| over distinct pairs; must be >= tolerance"))
    })?;
    report.run("geometric_increments", || {
        let rho = schedule.contraction_ratio();
        let mut worst = f64::NEG_INFINITY;
        let mut counted = 0;
        for t in [0.0, 1.0] {
            for v in ev.eval_many(t, &chain_points)?.into_iter().filter(|v| v.converged) {
                let floor = 1e-12 * (1.0 + vec_norm(&v.value));
                for j in 1..v.increments.len() {
                    if v.radii[j - 1] <= schedule.r && v.radii[j] <= schedule.r {
                        counted += 1;
                        worst = worst.max(v.increments[j] - 1.1 * rho * v.increments[j - 1] - floor);
                    }
                }
            }
        }
        Ok(SuiteCheck::at_most("geometric_increments", worst.max(0.0), 0.0, counted)
            .with_note("worst is the excess over 1.1 (mu^2/nu) times the previous increment plus 1e-12 (1 + |f|)"))
    })?;
    report.run("horizon_stability", || {
        let mut worst = 0.0_f64;
        let mut compared = 0;
        for z in &chain_points {
            let v = ev.eval(1.0, z)?;
            if v.converged && v.m_used + 5 <= schedule.horizon_n {
                worst = worst.max(vec_dist(&v.value, &ev.eval_fixed(1.0, z, v.m_used + 5)?));
                compared += 1;
            }
        }
        Ok(SuiteCheck::at_most("horizon_stability", worst, cfg.tol_chain, compared))
    })?;
    report.run("chain_converged", || {
        let mut unconverged = 0;
        let mut total = 0;
        for t in [0.0, 1.0] {
            for v in ev.eval_many(t, &chain_points)? {
                total += 1;
                unconverged += usize::from(!v.converged);
            }
        }
        Ok(SuiteCheck::at_most("chain_converged", unconverged as f64, 0.0, total)
            .with_note("worst is the number of unconverged evaluations"))
    })?;
    Ok(report)
}
