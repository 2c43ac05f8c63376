//! Built-in field families used as the test corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{class_n_check, FieldModel, FieldSpec, QuadraticForm, VALIDATION_HORIZON};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64, MAX_DIM};
use crate::linear::DEFAULT_QUAD_TOL;
use crate::sampling::SamplePlan;

/// Named numeric parameters, e.g. `q`, `eps`, `d_2`, `a_1_2_im`.
pub type ParamTable = BTreeMap<String, f64>;

/// Samples per radius shell used when validating built-in fields.
const VALIDATION_PER_SHELL: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ConstantLinear,
    DiagonalPeriodic,
    Koebe1d,
    QuadraticPerturbation,
}

impl Family {
    pub const ALL: [Family; 4] =
        [Family::ConstantLinear, Family::DiagonalPeriodic, Family::Koebe1d, Family::QuadraticPerturbation];

    pub fn name(self) -> &'static str {
        match self {
            Family::ConstantLinear => "constant-linear",
            Family::DiagonalPeriodic => "diagonal-periodic",
            Family::Koebe1d => "koebe-1d",
            Family::QuadraticPerturbation => "quadratic-perturbation",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

struct Params<'a> {
    table: &'a ParamTable,
}

impl<'a> Params<'a> {
    fn get(&self, key: &str, default: f64) -> f64 {
        self.table.get(key).copied().unwrap_or(default)
    }

    fn dim(&self, default: usize) -> Result<usize> {
        let q = self.get("q", default as f64);
        if q.fract() != 0.0 || !(1.0..=MAX_DIM as f64).contains(&q) {
            return Err(bad("q", format!("dimension must be an integer in 1..={MAX_DIM}, got {q}")));
        }
        Ok(q as usize)
    }

    /// Rejects keys not accepted by `allowed`.
    fn check_keys(&self, allowed: impl Fn(&str) -> bool) -> Result<()> {
        for (k, v) in self.table {
            if !allowed(k) {
                return Err(bad(k, "unknown parameter for this family".into()));
            }
            if !v.is_finite() {
                return Err(bad(k, "value must be finite".into()));
            }
        }
        Ok(())
    }
}

fn bad(key: &str, reason: String) -> Error {
    Error::BadParameter { key: key.to_string(), reason }
}

/// Parses `prefix_i_j[_k][_im]` with 1-based indices into 0-based indices.
fn parse_indexed(key: &str, prefix: &str, arity: usize, q: usize) -> Option<(Vec<usize>, bool)> {
    let rest = key.strip_prefix(prefix)?.strip_prefix('_')?;
    let (rest, imag) = match rest.strip_suffix("_im") {
        Some(r) => (r, true),
        None => (rest, false),
    };
    let idx: Vec<usize> = rest.split('_').map(|s| s.parse::<usize>().ok()).collect::<Option<_>>()?;
    if idx.len() != arity || idx.iter().any(|&i| i == 0 || i > q) {
        return None;
    }
    Some((idx.into_iter().map(|i| i - 1).collect(), imag))
}

fn diagonal_from(params: &Params, q: usize) -> Vec<f64> {
    (0..q).map(|i| params.get(&format!("d_{}", i + 1), 1.0)).collect()
}

struct ConstantLinear {
    a: ComplexMatrix,
}

impl FieldModel for ConstantLinear {
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn linear_part(&self, _t: f64, _piece: usize) -> ComplexMatrix {
        self.a.clone()
    }
    fn remainder(&self, _z: &[C64], _t: f64, _piece: usize, out: &mut [C64]) {
        out.fill(C64::new(0.0, 0.0));
    }
    fn quadratic_part(&self, _t: f64, _piece: usize) -> Option<QuadraticForm> {
        Some(QuadraticForm::zeros(self.a.dim()))
    }
}

/// `A(t) = diag(d_1, …, d_{q−1}, d_q·(1 + amp·sin(ωt)))`, optionally with `εB(z)`.
struct ModulatedDiagonal {
    diag: Vec<f64>,
    amp: f64,
    omega: f64,
    quadratic: QuadraticForm,
}

impl ModulatedDiagonal {
    fn matrix(&self, t: f64) -> ComplexMatrix {
        let mut d = self.diag.clone();
        let last = d.len() - 1;
        d[last] *= 1.0 + self.amp * (self.omega * t).sin();
        ComplexMatrix::real_diagonal(&d)
    }
}

impl FieldModel for ModulatedDiagonal {
    fn dim(&self) -> usize {
        self.diag.len()
    }
    fn linear_part(&self, t: f64, _piece: usize) -> ComplexMatrix {
        self.matrix(t)
    }
    fn remainder(&self, z: &[C64], _t: f64, _piece: usize, out: &mut [C64]) {
        out.copy_from_slice(&self.quadratic.eval(z));
    }
    fn quadratic_part(&self, _t: f64, _piece: usize) -> Option<QuadraticForm> {
        Some(self.quadratic.clone())
    }
}

/// `h(z) = z(1 − z)/(1 + z)` on the disc.
struct Koebe;

impl FieldModel for Koebe {
    fn dim(&self) -> usize {
        1
    }
    fn linear_part(&self, _t: f64, _piece: usize) -> ComplexMatrix {
        ComplexMatrix::identity(1)
    }
    fn remainder(&self, z: &[C64], _t: f64, _piece: usize, out: &mut [C64]) {
        let w = z[0];
        out[0] = -2.0 * w * w / (1.0 + w);
    }
    fn quadratic_part(&self, _t: f64, _piece: usize) -> Option<QuadraticForm> {
        let mut h = QuadraticForm::zeros(1);
        h.add_monomial(0, 0, 0, C64::new(-2.0, 0.0));
        Some(h)
    }
}

/// Builds a built-in field. Families other than `constant-linear` with
/// non-default parameters are validated for class N by sampling and
/// rejected with [`Error::ClassNRejected`] when the check fails.
pub fn builtin_field(family: Family, params: &ParamTable) -> Result<FieldSpec> {
    builtin_field_with_tol(family, params, DEFAULT_QUAD_TOL)
}

pub fn builtin_field_with_tol(family: Family, params: &ParamTable, quad_tol: f64) -> Result<FieldSpec> {
    let p = Params { table: params };
    let model: Arc<dyn FieldModel> = match family {
        Family::ConstantLinear => {
            let q = p.dim(2)?;
            p.check_keys(|k| {
                k == "q"
                    || parse_indexed(k, "d", 1, q).is_some_and(|(_, im)| !im)
                    || parse_indexed(k, "a", 2, q).is_some()
            })?;
            let mut a = ComplexMatrix::real_diagonal(&diagonal_from(&p, q));
            for (k, &v) in params {
                if let Some((idx, imag)) = parse_indexed(k, "a", 2, q) {
                    let entry = &mut a[(idx[0], idx[1])];
                    if imag {
                        entry.im = v;
                    } else {
                        entry.re = v;
                    }
                }
            }
            Arc::new(ConstantLinear { a })
        }
        Family::DiagonalPeriodic => {
            let q = p.dim(2)?;
            p.check_keys(|k| matches!(k, "q" | "amp" | "omega" | "base"))?;
            let amp = p.get("amp", 0.3);
            if amp.abs() >= 1.0 {
                return Err(bad("amp", format!("|amp| must be < 1 so that m(A(t)) > 0, got {amp}")));
            }
            let base = p.get("base", 1.0);
            if base <= 0.0 {
                return Err(bad("base", format!("must be positive, got {base}")));
            }
            Arc::new(ModulatedDiagonal {
                diag: vec![base; q],
                amp,
                omega: p.get("omega", 1.0),
                quadratic: QuadraticForm::zeros(q),
            })
        }
        Family::Koebe1d => {
            p.check_keys(|_| false)?;
            Arc::new(Koebe)
        }
        Family::QuadraticPerturbation => {
            let q = p.dim(2)?;
            p.check_keys(|k| {
                matches!(k, "q" | "eps" | "amp" | "omega")
                    || parse_indexed(k, "d", 1, q).is_some_and(|(_, im)| !im)
                    || parse_indexed(k, "b", 3, q).is_some()
            })?;
            let eps = p.get("eps", 0.25);
            let amp = p.get("amp", 0.0);
            if amp.abs() >= 1.0 {
                return Err(bad("amp", format!("|amp| must be < 1, got {amp}")));
            }
            let user_b: Vec<_> =
                params.iter().filter_map(|(k, &v)| parse_indexed(k, "b", 3, q).map(|(i, im)| (i, im, v))).collect();
            let mut b = QuadraticForm::zeros(q);
            if user_b.is_empty() {
                // B(z)_i = z_i z_{i+1 mod q}
                for i in 0..q {
                    b.add_monomial(i, i, (i + 1) % q, C64::new(1.0, 0.0));
                }
            } else {
                for (idx, imag, v) in user_b {
                    let c = if imag { C64::new(0.0, v) } else { C64::new(v, 0.0) };
                    b.add_monomial(idx[0], idx[1], idx[2], c);
                }
            }
            let mut scaled = QuadraticForm::zeros(q);
            for i in 0..q {
                for a in 0..q {
                    for c in 0..q {
                        scaled.set_symmetric(i, a, c, b.get(i, a, c) * eps);
                    }
                }
            }
            Arc::new(ModulatedDiagonal {
                diag: diagonal_from(&p, q),
                amp,
                omega: p.get("omega", 1.0),
                quadratic: scaled,
            })
        }
    };
    let spec = FieldSpec::new(model, family.name(), quad_tol)?;
    if family != Family::ConstantLinear {
        let plan = SamplePlan::new(0.0, VALIDATION_HORIZON, VALIDATION_PER_SHELL, 0);
        let report = class_n_check(&spec, &plan);
        if !report.passed {
            return Err(Error::ClassNRejected { count: report.violations, min_inner: report.min_inner });
        }
    }
    Ok(spec)
}

/// The built-in validation corpus: `(label, field)` pairs.
pub fn corpus() -> Vec<(String, FieldSpec)> {
    corpus_with_tol(DEFAULT_QUAD_TOL)
}

/// The built-in corpus with a given quadrature tolerance.
pub fn corpus_with_tol(quad_tol: f64) -> Vec<(String, FieldSpec)> {
    let entries: Vec<(&str, Family, Vec<(&str, f64)>)> = vec![
        ("identity", Family::ConstantLinear, vec![]),
        ("diag-1-2", Family::ConstantLinear, vec![("d_2", 2.0)]),
        ("diag-2-3", Family::ConstantLinear, vec![("d_1", 2.0), ("d_2", 3.0)]),
        ("diagonal-periodic", Family::DiagonalPeriodic, vec![]),
        ("koebe-1d", Family::Koebe1d, vec![]),
        ("quadratic-perturbation", Family::QuadraticPerturbation, vec![]),
        ("quadratic-periodic", Family::QuadraticPerturbation, vec![("amp", 0.3)]),
    ];
    entries
        .into_iter()
        .map(|(label, fam, kv)| {
            let params: ParamTable = kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            (label.to_string(), builtin_field_with_tol(fam, &params, quad_tol).expect("corpus field is valid"))
        })
        .collect()
}
