//! Polynomial field files (JSON).
//!
//! ```json
//! {
//!   "dim": 2,
//!   "breakpoints": [1.5],
//!   "linear": [
//!     { "constant": { "re": [[1, 0], [0, 1]] } },
//!     { "constant": { "re": [[1, 0], [0, 1]] },
//!       "trig": [ { "omega": 1.0, "sin": { "re": [[0, 0], [0, 0.3]] } } ] }
//!   ],
//!   "quadratic": [
//!     { "out_index": 0, "in_indices": [0, 1], "coeff_re": 0.2, "coeff_im": 0.0,
//!       "time_profile": "constant" }
//!   ]
//! }
//! ```
//!
//! `linear` holds one block per piece (`breakpoints.len() + 1` blocks) or a
//! single block used everywhere. A block is
//! `A(t) = constant + Σ cos(ωt)·cos_matrix + sin(ωt)·sin_matrix`. Indices
//! are 0-based. Each quadratic entry adds `coeff·p(t)·z_i z_j` to
//! component `out_index`, where `p` is the time profile: `"constant"` (≡ 1)
//! or `{ "offset", "amplitude", "omega", "phase" }` meaning
//! `offset + amplitude·sin(ωt + phase)`. Unknown keys are rejected.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FieldModel, FieldSpec, QuadraticForm};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64, MAX_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin: Option<MatrixJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trig: Vec<TrigTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineProfile {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeProfile {
    Named(ConstantProfile),
    Sine(SineProfile),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantProfile {
    Constant,
}

impl Default for TimeProfile {
    fn default() -> Self {
        TimeProfile::Named(ConstantProfile::Constant)
    }
}

impl TimeProfile {
    fn value(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Named(ConstantProfile::Constant) => 1.0,
            TimeProfile::Sine(p) => p.offset + p.amplitude * (p.omega * t + p.phase).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticTerm {
    pub out_index: usize,
    pub in_indices: [usize; 2],
    pub coeff_re: f64,
    #[serde(default)]
    pub coeff_im: f64,
    #[serde(default)]
    pub time_profile: TimeProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialFieldFile {
    pub dim: usize,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub linear: Vec<LinearBlock>,
    #[serde(default)]
    pub quadratic: Vec<QuadraticTerm>,
}

struct CompiledBlock {
    constant: ComplexMatrix,
    trig: Vec<(f64, ComplexMatrix, ComplexMatrix)>,
}

/// Field model compiled from a [`PolynomialFieldFile`].
pub struct PolynomialField {
    dim: usize,
    breakpoints: Vec<f64>,
    blocks: Vec<CompiledBlock>,
    quadratic: Vec<QuadraticTerm>,
}

fn matrix(dim: usize, m: &MatrixJson, what: &str) -> Result<ComplexMatrix> {
    let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == dim && rows.iter().all(|r| r.len() == dim);
    if !shape_ok(&m.re) || m.im.as_ref().is_some_and(|im| !shape_ok(im)) {
        return Err(Error::FieldFile(format!("{what}: expected a {dim}x{dim} matrix")));
    }
    let mut data = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            let im = m.im.as_ref().map_or(0.0, |im| im[i][j]);
            data.push(C64::new(m.re[i][j], im));
        }
    }
    ComplexMatrix::from_row_major(dim, data).map_err(|e| Error::FieldFile(format!("{what}: {e}")))
}

impl PolynomialField {
    pub fn compile(file: &PolynomialFieldFile) -> Result<Self> {
        let q = file.dim;
        if !(1..=MAX_DIM).contains(&q) {
            return Err(Error::FieldFile(format!("dim: must be in 1..={MAX_DIM}, got {q}")));
        }
        let pieces = file.breakpoints.len() + 1;
        if file.linear.len() != pieces && file.linear.len() != 1 {
            return Err(Error::FieldFile(format!(
                "linear: expected 1 or {pieces} blocks for {} breakpoints, got {}",
                file.breakpoints.len(),
                file.linear.len()
            )));
        }
        let blocks = file
            .linear
            .iter()
            .enumerate()
            .map(|(b, block)| {
                let constant = match &block.constant {
                    Some(m) => matrix(q, m, &format!("linear[{b}].constant"))?,
                    None => ComplexMatrix::zeros(q),
                };
                let trig = block
                    .trig
                    .iter()
                    .enumerate()
                    .map(|(k, term)| {
                        let ctx = format!("linear[{b}].trig[{k}]");
                        if !term.omega.is_finite() {
                            return Err(Error::FieldFile(format!("{ctx}.omega: must be finite")));
                        }
                        let cos = match &term.cos {
                            Some(m) => matrix(q, m, &format!("{ctx}.cos"))?,
                            None => ComplexMatrix::zeros(q),
                        };
                        let sin = match &term.sin {
                            Some(m) => matrix(q, m, &format!("{ctx}.sin"))?,
                            None => ComplexMatrix::zeros(q),
                        };
                        Ok((term.omega, cos, sin))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(CompiledBlock { constant, trig })
            })
            .collect::<Result<Vec<_>>>()?;
        for (n, term) in file.quadratic.iter().enumerate() {
            if term.out_index >= q || term.in_indices.iter().any(|&i| i >= q) {
                return Err(Error::FieldFile(format!("quadratic[{n}]: index out of range for dim {q}")));
            }
            if !(term.coeff_re.is_finite() && term.coeff_im.is_finite()) {
                return Err(Error::FieldFile(format!("quadratic[{n}]: coefficients must be finite")));
            }
        }
        Ok(Self { dim: q, breakpoints: file.breakpoints.clone(), blocks, quadratic: file.quadratic.clone() })
    }

    fn block(&self, piece: usize) -> &CompiledBlock {
        if self.blocks.len() == 1 {
            &self.blocks[0]
        } else {
            &self.blocks[piece.min(self.blocks.len() - 1)]
        }
    }

    fn form(&self, t: f64) -> QuadraticForm {
        let mut h = QuadraticForm::zeros(self.dim);
        for term in &self.quadratic {
            let c = C64::new(term.coeff_re, term.coeff_im) * term.time_profile.value(t);
            h.add_monomial(term.out_index, term.in_indices[0], term.in_indices[1], c);
        }
        h
    }
}

impl FieldModel for PolynomialField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }

    fn linear_part(&self, t: f64, piece: usize) -> ComplexMatrix {
        let block = self.block(piece);
        let mut a = block.constant.clone();
        for (omega, cos, sin) in &block.trig {
            let (s, c) = (omega * t).sin_cos();
            a = &a + &(&cos.scale(c) + &sin.scale(s));
        }
        a
    }

    fn remainder(&self, z: &[C64], t: f64, _piece: usize, out: &mut [C64]) {
        out.fill(C64::new(0.0, 0.0));
        for term in &self.quadratic {
            let c = C64::new(term.coeff_re, term.coeff_im) * term.time_profile.value(t);
            out[term.out_index] += c * z[term.in_indices[0]] * z[term.in_indices[1]];
        }
    }

    fn quadratic_part(&self, t: f64, _piece: usize) -> Option<QuadraticForm> {
        Some(self.form(t))
    }
}

/// Parses a field file from JSON text.
pub fn parse_field_json(text: &str) -> Result<PolynomialFieldFile> {
    serde_json::from_str(text).map_err(|e| Error::FieldFile(e.to_string()))
}

/// Loads and validates a polynomial field.
pub fn load_field_file(path: &Path, quad_tol: f64) -> Result<FieldSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::FieldFile(format!("{}: {e}", path.display())))?;
    field_from_json(&text, quad_tol)
}

pub fn field_from_json(text: &str, quad_tol: f64) -> Result<FieldSpec> {
    let file = parse_field_json(text)?;
    let model = PolynomialField::compile(&file)?;
    FieldSpec::new(Arc::new(model), "custom", quad_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PIECEWISE: &str = r#"{
        "dim": 2,
        "breakpoints": [1.5],
        "linear": [
            { "constant": { "re": [[1, 0], [0, 1]] } },
            { "constant": { "re": [[2, 0], [0, 2]] },
              "trig": [ { "omega": 2.0, "sin": { "re": [[0, 0], [0, 0.5]] } } ] }
        ],
        "quadratic": [
            { "out_index": 0, "in_indices": [0, 1], "coeff_re": 0.2, "coeff_im": 0.1,
              "time_profile": "constant" },
            { "out_index": 1, "in_indices": [0, 0], "coeff_re": 0.1,
              "time_profile": { "offset": 1.0, "amplitude": 0.5, "omega": 1.0, "phase": 0.0 } }
        ]
    }"#;

    #[test]
    fn piecewise_file_evaluates() {
        let f = field_from_json(PIECEWISE, 1e-10).unwrap();
        assert_eq!(f.breakpoints(), &[1.5]);
        assert_eq!(f.linear().matrix_at(1.0), ComplexMatrix::identity(2));
        let a = f.linear().matrix_at(2.0);
        assert!((a[(1, 1)].re - (2.0 + 0.5 * (4.0_f64).sin())).abs() < 1e-15);
        let z = [C64::new(0.3, 0.0), C64::new(0.0, 0.2)];
        let h = f.eval(&z, 0.5);
        let expect0 = z[0] + C64::new(0.2, 0.1) * z[0] * z[1];
        let expect1 = z[1] + 0.1 * (1.0 + 0.5 * 0.5_f64.sin()) * z[0] * z[0];
        assert!((h[0] - expect0).norm() < 1e-15 && (h[1] - expect1).norm() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{ "dim": 1, "linear": [ { "constant": { "re": [[1]] } } ], "colour": "red" }"#;
        let err = field_from_json(text, 1e-10).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let text = r#"{ "dim": 1, "linear": [ { "constant": { "re": [[1]], "imag": [[0]] } } ] }"#;
        assert!(field_from_json(text, 1e-10).is_err());
    }

    #[test]
    fn shape_errors_name_the_block() {
        let text = r#"{ "dim": 2, "linear": [ { "constant": { "re": [[1]] } } ] }"#;
        let err = field_from_json(text, 1e-10).unwrap_err();
        assert!(err.to_string().contains("linear[0].constant"), "{err}");
    }

    #[test]
    fn exact_quadratic_matches_finite_differences() {
        let f = field_from_json(PIECEWISE, 1e-10).unwrap();
        let exact = f.quadratic_part(0.7, 0);
        let fd = f.quadratic_part_fd(0.7, 0, 1e-3);
        for i in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    assert!((exact.get(i, a, b) - fd.get(i, a, b)).norm() < 1e-9);
                }
            }
        }
    }
}
