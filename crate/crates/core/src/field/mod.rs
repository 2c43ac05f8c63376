//! Herglotz vector fields `−h(z, t)` with `h(z, t) = A(t)z + remainder`.
//!
//! A field is described by a [`FieldModel`] (the evaluation interface for
//! custom fields) and wrapped in a [`FieldSpec`], which owns the
//! [`LinearPath`] of its linear part and the validation metadata.

mod builtin;
mod checks;
pub mod polynomial;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, C64};
use crate::linear::LinearPath;
use crate::ode;

pub use builtin::{builtin_field, builtin_field_with_tol, corpus, corpus_with_tol, Family, ParamTable};
pub use checks::{
    big_c, class_n_check, growth_check, gurganus_check, remainder_vanishing_check, small_c, CheckReport, ClassNReport,
    SampleWitness, GURGANUS_SLACK,
};

/// Horizon over which fields are validated at construction.
pub const VALIDATION_HORIZON: f64 = 10.0;
/// Step of the central differences used to extract the quadratic part.
pub const QUADRATIC_FD_STEP: f64 = 1e-5;

/// Evaluation interface of a field `h(z, t) = A(t)z + r(z, t)`.
///
/// `piece` is the index of the interval between consecutive breakpoints
/// on which `t` is being evaluated; implementations without breakpoints
/// can ignore it.
pub trait FieldModel: Send + Sync {
    fn dim(&self) -> usize;

    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn linear_part(&self, t: f64, piece: usize) -> ComplexMatrix;

    /// The remainder `r(z, t) = h(z, t) − A(t)z`, which must vanish to
    /// second order at the origin.
    fn remainder(&self, z: &[C64], t: f64, piece: usize, out: &mut [C64]);

    /// Exact quadratic part of the remainder at the origin, when known.
    fn quadratic_part(&self, _t: f64, _piece: usize) -> Option<QuadraticForm> {
        None
    }
}

/// Symmetric vector-valued quadratic form `H[z, z]_i = Σ_{a,b} H_{iab} z_a z_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    dim: usize,
    coeffs: Vec<C64>,
}

impl QuadraticForm {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, coeffs: vec![C64::new(0.0, 0.0); dim * dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, a: usize, b: usize) -> C64 {
        self.coeffs[(i * self.dim + a) * self.dim + b]
    }

    /// Adds `c · z_a z_b` to output component `i`, split symmetrically.
    pub fn add_monomial(&mut self, i: usize, a: usize, b: usize, c: C64) {
        let q = self.dim;
        if a == b {
            self.coeffs[(i * q + a) * q + a] += c;
        } else {
            self.coeffs[(i * q + a) * q + b] += c * 0.5;
            self.coeffs[(i * q + b) * q + a] += c * 0.5;
        }
    }

    pub(crate) fn set_symmetric(&mut self, i: usize, a: usize, b: usize, c: C64) {
        let q = self.dim;
        self.coeffs[(i * q + a) * q + b] = c;
        self.coeffs[(i * q + b) * q + a] = c;
    }

    pub fn eval(&self, z: &[C64]) -> Vec<C64> {
        self.bilinear(z, z)
    }

    pub fn bilinear(&self, u: &[C64], v: &[C64]) -> Vec<C64> {
        let q = self.dim;
        (0..q)
            .map(|i| {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..q {
                    for b in 0..q {
                        acc += self.get(i, a, b) * u[a] * v[b];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularity {
    /// Continuous in `t` between declared breakpoints.
    PiecewiseContinuousInT,
}

/// A validated field together with its linear path.
#[derive(Clone)]
pub struct FieldSpec {
    model: Arc<dyn FieldModel>,
    path: LinearPath,
    breakpoints: Vec<f64>,
    family_tag: String,
    regularity: Regularity,
}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSpec")
            .field("dim", &self.dim())
            .field("family_tag", &self.family_tag)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl FieldSpec {
    /// Wraps a model, checking `h(0, t) = 0` and finiteness on the closed
    /// ball of radius `1 − 1e-6` over the validation horizon.
    pub fn new(model: Arc<dyn FieldModel>, family_tag: impl Into<String>, quad_tol: f64) -> Result<Self> {
        let dim = model.dim();
        let breakpoints = model.breakpoints();
        let m = Arc::clone(&model);
        let path = LinearPath::from_arc(dim, breakpoints.clone(), quad_tol, Arc::new(move |t, p| m.linear_part(t, p)))?;
        let spec = Self {
            model,
            path,
            breakpoints,
            family_tag: family_tag.into(),
            regularity: Regularity::PiecewiseContinuousInT,
        };
        spec.validate(VALIDATION_HORIZON)?;
        Ok(spec)
    }

    fn validate(&self, horizon: f64) -> Result<()> {
        let q = self.dim();
        let zero = vec![C64::new(0.0, 0.0); q];
        let dirs = crate::sampling::sphere_directions(q, 16, 0);
        let mut out = vec![C64::new(0.0, 0.0); q];
        for t in crate::linear::uniform_grid(0.0, horizon, 41) {
            let a = self.path.matrix_at(t);
            if !a.is_finite() {
                return Err(Error::NonFiniteField { t });
            }
            self.eval_into(&zero, t, &mut out);
            if linalg::vec_norm(&out) != 0.0 {
                return Err(Error::InvalidInput(format!("h(0, {t}) != 0: the origin must be fixed")));
            }
            for d in &dirs {
                let z: Vec<C64> = d.iter().map(|x| x * (1.0 - 1e-6)).collect();
                self.eval_into(&z, t, &mut out);
                if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(Error::NonFiniteField { t });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    pub fn linear(&self) -> &LinearPath {
        &self.path
    }

    pub fn model(&self) -> &Arc<dyn FieldModel> {
        &self.model
    }

    pub fn family_tag(&self) -> &str {
        &self.family_tag
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn piece_at(&self, t: f64) -> usize {
        ode::piece_index(&self.breakpoints, t)
    }

    /// `h(z, t)` using the definition on `piece`.
    pub fn eval_on_piece(&self, z: &[C64], t: f64, piece: usize, out: &mut [C64]) {
        let a = self.model.linear_part(t, piece);
        self.model.remainder(z, t, piece, out);
        let q = z.len();
        for i in 0..q {
            let mut acc = out[i];
            for j in 0..q {
                acc += a[(i, j)] * z[j];
            }
            out[i] = acc;
        }
    }

    pub fn eval_into(&self, z: &[C64], t: f64, out: &mut [C64]) {
        self.eval_on_piece(z, t, self.piece_at(t), out);
    }

    pub fn eval(&self, z: &[C64], t: f64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); z.len()];
        self.eval_into(z, t, &mut out);
        out
    }

    pub fn remainder(&self, z: &[C64], t: f64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); z.len()];
        self.model.remainder(z, t, self.piece_at(t), &mut out);
        out
    }

    /// Quadratic part of the remainder at the origin: exact when the model
    /// provides it, else from central differences with step `1e-5`.
    pub fn quadratic_part(&self, t: f64, piece: usize) -> QuadraticForm {
        if let Some(h) = self.model.quadratic_part(t, piece) {
            return h;
        }
        self.quadratic_part_fd(t, piece, QUADRATIC_FD_STEP)
    }

    /// Finite-difference extraction of the quadratic part. Uses
    /// `(r(εv) + r(−εv))/(2ε²) = H[v, v] + O(ε²)` and polarisation.
    pub fn quadratic_part_fd(&self, t: f64, piece: usize, eps: f64) -> QuadraticForm {
        let q = self.dim();
        let zero = C64::new(0.0, 0.0);
        let diag_form = |v: &[C64]| -> Vec<C64> {
            let plus: Vec<C64> = v.iter().map(|x| x * eps).collect();
            let minus: Vec<C64> = v.iter().map(|x| x * -eps).collect();
            let mut rp = vec![zero; q];
            let mut rm = vec![zero; q];
            self.model.remainder(&plus, t, piece, &mut rp);
            self.model.remainder(&minus, t, piece, &mut rm);
            rp.iter().zip(&rm).map(|(a, b)| (a + b) / (2.0 * eps * eps)).collect()
        };
        let unit = |a: usize| {
            let mut e = vec![zero; q];
            e[a] = C64::new(1.0, 0.0);
            e
        };
        let diag: Vec<Vec<C64>> = (0..q).map(|a| diag_form(&unit(a))).collect();
        let mut form = QuadraticForm::zeros(q);
        for a in 0..q {
            for i in 0..q {
                form.set_symmetric(i, a, a, diag[a][i]);
            }
            for b in (a + 1)..q {
                let mut v = unit(a);
                v[b] = C64::new(1.0, 0.0);
                let both = diag_form(&v);
                for i in 0..q {
                    form.set_symmetric(i, a, b, (both[i] - diag[a][i] - diag[b][i]) * 0.5);
                }
            }
        }
        form
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NonVanishing;
    impl FieldModel for NonVanishing {
        fn dim(&self) -> usize {
            1
        }
        fn linear_part(&self, _t: f64, _p: usize) -> ComplexMatrix {
            ComplexMatrix::identity(1)
        }
        fn remainder(&self, _z: &[C64], _t: f64, _p: usize, out: &mut [C64]) {
            out[0] = C64::new(0.1, 0.0);
        }
    }

    #[test]
    fn moving_origin_is_rejected() {
        let err = FieldSpec::new(Arc::new(NonVanishing), "custom", 1e-10).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn quadratic_form_monomials_are_symmetrised() {
        let mut h = QuadraticForm::zeros(2);
        h.add_monomial(0, 0, 1, C64::new(2.0, 0.0));
        assert_eq!(h.get(0, 0, 1), h.get(0, 1, 0));
        let z = [C64::new(0.5, 0.0), C64::new(0.0, 1.0)];
        // 2 z0 z1
        assert!((h.eval(&z)[0] - C64::new(0.0, 1.0)).norm() < 1e-15);
    }
}
