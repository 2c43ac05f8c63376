//! Embedded Dormand–Prince 5(4) integrator for complex state vectors.
//!
//! The integrator never steps across a declared breakpoint: each segment
//! between breakpoints is integrated separately and the right-hand side
//! receives the index of the piece it is being evaluated on, so one-sided
//! definitions at breakpoints are honoured.

use crate::error::{Error, Result};
use crate::linalg::C64;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const PI_ALPHA: f64 = 0.17;
const PI_BETA: f64 = 0.08;
const MAX_GROWTH: f64 = 5.0;
const MIN_SHRINK: f64 = 0.2;

/// Floor of the mixed absolute/relative error scale.
pub const ERROR_SCALE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    /// Local error per unit step, relative to `max(|y|, scale_floor)`.
    pub tol: f64,
    pub max_steps: usize,
    pub scale_floor: f64,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, max_steps: 5_000_000, scale_floor: ERROR_SCALE_FLOOR }
    }

    /// Purely relative error control, for trajectories whose magnitude
    /// decays far below the default floor.
    pub fn relative(tol: f64) -> Self {
        Self { scale_floor: f64::MIN_POSITIVE, ..Self::with_tol(tol) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub steps_taken: usize,
    pub steps_rejected: usize,
    pub max_local_error: f64,
}

impl OdeStats {
    pub fn merge(&mut self, other: &OdeStats) {
        self.steps_taken += other.steps_taken;
        self.steps_rejected += other.steps_rejected;
        self.max_local_error = self.max_local_error.max(other.max_local_error);
    }
}

/// Index of the piece containing `t` (pieces are right-continuous).
pub fn piece_index(breakpoints: &[f64], t: f64) -> usize {
    breakpoints.partition_point(|&b| b <= t)
}

/// Splits `[t0, t1]` at the breakpoints strictly inside it.
pub fn segments(breakpoints: &[f64], t0: f64, t1: f64) -> Vec<(f64, f64, usize)> {
    let mut cuts = vec![t0];
    cuts.extend(breakpoints.iter().copied().filter(|&b| b > t0 && b < t1));
    cuts.push(t1);
    cuts.windows(2).map(|w| (w[0], w[1], piece_index(breakpoints, w[0]))).collect()
}

fn max_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Integrates `y' = rhs(t, piece, y)` from `t0` to `t1 ≥ t0`, updating `y`.
///
/// `observer` sees every accepted step `(t, y)`; returning an error aborts.
pub fn integrate<F, O>(
    rhs: F,
    t0: f64,
    t1: f64,
    y: &mut [C64],
    breakpoints: &[f64],
    opts: &OdeOptions,
    mut observer: O,
) -> Result<OdeStats>
where
    F: Fn(f64, usize, &[C64], &mut [C64]) -> Result<()>,
    O: FnMut(f64, &[C64]) -> Result<()>,
{
    if !(t1 >= t0) {
        return Err(Error::InvalidInput(format!("backward integration requested: [{t0}, {t1}]")));
    }
    let mut stats = OdeStats::default();
    for (a, b, piece) in segments(breakpoints, t0, t1) {
        integrate_segment(&rhs, a, b, piece, y, opts, &mut observer, &mut stats)?;
    }
    Ok(stats)
}

#[allow(clippy::too_many_arguments)]
fn integrate_segment<F, O>(
    rhs: &F,
    a: f64,
    b: f64,
    piece: usize,
    y: &mut [C64],
    opts: &OdeOptions,
    observer: &mut O,
    stats: &mut OdeStats,
) -> Result<()>
where
    F: Fn(f64, usize, &[C64], &mut [C64]) -> Result<()>,
    O: FnMut(f64, &[C64]) -> Result<()>,
{
    let n = y.len();
    let span = b - a;
    if span <= 0.0 {
        return Ok(());
    }
    let zero = C64::new(0.0, 0.0);
    let mut k = vec![vec![zero; n]; 7];
    let mut tmp = vec![zero; n];
    let mut y_new = vec![zero; n];

    let mut t = a;
    rhs(t, piece, y, &mut k[0])?;

    let mut h = {
        let sc = max_norm(y).max(opts.scale_floor);
        let d1 = max_norm(&k[0]);
        let guess = if d1 > 1e-300 { 0.01 * sc / d1 } else { span };
        guess.clamp(1e-6_f64.min(span), span)
    };
    let mut err_prev = 1e-4_f64;
    let mut steps = 0usize;

    while t < b {
        let remaining = b - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h <= 1e-13 * t.abs().max(1.0) {
            return Err(Error::Stiffness { t, h });
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Stiffness { t, h });
        }

        for i in 0..n {
            tmp[i] = y[i] + k[0][i] * (h * A21);
        }
        rhs(t + C2 * h, piece, &tmp, &mut k[1])?;
        for i in 0..n {
            tmp[i] = y[i] + (k[0][i] * A31 + k[1][i] * A32) * h;
        }
        rhs(t + C3 * h, piece, &tmp, &mut k[2])?;
        for i in 0..n {
            tmp[i] = y[i] + (k[0][i] * A41 + k[1][i] * A42 + k[2][i] * A43) * h;
        }
        rhs(t + C4 * h, piece, &tmp, &mut k[3])?;
        for i in 0..n {
            tmp[i] = y[i] + (k[0][i] * A51 + k[1][i] * A52 + k[2][i] * A53 + k[3][i] * A54) * h;
        }
        rhs(t + C5 * h, piece, &tmp, &mut k[4])?;
        for i in 0..n {
            tmp[i] = y[i]
                + (k[0][i] * A61 + k[1][i] * A62 + k[2][i] * A63 + k[3][i] * A64 + k[4][i] * A65) * h;
        }
        rhs(t + h, piece, &tmp, &mut k[5])?;
        for i in 0..n {
            y_new[i] = y[i]
                + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * h;
        }
        let t_new = if last { b } else { t + h };
        rhs(t_new, piece, &y_new, &mut k[6])?;

        let mut err_abs = 0.0_f64;
        for i in 0..n {
            let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7)
                * h;
            err_abs = err_abs.max(e.norm());
        }
        if !err_abs.is_finite() || y_new.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            stats.steps_rejected += 1;
            h *= MIN_SHRINK;
            continue;
        }
        let sc = max_norm(y).max(max_norm(&y_new)).max(opts.scale_floor);
        let err = if err_abs == 0.0 { 0.0 } else { err_abs / (opts.tol * h * sc) };

        if err <= 1.0 {
            stats.steps_taken += 1;
            stats.max_local_error = stats.max_local_error.max(err_abs);
            y.copy_from_slice(&y_new);
            t = t_new;
            k.swap(0, 6);
            observer(t, y)?;
            let fac = if err == 0.0 {
                MAX_GROWTH
            } else {
                (SAFETY * err.powf(-PI_ALPHA) * err_prev.powf(PI_BETA)).clamp(MIN_SHRINK, MAX_GROWTH)
            };
            err_prev = err.max(1e-4);
            h = (h * fac).min(span);
        } else {
            stats.steps_rejected += 1;
            h *= (SAFETY * err.powf(-0.25)).max(MIN_SHRINK);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(rate: f64) -> impl Fn(f64, usize, &[C64], &mut [C64]) -> Result<()> {
        move |_t, _p, y, dy| {
            for (d, v) in dy.iter_mut().zip(y) {
                *d = -v * rate;
            }
            Ok(())
        }
    }

    #[test]
    fn exponential_decay_is_accurate() {
        let mut y = vec![C64::new(0.5, 0.25)];
        let stats =
            integrate(decay(1.0), 0.0, 3.0, &mut y, &[], &OdeOptions::with_tol(1e-10), |_, _| Ok(())).unwrap();
        let exact = C64::new(0.5, 0.25) * (-3.0_f64).exp();
        assert!((y[0] - exact).norm() < 1e-11 * exact.norm() * 10.0);
        assert!(stats.steps_taken > 0);
    }

    #[test]
    fn zero_length_interval_leaves_state_untouched() {
        let mut y = vec![C64::new(0.3, -0.1)];
        let stats =
            integrate(decay(1.0), 1.0, 1.0, &mut y, &[], &OdeOptions::with_tol(1e-10), |_, _| Ok(())).unwrap();
        assert_eq!(y[0], C64::new(0.3, -0.1));
        assert_eq!(stats.steps_taken, 0);
    }

    #[test]
    fn steps_never_straddle_breakpoints() {
        let bps = [0.7, 1.3];
        let mut seen = Vec::new();
        let mut y = vec![C64::new(1.0, 0.0)];
        let rhs = |_t: f64, piece: usize, y: &[C64], dy: &mut [C64]| {
            let rate = [1.0, 3.0, 0.5][piece];
            dy[0] = -y[0] * rate;
            Ok(())
        };
        integrate(rhs, 0.0, 2.0, &mut y, &bps, &OdeOptions::with_tol(1e-11), |t, _| {
            seen.push(t);
            Ok(())
        })
        .unwrap();
        assert!(seen.contains(&0.7) && seen.contains(&1.3));
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        let exact = (-(0.7 + 3.0 * 0.6 + 0.5 * 0.7_f64)).exp();
        assert!((y[0].re - exact).abs() < 1e-10);
    }

    #[test]
    fn backward_interval_is_rejected() {
        let mut y = vec![C64::new(1.0, 0.0)];
        assert!(integrate(decay(1.0), 1.0, 0.0, &mut y, &[], &OdeOptions::with_tol(1e-8), |_, _| Ok(())).is_err());
    }
}
