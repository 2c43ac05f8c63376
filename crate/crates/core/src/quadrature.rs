//! Adaptive Simpson quadrature for scalar and small vector integrands.

const MAX_DEPTH: u32 = 48;

/// `∫_a^b f` to absolute tolerance `tol` (Richardson-corrected adaptive Simpson).
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    adaptive_simpson_vec(|t| vec![f(t)], a, b, tol)[0]
}

/// Vector version; the error test uses the max-norm over components.
pub fn adaptive_simpson_vec<F>(f: F, a: f64, b: f64, tol: f64) -> Vec<f64>
where
    F: Fn(f64) -> Vec<f64>,
{
    if a == b {
        return vec![0.0; f(a).len()];
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, &fa, &fm, &fb);
    recurse(&f, a, b, &fa, &fm, &fb, &whole, tol, MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    let w = (b - a) / 6.0;
    fa.iter().zip(fm).zip(fb).map(|((x, y), z)| w * (x + 4.0 * y + z)).collect()
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: &[f64],
    tol: f64,
    depth: u32,
) -> Vec<f64>
where
    F: Fn(f64) -> Vec<f64>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, &flm, fm);
    let right = simpson(m, b, fm, &frm, fb);
    let err = left
        .iter()
        .zip(&right)
        .zip(whole)
        .map(|((l, r), w)| (l + r - w).abs())
        .fold(0.0, f64::max);
    if depth == 0 || err <= 15.0 * tol || m <= a || b <= m {
        return left
            .iter()
            .zip(&right)
            .zip(whole)
            .map(|((l, r), w)| l + r + (l + r - w) / 15.0)
            .collect();
    }
    let mut l = recurse(f, a, m, fa, &flm, fm, &left, 0.5 * tol, depth - 1);
    let r = recurse(f, m, b, fm, &frm, fb, &right, 0.5 * tol, depth - 1);
    for (x, y) in l.iter_mut().zip(r) {
        *x += y;
    }
    l
}
