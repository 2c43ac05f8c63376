//! Deterministic low-discrepancy sampling of the ball and the time horizon.
//!
//! Points come from a Halton sequence with a Cranley–Patterson rotation
//! drawn from a seeded ChaCha stream, so identical seeds give identical
//! samples. Directions on the complex sphere `S^{2q−1}` are obtained by
//! normalising Box–Muller Gaussians.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{vec_norm, C64};

const PRIMES: [u32; 20] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71];

/// Radical inverse of `index` in base `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut acc = 0.0;
    while index > 0 {
        acc += (index % b) as f64 * f;
        index /= b;
        f *= inv;
    }
    acc
}

/// Rotated Halton stream in `dims ≤ 20` dimensions.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
    next: u64,
}

impl Halton {
    pub fn new(dims: usize, seed: u64) -> Self {
        assert!(dims <= PRIMES.len(), "Halton sequence supports at most {} dimensions", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dims).map(|_| rng.random::<f64>()).collect();
        // index 0 is the origin of the unrotated sequence; skip it
        Self { shift, next: 1 }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.next;
        self.next += 1;
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(s, p)| {
                let u = radical_inverse(i, p) + s;
                u - u.floor()
            })
            .collect()
    }
}

fn direction_from_uniforms(u: &[f64]) -> Vec<C64> {
    let v: Vec<C64> = u
        .chunks(2)
        .map(|pair| {
            let r = (-2.0 * pair[0].max(1e-300).ln()).sqrt();
            C64::from_polar(r, std::f64::consts::TAU * pair[1])
        })
        .collect();
    let n = vec_norm(&v);
    if n == 0.0 {
        let mut e = vec![C64::new(0.0, 0.0); v.len()];
        e[0] = C64::new(1.0, 0.0);
        return e;
    }
    v.into_iter().map(|z| z / n).collect()
}

/// `count` unit vectors in `ℂ^q`. For `q = 1` these are equally spaced
/// points of the circle, rotated by a seed-dependent phase.
pub fn sphere_directions(q: usize, count: usize, seed: u64) -> Vec<Vec<C64>> {
    if q == 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase: f64 = rng.random();
        return (0..count)
            .map(|k| vec![C64::from_polar(1.0, std::f64::consts::TAU * (k as f64 + phase) / count as f64)])
            .collect();
    }
    let mut h = Halton::new(2 * q, seed);
    (0..count).map(|_| direction_from_uniforms(&h.next_point())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub radii: Vec<f64>,
    pub per_shell: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub seed: u64,
}

pub const DEFAULT_RADII: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_PER_SHELL: usize = 4096;

impl SamplePlan {
    pub fn new(t_min: f64, t_max: f64, per_shell: usize, seed: u64) -> Self {
        Self { radii: DEFAULT_RADII.to_vec(), per_shell, t_min, t_max, seed }
    }

    pub fn total(&self) -> usize {
        self.radii.len() * self.per_shell
    }

    /// Samples `(z, t)` with `|z|` exactly on each radius shell.
    pub fn samples(&self, q: usize) -> Vec<(Vec<C64>, f64)> {
        let mut out = Vec::with_capacity(self.total());
        for (shell, &r) in self.radii.iter().enumerate() {
            let mut h = Halton::new(2 * q + 1, self.seed.wrapping_add(shell as u64 * 0x9E37_79B9));
            for _ in 0..self.per_shell {
                let u = h.next_point();
                let dir = direction_from_uniforms(&u[..2 * q]);
                let t = self.t_min + (self.t_max - self.t_min) * u[2 * q];
                out.push((dir.into_iter().map(|z| z * r).collect(), t));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_eq!(radical_inverse(4, 2), 0.125);
    }

    #[test]
    fn directions_are_unit_and_deterministic() {
        let a = sphere_directions(3, 50, 7);
        let b = sphere_directions(3, 50, 7);
        assert_eq!(a, b);
        assert!(a.iter().all(|d| (vec_norm(d) - 1.0).abs() < 1e-14));
        assert_ne!(a, sphere_directions(3, 50, 8));
    }

    #[test]
    fn plan_respects_radii_and_horizon() {
        let plan = SamplePlan::new(1.0, 3.0, 16, 1);
        let s = plan.samples(2);
        assert_eq!(s.len(), 9 * 16);
        for (i, (z, t)) in s.iter().enumerate() {
            assert!((vec_norm(z) - plan.radii[i / 16]).abs() < 1e-14);
            assert!((1.0..=3.0).contains(t));
        }
    }
}
