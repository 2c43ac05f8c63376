//! Cross-checks against independent oracles: nalgebra eigensolvers,
//! characteristic polynomials, closed-form flows and jets.

use loewner::field::{builtin_field, polynomial::field_from_json, Family, ParamTable};
use loewner::flow::{evolve_point, jet2_transition};
use loewner::linalg::{eigenvalues, hermitian_eigenvalues, spectral_abscissa, vec_dist, ComplexMatrix};
use loewner::linear::{hermitian_bounds, transition_matrix, LinearPath};
use loewner::C64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, q: usize) -> ComplexMatrix {
    let data = (0..q * q).map(|_| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
    ComplexMatrix::from_row_major(q, data).unwrap()
}

fn to_nalgebra(a: &ComplexMatrix) -> DMatrix<C64> {
    DMatrix::from_row_slice(a.dim(), a.dim(), a.as_slice())
}

/// Greedy multiset match of two spectra.
fn spectra_distance(a: &[C64], b: &[C64]) -> f64 {
    let mut pool = b.to_vec();
    let mut worst = 0.0_f64;
    for x in a {
        let (idx, d) = pool
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        worst = worst.max(d);
        pool.swap_remove(idx);
    }
    worst
}

#[test]
fn hermitian_spectrum_matches_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for q in 1..=8 {
        for _ in 0..20 {
            let h = random_matrix(&mut rng, q).hermitian_part();
            let ours = hermitian_eigenvalues(&h);
            let mut theirs: Vec<f64> = to_nalgebra(&h).symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(f64::total_cmp);
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()), "q={q}: {ours:?} vs {theirs:?}");
            }
        }
    }
}

#[test]
fn general_spectrum_matches_nalgebra_schur() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for q in 1..=8 {
        for _ in 0..20 {
            let a = random_matrix(&mut rng, q);
            let ours = eigenvalues(&a).unwrap();
            let theirs: Vec<C64> = to_nalgebra(&a).schur().eigenvalues().expect("complex Schur form").iter().copied().collect();
            let d = spectra_distance(&ours, &theirs);
            assert!(d < 1e-8, "q={q}: distance {d}");
        }
    }
}

#[test]
fn two_by_two_spectrum_matches_characteristic_polynomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let a = random_matrix(&mut rng, 2);
        let tr = a[(0, 0)] + a[(1, 1)];
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let disc = (tr * tr - det * 4.0).sqrt();
        let roots = [(tr + disc) / 2.0, (tr - disc) / 2.0];
        let d = spectra_distance(&eigenvalues(&a).unwrap(), &roots);
        assert!(d < 1e-10, "distance {d}");
    }
}

#[test]
fn repeated_eigenvalues_stay_accurate() {
    let id = ComplexMatrix::identity(4);
    for lambda in eigenvalues(&id).unwrap() {
        assert!((lambda - C64::new(1.0, 0.0)).norm() < 1e-13);
    }
    let b = hermitian_bounds(&id).unwrap();
    assert!(spectral_abscissa(&id).unwrap() <= b.k + 1e-9);
}

#[test]
fn transition_matrix_matches_diagonal_exponential() {
    let path = LinearPath::constant(ComplexMatrix::real_diagonal(&[1.0, 2.0, 0.5]), 1e-12).unwrap();
    let t = transition_matrix(&path, 0.3, 1.7, 1e-11).unwrap();
    for (i, d) in [1.0_f64, 2.0, 0.5].iter().enumerate() {
        assert!((t[(i, i)].re - (-d * 1.4).exp()).abs() < 1e-11);
    }
}

#[test]
fn transition_matrix_matches_nalgebra_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = random_matrix(&mut rng, 3);
    let path = LinearPath::constant(a.clone(), 1e-12).unwrap();
    let ours = transition_matrix(&path, 0.0, 0.8, 1e-12).unwrap();
    let theirs = (to_nalgebra(&a) * C64::new(-0.8, 0.0)).exp();
    for i in 0..3 {
        for j in 0..3 {
            assert!((ours[(i, j)] - theirs[(i, j)]).norm() < 1e-9, "({i},{j})");
        }
    }
}

#[test]
fn koebe_flow_matches_the_explicit_semigroup() {
    // φ_{0,t} for h = z(1−z)/(1+z) satisfies k(φ) = e^{−t} k(z) with the Koebe function k(z) = z/(1−z)²
    let f = builtin_field(Family::Koebe1d, &ParamTable::new()).unwrap();
    let koebe = |z: C64| z / ((1.0 - z) * (1.0 - z));
    for &(re, im) in &[(0.5, 0.0), (-0.3, 0.4), (0.1, -0.8)] {
        let z = C64::new(re, im);
        for t in [0.5, 2.0] {
            let w = evolve_point(&f, 0.0, t, &[z], 1e-11).unwrap().0[0];
            assert!((koebe(w) - koebe(z) * (-t).exp()).norm() < 1e-9, "z={z} t={t}");
        }
    }
}

#[test]
fn jet_of_z_plus_z_squared() {
    let f = field_from_json(
        r#"{ "dim": 1, "linear": [ { "constant": { "re": [[1]] } } ],
             "quadratic": [ { "out_index": 0, "in_indices": [0, 0], "coeff_re": 1.0, "time_profile": "constant" } ] }"#,
        1e-12,
    )
    .unwrap();
    // exact flow w(t) = z e^{−t} / (1 + z (1 − e^{−t}))
    let e = (-1.0_f64).exp();
    let flow = |z: f64| z * e / (1.0 + z * (1.0 - e));
    let eps = 1e-3;
    let fd = (flow(eps) + flow(-eps)) / (2.0 * eps * eps);
    let jet = jet2_transition(&f, 0.0, 1.0, 1e-12).unwrap();
    assert!((fd - e * (e - 1.0)).abs() < 1e-5);
    assert!((jet.quadratic[0].re - e * (e - 1.0)).abs() < 1e-10);
    let z = [C64::new(0.01, 0.0)];
    let exact = flow(0.01);
    assert!(vec_dist(&jet.apply(&z), &[C64::new(exact, 0.0)]) < 1e-5);
}
