mod common;

use std::f64::consts::PI;

use common::*;
use phaseloc_core::analysis::random_events;
use phaseloc_core::covariant::{absolute_continuity_constant, covariance_check, WeylSystem};
use phaseloc_core::linalg::{spectral_norm, StateVector};
use phaseloc_core::marginals::{marginal_p, marginal_q, momentum_kernel, position_kernel};
use phaseloc_core::povm::{is_commutative, validate_povm};
use phaseloc_core::{
    build_coherent_povm, build_wh_povm, CoherentGrid, FiducialVector, Tolerances, C64,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `<j| X^q Z^p |k> = w^{pk} [j = k + q]`, built without the library.
fn displacement_oracle(d: usize, q: usize, p: usize) -> Dense {
    let mut m = zeros(d);
    for k in 0..d {
        let phase = 2.0 * PI * ((p * k) % d) as f64 / d as f64;
        m[(k + q) % d][k] = C64::from_polar(1.0, phase);
    }
    m
}

fn outer(v: &[C64], w: f64) -> Dense {
    v.iter()
        .map(|a| v.iter().map(|b| a * b.conj() * w).collect())
        .collect()
}

fn add(a: &mut Dense, b: &Dense) {
    for (ra, rb) in a.iter_mut().zip(b) {
        for (x, y) in ra.iter_mut().zip(rb) {
            *x += y;
        }
    }
}

fn fiducial(d: usize) -> impl Strategy<Value = FiducialVector> {
    nonzero_vec(d).prop_map(|v| FiducialVector::custom(StateVector::new(v).unwrap()))
}

/// Row-major dense copy of `F^Q({x})` by double summation over `p` of
/// `D(q,p)|eta><eta|D(q,p)^dagger / d`.
fn position_marginal_oracle(d: usize, eta: &[C64], x: usize) -> Dense {
    let mut acc = zeros(d);
    for p in 0..d {
        let v = matvec(&displacement_oracle(d, x, p), eta);
        add(&mut acc, &outer(&v, 1.0 / d as f64));
    }
    acc
}

fn fourier(d: usize) -> Dense {
    (0..d)
        .map(|j| {
            (0..d)
                .map(|k| C64::from_polar(1.0 / (d as f64).sqrt(), 2.0 * PI * ((j * k) % d) as f64 / d as f64))
                .collect()
        })
        .collect()
}

fn adjoint(a: &Dense) -> Dense {
    let d = a.len();
    (0..d).map(|i| (0..d).map(|j| a[j][i].conj()).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn displacement_matches_oracle(d in 2usize..=7, q in 0usize..7, p in 0usize..7) {
        let sys = WeylSystem::new(d).unwrap();
        let lib = sys.displacement(q % d, p % d);
        let oracle = displacement_oracle(d, q % d, p % d);
        for i in 0..d {
            for j in 0..d {
                prop_assert!((lib.entry(i, j) - oracle[i][j]).norm() <= 1e-14);
            }
        }
    }

    #[test]
    fn covariance_exhaustive_small_d((d, eta) in (2usize..=8).prop_flat_map(|d| (Just(d), fiducial(d)))) {
        let povm = build_wh_povm(d, &eta).unwrap();
        let sys = WeylSystem::new(d).unwrap();
        for a in 0..d {
            for b in 0..d {
                prop_assert!(covariance_check(&povm, &sys, (a, b)).unwrap() <= 1e-10);
            }
        }
    }

    #[test]
    fn position_marginal_double_summation((d, eta) in (2usize..=6).prop_flat_map(|d| (Just(d), fiducial(d)))) {
        let fq = marginal_q(&build_wh_povm(d, &eta).unwrap()).unwrap();
        let kernel = position_kernel(&eta).unwrap();
        for x in 0..d {
            let oracle = position_marginal_oracle(d, eta.state.amplitudes(), x);
            let lib = fq.effects()[x].to_operator();
            for i in 0..d {
                for j in 0..d {
                    prop_assert!((lib.entry(i, j) - oracle[i][j]).norm() <= 1e-12);
                    // The oracle is diagonal with the kernel column on it.
                    let expected = if i == j { kernel.get(i, x) } else { 0.0 };
                    prop_assert!((oracle[i][j] - C64::new(expected, 0.0)).norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn momentum_marginal_double_summation((d, eta) in (2usize..=6).prop_flat_map(|d| (Just(d), fiducial(d)))) {
        let fp = marginal_p(&build_wh_povm(d, &eta).unwrap()).unwrap();
        let kernel = momentum_kernel(&eta).unwrap();
        let f = fourier(d);
        let fh = adjoint(&f);
        for k in 0..d {
            let mut acc = zeros(d);
            for q in 0..d {
                let v = matvec(&displacement_oracle(d, q, k), eta.state.amplitudes());
                add(&mut acc, &outer(&v, 1.0 / d as f64));
            }
            // In the Fourier basis f_j(m) = w^{jm}/sqrt(d) the effect is diagonal.
            let rotated = matmul(&matmul(&fh, &acc), &f);
            let lib = fp.effects()[k].to_operator();
            for i in 0..d {
                for j in 0..d {
                    prop_assert!((lib.entry(i, j) - acc[i][j]).norm() <= 1e-12);
                    let expected = if i == j { kernel.get(i, k) } else { 0.0 };
                    prop_assert!((rotated[i][j] - C64::new(expected, 0.0)).norm() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn marginals_stay_valid_and_commutative((d, eta) in (2usize..=6).prop_flat_map(|d| (Just(d), fiducial(d)))) {
        let povm = build_wh_povm(d, &eta).unwrap();
        let tol = Tolerances::default();
        for m in [marginal_q(&povm).unwrap(), marginal_p(&povm).unwrap()] {
            let report = validate_povm(&m, &tol);
            prop_assert!(report.passed);
            prop_assert!(m.normalization_defect() <= povm.normalization_defect() + 1e-12);
            prop_assert!(is_commutative(&m, 1e-12).holds);
        }
    }

    #[test]
    fn wh_absolute_continuity((d, eta, seed) in (2usize..=6).prop_flat_map(|d| (Just(d), fiducial(d), any::<u64>()))) {
        let povm = build_wh_povm(d, &eta).unwrap();
        let c = absolute_continuity_constant(&povm).constant.unwrap();
        prop_assert!((c - 1.0).abs() <= 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for event in random_events(povm.space().len(), 40, &mut rng) {
            let norm = povm.event_norm(&event).unwrap();
            prop_assert!(norm <= c * povm.space().event_weight(&event) + 1e-10);
        }
    }
}

#[test]
fn covariance_random_shifts_large_d() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = 16;
    let eta = FiducialVector::random(d, &mut rng).unwrap();
    let povm = build_wh_povm(d, &eta).unwrap();
    let sys = WeylSystem::new(d).unwrap();
    use rand::Rng;
    for _ in 0..50 {
        let shift = (rng.random_range(0..d), rng.random_range(0..d));
        assert!(covariance_check(&povm, &sys, shift).unwrap() <= 1e-10);
    }
}

#[test]
fn coherent_cells_bounded_by_cell_measure() {
    let grid = CoherentGrid::new(12, 3.0, 0.5).unwrap();
    let mut tol = Tolerances::truncated();
    tol.normalization = 1.0;
    let povm = build_coherent_povm(&grid, &FiducialVector::vacuum(12).unwrap(), &tol).unwrap();
    let mu = 0.25 / PI;
    let norms: Vec<f64> = povm.effects().iter().map(spectral_norm).collect();
    assert!(norms.iter().all(|&n| n <= mu + 1e-12));
    let origin = povm.space().len() / 2;
    assert_eq!(povm.space().atoms()[origin].coord, vec![0.0, 0.0]);
    assert!((norms[origin] - mu).abs() <= 1e-15);
}
