mod common;

use common::*;
use phaseloc_core::linalg::{commutator_norm, maximizing_state, spectral_norm, Effect, Operator, StateVector};
use proptest::prelude::*;

/// `E = s * B B^dagger / ||B B^dagger||_F`, a random effect of dimension `d`.
fn effect(d: usize) -> impl Strategy<Value = (Effect, Dense)> {
    (prop::collection::vec(complex_vec(d), d), 0.0f64..1.0).prop_map(move |(b, s)| {
        let mut g = zeros(d);
        for i in 0..d {
            for j in 0..d {
                g[i][j] = (0..d).map(|k| b[i][k] * b[j][k].conj()).sum();
            }
        }
        // Frobenius norm bounds the spectral norm, so E <= s <= 1.
        let fro = g.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
        for z in g.iter_mut().flatten() {
            *z *= s / fro;
        }
        let op = Operator::from_fn(d, |i, j| g[i][j]);
        let h = Operator::from_fn(d, |i, j| (op.entry(i, j) + op.entry(j, i).conj()) * 0.5);
        let dense: Dense = (0..d).map(|i| (0..d).map(|j| h.entry(i, j)).collect()).collect();
        (Effect::new(h).unwrap(), dense)
    })
}

fn effect_any() -> impl Strategy<Value = (Effect, Dense)> {
    (1usize..=6).prop_flat_map(effect)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expectation_never_exceeds_norm((e, _) in effect_any(), seeds in prop::collection::vec(nonzero_vec(6), 100)) {
        let norm = spectral_norm(&e);
        for v in seeds {
            let psi = StateVector::new(v[..e.dim()].to_vec());
            if let Ok(psi) = psi {
                prop_assert!(psi.expectation_effect(&e).unwrap() <= norm + 1e-10);
            }
        }
    }

    #[test]
    fn eigensolve_matches_power_iteration((e, dense) in effect_any(), starts in prop::collection::vec(nonzero_vec(6), 20)) {
        let starts: Vec<Vec<_>> = starts.into_iter().map(|s| s[..e.dim()].to_vec()).collect();
        let oracle = power_iteration_norm(&dense, &starts);
        prop_assert!((spectral_norm(&e) - oracle).abs() <= 1e-8, "{} vs {}", spectral_norm(&e), oracle);
    }

    #[test]
    fn maximizer_attains_norm((e, _) in effect_any()) {
        let norm = spectral_norm(&e);
        match maximizing_state(&e) {
            Ok((psi, value)) => {
                prop_assert!((value - norm).abs() <= 1e-10);
                prop_assert!((psi.expectation_effect(&e).unwrap() - norm).abs() <= 1e-10);
                prop_assert!((psi.norm() - 1.0).abs() <= 1e-12);
            }
            Err(_) => prop_assert!(norm <= 1e-12),
        }
    }

    #[test]
    fn commutator_is_symmetric(((a, _), (b, _)) in (1usize..=5).prop_flat_map(|d| (effect(d), effect(d)))) {
        let ab = commutator_norm(&a, &b).unwrap();
        let ba = commutator_norm(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
    }

    #[test]
    fn rank1_norm_matches_dense(v in nonzero_vec(5), w in 0.0f64..1.0) {
        let n2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let e = Effect::rank1(w / n2, v.clone()).unwrap();
        let dense = Effect::new(e.to_operator()).unwrap();
        prop_assert!((spectral_norm(&e) - spectral_norm(&dense)).abs() <= 1e-12);
        prop_assert!((spectral_norm(&e) - w).abs() <= 1e-12);
    }
}
