mod common;

use common::*;
use phaseloc_core::linalg::{hermitian_norm, spectral_norm, StateVector};
use phaseloc_core::marginals::{extract_kernel, smear_pvm, MarkovKernel, OrthonormalBasis};
use phaseloc_core::povm::{is_projective, outcome_probability, DiscretePovm, EventSet};
use phaseloc_core::{build_wh_povm, sharp_position_pvm, FiducialVector};
use proptest::prelude::*;

fn wh_povm() -> impl Strategy<Value = DiscretePovm> {
    (2usize..=4).prop_flat_map(|d| {
        nonzero_vec(d).prop_map(move |v| {
            let eta = FiducialVector::custom(StateVector::new(v).unwrap());
            build_wh_povm(d, &eta).unwrap()
        })
    })
}

fn kernel(rows: usize, cols: usize) -> impl Strategy<Value = MarkovKernel> {
    prop::collection::vec(prop::collection::vec(0.0f64..1.0, cols), rows).prop_map(move |raw| {
        let entries = raw
            .into_iter()
            .flat_map(|row| {
                let s: f64 = row.iter().sum::<f64>().max(1e-12);
                let mut row: Vec<f64> = row.iter().map(|x| x / s).collect();
                // Absorb the rounding of the row sum into the last entry.
                let head: f64 = row[..cols - 1].iter().sum();
                row[cols - 1] = (1.0 - head).max(0.0);
                row
            })
            .collect();
        MarkovKernel::new(rows, cols, entries).unwrap()
    })
}

fn smeared() -> impl Strategy<Value = (DiscretePovm, MarkovKernel)> {
    (2usize..=4, 2usize..=5).prop_flat_map(|(d, n)| {
        kernel(d, n).prop_map(move |k| {
            let base = sharp_position_pvm(d).unwrap();
            (smear_pvm(&base, OrthonormalBasis::Computational, &k).unwrap().povm, k)
        })
    })
}

fn any_povm() -> impl Strategy<Value = DiscretePovm> {
    prop_oneof![wh_povm(), smeared().prop_map(|(p, _)| p)]
}

fn event(len: usize, mask: u32) -> EventSet {
    EventSet::new((0..len).filter(|i| mask & (1 << i) != 0).collect(), len).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn additivity(povm in any_povm(), a in any::<u32>(), b in any::<u32>()) {
        let n = povm.space().len();
        let d1 = event(n, a);
        let d2 = event(n, b & !a);
        let joint = povm.sum_operator(&d1.union(&d2)).unwrap();
        let split = &povm.sum_operator(&d1).unwrap() + &povm.sum_operator(&d2).unwrap();
        prop_assert!(joint.max_entry_distance(&split).unwrap() <= 1e-13);
    }

    #[test]
    fn monotonicity(povm in any_povm(), a in any::<u32>(), b in any::<u32>()) {
        let n = povm.space().len();
        let small = event(n, a & b);
        let large = event(n, a);
        prop_assert!(povm.event_norm(&small).unwrap() <= povm.event_norm(&large).unwrap() + 1e-12);
    }

    #[test]
    fn complement_law(povm in any_povm(), a in any::<u32>()) {
        let n = povm.space().len();
        let d = event(n, a);
        let both = &povm.sum_operator(&d).unwrap() + &povm.sum_operator(&d.complement(n)).unwrap();
        let full = povm.sum_operator(&povm.full_event()).unwrap();
        prop_assert!(both.max_entry_distance(&full).unwrap() <= 1e-13);
    }

    #[test]
    fn probability_additivity(povm in any_povm(), a in any::<u32>(), b in any::<u32>(), v in nonzero_vec(4)) {
        let n = povm.space().len();
        let psi = StateVector::new(v[..povm.dim()].to_vec()).unwrap();
        let d1 = event(n, a);
        let d2 = event(n, b & !a);
        let p = |e: &EventSet| outcome_probability(&povm, &psi, e).unwrap().raw;
        prop_assert!((p(&d1.union(&d2)) - p(&d1) - p(&d2)).abs() <= 1e-12);
    }

    #[test]
    fn gaps_never_negative(povm in any_povm(), a in any::<u32>()) {
        let e = povm.effect_of(&event(povm.space().len(), a)).unwrap();
        prop_assert!(1.0 - spectral_norm(&e) >= -1e-10);
    }

    #[test]
    fn smeared_norm_is_kernel_max((povm, k) in smeared(), a in any::<u32>()) {
        let d = event(povm.space().len(), a);
        let expected = (0..k.rows()).map(|x| k.event_weight(x, d.indices())).fold(0.0, f64::max);
        prop_assert!((povm.event_norm(&d).unwrap() - expected).abs() <= 1e-14);
    }

    #[test]
    fn extract_inverts_smear((povm, k) in smeared()) {
        let back = extract_kernel(&povm, &OrthonormalBasis::Computational).unwrap();
        prop_assert!(back.max_entry_distance(&k).unwrap() <= 1e-12);
    }

    #[test]
    fn projective_norms_are_zero_or_one(d in 2usize..=6, a in any::<u32>(), fourier in any::<bool>()) {
        let basis = if fourier { OrthonormalBasis::Fourier } else { OrthonormalBasis::Computational };
        let pvm = phaseloc_core::covariant::basis_pvm(&basis, d).unwrap();
        prop_assert!(is_projective(&pvm, 1e-10).holds);
        let norm = pvm.event_norm(&event(d, a)).unwrap();
        prop_assert!(norm.abs() <= 1e-10 || (norm - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn full_event_is_identity(povm in any_povm()) {
        let full = povm.sum_operator(&povm.full_event()).unwrap();
        let gap = &full - &phaseloc_core::Operator::identity(povm.dim());
        prop_assert!(hermitian_norm(&gap, 1e-10).unwrap() <= 1e-10);
        prop_assert!(povm.normalization_defect() <= 1e-10);
    }
}
