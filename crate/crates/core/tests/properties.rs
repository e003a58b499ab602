use proptest::prelude::*;

use shadow_mpo::fidelity::afc_overlap_exact;
use shadow_mpo::learner::{learn, LearnerConfig, UpdateMode};
use shadow_mpo::measurement::{generate_dataset, Sampler};
use shadow_mpo::mpo::{fidelities, mpo_overlap, mpo_purity, mpo_to_dense, mpo_trace, reduced_density_matrix};
use shadow_mpo::mps::mps_to_dense;
use shadow_mpo::serialize::{dataset_from_reader, dataset_to_bytes, mpo_to_json, state_from_json, StateFile};
use shadow_mpo::shadows::{estimate_observable, interval_shadow_average};
use shadow_mpo::states::{apply_depolarizing, random_hermitian_mpo, random_mpdo, random_mps};
use shadow_mpo::{Pauli, PauliMpo, PauliString, C64};

fn pauli() -> impl Strategy<Value = Pauli> {
    prop_oneof![Just(Pauli::X), Just(Pauli::Y), Just(Pauli::Z)]
}

fn max_dev(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pauli_strings_roundtrip_through_text(ops in prop::collection::btree_map(0usize..12, pauli(), 0..6)) {
        let p = PauliString::new(ops.into_iter().collect()).unwrap();
        let q: PauliString = p.to_string().parse().unwrap();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn pauli_form_roundtrips_hermitian_operators(n in 1usize..5, chi in 1usize..3, seed in any::<u64>()) {
        let op = random_hermitian_mpo(n, chi, seed).unwrap();
        let back = PauliMpo::from_mpo(&op).to_mpo();
        let (a, b) = (mpo_to_dense(&op).unwrap(), mpo_to_dense(&back).unwrap());
        let scale = a.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);
        prop_assert!(max_dev(&a, &b) <= 1e-12 * scale);
    }

    #[test]
    fn state_files_roundtrip_exactly(n in 1usize..5, chi in 1usize..3, seed in any::<u64>()) {
        let op = random_mpdo(n, chi, seed).unwrap();
        let text = mpo_to_json(&op).unwrap();
        prop_assert_eq!(state_from_json(&text).unwrap(), StateFile::Mpo(op));
    }

    #[test]
    fn fidelity_identities(n in 2usize..6, seed in any::<u64>()) {
        let a = random_mpdo(n, 2, seed).unwrap();
        let b = random_mpdo(n, 2, seed.wrapping_add(1)).unwrap();
        let self_f = fidelities(&a, &a).unwrap();
        prop_assert!((self_f.f_max - 1.0).abs() < 1e-12 && (self_f.f_gm - 1.0).abs() < 1e-12);
        let (ab, ba) = (fidelities(&a, &b).unwrap(), fidelities(&b, &a).unwrap());
        prop_assert!((ab.f_max - ba.f_max).abs() < 1e-12 && (ab.f_gm - ba.f_gm).abs() < 1e-12);
        prop_assert!(ab.f_max <= ab.f_gm + 1e-12);
        prop_assert!(ab.f_max > 0.0);
    }

    #[test]
    fn single_pair_window_afc_is_exact(k in 1usize..4, extra in 0usize..3, seed in any::<u64>()) {
        let n = 2 * k + extra.min(k - 1);
        let a = random_mpdo(n, 2, seed).unwrap();
        let b = random_mpdo(n, 2, seed ^ 0x55).unwrap();
        let exact = mpo_overlap(&a, &b).unwrap().re;
        let afc = afc_overlap_exact(&a, &b, k).unwrap();
        prop_assert!((afc / exact - 1.0).abs() < 1e-10);
    }

    #[test]
    fn depolarizing_keeps_trace_and_lowers_purity(n in 1usize..6, p in 0.0f64..1.0, seed in any::<u64>()) {
        let rho = random_mpdo(n, 2, seed).unwrap();
        let out = apply_depolarizing(&rho, &vec![p; n]).unwrap();
        prop_assert!((mpo_trace(&out).re - 1.0).abs() < 1e-12);
        prop_assert!(mpo_purity(&out) <= mpo_purity(&rho) + 1e-12);
        let rdm = reduced_density_matrix(&out, 0, 0).unwrap();
        prop_assert!((rdm[0] + rdm[3] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn canonical_form_preserves_the_state(n in 2usize..6, chi in 1usize..4, center in 0usize..6, seed in any::<u64>()) {
        let psi = random_mps(n, chi, seed).unwrap();
        let mut moved = psi.clone();
        moved.canonicalize(center.min(n - 1));
        let (a, b) = (mps_to_dense(&psi).unwrap(), mps_to_dense(&moved).unwrap());
        prop_assert!(max_dev(&a, &b) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn datasets_are_deterministic_and_roundtrip(n in 1usize..5, bases in 1usize..8, shots in 1usize..16, seed in any::<u64>()) {
        let sampler = Sampler::from_mpo(&random_mpdo(n, 2, seed).unwrap()).unwrap();
        let a = generate_dataset(&sampler, bases, shots, bases / 2, seed).unwrap();
        let b = generate_dataset(&sampler, bases, shots, bases / 2, seed).unwrap();
        let bytes = dataset_to_bytes(&a).unwrap();
        prop_assert_eq!(&bytes, &dataset_to_bytes(&b).unwrap());
        let back = dataset_from_reader(&bytes[..]).unwrap();
        prop_assert_eq!(dataset_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn shadows_have_unit_trace(n in 2usize..6, seed in any::<u64>()) {
        let sampler = Sampler::from_mpo(&random_mpdo(n, 2, seed).unwrap()).unwrap();
        let ds = generate_dataset(&sampler, 5, 7, 5, seed).unwrap();
        for first in 0..n {
            let last = (first + 2).min(n - 1);
            let s = interval_shadow_average(&ds.records, first, last).unwrap();
            prop_assert!((s.trace() - 1.0).abs() < 1e-12);
        }
        let id = PauliString::new(Vec::new()).unwrap();
        prop_assert!((estimate_observable(&ds.records, &id, None).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn learned_models_have_unit_trace(seed in any::<u64>(), one_site in any::<bool>()) {
        let n = 5;
        let sampler = Sampler::from_mpo(&random_mpdo(n, 2, seed).unwrap()).unwrap();
        let ds = generate_dataset(&sampler, 30, 32, 20, seed).unwrap();
        let mut cfg = LearnerConfig::new(1, 2);
        cfg.n_sweeps = 2;
        cfg.seed = seed;
        if one_site {
            cfg.update_mode = UpdateMode::OneSite;
        }
        let rep = learn(&ds, &cfg, None).unwrap();
        prop_assert!((rep.sigma.trace() - 1.0).abs() < 1e-10);
        prop_assert!(rep.sigma.max_bond() <= 2);
        for r in &rep.sweep_trace {
            prop_assert!(r.error.is_some() || (r.trace - 1.0).abs() < 1e-10);
        }
    }
}
