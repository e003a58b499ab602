use shadow_mpo::fidelity::{afc_fidelity_exact, afc_overlap_exact};
use shadow_mpo::learner::{learn_exact, LearnerConfig, UpdateMode};
use shadow_mpo::linalg::svd_real;
use shadow_mpo::mpo::{fidelities, mpo_overlap, mpo_to_dense, reduced_density_matrix};
use shadow_mpo::mps::{mps_to_dense, von_neumann_entropy};
use shadow_mpo::states::{
    apply_depolarizing, dense_ising_gibbs, ising_gibbs, kicked_ising_state, random_mpdo, CircuitSpec, GibbsSpec,
};
use shadow_mpo::{PauliMpo, C64};

/// Operator-Schmidt values of a dense `2^n x 2^n` operator across `cut`.
fn operator_schmidt(rho: &[f64], n: usize, cut: usize) -> Vec<f64> {
    let d = 1usize << n;
    let (dl, dr) = (1usize << cut, 1usize << (n - cut));
    let mut m = vec![0.0; dl * dl * dr * dr];
    for s in 0..d {
        for t in 0..d {
            let (sl, sr) = (s / dr, s % dr);
            let (tl, tr) = (t / dr, t % dr);
            m[(sl * dl + tl) * dr * dr + sr * dr + tr] = rho[s * d + t];
        }
    }
    svd_real(dl * dl, dr * dr, &m).s
}

/// Bond needed to keep all but `cutoff` of the squared weight.
fn bond_for_cutoff(s: &[f64], cutoff: f64) -> usize {
    let total: f64 = s.iter().map(|x| x * x).sum();
    let mut tail = 0.0;
    let mut keep = s.len();
    while keep > 1 {
        let w = s[keep - 1] * s[keep - 1];
        if (tail + w) / total > cutoff {
            break;
        }
        tail += w;
        keep -= 1;
    }
    keep
}

#[test]
fn gibbs_bond_matches_dense_schmidt_count() {
    let n = 8;
    let spec = GibbsSpec::new(2.0, 1.01, 0.04, n);
    let rho = ising_gibbs(&spec).unwrap();
    let dense = dense_ising_gibbs(2.0, 1.01, 0.04, n).unwrap();
    let bonds = rho.bond_dims();
    for cut in 1..n {
        let s = operator_schmidt(&dense, n, cut);
        let want = bond_for_cutoff(&s, spec.svd_cutoff);
        let got = bonds[cut];
        assert_eq!(got, want, "cut {cut}");
    }
}

#[test]
fn gibbs_matches_dense_at_eight_sites() {
    let n = 8;
    let rho = ising_gibbs(&GibbsSpec::new(2.0, 1.01, 0.04, n)).unwrap();
    let got = mpo_to_dense(&rho).unwrap();
    let want = dense_ising_gibbs(2.0, 1.01, 0.04, n).unwrap();
    let err = got
        .iter()
        .zip(&want)
        .map(|(x, y)| (x - C64::new(*y, 0.0)).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let norm = want.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(err / norm < 1e-4, "relative error {err}");
}

#[test]
fn kicked_ising_entanglement_is_bounded_by_depth() {
    for depth in 0..=3 {
        let psi = kicked_ising_state(CircuitSpec { n: 10, depth }).unwrap();
        for cut in 1..10 {
            let s = von_neumann_entropy(&psi, cut).unwrap();
            assert!(s <= depth as f64 + 1e-10, "depth {depth} cut {cut}: S = {s}");
        }
        let v = mps_to_dense(&psi).unwrap();
        let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn afc_is_exact_for_markov_chains() {
    // A product of neighbouring-window terms is exact for product states.
    let psi = kicked_ising_state(CircuitSpec { n: 8, depth: 0 }).unwrap();
    let a = apply_depolarizing(&psi.to_mpo(), &[0.3; 8]).unwrap();
    let b = random_mpdo(8, 1, 5).unwrap();
    for k in 1..=4 {
        let exact = mpo_overlap(&a, &b).unwrap().re;
        let afc = afc_overlap_exact(&a, &b, k).unwrap();
        assert!((afc / exact - 1.0).abs() < 1e-10, "k = {k}");
    }
}

#[test]
fn afc_error_shrinks_with_block_size_on_gibbs() {
    let n = 12;
    let a = ising_gibbs(&GibbsSpec::new(2.0, 1.01, 0.04, n)).unwrap();
    let b = ising_gibbs(&GibbsSpec::new(1.0, 1.01, 0.04, n)).unwrap();
    let exact = fidelities(&a, &b).unwrap().f_max;
    let errs: Vec<f64> = (1..=3)
        .map(|k| (afc_fidelity_exact(&a, &b, k).unwrap().f_max / exact - 1.0).abs())
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
}

#[test]
fn exact_learning_recovers_small_gibbs() {
    let rho = ising_gibbs(&GibbsSpec::new(2.0, 1.01, 0.04, 8)).unwrap();
    let mut cfg = LearnerConfig::new(1, 4);
    cfg.update_mode = UpdateMode::TwoSite;
    let rep = learn_exact(&PauliMpo::from_mpo(&rho), &cfg).unwrap();
    let f = fidelities(&rho, &rep.final_sigma()).unwrap();
    assert!(1.0 - f.f_gm < 1e-4, "1 - F_GM = {}", 1.0 - f.f_gm);
    let rdm_a = reduced_density_matrix(&rho, 3, 5).unwrap();
    let rdm_b = reduced_density_matrix(&rep.final_sigma(), 3, 5).unwrap();
    let dev = rdm_a.iter().zip(&rdm_b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    assert!(dev < 1e-3, "window deviation {dev}");
}
