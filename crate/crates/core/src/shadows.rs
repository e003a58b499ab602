//! Randomized-measurement post-processing: classical shadows on qubit
//! windows, observable and overlap estimators, Hamming-distance purities,
//! AFC fidelities from data and common-randomized-measurement corrections.
//!
//! Shadows are stored as Pauli coefficient tensors: a window operator on `k`
//! qubits is `sum_p c[p] P_{p_1} (x) ... (x) P_{p_k}` with the first window site
//! as the most significant index.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fidelity::{afc_intervals, combine_afc};
use crate::linalg::{matmul, mode_product, C64};
use crate::measurement::BasisRecord;
use crate::mpo::{check_interval, RDM_LIMIT};
use crate::mps::MPState;
use crate::pauli::{pauli_to_dense, rotated_pauli_weights, PauliString};
use crate::pauli_mpo::PauliMpo;

/// Largest window for which shadow coefficient tensors are formed.
pub const SHADOW_LIMIT: usize = 10;

/// Pauli coefficients of the single-shot shadow `3 u^dag |s><s| u - I`,
/// as a row-major `4 x 2` matrix `b[p][s]`.
pub fn shadow_pauli_matrix(u: &[C64; 4]) -> [f64; 8] {
    let q = rotated_pauli_weights(u);
    let mut b = [0.0; 8];
    for p in 0..4 {
        for s in 0..2 {
            b[p * 2 + s] = 1.5 * q[s][p] - if p == 0 { 1.0 } else { 0.0 };
        }
    }
    b
}

/// Averaged shadow on `[first, last]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalShadow {
    pub first: usize,
    pub last: usize,
    /// `4^k` Pauli coefficients.
    pub coeffs: Vec<f64>,
    pub n_bases: usize,
}

impl IntervalShadow {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Dense `2^k x 2^k` row-major matrix.
    pub fn matrix(&self) -> Vec<C64> {
        pauli_to_dense(self.len(), &self.coeffs)
    }

    pub fn trace(&self) -> f64 {
        self.coeffs[0] * (1u64 << self.len()) as f64
    }
}

fn check_records(records: &[BasisRecord]) -> Result<usize> {
    let first = records.first().ok_or(Error::Empty("measurement split"))?;
    Ok(first.unitaries.len())
}

fn check_window(n: usize, first: usize, last: usize, limit: usize, what: &'static str) -> Result<usize> {
    check_interval(n, first, last)?;
    let k = last - first + 1;
    if k > limit {
        return Err(Error::Oversize { what, size: k, limit });
    }
    Ok(k)
}

/// Outcome counts on the window, indexed with the first window site as the
/// most significant bit.
pub fn window_histogram(rec: &BasisRecord, first: usize, last: usize) -> Vec<f64> {
    let k = last - first + 1;
    let mut h = vec![0.0; 1 << k];
    for &word in &rec.outcomes {
        let mut idx = 0usize;
        for j in first..=last {
            idx = (idx << 1) | ((word >> j) & 1) as usize;
        }
        h[idx] += 1.0;
    }
    h
}

/// Apply one matrix per window site (`out x in`, row-major) along each mode.
fn apply_site_maps(mut data: Vec<f64>, mats: &[Vec<f64>], d_in: usize, d_out: usize) -> Vec<f64> {
    let k = mats.len();
    let mut dims = vec![d_in; k];
    for (mode, m) in mats.iter().enumerate() {
        data = mode_product(&data, &dims, mode, m, d_out);
        dims[mode] = d_out;
    }
    data
}

/// Fixed-order pairwise sum of `f(0) + ... + f(n-1)`, independent of the
/// thread schedule.
fn tree_sum<F>(lo: usize, hi: usize, f: &F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync,
{
    if hi - lo == 1 {
        return f(lo);
    }
    let mid = lo + (hi - lo) / 2;
    let (mut a, b) = rayon::join(|| tree_sum(lo, mid, f), || tree_sum(mid, hi, f));
    for (x, y) in a.iter_mut().zip(&b) {
        *x += y;
    }
    a
}

fn window_shadow_maps(rec: &BasisRecord, first: usize, last: usize) -> Vec<Vec<f64>> {
    (first..=last).map(|j| shadow_pauli_matrix(&rec.unitaries[j]).to_vec()).collect()
}

fn window_born_maps(rec: &BasisRecord, first: usize, last: usize) -> Vec<Vec<f64>> {
    (first..=last)
        .map(|j| {
            let q = rotated_pauli_weights(&rec.unitaries[j]);
            q.iter().flatten().copied().collect()
        })
        .collect()
}

fn shadow_average(
    records: &[BasisRecord],
    first: usize,
    last: usize,
    prior: Option<&[f64]>,
) -> Result<IntervalShadow> {
    let n = check_records(records)?;
    check_window(n, first, last, SHADOW_LIMIT, "shadow window")?;
    let per_basis = |r: usize| {
        let rec = &records[r];
        let shots = rec.outcomes.len() as f64;
        let mut h = window_histogram(rec, first, last);
        for x in h.iter_mut() {
            *x /= shots;
        }
        if let Some(tau) = prior {
            let p = apply_site_maps(tau.to_vec(), &window_born_maps(rec, first, last), 4, 2);
            for (x, y) in h.iter_mut().zip(&p) {
                *x -= y;
            }
        }
        apply_site_maps(h, &window_shadow_maps(rec, first, last), 2, 4)
    };
    let mut coeffs = tree_sum(0, records.len(), &per_basis);
    let nb = records.len() as f64;
    for x in coeffs.iter_mut() {
        *x /= nb;
    }
    if let Some(tau) = prior {
        for (x, y) in coeffs.iter_mut().zip(tau) {
            *x += y;
        }
    }
    Ok(IntervalShadow {
        first,
        last,
        coeffs,
        n_bases: records.len(),
    })
}

/// `(1 / N_u N_M) sum_{r,m} (x)_j (3 u_j^dag |s_j><s_j| u_j - I)` on the window.
pub fn interval_shadow_average(records: &[BasisRecord], first: usize, last: usize) -> Result<IntervalShadow> {
    shadow_average(records, first, last, None)
}

/// Shadow corrected with a classical prior `tau` measured in the same bases:
/// the average of `rho_hat - tau_hat + tau` on the window, where `tau_hat` is
/// the infinite-shot shadow of `tau`.
pub fn crm_interval_shadow(
    records: &[BasisRecord],
    prior: &CrmPrior,
    first: usize,
    last: usize,
) -> Result<IntervalShadow> {
    let n = check_records(records)?;
    if prior.tau.num_qubits() != n {
        return Err(Error::LengthMismatch {
            left: prior.tau.num_qubits(),
            right: n,
        });
    }
    check_window(n, first, last, SHADOW_LIMIT, "shadow window")?;
    let tau = prior.window_coeffs(first, last)?;
    shadow_average(records, first, last, Some(&tau))
}

/// Shadows for a fixed set of windows, computed once and shared by every
/// sweep of the learner.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShadowCache {
    shadows: BTreeMap<(usize, usize), IntervalShadow>,
}

impl ShadowCache {
    pub fn build(records: &[BasisRecord], windows: &[(usize, usize)], prior: Option<&CrmPrior>) -> Result<Self> {
        let mut unique: Vec<(usize, usize)> = windows.to_vec();
        unique.sort_unstable();
        unique.dedup();
        let shadows = unique
            .par_iter()
            .map(|&(f, l)| {
                let s = match prior {
                    Some(p) => crm_interval_shadow(records, p, f, l)?,
                    None => interval_shadow_average(records, f, l)?,
                };
                Ok(((f, l), s))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(ShadowCache { shadows })
    }

    pub fn get(&self, first: usize, last: usize) -> Option<&IntervalShadow> {
        self.shadows.get(&(first, last))
    }

    pub fn len(&self) -> usize {
        self.shadows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shadows.is_empty()
    }
}

fn check_pauli(n: usize, pauli: &PauliString) -> Result<()> {
    pauli.check_within(n)?;
    if pauli.weight() > SHADOW_LIMIT {
        return Err(Error::Oversize {
            what: "observable support",
            size: pauli.weight(),
            limit: SHADOW_LIMIT,
        });
    }
    Ok(())
}

/// `tr[rho_hat P]` for a Pauli string, optionally CRM-corrected.
pub fn estimate_observable(records: &[BasisRecord], pauli: &PauliString, prior: Option<&CrmPrior>) -> Result<f64> {
    let n = check_records(records)?;
    check_pauli(n, pauli)?;
    let ops = pauli.ops();
    let values: Vec<f64> = records
        .par_iter()
        .map(|rec| {
            // per support site, the single-shot factor 3 q[s][p] for s = 0, 1
            let factors: Vec<[f64; 2]> = ops
                .iter()
                .map(|&(j, p)| {
                    let q = rotated_pauli_weights(&rec.unitaries[j]);
                    [3.0 * q[0][p.index()], 3.0 * q[1][p.index()]]
                })
                .collect();
            let total: f64 = rec
                .outcomes
                .iter()
                .map(|&word| {
                    ops.iter()
                        .zip(&factors)
                        .map(|(&(j, _), f)| f[((word >> j) & 1) as usize])
                        .product::<f64>()
                })
                .sum();
            let mut v = total / rec.outcomes.len() as f64;
            if let Some(prior) = prior {
                v -= prior.observable_shadow(pauli, rec);
            }
            v
        })
        .collect();
    let mut mean = values.iter().sum::<f64>() / values.len() as f64;
    if let Some(prior) = prior {
        if prior.tau.num_qubits() != n {
            return Err(Error::LengthMismatch {
                left: prior.tau.num_qubits(),
                right: n,
            });
        }
        mean += prior.observable_exact(pauli);
    }
    Ok(mean)
}

fn hamming_estimate(records: &[BasisRecord], first: usize, last: usize, kernel: [f64; 4]) -> Result<f64> {
    let n = check_records(records)?;
    let k = check_window(n, first, last, RDM_LIMIT, "purity window")?;
    let shots = records[0].outcomes.len();
    if shots < 2 {
        return Err(Error::InvalidParameter(format!(
            "purity estimation needs at least 2 shots per basis, got {shots}"
        )));
    }
    let mats = vec![kernel.to_vec(); k];
    let values: Vec<f64> = records
        .par_iter()
        .map(|rec| {
            let h = window_histogram(rec, first, last);
            let kh = apply_site_maps(h.clone(), &mats, 2, 2);
            let quad: f64 = h.iter().zip(&kh).map(|(a, b)| a * b).sum();
            let m = rec.outcomes.len() as f64;
            (quad - m) / (m * (m - 1.0))
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(mean * (1u64 << k) as f64)
}

/// Window purity from Hamming distances between shots of the same basis,
/// with the unbiased kernel `(-2)^{-D}`.
pub fn estimate_purity_hamming(records: &[BasisRecord], first: usize, last: usize) -> Result<f64> {
    hamming_estimate(records, first, last, [1.0, -0.5, -0.5, 1.0])
}

/// Same sum with the kernel `2^{-D}`. This is biased and serves as a
/// negative control for [`estimate_purity_hamming`].
pub fn estimate_purity_hamming_positive_kernel(records: &[BasisRecord], first: usize, last: usize) -> Result<f64> {
    hamming_estimate(records, first, last, [1.0, 0.5, 0.5, 1.0])
}

/// `tr[rho_hat_W sigma_W]` for a known operator `sigma`.
pub fn estimate_overlap_with_known(records: &[BasisRecord], sigma: &PauliMpo, first: usize, last: usize) -> Result<f64> {
    let n = check_records(records)?;
    if sigma.num_qubits() != n {
        return Err(Error::LengthMismatch {
            left: sigma.num_qubits(),
            right: n,
        });
    }
    check_window(n, first, last, RDM_LIMIT, "overlap window")?;
    let left = sigma.left_env(first);
    let right = sigma.right_env(last + 1);
    let values: Vec<f64> = records
        .par_iter()
        .map(|rec| {
            // g[pattern] = L prod_j W_j(s_j) R with W_j(s) = 2 sum_p b[p][s] M_p
            let mut acc = left.clone();
            let mut rows = 1usize;
            for j in first..=last {
                let t = sigma.site(j);
                let (l, r) = (t.dims[0], t.dims[2]);
                let b = shadow_pauli_matrix(&rec.unitaries[j]);
                let mut w = vec![0.0; l * 2 * r];
                for a in 0..l {
                    for p in 0..4 {
                        let src = &t.data[(a * 4 + p) * r..(a * 4 + p + 1) * r];
                        for s in 0..2 {
                            let c = 2.0 * b[p * 2 + s];
                            let dst = &mut w[(a * 2 + s) * r..(a * 2 + s + 1) * r];
                            for (x, y) in dst.iter_mut().zip(src) {
                                *x += c * y;
                            }
                        }
                    }
                }
                acc = matmul(rows, l, 2 * r, &acc, false, &w, false);
                rows *= 2;
            }
            let r = sigma.site(last).dims[2];
            let g = matmul(rows, r, 1, &acc, false, &right, false);
            let h = window_histogram(rec, first, last);
            let m = rec.outcomes.len() as f64;
            h.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / m
        })
        .collect();
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// One window of an AFC estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AfcWindowEstimate {
    pub first: usize,
    pub last: usize,
    pub pair: bool,
    pub overlap: f64,
    pub purity_rho: f64,
    pub purity_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AfcEstimate {
    pub f_max: f64,
    pub f_gm: f64,
    pub overlap: f64,
    pub purity_rho: f64,
    pub purity_sigma: f64,
    pub factors: Vec<AfcWindowEstimate>,
}

fn afc_windows(n: usize, k: usize) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize, bool)>)> {
    if 2 * k > RDM_LIMIT {
        return Err(Error::Oversize {
            what: "AFC pair window",
            size: 2 * k,
            limit: RDM_LIMIT,
        });
    }
    let intervals = afc_intervals(n, k)?;
    let r = intervals.len();
    let mut windows: Vec<(usize, usize, bool)> =
        (0..r - 1).map(|i| (intervals[i].0, intervals[i + 1].1, true)).collect();
    windows.extend(intervals[1..r - 1].iter().map(|&(f, l)| (f, l, false)));
    Ok((intervals, windows))
}

/// Hamming purities of every AFC window for block size `k`. These depend
/// only on the data and can be reused for many `sigma`.
#[derive(Clone, Debug, PartialEq)]
pub struct AfcPurityTable {
    pub k: usize,
    pub purities: BTreeMap<(usize, usize), f64>,
}

impl AfcPurityTable {
    pub fn estimate(records: &[BasisRecord], k: usize) -> Result<Self> {
        let n = check_records(records)?;
        let (_, windows) = afc_windows(n, k)?;
        let purities = windows
            .par_iter()
            .map(|&(f, l, _)| Ok(((f, l), estimate_purity_hamming(records, f, l)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(AfcPurityTable { k, purities })
    }
}

/// AFC estimate of the global purity of the measured state.
pub fn estimate_afc_purity(records: &[BasisRecord], k: usize) -> Result<f64> {
    let n = check_records(records)?;
    let (intervals, _) = afc_windows(n, k)?;
    let table = AfcPurityTable::estimate(records, k)?;
    combine_afc(&intervals, |f, l| Ok(table.purities[&(f, l)]), "purity estimate").map(|x| x.0)
}

/// AFC max and GM fidelities between the measured state and `sigma`:
/// overlaps from shadows, purities of the measured state from Hamming
/// distances and purities of `sigma` computed exactly.
pub fn estimate_afc_fidelity(records: &[BasisRecord], sigma: &PauliMpo, k: usize) -> Result<AfcEstimate> {
    let table = AfcPurityTable::estimate(records, k)?;
    estimate_afc_fidelity_with(records, sigma, &table)
}

/// [`estimate_afc_fidelity`] with precomputed purities of the measured state.
pub fn estimate_afc_fidelity_with(
    records: &[BasisRecord],
    sigma: &PauliMpo,
    table: &AfcPurityTable,
) -> Result<AfcEstimate> {
    let n = check_records(records)?;
    let (intervals, windows) = afc_windows(n, table.k)?;
    let factors = windows
        .par_iter()
        .map(|&(first, last, pair)| {
            let purity_rho = *table
                .purities
                .get(&(first, last))
                .ok_or_else(|| Error::InvalidParameter(format!("no purity for window [{first}, {last}]")))?;
            Ok(AfcWindowEstimate {
                first,
                last,
                pair,
                overlap: estimate_overlap_with_known(records, sigma, first, last)?,
                purity_rho,
                purity_sigma: sigma.window_overlap(sigma, first, last)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lookup = |f: usize, l: usize| {
        *factors
            .iter()
            .find(|w| w.first == f && w.last == l)
            .expect("window computed above")
    };
    let (overlap, _) = combine_afc(&intervals, |f, l| Ok(lookup(f, l).overlap), "overlap estimate")?;
    let (purity_rho, _) = combine_afc(&intervals, |f, l| Ok(lookup(f, l).purity_rho), "purity estimate")?;
    let (purity_sigma, _) = combine_afc(&intervals, |f, l| Ok(lookup(f, l).purity_sigma), "model purity")?;
    Ok(AfcEstimate {
        f_max: overlap / purity_rho.max(purity_sigma),
        f_gm: overlap / (purity_rho * purity_sigma).sqrt(),
        overlap,
        purity_rho,
        purity_sigma,
        factors,
    })
}

/// Classical prior for common randomized measurements: a generating state
/// `tau` and optional homogeneous depolarizing strengths per window.
#[derive(Clone, Debug, PartialEq)]
pub struct CrmPrior {
    tau: PauliMpo,
    strengths: BTreeMap<(usize, usize), f64>,
}

impl CrmPrior {
    pub fn new(tau: PauliMpo) -> Self {
        CrmPrior {
            tau,
            strengths: BTreeMap::new(),
        }
    }

    pub fn tau(&self) -> &PauliMpo {
        &self.tau
    }

    pub fn set_strength(&mut self, first: usize, last: usize, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("depolarizing strength {p} outside [0, 1]")));
        }
        check_interval(self.tau.num_qubits(), first, last)?;
        self.strengths.insert((first, last), p);
        Ok(())
    }

    /// Fitted strength on a window, `0` when none was set.
    pub fn strength(&self, first: usize, last: usize) -> f64 {
        self.strengths.get(&(first, last)).copied().unwrap_or(0.0)
    }

    pub fn strengths(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.strengths.iter().map(|(&w, &p)| (w, p))
    }

    /// Pauli coefficients of the prior on a window, depolarized with the
    /// window's strength.
    pub fn window_coeffs(&self, first: usize, last: usize) -> Result<Vec<f64>> {
        let mut c = self.tau.window_coeffs(first, last)?;
        let p = self.strength(first, last);
        if p > 0.0 {
            for (idx, x) in c.iter_mut().enumerate() {
                *x *= (1.0 - p).powi(pauli_weight(idx) as i32);
            }
        }
        Ok(c)
    }

    fn support_strength(&self, pauli: &PauliString) -> f64 {
        pauli.support().map(|(f, l)| self.strength(f, l)).unwrap_or(0.0)
    }

    /// Chain contraction with `W_j = sum_q k_j[q] M_q` on the support of
    /// `pauli` and `2 M_0` elsewhere.
    fn contract(&self, pauli: &PauliString, site_weights: impl Fn(usize, usize) -> [f64; 4]) -> f64 {
        let damp = 1.0 - self.support_strength(pauli);
        let mut env = vec![1.0];
        for (j, t) in self.tau.sites().iter().enumerate() {
            let (l, r) = (t.dims[0], t.dims[2]);
            let w = match pauli.ops().iter().position(|&(s, _)| s == j) {
                Some(i) => {
                    let mut kq = site_weights(i, j);
                    for x in kq[1..].iter_mut() {
                        *x *= damp;
                    }
                    kq
                }
                None => [2.0, 0.0, 0.0, 0.0],
            };
            let mut m = vec![0.0; l * r];
            for a in 0..l {
                for (q, &c) in w.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let src = &t.data[(a * 4 + q) * r..(a * 4 + q + 1) * r];
                    for (x, y) in m[a * r..(a + 1) * r].iter_mut().zip(src) {
                        *x += c * y;
                    }
                }
            }
            env = matmul(1, l, r, &env, false, &m, false);
        }
        env[0]
    }

    /// `tr[tau P]`.
    fn observable_exact(&self, pauli: &PauliString) -> f64 {
        self.contract(pauli, |i, _| {
            let mut w = [0.0; 4];
            w[pauli.ops()[i].1.index()] = 2.0;
            w
        })
    }

    /// Infinite-shot shadow estimate of `tr[tau P]` in the basis of `rec`.
    fn observable_shadow(&self, pauli: &PauliString, rec: &BasisRecord) -> f64 {
        self.contract(pauli, |i, j| {
            let p = pauli.ops()[i].1.index();
            let q = rotated_pauli_weights(&rec.unitaries[j]);
            let mut w = [0.0; 4];
            for (qq, x) in w.iter_mut().enumerate() {
                *x = 3.0 * (q[0][p] * q[0][qq] + q[1][p] * q[1][qq]);
            }
            w
        })
    }
}

fn pauli_weight(mut idx: usize) -> usize {
    let mut w = 0;
    while idx > 0 {
        if idx & 3 != 0 {
            w += 1;
        }
        idx >>= 2;
    }
    w
}

/// Learner windows of block size `k`: `2 ell + 1` for one-site updates,
/// `2 ell + 2` for two-site updates, clipped at the chain ends.
pub fn update_windows(n: usize, ell: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    let clip = |lo: isize, hi: isize| (lo.max(0) as usize, (hi as usize).min(n - 1));
    let l = ell as isize;
    if k == 2 * ell + 1 {
        Ok((0..n as isize).map(|j| clip(j - l, j + l)).collect())
    } else if k == 2 * ell + 2 {
        Ok((0..n as isize - 1).map(|j| clip(j - l, j + 1 + l)).collect())
    } else {
        Err(Error::InvalidParameter(format!(
            "window size {k} matches neither 2*ell+1 nor 2*ell+2 for ell = {ell}"
        )))
    }
}

/// Homogeneous depolarizing strength per window that makes the purity of the
/// depolarized pure-state window match the Hamming estimate from data.
pub fn fit_depolarization_prior(records: &[BasisRecord], psi: &MPState, k: usize, ell: usize) -> Result<CrmPrior> {
    let n = check_records(records)?;
    if psi.num_qubits() != n {
        return Err(Error::LengthMismatch {
            left: psi.num_qubits(),
            right: n,
        });
    }
    let mut windows = update_windows(n, ell, k)?;
    windows.sort_unstable();
    windows.dedup();
    let tau = PauliMpo::from_mpo(&psi.to_mpo());
    let fitted = windows
        .par_iter()
        .map(|&(first, last)| {
            let c = tau.window_coeffs(first, last)?;
            let target = estimate_purity_hamming(records, first, last)?;
            Ok(((first, last), fit_window_strength(&c, last - first + 1, target, (first, last))))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut prior = CrmPrior::new(tau);
    for ((f, l), p) in fitted {
        prior.set_strength(f, l, p)?;
    }
    Ok(prior)
}

fn fit_window_strength(c: &[f64], k: usize, target: f64, window: (usize, usize)) -> f64 {
    let mut by_weight = vec![0.0; k + 1];
    for (idx, x) in c.iter().enumerate() {
        by_weight[pauli_weight(idx)] += x * x;
    }
    let scale = (1u64 << k) as f64;
    let purity = |p: f64| {
        scale
            * by_weight
                .iter()
                .enumerate()
                .map(|(w, s)| s * (1.0 - p).powi(2 * w as i32))
                .sum::<f64>()
    };
    if target >= purity(0.0) {
        warn!(
            "window {:?}: estimated purity {target} is above the prior purity {}, using p = 0",
            window,
            purity(0.0)
        );
        return 0.0;
    }
    if target <= purity(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if purity(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{generate_dataset, Sampler};
    use crate::pauli::Pauli;
    use crate::states::random_mpdo;

    fn identity_record(outcomes: Vec<u64>, n: usize) -> BasisRecord {
        let o = C64::new(1.0, 0.0);
        let z = C64::new(0.0, 0.0);
        BasisRecord {
            r: 0,
            unitaries: vec![[o, z, z, o]; n],
            outcomes,
        }
    }

    #[test]
    fn single_shot_shadow_is_diag_two_minus_one() {
        let rec = identity_record(vec![0], 1);
        let s = interval_shadow_average(&[rec], 0, 0).unwrap();
        let m = s.matrix();
        let expect = [2.0, 0.0, 0.0, -1.0];
        for (x, e) in m.iter().zip(expect) {
            assert!((x - C64::new(e, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn identical_shots_give_hamming_value_two() {
        let rec = identity_record(vec![1, 1, 1, 1], 1);
        let v = estimate_purity_hamming(&[rec], 0, 0).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
        let single = identity_record(vec![1], 1);
        assert!(estimate_purity_hamming(&[single], 0, 0).is_err());
    }

    #[test]
    fn histogram_puts_first_site_first() {
        // qubit 1 = 1, qubit 2 = 0 -> pattern "10" on window [1, 2]
        let rec = identity_record(vec![0b010], 3);
        let h = window_histogram(&rec, 1, 2);
        assert_eq!(h, vec![0.0, 0.0, 1.0, 0.0]);
    }

    fn small_dataset() -> (PauliMpo, Vec<BasisRecord>) {
        let rho = PauliMpo::from_mpo(&random_mpdo(4, 2, 8).unwrap());
        let ds = generate_dataset(&Sampler::new(rho.clone()).unwrap(), 30, 7, 30, 5).unwrap();
        (rho, ds.records)
    }

    #[test]
    fn estimators_agree_with_shadow_coefficients() {
        let (rho, records) = small_dataset();
        let shadow = interval_shadow_average(&records, 1, 3).unwrap();
        // <X_1 Z_3> = 8 c[X, I, Z]
        let pauli = PauliString::pair(1, Pauli::X, 3, Pauli::Z).unwrap();
        let direct = estimate_observable(&records, &pauli, None).unwrap();
        let idx = (1 * 4) * 4 + 3;
        assert!((direct - 8.0 * shadow.coeffs[idx]).abs() < 1e-12);

        let sigma = PauliMpo::from_mpo(&random_mpdo(4, 2, 9).unwrap());
        let ov = estimate_overlap_with_known(&records, &sigma, 1, 3).unwrap();
        let cs = sigma.window_coeffs(1, 3).unwrap();
        let via_coeffs: f64 = 8.0 * shadow.coeffs.iter().zip(&cs).map(|(a, b)| a * b).sum::<f64>();
        assert!((ov - via_coeffs).abs() < 1e-12);
        let _ = rho;
    }

    #[test]
    fn crm_observable_matches_crm_shadow() {
        let (rho, records) = small_dataset();
        let mut prior = CrmPrior::new(PauliMpo::from_mpo(&random_mpdo(4, 1, 3).unwrap()));
        prior.set_strength(0, 2, 0.2).unwrap();
        let shadow = crm_interval_shadow(&records, &prior, 0, 2).unwrap();
        let pauli = PauliString::pair(0, Pauli::Y, 2, Pauli::X).unwrap();
        let est = estimate_observable(&records, &pauli, Some(&prior)).unwrap();
        let idx = (2 * 4) * 4 + 1;
        assert!((est - 8.0 * shadow.coeffs[idx]).abs() < 1e-12, "{est}");
        let _ = rho;
    }

    #[test]
    fn perfect_prior_reproduces_the_state() {
        let (rho, records) = small_dataset();
        let prior = CrmPrior::new(rho.clone());
        let s = crm_interval_shadow(&records, &prior, 0, 1).unwrap();
        let exact = rho.window_coeffs(0, 1).unwrap();
        // the correction removes most of the shot noise, not all of it
        let err: f64 = s.coeffs.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let plain = interval_shadow_average(&records, 0, 1).unwrap();
        let err_plain: f64 = plain.coeffs.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < err_plain);
    }

    #[test]
    fn window_strength_bisection() {
        let c = PauliMpo::from_mpo(&random_mpdo(3, 2, 4).unwrap().hermitian_part())
            .window_coeffs(0, 2)
            .unwrap();
        let mut by_weight = [0.0; 4];
        for (i, x) in c.iter().enumerate() {
            by_weight[pauli_weight(i)] += x * x;
        }
        let target: f64 = 8.0 * by_weight.iter().enumerate().map(|(w, s)| s * 0.7f64.powi(2 * w as i32)).sum::<f64>();
        let p = fit_window_strength(&c, 3, target, (0, 2));
        assert!((p - 0.3).abs() < 2e-6, "{p}");
        assert_eq!(fit_window_strength(&c, 3, 10.0, (0, 2)), 0.0);
        assert_eq!(fit_window_strength(&c, 3, 0.01, (0, 2)), 1.0);
    }

    #[test]
    fn update_window_clipping() {
        assert_eq!(update_windows(4, 1, 3).unwrap(), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(update_windows(4, 1, 4).unwrap(), vec![(0, 2), (0, 3), (1, 3)]);
        assert!(update_windows(4, 1, 5).is_err());
    }
}
