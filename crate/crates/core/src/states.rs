//! Target and test states: kicked-Ising circuit states, Ising Gibbs states from
//! imaginary-time TEBD, depolarized operators and random tensor trains.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm_symmetric, kron, truncation_rank, Decompose, Tensor, C64};
use crate::mpo::{mpo_trace, MPOperator};
use crate::mps::MPState;
use crate::serialize::StateFile;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub n: usize,
    pub depth: usize,
}

/// `prod_j exp(i pi/4 Z_j Z_{j+1}) prod_j exp(-i pi/8 X_j)` applied `depth`
/// times to `|0...0>`.
pub fn kicked_ising_state(spec: CircuitSpec) -> Result<MPState> {
    if spec.n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let mut psi = MPState::zero_state(spec.n);
    let (co, si) = ((PI / 8.0).cos(), (PI / 8.0).sin());
    let rx = [c(co), C64::new(0.0, -si), C64::new(0.0, -si), c(co)];
    let p = C64::from_polar(1.0, PI / 4.0);
    let m = p.conj();
    let z = c(0.0);
    #[rustfmt::skip]
    let zz = [
        p, z, z, z,
        z, m, z, z,
        z, z, m, z,
        z, z, z, p,
    ];
    for _ in 0..spec.depth {
        for j in 0..spec.n {
            psi.apply_single(j, &rx);
        }
        if spec.n > 1 {
            psi.canonicalize(0);
            for j in 0..spec.n - 1 {
                psi.apply_two(j, &zz, usize::MAX, 1e-14);
            }
        }
    }
    psi.normalize();
    Ok(psi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSpec {
    pub beta: f64,
    pub g: f64,
    pub h: f64,
    pub n: usize,
    /// Largest relative squared Schmidt weight dropped at each cut of the
    /// final state.
    #[serde(default = "default_cutoff")]
    pub svd_cutoff: f64,
    #[serde(default = "default_step")]
    pub trotter_step: f64,
    /// Hard bond-dimension cap; exceeding it is an error.
    #[serde(default = "default_cap")]
    pub max_bond: usize,
}

fn default_cutoff() -> f64 {
    1e-20
}
fn default_step() -> f64 {
    0.01
}
fn default_cap() -> usize {
    256
}

impl GibbsSpec {
    pub fn new(beta: f64, g: f64, h: f64, n: usize) -> Self {
        GibbsSpec {
            beta,
            g,
            h,
            n,
            svd_cutoff: default_cutoff(),
            trotter_step: default_step(),
            max_bond: default_cap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta = {} must be >= 0", self.beta)));
        }
        if !(self.svd_cutoff > 0.0) {
            return Err(Error::InvalidParameter("svd_cutoff must be > 0".into()));
        }
        if !(self.trotter_step > 0.0) {
            return Err(Error::InvalidParameter("trotter_step must be > 0".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        Ok(())
    }
}

const PX: [f64; 4] = [0.0, 1.0, 1.0, 0.0];
const PZ: [f64; 4] = [1.0, 0.0, 0.0, -1.0];
const ID: [f64; 4] = [1.0, 0.0, 0.0, 1.0];

/// Bond term of `H = (1/4)(sum Z Z + sum (g X + h Z))` with each field split
/// evenly between the bonds touching its site.
fn bond_hamiltonian(spec: &GibbsSpec, j: usize) -> Vec<f64> {
    let n = spec.n;
    let weight = |site: usize| if site == 0 || site == n - 1 { 1.0 } else { 0.5 };
    let field: Vec<f64> = PX.iter().zip(&PZ).map(|(x, z)| spec.g * x + spec.h * z).collect();
    let zz = kron(2, 2, &PZ, 2, 2, &PZ);
    let f1 = kron(2, 2, &field, 2, 2, &ID);
    let f2 = kron(2, 2, &ID, 2, 2, &field);
    (0..16)
        .map(|i| 0.25 * (zz[i] + weight(j) * f1[i] + weight(j + 1) * f2[i]))
        .collect()
}

/// Singular values below this fraction of the largest are dropped during the
/// evolution; `svd_cutoff` is applied once to the final state.
const EVOLUTION_FLOOR: f64 = 1e-15;

/// Vectorized operator as a real tensor train with physical index `2 s + t`.
struct VecTrain {
    sites: Vec<Tensor<f64>>,
}

impl VecTrain {
    /// Apply `G rho G` on sites `j, j+1` and split, moving the center to
    /// `j + 1` if `right`, else to `j`.
    fn apply(&mut self, j: usize, gate: &[f64], spec: &GibbsSpec, right: bool) -> Result<()> {
        let (a, b) = (&self.sites[j], &self.sites[j + 1]);
        let (l, r) = (a.dims[0], b.dims[2]);
        let theta = a.tensordot(&[2], b, &[0]); // [l, p1, p2, r]
        // super-gate on (s1 t1, s2 t2): K = G[s1's2', s1s2] G[t1't2', t1t2]
        let mut k = vec![0.0; 256];
        for s1p in 0..2 {
            for t1p in 0..2 {
                for s2p in 0..2 {
                    for t2p in 0..2 {
                        let row = ((s1p * 2 + t1p) * 4) + s2p * 2 + t2p;
                        for s1 in 0..2 {
                            for t1 in 0..2 {
                                for s2 in 0..2 {
                                    for t2 in 0..2 {
                                        let col = ((s1 * 2 + t1) * 4) + s2 * 2 + t2;
                                        k[row * 16 + col] = gate[(s1p * 2 + s2p) * 4 + s1 * 2 + s2]
                                            * gate[(t1p * 2 + t2p) * 4 + t1 * 2 + t2];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let kt = Tensor::new(vec![4, 4, 4, 4], k);
        let theta = theta.tensordot(&[1, 2], &kt, &[2, 3]).permute(&[0, 2, 3, 1]);
        let mut svd = f64::svd(l * 4, 4 * r, &theta.data);
        let keep = truncation_rank(&svd.s, usize::MAX, EVOLUTION_FLOOR, 0.0);
        let keep = keep.min(svd.s.iter().filter(|&&x| x > 0.0).count().max(1));
        if keep > spec.max_bond {
            return Err(Error::Capacity {
                bond: keep,
                cap: spec.max_bond,
            });
        }
        svd.truncate(keep);
        let nrm: f64 = svd.s.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s: Vec<f64> = svd.s.iter().map(|x| x / nrm).collect();
        let (mut u, mut vt) = (svd.u, svd.vt);
        if right {
            for kk in 0..keep {
                for x in &mut vt[kk * 4 * r..(kk + 1) * 4 * r] {
                    *x *= s[kk];
                }
            }
        } else {
            for row in 0..l * 4 {
                for kk in 0..keep {
                    u[row * keep + kk] *= s[kk];
                }
            }
        }
        self.sites[j] = Tensor::new(vec![l, 4, keep], u);
        self.sites[j + 1] = Tensor::new(vec![keep, 4, r], vt);
        Ok(())
    }

    /// Left-to-right truncation sweep from a center on site 0, dropping at
    /// most `cutoff` of the squared Schmidt weight at each cut.
    fn compress(&mut self, cutoff: f64) {
        for j in 0..self.sites.len() - 1 {
            let (l, r) = (self.sites[j].dims[0], self.sites[j].dims[2]);
            let mut svd = f64::svd(l * 4, r, &self.sites[j].data);
            let keep = truncation_rank(&svd.s, usize::MAX, 0.0, cutoff);
            svd.truncate(keep);
            let mut sv = svd.vt;
            for k in 0..keep {
                for x in &mut sv[k * r..(k + 1) * r] {
                    *x *= svd.s[k];
                }
            }
            self.sites[j] = Tensor::new(vec![l, 4, keep], svd.u);
            let sv = Tensor::new(vec![keep, r], sv);
            self.sites[j + 1] = sv.tensordot(&[1], &self.sites[j + 1], &[0]);
        }
    }
}

/// Ising Gibbs state `exp(-beta H) / Z` by second-order imaginary-time TEBD
/// applied symmetrically to both legs of the identity.
pub fn ising_gibbs(spec: &GibbsSpec) -> Result<MPOperator> {
    spec.validate()?;
    let n = spec.n;
    if n == 1 {
        let field: Vec<f64> = PX.iter().zip(&PZ).map(|(x, z)| 0.25 * (spec.g * x + spec.h * z)).collect();
        let rho = expm_symmetric(2, &field, -spec.beta);
        let tr = rho[0] + rho[3];
        let data = rho.iter().map(|&x| c(x / tr)).collect();
        return MPOperator::new(vec![Tensor::new(vec![1, 2, 2, 1], data)], false);
    }
    let mut train = VecTrain {
        sites: vec![Tensor::new(vec![1, 4, 1], vec![1.0, 0.0, 0.0, 1.0]); n],
    };
    let total = spec.beta / 2.0;
    let steps = (total / spec.trotter_step).ceil() as usize;
    if steps > 0 {
        let dt = total / steps as f64;
        let half: Vec<Vec<f64>> = (0..n - 1)
            .map(|j| expm_symmetric(4, &bond_hamiltonian(spec, j), -dt / 2.0))
            .collect();
        let full_last = expm_symmetric(4, &bond_hamiltonian(spec, n - 2), -dt);
        for _ in 0..steps {
            for j in 0..n - 1 {
                let g = if j == n - 2 { &full_last } else { &half[j] };
                train.apply(j, g, spec, j + 2 < n)?;
            }
            for j in (0..n.saturating_sub(2)).rev() {
                train.apply(j, &half[j], spec, false)?;
            }
        }
    }
    train.compress(spec.svd_cutoff);
    let sites: Vec<Tensor<C64>> = train
        .sites
        .iter()
        .map(|t| Tensor::new(vec![t.dims[0], 2, 2, t.dims[2]], t.data.iter().map(|&x| c(x)).collect()))
        .collect();
    let op = MPOperator::new(sites, false)?;
    let tr = mpo_trace(&op);
    Ok(op.scaled(C64::new(1.0, 0.0) / tr))
}

/// Single-site depolarizing channel with strength `p[j]` on every site:
/// `rho -> (1 - p) rho + p tr_j[rho] (x) I/2`.
pub fn apply_depolarizing(op: &MPOperator, p: &[f64]) -> Result<MPOperator> {
    let n = op.num_qubits();
    if p.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: p.len(),
        });
    }
    if let Some(&bad) = p.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::InvalidParameter(format!("depolarizing strength {bad} outside [0, 1]")));
    }
    let sites = op
        .sites()
        .iter()
        .zip(p)
        .map(|(t, &pj)| {
            let (l, r) = (t.dims[0], t.dims[3]);
            let mut out = t.clone();
            for a in 0..l {
                for b in 0..r {
                    let idx = |s: usize, tt: usize| ((a * 2 + s) * 2 + tt) * r + b;
                    let tr = t.data[idx(0, 0)] + t.data[idx(1, 1)];
                    for s in 0..2 {
                        for tt in 0..2 {
                            let mixed = if s == tt { tr * 0.5 } else { c(0.0) };
                            out.data[idx(s, tt)] = t.data[idx(s, tt)] * (1.0 - pj) + mixed * pj;
                        }
                    }
                }
            }
            out
        })
        .collect();
    MPOperator::new(sites, op.is_periodic())
}

fn gaussian(rng: &mut ChaCha20Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Random density operator `rho = A A^dagger / tr` from a locally purified
/// train with purification bond `chi` and Kraus dimension 2; the MPO bond is
/// `chi^2`.
pub fn random_mpdo(n: usize, chi: usize, seed: u64) -> Result<MPOperator> {
    if chi == 0 || n == 0 {
        return Err(Error::InvalidParameter("n and chi must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let kraus = 2;
    let mut sites = Vec::with_capacity(n);
    for j in 0..n {
        let l = if j == 0 { 1 } else { chi };
        let r = if j == n - 1 { 1 } else { chi };
        let a: Vec<C64> = (0..l * 2 * kraus * r).map(|_| gaussian(&mut rng)).collect();
        // A[x, s, k, y]; M[(x x'), s, t, (y y')] = sum_k A[x,s,k,y] conj(A[x',t,k,y'])
        let mut m = Tensor::zeros(vec![l * l, 2, 2, r * r]);
        for x in 0..l {
            for x2 in 0..l {
                for s in 0..2 {
                    for t in 0..2 {
                        for y in 0..r {
                            for y2 in 0..r {
                                let mut acc = c(0.0);
                                for k in 0..kraus {
                                    acc += a[((x * 2 + s) * kraus + k) * r + y]
                                        * a[((x2 * 2 + t) * kraus + k) * r + y2].conj();
                                }
                                m.data[(((x * l + x2) * 2 + s) * 2 + t) * r * r + y * r + y2] = acc;
                            }
                        }
                    }
                }
            }
        }
        sites.push(m);
    }
    let op = MPOperator::new(sites, false)?;
    let tr = mpo_trace(&op);
    Ok(op.scaled(c(1.0) / tr))
}

/// Random complex MPO with bond `chi` (not Hermitian), for oracle tests.
pub fn random_mpo(n: usize, chi: usize, seed: u64, periodic: bool) -> Result<MPOperator> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sites = (0..n)
        .map(|j| {
            let l = if j == 0 && !periodic { 1 } else { chi };
            let r = if j == n - 1 && !periodic { 1 } else { chi };
            let data = (0..l * 4 * r).map(|_| gaussian(&mut rng) * 0.5).collect();
            Tensor::new(vec![l, 2, 2, r], data)
        })
        .collect();
    MPOperator::new(sites, periodic)
}

/// Random Hermitian MPO with bond at most `2 chi`, for oracle tests.
pub fn random_hermitian_mpo(n: usize, chi: usize, seed: u64) -> Result<MPOperator> {
    Ok(random_mpo(n, chi, seed, false)?.hermitian_part())
}

/// Random normalized MPS with bond `chi`.
pub fn random_mps(n: usize, chi: usize, seed: u64) -> Result<MPState> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sites = (0..n)
        .map(|j| {
            let l = if j == 0 { 1 } else { chi };
            let r = if j == n - 1 { 1 } else { chi };
            let data = (0..l * 2 * r).map(|_| gaussian(&mut rng)).collect();
            Tensor::new(vec![l, 2, r], data)
        })
        .collect();
    let mut psi = MPState::new(sites)?;
    psi.canonicalize(0);
    psi.normalize();
    Ok(psi)
}

/// Dense `exp(-beta H) / Z` for the same Hamiltonian, `n <= 10`.
pub fn dense_ising_gibbs(beta: f64, g: f64, h: f64, n: usize) -> Result<Vec<f64>> {
    if n > 10 {
        return Err(Error::Oversize {
            what: "dense Gibbs state",
            size: n,
            limit: 10,
        });
    }
    let d = 1usize << n;
    let mut ham = vec![0.0; d * d];
    for x in 0..d {
        let bit = |j: usize| ((x >> (n - 1 - j)) & 1) as f64;
        let zj = |j: usize| 1.0 - 2.0 * bit(j);
        let mut diag = 0.0;
        for j in 0..n - 1 {
            diag += zj(j) * zj(j + 1);
        }
        for j in 0..n {
            diag += h * zj(j);
            let y = x ^ (1 << (n - 1 - j));
            ham[x * d + y] += 0.25 * g;
        }
        ham[x * d + x] += 0.25 * diag;
    }
    let rho = expm_symmetric(d, &ham, -beta);
    let tr: f64 = (0..d).map(|i| rho[i * d + i]).sum();
    Ok(rho.into_iter().map(|x| x / tr).collect())
}

/// Random matrix helper shared by tests: `m x n` complex Gaussian.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..rows * cols).map(|_| gaussian(&mut rng)).collect()
}

/// A state description as read from a spec file, tagged by `"state"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Gibbs(GibbsSpec),
    /// Pure circuit state, or an operator when `depolarizing` is set.
    KickedIsing {
        n: usize,
        depth: usize,
        #[serde(default)]
        depolarizing: Option<f64>,
    },
    /// Random density operator from [`random_mpdo`].
    Random { n: usize, chi: usize, seed: u64 },
}

impl StateSpec {
    pub fn build(&self) -> Result<StateFile> {
        match *self {
            StateSpec::Gibbs(spec) => Ok(StateFile::Mpo(ising_gibbs(&spec)?)),
            StateSpec::KickedIsing { n, depth, depolarizing } => {
                let psi = kicked_ising_state(CircuitSpec { n, depth })?;
                match depolarizing {
                    None => Ok(StateFile::Mps(psi)),
                    Some(p) => {
                        if !(0.0..=1.0).contains(&p) {
                            return Err(Error::InvalidParameter(format!(
                                "depolarizing = {p} must lie in [0, 1]"
                            )));
                        }
                        Ok(StateFile::Mpo(apply_depolarizing(&psi.to_mpo(), &vec![p; n])?))
                    }
                }
            }
            StateSpec::Random { n, chi, seed } => Ok(StateFile::Mpo(random_mpdo(n, chi, seed)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::{mpo_purity, mpo_to_dense};
    use crate::mps::mps_to_dense;

    #[test]
    fn depth_zero_is_product() {
        let psi = kicked_ising_state(CircuitSpec { n: 5, depth: 0 }).unwrap();
        assert_eq!(psi.max_bond(), 1);
        let v = mps_to_dense(&psi).unwrap();
        assert!((v[0] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn kicked_ising_bond_dims() {
        for (d, chi) in [(1, 2), (2, 4)] {
            let psi = kicked_ising_state(CircuitSpec { n: 10, depth: d }).unwrap();
            assert_eq!(psi.max_bond(), chi);
            assert!((psi.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_zero_is_maximally_mixed() {
        let rho = ising_gibbs(&GibbsSpec::new(0.0, 1.01, 0.04, 5)).unwrap();
        assert!((mpo_purity(&rho) - 2f64.powi(-5)).abs() < 1e-15);
    }

    #[test]
    fn small_gibbs_matches_dense() {
        let n = 4;
        let rho = ising_gibbs(&GibbsSpec::new(1.0, 1.01, 0.04, n)).unwrap();
        let dense = mpo_to_dense(&rho).unwrap();
        let exact = dense_ising_gibbs(1.0, 1.01, 0.04, n).unwrap();
        let err: f64 = dense
            .iter()
            .zip(&exact)
            .map(|(x, y)| (x - c(*y)).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-5, "error {err}");
    }

    #[test]
    fn depolarizing_extremes() {
        let rho = random_mpdo(3, 2, 7).unwrap();
        let same = apply_depolarizing(&rho, &[0.0; 3]).unwrap();
        assert_eq!(same, rho);
        let mixed = apply_depolarizing(&rho, &[1.0; 3]).unwrap();
        assert!((mpo_purity(&mixed) - 0.125).abs() < 1e-14);
        assert!(apply_depolarizing(&rho, &[0.0, 1.5, 0.0]).is_err());
    }

    #[test]
    fn random_mpdo_is_deterministic() {
        assert_eq!(random_mpdo(4, 2, 11).unwrap(), random_mpdo(4, 2, 11).unwrap());
    }

    #[test]
    fn spec_files_parse_and_build() {
        let spec: StateSpec = serde_json::from_str(r#"{"state":"kicked_ising","n":4,"depth":0}"#).unwrap();
        match spec.build().unwrap() {
            StateFile::Mps(psi) => assert_eq!(psi.max_bond(), 1),
            other => panic!("expected a pure state, got {other:?}"),
        }
        let spec: StateSpec =
            serde_json::from_str(r#"{"state":"kicked_ising","n":4,"depth":1,"depolarizing":0.1}"#).unwrap();
        assert!(matches!(spec.build().unwrap(), StateFile::Mpo(_)));
        let spec: StateSpec = serde_json::from_str(r#"{"state":"gibbs","beta":0.5,"g":1.0,"h":0.0,"n":4}"#).unwrap();
        assert!(matches!(spec, StateSpec::Gibbs(_)));
    }

    #[test]
    fn spec_errors_name_the_field() {
        let err = serde_json::from_str::<StateSpec>(r#"{"state":"gibbs","beta":1,"g":1,"h":0,"n":4,"bta":2}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("bta"), "{err}");
        let err = serde_json::from_str::<StateSpec>(r#"{"state":"kicked_ising","n":4}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("depth"), "{err}");
        let spec: StateSpec = serde_json::from_str(r#"{"state":"gibbs","beta":-1,"g":1,"h":0,"n":4}"#).unwrap();
        assert!(spec.build().unwrap_err().to_string().contains("beta"));
    }
}
