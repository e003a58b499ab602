//! Principal component of an MPO by two-site DMRG on `H = -sigma`.
//!
//! The sweeps maximize `<psi|sigma|psi>` directly; the reported energies are
//! the corresponding values of `-sigma`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh_complex, eigh_real, truncation_rank, Decompose, Tensor, C64};
use crate::mpo::MPOperator;
use crate::mps::MPState;
use crate::pauli::PauliString;
use crate::states::random_mps;

/// Relative energy change below which the sweeps stop.
pub const CONVERGENCE_TOL: f64 = 1e-8;
/// Local blocks up to this dimension are diagonalized densely.
pub const DENSE_BLOCK_LIMIT: usize = 256;
const SPLIT_FLOOR: f64 = 1e-14;
const HERMITICITY_TOL: f64 = 1e-8;
const KRYLOV_DIM: usize = 40;
const LANCZOS_RESTARTS: usize = 50;
const LANCZOS_TOL: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpcaConfig {
    #[serde(default = "default_chi")]
    pub chi_mps: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default = "default_sweeps")]
    pub n_sweeps: usize,
}

fn default_chi() -> usize {
    16
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_sweeps() -> usize {
    10
}

impl QpcaConfig {
    pub fn new(seed: u64) -> Self {
        QpcaConfig {
            chi_mps: default_chi(),
            epsilon: default_epsilon(),
            seed,
            n_sweeps: default_sweeps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi_mps == 0 {
            return Err(Error::InvalidParameter("chi_mps must be positive".into()));
        }
        if self.n_sweeps == 0 {
            return Err(Error::InvalidParameter("n_sweeps must be positive".into()));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct QpcaResult {
    pub principal_state: MPState,
    /// Largest eigenvalue `Lambda_0 = <psi|sigma|psi>`.
    pub eigenvalue: f64,
    /// `<psi|-sigma|psi>` after each sweep.
    pub energy_trace: Vec<f64>,
    pub chi_mps: usize,
    pub epsilon: f64,
    pub converged: bool,
    /// Set when the energy had not settled after the last sweep.
    pub warning: Option<String>,
}

/// Contract an environment one site to the right: `(a, w, a') -> (b, w', b')`.
fn grow_left(env: &Tensor<C64>, a: &Tensor<C64>, w: &Tensor<C64>) -> Tensor<C64> {
    let t = env.tensordot(&[2], a, &[0]); // (a, w, t, b')
    let t = t.tensordot(&[1, 2], w, &[0, 2]); // (a, b', s, w')
    let t = t.tensordot(&[0, 2], &a.conj(), &[0, 1]); // (b', w', b)
    t.permute(&[2, 1, 0])
}

/// Contract an environment one site to the left: `(b, w', b') -> (a, w, a')`.
fn grow_right(env: &Tensor<C64>, b: &Tensor<C64>, w: &Tensor<C64>) -> Tensor<C64> {
    let t = b.tensordot(&[2], env, &[2]); // (a', t, b, w')
    let t = t.tensordot(&[1, 3], w, &[2, 3]); // (a', b, w, s)
    let t = t.tensordot(&[1, 3], &b.conj(), &[2, 1]); // (a', w, a)
    t.permute(&[2, 1, 0])
}

fn unit_env() -> Tensor<C64> {
    Tensor::new(vec![1, 1, 1], vec![C64::new(1.0, 0.0)])
}

struct Block<'a> {
    left: &'a Tensor<C64>,
    w1: &'a Tensor<C64>,
    w2: &'a Tensor<C64>,
    right: &'a Tensor<C64>,
    dims: [usize; 4],
}

impl Block<'_> {
    fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let theta = Tensor::new(self.dims.to_vec(), x.to_vec());
        let t = self.left.tensordot(&[2], &theta, &[0]); // (a, w, t1, t2, b')
        let t = t.tensordot(&[1, 2], self.w1, &[0, 2]); // (a, t2, b', s1, w1)
        let t = t.tensordot(&[1, 4], self.w2, &[2, 0]); // (a, b', s1, s2, w2)
        let t = t.tensordot(&[1, 4], self.right, &[2, 1]); // (a, s1, s2, b)
        t.data
    }
}

fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dense_top(block: &Block<'_>) -> (f64, Vec<C64>) {
    let n = block.dim();
    let mut mat = vec![C64::new(0.0, 0.0); n * n];
    let mut e = vec![C64::new(0.0, 0.0); n];
    for col in 0..n {
        e[col] = C64::new(1.0, 0.0);
        let y = block.apply(&e);
        for (row, v) in y.into_iter().enumerate() {
            mat[row * n + col] = v;
        }
        e[col] = C64::new(0.0, 0.0);
    }
    for i in 0..n {
        for j in 0..i {
            let avg = (mat[i * n + j] + mat[j * n + i].conj()) * 0.5;
            mat[i * n + j] = avg;
            mat[j * n + i] = avg.conj();
        }
        mat[i * n + i] = C64::new(mat[i * n + i].re, 0.0);
    }
    let (vals, vecs) = eigh_complex(n, &mat);
    let top = n - 1;
    (vals[top], (0..n).map(|r| vecs[r * n + top]).collect())
}

/// Largest eigenpair by restarted Lanczos with full reorthogonalization,
/// starting from `start`.
fn lanczos_top(block: &Block<'_>, start: &[C64]) -> (f64, Vec<C64>) {
    let n = block.dim();
    let mut x: Vec<C64> = start.to_vec();
    let nx = norm(&x);
    if nx == 0.0 {
        x = vec![C64::new(1.0, 0.0); n];
    }
    let nx = norm(&x);
    x.iter_mut().for_each(|z| *z /= nx);
    let mut best = (f64::NEG_INFINITY, x.clone());
    for _ in 0..LANCZOS_RESTARTS {
        let m = KRYLOV_DIM.min(n);
        let mut basis: Vec<Vec<C64>> = vec![x.clone()];
        let mut alpha = Vec::with_capacity(m);
        let mut beta: Vec<f64> = Vec::with_capacity(m);
        let mut last_beta = 0.0;
        for k in 0..m {
            let mut w = block.apply(&basis[k]);
            alpha.push(dot(&basis[k], &w).re);
            for _ in 0..2 {
                for v in &basis {
                    let c = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
                }
            }
            let b = norm(&w);
            last_beta = b;
            if k + 1 == m || b < 1e-14 {
                break;
            }
            beta.push(b);
            w.iter_mut().for_each(|z| *z /= b);
            basis.push(w);
        }
        let k = alpha.len();
        let mut t = vec![0.0; k * k];
        for i in 0..k {
            t[i * k + i] = alpha[i];
            if i + 1 < k {
                t[i * k + i + 1] = beta[i];
                t[(i + 1) * k + i] = beta[i];
            }
        }
        let (vals, vecs) = eigh_real(k, &t);
        let theta = vals[k - 1];
        let y: Vec<f64> = (0..k).map(|r| vecs[r * k + k - 1]).collect();
        let mut ritz = vec![C64::new(0.0, 0.0); n];
        for (v, &c) in basis.iter().zip(&y) {
            ritz.iter_mut().zip(v).for_each(|(a, b)| *a += b * c);
        }
        let nr = norm(&ritz);
        ritz.iter_mut().for_each(|z| *z /= nr);
        let residual = (last_beta * y[k - 1]).abs();
        if theta >= best.0 {
            best = (theta, ritz.clone());
        }
        if residual <= LANCZOS_TOL * theta.abs().max(1.0) || k == n {
            break;
        }
        x = ritz;
    }
    best
}

fn local_top(block: &Block<'_>, start: &[C64]) -> (f64, Vec<C64>) {
    if block.dim() <= DENSE_BLOCK_LIMIT {
        dense_top(block)
    } else {
        lanczos_top(block, start)
    }
}

fn merge(a: &Tensor<C64>, b: &Tensor<C64>) -> Tensor<C64> {
    a.tensordot(&[2], b, &[0])
}

/// `<psi|op|psi>` for an open MPS and MPO.
fn sandwich(sites: &[Tensor<C64>], op: &MPOperator) -> f64 {
    let mut env = unit_env();
    for (a, w) in sites.iter().zip(op.sites()) {
        env = grow_left(&env, a, w);
    }
    env.data[0].re
}

/// Dominant eigenpair of the Hermitian part of `sigma` as an MPS.
pub fn principal_component(sigma: &MPOperator, cfg: &QpcaConfig) -> Result<QpcaResult> {
    cfg.validate()?;
    let n = sigma.num_qubits();
    let mut op = if sigma.is_periodic() {
        sigma.to_open()
    } else {
        sigma.clone()
    };
    let scale = op.frobenius_norm();
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter("operator has zero norm".into()));
    }
    let residual = op.hermiticity_residual();
    if residual > HERMITICITY_TOL * scale {
        warn!("operator is not Hermitian (residual {residual:.3e}); using its Hermitian part");
        op = op.hermitian_part();
    }

    let random = random_mps(n, 2, cfg.seed)?;
    let zero = MPState::zero_state(n);
    let mut psi = random.direct_sum(&zero, C64::new(1.0, 0.0), C64::new(cfg.epsilon, 0.0))?;
    psi.canonicalize(0);
    if psi.normalize() == 0.0 {
        return Err(Error::InvalidParameter("initial state vanishes".into()));
    }
    let mut sites: Vec<Tensor<C64>> = psi.sites().to_vec();

    if n == 1 {
        let block = Block {
            left: &unit_env(),
            w1: op.site(0),
            w2: &Tensor::new(vec![1, 1, 1, 1], vec![C64::new(1.0, 0.0)]),
            right: &unit_env(),
            dims: [1, 2, 1, 1],
        };
        let (val, vec) = dense_top(&block);
        let state = MPState::new(vec![Tensor::new(vec![1, 2, 1], vec)])?;
        return Ok(QpcaResult {
            principal_state: state,
            eigenvalue: val,
            energy_trace: vec![-val],
            chi_mps: cfg.chi_mps,
            epsilon: cfg.epsilon,
            converged: true,
            warning: None,
        });
    }

    // rights[j] holds sites j.. contracted; lefts[j] holds sites ..j-1.
    let mut rights: Vec<Tensor<C64>> = vec![unit_env(); n + 1];
    for j in (1..n).rev() {
        rights[j] = grow_right(&rights[j + 1], &sites[j], op.site(j));
    }
    let mut lefts: Vec<Tensor<C64>> = vec![unit_env(); n + 1];

    let mut trace: Vec<f64> = Vec::with_capacity(cfg.n_sweeps);
    let mut converged = false;
    for _sweep in 0..cfg.n_sweeps {
        for j in 0..n - 1 {
            let theta = merge(&sites[j], &sites[j + 1]);
            let (a, b) = (&sites[j], &sites[j + 1]);
            let dims = [a.dims[0], 2, 2, b.dims[2]];
            let block = Block {
                left: &lefts[j],
                w1: op.site(j),
                w2: op.site(j + 1),
                right: &rights[j + 2],
                dims,
            };
            let (_, vec) = local_top(&block, &theta.data);
            let (left, right) = split(&vec, dims, cfg.chi_mps, true);
            sites[j] = left;
            sites[j + 1] = right;
            lefts[j + 1] = grow_left(&lefts[j], &sites[j], op.site(j));
        }
        for j in (0..n - 1).rev() {
            let theta = merge(&sites[j], &sites[j + 1]);
            let (a, b) = (&sites[j], &sites[j + 1]);
            let dims = [a.dims[0], 2, 2, b.dims[2]];
            let block = Block {
                left: &lefts[j],
                w1: op.site(j),
                w2: op.site(j + 1),
                right: &rights[j + 2],
                dims,
            };
            let (_, vec) = local_top(&block, &theta.data);
            let (left, right) = split(&vec, dims, cfg.chi_mps, false);
            sites[j] = left;
            sites[j + 1] = right;
            rights[j + 1] = grow_right(&rights[j + 2], &sites[j + 1], op.site(j + 1));
        }
        let energy = -sandwich(&sites, &op);
        let done = match trace.last() {
            Some(&prev) => (energy - prev).abs() <= CONVERGENCE_TOL * energy.abs().max(f64::MIN_POSITIVE),
            None => false,
        };
        trace.push(energy);
        if done {
            converged = true;
            break;
        }
    }
    let eigenvalue = -*trace.last().expect("at least one sweep");
    let warning = (!converged).then(|| {
        let msg = format!(
            "energy not converged to relative {CONVERGENCE_TOL:e} after {} sweeps",
            cfg.n_sweeps
        );
        warn!("{msg}");
        msg
    });
    let mut state = MPState::new(sites)?;
    state.canonicalize(0);
    Ok(QpcaResult {
        principal_state: state,
        eigenvalue,
        energy_trace: trace,
        chi_mps: cfg.chi_mps,
        epsilon: cfg.epsilon,
        converged,
        warning,
    })
}

/// Split a normalized two-site block; the isometry goes to the side the
/// sweep leaves behind and the weights to the other.
fn split(vec: &[C64], dims: [usize; 4], chi: usize, move_right: bool) -> (Tensor<C64>, Tensor<C64>) {
    let [l, _, _, r] = dims;
    let mut svd = C64::svd(l * 2, 2 * r, vec);
    let keep = truncation_rank(&svd.s, chi, SPLIT_FLOOR, 0.0).max(1);
    svd.truncate(keep);
    let norm = svd.s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let s: Vec<f64> = svd.s.iter().map(|x| x / norm).collect();
    let (mut u, mut vt) = (svd.u, svd.vt);
    if move_right {
        for (row, &w) in vt.chunks_mut(2 * r).zip(&s) {
            row.iter_mut().for_each(|x| *x *= w);
        }
    } else {
        for row in u.chunks_mut(keep) {
            row.iter_mut().zip(&s).for_each(|(x, &w)| *x *= w);
        }
    }
    (
        Tensor::new(vec![l, 2, keep], u),
        Tensor::new(vec![keep, 2, r], vt),
    )
}

/// Expectation of a Pauli string in the principal component.
pub fn mitigated_expectation(result: &QpcaResult, pauli: &PauliString) -> Result<f64> {
    result.principal_state.expectation(pauli)
}
