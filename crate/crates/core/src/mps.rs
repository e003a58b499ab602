//! Open-boundary matrix-product states with site tensors `(left, phys, right)`.

use crate::error::{Error, Result};
use crate::linalg::{adjoint, matmul, truncation_rank, Decompose, Tensor, C64};
use crate::mpo::MPOperator;
use crate::pauli::{Pauli, PauliString};

/// Largest chain length accepted by [`mps_to_dense`].
pub const DENSE_MPS_LIMIT: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct MPState {
    sites: Vec<Tensor<C64>>,
    center: Option<usize>,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Result of a two-site gate application.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitInfo {
    pub kept: usize,
    pub discarded_weight: f64,
}

impl MPState {
    pub fn new(sites: Vec<Tensor<C64>>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Empty("state"));
        }
        for (j, t) in sites.iter().enumerate() {
            if t.rank() != 3 || t.dims[1] != 2 {
                return Err(Error::Structural(format!(
                    "site {j} has shape {:?}, expected (l, 2, r)",
                    t.dims
                )));
            }
        }
        for j in 0..sites.len() - 1 {
            if sites[j].dims[2] != sites[j + 1].dims[0] {
                return Err(Error::Structural(format!(
                    "bond {j}-{} mismatch: {} vs {}",
                    j + 1,
                    sites[j].dims[2],
                    sites[j + 1].dims[0]
                )));
            }
        }
        if sites[0].dims[0] != 1 || sites[sites.len() - 1].dims[2] != 1 {
            return Err(Error::Structural("outer bonds must be 1".into()));
        }
        Ok(MPState {
            sites,
            center: None,
        })
    }

    pub fn product(locals: &[[C64; 2]]) -> Self {
        let sites = locals
            .iter()
            .map(|v| Tensor::new(vec![1, 2, 1], v.to_vec()))
            .collect();
        MPState::new(sites).expect("product state is well formed")
    }

    /// `|0...0>`.
    pub fn zero_state(n: usize) -> Self {
        let mut s = Self::product(&vec![[c(1.0), c(0.0)]; n]);
        s.center = Some(0);
        s
    }

    pub fn num_qubits(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Tensor<C64>] {
        &self.sites
    }

    pub fn site(&self, j: usize) -> &Tensor<C64> {
        &self.sites[j]
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    /// Replace a site tensor; the canonical-form flag is cleared.
    pub fn set_site(&mut self, j: usize, t: Tensor<C64>) {
        self.sites[j] = t;
        self.center = None;
    }

    pub(crate) fn set_site_keep_center(&mut self, j: usize, t: Tensor<C64>, center: Option<usize>) {
        self.sites[j] = t;
        self.center = center;
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.sites.iter().map(|t| t.dims[0]).collect();
        b.push(1);
        b
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &MPState) -> Result<C64> {
        if self.num_qubits() != other.num_qubits() {
            return Err(Error::LengthMismatch {
                left: self.num_qubits(),
                right: other.num_qubits(),
            });
        }
        let mut env = Tensor::new(vec![1, 1], vec![c(1.0)]);
        for (a, b) in self.sites.iter().zip(&other.sites) {
            // env[x, y] a*[x, s, x'] b[y, s, y']
            let t = env.tensordot(&[0], &a.conj(), &[0]); // [y, s, x']
            env = t.tensordot(&[0, 1], b, &[0, 1]); // [x', y']
        }
        Ok(env.data[0])
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(0.0)
    }

    pub fn normalize(&mut self) -> f64 {
        let nrm = self.norm();
        if nrm > 0.0 {
            let j = self.center.unwrap_or(0);
            self.sites[j].scale_inplace(1.0 / nrm);
        }
        nrm
    }

    /// Bring the state into mixed canonical form with orthogonality center `center`.
    pub fn canonicalize(&mut self, center: usize) {
        let n = self.num_qubits();
        assert!(center < n);
        let (from_left, from_right) = match self.center {
            Some(c0) => (c0.min(center), c0.max(center)),
            None => (0, n - 1),
        };
        for j in from_left..center {
            self.left_orthogonalize(j);
        }
        for j in (center + 1..=from_right).rev() {
            self.right_orthogonalize(j);
        }
        self.center = Some(center);
    }

    /// QR of site `j` as `(l*2, r)`; `R` moves into site `j+1`.
    fn left_orthogonalize(&mut self, j: usize) {
        let t = &self.sites[j];
        let (l, r) = (t.dims[0], t.dims[2]);
        let (q, rr, k) = C64::qr(l * 2, r, &t.data);
        self.sites[j] = Tensor::new(vec![l, 2, k], q);
        let next = &self.sites[j + 1];
        let (nr, cols) = (next.dims[0], next.dims[1] * next.dims[2]);
        let merged = matmul(k, nr, cols, &rr, false, &next.data, false);
        self.sites[j + 1] = Tensor::new(vec![k, 2, next.dims[2]], merged);
    }

    /// LQ of site `j` as `(l, 2*r)` via QR of the adjoint; `L` moves into site `j-1`.
    fn right_orthogonalize(&mut self, j: usize) {
        let t = &self.sites[j];
        let (l, r) = (t.dims[0], t.dims[2]);
        let adj = adjoint(l, 2 * r, &t.data);
        let (q, rr, k) = C64::qr(2 * r, l, &adj);
        self.sites[j] = Tensor::new(vec![k, 2, r], adjoint(2 * r, k, &q));
        let lmat = adjoint(k, l, &rr); // l x k
        let prev = &self.sites[j - 1];
        let (pl, rows) = (prev.dims[0], prev.dims[0] * 2);
        let merged = matmul(rows, l, k, &prev.data, false, &lmat, false);
        self.sites[j - 1] = Tensor::new(vec![pl, 2, k], merged);
    }

    /// Largest deviation from the isometry conditions implied by the center.
    pub fn canonical_residual(&self) -> Option<f64> {
        let center = self.center?;
        let mut worst: f64 = 0.0;
        for (j, t) in self.sites.iter().enumerate() {
            let (l, r) = (t.dims[0], t.dims[2]);
            let gram = if j < center {
                matmul(r, 2 * l, r, &adjoint(2 * l, r, &t.data), false, &t.data, false)
            } else if j > center {
                matmul(l, 2 * r, l, &t.data, false, &adjoint(l, 2 * r, &t.data), false)
            } else {
                continue;
            };
            let d = if j < center { r } else { l };
            for a in 0..d {
                for b in 0..d {
                    let e = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((gram[a * d + b] - c(e)).norm());
                }
            }
        }
        Some(worst)
    }

    /// Apply a single-qubit row-major unitary to site `j`.
    pub fn apply_single(&mut self, j: usize, u: &[C64; 4]) {
        let t = &self.sites[j];
        let ut = Tensor::new(vec![2, 2], u.to_vec());
        let out = t.tensordot(&[1], &ut, &[1]).permute(&[0, 2, 1]);
        let center = self.center;
        self.set_site_keep_center(j, out, center);
    }

    /// Apply a two-qubit gate (row-major 4x4 on `(s_j, s_{j+1})`) to sites `j, j+1`
    /// and split by SVD, leaving the orthogonality center on `j + 1`.
    pub fn apply_two(&mut self, j: usize, gate: &[C64; 16], max_bond: usize, rel_floor: f64) -> SplitInfo {
        if self.center != Some(j) && self.center != Some(j + 1) {
            self.canonicalize(j);
        }
        let (a, b) = (&self.sites[j], &self.sites[j + 1]);
        let (l, r) = (a.dims[0], b.dims[2]);
        let theta = a.tensordot(&[2], b, &[0]); // [l, s1, s2, r]
        let g = Tensor::new(vec![2, 2, 2, 2], gate.to_vec());
        let theta = theta
            .tensordot(&[1, 2], &g, &[2, 3]) // [l, r, s1', s2']
            .permute(&[0, 2, 3, 1]);
        self.split(j, l, r, theta.data, max_bond, rel_floor, true)
    }

    /// Split a two-site block `[l, s1, s2, r]` into sites `j, j+1`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn split(
        &mut self,
        j: usize,
        l: usize,
        r: usize,
        theta: Vec<C64>,
        max_bond: usize,
        rel_floor: f64,
        center_right: bool,
    ) -> SplitInfo {
        let mut svd = C64::svd(l * 2, 2 * r, &theta);
        let total: f64 = svd.s.iter().map(|x| x * x).sum();
        let keep = truncation_rank(&svd.s, max_bond, rel_floor, 0.0);
        let discarded: f64 = svd.s[keep..].iter().map(|x| x * x).sum();
        svd.truncate(keep);
        let (mut u, mut vt) = (svd.u, svd.vt);
        if center_right {
            for k in 0..keep {
                for x in &mut vt[k * 2 * r..(k + 1) * 2 * r] {
                    *x *= svd.s[k];
                }
            }
        } else {
            for row in 0..l * 2 {
                for k in 0..keep {
                    u[row * keep + k] *= svd.s[k];
                }
            }
        }
        self.sites[j] = Tensor::new(vec![l, 2, keep], u);
        self.sites[j + 1] = Tensor::new(vec![keep, 2, r], vt);
        self.center = Some(if center_right { j + 1 } else { j });
        SplitInfo {
            kept: keep,
            discarded_weight: if total > 0.0 { discarded / total } else { 0.0 },
        }
    }

    /// `<psi|P|psi> / <psi|psi>`.
    pub fn expectation(&self, pauli: &PauliString) -> Result<f64> {
        pauli.check_within(self.num_qubits())?;
        let mut num = Tensor::new(vec![1, 1], vec![c(1.0)]);
        for (j, t) in self.sites.iter().enumerate() {
            let p = pauli.at(j);
            let bt = if p == Pauli::I {
                t.clone()
            } else {
                let pm = Tensor::new(vec![2, 2], p.matrix().to_vec());
                t.tensordot(&[1], &pm, &[1]).permute(&[0, 2, 1])
            };
            let x = num.tensordot(&[0], &t.conj(), &[0]);
            num = x.tensordot(&[0, 1], &bt, &[0, 1]);
        }
        let nrm = self.inner(self)?.re;
        Ok(num.data[0].re / nrm)
    }

    /// `|psi><psi|` as an MPO with squared bond dimension.
    pub fn to_mpo(&self) -> MPOperator {
        let sites = self
            .sites
            .iter()
            .map(|t| {
                let (l, r) = (t.dims[0], t.dims[2]);
                // [l, s, r] x [l', t, r'] -> [l, l', s, t, r, r']
                let mut out = Tensor::zeros(vec![l * l, 2, 2, r * r]);
                for a in 0..l {
                    for a2 in 0..l {
                        for s in 0..2 {
                            for tt in 0..2 {
                                for b in 0..r {
                                    for b2 in 0..r {
                                        let x = t.data[(a * 2 + s) * r + b]
                                            * t.data[(a2 * 2 + tt) * r + b2].conj();
                                        out.data[(((a * l + a2) * 2 + s) * 2 + tt) * r * r
                                            + b * r
                                            + b2] = x;
                                    }
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect();
        MPOperator::new(sites, false).expect("outer bonds stay 1")
    }

    /// `ca |self> + cb |other>` with block-diagonal bonds.
    pub fn direct_sum(&self, other: &MPState, ca: C64, cb: C64) -> Result<Self> {
        let n = self.num_qubits();
        if other.num_qubits() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: other.num_qubits(),
            });
        }
        if n == 1 {
            let data = self.sites[0]
                .data
                .iter()
                .zip(&other.sites[0].data)
                .map(|(x, y)| ca * x + cb * y)
                .collect();
            return MPState::new(vec![Tensor::new(vec![1, 2, 1], data)]);
        }
        let mut sites = Vec::with_capacity(n);
        for j in 0..n {
            let (a, b) = (&self.sites[j], &other.sites[j]);
            let (la, ra, lb, rb) = (a.dims[0], a.dims[2], b.dims[0], b.dims[2]);
            let first = j == 0;
            let last = j == n - 1;
            let l = if first { 1 } else { la + lb };
            let r = if last { 1 } else { ra + rb };
            let (fa, fb) = if first { (ca, cb) } else { (c(1.0), c(1.0)) };
            let mut t = Tensor::zeros(vec![l, 2, r]);
            for s in 0..2 {
                for x in 0..la {
                    for y in 0..ra {
                        let (li, ri) = (if first { 0 } else { x }, if last { 0 } else { y });
                        t.data[(li * 2 + s) * r + ri] += fa * a.data[(x * 2 + s) * ra + y];
                    }
                }
                for x in 0..lb {
                    for y in 0..rb {
                        let li = if first { 0 } else { la + x };
                        let ri = if last { 0 } else { ra + y };
                        t.data[(li * 2 + s) * r + ri] += fb * b.data[(x * 2 + s) * rb + y];
                    }
                }
            }
            sites.push(t);
        }
        MPState::new(sites)
    }
}

/// Dense state vector, first site most significant.
pub fn mps_to_dense(psi: &MPState) -> Result<Vec<C64>> {
    let n = psi.num_qubits();
    if n > DENSE_MPS_LIMIT {
        return Err(Error::Oversize {
            what: "dense state",
            size: n,
            limit: DENSE_MPS_LIMIT,
        });
    }
    let mut acc = psi.sites[0].clone();
    for t in &psi.sites[1..] {
        let r = acc.rank();
        acc = acc.tensordot(&[r - 1], t, &[0]);
    }
    Ok(acc.data)
}

/// Schmidt values across the bond between sites `cut - 1` and `cut`,
/// normalized so their squares sum to one.
pub fn schmidt_values(psi: &MPState, cut: usize) -> Result<Vec<f64>> {
    let n = psi.num_qubits();
    if cut == 0 || cut >= n {
        return Err(Error::InvalidParameter(format!(
            "cut {cut} must lie in [1, {})",
            n
        )));
    }
    let mut work = psi.clone();
    work.canonicalize(cut - 1);
    let t = &work.sites[cut - 1];
    let svd = C64::svd(t.dims[0] * 2, t.dims[2], &t.data);
    let total: f64 = svd.s.iter().map(|x| x * x).sum();
    Ok(svd.s.iter().map(|x| x / total.sqrt()).collect())
}

/// Bipartite von Neumann entropy in bits.
pub fn von_neumann_entropy(psi: &MPState, cut: usize) -> Result<f64> {
    let lambdas = schmidt_values(psi, cut)?;
    Ok(lambdas
        .iter()
        .map(|l| l * l)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_state_dense_is_unit_vector() {
        let v = mps_to_dense(&MPState::zero_state(3)).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], c(1.0));
        assert!(v[1..].iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn bell_pair_entropy_is_one_bit() {
        let h = 0.5f64.sqrt();
        let sites = vec![
            Tensor::new(vec![1, 2, 2], vec![c(h), c(0.0), c(0.0), c(h)]),
            Tensor::new(vec![2, 2, 1], vec![c(1.0), c(0.0), c(0.0), c(1.0)]),
        ];
        let psi = MPState::new(sites).unwrap();
        assert!((von_neumann_entropy(&psi, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!(von_neumann_entropy(&MPState::zero_state(4), 2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn to_mpo_of_product_state() {
        let psi = MPState::zero_state(2);
        let rho = psi.to_mpo();
        let z = crate::pauli::PauliString::single(1, Pauli::Z);
        assert!((crate::mpo::expectation(&rho, &z).unwrap() - 1.0).abs() < 1e-15);
    }
}
