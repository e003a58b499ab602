//! Real Pauli-basis MPOs: `sigma = sum_p prod_j M^{(j)}_{p_j} P_{p_1} (x) ... (x) P_{p_N}`
//! with real site tensors `(left, 4, right)`.
//!
//! Every such operator is Hermitian, which makes this the working format of the
//! learner, the sampler and the shadow estimators.

use crate::error::{Error, Result};
use crate::linalg::{matmul, truncation_rank, Decompose, Tensor, C64};
use crate::mpo::{check_interval, MPOperator};
use crate::pauli::pauli_matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct PauliMpo {
    sites: Vec<Tensor<f64>>,
}

impl PauliMpo {
    pub fn new(sites: Vec<Tensor<f64>>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Empty("operator"));
        }
        for (j, t) in sites.iter().enumerate() {
            if t.rank() != 3 || t.dims[1] != 4 {
                return Err(Error::Structural(format!(
                    "site {j} has shape {:?}, expected (l, 4, r)",
                    t.dims
                )));
            }
            if j + 1 < sites.len() && t.dims[2] != sites[j + 1].dims[0] {
                return Err(Error::Structural(format!("bond {j}-{} mismatch", j + 1)));
            }
        }
        if sites[0].dims[0] != 1 || sites[sites.len() - 1].dims[2] != 1 {
            return Err(Error::Structural("outer bonds must be 1".into()));
        }
        Ok(PauliMpo { sites })
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let site = Tensor::new(vec![1, 4, 1], vec![0.5, 0.0, 0.0, 0.0]);
        PauliMpo {
            sites: vec![site; n],
        }
    }

    /// Hermitian part of `op`, compressed to its exact rank (singular values
    /// below `1e-13` of the largest are dropped).
    pub fn from_mpo(op: &MPOperator) -> Self {
        let op = op.to_open();
        let n = op.num_qubits();
        let mut sites = Vec::with_capacity(n);
        for (j, t) in op.sites().iter().enumerate() {
            let (l, r) = (t.dims[0], t.dims[3]);
            // c[a,p,b] = sum_{s,t} M[a,s,t,b] P_p[t,s] / 2
            let mut cpx = vec![C64::new(0.0, 0.0); l * 4 * r];
            for p in 0..4 {
                let pm = pauli_matrix(p);
                for a in 0..l {
                    for s in 0..2 {
                        for tt in 0..2 {
                            let w = pm[tt * 2 + s] * 0.5;
                            if w.norm() == 0.0 {
                                continue;
                            }
                            let base = ((a * 2 + s) * 2 + tt) * r;
                            for b in 0..r {
                                cpx[(a * 4 + p) * r + b] += w * t.data[base + b];
                            }
                        }
                    }
                }
            }
            // x + iy -> [[x, -y], [y, x]]; the outer bonds select the real part.
            let lo = if j == 0 { 1 } else { 2 * l };
            let ro = if j == n - 1 { 1 } else { 2 * r };
            let mut out = Tensor::zeros(vec![lo, 4, ro]);
            for a in 0..l {
                for p in 0..4 {
                    for b in 0..r {
                        let z = cpx[(a * 4 + p) * r + b];
                        for x in 0..2 {
                            for y in 0..2 {
                                let v = match (x, y) {
                                    (0, 0) | (1, 1) => z.re,
                                    (0, 1) => -z.im,
                                    _ => z.im,
                                };
                                let li = if j == 0 {
                                    if x != 0 {
                                        continue;
                                    }
                                    0
                                } else {
                                    2 * a + x
                                };
                                let ri = if j == n - 1 {
                                    if y != 0 {
                                        continue;
                                    }
                                    0
                                } else {
                                    2 * b + y
                                };
                                out.data[(li * 4 + p) * ro + ri] = v;
                            }
                        }
                    }
                }
            }
            sites.push(out);
        }
        let mut pm = PauliMpo { sites };
        pm.compress(usize::MAX, 1e-13);
        pm
    }

    /// Complex MPO representing the same operator.
    pub fn to_mpo(&self) -> MPOperator {
        let sites = self
            .sites
            .iter()
            .map(|t| {
                let (l, r) = (t.dims[0], t.dims[2]);
                let mut out = Tensor::zeros(vec![l, 2, 2, r]);
                for p in 0..4 {
                    let pm = pauli_matrix(p);
                    for a in 0..l {
                        for st in 0..4 {
                            if pm[st].norm() == 0.0 {
                                continue;
                            }
                            for b in 0..r {
                                out.data[(a * 4 + st) * r + b] += pm[st] * t.data[(a * 4 + p) * r + b];
                            }
                        }
                    }
                }
                out
            })
            .collect();
        MPOperator::new(sites, false).expect("open chain")
    }

    pub fn num_qubits(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Tensor<f64>] {
        &self.sites
    }

    pub fn site(&self, j: usize) -> &Tensor<f64> {
        &self.sites[j]
    }

    pub fn set_site(&mut self, j: usize, t: Tensor<f64>) {
        self.sites[j] = t;
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.sites.iter().map(|t| t.dims[0]).collect();
        b.push(1);
        b
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Pauli component `p` of site `j` as an `l x r` matrix.
    pub fn component(&self, j: usize, p: usize) -> Vec<f64> {
        let t = &self.sites[j];
        let (l, r) = (t.dims[0], t.dims[2]);
        let mut out = Vec::with_capacity(l * r);
        for a in 0..l {
            out.extend_from_slice(&t.data[(a * 4 + p) * r..(a * 4 + p + 1) * r]);
        }
        out
    }

    /// Site `j` with the physical legs traced: `2 M_0`.
    pub fn traced_site(&self, j: usize) -> Vec<f64> {
        self.component(j, 0).into_iter().map(|x| 2.0 * x).collect()
    }

    /// Row vectors `L_j = prod_{i<j} 2 M^{(i)}_0`, `j = 0..=N`.
    pub fn left_trace_envs(&self) -> Vec<Vec<f64>> {
        let n = self.num_qubits();
        let mut envs = Vec::with_capacity(n + 1);
        envs.push(vec![1.0]);
        for j in 0..n {
            let t = &self.sites[j];
            let prev = &envs[j];
            let next = matmul(1, t.dims[0], t.dims[2], prev, false, &self.traced_site(j), false);
            envs.push(next);
        }
        envs
    }

    /// Column vectors `R_j = prod_{i>=j} 2 M^{(i)}_0`, `j = 0..=N`.
    pub fn right_trace_envs(&self) -> Vec<Vec<f64>> {
        let n = self.num_qubits();
        let mut envs = vec![Vec::new(); n + 1];
        envs[n] = vec![1.0];
        for j in (0..n).rev() {
            let t = &self.sites[j];
            envs[j] = matmul(t.dims[0], t.dims[2], 1, &self.traced_site(j), false, &envs[j + 1], false);
        }
        envs
    }

    pub fn trace(&self) -> f64 {
        self.right_trace_envs()[0][0]
    }

    pub fn scale(&mut self, j: usize, f: f64) {
        self.sites[j].scale_inplace(f);
    }

    /// Pauli coefficient tensor (`4^k` entries) of the reduced operator on
    /// `[first, last]`.
    pub fn window_coeffs(&self, first: usize, last: usize) -> Result<Vec<f64>> {
        check_interval(self.num_qubits(), first, last)?;
        let k = last - first + 1;
        if k > 10 {
            return Err(Error::Oversize {
                what: "Pauli window",
                size: k,
                limit: 10,
            });
        }
        let left = self.left_env(first);
        let right = self.right_env(last + 1);
        Ok(self.window_coeffs_with(first, last, &left, &right))
    }

    pub(crate) fn left_env(&self, j: usize) -> Vec<f64> {
        let mut env = vec![1.0];
        for i in 0..j {
            let t = &self.sites[i];
            env = matmul(1, t.dims[0], t.dims[2], &env, false, &self.traced_site(i), false);
        }
        env
    }

    pub(crate) fn right_env(&self, j: usize) -> Vec<f64> {
        let n = self.num_qubits();
        let mut env = vec![1.0];
        for i in (j..n).rev() {
            let t = &self.sites[i];
            env = matmul(t.dims[0], t.dims[2], 1, &self.traced_site(i), false, &env, false);
        }
        env
    }

    pub(crate) fn window_coeffs_with(
        &self,
        first: usize,
        last: usize,
        left: &[f64],
        right: &[f64],
    ) -> Vec<f64> {
        let mut acc = left.to_vec();
        let mut rows = 1usize;
        for j in first..=last {
            let t = &self.sites[j];
            let (l, r) = (t.dims[0], t.dims[2]);
            acc = matmul(rows, l, 4 * r, &acc, false, &t.data, false);
            rows *= 4;
        }
        let r = self.sites[last].dims[2];
        matmul(rows, r, 1, &acc, false, right, false)
    }

    /// Canonicalize to the right end with QR, then truncate right-to-left.
    /// Returns the largest relative discarded weight over all bonds.
    pub fn compress(&mut self, max_bond: usize, rel_floor: f64) -> f64 {
        let n = self.num_qubits();
        for j in 0..n.saturating_sub(1) {
            let t = &self.sites[j];
            let (l, r) = (t.dims[0], t.dims[2]);
            let (q, rr, k) = f64::qr(l * 4, r, &t.data);
            self.sites[j] = Tensor::new(vec![l, 4, k], q);
            let next = &self.sites[j + 1];
            let cols = 4 * next.dims[2];
            let merged = matmul(k, r, cols, &rr, false, &next.data, false);
            self.sites[j + 1] = Tensor::new(vec![k, 4, next.dims[2]], merged);
        }
        let mut worst: f64 = 0.0;
        for j in (1..n).rev() {
            let t = &self.sites[j];
            let (l, r) = (t.dims[0], t.dims[2]);
            let mut svd = f64::svd(l, 4 * r, &t.data);
            let total: f64 = svd.s.iter().map(|x| x * x).sum();
            let keep = truncation_rank(&svd.s, max_bond, rel_floor, 0.0);
            if total > 0.0 {
                worst = worst.max(svd.s[keep..].iter().map(|x| x * x).sum::<f64>() / total);
            }
            svd.truncate(keep);
            self.sites[j] = Tensor::new(vec![keep, 4, r], svd.vt);
            let mut us = svd.u;
            for row in 0..l {
                for c in 0..keep {
                    us[row * keep + c] *= svd.s[c];
                }
            }
            let prev = &self.sites[j - 1];
            let pl = prev.dims[0];
            let merged = matmul(pl * 4, l, keep, &prev.data, false, &us, false);
            self.sites[j - 1] = Tensor::new(vec![pl, 4, keep], merged);
        }
        worst
    }

    /// `tr[self_W other_W]` with `W = [first, last]`, or the full overlap when
    /// the window covers the chain.
    pub fn window_overlap(&self, other: &PauliMpo, first: usize, last: usize) -> Result<f64> {
        let n = self.num_qubits();
        if other.num_qubits() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: other.num_qubits(),
            });
        }
        check_interval(n, first, last)?;
        let mut env = vec![1.0];
        let (mut ca, mut cb) = (1usize, 1usize);
        for j in 0..n {
            let (a, b) = (&self.sites[j], &other.sites[j]);
            let (ra, rb) = (a.dims[2], b.dims[2]);
            let mut next = vec![0.0; ra * rb];
            let inside = (first..=last).contains(&j);
            let plist: &[usize] = if inside { &[0, 1, 2, 3] } else { &[0] };
            let factor = if inside { 2.0 } else { 4.0 };
            for &p in plist {
                // next = A_p^T env B_p
                let ap = self.component(j, p);
                let bp = other.component(j, p);
                let t = matmul(ra, ca, cb, &ap, true, &env, false);
                let u = matmul(ra, cb, rb, &t, false, &bp, false);
                for (x, y) in next.iter_mut().zip(&u) {
                    *x += factor * y;
                }
            }
            env = next;
            ca = ra;
            cb = rb;
        }
        Ok(env[0])
    }

    pub fn overlap(&self, other: &PauliMpo) -> Result<f64> {
        self.window_overlap(other, 0, self.num_qubits() - 1)
    }

    pub fn purity(&self) -> f64 {
        self.overlap(self).expect("same length")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpo::{mpo_overlap, mpo_trace};

    #[test]
    fn maximally_mixed_roundtrip() {
        let pm = PauliMpo::maximally_mixed(4);
        assert!((pm.trace() - 1.0).abs() < 1e-15);
        assert!((pm.purity() - 1.0 / 16.0).abs() < 1e-15);
        let op = pm.to_mpo();
        assert!((mpo_trace(&op).re - 1.0).abs() < 1e-15);
        let back = PauliMpo::from_mpo(&op);
        assert_eq!(back.max_bond(), 1);
        assert!((back.overlap(&pm).unwrap() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn window_coeffs_of_zero_projector() {
        let op = MPOperator::zero_projector(3);
        let pm = PauliMpo::from_mpo(&op);
        let c = pm.window_coeffs(1, 1).unwrap();
        // |0><0| = (I + Z)/2
        assert!((c[0] - 0.5).abs() < 1e-14 && (c[3] - 0.5).abs() < 1e-14);
        assert!(c[1].abs() < 1e-14 && c[2].abs() < 1e-14);
        let full = pm.to_mpo();
        assert!((mpo_overlap(&full, &op).unwrap().re - 1.0).abs() < 1e-13);
    }
}
