//! Matrix-product operators with complex site tensors indexed
//! `(left, phys-out, phys-in, right)`.
//!
//! All contractions close the chain with a trace over the first bond, so the
//! same code serves open chains (bond 1 at both ends) and periodic ones.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{matmul, truncation_rank, Decompose, Tensor, C64};
use crate::pauli::{Pauli, PauliString};

/// Largest chain length accepted by [`mpo_to_dense`].
pub const DENSE_MPO_LIMIT: usize = 10;
/// Largest window accepted by [`reduced_density_matrix`].
pub const RDM_LIMIT: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct MPOperator {
    sites: Vec<Tensor<C64>>,
    periodic: bool,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

impl MPOperator {
    pub fn new(sites: Vec<Tensor<C64>>, periodic: bool) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Empty("operator"));
        }
        for (j, t) in sites.iter().enumerate() {
            if t.rank() != 4 || t.dims[1] != 2 || t.dims[2] != 2 {
                return Err(Error::Structural(format!(
                    "site {j} has shape {:?}, expected (l, 2, 2, r)",
                    t.dims
                )));
            }
        }
        for j in 0..sites.len() - 1 {
            if sites[j].dims[3] != sites[j + 1].dims[0] {
                return Err(Error::Structural(format!(
                    "bond {j}-{} mismatch: {} vs {}",
                    j + 1,
                    sites[j].dims[3],
                    sites[j + 1].dims[0]
                )));
            }
        }
        let first = sites[0].dims[0];
        let last = sites[sites.len() - 1].dims[3];
        if periodic {
            if first != last {
                return Err(Error::Structural(format!(
                    "periodic closure mismatch: {last} vs {first}"
                )));
            }
        } else if first != 1 || last != 1 {
            return Err(Error::Structural(format!(
                "open boundaries need unit outer bonds, got {first} and {last}"
            )));
        }
        Ok(MPOperator { sites, periodic })
    }

    /// `(I/2)^{(x) n}`.
    pub fn maximally_mixed(n: usize) -> Self {
        Self::product(&vec![[c(0.5), c(0.0), c(0.0), c(0.5)]; n])
    }

    /// Tensor product of single-site row-major 2x2 operators.
    pub fn product(locals: &[[C64; 4]]) -> Self {
        let sites = locals
            .iter()
            .map(|m| Tensor::new(vec![1, 2, 2, 1], m.to_vec()))
            .collect();
        MPOperator::new(sites, false).expect("product operator is well formed")
    }

    /// `|0><0|^{(x) n}`.
    pub fn zero_projector(n: usize) -> Self {
        Self::product(&vec![[c(1.0), c(0.0), c(0.0), c(0.0)]; n])
    }

    /// Exact MPO of a dense `2^n x 2^n` matrix by sequential SVD, dropping
    /// singular values below `1e-14` of the largest.
    pub fn from_dense(n: usize, mat: &[C64]) -> Result<Self> {
        if n > DENSE_MPO_LIMIT {
            return Err(Error::Oversize {
                what: "dense operator",
                size: n,
                limit: DENSE_MPO_LIMIT,
            });
        }
        let d = 1usize << n;
        if mat.len() != d * d {
            return Err(Error::Structural(format!(
                "dense matrix has {} entries, expected {}",
                mat.len(),
                d * d
            )));
        }
        let perm: Vec<usize> = (0..n).flat_map(|j| [j, n + j]).collect();
        let mut rest = Tensor::new(vec![2; 2 * n], mat.to_vec()).permute(&perm).data;
        let mut sites = Vec::with_capacity(n);
        let mut left = 1;
        for _ in 0..n - 1 {
            let rows = left * 4;
            let cols = rest.len() / rows;
            let mut svd = C64::svd(rows, cols, &rest);
            let keep = truncation_rank(&svd.s, usize::MAX, 1e-14, 0.0);
            svd.truncate(keep);
            sites.push(Tensor::new(vec![left, 2, 2, keep], svd.u));
            rest = svd.vt;
            for r in 0..keep {
                for x in &mut rest[r * cols..(r + 1) * cols] {
                    *x *= svd.s[r];
                }
            }
            left = keep;
        }
        sites.push(Tensor::new(vec![left, 2, 2, 1], rest));
        MPOperator::new(sites, false)
    }

    pub fn num_qubits(&self) -> usize {
        self.sites.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn sites(&self) -> &[Tensor<C64>] {
        &self.sites
    }

    pub fn site(&self, j: usize) -> &Tensor<C64> {
        &self.sites[j]
    }

    pub fn into_sites(self) -> Vec<Tensor<C64>> {
        self.sites
    }

    /// Bond dimensions `chi_0 .. chi_N` (length N + 1).
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.sites.iter().map(|t| t.dims[0]).collect();
        b.push(self.sites[self.sites.len() - 1].dims[3]);
        b
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Conjugate transpose of the represented operator.
    pub fn dagger(&self) -> Self {
        let sites = self
            .sites
            .iter()
            .map(|t| t.permute(&[0, 2, 1, 3]).conj())
            .collect();
        MPOperator {
            sites,
            periodic: self.periodic,
        }
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.sites[0].data.iter_mut().for_each(|x| *x *= factor);
        out
    }

    /// `ca * self + cb * other` with block-diagonal bonds.
    pub fn add(&self, other: &MPOperator, ca: C64, cb: C64) -> Result<Self> {
        let n = self.num_qubits();
        if other.num_qubits() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: other.num_qubits(),
            });
        }
        if n == 1 && !self.periodic && !other.periodic {
            let data = self.sites[0]
                .data
                .iter()
                .zip(&other.sites[0].data)
                .map(|(x, y)| ca * x + cb * y)
                .collect();
            return MPOperator::new(vec![Tensor::new(vec![1, 2, 2, 1], data)], false);
        }
        // Open chains stay open by concatenating the outer bonds; otherwise the
        // direct sum is block diagonal everywhere and the trace closure sums both.
        let open = !self.periodic && !other.periodic;
        let mut sites = Vec::with_capacity(n);
        for j in 0..n {
            let a = &self.sites[j];
            let b = &other.sites[j];
            let (la, ra, lb, rb) = (a.dims[0], a.dims[3], b.dims[0], b.dims[3]);
            let first = open && j == 0;
            let last = open && j == n - 1;
            let l = if first { 1 } else { la + lb };
            let r = if last { 1 } else { ra + rb };
            let mut t = Tensor::zeros(vec![l, 2, 2, r]);
            let (fa, fb) = if j == 0 { (ca, cb) } else { (c(1.0), c(1.0)) };
            for st in 0..4 {
                for x in 0..la {
                    for y in 0..ra {
                        let (li, ri) = (if first { 0 } else { x }, if last { 0 } else { y });
                        t.data[(li * 4 + st) * r + ri] += fa * a.data[(x * 4 + st) * ra + y];
                    }
                }
                for x in 0..lb {
                    for y in 0..rb {
                        let li = if first { 0 } else { la + x };
                        let ri = if last { 0 } else { ra + y };
                        t.data[(li * 4 + st) * r + ri] += fb * b.data[(x * 4 + st) * rb + y];
                    }
                }
            }
            sites.push(t);
        }
        MPOperator::new(sites, !open)
    }

    /// Equivalent open-boundary operator; a periodic bond `chi` becomes `chi^2`
    /// by carrying the closing index along the chain.
    pub fn to_open(&self) -> Self {
        if !self.periodic {
            return self.clone();
        }
        let n = self.num_qubits();
        let chi0 = self.sites[0].dims[0];
        if n == 1 {
            let t = &self.sites[0];
            let mut data = vec![c(0.0); 4];
            for a in 0..chi0 {
                for st in 0..4 {
                    data[st] += t.data[(a * 4 + st) * chi0 + a];
                }
            }
            return MPOperator::new(vec![Tensor::new(vec![1, 2, 2, 1], data)], false)
                .expect("single site");
        }
        let mut sites = Vec::with_capacity(n);
        for (j, t) in self.sites.iter().enumerate() {
            let (l, r) = (t.dims[0], t.dims[3]);
            if j == 0 {
                // (1, s, t, (alpha, b)) with alpha the closing index = left index
                let mut out = Tensor::zeros(vec![1, 2, 2, chi0 * r]);
                for a in 0..l {
                    for st in 0..4 {
                        for b in 0..r {
                            out.data[st * chi0 * r + a * r + b] = t.data[(a * 4 + st) * r + b];
                        }
                    }
                }
                sites.push(out);
            } else if j == n - 1 {
                let mut out = Tensor::zeros(vec![chi0 * l, 2, 2, 1]);
                for alpha in 0..chi0 {
                    for a in 0..l {
                        for st in 0..4 {
                            out.data[(alpha * l + a) * 4 + st] = t.data[(a * 4 + st) * r + alpha];
                        }
                    }
                }
                sites.push(out);
            } else {
                let mut out = Tensor::zeros(vec![chi0 * l, 2, 2, chi0 * r]);
                let rr = chi0 * r;
                for alpha in 0..chi0 {
                    for a in 0..l {
                        for st in 0..4 {
                            for b in 0..r {
                                out.data[((alpha * l + a) * 4 + st) * rr + alpha * r + b] =
                                    t.data[(a * 4 + st) * r + b];
                            }
                        }
                    }
                }
                sites.push(out);
            }
        }
        MPOperator::new(sites, false).expect("opened chain is well formed")
    }

    /// `(self + self^dagger) / 2`, doubling the bond dimension.
    pub fn hermitian_part(&self) -> Self {
        self.add(&self.dagger(), c(0.5), c(0.5))
            .expect("operator and its adjoint share a length")
    }

    /// Frobenius norm `||A - A^dagger||_2`.
    pub fn hermiticity_residual(&self) -> f64 {
        let aa_dag = mpo_overlap(&self.dagger(), self).map(|z| z.re).unwrap_or(0.0);
        let aa = mpo_overlap(self, self).map(|z| z.re).unwrap_or(0.0);
        (2.0 * aa_dag - 2.0 * aa).max(0.0).sqrt()
    }

    /// `Frobenius ||A||_2`.
    pub fn frobenius_norm(&self) -> f64 {
        mpo_overlap(&self.dagger(), self)
            .map(|z| z.re.max(0.0).sqrt())
            .unwrap_or(0.0)
    }

    /// Site tensor with the physical legs traced: an `l x r` matrix.
    pub fn traced_site(&self, j: usize) -> Vec<C64> {
        contract_physical(&self.sites[j], |s, t| if s == t { c(1.0) } else { c(0.0) })
    }
}

/// `sum_{s,t} M[a,s,t,b] w(s,t)` as an `l x r` matrix.
fn contract_physical(t: &Tensor<C64>, w: impl Fn(usize, usize) -> C64) -> Vec<C64> {
    let (l, r) = (t.dims[0], t.dims[3]);
    let mut out = vec![c(0.0); l * r];
    for a in 0..l {
        for s in 0..2 {
            for tt in 0..2 {
                let f = w(s, tt);
                if f == c(0.0) {
                    continue;
                }
                let base = ((a * 2 + s) * 2 + tt) * r;
                for b in 0..r {
                    out[a * r + b] += f * t.data[base + b];
                }
            }
        }
    }
    out
}

/// Trace of a chain of matrices `prod_j m_j` whose first row dimension equals
/// the last column dimension.
fn chain_trace(chi0: usize, mats: impl Iterator<Item = (usize, usize, Vec<C64>)>) -> C64 {
    let mut env = crate::linalg::identity::<C64>(chi0);
    let mut cols = chi0;
    for (l, r, m) in mats {
        debug_assert_eq!(l, cols);
        env = matmul(chi0, l, r, &env, false, &m, false);
        cols = r;
    }
    (0..chi0).map(|i| env[i * cols + i]).sum()
}

pub fn mpo_trace(op: &MPOperator) -> C64 {
    let chi0 = op.sites[0].dims[0];
    chain_trace(
        chi0,
        (0..op.num_qubits()).map(|j| (op.sites[j].dims[0], op.sites[j].dims[3], op.traced_site(j))),
    )
}

/// How a site enters a two-layer contraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    /// Physical legs joined across the layers: contributes `tr[a b]`.
    Joined,
    /// Each layer traced on its own: contributes `tr[a] tr[b]`.
    Traced,
}

/// Two-layer contraction of `a` and `b` where each site is either joined or
/// separately traced. With every site joined this is `tr[a b]`; joining only
/// a window `W` gives `tr[a_W b_W]` of the reduced operators.
pub fn double_layer(a: &MPOperator, b: &MPOperator, layer: impl Fn(usize) -> Layer) -> Result<C64> {
    let n = a.num_qubits();
    if b.num_qubits() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: b.num_qubits(),
        });
    }
    let (ca, cb) = (a.sites[0].dims[0], b.sites[0].dims[0]);
    let alpha = ca * cb;
    // env[alpha, x, y] with alpha = (x0, y0)
    let mut env = Tensor::new(vec![alpha, ca, cb], crate::linalg::identity::<C64>(alpha));
    for j in 0..n {
        let (sa, sb) = (&a.sites[j], &b.sites[j]);
        env = match layer(j) {
            Layer::Joined => {
                // [alpha, y, s, t, x'] then join (y, s, t) with b's (y, t, s)
                let t1 = env.tensordot(&[1], sa, &[0]);
                t1.tensordot(&[1, 2, 3], sb, &[0, 2, 1])
            }
            Layer::Traced => {
                let ta = Tensor::new(vec![sa.dims[0], sa.dims[3]], a.traced_site(j));
                let tb = Tensor::new(vec![sb.dims[0], sb.dims[3]], b.traced_site(j));
                env.tensordot(&[1], &ta, &[0]).tensordot(&[1], &tb, &[0])
            }
        };
    }
    Ok((0..alpha).map(|i| env.data[i * alpha + i]).sum())
}

pub fn mpo_overlap(a: &MPOperator, b: &MPOperator) -> Result<C64> {
    double_layer(a, b, |_| Layer::Joined)
}

/// `tr[a_W b_W]` for the window `W = [first, last]`.
pub fn window_overlap(a: &MPOperator, b: &MPOperator, first: usize, last: usize) -> Result<f64> {
    check_interval(a.num_qubits(), first, last)?;
    double_layer(a, b, |j| {
        if (first..=last).contains(&j) {
            Layer::Joined
        } else {
            Layer::Traced
        }
    })
    .map(|z| z.re)
}

pub fn mpo_purity(op: &MPOperator) -> f64 {
    mpo_overlap(op, op).map(|z| z.re).expect("same length")
}

/// Second Renyi entropy in bits.
pub fn renyi2(op: &MPOperator) -> f64 {
    -mpo_purity(op).log2()
}

pub(crate) fn check_interval(n: usize, first: usize, last: usize) -> Result<()> {
    if first > last || last >= n {
        return Err(Error::IntervalOutOfRange { first, last, len: n });
    }
    Ok(())
}

/// Dense reduced operator on `[first, last]` (0-based, inclusive), row-major
/// `2^k x 2^k` with the first window site most significant.
pub fn reduced_density_matrix(op: &MPOperator, first: usize, last: usize) -> Result<Vec<C64>> {
    let n = op.num_qubits();
    check_interval(n, first, last)?;
    let k = last - first + 1;
    if k > RDM_LIMIT {
        return Err(Error::Oversize {
            what: "reduced density matrix window",
            size: k,
            limit: RDM_LIMIT,
        });
    }
    let chi0 = op.sites[0].dims[0];
    let mut env = Tensor::new(vec![chi0, chi0], crate::linalg::identity::<C64>(chi0));
    for j in 0..first {
        let t = Tensor::new(vec![op.sites[j].dims[0], op.sites[j].dims[3]], op.traced_site(j));
        env = env.tensordot(&[1], &t, &[0]);
    }
    // env[alpha, (s t)..., x]
    for j in first..=last {
        let r = env.rank();
        env = env.tensordot(&[r - 1], &op.sites[j], &[0]);
    }
    for j in last + 1..n {
        let t = Tensor::new(vec![op.sites[j].dims[0], op.sites[j].dims[3]], op.traced_site(j));
        let r = env.rank();
        env = env.tensordot(&[r - 1], &t, &[0]);
    }
    let phys = 1usize << (2 * k);
    let mut closed = vec![c(0.0); phys];
    for alpha in 0..chi0 {
        for p in 0..phys {
            closed[p] += env.data[(alpha * phys + p) * chi0 + alpha];
        }
    }
    let perm: Vec<usize> = (0..k).map(|j| 2 * j).chain((0..k).map(|j| 2 * j + 1)).collect();
    Ok(Tensor::new(vec![2; 2 * k], closed).permute(&perm).data)
}

/// Dense `2^N x 2^N` matrix of the operator.
pub fn mpo_to_dense(op: &MPOperator) -> Result<Vec<C64>> {
    let n = op.num_qubits();
    if n > DENSE_MPO_LIMIT {
        return Err(Error::Oversize {
            what: "dense operator",
            size: n,
            limit: DENSE_MPO_LIMIT,
        });
    }
    reduced_density_matrix(op, 0, n - 1)
}

/// `tr[op P]` (real part).
pub fn expectation(op: &MPOperator, pauli: &PauliString) -> Result<f64> {
    pauli.check_within(op.num_qubits())?;
    let chi0 = op.sites[0].dims[0];
    let val = chain_trace(
        chi0,
        op.sites.iter().enumerate().map(|(j, t)| {
            let p = pauli.at(j);
            let m = if p == Pauli::I {
                op.traced_site(j)
            } else {
                let pm = p.matrix();
                contract_physical(t, |s, tt| pm[tt * 2 + s])
            };
            (t.dims[0], t.dims[3], m)
        }),
    );
    Ok(val.re)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fidelities {
    pub f_max: f64,
    pub f_gm: f64,
}

/// Max fidelity `tr[ab] / max(tr a^2, tr b^2)` and geometric-mean fidelity
/// `tr[ab] / sqrt(tr a^2 tr b^2)`.
pub fn fidelities(a: &MPOperator, b: &MPOperator) -> Result<Fidelities> {
    for (name, op) in [("first", a), ("second", b)] {
        let tr = mpo_trace(op);
        if (tr - c(1.0)).norm() > 1e-8 {
            warn!("{name} operator has trace {tr}, fidelities assume unit trace");
        }
    }
    let ov = mpo_overlap(a, b)?.re;
    let pa = mpo_purity(a);
    let pb = mpo_purity(b);
    fidelities_from_parts(ov, pa, pb)
}

pub(crate) fn fidelities_from_parts(overlap: f64, pa: f64, pb: f64) -> Result<Fidelities> {
    if !(pa > 0.0 && pb > 0.0) {
        return Err(Error::ZeroPurity);
    }
    Ok(Fidelities {
        f_max: overlap / pa.max(pb),
        f_gm: overlap / (pa * pb).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn maximally_mixed_trace_and_purity() {
        let op = MPOperator::maximally_mixed(3);
        assert!(approx(mpo_trace(&op), c(1.0), 1e-15));
        let op8 = MPOperator::maximally_mixed(8);
        assert!((mpo_purity(&op8) - 2f64.powi(-8)).abs() < 1e-18);
        assert!((renyi2(&op8) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zero_projector_expectations() {
        let op = MPOperator::zero_projector(4);
        assert!(approx(mpo_trace(&op), c(1.0), 1e-15));
        assert!((expectation(&op, &PauliString::single(0, Pauli::Z)).unwrap() - 1.0).abs() < 1e-15);
        let mm = MPOperator::maximally_mixed(4);
        assert!(expectation(&mm, &PauliString::single(0, Pauli::X)).unwrap().abs() < 1e-15);
        assert!(expectation(&mm, &PauliString::single(4, Pauli::X)).is_err());
    }

    #[test]
    fn dense_of_small_identity() {
        let d = mpo_to_dense(&MPOperator::maximally_mixed(2)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 0.25 } else { 0.0 };
                assert!(approx(d[i * 4 + j], c(e), 1e-15));
            }
        }
    }

    #[test]
    fn structural_errors() {
        let bad = vec![
            Tensor::zeros(vec![1, 2, 2, 2]),
            Tensor::zeros(vec![3, 2, 2, 1]),
        ];
        assert!(matches!(MPOperator::new(bad, false), Err(Error::Structural(_))));
        let a = MPOperator::maximally_mixed(3);
        let b = MPOperator::maximally_mixed(4);
        assert!(matches!(mpo_overlap(&a, &b), Err(Error::LengthMismatch { .. })));
        assert!(matches!(
            reduced_density_matrix(&b, 2, 5),
            Err(Error::IntervalOutOfRange { .. })
        ));
    }
}
