//! Dense tensors, GEMM and the handful of matrix factorizations the rest of
//! the crate relies on. Everything is stored row-major.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;

pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn conj(self) -> Self;
    fn from_f64(x: f64) -> Self;
    fn abs_sq(self) -> f64;
    fn re(self) -> f64;
    fn scale(self, f: f64) -> Self;

    /// `c = a * b` with explicit strides for `a` and `b`; `c` is row-major m x n.
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        c: &mut [Self],
    );
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn conj(self) -> Self {
        self
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn abs_sq(self) -> f64 {
        self * self
    }
    fn re(self) -> f64 {
        self
    }
    fn scale(self, f: f64) -> Self {
        self * f
    }
    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        c: &mut [f64],
    ) {
        assert!(c.len() >= m * n);
        if m == 0 || n == 0 {
            return;
        }
        if k == 0 {
            c[..m * n].iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        // SAFETY: callers pass slices covering the strided extents; c is m x n row-major.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Scalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
    fn conj(self) -> Self {
        C64::conj(&self)
    }
    fn from_f64(x: f64) -> Self {
        C64::new(x, 0.0)
    }
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
    fn re(self) -> f64 {
        self.re
    }
    fn scale(self, f: f64) -> Self {
        self * f
    }
    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        a: &[C64],
        rsa: isize,
        csa: isize,
        b: &[C64],
        rsb: isize,
        csb: isize,
        c: &mut [C64],
    ) {
        assert!(c.len() >= m * n);
        if m == 0 || n == 0 {
            return;
        }
        if k == 0 {
            c[..m * n].iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            return;
        }
        use matrixmultiply::CGemmOption::Standard;
        // SAFETY: Complex<f64> is repr(C) with layout [re, im], identical to matrixmultiply's c64.
        unsafe {
            matrixmultiply::zgemm(
                Standard,
                Standard,
                m,
                k,
                n,
                [1.0, 0.0],
                a.as_ptr() as *const [f64; 2],
                rsa,
                csa,
                b.as_ptr() as *const [f64; 2],
                rsb,
                csb,
                [0.0, 0.0],
                c.as_mut_ptr() as *mut [f64; 2],
                n as isize,
                1,
            );
        }
    }
}

/// Row-major `a (m x k) * b (k x n)`, optionally transposing either operand.
pub fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    T::gemm_strided(m, k, n, a, rsa, csa, b, rsb, csb, &mut c);
    c
}

/// Dense row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(
            dims.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match dims {dims:?}"
        );
        Tensor { dims, data }
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims,
            data: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn reshape(mut self, dims: Vec<usize>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), self.data.len());
        self.dims = dims;
        self
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x.abs_sq()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale_inplace(&mut self, f: f64) {
        self.data.iter_mut().for_each(|x| *x = x.scale(f));
    }

    pub fn conj(&self) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|x| x.conj()).collect(),
        }
    }

    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.dims.len());
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return self.clone();
        }
        let in_strides = strides_of(&self.dims);
        let out_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let total = self.data.len();
        let mut out = Vec::with_capacity(total);
        if total == 0 {
            return Tensor::new(out_dims, out);
        }
        let r = out_dims.len();
        let inner = out_dims[r - 1];
        let inner_stride = src_strides[r - 1];
        let mut idx = vec![0usize; r];
        let mut base = 0usize;
        loop {
            for i in 0..inner {
                out.push(self.data[base + i * inner_stride]);
            }
            // advance the odometer over all but the last axis
            let mut ax = r - 1;
            loop {
                if ax == 0 {
                    return Tensor::new(out_dims, out);
                }
                ax -= 1;
                idx[ax] += 1;
                base += src_strides[ax];
                if idx[ax] < out_dims[ax] {
                    break;
                }
                base -= src_strides[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
    }

    /// Contract `axes_a` of `self` with `axes_b` of `other`; the result carries
    /// the free axes of `self` followed by the free axes of `other`.
    pub fn tensordot(&self, axes_a: &[usize], other: &Tensor<T>, axes_b: &[usize]) -> Tensor<T> {
        assert_eq!(axes_a.len(), axes_b.len());
        for (&x, &y) in axes_a.iter().zip(axes_b) {
            assert_eq!(
                self.dims[x], other.dims[y],
                "contracted dimensions differ: {:?}[{x}] vs {:?}[{y}]",
                self.dims, other.dims
            );
        }
        let free_a: Vec<usize> = (0..self.rank()).filter(|i| !axes_a.contains(i)).collect();
        let free_b: Vec<usize> = (0..other.rank()).filter(|i| !axes_b.contains(i)).collect();
        let mut perm_a = free_a.clone();
        perm_a.extend_from_slice(axes_a);
        let mut perm_b = axes_b.to_vec();
        perm_b.extend_from_slice(&free_b);
        let a = self.permute(&perm_a);
        let b = other.permute(&perm_b);
        let m: usize = free_a.iter().map(|&i| self.dims[i]).product();
        let k: usize = axes_a.iter().map(|&i| self.dims[i]).product();
        let n: usize = free_b.iter().map(|&i| other.dims[i]).product();
        let data = matmul(m, k, n, &a.data, false, &b.data, false);
        let mut dims: Vec<usize> = free_a.iter().map(|&i| self.dims[i]).collect();
        dims.extend(free_b.iter().map(|&i| other.dims[i]));
        Tensor::new(dims, data)
    }
}

/// Apply `mat` (new x old, row-major) along axis `mode` of a row-major tensor.
pub fn mode_product<T: Scalar>(
    data: &[T],
    dims: &[usize],
    mode: usize,
    mat: &[T],
    new_dim: usize,
) -> Vec<T> {
    let outer: usize = dims[..mode].iter().product();
    let d = dims[mode];
    let inner: usize = dims[mode + 1..].iter().product();
    assert_eq!(mat.len(), new_dim * d);
    let mut out = vec![T::zero(); outer * new_dim * inner];
    for o in 0..outer {
        let src = &data[o * d * inner..(o + 1) * d * inner];
        let dst = &mut out[o * new_dim * inner..(o + 1) * new_dim * inner];
        for nn in 0..new_dim {
            let row = &mut dst[nn * inner..(nn + 1) * inner];
            for dd in 0..d {
                let c = mat[nn * d + dd];
                if c == T::zero() {
                    continue;
                }
                let col = &src[dd * inner..(dd + 1) * inner];
                for (r, &x) in row.iter_mut().zip(col) {
                    *r += c * x;
                }
            }
        }
    }
    out
}

/// Thin SVD `a = u diag(s) vt`, singular values descending.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub rows: usize,
    pub cols: usize,
    pub u: Vec<T>,
    pub s: Vec<f64>,
    pub vt: Vec<T>,
}

impl<T: Scalar> Svd<T> {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Keep only the first `keep` singular triplets.
    pub fn truncate(&mut self, keep: usize) {
        let k = self.s.len();
        if keep >= k {
            return;
        }
        let mut u = Vec::with_capacity(self.rows * keep);
        for r in 0..self.rows {
            u.extend_from_slice(&self.u[r * k..r * k + keep]);
        }
        self.u = u;
        self.s.truncate(keep);
        self.vt.truncate(keep * self.cols);
    }
}

fn to_dmatrix<T: Scalar + nalgebra::Scalar>(rows: usize, cols: usize, a: &[T]) -> DMatrix<T> {
    DMatrix::from_row_slice(rows, cols, a)
}

fn from_dmatrix<T: Scalar + nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<T> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn svd_real(rows: usize, cols: usize, a: &[f64]) -> Svd<f64> {
    let svd = nalgebra::SVD::new(to_dmatrix(rows, cols, a), true, true);
    Svd {
        rows,
        cols,
        u: from_dmatrix(svd.u.as_ref().expect("u requested")),
        s: svd.singular_values.iter().copied().collect(),
        vt: from_dmatrix(svd.v_t.as_ref().expect("v_t requested")),
    }
}

pub fn svd_complex(rows: usize, cols: usize, a: &[C64]) -> Svd<C64> {
    let svd = nalgebra::SVD::new(to_dmatrix(rows, cols, a), true, true);
    Svd {
        rows,
        cols,
        u: from_dmatrix(svd.u.as_ref().expect("u requested")),
        s: svd.singular_values.iter().copied().collect(),
        vt: from_dmatrix(svd.v_t.as_ref().expect("v_t requested")),
    }
}

pub trait Decompose: Scalar {
    fn svd(rows: usize, cols: usize, a: &[Self]) -> Svd<Self>;
    fn qr(rows: usize, cols: usize, a: &[Self]) -> (Vec<Self>, Vec<Self>, usize);
}

impl Decompose for f64 {
    fn svd(rows: usize, cols: usize, a: &[f64]) -> Svd<f64> {
        svd_real(rows, cols, a)
    }
    fn qr(rows: usize, cols: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
        let qr = nalgebra::QR::new(to_dmatrix(rows, cols, a));
        let k = rows.min(cols);
        (from_dmatrix(&qr.q()), from_dmatrix(&qr.r()), k)
    }
}

impl Decompose for C64 {
    fn svd(rows: usize, cols: usize, a: &[C64]) -> Svd<C64> {
        svd_complex(rows, cols, a)
    }
    fn qr(rows: usize, cols: usize, a: &[C64]) -> (Vec<C64>, Vec<C64>, usize) {
        let qr = nalgebra::QR::new(to_dmatrix(rows, cols, a));
        let k = rows.min(cols);
        (from_dmatrix(&qr.q()), from_dmatrix(&qr.r()), k)
    }
}

/// Number of singular values to keep.
///
/// Values below `rel_floor * s[0]` are always dropped, at most `max_keep` are
/// kept, and the tail is trimmed while its squared weight stays within
/// `weight_cutoff` of the total.
pub fn truncation_rank(s: &[f64], max_keep: usize, rel_floor: f64, weight_cutoff: f64) -> usize {
    if s.is_empty() || s[0] <= 0.0 {
        return 1.min(s.len());
    }
    let mut keep = s.iter().take_while(|&&x| x > rel_floor * s[0]).count().max(1);
    keep = keep.min(max_keep.max(1));
    if weight_cutoff > 0.0 {
        let total: f64 = s.iter().map(|x| x * x).sum();
        let mut tail: f64 = s[keep..].iter().map(|x| x * x).sum();
        while keep > 1 {
            let w = s[keep - 1] * s[keep - 1];
            if (tail + w) / total > weight_cutoff {
                break;
            }
            tail += w;
            keep -= 1;
        }
    }
    keep
}

/// Eigen-decomposition of a real symmetric matrix: ascending eigenvalues and
/// row-major eigenvector matrix whose column `i` belongs to eigenvalue `i`.
pub fn eigh_real(n: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let eig = nalgebra::SymmetricEigen::new(to_dmatrix(n, n, a));
    sort_eigh(n, eig.eigenvalues.iter().copied().collect(), &eig.eigenvectors)
}

/// Same as [`eigh_real`] for a complex Hermitian matrix.
pub fn eigh_complex(n: usize, a: &[C64]) -> (Vec<f64>, Vec<C64>) {
    let eig = nalgebra::SymmetricEigen::new(to_dmatrix(n, n, a));
    sort_eigh(n, eig.eigenvalues.iter().copied().collect(), &eig.eigenvectors)
}

fn sort_eigh<T: Scalar + nalgebra::Scalar>(
    n: usize,
    vals: Vec<f64>,
    vecs: &DMatrix<T>,
) -> (Vec<f64>, Vec<T>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let sorted_vals = order.iter().map(|&i| vals[i]).collect();
    let mut out = vec![T::zero(); n * n];
    for r in 0..n {
        for (c, &src) in order.iter().enumerate() {
            out[r * n + c] = vecs[(r, src)];
        }
    }
    (sorted_vals, out)
}

/// Eigenvalues of a general complex matrix, sorted by descending magnitude
/// and then by phase angle.
pub fn eigvals_general(n: usize, a: &[C64]) -> Vec<C64> {
    if n == 0 {
        return Vec::new();
    }
    let m = to_dmatrix(n, n, a);
    let mut vals: Vec<C64> = match m.eigenvalues() {
        Some(v) => v.iter().copied().collect(),
        None => nalgebra::Schur::new(m).unpack().1.diagonal().iter().copied().collect(),
    };
    sort_by_magnitude(&mut vals);
    vals
}

pub fn sort_by_magnitude(vals: &mut [C64]) {
    vals.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then_with(|| x.arg().total_cmp(&y.arg()))
    });
}

/// Row-major identity matrix.
pub fn identity<T: Scalar>(n: usize) -> Vec<T> {
    let mut m = vec![T::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = T::one();
    }
    m
}

/// Conjugate transpose of a row-major `rows x cols` matrix.
pub fn adjoint<T: Scalar>(rows: usize, cols: usize, a: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j].conj();
        }
    }
    out
}

/// Kronecker product of row-major matrices.
pub fn kron<T: Scalar>(ra: usize, ca: usize, a: &[T], rb: usize, cb: usize, b: &[T]) -> Vec<T> {
    let cols = ca * cb;
    let mut out = vec![T::zero(); ra * rb * cols];
    for i in 0..ra {
        for j in 0..ca {
            let x = a[i * ca + j];
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k) * cols + j * cb + l] = x * b[k * cb + l];
                }
            }
        }
    }
    out
}

/// Matrix exponential of a real symmetric matrix scaled by `t`: exp(t a).
pub fn expm_symmetric(n: usize, a: &[f64], t: f64) -> Vec<f64> {
    let (vals, vecs) = eigh_real(n, a);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for (k, &v) in vals.iter().enumerate() {
                acc += vecs[i * n + k] * (t * v).exp() * vecs[j * n + k];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn naive<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
        let mut c = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    c[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matmul_matches_naive_with_transposes() {
        let a: Vec<f64> = (0..12).map(|x| x as f64 * 0.3 - 1.0).collect();
        let b: Vec<f64> = (0..20).map(|x| (x as f64).sin()).collect();
        let c = matmul(3, 4, 5, &a, false, &b, false);
        let expect = naive(3, 4, 5, &a, &b);
        for (x, y) in c.iter().zip(&expect) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        // a^T stored as 4x3
        let at: Vec<f64> = (0..12).map(|i| a[(i % 3) * 4 + i / 3]).collect();
        let c2 = matmul(3, 4, 5, &at, true, &b, false);
        for (x, y) in c2.iter().zip(&expect) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn complex_gemm_matches_naive() {
        let a: Vec<C64> = (0..6).map(|x| C64::new(x as f64, 1.0 - x as f64)).collect();
        let b: Vec<C64> = (0..6).map(|x| C64::new((x as f64).cos(), 0.5)).collect();
        let c = matmul(2, 3, 2, &a, false, &b, false);
        let e = naive(2, 3, 2, &a, &b);
        for (x, y) in c.iter().zip(&e) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn permute_and_tensordot() {
        let t = Tensor::new(vec![2, 3, 4], (0..24).map(|x| x as f64).collect());
        let p = t.permute(&[2, 0, 1]);
        assert_eq!(p.dims, vec![4, 2, 3]);
        // p[k, i, j] = t[i, j, k]
        assert_eq!(p.data[(3 * 2 + 1) * 3 + 2], t.data[(3 + 2) * 4 + 3]);
        let m = Tensor::new(vec![4, 2], (0..8).map(|x| x as f64 - 3.0).collect());
        let r = t.tensordot(&[2], &m, &[0]);
        assert_eq!(r.dims, vec![2, 3, 2]);
        let mut expect = 0.0;
        for k in 0..4 {
            expect += t.data[(3 + 1) * 4 + k] * m.data[k * 2 + 1];
        }
        assert_abs_diff_eq!(r.data[(3 + 1) * 2 + 1], expect, epsilon = 1e-12);
    }

    #[test]
    fn svd_reconstructs() {
        let a: Vec<C64> = (0..15)
            .map(|x| C64::new((x as f64 * 0.7).sin(), (x as f64 * 1.3).cos()))
            .collect();
        let svd = svd_complex(3, 5, &a);
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        let k = svd.rank();
        let mut us = svd.u.clone();
        for r in 0..3 {
            for c in 0..k {
                us[r * k + c] *= svd.s[c];
            }
        }
        let rec = matmul(3, k, 5, &us, false, &svd.vt, false);
        for (x, y) in rec.iter().zip(&a) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn truncation_rank_rules() {
        let s = [1.0, 0.5, 1e-3, 1e-9];
        assert_eq!(truncation_rank(&s, 10, 1e-14, 0.0), 4);
        assert_eq!(truncation_rank(&s, 2, 1e-14, 0.0), 2);
        assert_eq!(truncation_rank(&s, 10, 1e-6, 0.0), 3);
        assert_eq!(truncation_rank(&s, 10, 0.0, 1e-5), 2);
    }

    #[test]
    fn eigh_and_general_eigenvalues() {
        let a = [2.0, 1.0, 1.0, 2.0];
        let (vals, vecs) = eigh_real(2, &a);
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[0].abs(), 0.5f64.sqrt(), epsilon = 1e-12);
        let rot = [C64::new(0.0, 0.0), C64::new(-1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let ev = eigvals_general(2, &rot);
        assert_abs_diff_eq!(ev[0].norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[0].im, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn mode_product_matches_tensordot() {
        let t = Tensor::new(vec![2, 3, 2], (0..12).map(|x| x as f64).collect());
        let mat: Vec<f64> = (0..12).map(|x| (x as f64).cos()).collect(); // 4 x 3
        let out = mode_product(&t.data, &t.dims, 1, &mat, 4);
        let m = Tensor::new(vec![4, 3], mat);
        let r = m.tensordot(&[1], &t, &[1]).permute(&[1, 0, 2]);
        for (x, y) in out.iter().zip(&r.data) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }
}
