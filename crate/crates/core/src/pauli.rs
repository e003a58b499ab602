//! Single-qubit Pauli matrices, Pauli strings and conversions between dense
//! operators and Pauli-coefficient tensors.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{mode_product, Tensor, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(p: usize) -> Pauli {
        Pauli::ALL[p]
    }

    pub fn from_char(c: char) -> Result<Pauli> {
        match c.to_ascii_uppercase() {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(Error::InvalidPauli(format!("unknown letter {other:?}"))),
        }
    }

    /// Row-major 2x2 matrix.
    pub fn matrix(self) -> [C64; 4] {
        pauli_matrix(self.index())
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

pub fn pauli_matrix(p: usize) -> [C64; 4] {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match p {
        0 => [o, z, z, o],
        1 => [z, o, o, z],
        2 => [z, -i, i, z],
        3 => [o, z, z, -o],
        _ => panic!("Pauli index {p} out of range"),
    }
}

/// A tensor product of Pauli operators on a set of qubits (0-based sites).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    ops: Vec<(usize, Pauli)>,
}

impl PauliString {
    /// Build from `(site, letter)` pairs. Identities are dropped; repeated
    /// sites are rejected.
    pub fn new(mut ops: Vec<(usize, Pauli)>) -> Result<Self> {
        ops.retain(|&(_, p)| p != Pauli::I);
        ops.sort_by_key(|&(s, _)| s);
        if ops.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidPauli("repeated site".into()));
        }
        Ok(PauliString { ops })
    }

    pub fn single(site: usize, p: Pauli) -> Self {
        PauliString::new(vec![(site, p)]).expect("single site is valid")
    }

    pub fn pair(i: usize, pi: Pauli, j: usize, pj: Pauli) -> Result<Self> {
        PauliString::new(vec![(i, pi), (j, pj)])
    }

    /// Parse a dense string such as `"IXZY"`, one letter per site from site 0.
    pub fn from_dense(s: &str) -> Result<Self> {
        let ops = s
            .chars()
            .enumerate()
            .map(|(i, c)| Pauli::from_char(c).map(|p| (i, p)))
            .collect::<Result<Vec<_>>>()?;
        PauliString::new(ops)
    }

    pub fn ops(&self) -> &[(usize, Pauli)] {
        &self.ops
    }

    pub fn weight(&self) -> usize {
        self.ops.len()
    }

    pub fn support(&self) -> Option<(usize, usize)> {
        Some((self.ops.first()?.0, self.ops.last()?.0))
    }

    pub fn at(&self, site: usize) -> Pauli {
        self.ops
            .iter()
            .find(|&&(s, _)| s == site)
            .map(|&(_, p)| p)
            .unwrap_or(Pauli::I)
    }

    pub fn check_within(&self, n: usize) -> Result<()> {
        match self.support() {
            Some((_, last)) if last >= n => Err(Error::InvalidPauli(format!(
                "site {last} outside a {n}-qubit register"
            ))),
            _ => Ok(()),
        }
    }
}

/// Accepts either a dense string (`"XIZ"`) or whitespace-separated sparse
/// terms with 0-based sites (`"X0 Z2"`).
impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return PauliString::new(Vec::new());
        }
        let sparse = s.chars().any(|c| c.is_ascii_digit());
        if !sparse {
            return PauliString::from_dense(s);
        }
        let mut ops = Vec::new();
        for term in s.split(|c: char| c.is_whitespace() || c == '*' || c == ',') {
            if term.is_empty() {
                continue;
            }
            let mut chars = term.chars();
            let letter = chars
                .next()
                .ok_or_else(|| Error::InvalidPauli(term.to_string()))?;
            let p = Pauli::from_char(letter)?;
            let site: usize = chars
                .as_str()
                .parse()
                .map_err(|_| Error::InvalidPauli(format!("bad site in term {term:?}")))?;
            ops.push((site, p));
        }
        PauliString::new(ops)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ops.is_empty() {
            return write!(f, "I");
        }
        let terms: Vec<String> = self.ops.iter().map(|(s, p)| format!("{p}{s}")).collect();
        write!(f, "{}", terms.join(" "))
    }
}

/// Pauli coefficients `c[p_1..p_k]` with `rho = sum_p c[p] P_p`, read from a
/// dense `2^k x 2^k` row-major matrix. Only the real part is kept, so the
/// result describes the Hermitian part of `rho`.
pub fn dense_to_pauli(k: usize, rho: &[C64]) -> Vec<f64> {
    let d = 1usize << k;
    assert_eq!(rho.len(), d * d);
    // (s_1..s_k, t_1..t_k) -> (s_1, t_1, s_2, t_2, ...)
    let mut dims = vec![2; 2 * k];
    let t = Tensor::new(dims.clone(), rho.to_vec());
    let perm: Vec<usize> = (0..k).flat_map(|j| [j, k + j]).collect();
    let mut data = t.permute(&perm).data;
    dims = vec![4; k];
    // c_p = tr[P_p rho] / 2 per site = sum_{s,t} P[t,s] rho[s,t] / 2
    let mut mat = vec![C64::new(0.0, 0.0); 16];
    for p in 0..4 {
        let m = pauli_matrix(p);
        for s in 0..2 {
            for tt in 0..2 {
                mat[p * 4 + s * 2 + tt] = m[tt * 2 + s] * 0.5;
            }
        }
    }
    for j in 0..k {
        data = mode_product(&data, &dims, j, &mat, 4);
    }
    data.iter().map(|x| x.re).collect()
}

/// Inverse of [`dense_to_pauli`].
pub fn pauli_to_dense(k: usize, coeffs: &[f64]) -> Vec<C64> {
    assert_eq!(coeffs.len(), 1usize << (2 * k));
    let dims = vec![4; k];
    let mut mat = vec![C64::new(0.0, 0.0); 16];
    for p in 0..4 {
        let m = pauli_matrix(p);
        for st in 0..4 {
            mat[st * 4 + p] = m[st];
        }
    }
    let mut data: Vec<C64> = coeffs.iter().map(|&x| C64::new(x, 0.0)).collect();
    for j in 0..k {
        data = mode_product(&data, &dims, j, &mat, 4);
    }
    // (s_1, t_1, s_2, t_2, ...) -> (s_1..s_k, t_1..t_k)
    let t = Tensor::new(vec![2; 2 * k], data);
    let perm: Vec<usize> = (0..k).map(|j| 2 * j).chain((0..k).map(|j| 2 * j + 1)).collect();
    t.permute(&perm).data
}

/// Real 2x4 matrix `q[s][p] = <s| u P_p u^dagger |s>`: the outcome
/// probabilities of each Pauli component after rotating by `u`.
pub fn rotated_pauli_weights(u: &[C64; 4]) -> [[f64; 4]; 2] {
    let mut q = [[0.0; 4]; 2];
    for (p, col) in (0..4).map(|p| (p, pauli_matrix(p))) {
        for (s, row) in q.iter_mut().enumerate() {
            // <s| u P u^dagger |s> = sum_{a,b} u[s,a] P[a,b] conj(u[s,b])
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    acc += u[s * 2 + a] * col[a * 2 + b] * u[s * 2 + b].conj();
                }
            }
            row[p] = acc.re;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_dense_and_sparse() {
        let a: PauliString = "IXZ".parse().unwrap();
        let b: PauliString = "X1 Z2".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.at(0), Pauli::I);
        assert_eq!(a.at(2), Pauli::Z);
        assert!("IQ".parse::<PauliString>().is_err());
        assert!("X1 Z1".parse::<PauliString>().is_err());
        assert!(a.check_within(2).is_err());
    }

    #[test]
    fn pauli_roundtrip_two_qubits() {
        let mut rho = vec![C64::new(0.0, 0.0); 16];
        for i in 0..4 {
            for j in 0..4 {
                let x = ((i * 7 + j * 3) as f64).sin();
                let y = if i == j { 0.0 } else { ((i + 2 * j) as f64).cos() };
                rho[i * 4 + j] += C64::new(x, y);
                rho[j * 4 + i] += C64::new(x, -y);
            }
        }
        let c = dense_to_pauli(2, &rho);
        let back = pauli_to_dense(2, &c);
        for (x, y) in back.iter().zip(&rho) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn pauli_coefficient_of_zz() {
        // Z (x) Z has a single coefficient at (Z, Z)
        let mut rho = vec![C64::new(0.0, 0.0); 16];
        for (i, sgn) in [1.0, -1.0, -1.0, 1.0].iter().enumerate() {
            rho[i * 4 + i] = C64::new(*sgn, 0.0);
        }
        let c = dense_to_pauli(2, &rho);
        for (idx, &x) in c.iter().enumerate() {
            let expect = if idx == 3 * 4 + 3 { 1.0 } else { 0.0 };
            assert!((x - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn rotated_weights_identity_basis() {
        let o = C64::new(1.0, 0.0);
        let z = C64::new(0.0, 0.0);
        let q = rotated_pauli_weights(&[o, z, z, o]);
        assert_eq!(q[0], [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(q[1], [1.0, 0.0, 0.0, -1.0]);
    }
}
