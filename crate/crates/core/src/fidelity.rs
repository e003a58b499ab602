//! Overlaps, purities and fidelities under the approximate factorization
//! condition (AFC): global quantities rebuilt from neighbouring-window terms.

use crate::error::{Error, Result};
use crate::mpo::{fidelities_from_parts, window_overlap, Fidelities, MPOperator};
use crate::pauli_mpo::PauliMpo;

/// The `floor(n / k)` consecutive intervals used by the factorization; the
/// last interval absorbs the remaining `n mod k` sites.
pub fn afc_intervals(n: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(Error::InvalidParameter("block size k must be at least 1".into()));
    }
    if n < 2 * k {
        return Err(Error::InvalidParameter(format!(
            "block size {k} needs at least {} sites, got {n}",
            2 * k
        )));
    }
    let r = n / k;
    Ok((0..r)
        .map(|i| {
            let first = i * k;
            let last = if i == r - 1 { n - 1 } else { first + k - 1 };
            (first, last)
        })
        .collect())
}

/// One factor of the AFC product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AfcFactor {
    pub first: usize,
    pub last: usize,
    /// `true` for a pair window (numerator), `false` for a single interval
    /// (denominator).
    pub pair: bool,
    pub value: f64,
}

/// Combine window terms: the product of pair-window values over the product
/// of interior single-interval values.
pub fn combine_afc(
    intervals: &[(usize, usize)],
    mut term: impl FnMut(usize, usize) -> Result<f64>,
    quantity: &'static str,
) -> Result<(f64, Vec<AfcFactor>)> {
    let r = intervals.len();
    let mut factors = Vec::with_capacity(2 * r);
    let mut log_value = 0.0;
    for i in 0..r - 1 {
        let (first, last) = (intervals[i].0, intervals[i + 1].1);
        let v = term(first, last)?;
        if v <= 0.0 || !v.is_finite() {
            return Err(degenerate(quantity, first, last, v));
        }
        log_value += v.ln();
        factors.push(AfcFactor {
            first,
            last,
            pair: true,
            value: v,
        });
    }
    for &(first, last) in &intervals[1..r - 1] {
        let v = term(first, last)?;
        if v <= 0.0 || !v.is_finite() {
            return Err(degenerate(quantity, first, last, v));
        }
        log_value -= v.ln();
        factors.push(AfcFactor {
            first,
            last,
            pair: false,
            value: v,
        });
    }
    Ok((log_value.exp(), factors))
}

fn degenerate(quantity: &'static str, first: usize, last: usize, value: f64) -> Error {
    if quantity == "exact overlap" {
        Error::DegenerateFactorization { first, last, value }
    } else {
        Error::DegenerateEstimate {
            quantity,
            first,
            last,
            value,
        }
    }
}

/// AFC approximation of `tr[a b]` with block size `k`.
pub fn afc_overlap_exact(a: &MPOperator, b: &MPOperator, k: usize) -> Result<f64> {
    if a.num_qubits() != b.num_qubits() {
        return Err(Error::LengthMismatch {
            left: a.num_qubits(),
            right: b.num_qubits(),
        });
    }
    let intervals = afc_intervals(a.num_qubits(), k)?;
    combine_afc(&intervals, |f, l| window_overlap(a, b, f, l), "exact overlap").map(|x| x.0)
}

/// AFC approximation of `tr[a^2]`.
pub fn afc_purity(a: &MPOperator, k: usize) -> Result<f64> {
    afc_overlap_exact(a, a, k)
}

/// Max and geometric-mean fidelities assembled from AFC overlap and purities.
pub fn afc_fidelity_exact(a: &MPOperator, b: &MPOperator, k: usize) -> Result<Fidelities> {
    let ov = afc_overlap_exact(a, b, k)?;
    let pa = afc_purity(a, k)?;
    let pb = afc_purity(b, k)?;
    fidelities_from_parts(ov, pa, pb)
}

/// [`afc_fidelity_exact`] for operators in Pauli form.
pub fn afc_fidelity_pauli(a: &PauliMpo, b: &PauliMpo, k: usize) -> Result<Fidelities> {
    let intervals = afc_intervals(a.num_qubits(), k)?;
    let (ov, _) = combine_afc(&intervals, |f, l| a.window_overlap(b, f, l), "exact overlap")?;
    let (pa, _) = combine_afc(&intervals, |f, l| a.window_overlap(a, f, l), "exact overlap")?;
    let (pb, _) = combine_afc(&intervals, |f, l| b.window_overlap(b, f, l), "exact overlap")?;
    fidelities_from_parts(ov, pa, pb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intervals_absorb_remainder() {
        assert_eq!(afc_intervals(7, 2).unwrap(), vec![(0, 1), (2, 3), (4, 6)]);
        assert_eq!(afc_intervals(6, 3).unwrap(), vec![(0, 2), (3, 5)]);
        assert!(afc_intervals(5, 3).is_err());
        assert!(afc_intervals(5, 0).is_err());
    }

    #[test]
    fn identity_pair_is_exact() {
        let a = MPOperator::maximally_mixed(6);
        let v = afc_overlap_exact(&a, &a, 2).unwrap();
        assert!((v - 2f64.powi(-6)).abs() < 1e-16);
        let f = afc_fidelity_exact(&a, &a, 1).unwrap();
        assert!((f.f_max - 1.0).abs() < 1e-12 && (f.f_gm - 1.0).abs() < 1e-12);
    }
}
