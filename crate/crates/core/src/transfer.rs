//! Transfer operators of translation-invariant MPOs and the correlation
//! lengths read off their spectra.

use crate::error::{Error, Result};
use crate::linalg::{eigvals_general, Tensor, C64};
use crate::mpo::MPOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferKind {
    /// `T = sum_s M[:, s, s, :]`, powers give `tr[rho]`.
    Single,
    /// `T = sum_{s,t} M[a,s,t,b] M[a',t,s,b']`, powers give `tr[rho^2]`.
    Doubled,
    /// Same with the second layer taken from another operator: `tr[rho sigma]`.
    Mixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferSpectrum {
    /// Sorted by descending magnitude, ties broken by phase.
    pub eigenvalues: Vec<C64>,
    pub which: TransferKind,
    /// `-1 / ln|e1 / e0|`, infinite without a gap.
    pub correlation_length: f64,
}

/// The repeated site tensor of a translation-invariant operator.
///
/// For periodic chains every site must agree; for open chains the interior
/// sites must agree and that tensor is returned.
pub fn uniform_site(op: &MPOperator) -> Result<&Tensor<C64>> {
    let sites = op.sites();
    let range = if op.is_periodic() {
        0..sites.len()
    } else {
        if sites.len() < 3 {
            return Err(Error::NotTranslationInvariant(0));
        }
        1..sites.len() - 1
    };
    let reference = &sites[range.start];
    let scale = reference.norm().max(1e-300);
    for j in range {
        let t = &sites[j];
        if t.dims != reference.dims {
            return Err(Error::NotTranslationInvariant(j));
        }
        let diff: f64 = t
            .data
            .iter()
            .zip(&reference.data)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if diff > 1e-12 * scale {
            return Err(Error::NotTranslationInvariant(j));
        }
    }
    Ok(reference)
}

/// Dense transfer matrix (row-major) and its kind.
pub fn transfer_matrix(
    a: &MPOperator,
    b: Option<&MPOperator>,
    n: usize,
) -> Result<(usize, Vec<C64>, TransferKind)> {
    let ma = uniform_site(a)?;
    let chi = ma.dims[0];
    if ma.dims[3] != chi {
        return Err(Error::NotTranslationInvariant(0));
    }
    match (b, n) {
        (None, 1) => {
            let mut t = vec![C64::new(0.0, 0.0); chi * chi];
            for x in 0..chi {
                for s in 0..2 {
                    for y in 0..chi {
                        t[x * chi + y] += ma.data[((x * 2 + s) * 2 + s) * chi + y];
                    }
                }
            }
            Ok((chi, t, TransferKind::Single))
        }
        (None, 2) => Ok((chi * chi, doubled(ma, ma), TransferKind::Doubled)),
        (Some(b), _) => {
            let mb = uniform_site(b)?;
            if mb.dims[0] != mb.dims[3] {
                return Err(Error::NotTranslationInvariant(0));
            }
            Ok((chi * mb.dims[0], doubled(ma, mb), TransferKind::Mixed))
        }
        (None, other) => Err(Error::InvalidParameter(format!(
            "transfer power n = {other} not supported, use 1 or 2"
        ))),
    }
}

/// `T[(a,a'), (b,b')] = sum_{s,t} A[a,s,t,b] B[a',t,s,b']`.
fn doubled(a: &Tensor<C64>, b: &Tensor<C64>) -> Vec<C64> {
    // [a, b, a', b'] then grouped as (a a') x (b b')
    let t = a.tensordot(&[1, 2], b, &[2, 1]).permute(&[0, 2, 1, 3]);
    t.data
}

pub fn transfer_spectrum(a: &MPOperator, b: Option<&MPOperator>, n: usize) -> Result<TransferSpectrum> {
    let (dim, t, which) = transfer_matrix(a, b, n)?;
    let eigenvalues = eigvals_general(dim, &t);
    let correlation_length = correlation_length(&eigenvalues);
    Ok(TransferSpectrum {
        eigenvalues,
        which,
        correlation_length,
    })
}

fn correlation_length(eigs: &[C64]) -> f64 {
    if eigs.len() < 2 {
        return f64::INFINITY;
    }
    let (e0, e1) = (eigs[0].norm(), eigs[1].norm());
    if e0 == 0.0 || e1 >= e0 {
        return f64::INFINITY;
    }
    if e1 == 0.0 {
        return 0.0;
    }
    -1.0 / (e1 / e0).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_site_has_single_eigenvalue() {
        let t = Tensor::new(
            vec![1, 2, 2, 1],
            vec![C64::new(0.5, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.5, 0.0)],
        );
        let op = MPOperator::new(vec![t; 4], true).unwrap();
        let spec = transfer_spectrum(&op, None, 1).unwrap();
        assert_eq!(spec.eigenvalues.len(), 1);
        assert!((spec.eigenvalues[0].re - 1.0).abs() < 1e-15);
        assert!(spec.correlation_length.is_infinite());
    }

    #[test]
    fn non_uniform_sites_rejected() {
        let mut op = MPOperator::maximally_mixed(4).into_sites();
        op[2].data[0] = C64::new(0.7, 0.0);
        let op = MPOperator::new(op, false).unwrap();
        assert!(matches!(
            transfer_spectrum(&op, None, 1),
            Err(Error::NotTranslationInvariant(2))
        ));
    }
}
