//! Local randomized measurements: Haar-random single-qubit bases and exact
//! sampling of computational-basis outcomes from tensor-train states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{matmul, C64};
use crate::mpo::MPOperator;
use crate::mps::MPState;
use crate::pauli::rotated_pauli_weights;
use crate::pauli_mpo::PauliMpo;

/// Largest register supported by the bit-packed outcome format.
pub const MAX_QUBITS: usize = 64;

/// Tolerance separating round-off from a genuinely negative probability.
pub const NEGATIVE_TOLERANCE: f64 = 1e-10;

/// One random basis: a unitary per qubit and the measured bitstrings.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisRecord {
    pub r: usize,
    pub unitaries: Vec<[C64; 4]>,
    /// Bit `j` of each word is the outcome of qubit `j`.
    pub outcomes: Vec<u64>,
}

impl BasisRecord {
    /// The same record restricted to qubits `0..n`.
    pub fn prefix(&self, n: usize) -> BasisRecord {
        let n = n.min(self.unitaries.len());
        let mask = if n >= 64 { u64::MAX } else { (1u64 << n) - 1 };
        BasisRecord {
            r: self.r,
            unitaries: self.unitaries[..n].to_vec(),
            outcomes: self.outcomes.iter().map(|s| s & mask).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementDataset {
    pub num_qubits: usize,
    pub shots_per_basis: usize,
    pub seed: u64,
    /// The first `learning_bases` records form the learning split, the rest
    /// the testing split.
    pub learning_bases: usize,
    pub records: Vec<BasisRecord>,
}

impl MeasurementDataset {
    pub fn num_bases(&self) -> usize {
        self.records.len()
    }

    pub fn learning(&self) -> &[BasisRecord] {
        &self.records[..self.learning_bases]
    }

    pub fn testing(&self) -> &[BasisRecord] {
        &self.records[self.learning_bases..]
    }

    /// Dataset keeping the first `n_learning` learning bases and the first
    /// `n_testing` testing bases.
    pub fn restrict(&self, n_learning: usize, n_testing: usize) -> Result<Self> {
        let nt = self.records.len() - self.learning_bases;
        if n_learning > self.learning_bases || n_testing > nt {
            return Err(Error::InvalidParameter(format!(
                "cannot take {n_learning}/{n_testing} bases from a {}/{nt} split",
                self.learning_bases
            )));
        }
        let mut records: Vec<BasisRecord> = self.learning()[..n_learning].to_vec();
        records.extend_from_slice(&self.testing()[..n_testing]);
        Ok(MeasurementDataset {
            num_qubits: self.num_qubits,
            shots_per_basis: self.shots_per_basis,
            seed: self.seed,
            learning_bases: n_learning,
            records,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_qubits == 0 || self.num_qubits > MAX_QUBITS {
            return Err(Error::InvalidParameter(format!(
                "num_qubits = {} outside [1, {MAX_QUBITS}]",
                self.num_qubits
            )));
        }
        if self.learning_bases > self.records.len() {
            return Err(Error::InvalidParameter(format!(
                "learning split {} exceeds {} bases",
                self.learning_bases,
                self.records.len()
            )));
        }
        for rec in &self.records {
            if rec.unitaries.len() != self.num_qubits {
                return Err(Error::Structural(format!(
                    "basis {} has {} unitaries for {} qubits",
                    rec.r,
                    rec.unitaries.len(),
                    self.num_qubits
                )));
            }
            if rec.outcomes.len() != self.shots_per_basis {
                return Err(Error::Structural(format!(
                    "basis {} has {} shots, expected {}",
                    rec.r,
                    rec.outcomes.len(),
                    self.shots_per_basis
                )));
            }
        }
        Ok(())
    }
}

/// Haar-random 2x2 unitary: Gram-Schmidt on a complex Gaussian matrix, which
/// fixes the diagonal of `R` to be real and positive.
pub fn sample_cue_unitary<R: Rng + ?Sized>(rng: &mut R) -> [C64; 4] {
    let mut g = || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    };
    let (a, b, c, d) = (g(), g(), g(), g());
    // columns (a, c) and (b, d)
    let n1 = (a.norm_sqr() + c.norm_sqr()).sqrt();
    let (q00, q10) = (a / n1, c / n1);
    let r12 = q00.conj() * b + q10.conj() * d;
    let (v0, v1) = (b - r12 * q00, d - r12 * q10);
    let n2 = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
    [q00, v0 / n2, q10, v1 / n2]
}

/// Exact sampler over a fixed state.
#[derive(Clone, Debug)]
pub struct Sampler {
    state: PauliMpo,
    right_envs: Vec<Vec<f64>>,
}

impl Sampler {
    pub fn new(state: PauliMpo) -> Result<Self> {
        if state.num_qubits() > MAX_QUBITS {
            return Err(Error::Oversize {
                what: "register",
                size: state.num_qubits(),
                limit: MAX_QUBITS,
            });
        }
        let right_envs = state.right_trace_envs();
        let tr = right_envs[0][0];
        if !(tr > 0.0) {
            return Err(Error::InvalidParameter(format!("state trace {tr} is not positive")));
        }
        Ok(Sampler { state, right_envs })
    }

    pub fn from_mpo(op: &MPOperator) -> Result<Self> {
        Sampler::new(PauliMpo::from_mpo(op))
    }

    pub fn from_mps(psi: &MPState) -> Result<Self> {
        Sampler::new(PauliMpo::from_mpo(&psi.to_mpo()))
    }

    pub fn state(&self) -> &PauliMpo {
        &self.state
    }

    pub fn num_qubits(&self) -> usize {
        self.state.num_qubits()
    }

    /// Draw `n_shots` bitstrings after rotating qubit `j` by `unitaries[j]`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        unitaries: &[[C64; 4]],
        n_shots: usize,
        rng: &mut R,
    ) -> Result<Vec<u64>> {
        let n = self.num_qubits();
        if unitaries.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: unitaries.len(),
            });
        }
        let mut outcomes = vec![0u64; n_shots];
        // Row m of `left` is the conditioned left environment of shot m,
        // scaled so that left . R_j = 1.
        let mut left = vec![1.0; n_shots];
        let mut width = 1usize;
        let mut uniforms = vec![0.0; n_shots];
        for j in 0..n {
            let t = self.state.site(j);
            let (l, r) = (t.dims[0], t.dims[2]);
            debug_assert_eq!(l, width);
            let q = rotated_pauli_weights(&unitaries[j]);
            let mut d = [vec![0.0; l * r], vec![0.0; l * r]];
            for (s, ds) in d.iter_mut().enumerate() {
                for p in 0..4 {
                    let w = q[s][p];
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..l {
                        let src = &t.data[(a * 4 + p) * r..(a * 4 + p + 1) * r];
                        for (x, y) in ds[a * r..(a + 1) * r].iter_mut().zip(src) {
                            *x += w * y;
                        }
                    }
                }
            }
            let renv = &self.right_envs[j + 1];
            let w0 = matmul(l, r, 1, &d[0], false, renv, false);
            let w1 = matmul(l, r, 1, &d[1], false, renv, false);
            let p0 = matmul(n_shots, l, 1, &left, false, &w0, false);
            let p1 = matmul(n_shots, l, 1, &left, false, &w1, false);
            for u in uniforms.iter_mut() {
                *u = rng.random::<f64>();
            }
            let mut rows: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            let mut probs = vec![0.0; n_shots];
            for m in 0..n_shots {
                let total = p0[m] + p1[m];
                if !(total > 0.0) {
                    return Err(Error::NegativeProbability { site: j, value: total });
                }
                let q0 = p0[m] / total;
                if q0 < -NEGATIVE_TOLERANCE || q0 > 1.0 + NEGATIVE_TOLERANCE {
                    let value = if q0 < 0.0 { q0 } else { 1.0 - q0 };
                    return Err(Error::NegativeProbability { site: j, value });
                }
                let q0 = q0.clamp(0.0, 1.0);
                let s = usize::from(uniforms[m] >= q0);
                if s == 1 {
                    outcomes[m] |= 1u64 << j;
                }
                probs[m] = if s == 0 { p0[m] } else { p1[m] };
                rows[s].push(m);
            }
            let mut next = vec![0.0; n_shots * r];
            for s in 0..2 {
                let idx = &rows[s];
                if idx.is_empty() {
                    continue;
                }
                let mut gathered = Vec::with_capacity(idx.len() * l);
                for &m in idx {
                    gathered.extend_from_slice(&left[m * l..(m + 1) * l]);
                }
                let prod = matmul(idx.len(), l, r, &gathered, false, &d[s], false);
                for (k, &m) in idx.iter().enumerate() {
                    let scale = 1.0 / probs[m];
                    for (x, y) in next[m * r..(m + 1) * r].iter_mut().zip(&prod[k * r..(k + 1) * r]) {
                        *x = y * scale;
                    }
                }
            }
            left = next;
            width = r;
        }
        Ok(outcomes)
    }
}

/// Per-basis random stream derived from `(seed, r)`.
pub fn basis_rng(seed: u64, r: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Sample-once helper used by tests and the CLI.
pub fn sample_bitstrings<R: Rng + ?Sized>(
    sampler: &Sampler,
    unitaries: &[[C64; 4]],
    n_shots: usize,
    rng: &mut R,
) -> Result<Vec<u64>> {
    sampler.sample(unitaries, n_shots, rng)
}

/// `n_bases` independent random bases with `shots` outcomes each; the first
/// `learning_bases` form the learning split. Deterministic in `seed` and
/// independent of the thread schedule.
pub fn generate_dataset(
    sampler: &Sampler,
    n_bases: usize,
    shots: usize,
    learning_bases: usize,
    seed: u64,
) -> Result<MeasurementDataset> {
    if learning_bases > n_bases {
        return Err(Error::InvalidParameter(format!(
            "learning split {learning_bases} exceeds {n_bases} bases"
        )));
    }
    if shots == 0 {
        return Err(Error::InvalidParameter("shots per basis must be positive".into()));
    }
    let n = sampler.num_qubits();
    let records = (0..n_bases)
        .into_par_iter()
        .map(|r| {
            let mut rng = basis_rng(seed, r);
            let unitaries: Vec<[C64; 4]> = (0..n).map(|_| sample_cue_unitary(&mut rng)).collect();
            let outcomes = sampler.sample(&unitaries, shots, &mut rng)?;
            Ok(BasisRecord {
                r,
                unitaries,
                outcomes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementDataset {
        num_qubits: n,
        shots_per_basis: shots,
        seed,
        learning_bases,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_basis(n: usize) -> Vec<[C64; 4]> {
        let o = C64::new(1.0, 0.0);
        let z = C64::new(0.0, 0.0);
        vec![[o, z, z, o]; n]
    }

    #[test]
    fn cue_is_unitary_and_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let u = sample_cue_unitary(&mut rng);
        let mut rng2 = ChaCha20Rng::seed_from_u64(3);
        assert_eq!(u, sample_cue_unitary(&mut rng2));
        for i in 0..2 {
            for j in 0..2 {
                let dot: C64 = (0..2).map(|k| u[k * 2 + i].conj() * u[k * 2 + j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((dot - C64::new(e, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_state_gives_zero_strings() {
        let sampler = Sampler::from_mps(&MPState::zero_state(5)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let shots = sampler.sample(&identity_basis(5), 100, &mut rng).unwrap();
        assert!(shots.iter().all(|&s| s == 0));
    }

    #[test]
    fn maximally_mixed_marginals() {
        let sampler = Sampler::new(PauliMpo::maximally_mixed(3)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let shots = sampler.sample(&identity_basis(3), 10_000, &mut rng).unwrap();
        for j in 0..3 {
            let ones = shots.iter().filter(|&&s| (s >> j) & 1 == 1).count() as f64;
            let frac = ones / 10_000.0;
            assert!((frac - 0.5).abs() < 3.0 * 0.005, "site {j}: {frac}");
        }
    }

    #[test]
    fn minimal_dataset() {
        let sampler = Sampler::new(PauliMpo::maximally_mixed(2)).unwrap();
        let ds = generate_dataset(&sampler, 1, 1, 1, 9).unwrap();
        assert_eq!(ds.records.len(), 1);
        assert_eq!(ds.records[0].outcomes.len(), 1);
        ds.validate().unwrap();
        assert!(generate_dataset(&sampler, 1, 1, 2, 9).is_err());
    }

    #[test]
    fn negative_state_is_rejected() {
        // -Z/2 + I/2 on one qubit with the identity weight flipped: not positive
        let t = crate::linalg::Tensor::new(vec![1, 4, 1], vec![0.5, 0.0, 0.0, 1.5]);
        let sampler = Sampler::new(PauliMpo::new(vec![t]).unwrap()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        assert!(matches!(
            sampler.sample(&identity_basis(1), 10, &mut rng),
            Err(Error::NegativeProbability { .. })
        ));
    }

    #[test]
    fn prefix_masks_outcomes() {
        let rec = BasisRecord {
            r: 3,
            unitaries: vec![[C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)]; 4],
            outcomes: vec![0b1011, 0b0100],
        };
        let p = rec.prefix(2);
        assert_eq!(p.unitaries.len(), 2);
        assert_eq!(p.outcomes, vec![0b11, 0b00]);
        assert_eq!(p.r, 3);
    }
}
