//! Sequential learning of an MPO from window data.
//!
//! Each update replaces one site (or a merged pair of sites) of `sigma` by the
//! least-squares fit of the window operator `sigma_W` to the data on `W`,
//! solved in Pauli coordinates where the normal map factorizes into a left
//! and a right Gram matrix. The model stays Hermitian by construction and is
//! renormalized to unit trace after every update.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::afc_fidelity_pauli;
use crate::linalg::{eigh_real, matmul, mode_product, truncation_rank, Decompose, Tensor};
use crate::measurement::MeasurementDataset;
use crate::mpo::MPOperator;
use crate::pauli_mpo::PauliMpo;
use crate::shadows::{estimate_afc_fidelity_with, update_windows, AfcPurityTable, CrmPrior, ShadowCache};

/// Traces below this magnitude abort normalization.
pub const TRACE_FLOOR: f64 = 1e-8;

/// Relative floor for singular values kept by two-site splits.
pub const SPLIT_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    OneSite,
    TwoSite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub ell: usize,
    pub chi_max: usize,
    #[serde(default = "default_sweeps")]
    pub n_sweeps: usize,
    #[serde(default = "default_mode")]
    pub update_mode: UpdateMode,
    /// Ridge parameter relative to the largest eigenvalue of the normal map.
    #[serde(default = "default_regularization")]
    pub regularization: f64,
    /// AFC block size for monitoring, `ell + 1` when unset.
    #[serde(default)]
    pub monitor_k: Option<usize>,
    #[serde(default)]
    pub use_crm: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_sweeps() -> usize {
    20
}

fn default_mode() -> UpdateMode {
    UpdateMode::TwoSite
}

fn default_regularization() -> f64 {
    1e-10
}

impl LearnerConfig {
    pub fn new(ell: usize, chi_max: usize) -> Self {
        LearnerConfig {
            ell,
            chi_max,
            n_sweeps: default_sweeps(),
            update_mode: default_mode(),
            regularization: default_regularization(),
            monitor_k: None,
            use_crm: false,
            seed: 0,
        }
    }

    pub fn monitor_block(&self) -> usize {
        self.monitor_k.unwrap_or(self.ell + 1)
    }

    /// Size of the data windows read by each update.
    pub fn window_size(&self) -> usize {
        match self.update_mode {
            UpdateMode::OneSite => 2 * self.ell + 1,
            UpdateMode::TwoSite => 2 * self.ell + 2,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.ell < 1 {
            return bad("ell must be at least 1".into());
        }
        if self.chi_max < 1 {
            return bad("chi_max must be at least 1".into());
        }
        let cap = 4usize.saturating_pow(self.ell as u32);
        if self.chi_max > cap {
            return bad(format!(
                "chi_max = {} exceeds 4^ell = {cap}; the local problem has no unique solution",
                self.chi_max
            ));
        }
        if n < 2 {
            return bad(format!("learning needs at least 2 qubits, got {n}"));
        }
        if self.window_size().min(n) > crate::shadows::SHADOW_LIMIT {
            return bad(format!(
                "update windows of {} sites exceed the shadow limit {}",
                self.window_size(),
                crate::shadows::SHADOW_LIMIT
            ));
        }
        if !(self.regularization >= 0.0) {
            return bad(format!("regularization {} must be non-negative", self.regularization));
        }
        if self.monitor_block() == 0 {
            return bad("monitor_k must be at least 1".into());
        }
        Ok(())
    }
}

/// Diagnostics recorded after each sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub f_max_afc: Option<f64>,
    pub f_gm_afc: Option<f64>,
    pub trace: f64,
    pub hermiticity_residual: f64,
    pub max_bond: usize,
    /// Largest relative weight dropped by a two-site split during the sweep.
    pub max_discarded_weight: f64,
    /// Set when the sweep failed and was rolled back.
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct LearnReport {
    pub sigma: PauliMpo,
    pub sweep_trace: Vec<SweepRecord>,
    /// Index into `sweep_trace` of the returned model.
    pub selected_sweep: usize,
    pub config: LearnerConfig,
    pub wall_time_s: f64,
}

impl LearnReport {
    pub fn final_sigma(&self) -> MPOperator {
        self.sigma.to_mpo()
    }
}

/// Normal map of a one-site update in Pauli coordinates:
/// `C[(x,q,y), (x',q',y')] = 2^k gl[x,x'] delta_{q q'} gr[y',y]`, the
/// Hilbert-Schmidt Gram matrix of the derivatives of `sigma_W` with respect to
/// the entries of site `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalNormalMap {
    pub first: usize,
    pub last: usize,
    pub site: usize,
    pub left_dim: usize,
    pub right_dim: usize,
    pub gl: Vec<f64>,
    pub gr: Vec<f64>,
}

impl LocalNormalMap {
    pub fn dim(&self) -> usize {
        self.left_dim * 4 * self.right_dim
    }

    /// Dense row-major matrix of size `4 chi_L chi_R`.
    pub fn matrix(&self) -> Vec<f64> {
        let (l, r) = (self.left_dim, self.right_dim);
        let d = self.dim();
        let scale = (1u64 << (self.last - self.first + 1)) as f64;
        let mut c = vec![0.0; d * d];
        for x in 0..l {
            for q in 0..4 {
                for y in 0..r {
                    let row = (x * 4 + q) * r + y;
                    for xp in 0..l {
                        for yp in 0..r {
                            let col = (xp * 4 + q) * r + yp;
                            c[row * d + col] = scale * self.gl[x * l + xp] * self.gr[yp * r + y];
                        }
                    }
                }
            }
        }
        c
    }
}

/// Window environments for an update of sites `j..=j+width-1`.
struct Environment {
    /// `4^{nL} x l`: coefficients of the window part left of the update.
    a: Vec<f64>,
    /// `r x 4^{nR}`.
    b: Vec<f64>,
    rows_left: usize,
    cols_right: usize,
}

fn environment(sigma: &PauliMpo, j: usize, width: usize, first: usize, last: usize) -> Environment {
    let mut a = sigma.left_env(first);
    let mut rows = 1usize;
    for i in first..j {
        let t = sigma.site(i);
        let (l, r) = (t.dims[0], t.dims[2]);
        a = matmul(rows, l, 4 * r, &a, false, &t.data, false);
        rows *= 4;
    }
    let jr = j + width - 1;
    let mut b = sigma.right_env(last + 1);
    let mut cols = 1usize;
    for i in (jr + 1..=last).rev() {
        let t = sigma.site(i);
        let (l, r) = (t.dims[0], t.dims[2]);
        b = matmul(l * 4, r, cols, &t.data, false, &b, false);
        cols *= 4;
    }
    Environment {
        a,
        b,
        rows_left: rows,
        cols_right: cols,
    }
}

/// The data window read by an update of `width` sites starting at `j`.
pub fn window_for(n: usize, ell: usize, j: usize, width: usize) -> (usize, usize) {
    (j.saturating_sub(ell), (j + width - 1 + ell).min(n - 1))
}

/// The one-site normal map at site `j` with window half-width `ell`.
pub fn build_local_normal_map(sigma: &PauliMpo, j: usize, ell: usize) -> Result<LocalNormalMap> {
    let n = sigma.num_qubits();
    if j >= n {
        return Err(Error::IntervalOutOfRange {
            first: j,
            last: j,
            len: n,
        });
    }
    let (first, last) = window_for(n, ell, j, 1);
    let env = environment(sigma, j, 1, first, last);
    let t = sigma.site(j);
    let (l, r) = (t.dims[0], t.dims[2]);
    Ok(LocalNormalMap {
        first,
        last,
        site: j,
        left_dim: l,
        right_dim: r,
        gl: matmul(l, env.rows_left, l, &env.a, true, &env.a, false),
        gr: matmul(r, env.cols_right, r, &env.b, false, &env.b, true),
    })
}

/// Least-squares solution `theta` (shape `l x 4^width x r`) of
/// `sigma_W(theta) = data` with relative ridge `reg`.
struct LocalSolution {
    theta: Vec<f64>,
    /// Eigen-decompositions of the left and right Gram matrices.
    dl: Vec<f64>,
    u: Vec<f64>,
    dr: Vec<f64>,
    v: Vec<f64>,
}

fn solve_local(env: &Environment, l: usize, r: usize, width: usize, data: &[f64], reg: f64, site: usize) -> Result<LocalSolution> {
    let phys = 4usize.pow(width as u32);
    let (nl, nr) = (env.rows_left, env.cols_right);
    debug_assert_eq!(data.len(), nl * phys * nr);
    let gl = matmul(l, nl, l, &env.a, true, &env.a, false);
    let gr = matmul(r, nr, r, &env.b, false, &env.b, true);
    // X = A^T C B^T
    let t = matmul(l, nl, phys * nr, &env.a, true, data, false);
    let x = matmul(l * phys, nr, r, &t, false, &env.b, true);
    let (dl, u) = eigh_real(l, &gl);
    let (dr, v) = eigh_real(r, &gr);
    let top = dl.iter().cloned().fold(0.0, f64::max) * dr.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) || !top.is_finite() {
        return Err(Error::Conditioning {
            site,
            condition: f64::INFINITY,
        });
    }
    let lambda = reg * top;
    let ut = crate::linalg::adjoint(l, l, &u);
    let dims = [l, phys, r];
    // Y = U^T X V, divided elementwise, then back with U . V^T
    let y = mode_product(&x, &dims, 0, &ut, l);
    let vt = crate::linalg::adjoint(r, r, &v);
    let mut y = mode_product(&y, &dims, 2, &vt, r);
    for a in 0..l {
        for p in 0..phys {
            for b in 0..r {
                let den = dl[a].max(0.0) * dr[b].max(0.0) + lambda;
                let idx = (a * phys + p) * r + b;
                y[idx] = if den > 0.0 { y[idx] / den } else { 0.0 };
            }
        }
    }
    let y = mode_product(&y, &dims, 0, &u, l);
    let theta = mode_product(&y, &dims, 2, &v, r);
    if theta.iter().any(|x| !x.is_finite()) {
        let low = dl.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0)
            * dr.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
        return Err(Error::Conditioning {
            site,
            condition: top / (low + lambda),
        });
    }
    Ok(LocalSolution { theta, dl, u, dr, v })
}

/// `U diag(f(d)) U^T`.
fn spectral_apply(n: usize, d: &[f64], u: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut scaled = u.to_vec();
    for row in scaled.chunks_mut(n) {
        for (x, &e) in row.iter_mut().zip(d) {
            *x *= f(e);
        }
    }
    matmul(n, n, n, &scaled, false, u, true)
}

/// Solve the one-site problem at `j` and write the result into `sigma`,
/// renormalized to unit trace.
pub fn local_update_one_site(sigma: &mut PauliMpo, j: usize, data: &[f64], window: (usize, usize), cfg: &LearnerConfig) -> Result<()> {
    let n = sigma.num_qubits();
    let expect = window_for(n, cfg.ell, j, 1);
    if window != expect {
        return Err(Error::InvalidParameter(format!(
            "window {window:?} does not match the update window {expect:?} of site {j}"
        )));
    }
    let env = environment(sigma, j, 1, window.0, window.1);
    let t = sigma.site(j);
    let (l, r) = (t.dims[0], t.dims[2]);
    let theta = solve_local(&env, l, r, 1, data, cfg.regularization, j)?.theta;
    sigma.set_site(j, Tensor::new(vec![l, 4, r], theta));
    normalize_trace(sigma, j)
}

/// Solve for the merged tensor on sites `j, j+1`, split it by SVD keeping at
/// most `chi_max` values and write both sites. The singular values go to
/// `j + 1` when `move_right`, else to `j`. Returns the relative discarded
/// weight.
pub fn local_update_two_site(
    sigma: &mut PauliMpo,
    j: usize,
    data: &[f64],
    window: (usize, usize),
    cfg: &LearnerConfig,
    move_right: bool,
) -> Result<f64> {
    let n = sigma.num_qubits();
    if j + 1 >= n {
        return Err(Error::IntervalOutOfRange {
            first: j,
            last: j + 1,
            len: n,
        });
    }
    let expect = window_for(n, cfg.ell, j, 2);
    if window != expect {
        return Err(Error::InvalidParameter(format!(
            "window {window:?} does not match the update window {expect:?} of bond {j}"
        )));
    }
    let env = environment(sigma, j, 2, window.0, window.1);
    let l = sigma.site(j).dims[0];
    let r = sigma.site(j + 1).dims[2];
    let sol = solve_local(&env, l, r, 2, data, cfg.regularization, j)?;
    // Truncate in the metric of the window environments, where the
    // discarded singular values measure the change of sigma_W.
    let floor = |d: &[f64]| d.iter().cloned().fold(0.0, f64::max) * SPLIT_FLOOR;
    let (fl, fr) = (floor(&sol.dl), floor(&sol.dr));
    let wl = spectral_apply(l, &sol.dl, &sol.u, |e| if e > fl { e.sqrt() } else { 0.0 });
    let wl_inv = spectral_apply(l, &sol.dl, &sol.u, |e| if e > fl { 1.0 / e.sqrt() } else { 0.0 });
    let wr = spectral_apply(r, &sol.dr, &sol.v, |e| if e > fr { e.sqrt() } else { 0.0 });
    let wr_inv = spectral_apply(r, &sol.dr, &sol.v, |e| if e > fr { 1.0 / e.sqrt() } else { 0.0 });
    let dims = [l, 16, r];
    let weighted = mode_product(&sol.theta, &dims, 0, &wl, l);
    let weighted = mode_product(&weighted, &dims, 2, &wr, r);
    let mut svd = f64::svd(l * 4, 4 * r, &weighted);
    let total: f64 = svd.s.iter().map(|x| x * x).sum();
    let keep = truncation_rank(&svd.s, cfg.chi_max, SPLIT_FLOOR, 0.0);
    let discarded = if total > 0.0 {
        svd.s[keep..].iter().map(|x| x * x).sum::<f64>() / total
    } else {
        0.0
    };
    svd.truncate(keep);
    let (mut left, mut right) = (svd.u, svd.vt);
    if move_right {
        for (row, s) in right.chunks_mut(4 * r).zip(&svd.s) {
            row.iter_mut().for_each(|x| *x *= s);
        }
    } else {
        for row in left.chunks_mut(keep) {
            for (x, s) in row.iter_mut().zip(&svd.s) {
                *x *= s;
            }
        }
    }
    let left = mode_product(&left, &[l, 4 * keep], 0, &wl_inv, l);
    let right = mode_product(&right, &[keep * 4, r], 1, &wr_inv, r);
    sigma.set_site(j, Tensor::new(vec![l, 4, keep], left));
    sigma.set_site(j + 1, Tensor::new(vec![keep, 4, r], right));
    normalize_trace(sigma, if move_right { j + 1 } else { j })?;
    Ok(discarded)
}

fn normalize_trace(sigma: &mut PauliMpo, j: usize) -> Result<()> {
    let tr = sigma.trace();
    if !(tr.abs() >= TRACE_FLOOR) {
        return Err(Error::TraceCollapse(tr));
    }
    sigma.scale(j, 1.0 / tr);
    Ok(())
}

/// Move the gauge from site `j` to its neighbour with a QR (right) or LQ
/// (left) factorization; the operator is unchanged.
fn shift_gauge(sigma: &mut PauliMpo, j: usize, right: bool) {
    let t = sigma.site(j).clone();
    let (l, r) = (t.dims[0], t.dims[2]);
    if right {
        let (q, rr, k) = f64::qr(l * 4, r, &t.data);
        let next = sigma.site(j + 1).clone();
        let nr = next.dims[2];
        let merged = matmul(k, r, 4 * nr, &rr, false, &next.data, false);
        sigma.set_site(j, Tensor::new(vec![l, 4, k], q));
        sigma.set_site(j + 1, Tensor::new(vec![k, 4, nr], merged));
    } else {
        // t = (l x 4r); t^T = Q R  =>  t = R^T Q^T
        let tt = crate::linalg::adjoint(l, 4 * r, &t.data);
        let (q, rr, k) = f64::qr(4 * r, l, &tt);
        let qt = crate::linalg::adjoint(4 * r, k, &q);
        let rt = crate::linalg::adjoint(k, l, &rr);
        let prev = sigma.site(j - 1).clone();
        let pl = prev.dims[0];
        let merged = matmul(pl * 4, l, k, &prev.data, false, &rt, false);
        sigma.set_site(j, Tensor::new(vec![k, 4, r], qt));
        sigma.set_site(j - 1, Tensor::new(vec![pl, 4, k], merged));
    }
}

/// `(I/2)^{(x) N}` embedded in bonds `min(chi, 4^j, 4^{N-j})` with small random
/// entries so that one-site updates can use the full bond.
fn padded_start(n: usize, chi: usize, seed: u64) -> PauliMpo {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let bond = |j: usize| -> usize {
        let cap = |m: usize| 4usize.saturating_pow(m.min(16) as u32);
        chi.min(cap(j)).min(cap(n - j))
    };
    let sites: Vec<Tensor<f64>> = (0..n)
        .map(|j| {
            let (l, r) = (bond(j), bond(j + 1));
            let mut t = Tensor::zeros(vec![l, 4, r]);
            for x in t.data.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *x = 1e-2 * g;
            }
            t.data[0] = 0.5;
            t
        })
        .collect();
    let mut pm = PauliMpo::new(sites).expect("consistent bonds");
    let tr = pm.trace();
    pm.scale(0, 1.0 / tr);
    pm
}

/// Where the window data of the learner comes from.
enum Target<'a> {
    Exact(&'a PauliMpo),
    Data {
        dataset: &'a MeasurementDataset,
        table: Option<AfcPurityTable>,
    },
}

impl Target<'_> {
    fn monitor(&self, sigma: &PauliMpo, k: usize) -> Result<Option<(f64, f64)>> {
        match self {
            Target::Exact(rho) => {
                let f = afc_fidelity_pauli(rho, sigma, k)?;
                Ok(Some((f.f_max, f.f_gm)))
            }
            Target::Data { dataset, table } => match table {
                Some(t) => {
                    let e = estimate_afc_fidelity_with(dataset.testing(), sigma, t)?;
                    Ok(Some((e.f_max, e.f_gm)))
                }
                None => Ok(None),
            },
        }
    }
}

fn update_sites(n: usize, mode: UpdateMode) -> Vec<(usize, bool)> {
    let last = match mode {
        UpdateMode::OneSite => n - 1,
        UpdateMode::TwoSite => n - 2,
    };
    let mut order: Vec<(usize, bool)> = (0..=last).map(|j| (j, true)).collect();
    order.extend((0..last).rev().map(|j| (j, false)));
    order
}

fn run(n: usize, target: Target<'_>, windows: &BTreeMap<(usize, usize), Vec<f64>>, cfg: &LearnerConfig) -> Result<LearnReport> {
    let start = Instant::now();
    let mut sigma = match cfg.update_mode {
        UpdateMode::TwoSite => PauliMpo::maximally_mixed(n),
        UpdateMode::OneSite => padded_start(n, cfg.chi_max, cfg.seed),
    };
    let k = cfg.monitor_block();
    let order = update_sites(n, cfg.update_mode);
    let width = match cfg.update_mode {
        UpdateMode::OneSite => 1,
        UpdateMode::TwoSite => 2,
    };
    let mut trace = Vec::with_capacity(cfg.n_sweeps);
    let mut best: Option<(f64, usize, PauliMpo)> = None;
    for sweep in 0..cfg.n_sweeps {
        let backup = sigma.clone();
        let mut worst = 0.0f64;
        let mut failure = None;
        for &(j, right) in &order {
            let window = window_for(n, cfg.ell, j, width);
            let data = &windows[&window];
            let step = match cfg.update_mode {
                UpdateMode::OneSite => local_update_one_site(&mut sigma, j, data, window, cfg).map(|_| {
                    let at_end = if right { j + 1 == n } else { j == 0 };
                    if !at_end {
                        shift_gauge(&mut sigma, j, right);
                    }
                    0.0
                }),
                UpdateMode::TwoSite => local_update_two_site(&mut sigma, j, data, window, cfg, right),
            };
            match step {
                Ok(w) => worst = worst.max(w),
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        if let Some(msg) = &failure {
            warn!("sweep {sweep} failed and was rolled back: {msg}");
            sigma = backup;
        }
        let fid = match target.monitor(&sigma, k) {
            Ok(f) => f,
            Err(e) => {
                warn!("sweep {sweep}: fidelity estimate failed: {e}");
                None
            }
        };
        let record = SweepRecord {
            sweep,
            f_max_afc: fid.map(|f| f.0),
            f_gm_afc: fid.map(|f| f.1),
            trace: sigma.trace(),
            hermiticity_residual: sigma.to_mpo().hermiticity_residual(),
            max_bond: sigma.max_bond(),
            max_discarded_weight: worst,
            error: failure,
        };
        info!(
            "sweep {sweep}: f_max_afc = {:?}, chi = {}",
            record.f_max_afc, record.max_bond
        );
        let score = record.f_max_afc.unwrap_or(f64::NEG_INFINITY);
        let better = match &best {
            None => true,
            // without a monitor the latest sweep wins
            Some((b, _, _)) => score > *b || (score == f64::NEG_INFINITY && *b == f64::NEG_INFINITY),
        };
        if better {
            best = Some((score, sweep, sigma.clone()));
        }
        trace.push(record);
    }
    let (selected_sweep, sigma) = match best {
        Some((_, s, m)) => (s, m),
        None => (0, sigma),
    };
    debug!("selected sweep {selected_sweep}");
    Ok(LearnReport {
        sigma,
        sweep_trace: trace,
        selected_sweep,
        config: cfg.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Learn from a measurement dataset: window shadows from the learning split
/// (CRM-corrected when a prior is given), monitoring on the testing split.
pub fn learn(data: &MeasurementDataset, cfg: &LearnerConfig, prior: Option<&CrmPrior>) -> Result<LearnReport> {
    data.validate()?;
    let n = data.num_qubits;
    cfg.validate(n)?;
    if cfg.use_crm != prior.is_some() {
        return Err(Error::InvalidParameter(if cfg.use_crm {
            "use_crm is set but no prior was supplied".into()
        } else {
            "a prior was supplied but use_crm is not set".into()
        }));
    }
    if data.learning().is_empty() {
        return Err(Error::Empty("learning split"));
    }
    let windows = update_windows(n, cfg.ell, cfg.window_size())?;
    let cache = ShadowCache::build(data.learning(), &windows, prior)?;
    let map = windows
        .iter()
        .map(|&w| (w, cache.get(w.0, w.1).expect("cached").coeffs.clone()))
        .collect();
    let table = if data.testing().is_empty() || data.shots_per_basis < 2 {
        warn!("no usable testing split, the last sweep is returned");
        None
    } else {
        Some(AfcPurityTable::estimate(data.testing(), cfg.monitor_block())?)
    };
    run(n, Target::Data { dataset: data, table }, &map, cfg)
}

/// Learn from the exact window operators of `rho` (infinite data).
pub fn learn_exact(rho: &PauliMpo, cfg: &LearnerConfig) -> Result<LearnReport> {
    let n = rho.num_qubits();
    cfg.validate(n)?;
    if cfg.use_crm {
        return Err(Error::InvalidParameter("CRM has no meaning with exact window data".into()));
    }
    let windows = update_windows(n, cfg.ell, cfg.window_size())?;
    let map = windows
        .iter()
        .map(|&(f, l)| Ok(((f, l), rho.window_coeffs(f, l)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    run(n, Target::Exact(rho), &map, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh_real;
    use crate::states::random_mpdo;

    #[test]
    fn maximally_mixed_map_is_scalar() {
        let sigma = PauliMpo::maximally_mixed(5);
        let map = build_local_normal_map(&sigma, 2, 1).unwrap();
        let m = map.matrix();
        let d = map.dim();
        for i in 0..d {
            for j in 0..d {
                let e = if i == j { m[0] } else { 0.0 };
                assert!((m[i * d + j] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normal_map_is_positive() {
        for seed in 0..10 {
            let sigma = PauliMpo::from_mpo(&random_mpdo(5, 2, seed).unwrap());
            for j in 0..5 {
                let map = build_local_normal_map(&sigma, j, 1).unwrap();
                let (vals, _) = eigh_real(map.dim(), &map.matrix());
                let top = vals.last().copied().unwrap();
                assert!(vals[0] >= -1e-12 * top.max(1.0), "{vals:?}");
            }
        }
    }

    #[test]
    fn exact_fixed_point() {
        let rho = PauliMpo::from_mpo(&random_mpdo(5, 1, 3).unwrap());
        let cfg = LearnerConfig::new(1, 4);
        let windows = update_windows(5, 1, 4).unwrap();
        let mut sigma = rho.clone();
        for j in 0..4 {
            let w = windows[j];
            let data = rho.window_coeffs(w.0, w.1).unwrap();
            let before = sigma.clone();
            local_update_two_site(&mut sigma, j, &data, w, &cfg, true).unwrap();
            let f = sigma.overlap(&before).unwrap() / (sigma.purity() * before.purity()).sqrt();
            assert!((f - 1.0).abs() < 1e-10, "{f}");
        }
    }

    #[test]
    fn one_site_cap_is_enforced() {
        let mut cfg = LearnerConfig::new(1, 5);
        cfg.update_mode = UpdateMode::OneSite;
        assert!(cfg.validate(8).is_err());
        cfg.chi_max = 4;
        cfg.validate(8).unwrap();
    }

    #[test]
    fn trace_collapse_is_reported() {
        let mut sigma = PauliMpo::maximally_mixed(3);
        let cfg = LearnerConfig::new(1, 4);
        let zero = vec![0.0; 4usize.pow(3)];
        let err = local_update_two_site(&mut sigma, 0, &zero, (0, 2), &cfg, true).unwrap_err();
        assert!(matches!(err, Error::TraceCollapse(_)));
    }

    #[test]
    fn product_data_is_recovered_with_unit_bond() {
        let rho = PauliMpo::from_mpo(&random_mpdo(6, 1, 12).unwrap());
        let mut cfg = LearnerConfig::new(1, 1);
        cfg.n_sweeps = 2;
        let report = learn_exact(&rho, &cfg).unwrap();
        let f = report.sigma.overlap(&rho).unwrap() / (report.sigma.purity() * rho.purity()).sqrt();
        assert!((f - 1.0).abs() < 1e-10, "{f}");
        assert_eq!(report.sigma.max_bond(), 1);
    }
}
