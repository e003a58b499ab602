use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use shadow_mpo::learner::{self, LearnerConfig, SweepRecord, UpdateMode};
use shadow_mpo::measurement::{generate_dataset, BasisRecord, MeasurementDataset, Sampler};
use shadow_mpo::mpo::{expectation, mpo_trace};
use shadow_mpo::mps::von_neumann_entropy;
use shadow_mpo::qpca::{self, QpcaConfig};
use shadow_mpo::serialize::{self, StateFile};
use shadow_mpo::shadows;
use shadow_mpo::states::StateSpec;
use shadow_mpo::{MPOperator, MPState, Pauli, PauliMpo, PauliString};

use crate::manifest::{manifest_path, write_json, Recorder};
use crate::{EstimateArgs, LearnArgs, Mode, QpcaArgs, SampleArgs, SimulateArgs, Split, What};

fn read_state(path: &Path) -> Result<StateFile> {
    serialize::read_state(path).with_context(|| format!("reading state {}", path.display()))
}

fn read_mps(path: &Path) -> Result<MPState> {
    match read_state(path)? {
        StateFile::Mps(psi) => Ok(psi),
        StateFile::Mpo(_) => bail!("{} holds an MPO, expected a pure-state MPS", path.display()),
    }
}

fn read_dataset(path: &Path) -> Result<MeasurementDataset> {
    serialize::read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_state(path: &Path, state: &StateFile) -> Result<()> {
    match state {
        StateFile::Mpo(op) => serialize::write_mpo(path, op),
        StateFile::Mps(psi) => serialize::write_mps(path, psi),
    }
    .with_context(|| format!("writing {}", path.display()))
}

fn state_summary(state: &StateFile) -> Value {
    let (kind, bonds) = match state {
        StateFile::Mpo(op) => ("mpo", op.bond_dims()),
        StateFile::Mps(psi) => ("mps", psi.bond_dims()),
    };
    json!({
        "kind": kind,
        "num_qubits": state.num_qubits(),
        "bond_dims": bonds,
        "max_bond": bonds.iter().copied().max().unwrap_or(1),
    })
}

pub fn simulate_state(args: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("reading spec {}", args.spec.display()))?;
    let spec: StateSpec =
        serde_json::from_str(&text).with_context(|| format!("invalid spec {}", args.spec.display()))?;
    let mut rec = Recorder::new("simulate-state", None, serde_json::to_value(&spec)?);
    rec.input(&args.spec);
    let state = spec.build().context("building state")?;
    write_state(&args.output, &state)?;
    rec.output(&args.output);
    rec.finish(&manifest_path(args.manifest.as_deref(), &args.output), state_summary(&state))
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    let split = args.split.unwrap_or(args.bases);
    if split > args.bases {
        bail!("--split {split} exceeds --bases {}", args.bases);
    }
    if args.shots == 0 || args.bases == 0 {
        bail!("--bases and --shots must be positive");
    }
    let state = read_state(&args.state)?;
    let config = json!({ "bases": args.bases, "shots": args.shots, "learning_bases": split });
    let mut rec = Recorder::new("sample", Some(args.seed), config);
    rec.input(&args.state);
    let sampler = match &state {
        StateFile::Mpo(op) => Sampler::from_mpo(op),
        StateFile::Mps(psi) => Sampler::from_mps(psi),
    }
    .context("preparing sampler")?;
    let ds = generate_dataset(&sampler, args.bases, args.shots, split, args.seed).context("sampling")?;
    serialize::write_dataset(&args.output, &ds).with_context(|| format!("writing {}", args.output.display()))?;
    rec.output(&args.output);
    let summary = json!({
        "num_qubits": ds.num_qubits,
        "bases": ds.num_bases(),
        "shots_per_basis": ds.shots_per_basis,
        "learning_bases": ds.learning_bases,
    });
    rec.finish(&manifest_path(args.manifest.as_deref(), &args.output), summary)
}

#[derive(Serialize)]
struct LearnOutput<'a> {
    config: &'a LearnerConfig,
    source: &'static str,
    selected_sweep: usize,
    final_trace: f64,
    final_bond_dims: Vec<usize>,
    sweep_trace: &'a [SweepRecord],
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

fn sweep_csv(trace: &[SweepRecord]) -> String {
    let mut s = String::from("sweep,f_max_afc,f_gm_afc,trace,hermiticity_residual,max_bond,max_discarded_weight,error\n");
    for r in trace {
        let _ = writeln!(
            s,
            "{},{},{},{:.12e},{:.6e},{},{:.6e},{}",
            r.sweep,
            opt(r.f_max_afc),
            opt(r.f_gm_afc),
            r.trace,
            r.hermiticity_residual,
            r.max_bond,
            r.max_discarded_weight,
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    s
}

pub fn learn(args: &LearnArgs) -> Result<()> {
    let cfg = LearnerConfig {
        ell: args.ell,
        chi_max: args.chi,
        n_sweeps: args.sweeps,
        update_mode: match args.mode {
            Mode::OneSite => UpdateMode::OneSite,
            Mode::TwoSite => UpdateMode::TwoSite,
        },
        regularization: args.regularization,
        monitor_k: args.monitor_k,
        use_crm: args.crm_prior.is_some(),
        seed: args.seed,
    };
    let mut rec = Recorder::new("learn", Some(args.seed), serde_json::to_value(&cfg)?);
    let (report, source) = if let Some(path) = &args.exact {
        let state = read_state(path)?;
        cfg.validate(state.num_qubits()).context("invalid learner configuration")?;
        rec.input(path);
        let rho = PauliMpo::from_mpo(&state.to_mpo());
        (learner::learn_exact(&rho, &cfg).context("learning")?, "exact")
    } else {
        let path = args.data.as_ref().expect("clap requires --data or --exact");
        let data = read_dataset(path)?;
        cfg.validate(data.num_qubits).context("invalid learner configuration")?;
        rec.input(path);
        let prior = match &args.crm_prior {
            Some(p) => {
                let psi = read_mps(p)?;
                rec.input(p);
                Some(
                    shadows::fit_depolarization_prior(data.learning(), &psi, cfg.window_size(), cfg.ell)
                        .context("fitting the depolarizing prior")?,
                )
            }
            None => None,
        };
        (learner::learn(&data, &cfg, prior.as_ref()).context("learning")?, "data")
    };
    let sigma = report.final_sigma();
    serialize::write_mpo(&args.output, &sigma).with_context(|| format!("writing {}", args.output.display()))?;
    rec.output(&args.output);
    let out = LearnOutput {
        config: &cfg,
        source,
        selected_sweep: report.selected_sweep,
        final_trace: report.sigma.trace(),
        final_bond_dims: sigma.bond_dims(),
        sweep_trace: &report.sweep_trace,
    };
    write_json(&args.report, &out)?;
    rec.output(&args.report);
    if let Some(csv) = &args.csv {
        write_text(csv, &sweep_csv(&report.sweep_trace))?;
        rec.output(csv);
    }
    let best = &report.sweep_trace[report.selected_sweep];
    let summary = json!({
        "sweeps": report.sweep_trace.len(),
        "selected_sweep": report.selected_sweep,
        "f_max_afc": best.f_max_afc,
        "f_gm_afc": best.f_gm_afc,
        "max_bond": sigma.max_bond(),
    });
    rec.finish(&manifest_path(args.manifest.as_deref(), &args.output), summary)
}

fn split_records(data: &MeasurementDataset, split: Split) -> Result<&[BasisRecord]> {
    let records = match split {
        Split::All => &data.records[..],
        Split::Learning => data.learning(),
        Split::Testing => data.testing(),
    };
    if records.is_empty() {
        bail!("the selected split of the dataset is empty");
    }
    Ok(records)
}

fn parse_paulis(specs: &[String], n: usize) -> Result<Vec<PauliString>> {
    if specs.is_empty() {
        return (0..n.saturating_sub(1))
            .map(|j| Ok(PauliString::pair(j, Pauli::Z, j + 1, Pauli::Z)?))
            .collect();
    }
    specs
        .iter()
        .map(|s| {
            let p: PauliString = s.parse().with_context(|| format!("invalid --pauli {s:?}"))?;
            p.check_within(n).with_context(|| format!("--pauli {s:?}"))?;
            Ok(p)
        })
        .collect()
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    let data = read_dataset(&args.data)?;
    let n = data.num_qubits;
    let records = split_records(&data, args.split)?;
    let reference = args.sigma.as_ref().or(args.target.as_ref());
    if args.what == What::Fidelity && reference.is_none() {
        bail!("--what fidelity needs --sigma or --target");
    }
    if matches!(args.what, What::Fidelity | What::Purity | What::Entropy) && (args.k == 0 || n < 2 * args.k) {
        bail!("--k {} needs at least {} qubits, the dataset has {n}", args.k, 2 * args.k.max(1));
    }
    let paulis = if args.what == What::Observable {
        parse_paulis(&args.pauli, n)?
    } else {
        Vec::new()
    };
    let split_name = format!("{:?}", args.split).to_lowercase();
    let what_name = format!("{:?}", args.what).to_lowercase();
    let config = json!({ "what": what_name, "k": args.k, "split": split_name, "pauli": args.pauli });
    let mut rec = Recorder::new("estimate", Some(data.seed), config);
    rec.input(&args.data);

    let (report, csv, summary) = match args.what {
        What::Fidelity => {
            let path = reference.expect("checked above");
            let state = read_state(path)?;
            if state.num_qubits() != n {
                bail!("{} has {} qubits, the dataset has {n}", path.display(), state.num_qubits());
            }
            rec.input(path);
            let sigma = PauliMpo::from_mpo(&state.to_mpo());
            let est = shadows::estimate_afc_fidelity(records, &sigma, args.k).context("estimating fidelity")?;
            let factors: Vec<Value> = est
                .factors
                .iter()
                .map(|f| {
                    json!({
                        "first": f.first, "last": f.last, "pair": f.pair,
                        "overlap": f.overlap, "purity_rho": f.purity_rho, "purity_sigma": f.purity_sigma,
                    })
                })
                .collect();
            let mut csv = String::from("first,last,pair,overlap,purity_rho,purity_sigma\n");
            for f in &est.factors {
                let _ = writeln!(
                    csv,
                    "{},{},{},{:.12e},{:.12e},{:.12e}",
                    f.first, f.last, f.pair, f.overlap, f.purity_rho, f.purity_sigma
                );
            }
            let summary = json!({ "f_max": est.f_max, "f_gm": est.f_gm });
            let report = json!({
                "f_max": est.f_max, "f_gm": est.f_gm, "overlap": est.overlap,
                "purity_rho": est.purity_rho, "purity_sigma": est.purity_sigma, "factors": factors,
            });
            (report, csv, summary)
        }
        What::Purity | What::Entropy => {
            let mut rows = Vec::new();
            let mut csv = String::from("n,purity,s2,s2_per_qubit\n");
            for m in 2 * args.k..=n {
                let prefix: Vec<BasisRecord> = records.iter().map(|r| r.prefix(m)).collect();
                let purity = shadows::estimate_afc_purity(&prefix, args.k)
                    .with_context(|| format!("estimating the purity of the first {m} qubits"))?;
                let s2 = -purity.log2();
                let _ = writeln!(csv, "{m},{purity:.12e},{s2:.12e},{:.12e}", s2 / m as f64);
                rows.push(json!({ "n": m, "purity": purity, "s2": s2, "s2_per_qubit": s2 / m as f64 }));
            }
            let last = rows.last().cloned().unwrap_or(Value::Null);
            (json!({ "series": rows }), csv, last)
        }
        What::Observable => {
            let mut rows = Vec::new();
            let mut csv = String::from("pauli,value\n");
            for p in &paulis {
                let v = shadows::estimate_observable(records, p, None)
                    .with_context(|| format!("estimating {p}"))?;
                let _ = writeln!(csv, "{p},{v:.12e}");
                rows.push(json!({ "pauli": p.to_string(), "value": v }));
            }
            (json!({ "observables": rows }), csv, json!({ "count": rows.len() }))
        }
    };
    let report = json!({ "what": what_name, "k": args.k, "split": split_name, "bases": records.len(), "result": report });
    write_json(&args.output, &report)?;
    rec.output(&args.output);
    if let Some(path) = &args.csv {
        write_text(path, &csv)?;
        rec.output(path);
    }
    rec.finish(&manifest_path(args.manifest.as_deref(), &args.output), summary)
}

fn mpo_site_expectations(op: &MPOperator) -> Result<Vec<[f64; 3]>> {
    let tr = mpo_trace(op).re;
    (0..op.num_qubits())
        .map(|j| {
            let mut v = [0.0; 3];
            for (slot, p) in v.iter_mut().zip([Pauli::X, Pauli::Y, Pauli::Z]) {
                *slot = expectation(op, &PauliString::single(j, p))? / tr;
            }
            Ok(v)
        })
        .collect()
}

fn mps_site_expectations(psi: &MPState) -> Result<Vec<[f64; 3]>> {
    (0..psi.num_qubits())
        .map(|j| {
            let mut v = [0.0; 3];
            for (slot, p) in v.iter_mut().zip([Pauli::X, Pauli::Y, Pauli::Z]) {
                *slot = psi.expectation(&PauliString::single(j, p))?;
            }
            Ok(v)
        })
        .collect()
}

pub fn qpca(args: &QpcaArgs) -> Result<()> {
    let cfg = QpcaConfig {
        chi_mps: args.chi_mps,
        epsilon: args.epsilon,
        seed: args.seed,
        n_sweeps: args.sweeps,
    };
    cfg.validate().context("invalid qpca configuration")?;
    let sigma = read_state(&args.sigma)?.to_mpo();
    let target = match &args.target {
        Some(p) => {
            let t = read_mps(p)?;
            if t.num_qubits() != sigma.num_qubits() {
                bail!("{} has {} qubits, sigma has {}", p.display(), t.num_qubits(), sigma.num_qubits());
            }
            Some(t)
        }
        None => None,
    };
    let mut rec = Recorder::new("qpca", Some(args.seed), serde_json::to_value(&cfg)?);
    rec.input(&args.sigma);
    if let Some(p) = &args.target {
        rec.input(p);
    }

    let result = qpca::principal_component(&sigma, &cfg).context("principal component")?;
    let psi = &result.principal_state;
    serialize::write_mps(&args.output, psi).with_context(|| format!("writing {}", args.output.display()))?;
    rec.output(&args.output);

    let n = psi.num_qubits();
    let entanglement = (1..n)
        .map(|cut| Ok(json!({ "cut": cut, "entropy": von_neumann_entropy(psi, cut)? })))
        .collect::<Result<Vec<_>>>()?;
    let ev_sigma = mpo_site_expectations(&sigma)?;
    let ev_pc = mps_site_expectations(psi)?;
    let ev_target = target.as_ref().map(mps_site_expectations).transpose()?;
    let mut observables = Vec::new();
    let mut csv = String::from("site,pauli,sigma,mitigated,target\n");
    for j in 0..n {
        for (a, name) in ["X", "Y", "Z"].iter().enumerate() {
            let t = ev_target.as_ref().map(|e| e[j][a]);
            let _ = writeln!(
                csv,
                "{j},{name},{:.12e},{:.12e},{}",
                ev_sigma[j][a],
                ev_pc[j][a],
                t.map(|v| format!("{v:.12e}")).unwrap_or_default()
            );
            observables.push(json!({
                "site": j, "pauli": name, "sigma": ev_sigma[j][a], "mitigated": ev_pc[j][a], "target": t,
            }));
        }
    }
    let target_fidelity = target
        .as_ref()
        .map(|t| -> Result<f64> { Ok(psi.inner(t)?.norm_sqr() / (t.norm() * psi.norm()).powi(2)) })
        .transpose()?;
    let report = json!({
        "config": cfg,
        "eigenvalue": result.eigenvalue,
        "energy_trace": result.energy_trace,
        "converged": result.converged,
        "warning": result.warning,
        "bond_dims": psi.bond_dims(),
        "target_fidelity": target_fidelity,
        "entanglement": entanglement,
        "observables": observables,
    });
    write_json(&args.report, &report)?;
    rec.output(&args.report);
    if let Some(path) = &args.csv {
        write_text(path, &csv)?;
        rec.output(path);
    }
    let summary = json!({
        "eigenvalue": result.eigenvalue,
        "converged": result.converged,
        "target_fidelity": target_fidelity,
    });
    rec.finish(&manifest_path(args.manifest.as_deref(), &args.output), summary)
}
