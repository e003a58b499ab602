//! File formats: MPO/MPS tensors as a single JSON object and measurement
//! datasets as line-delimited JSON. Floats are written with 17 significant
//! digits so every value survives a round trip bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{Tensor, C64};
use crate::measurement::{BasisRecord, MeasurementDataset, MAX_QUBITS};
use crate::mpo::MPOperator;
use crate::mps::MPState;

fn push_f64(out: &mut String, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::InvalidParameter(format!("cannot serialize non-finite value {x}")));
    }
    write!(out, "{x:.16e}").expect("write to string");
    Ok(())
}

fn push_complex(out: &mut String, z: C64) -> Result<()> {
    out.push('[');
    push_f64(out, z.re)?;
    out.push(',');
    push_f64(out, z.im)?;
    out.push(']');
    Ok(())
}

/// A state file: either an operator or a pure state.
#[derive(Clone, Debug, PartialEq)]
pub enum StateFile {
    Mpo(MPOperator),
    Mps(MPState),
}

impl StateFile {
    pub fn num_qubits(&self) -> usize {
        match self {
            StateFile::Mpo(op) => op.num_qubits(),
            StateFile::Mps(psi) => psi.num_qubits(),
        }
    }

    /// The state as a density operator.
    pub fn to_mpo(&self) -> MPOperator {
        match self {
            StateFile::Mpo(op) => op.clone(),
            StateFile::Mps(psi) => psi.to_mpo(),
        }
    }
}

fn tensors_json(kind: &str, n: usize, periodic: bool, tensors: &[Tensor<C64>]) -> Result<String> {
    let mut out = String::new();
    write!(out, "{{\"kind\":\"{kind}\",\"num_qubits\":{n},").unwrap();
    if kind == "mpo" {
        write!(out, "\"periodic\":{periodic},").unwrap();
    }
    out.push_str("\"tensors\":[");
    for (i, t) in tensors.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let shape: Vec<String> = t.dims.iter().map(|d| d.to_string()).collect();
        write!(out, "{{\"shape\":[{}],\"data\":[", shape.join(",")).unwrap();
        for (k, &z) in t.data.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            push_complex(&mut out, z)?;
        }
        out.push_str("]}");
    }
    out.push_str("]}\n");
    Ok(out)
}

pub fn mpo_to_json(op: &MPOperator) -> Result<String> {
    tensors_json("mpo", op.num_qubits(), op.is_periodic(), op.sites())
}

pub fn mps_to_json(psi: &MPState) -> Result<String> {
    tensors_json("mps", psi.num_qubits(), false, psi.sites())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    kind: String,
    num_qubits: usize,
    #[serde(default)]
    periodic: bool,
    tensors: Vec<RawTensor>,
}

pub fn state_from_json(text: &str) -> Result<StateFile> {
    let raw: RawState = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    if raw.tensors.len() != raw.num_qubits {
        return Err(Error::Structural(format!(
            "num_qubits = {} but {} tensors",
            raw.num_qubits,
            raw.tensors.len()
        )));
    }
    let mut tensors = Vec::with_capacity(raw.tensors.len());
    for (j, t) in raw.tensors.into_iter().enumerate() {
        let size: usize = t.shape.iter().product();
        if size != t.data.len() {
            return Err(Error::Structural(format!(
                "tensor {j}: shape {:?} needs {size} entries, found {}",
                t.shape,
                t.data.len()
            )));
        }
        let data = t.data.into_iter().map(|[re, im]| C64::new(re, im)).collect();
        tensors.push(Tensor::new(t.shape, data));
    }
    match raw.kind.as_str() {
        "mpo" => {
            if tensors.iter().any(|t| t.rank() != 4) {
                return Err(Error::Structural("mpo tensors must have rank 4".into()));
            }
            Ok(StateFile::Mpo(MPOperator::new(tensors, raw.periodic)?))
        }
        "mps" => {
            if tensors.iter().any(|t| t.rank() != 3) {
                return Err(Error::Structural("mps tensors must have rank 3".into()));
            }
            Ok(StateFile::Mps(MPState::new(tensors)?))
        }
        other => Err(Error::Parse {
            line: 1,
            msg: format!("unknown kind \"{other}\", expected \"mpo\" or \"mps\""),
        }),
    }
}

pub fn write_mpo(path: impl AsRef<Path>, op: &MPOperator) -> Result<()> {
    fs::write(path, mpo_to_json(op)?)?;
    Ok(())
}

pub fn write_mps(path: impl AsRef<Path>, psi: &MPState) -> Result<()> {
    fs::write(path, mps_to_json(psi)?)?;
    Ok(())
}

pub fn read_state(path: impl AsRef<Path>) -> Result<StateFile> {
    state_from_json(&fs::read_to_string(path)?)
}

pub fn read_mpo(path: impl AsRef<Path>) -> Result<MPOperator> {
    match read_state(path)? {
        StateFile::Mpo(op) => Ok(op),
        StateFile::Mps(_) => Err(Error::Structural("expected an mpo file, found mps".into())),
    }
}

pub fn read_mps(path: impl AsRef<Path>) -> Result<MPState> {
    match read_state(path)? {
        StateFile::Mps(psi) => Ok(psi),
        StateFile::Mpo(_) => Err(Error::Structural("expected an mps file, found mpo".into())),
    }
}

fn bitstring(word: u64, n: usize) -> String {
    (0..n).map(|j| if (word >> j) & 1 == 1 { '1' } else { '0' }).collect()
}

/// Serialize a dataset: a header line followed by one line per basis.
pub fn dataset_to_writer<W: Write>(ds: &MeasurementDataset, mut w: W) -> Result<()> {
    ds.validate()?;
    writeln!(
        w,
        "{{\"format\":\"rm-dataset\",\"version\":1,\"num_qubits\":{},\"num_bases\":{},\"shots_per_basis\":{},\"learning_bases\":{},\"seed\":{}}}",
        ds.num_qubits,
        ds.records.len(),
        ds.shots_per_basis,
        ds.learning_bases,
        ds.seed
    )?;
    let mut line = String::new();
    for rec in &ds.records {
        line.clear();
        write!(line, "{{\"r\":{},\"u\":[", rec.r).unwrap();
        for (j, u) in rec.unitaries.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push('[');
            for (k, &z) in u.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                push_complex(&mut line, z)?;
            }
            line.push(']');
        }
        line.push_str("],\"s\":[");
        for (m, &word) in rec.outcomes.iter().enumerate() {
            if m > 0 {
                line.push(',');
            }
            line.push('"');
            line.push_str(&bitstring(word, ds.num_qubits));
            line.push('"');
        }
        line.push_str("]}\n");
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn dataset_to_bytes(ds: &MeasurementDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    dataset_to_writer(ds, &mut buf)?;
    Ok(buf)
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &MeasurementDataset) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    dataset_to_writer(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    num_qubits: usize,
    num_bases: usize,
    shots_per_basis: usize,
    learning_bases: usize,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    r: usize,
    u: Vec<[[f64; 2]; 4]>,
    s: Vec<String>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn dataset_from_reader<R: BufRead>(reader: R) -> Result<MeasurementDataset> {
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| parse_err(1, "empty file, missing header"))??;
    let header: Header = serde_json::from_str(&first).map_err(|e| parse_err(1, format!("header: {e}")))?;
    if header.format != "rm-dataset" || header.version != 1 {
        return Err(parse_err(
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    let n = header.num_qubits;
    if n == 0 || n > MAX_QUBITS {
        return Err(parse_err(1, format!("num_qubits = {n} outside [1, {MAX_QUBITS}]")));
    }
    if header.learning_bases > header.num_bases {
        return Err(parse_err(1, "learning_bases exceeds num_bases"));
    }
    let mut records = Vec::with_capacity(header.num_bases);
    for idx in 0..header.num_bases {
        let line_no = idx + 2;
        let text = match lines.next() {
            Some(l) => l?,
            None => {
                return Err(parse_err(
                    line_no,
                    format!("file ends before record r = {idx} of {}", header.num_bases),
                ))
            }
        };
        let raw: RawRecord = serde_json::from_str(&text)
            .map_err(|e| parse_err(line_no, format!("record r = {idx}: {e}")))?;
        if raw.r != idx {
            return Err(parse_err(line_no, format!("expected r = {idx}, found {}", raw.r)));
        }
        if raw.u.len() != n {
            return Err(parse_err(line_no, format!("{} unitaries for {n} qubits", raw.u.len())));
        }
        if raw.s.len() != header.shots_per_basis {
            return Err(parse_err(
                line_no,
                format!("{} shots, expected {}", raw.s.len(), header.shots_per_basis),
            ));
        }
        let unitaries = raw
            .u
            .iter()
            .map(|u| {
                let mut out = [C64::new(0.0, 0.0); 4];
                for (o, [re, im]) in out.iter_mut().zip(u) {
                    *o = C64::new(*re, *im);
                }
                out
            })
            .collect();
        let mut outcomes = Vec::with_capacity(raw.s.len());
        for s in &raw.s {
            if s.len() != n {
                return Err(parse_err(line_no, format!("bitstring \"{s}\" has length != {n}")));
            }
            let mut word = 0u64;
            for (j, c) in s.chars().enumerate() {
                match c {
                    '0' => {}
                    '1' => word |= 1u64 << j,
                    _ => return Err(parse_err(line_no, format!("bitstring \"{s}\" is not binary"))),
                }
            }
            outcomes.push(word);
        }
        records.push(BasisRecord {
            r: raw.r,
            unitaries,
            outcomes,
        });
    }
    for (k, extra) in lines.enumerate() {
        if !extra?.trim().is_empty() {
            return Err(parse_err(header.num_bases + 2 + k, "unexpected content after last record"));
        }
    }
    Ok(MeasurementDataset {
        num_qubits: n,
        shots_per_basis: header.shots_per_basis,
        seed: header.seed,
        learning_bases: header.learning_bases,
        records,
    })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<MeasurementDataset> {
    let file = fs::File::open(path)?;
    dataset_from_reader(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{generate_dataset, Sampler};
    use crate::states::{random_mpdo, random_mps};

    #[test]
    fn mpo_roundtrip_is_bit_exact() {
        let op = random_mpdo(4, 2, 11).unwrap();
        let back = state_from_json(&mpo_to_json(&op).unwrap()).unwrap();
        assert_eq!(back, StateFile::Mpo(op));
        let psi = random_mps(5, 3, 2).unwrap();
        match state_from_json(&mps_to_json(&psi).unwrap()).unwrap() {
            StateFile::Mps(p) => assert_eq!(p.sites(), psi.sites()),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn awkward_floats_survive() {
        for x in [0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 5e-324, -2.5e300, 0.30000000000000004] {
            let mut s = String::new();
            push_f64(&mut s, x).unwrap();
            let y: f64 = serde_json::from_str(&s).unwrap();
            assert_eq!(x.to_bits(), y.to_bits(), "{s}");
        }
    }

    #[test]
    fn dataset_roundtrip_and_truncation() {
        let sampler = Sampler::from_mpo(&random_mpdo(3, 2, 5).unwrap()).unwrap();
        let ds = generate_dataset(&sampler, 4, 3, 3, 17).unwrap();
        let bytes = dataset_to_bytes(&ds).unwrap();
        let back = dataset_from_reader(&bytes[..]).unwrap();
        assert_eq!(back, ds);

        let text = String::from_utf8(bytes).unwrap();
        let cut: Vec<&str> = text.lines().take(3).collect();
        let err = dataset_from_reader(cut.join("\n").as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("r = 2"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let half = &text[..text.len() - 20];
        assert!(matches!(
            dataset_from_reader(half.as_bytes()),
            Err(Error::Parse { line: 5, .. })
        ));
    }
}
