//! File formats. Every float is written with 12 significant digits and every
//! file carries a schema version: a `schema_version` key in JSON documents
//! and a leading `# schema_version=N` line in CSV files.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::protocol::{Protocol, SampleSet};
use crate::quantum::{reduced_bloch, QuantumState};

pub const SCHEMA_VERSION: u32 = 1;

/// `%.12g`: 12 significant digits, trailing zeros removed, exponent notation
/// outside `[1e-5, 1e12)`.
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.11e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let sign = if x < 0.0 { "-" } else { "" };
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..12).contains(&exp) {
        let body = if exp >= 0 {
            let split = exp as usize + 1;
            format!("{}.{}", &digits[..split], &digits[split..])
        } else {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        };
        format!("{sign}{}", trim(body))
    } else {
        let m = trim(format!("{}.{}", &digits[..1], &digits[1..]));
        format!("{sign}{m}e{exp}")
    }
}

/// The value a reader recovers from `fmt12(x)`.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        fmt12(x).parse().expect("fmt12 output parses")
    } else {
        x
    }
}

fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round12(n.as_f64().expect("f64 number"));
            if let Some(r) = serde_json::Number::from_f64(x) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Writes through a temporary sibling so a failed write leaves no file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// JSON text of `value` with a `schema_version` key and rounded floats.
/// Non-object values are wrapped under `data`.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    let mut doc = match v {
        Value::Object(map) => map,
        other => {
            let mut map = serde_json::Map::new();
            map.insert("data".into(), other);
            map
        }
    };
    doc.insert("schema_version".into(), SCHEMA_VERSION.into());
    let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
    text.push('\n');
    Ok(text)
}

/// `value` as a reader of its JSON file would see it.
pub fn json_rounded<T: Serialize + DeserializeOwned>(value: &T) -> Result<T> {
    from_json_str(&to_json_string(value)?, "memory")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_string(value)?)
}

pub fn from_json_str<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let mut v: Value = serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
    let map = v
        .as_object_mut()
        .ok_or_else(|| Error::parse(origin, "expected a JSON object"))?;
    match map.remove("schema_version").and_then(|s| s.as_u64()) {
        Some(s) if s == SCHEMA_VERSION as u64 => {}
        Some(s) => return Err(Error::parse(origin, format!("unsupported schema_version {s}"))),
        None => return Err(Error::parse(origin, "missing schema_version")),
    }
    let v = match map.remove("data") {
        Some(inner) if map.is_empty() => inner,
        Some(inner) => {
            map.insert("data".into(), inner);
            v
        }
        None => v,
    };
    serde_json::from_value(v).map_err(|e| Error::parse(origin, e.to_string()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    from_json_str(&text, &path.display().to_string())
}

fn csv_header() -> String {
    format!("# schema_version={SCHEMA_VERSION}\n")
}

fn push_row(out: &mut String, fields: impl IntoIterator<Item = String>) {
    let row: Vec<String> = fields.into_iter().collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

/// Samples CSV: columns `s_1..s_L, T, L, infidelity`, one protocol per row.
pub fn samples_csv(set: &SampleSet) -> String {
    let mut out = csv_header();
    let l = set.steps();
    push_row(
        &mut out,
        (1..=l)
            .map(|k| format!("s_{k}"))
            .chain(["T", "L", "infidelity"].map(String::from)),
    );
    for (row, inf) in set.rows().zip(set.infidelities()) {
        push_row(
            &mut out,
            row.iter()
                .map(|&v| fmt12(v))
                .chain([fmt12(set.duration()), l.to_string(), fmt12(*inf)]),
        );
    }
    out
}

pub fn write_samples(path: &Path, set: &SampleSet) -> Result<()> {
    write_atomic(path, &samples_csv(set))
}

struct Table {
    header: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(&origin, e.to_string()))?;
        if k == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            header = Some(record.iter().map(String::from).collect());
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| Error::parse(&origin, format!("row {}: {e}", k + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(&origin, "no data rows"));
    }
    Ok(Table { header, rows })
}

/// Protocols from either a samples CSV (duration from its `T` column) or a
/// headerless file with one protocol per row (duration from `duration`).
/// `duration`, when given, overrides the file.
pub fn read_protocols(path: &Path, duration: Option<f64>) -> Result<(Vec<Protocol>, Vec<Option<f64>>)> {
    let origin = path.display().to_string();
    let table = read_table(path)?;
    let (value_cols, t_col, inf_col) = match &table.header {
        Some(h) => {
            let value_cols: Vec<usize> = (0..h.len()).filter(|&i| h[i].starts_with("s_")).collect();
            if value_cols.is_empty() {
                return Err(Error::parse(&origin, "header has no s_k columns"));
            }
            (
                value_cols,
                h.iter().position(|c| c == "T"),
                h.iter().position(|c| c == "infidelity"),
            )
        }
        None => ((0..table.rows[0].len()).collect(), None, None),
    };
    let mut protocols = Vec::with_capacity(table.rows.len());
    let mut infidelities = Vec::with_capacity(table.rows.len());
    for (k, row) in table.rows.iter().enumerate() {
        let width = table.header.as_ref().map_or(value_cols.len(), Vec::len);
        if row.len() != width {
            return Err(Error::parse(&origin, format!("row {} has {} fields, expected {width}", k + 1, row.len())));
        }
        let t = duration
            .or_else(|| t_col.map(|c| row[c]))
            .ok_or_else(|| Error::parse(&origin, "no duration: add a T column or pass a duration"))?;
        let values = value_cols.iter().map(|&c| row[c]).collect();
        protocols.push(Protocol::new(values, t).map_err(|e| Error::parse(&origin, format!("row {}: {e}", k + 1)))?);
        infidelities.push(inf_col.map(|c| row[c]));
    }
    Ok((protocols, infidelities))
}

pub fn read_samples(path: &Path, run_id: usize, seed: u64) -> Result<SampleSet> {
    let origin = path.display().to_string();
    let (protocols, infidelities) = read_protocols(path, None)?;
    let infidelities: Option<Vec<f64>> = infidelities.into_iter().collect();
    let infidelities = infidelities.ok_or_else(|| Error::parse(&origin, "missing infidelity column"))?;
    SampleSet::new(run_id, seed, &protocols, infidelities).map_err(|e| Error::parse(&origin, e.to_string()))
}

/// Trajectory CSV: time, real and imaginary amplitudes, the reduced Bloch
/// vector of qubit 1, its length and the entanglement entropy.
pub fn trajectory_csv(duration: f64, states: &[QuantumState]) -> String {
    let mut out = csv_header();
    push_row(
        &mut out,
        [
            "t", "re_a1", "re_a2", "re_a3", "re_a4", "im_a1", "im_a2", "im_a3", "im_a4", "n_x", "n_y", "n_z", "n_norm",
            "entropy",
        ]
        .map(String::from),
    );
    let steps = states.len().saturating_sub(1).max(1);
    for (k, psi) in states.iter().enumerate() {
        let b = reduced_bloch(psi);
        let a = &psi.amplitudes;
        let t = duration * k as f64 / steps as f64;
        push_row(
            &mut out,
            std::iter::once(t)
                .chain(a.iter().map(|z| z.re))
                .chain(a.iter().map(|z| z.im))
                .chain(b.n)
                .chain([b.norm, b.entropy])
                .map(fmt12),
        );
    }
    out
}

pub fn write_trajectory(path: &Path, duration: f64, states: &[QuantumState]) -> Result<()> {
    write_atomic(path, &trajectory_csv(duration, states))
}
