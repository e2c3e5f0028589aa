//! Stable on-disk formats.
//!
//! CSV files are UTF-8 with LF line endings, a header row, 1-based mode
//! indices and floats printed with 17 significant digits so that a read-back
//! reproduces the in-memory values exactly. Summaries and estimates are JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationMatrix, SinglesDistribution};
use crate::counting::{CountRecord, ViolationSignificance};
use crate::error::{Error, Result};
use crate::evolution::UnitaryMatrix;
use crate::metrics::ViolationMatrix;
use crate::tomography::{Scan, SubmatrixEstimate, VisibilityRecord};

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {line}: bad number {s:?}: {e}")))
}

fn parse_mode(s: &str, line: usize) -> Result<usize> {
    let v: usize =
        s.trim().parse().map_err(|e| Error::Parse(format!("line {line}: bad index {s:?}: {e}")))?;
    v.checked_sub(1).ok_or_else(|| Error::Parse(format!("line {line}: indices are 1-based")))
}

/// Data rows after checking the header; yields (line number, fields).
fn rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => {
            return Err(Error::Parse(format!("expected header {header:?}, found {:?}", h.trim())))
        }
        None => return Err(Error::Parse("empty file".into())),
    }
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse(format!(
                "line {}: expected {width} fields, found {}",
                idx + 1,
                fields.len()
            )));
        }
        out.push((idx + 1, fields));
    }
    Ok(out)
}

pub const MATRIX_HEADER: &str = "i,j,value";

pub fn correlation_to_csv(gamma: &CorrelationMatrix) -> String {
    let mut s = String::from(MATRIX_HEADER);
    s.push('\n');
    for (i, j, v) in gamma.upper_entries() {
        let _ = writeln!(s, "{},{},{}", i + 1, j + 1, fmt_f64(v));
    }
    s
}

/// Parse an upper-triangle correlation CSV; the dimension is the largest
/// index present.
pub fn correlation_from_csv(text: &str) -> Result<CorrelationMatrix> {
    let entries = upper_triangle_from_csv(text)?;
    let n = entries.iter().map(|&(_, j, _)| j + 1).max().unwrap_or(0);
    let mut m = DMatrix::zeros(n, n);
    for (i, j, v) in entries {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    CorrelationMatrix::new(m)
}

fn upper_triangle_from_csv(text: &str) -> Result<Vec<(usize, usize, f64)>> {
    rows(text, MATRIX_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let (i, j) = (parse_mode(f[0], line)?, parse_mode(f[1], line)?);
            if i > j {
                return Err(Error::Parse(format!("line {line}: expected i <= j")));
            }
            Ok((i, j, parse_f64(f[2], line)?))
        })
        .collect()
}

/// Violation values for `i <= j` (diagonal written as zero). With
/// `positive_only`, non-violating entries are written as zero.
pub fn violation_to_csv(v: &ViolationMatrix, positive_only: bool) -> String {
    let v = if positive_only { v.positive_part() } else { v.clone() };
    let mut s = String::from(MATRIX_HEADER);
    s.push('\n');
    for i in 0..v.dim() {
        for j in i..v.dim() {
            let _ = writeln!(s, "{},{},{}", i + 1, j + 1, fmt_f64(v.get(i, j)));
        }
    }
    s
}

/// Symmetric real matrix from an upper-triangle CSV.
pub fn symmetric_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let entries = upper_triangle_from_csv(text)?;
    let n = entries.iter().map(|&(_, j, _)| j + 1).max().unwrap_or(0);
    let mut m = DMatrix::zeros(n, n);
    for (i, j, v) in entries {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    Ok(m)
}

pub const SIGNIFICANCE_HEADER: &str = "i,j,value,sigma,significance";

/// Off-diagonal violation significance rows; negative values are zeroed
/// (value and significance) when `positive_only` is set.
pub fn significance_to_csv(v: &ViolationSignificance, positive_only: bool) -> String {
    let mut s = String::from(SIGNIFICANCE_HEADER);
    s.push('\n');
    let n = v.value.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let (mut val, mut sig) = (v.value[(i, j)], v.significance[(i, j)]);
            if positive_only && val < 0.0 {
                val = 0.0;
                sig = 0.0;
            }
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                i + 1,
                j + 1,
                fmt_f64(val),
                fmt_f64(v.sigma[(i, j)]),
                fmt_f64(sig)
            );
        }
    }
    s
}

pub const UNITARY_HEADER: &str = "i,j,re,im";

/// Full matrix, row `i` = output, column `j` = input.
pub fn complex_matrix_to_csv(m: &DMatrix<Complex64>) -> String {
    let mut s = String::from(UNITARY_HEADER);
    s.push('\n');
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            let _ = writeln!(s, "{},{},{},{}", i + 1, j + 1, fmt_f64(z.re), fmt_f64(z.im));
        }
    }
    s
}

pub fn complex_matrix_from_csv(text: &str) -> Result<DMatrix<Complex64>> {
    let data = rows(text, UNITARY_HEADER)?;
    let mut entries = Vec::with_capacity(data.len());
    for (line, f) in data {
        entries.push((
            parse_mode(f[0], line)?,
            parse_mode(f[1], line)?,
            Complex64::new(parse_f64(f[2], line)?, parse_f64(f[3], line)?),
        ));
    }
    let nr = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let nc = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    if entries.len() != nr * nc {
        return Err(Error::Parse(format!("{} entries for a {nr}x{nc} matrix", entries.len())));
    }
    let mut m = DMatrix::zeros(nr, nc);
    for (i, j, z) in entries {
        m[(i, j)] = z;
    }
    Ok(m)
}

pub fn unitary_from_csv(text: &str) -> Result<UnitaryMatrix> {
    UnitaryMatrix::new(complex_matrix_from_csv(text)?)
}

pub const SINGLES_HEADER: &str = "i,value";

pub fn singles_to_csv(s: &SinglesDistribution) -> String {
    let mut out = String::from(SINGLES_HEADER);
    out.push('\n');
    for (k, p) in s.probabilities.iter().enumerate() {
        let _ = writeln!(out, "{},{}", k + 1, fmt_f64(*p));
    }
    out
}

pub fn singles_from_csv(text: &str, input_mode: usize) -> Result<SinglesDistribution> {
    let data = rows(text, SINGLES_HEADER)?;
    let mut probabilities = vec![0.0; data.len()];
    for (line, f) in data {
        let k = parse_mode(f[0], line)?;
        let slot = probabilities
            .get_mut(k)
            .ok_or_else(|| Error::Parse(format!("line {line}: index {} out of range", k + 1)))?;
        *slot = parse_f64(f[1], line)?;
    }
    Ok(SinglesDistribution { input_mode, probabilities })
}

/// Several singles distributions in one file (`input,i,value`).
pub const SINGLES_SET_HEADER: &str = "input,i,value";

pub fn singles_set_to_csv(set: &[SinglesDistribution]) -> String {
    let mut out = String::from(SINGLES_SET_HEADER);
    out.push('\n');
    for s in set {
        for (k, p) in s.probabilities.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", s.input_mode + 1, k + 1, fmt_f64(*p));
        }
    }
    out
}

pub fn singles_set_from_csv(text: &str) -> Result<Vec<SinglesDistribution>> {
    let mut by_input: Vec<SinglesDistribution> = Vec::new();
    for (line, f) in rows(text, SINGLES_SET_HEADER)? {
        let (input, k, p) = (parse_mode(f[0], line)?, parse_mode(f[1], line)?, parse_f64(f[2], line)?);
        let pos = match by_input.iter().position(|s| s.input_mode == input) {
            Some(pos) => pos,
            None => {
                by_input.push(SinglesDistribution { input_mode: input, probabilities: Vec::new() });
                by_input.len() - 1
            }
        };
        let probs = &mut by_input[pos].probabilities;
        if probs.len() <= k {
            probs.resize(k + 1, 0.0);
        }
        probs[k] = p;
    }
    Ok(by_input)
}

pub const COUNTS_HEADER: &str = "i,j,count";

pub fn counts_to_csv(record: &CountRecord) -> String {
    let mut s = String::from(COUNTS_HEADER);
    s.push('\n');
    for (&(i, j), c) in &record.pairs {
        let _ = writeln!(s, "{},{},{}", i + 1, j + 1, c);
    }
    s
}

/// Counts keyed by 0-based pair from a counts CSV.
pub fn counts_from_csv(text: &str) -> Result<BTreeMap<(usize, usize), u64>> {
    let mut out = BTreeMap::new();
    for (line, f) in rows(text, COUNTS_HEADER)? {
        let (i, j) = (parse_mode(f[0], line)?, parse_mode(f[1], line)?);
        let c: u64 = f[2]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {line}: bad count {:?}: {e}", f[2])))?;
        out.insert(if i <= j { (i, j) } else { (j, i) }, c);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountEntry {
    i: usize,
    j: usize,
    count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountRecordJson {
    modes: usize,
    total_pairs_emitted: u64,
    bunching_split: f64,
    seed: u64,
    counts: Vec<CountEntry>,
}

pub fn counts_to_json(record: &CountRecord) -> Result<String> {
    let doc = CountRecordJson {
        modes: record.dim,
        total_pairs_emitted: record.total_pairs_emitted,
        bunching_split: record.bunching_split,
        seed: record.seed,
        counts: record
            .pairs
            .iter()
            .map(|(&(i, j), &count)| CountEntry { i: i + 1, j: j + 1, count })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn counts_from_json(text: &str) -> Result<CountRecord> {
    let doc: CountRecordJson = serde_json::from_str(text)?;
    let mut pairs = BTreeMap::new();
    for e in doc.counts {
        let (i, j) = (
            e.i.checked_sub(1).ok_or_else(|| Error::Parse("indices are 1-based".into()))?,
            e.j.checked_sub(1).ok_or_else(|| Error::Parse("indices are 1-based".into()))?,
        );
        pairs.insert(if i <= j { (i, j) } else { (j, i) }, e.count);
    }
    let record = CountRecord {
        dim: doc.modes,
        pairs,
        total_pairs_emitted: doc.total_pairs_emitted,
        bunching_split: doc.bunching_split,
        seed: doc.seed,
    };
    record.validate()?;
    Ok(record)
}

pub const VISIBILITY_HEADER: &str = "plan_id,input_i,input_j,output_k,output_l,visibility,uncertainty";

/// One row per record; `plan_id` is the row's position in the plan and an
/// absent uncertainty is an empty field.
pub fn visibilities_to_csv(records: &[VisibilityRecord]) -> String {
    let mut s = String::from(VISIBILITY_HEADER);
    s.push('\n');
    for (id, r) in records.iter().enumerate() {
        let unc = r.uncertainty.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            id + 1,
            r.input_pair.0 + 1,
            r.input_pair.1 + 1,
            r.output_pair.0 + 1,
            r.output_pair.1 + 1,
            fmt_f64(r.visibility),
            unc
        );
    }
    s
}

pub fn visibilities_from_csv(text: &str) -> Result<Vec<VisibilityRecord>> {
    rows(text, VISIBILITY_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let uncertainty = if f[6].trim().is_empty() { None } else { Some(parse_f64(f[6], line)?) };
            Ok(VisibilityRecord {
                input_pair: (parse_mode(f[1], line)?, parse_mode(f[2], line)?),
                output_pair: (parse_mode(f[3], line)?, parse_mode(f[4], line)?),
                visibility: parse_f64(f[5], line)?,
                uncertainty,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VisibilityJson {
    plan_id: usize,
    input_pair: [usize; 2],
    output_pair: [usize; 2],
    visibility: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uncertainty: Option<f64>,
}

pub fn visibilities_to_json(records: &[VisibilityRecord]) -> Result<String> {
    let docs: Vec<VisibilityJson> = records
        .iter()
        .enumerate()
        .map(|(id, r)| VisibilityJson {
            plan_id: id + 1,
            input_pair: [r.input_pair.0 + 1, r.input_pair.1 + 1],
            output_pair: [r.output_pair.0 + 1, r.output_pair.1 + 1],
            visibility: r.visibility,
            uncertainty: r.uncertainty,
        })
        .collect();
    Ok(serde_json::to_string_pretty(&docs)?)
}

pub fn visibilities_from_json(text: &str) -> Result<Vec<VisibilityRecord>> {
    let docs: Vec<VisibilityJson> = serde_json::from_str(text)?;
    let idx = |v: usize| v.checked_sub(1).ok_or_else(|| Error::Parse("indices are 1-based".into()));
    docs.into_iter()
        .map(|d| {
            Ok(VisibilityRecord {
                input_pair: (idx(d.input_pair[0])?, idx(d.input_pair[1])?),
                output_pair: (idx(d.output_pair[0])?, idx(d.output_pair[1])?),
                visibility: d.visibility,
                uncertainty: d.uncertainty,
            })
        })
        .collect()
}

pub const PLAN_HEADER: &str = "plan_id,input_i,input_j,output_k,output_l";

pub fn plan_to_csv(plan: &[Scan]) -> String {
    let mut s = String::from(PLAN_HEADER);
    s.push('\n');
    for (id, scan) in plan.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            id + 1,
            scan.input_pair.0 + 1,
            scan.input_pair.1 + 1,
            scan.output_pair.0 + 1,
            scan.output_pair.1 + 1
        );
    }
    s
}

pub const GAUGE_DECLARATION: &str =
    "row 1 and the first listed input column are real and non-negative; global complex conjugation unresolved";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateJson {
    gauge: String,
    input_modes: Vec<usize>,
    moduli: Vec<Vec<f64>>,
    phases: Vec<Vec<f64>>,
    residual: f64,
    n_constraints: usize,
    unconstrained: Vec<[usize; 2]>,
    consistent: bool,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Parse("ragged matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), nc, |r, c| rows[r][c]))
}

/// Reconstructed estimate as JSON, rows indexed by output mode and 1-based
/// input modes.
pub fn estimate_to_json(est: &SubmatrixEstimate) -> Result<String> {
    let doc = EstimateJson {
        gauge: GAUGE_DECLARATION.into(),
        input_modes: est.input_modes.iter().map(|m| m + 1).collect(),
        moduli: rows_of(&est.moduli),
        phases: rows_of(&est.phases),
        residual: est.residual,
        n_constraints: est.n_constraints,
        unconstrained: est.unconstrained.iter().map(|&(r, m)| [r + 1, m + 1]).collect(),
        consistent: est.consistent,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn estimate_from_json(text: &str) -> Result<SubmatrixEstimate> {
    let doc: EstimateJson = serde_json::from_str(text)?;
    let idx = |v: usize| v.checked_sub(1).ok_or_else(|| Error::Parse("indices are 1-based".into()));
    let moduli = matrix_of(&doc.moduli)?;
    let phases = matrix_of(&doc.phases)?;
    if moduli.shape() != phases.shape() || moduli.ncols() != doc.input_modes.len() {
        return Err(Error::Parse("estimate matrices do not match the input modes".into()));
    }
    Ok(SubmatrixEstimate {
        input_modes: doc.input_modes.into_iter().map(idx).collect::<Result<_>>()?,
        moduli,
        phases,
        residual: doc.residual,
        n_constraints: doc.n_constraints,
        unconstrained: doc
            .unconstrained
            .into_iter()
            .map(|[r, m]| Ok((idx(r)?, idx(m)?)))
            .collect::<Result<_>>()?,
        consistent: doc.consistent,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}
