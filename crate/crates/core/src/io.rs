//! CSV formats for sample sets, matrices, estimates and solver traces.
//!
//! Sample sets: a `p,n,seed` header row, its values, then one row per sample
//! with columns `re_0,im_0,…,re_{p−1},im_{p−1}`.
//!
//! Matrices: `p` rows of `2p` values (`re, im` interleaved), or a single row
//! of `p²` real-vectorized values.

use std::io::{Read, Write};

use crate::baselines::EstimateReport;
use crate::coca::IterationRecord;
use crate::error::{Error, Result};
use crate::hermitian::{from_real_vec, CVector, HermitianMatrix, C64};
use crate::sampling::SampleSet;

/// Shortest round-trip formatting.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: {field:?}")))
}

fn parse_usize(field: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a count: {field:?}")))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn writer<W: Write>(output: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(true).from_writer(output)
}

fn records<R: Read>(input: R) -> Result<Vec<csv::StringRecord>> {
    let mut out = Vec::new();
    for rec in reader(input).records() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_samples<W: Write>(samples: &SampleSet, output: W) -> Result<()> {
    let mut w = writer(output);
    w.write_record(["p", "n", "seed"])?;
    w.write_record([
        samples.p().to_string(),
        samples.n().to_string(),
        samples.seed.to_string(),
    ])?;
    for x in samples.samples() {
        w.write_record(x.iter().flat_map(|z| [fmt_f64(z.re), fmt_f64(z.im)]))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a sample set. Rows are normalized to unit norm on load.
pub fn read_samples<R: Read>(input: R) -> Result<SampleSet> {
    let rows = records(input)?;
    let header = rows.first().ok_or_else(|| Error::Parse("empty sample file".into()))?;
    if header.iter().collect::<Vec<_>>() != ["p", "n", "seed"] {
        return Err(Error::Parse("sample file must start with the header p,n,seed".into()));
    }
    let meta = rows
        .get(1)
        .ok_or_else(|| Error::Parse("missing p,n,seed values".into()))?;
    if meta.len() != 3 {
        return Err(Error::Parse("p,n,seed row must have three fields".into()));
    }
    let p = parse_usize(&meta[0])?;
    let n = parse_usize(&meta[1])?;
    let seed: u64 = meta[2]
        .parse()
        .map_err(|_| Error::Parse(format!("bad seed {:?}", &meta[2])))?;
    let body = &rows[2..];
    if body.len() != n {
        return Err(Error::Parse(format!(
            "header announces {n} samples, found {}",
            body.len()
        )));
    }
    let mut vectors = Vec::with_capacity(n);
    for (i, rec) in body.iter().enumerate() {
        if rec.len() != 2 * p {
            return Err(Error::Parse(format!(
                "sample row {i} has {} fields, expected {}",
                rec.len(),
                2 * p
            )));
        }
        let vals: Vec<f64> = rec.iter().map(parse_f64).collect::<Result<_>>()?;
        vectors.push(CVector::from_fn(p, |r, _| C64::new(vals[2 * r], vals[2 * r + 1])));
    }
    SampleSet::from_vectors(p, vectors, seed)
}

pub fn write_matrix<W: Write>(m: &HermitianMatrix, output: W) -> Result<()> {
    let mut w = writer(output);
    let p = m.dim();
    for r in 0..p {
        w.write_record((0..p).flat_map(|c| {
            let z = m.get(r, c);
            [fmt_f64(z.re), fmt_f64(z.im)]
        }))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(input: R) -> Result<HermitianMatrix> {
    let rows = records(input)?;
    let values: Vec<Vec<f64>> = rows
        .iter()
        .map(|rec| rec.iter().map(parse_f64).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    if values.len() == 1 {
        let v = &values[0];
        let p = (v.len() as f64).sqrt().round() as usize;
        if p * p != v.len() || p == 0 {
            return Err(Error::Parse(format!(
                "{} values do not form a real-vectorized square matrix",
                v.len()
            )));
        }
        return from_real_vec(p, v);
    }
    let p = values.len();
    if p == 0 {
        return Err(Error::Parse("empty matrix file".into()));
    }
    if let Some(bad) = values.iter().position(|r| r.len() != 2 * p) {
        return Err(Error::Parse(format!("matrix row {bad} should have {} fields", 2 * p)));
    }
    let m = nalgebra::DMatrix::from_fn(p, p, |r, c| C64::new(values[r][2 * c], values[r][2 * c + 1]));
    HermitianMatrix::new(m)
}

/// Estimate as CSV: metadata header and values, the real-vectorized
/// estimate, then the structure coefficients when present.
pub fn write_estimate<W: Write>(report: &EstimateReport, output: W) -> Result<()> {
    let mut w = writer(output);
    w.write_record([
        "method",
        "p",
        "iterations",
        "residual",
        "objective",
        "existed",
        "warnings",
    ])?;
    let warnings: Vec<String> = report.warnings.iter().map(|w| format!("{w:?}")).collect();
    w.write_record([
        report.method.as_str().to_string(),
        report.theta_hat.dim().to_string(),
        report.iterations.to_string(),
        fmt_f64(report.residual),
        report.objective.map(fmt_f64).unwrap_or_default(),
        report.existed.to_string(),
        warnings.join(";"),
    ])?;
    let mut row = vec!["theta".to_string()];
    row.extend(report.theta_hat.real_vectorize().into_iter().map(fmt_f64));
    w.write_record(&row)?;
    if let Some(a) = &report.coefficients {
        let mut row = vec!["coefficients".to_string()];
        row.extend(a.iter().copied().map(fmt_f64));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Real-vectorized estimate from [`write_estimate`] output.
pub fn read_estimate_theta<R: Read>(input: R) -> Result<HermitianMatrix> {
    let rows = records(input)?;
    let rec = rows
        .iter()
        .find(|r| r.get(0) == Some("theta"))
        .ok_or_else(|| Error::Parse("estimate file has no theta row".into()))?;
    let v: Vec<f64> = rec.iter().skip(1).map(parse_f64).collect::<Result<_>>()?;
    let p = (v.len() as f64).sqrt().round() as usize;
    from_real_vec(p, &v)
}

pub fn write_history<W: Write>(history: &[IterationRecord], output: W) -> Result<()> {
    let mut w = writer(output);
    w.write_record([
        "iteration",
        "barrier_weight",
        "duality_gap",
        "newton_decrement",
        "objective",
    ])?;
    for h in history {
        w.write_record([
            h.iteration.to_string(),
            fmt_f64(h.barrier_weight),
            fmt_f64(h.duality_gap),
            fmt_f64(h.newton_decrement),
            fmt_f64(h.objective),
        ])?;
    }
    w.flush()?;
    Ok(())
}
