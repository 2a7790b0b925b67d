//! Machine-readable output: the sweep / appendix CSV schemas and the JSON
//! helpers used by the record types.
//!
//! CSV floats carry 6 significant digits; JSON carries full precision.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::{AppendixRow, SweepRow, SweepTable};

/// Significant digits written to CSV.
pub const CSV_SIG_DIGITS: usize = 6;

/// Serde adapter writing a matrix as a list of rows.
pub mod mat_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::Mat;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

/// `%g`-style formatting with `sig` significant digits.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= sig as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(format!("csv: {e}"))
}

/// Header `sweep_value,estimator,frobenius,frobenius_se,eig1..eigP,eig_se1..eig_seP,reps,seed,rejects`.
pub fn sweep_csv_header(p: usize) -> Vec<String> {
    let mut h = vec!["sweep_value".to_string(), "estimator".into(), "frobenius".into(), "frobenius_se".into()];
    h.extend((1..=p).map(|k| format!("eig{k}")));
    h.extend((1..=p).map(|k| format!("eig_se{k}")));
    h.extend(["reps".to_string(), "seed".into(), "rejects".into()]);
    h
}

/// One parsed line of a sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCsvRow {
    pub sweep_value: f64,
    pub estimator: String,
    pub frobenius: f64,
    pub frobenius_se: f64,
    pub eigenvalues: Vec<f64>,
    pub eigenvalue_se: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub rejects: u64,
}

impl From<&SweepRow> for SweepCsvRow {
    fn from(row: &SweepRow) -> Self {
        let e = &row.estimate;
        Self {
            sweep_value: row.sweep_value,
            estimator: row.estimator.clone(),
            frobenius: e.frobenius,
            frobenius_se: e.frobenius_stderr,
            eigenvalues: e.eigenvalues.clone(),
            eigenvalue_se: e.eigenvalue_se_proxy.clone(),
            reps: e.reps,
            seed: e.seed,
            rejects: e.rejects,
        }
    }
}

impl SweepCsvRow {
    fn record(&self) -> Vec<String> {
        let f = |x: f64| fmt_sig(x, CSV_SIG_DIGITS);
        let mut rec = vec![f(self.sweep_value), self.estimator.clone(), f(self.frobenius), f(self.frobenius_se)];
        rec.extend(self.eigenvalues.iter().map(|v| f(*v)));
        rec.extend(self.eigenvalue_se.iter().map(|v| f(*v)));
        rec.extend([self.reps.to_string(), self.seed.to_string(), self.rejects.to_string()]);
        rec
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepCsvRow], p: usize, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(sweep_csv_header(p)).map_err(csv_err)?;
    for row in rows {
        wtr.write_record(row.record()).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Io(format!("write: {e}")))
}

pub fn write_sweep_table_csv<W: Write>(table: &SweepTable, w: W) -> Result<()> {
    let rows: Vec<SweepCsvRow> = table.rows.iter().map(SweepCsvRow::from).collect();
    write_sweep_csv(&rows, table.dims.p, w)
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec.get(i)
        .ok_or_else(|| Error::Config(format!("missing column {name}")))?
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse column {name}")))
}

/// Parses a sweep CSV, checking the header against the schema.
pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepCsvRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() < 7 || (header.len() - 7) % 2 != 0 {
        return Err(Error::Config("unexpected sweep header width".into()));
    }
    let p = (header.len() - 7) / 2;
    let expected = sweep_csv_header(p);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Config("sweep header does not match schema".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let eig = (0..p).map(|k| parse_field(&rec, 4 + k, "eig")).collect::<Result<Vec<f64>>>()?;
        let eig_se = (0..p).map(|k| parse_field(&rec, 4 + p + k, "eig_se")).collect::<Result<Vec<f64>>>()?;
        rows.push(SweepCsvRow {
            sweep_value: parse_field(&rec, 0, "sweep_value")?,
            estimator: rec.get(1).unwrap_or_default().to_string(),
            frobenius: parse_field(&rec, 2, "frobenius")?,
            frobenius_se: parse_field(&rec, 3, "frobenius_se")?,
            eigenvalues: eig,
            eigenvalue_se: eig_se,
            reps: parse_field(&rec, 4 + 2 * p, "reps")?,
            seed: parse_field(&rec, 5 + 2 * p, "seed")?,
            rejects: parse_field(&rec, 6 + 2 * p, "rejects")?,
        });
    }
    Ok(rows)
}

pub const APPENDIX_CSV_HEADER: [&str; 9] = [
    "n",
    "p",
    "largest_eigenvalue",
    "eigenvalue_se",
    "below_n",
    "admissible",
    "reps",
    "seed",
    "rejects",
];

pub fn write_appendix_csv<W: Write>(rows: &[AppendixRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(APPENDIX_CSV_HEADER).map_err(csv_err)?;
    let f = |x: Option<f64>| x.map_or_else(|| "NaN".to_string(), |v| fmt_sig(v, CSV_SIG_DIGITS));
    for row in rows {
        wtr.write_record([
            row.n.to_string(),
            row.p.to_string(),
            f(row.largest_eigenvalue),
            f(row.eigenvalue_se_proxy),
            row.below_n.to_string(),
            row.admissible.to_string(),
            row.reps.to_string(),
            row.seed.to_string(),
            row.rejects.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Io(format!("write: {e}")))
}

pub fn read_appendix_csv<R: Read>(r: R) -> Result<Vec<AppendixRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(APPENDIX_CSV_HEADER.iter().copied()) {
        return Err(Error::Config("appendix header does not match schema".into()));
    }
    let opt = |v: f64| if v.is_nan() { None } else { Some(v) };
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            Ok(AppendixRow {
                n: parse_field(&rec, 0, "n")?,
                p: parse_field(&rec, 1, "p")?,
                largest_eigenvalue: opt(parse_field(&rec, 2, "largest_eigenvalue")?),
                eigenvalue_se_proxy: opt(parse_field(&rec, 3, "eigenvalue_se")?),
                below_n: parse_field(&rec, 4, "below_n")?,
                admissible: parse_field(&rec, 5, "admissible")?,
                reps: parse_field(&rec, 6, "reps")?,
                seed: parse_field(&rec, 7, "seed")?,
                rejects: parse_field(&rec, 8, "rejects")?,
            })
        })
        .collect()
}

/// Relative agreement at `sig` significant digits.
pub fn agrees_to_digits(a: f64, b: f64, sig: usize) -> bool {
    if a == b || (a.is_nan() && b.is_nan()) {
        return true;
    }
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= 0.5 * 10f64.powi(1 - sig as i32) * scale
}
