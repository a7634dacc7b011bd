//! File formats: path CSV (`index,t,x`), replicate matrices, number formatting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimator::PathSample;

/// 17 significant digits, `%.17g` style: round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let fixed = format!("{:.*}", (16 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const PATH_HEADER: &str = "index,t,x";

pub fn write_path_csv<W: Write>(out: W, path: &PathSample) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{PATH_HEADER}")?;
    for (k, x) in path.values.iter().enumerate() {
        let j = k + 1;
        writeln!(out, "{j},{},{}", fmt_f64(path.time(j)), fmt_f64(*x))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `index,t,x`; `delta` is taken from the first time stamp and the
/// remaining stamps must match `j * delta`.
pub fn read_path_csv<R: Read>(input: R) -> Result<PathSample> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["index", "t", "x"] {
        return Err(Error::Parse(format!(
            "path CSV header must be '{PATH_HEADER}', found '{}'",
            cols.join(",")
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let field = |k: usize| -> Result<f64> {
            record
                .get(k)
                .ok_or_else(|| Error::Parse(format!("line {line}: missing column {}", k + 1)))?
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {line}: non-numeric cell '{}'", &record[k])))
        };
        let index = field(0)?;
        if index != (row + 1) as f64 {
            return Err(Error::Parse(format!(
                "line {line}: index {index} out of sequence (expected {})",
                row + 1
            )));
        }
        times.push(field(1)?);
        values.push(field(2)?);
    }
    if times.is_empty() {
        return Err(Error::Parse("path CSV has no rows".into()));
    }
    let delta = times[0];
    for (k, t) in times.iter().enumerate() {
        let expected = (k + 1) as f64 * delta;
        if (t - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::Parse(format!(
                "line {}: time {t} is not on the regular grid j * {delta}",
                k + 2
            )));
        }
    }
    PathSample::new(delta, values)
}

pub fn read_path_file(path: &Path) -> Result<PathSample> {
    read_path_csv(File::open(path)?)
}

pub fn write_path_file(path: &Path, sample: &PathSample) -> Result<()> {
    write_path_csv(File::create(path)?, sample)
}

/// `N x n` matrix, one replicate per row, preceded by `#` comment lines.
pub fn write_matrix_csv<W: Write>(out: W, comments: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = BufWriter::new(out);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Headerless numeric CSV; `#` lines are skipped. Rows must have equal length.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: non-numeric cell '{}'", k + 1, c.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: ragged row with {} cells, expected {}",
                    k + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}
