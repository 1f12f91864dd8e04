//! Plain-text matrices and histograms, and trace CSV output.
//!
//! Matrices are whitespace-separated decimal reals, one row per line. A
//! histogram file holds its weights on one line or one per line. Blank lines
//! and lines starting with `#` are skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use ot_core::{CostMatrix, Histogram, SolveTrace};

use crate::error::{io_err, HarnessError, Result};

fn rows(text: &str, origin: &str) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| HarnessError::Parse {
                    origin: origin.to_string(),
                    line: k + 1,
                    msg: format!("not a number: {tok:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

pub fn parse_matrix(text: &str, origin: &str) -> Result<Array2<f64>> {
    let rows = rows(text, origin)?;
    let width = rows.first().map(Vec::len).ok_or_else(|| HarnessError::Parse {
        origin: origin.to_string(),
        line: 0,
        msg: "no data".into(),
    })?;
    if let Some(k) = rows.iter().position(|r| r.len() != width) {
        return Err(HarnessError::Parse {
            origin: origin.to_string(),
            line: k + 1,
            msg: format!("ragged row: expected {width} entries, got {}", rows[k].len()),
        });
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((flat.len() / width, width), flat).expect("rectangular rows"))
}

pub fn parse_histogram(text: &str, origin: &str) -> Result<Histogram> {
    let weights: Vec<f64> = rows(text, origin)?.into_iter().flatten().collect();
    if weights.is_empty() {
        return Err(HarnessError::Parse {
            origin: origin.to_string(),
            line: 0,
            msg: "no data".into(),
        });
    }
    Ok(Histogram::from_weights(&weights)?)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    parse_matrix(&read(path)?, &path.display().to_string())
}

pub fn read_cost(path: &Path) -> Result<CostMatrix> {
    Ok(CostMatrix::new(read_matrix(path)?)?)
}

pub fn read_histogram(path: &Path) -> Result<Histogram> {
    parse_histogram(&read(path)?, &path.display().to_string())
}

/// Shortest decimal that parses back to `v` exactly. Integers print without
/// a fraction; very large or small magnitudes use an exponent.
pub fn fmt_f64(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:?}")
    }
}

pub fn format_matrix(m: ArrayView2<'_, f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    fs::write(path, format_matrix(m)).map_err(io_err(path))
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let text: Vec<String> = v.iter().map(|&x| fmt_f64(x)).collect();
    fs::write(path, text.join("\n") + "\n").map_err(io_err(path))
}

pub const TRACE_HEADER: [&str; 5] = ["iter", "cost", "marginal_violation", "wall_time_s", "effective_eps"];

#[derive(Debug, Clone, Copy, Default)]
pub struct TraceOptions {
    /// Adds an `abs_gap` column holding `|cost − reference|`.
    pub reference: Option<f64>,
    /// Writes `0` for every wall time so repeated runs are byte-identical.
    pub no_timing: bool,
}

pub fn write_trace<W: Write>(out: W, trace: &SolveTrace, opts: TraceOptions) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = TRACE_HEADER.to_vec();
    if opts.reference.is_some() {
        header.push("abs_gap");
    }
    w.write_record(&header)?;
    for r in trace.iter() {
        let mut rec = vec![
            r.iter.to_string(),
            fmt_f64(r.cost),
            fmt_f64(r.marginal_violation),
            if opts.no_timing { "0".to_string() } else { fmt_f64(r.wall_time_s) },
            r.effective_eps.map(fmt_f64).unwrap_or_default(),
        ];
        if let Some(w_ref) = opts.reference {
            rec.push(fmt_f64((r.cost - w_ref).abs()));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err("<trace>"))?;
    Ok(())
}

pub fn write_trace_file(path: &Path, trace: &SolveTrace, opts: TraceOptions) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_trace(std::io::BufWriter::new(file), trace, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matrix_round_trip() {
        let m = array![[1.0, 0.25, 3e-20], [0.1, 2.0, 1.0 / 3.0]];
        let text = format_matrix(m.view());
        assert_eq!(parse_matrix(&text, "t").unwrap(), m);
        assert!(text.starts_with("1 0.25 3e-20\n"));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let m = parse_matrix("# demo\n\n1 2\n 3\t4 \n", "t").unwrap();
        assert_eq!(m, array![[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn ragged_and_garbage_input() {
        let err = parse_matrix("1 2\n3\n", "c.txt").unwrap_err();
        assert!(err.to_string().contains("c.txt, line 2"), "{err}");
        assert!(parse_matrix("1 x\n", "t").is_err());
        assert!(parse_matrix("\n# only\n", "t").is_err());
    }

    #[test]
    fn histogram_accepts_row_or_column() {
        let a = parse_histogram("1 1 2", "t").unwrap();
        let b = parse_histogram("1\n1\n2\n", "t").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.as_slice(), &[0.25, 0.25, 0.5]);
        assert!(parse_histogram("-1 2", "t").is_err());
    }
}
