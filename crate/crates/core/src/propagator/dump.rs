//! Plain-text matrix dump.
//!
//! ```text
//! # unimap-matrix v1 N=<N> stage=<stage> map=<name> basis=<kind>
//! <row> <col> <real> <imag>
//! ```
//!
//! Indices are 1-based, lines are sorted by `(row, col)` and only nonzero
//! entries are listed. Values carry 17 significant digits, so a dump parses
//! back to the same bits.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{PropagatorMatrix, Stage};
use crate::basis::BasisKind;
use crate::error::{Error, Result};

const MAGIC: &str = "# unimap-matrix v1";

pub fn write_dump<W: Write>(m: &PropagatorMatrix, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "{MAGIC} N={} stage={} map={} basis={}",
        m.dim(),
        m.stage(),
        m.map_name().replace(char::is_whitespace, "_"),
        m.basis().kind()
    )?;
    for i in 0..m.dim() {
        for (j, z) in m.sparse().row(i) {
            writeln!(out, "{} {} {:.16e} {:.16e}", i + 1, j + 1, z.re, z.im)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDump {
    pub n: usize,
    pub stage: Stage,
    pub map_name: String,
    pub basis: BasisKind,
    pub entries: DMatrix<Complex64>,
}

pub fn parse_dump(text: &str) -> Result<MatrixDump> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty dump".into()))?;
    let fields = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Parse(format!("bad header `{header}`")))?;
    let (mut n, mut stage, mut map_name, mut basis) = (None, None, None, None);
    for field in fields.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field `{field}`")))?;
        match key {
            "N" => n = Some(value.parse::<usize>().map_err(|e| Error::Parse(format!("N: {e}")))?),
            "stage" => stage = Some(value.parse::<Stage>()?),
            "map" => map_name = Some(value.to_string()),
            "basis" => basis = Some(value.parse::<BasisKind>()?),
            other => return Err(Error::Parse(format!("unknown header field `{other}`"))),
        }
    }
    let missing = |k: &str| Error::Parse(format!("header lacks `{k}`"));
    let n = n.ok_or_else(|| missing("N"))?;
    let mut entries = DMatrix::<Complex64>::zeros(n, n);
    let mut last: Option<(usize, usize)> = None;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 2));
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(bad("expected `row col real imag`"));
        }
        let row: usize = parts[0].parse().map_err(|_| bad("row"))?;
        let col: usize = parts[1].parse().map_err(|_| bad("col"))?;
        let re: f64 = parts[2].parse().map_err(|_| bad("real part"))?;
        let im: f64 = parts[3].parse().map_err(|_| bad("imaginary part"))?;
        if row == 0 || col == 0 || row > n || col > n {
            return Err(bad("index out of range"));
        }
        if last.is_some_and(|prev| prev >= (row, col)) {
            return Err(bad("entries not sorted by (row, col)"));
        }
        last = Some((row, col));
        entries[(row - 1, col - 1)] = Complex64::new(re, im);
    }
    Ok(MatrixDump {
        n,
        stage: stage.ok_or_else(|| missing("stage"))?,
        map_name: map_name.ok_or_else(|| missing("map"))?,
        basis: basis.ok_or_else(|| missing("basis"))?,
        entries,
    })
}
