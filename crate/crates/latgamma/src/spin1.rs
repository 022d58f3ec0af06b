//! The SPIN1 ASCII field format.
//!
//! Header lines: magic, dimension, window extents, eps, per-axis boundary
//! tokens, offset count, then one line per offset. Values follow as row
//! slabs: one line per combination of the leading axes, holding the sites of
//! the last axis in order with offsets fastest within a cell. The window is
//! centered by convention, so the header fully determines site positions and
//! a write/read round-trip is bit-exact.

use crate::error::{Error, Result};
use crate::field::{AxisBound, SpinField};
use crate::lattice::PeriodicLattice;
use crate::util::fmt_g17;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

pub const SPIN1_MAGIC: &str = "SPIN1";

fn boundary_token(b: &AxisBound) -> String {
    match b {
        AxisBound::Restricted => "restricted".to_string(),
        AxisBound::Periodic { twist } => {
            if twist.iter().all(|&t| t == 0) {
                "periodic".to_string()
            } else {
                let parts: Vec<String> = twist.iter().map(|t| t.to_string()).collect();
                format!("periodic:{}", parts.join(","))
            }
        }
    }
}

fn parse_boundary_token(tok: &str, dim: usize) -> Result<AxisBound> {
    if tok == "restricted" {
        Ok(AxisBound::Restricted)
    } else if tok == "periodic" {
        Ok(AxisBound::Periodic { twist: vec![0; dim] })
    } else if let Some(rest) = tok.strip_prefix("periodic:") {
        let twist: Vec<i64> = rest
            .split(',')
            .map(|p| p.trim().parse::<i64>().map_err(|e| Error::Parse(format!("bad twist '{p}': {e}"))))
            .collect::<Result<_>>()?;
        if twist.len() != dim {
            return Err(Error::Parse(format!("twist needs {dim} components, got {}", twist.len())));
        }
        Ok(AxisBound::Periodic { twist })
    } else {
        Err(Error::Parse(format!("unknown boundary token '{tok}'")))
    }
}

pub fn write_spin1<W: Write>(field: &SpinField, mut w: W) -> Result<()> {
    let d = field.dim();
    writeln!(w, "{SPIN1_MAGIC}")?;
    writeln!(w, "d {d}")?;
    let exts: Vec<String> = field.extents().iter().map(|n| n.to_string()).collect();
    writeln!(w, "window {}", exts.join(" "))?;
    writeln!(w, "eps {}", fmt_g17(field.eps()))?;
    let toks: Vec<String> = field.boundary().iter().map(boundary_token).collect();
    writeln!(w, "boundary {}", toks.join(" "))?;
    writeln!(w, "offsets {}", field.lattice().n_offsets())?;
    for off in field.lattice().offsets() {
        let coords: Vec<String> = off.iter().map(|c| fmt_g17(*c)).collect();
        writeln!(w, "{}", coords.join(" "))?;
    }
    let row_len = field.extents()[d - 1] * field.lattice().n_offsets();
    let mut line = String::with_capacity(row_len);
    for (i, &v) in field.values().iter().enumerate() {
        line.push(if v == 0 { '0' } else { '1' });
        if (i + 1) % row_len == 0 {
            writeln!(w, "{line}")?;
            line.clear();
        }
    }
    Ok(())
}

pub fn read_spin1<R: Read>(r: R) -> Result<SpinField> {
    let mut lines = BufReader::new(r).lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Parse("unexpected end of SPIN1 stream".into()))?
            .map_err(Error::Io)
    };
    if next()?.trim() != SPIN1_MAGIC {
        return Err(Error::Parse("missing SPIN1 magic".into()));
    }
    let field_line = |line: String, key: &str| -> Result<Vec<String>> {
        let mut parts = line.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        if parts.is_empty() || parts[0] != key {
            return Err(Error::Parse(format!("expected '{key}' line, got '{line}'")));
        }
        parts.remove(0);
        Ok(parts)
    };
    let d: usize = field_line(next()?, "d")?
        .first()
        .ok_or_else(|| Error::Parse("missing dimension".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad dimension: {e}")))?;
    let extents: Vec<usize> = field_line(next()?, "window")?
        .iter()
        .map(|s| s.parse::<usize>().map_err(|e| Error::Parse(format!("bad extent '{s}': {e}"))))
        .collect::<Result<_>>()?;
    if extents.len() != d {
        return Err(Error::Parse(format!("window needs {d} extents, got {}", extents.len())));
    }
    let eps: f64 = field_line(next()?, "eps")?
        .first()
        .ok_or_else(|| Error::Parse("missing eps".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad eps: {e}")))?;
    let btoks = field_line(next()?, "boundary")?;
    if btoks.len() != d {
        return Err(Error::Parse(format!("boundary needs {d} tokens, got {}", btoks.len())));
    }
    let boundary: Vec<AxisBound> =
        btoks.iter().map(|t| parse_boundary_token(t, d)).collect::<Result<_>>()?;
    let n_off: usize = field_line(next()?, "offsets")?
        .first()
        .ok_or_else(|| Error::Parse("missing offset count".into()))?
        .parse()
        .map_err(|e| Error::Parse(format!("bad offset count: {e}")))?;
    let mut offsets = Vec::with_capacity(n_off);
    for _ in 0..n_off {
        let coords: Vec<f64> = next()?
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("bad offset '{s}': {e}"))))
            .collect::<Result<_>>()?;
        if coords.len() != d {
            return Err(Error::Parse(format!("offset needs {d} coords, got {}", coords.len())));
        }
        offsets.push(coords);
    }
    let lattice = if offsets.len() == 1 && offsets[0].iter().all(|&c| c == 0.0) {
        PeriodicLattice::cubic(d)
    } else {
        PeriodicLattice::with_offsets(d, offsets)?
    };
    let total: usize = extents.iter().product::<usize>() * lattice.n_offsets();
    let mut values = Vec::with_capacity(total);
    while values.len() < total {
        let line = next()?;
        for ch in line.trim().chars() {
            match ch {
                '0' => values.push(0),
                '1' => values.push(1),
                _ => return Err(Error::Parse(format!("bad site character '{ch}'"))),
            }
        }
    }
    if values.len() != total {
        return Err(Error::Parse(format!("expected {total} sites, got {}", values.len())));
    }
    SpinField::from_values(lattice, eps, &extents, &boundary, values)
}

pub fn write_spin1_file(field: &SpinField, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_spin1(field, &mut w)?;
    use std::io::Write as _;
    w.flush()?;
    Ok(())
}

pub fn read_spin1_file(path: &Path) -> Result<SpinField> {
    let file = std::fs::File::open(path)?;
    read_spin1(file)
}
