use std::io::{BufRead, Write};

use super::{Field, Grid};
use crate::error::{Error, Result};

const HEADER: &str = "dim,origin,spacing,cells,time_tag";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldHeader {
    pub grid: Grid,
    pub time: f64,
}

/// Shortest round-trip text for `x`, switching to exponent form outside
/// `[1e-4, 1e15)` so tiny values stay short.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|&x| format_real(x))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes a field as a header row, one metadata row, then one value per line.
pub fn write_field_csv<W: Write>(field: &Field, mut out: W) -> Result<()> {
    let g = field.grid();
    let d = g.dim();
    let origin = join(&g.origin()[..d]);
    let cells = g.cells()[..d]
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    writeln!(out, "{HEADER}")?;
    writeln!(
        out,
        "{d},{origin},{},{cells},{}",
        format_real(g.spacing()),
        format_real(field.time())
    )?;
    for &v in field.values() {
        writeln!(out, "{}", format_real(v))?;
    }
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad {what}: {s:?}")))
}

fn parse_header(line: &str) -> Result<FieldHeader> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != 5 {
        return Err(Error::Parse(format!(
            "expected 5 metadata columns, got {}",
            parts.len()
        )));
    }
    let dim: usize = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad dim: {:?}", parts[0])))?;
    let origin: Vec<f64> = parts[1]
        .split_whitespace()
        .map(|s| parse_f64(s, "origin"))
        .collect::<Result<_>>()?;
    let spacing = parse_f64(parts[2], "spacing")?;
    let cells: Vec<usize> = parts[3]
        .split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad cell count: {s:?}")))
        })
        .collect::<Result<_>>()?;
    let time = parse_f64(parts[4], "time_tag")?;
    if origin.len() != dim || cells.len() != dim {
        return Err(Error::Parse(
            "origin and cells must have one entry per axis".into(),
        ));
    }
    let grid = if dim == 1 {
        Grid::new_1d(origin[0], spacing, cells[0])?
    } else {
        Grid::new_2d([origin[0], origin[1]], spacing, [cells[0], cells[1]])?
    };
    Ok(FieldHeader { grid, time })
}

pub fn read_field_csv<R: BufRead>(input: R) -> Result<Field> {
    let mut lines = input.lines();
    let mut next = || -> Result<Option<String>> {
        for line in lines.by_ref() {
            let line = line?;
            if !line.trim().is_empty() {
                return Ok(Some(line));
            }
        }
        Ok(None)
    };
    let first = next()?.ok_or_else(|| Error::Parse("empty field file".into()))?;
    if first.trim() != HEADER {
        return Err(Error::Parse(format!("unexpected header {first:?}")));
    }
    let meta = next()?.ok_or_else(|| Error::Parse("missing metadata row".into()))?;
    let header = parse_header(&meta)?;
    let mut values = Vec::with_capacity(header.grid.len());
    while let Some(line) = next()? {
        values.push(parse_f64(&line, "value")?);
    }
    Field::new(header.grid, values, header.time)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let g = Grid::new_2d([-1.0, -0.5], 0.1, [10, 7]).unwrap();
        let f = Field::from_fn(g, 0.3, |x| x[0].exp() * (3.0 * x[1]).sin() / 7.0);
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let back = read_field_csv(&buf[..]).unwrap();
        assert_eq!(back, f);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dim,origin,spacing,cells,time_tag\n2,-1 -0.5,0.1,10 7,0.3\n"));
    }

    #[test]
    fn wrong_count_rejected() {
        let text = "dim,origin,spacing,cells,time_tag\n1,0,0.5,4,0\n1\n2\n3\n";
        assert!(read_field_csv(text.as_bytes()).is_err());
    }
}
