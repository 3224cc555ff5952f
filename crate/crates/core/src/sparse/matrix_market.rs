//! MatrixMarket coordinate files (`real general`), 1-based on disk.

use std::io::{BufRead, Write};

use super::{ObservedMatrix, ProblemShape};
use crate::error::{Error, Result};

const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<ObservedMatrix> {
    let mut lines = reader.lines().enumerate();

    let (_, banner) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let banner = banner?;
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix banner"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format '{}'", tokens[2])));
    }
    if !matches!(tokens[3].as_str(), "real" | "integer" | "double") {
        return Err(parse_err(1, format!("unsupported field '{}'", tokens[3])));
    }
    if tokens[4] != "general" {
        return Err(parse_err(1, format!("unsupported symmetry '{}'", tokens[4])));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "expected 'rows cols nnz'"));
                }
                let parse = |s: &str| s.parse::<usize>().map_err(|e| parse_err(lineno, e.to_string()));
                let dims = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                entries.reserve(dims.2);
                size = Some(dims);
            }
            Some((rows, cols, _)) => {
                if fields.len() != 3 {
                    return Err(parse_err(lineno, "expected 'row col value'"));
                }
                let i: usize = fields[0].parse().map_err(|_| parse_err(lineno, "bad row index"))?;
                let j: usize = fields[1].parse().map_err(|_| parse_err(lineno, "bad column index"))?;
                let v: f64 = fields[2].parse().map_err(|_| parse_err(lineno, "bad value"))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(parse_err(lineno, format!("index ({i}, {j}) outside {rows}x{cols}")));
                }
                entries.push((i - 1, j - 1, v));
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| parse_err(0, "missing size line"))?;
    if entries.len() != nnz {
        return Err(parse_err(0, format!("header declares {nnz} entries, found {}", entries.len())));
    }
    ObservedMatrix::new(ProblemShape::new(rows, cols)?, entries)
}

pub fn write_matrix_market<W: Write>(matrix: &ObservedMatrix, mut writer: W) -> Result<()> {
    writeln!(writer, "{HEADER}")?;
    writeln!(writer, "{} {} {}", matrix.nrows(), matrix.ncols(), matrix.nnz())?;
    for (i, j, v) in matrix.iter() {
        writeln!(writer, "{} {} {:?}", i + 1, j + 1, v)?;
    }
    writer.flush()?;
    Ok(())
}
