//! Whitespace-delimited matrix files: a header line `n m` followed by `n`
//! rows of `m` numbers. Blank lines and lines starting with `#` are skipped.

use std::fmt;

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {}: {}",
            self.line, self.column, self.message
        )
    }
}

impl std::error::Error for ParseError {}

/// Tokens of a line with their 1-based starting columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let err = |line, column, message: String| ParseError {
        line,
        column,
        message,
    };
    let (hl, header) = lines
        .next()
        .ok_or_else(|| err(1, 1, "missing `n m` header".into()))?;
    let ht = tokens(header);
    if ht.len() != 2 {
        return Err(err(
            hl,
            1,
            format!("header must hold 2 integers, found {}", ht.len()),
        ));
    }
    let dim = |(col, tok): (usize, &str)| -> Result<usize, ParseError> {
        tok.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(|| {
            err(
                hl,
                col,
                format!("expected a positive integer, found '{tok}'"),
            )
        })
    };
    let rows = dim(ht[0])?;
    let cols = dim(ht[1])?;
    let mut data = DMatrix::zeros(rows, cols);
    let mut last_line = hl;
    for r in 0..rows {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| err(last_line + 1, 1, format!("expected {rows} rows, found {r}")))?;
        last_line = ln;
        let t = tokens(line);
        if t.len() != cols {
            let col = t.get(cols).map_or(line.len() + 1, |x| x.0);
            return Err(err(
                ln,
                col,
                format!("expected {cols} values, found {}", t.len()),
            ));
        }
        for (c, (col, tok)) in t.into_iter().enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|_| err(ln, col, format!("invalid number '{tok}'")))?;
            if !v.is_finite() {
                return Err(err(ln, col, format!("non-finite value '{tok}'")));
            }
            data[(r, c)] = v;
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(err(ln, 1, format!("unexpected data after {rows} rows")));
    }
    Ok(data)
}

/// Row-major nested vectors for JSON output.
pub fn rows_of(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|r| (0..x.ncols()).map(|c| x[(r, c)]).collect())
        .collect()
}
