//! Plain-text SDP exchange format.
//!
//! ```text
//! sdp-dump 1
//! blocks <k>
//! <dim_0> ... <dim_{k-1}>
//! objective <nnz>
//! <block> <i> <j> <value>        (upper triangle, i <= j, 0-based)
//! constraints <m>
//! row <index> <rhs> <nnz>
//! <block> <i> <j> <value>
//! ```
//!
//! Values are written with round-trip precision.

use std::io::{BufRead, Write};

use certsearch_core::sdp::{LinearConstraint, SdpProblem, SparseSym};

use crate::error::{AppError, Result};

pub fn write_dump<W: Write>(p: &SdpProblem, mut w: W) -> std::io::Result<()> {
    writeln!(w, "sdp-dump 1")?;
    writeln!(w, "blocks {}", p.block_dims.len())?;
    let dims: Vec<String> = p.block_dims.iter().map(|d| d.to_string()).collect();
    writeln!(w, "{}", dims.join(" "))?;
    let obj: Vec<(usize, &SparseSym)> = p.objective.iter().enumerate().collect();
    write_entries(&mut w, "objective", None, &obj)?;
    writeln!(w, "constraints {}", p.constraints.len())?;
    for (idx, row) in p.constraints.iter().enumerate() {
        let terms: Vec<(usize, &SparseSym)> = row.terms.iter().map(|(b, s)| (*b, s)).collect();
        write_entries(&mut w, "row", Some((idx, row.rhs)), &terms)?;
    }
    Ok(())
}

fn write_entries<W: Write>(
    w: &mut W,
    tag: &str,
    row: Option<(usize, f64)>,
    mats: &[(usize, &SparseSym)],
) -> std::io::Result<()> {
    let mut entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for &(b, m) in mats {
        let mut m = m.clone();
        m.compress();
        entries.extend(m.entries.iter().map(|&(i, j, v)| (b, i, j, v)));
    }
    entries.sort_by_key(|&(b, i, j, _)| (b, j, i));
    match row {
        Some((idx, rhs)) => writeln!(w, "{tag} {idx} {rhs:?} {}", entries.len())?,
        None => writeln!(w, "{tag} {}", entries.len())?,
    }
    for (b, i, j, v) in entries {
        writeln!(w, "{b} {i} {j} {v:?}")?;
    }
    Ok(())
}

pub fn dump_to_string(p: &SdpProblem) -> String {
    let mut buf = Vec::new();
    write_dump(p, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next non-blank line, split into tokens.
    fn next_tokens(&mut self) -> Result<Vec<String>> {
        loop {
            self.line += 1;
            let l = match self.inner.next() {
                Some(l) => l.map_err(|e| AppError::io(format!("line {}", self.line), e))?,
                None => return Err(self.err("unexpected end of file")),
            };
            let t = l.trim();
            if !t.is_empty() {
                return Ok(t.split_whitespace().map(str::to_owned).collect());
            }
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> AppError {
        AppError::Format(format!("sdp dump line {}: {msg}", self.line))
    }

    fn expect(&mut self, tag: &str, count: usize) -> Result<Vec<String>> {
        let t = self.next_tokens()?;
        if t.first().map(String::as_str) != Some(tag) || t.len() != count + 1 {
            return Err(self.err(format!("expected `{tag}` with {count} fields")));
        }
        Ok(t[1..].to_vec())
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("bad number `{s}`")))
    }

    fn entries(&mut self, nnz: usize, dims: &[usize]) -> Result<Vec<SparseSym>> {
        let mut mats = vec![SparseSym::new(); dims.len()];
        for _ in 0..nnz {
            let t = self.next_tokens()?;
            if t.len() != 4 {
                return Err(self.err("expected `block i j value`"));
            }
            let (b, i, j): (usize, usize, usize) = (self.num(&t[0])?, self.num(&t[1])?, self.num(&t[2])?);
            let v: f64 = self.num(&t[3])?;
            if b >= dims.len() || i > j || j >= dims[b] || !v.is_finite() {
                return Err(self.err(format!("entry ({b}, {i}, {j}) out of range")));
            }
            mats[b].push(i, j, v);
        }
        Ok(mats)
    }
}

pub fn read_dump<R: BufRead>(r: R) -> Result<SdpProblem> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let head = lines.next_tokens()?;
    if head != ["sdp-dump", "1"] {
        return Err(lines.err("missing `sdp-dump 1` header"));
    }
    let k: usize = {
        let t = lines.expect("blocks", 1)?;
        lines.num(&t[0])?
    };
    let dims: Vec<usize> = lines
        .next_tokens()?
        .iter()
        .map(|s| lines.num(s))
        .collect::<Result<_>>()?;
    if dims.len() != k || dims.contains(&0) {
        return Err(lines.err(format!("expected {k} positive block sizes")));
    }
    let nnz: usize = {
        let t = lines.expect("objective", 1)?;
        lines.num(&t[0])?
    };
    let objective = lines.entries(nnz, &dims)?;
    let m: usize = {
        let t = lines.expect("constraints", 1)?;
        lines.num(&t[0])?
    };
    let mut constraints = Vec::with_capacity(m);
    for idx in 0..m {
        let t = lines.expect("row", 3)?;
        let got: usize = lines.num(&t[0])?;
        if got != idx {
            return Err(lines.err(format!("row {got} out of order, expected {idx}")));
        }
        let rhs: f64 = lines.num(&t[1])?;
        let nnz: usize = lines.num(&t[2])?;
        let mats = lines.entries(nnz, &dims)?;
        let terms = mats
            .into_iter()
            .enumerate()
            .filter(|(_, s)| !s.entries.is_empty())
            .collect();
        constraints.push(LinearConstraint { terms, rhs });
    }
    let p = SdpProblem {
        block_dims: dims,
        objective,
        constraints,
    };
    p.validate()?;
    Ok(p)
}

pub fn read_dump_file(path: &std::path::Path) -> Result<SdpProblem> {
    let f = std::fs::File::open(path).map_err(|e| AppError::io(format!("opening {}", path.display()), e))?;
    read_dump(std::io::BufReader::new(f))
}
