//! Line-oriented text checkpoint. Floats are written as the hex of their IEEE
//! bits, so a file is byte-identical across platforms and round-trips exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Backbone, ModelParams};
use crate::process::VariationalPosterior;
use crate::tensor::Matrix;

const MAGIC: &str = "BNA-CHECKPOINT 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub backbone: Backbone,
    pub params: ModelParams,
    pub posterior: Option<VariationalPosterior>,
    /// Configuration snapshot as flat key/value pairs.
    pub config: BTreeMap<String, String>,
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn write_row(out: &mut String, values: &[f64]) {
    let row: Vec<String> = values.iter().map(|&v| hex(v)).collect();
    let _ = writeln!(out, "{}", row.join(" "));
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(out, "matrix {name} {} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        write_row(out, m.row(r));
    }
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.it
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("line {line}: {msg}"))
}

fn parse_floats(line: usize, text: &str, expected: usize) -> Result<Vec<f64>> {
    let vals = text
        .split_whitespace()
        .map(|t| u64::from_str_radix(t, 16).map(f64::from_bits).map_err(|_| bad(line, format!("'{t}' is not a hex float"))))
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != expected {
        return Err(bad(line, format!("{} values, expected {expected}", vals.len())));
    }
    Ok(vals)
}

fn parse_usize(line: usize, tok: Option<&str>) -> Result<usize> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| bad(line, "expected a count"))
}

fn read_matrix(lines: &mut Lines<'_>, name: &str) -> Result<Matrix> {
    let (n, header) = lines.next()?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("matrix") || toks.next() != Some(name) {
        return Err(bad(n, format!("expected 'matrix {name}'")));
    }
    let rows = parse_usize(n, toks.next())?;
    let cols = parse_usize(n, toks.next())?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (n, l) = lines.next()?;
        data.extend(parse_floats(n, l, cols)?);
    }
    Matrix::from_vec(rows, cols, data)
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "backbone {}", self.backbone.name());
        let _ = writeln!(out, "layers {}", self.params.layers.len());
        write_matrix(&mut out, "w_in", &self.params.w_in);
        for w in &self.params.layers {
            write_matrix(&mut out, "layer", w);
        }
        write_matrix(&mut out, "w_out", &self.params.w_out);
        match &self.posterior {
            None => {
                let _ = writeln!(out, "posterior none");
            }
            Some(q) => {
                let _ = writeln!(out, "posterior {} {}", q.truncation(), hex(q.tau));
                write_row(&mut out, &q.log_a);
                write_row(&mut out, &q.log_b);
            }
        }
        for (k, v) in &self.config {
            let _ = writeln!(out, "config {k} {v}");
        }
        let _ = writeln!(out, "end");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines { it: text.lines().enumerate() };
        let (n, magic) = lines.next()?;
        if magic != MAGIC {
            return Err(bad(n, format!("not a checkpoint (expected '{MAGIC}')")));
        }
        let (n, l) = lines.next()?;
        let backbone = l
            .strip_prefix("backbone ")
            .and_then(Backbone::parse)
            .ok_or_else(|| bad(n, "expected 'backbone <bna|gcn|resgcn>'"))?;
        let (n, l) = lines.next()?;
        let depth = parse_usize(n, l.strip_prefix("layers "))?;
        let w_in = read_matrix(&mut lines, "w_in")?;
        let layers = (0..depth).map(|_| read_matrix(&mut lines, "layer")).collect::<Result<Vec<_>>>()?;
        let w_out = read_matrix(&mut lines, "w_out")?;
        let params = ModelParams { w_in, layers, w_out };
        params.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;

        let (n, l) = lines.next()?;
        let posterior = match l.strip_prefix("posterior ") {
            Some("none") => None,
            Some(rest) => {
                let mut toks = rest.split_whitespace();
                let t = parse_usize(n, toks.next())?;
                let tau = parse_floats(n, toks.next().unwrap_or(""), 1)?[0];
                let (na, la) = lines.next()?;
                let log_a = parse_floats(na, la, t)?;
                let (nb, lb) = lines.next()?;
                let log_b = parse_floats(nb, lb, t)?;
                Some(VariationalPosterior { log_a, log_b, tau })
            }
            None => return Err(bad(n, "expected 'posterior'")),
        };
        let mut config = BTreeMap::new();
        loop {
            let (n, l) = lines.next()?;
            if l == "end" {
                break;
            }
            let rest = l.strip_prefix("config ").ok_or_else(|| bad(n, "expected 'config' or 'end'"))?;
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            config.insert(k.to_string(), v.to_string());
        }
        Ok(Checkpoint {
            backbone,
            params,
            posterior,
            config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
