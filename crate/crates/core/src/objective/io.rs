//! Plain-text instance format.
//!
//! ```text
//! etlalm-instance v1
//! kind lasso
//! agents 2
//! dim 3
//! seed 7
//! param samples_per_agent 3
//! param tau 1.0000000000000001e-1
//! agent 0
//! smooth least_squares 3 3
//! <one line per row of A>
//! b <p values>
//! lipschitz <value>
//! nonsmooth l1 <weight>
//! ...
//! end
//! ```
//!
//! Every real is written with 17 significant digits, which round-trips f64 exactly.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{AgentObjective, CompositeObjective, Instance, InstanceKind, NonsmoothPart, SmoothPart};
use crate::error::{Error, Result};
use crate::linalg::Stacked;

const MAGIC: &str = "etlalm-instance v1";

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_reals(out: &mut String, prefix: &str, values: &[f64]) {
    out.push_str(prefix);
    for v in values {
        out.push(' ');
        out.push_str(&fmt_real(*v));
    }
    out.push('\n');
}

fn write_block(out: &mut String, block: &Stacked) {
    for r in 0..block.rows() {
        let line: Vec<String> = block.row(r).iter().map(|v| fmt_real(*v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

impl Instance {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MAGIC}").unwrap();
        writeln!(s, "kind {}", self.kind.name()).unwrap();
        writeln!(s, "agents {}", self.n()).unwrap();
        writeln!(s, "dim {}", self.dim()).unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        match &self.kind {
            InstanceKind::Lasso {
                samples_per_agent,
                tau,
            } => {
                writeln!(s, "param samples_per_agent {samples_per_agent}").unwrap();
                writeln!(s, "param tau {}", fmt_real(*tau)).unwrap();
            }
            InstanceKind::Logistic {
                samples_per_agent,
                ridge,
            } => {
                writeln!(s, "param samples_per_agent {samples_per_agent}").unwrap();
                writeln!(s, "param ridge {}", fmt_real(*ridge)).unwrap();
            }
            InstanceKind::Quadratic | InstanceKind::Custom => {}
        }
        for (i, a) in self.objective.agents().iter().enumerate() {
            writeln!(s, "agent {i}").unwrap();
            match &a.smooth {
                SmoothPart::Zero { .. } => s.push_str("smooth zero\n"),
                SmoothPart::LeastSquares { a, b, lipschitz } => {
                    writeln!(s, "smooth least_squares {} {}", a.rows(), a.cols()).unwrap();
                    write_block(&mut s, a);
                    write_reals(&mut s, "b", b);
                    writeln!(s, "lipschitz {}", fmt_real(*lipschitz)).unwrap();
                }
                SmoothPart::Logistic {
                    features,
                    labels,
                    ridge,
                    lipschitz,
                } => {
                    writeln!(
                        s,
                        "smooth logistic {} {} {}",
                        features.rows(),
                        features.cols(),
                        fmt_real(*ridge)
                    )
                    .unwrap();
                    write_block(&mut s, features);
                    write_reals(&mut s, "labels", labels);
                    writeln!(s, "lipschitz {}", fmt_real(*lipschitz)).unwrap();
                }
                SmoothPart::Quadratic { diag, center } => {
                    s.push_str("smooth quadratic\n");
                    write_reals(&mut s, "diag", diag);
                    write_reals(&mut s, "center", center);
                }
            }
            match &a.nonsmooth {
                NonsmoothPart::Zero { .. } => s.push_str("nonsmooth zero\n"),
                NonsmoothPart::L1 { weight, .. } => {
                    writeln!(s, "nonsmooth l1 {}", fmt_real(*weight)).unwrap()
                }
            }
        }
        s.push_str("end\n");
        s
    }

    /// Hex SHA-256 of [`Instance::to_text`], truncated to 16 characters.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_text(text: &str) -> Result<Instance> {
        let mut p = Lines::new(text);
        let magic = p.next_line()?;
        if magic != MAGIC {
            return Err(p.err(format!("expected '{MAGIC}'")));
        }
        let kind_name = p.keyword_value("kind")?;
        let n: usize = p.keyword_parse("agents")?;
        let dim: usize = p.keyword_parse("dim")?;
        let seed: u64 = p.keyword_parse("seed")?;
        let kind = match kind_name.as_str() {
            "lasso" => {
                let spa = p.param("samples_per_agent")?;
                let tau = p.param("tau")?;
                InstanceKind::Lasso {
                    samples_per_agent: p.parse_field(&spa)?,
                    tau: p.parse_field(&tau)?,
                }
            }
            "logistic" => {
                let spa = p.param("samples_per_agent")?;
                let ridge = p.param("ridge")?;
                InstanceKind::Logistic {
                    samples_per_agent: p.parse_field(&spa)?,
                    ridge: p.parse_field(&ridge)?,
                }
            }
            "quadratic" => InstanceKind::Quadratic,
            "custom" => InstanceKind::Custom,
            other => return Err(p.err(format!("unknown kind '{other}'"))),
        };
        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let idx: usize = p.keyword_parse("agent")?;
            if idx != i {
                return Err(p.err(format!("expected agent {i}, found {idx}")));
            }
            let smooth = p.smooth(dim)?;
            let nonsmooth = p.nonsmooth(dim)?;
            agents.push(AgentObjective { smooth, nonsmooth });
        }
        if p.next_line()? != "end" {
            return Err(p.err("expected 'end'"));
        }
        Ok(Instance {
            kind,
            seed,
            objective: CompositeObjective::new(agents)?,
        })
    }
}

struct Lines<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    lineno: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            lines: text.lines().enumerate(),
            lineno: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(format!("line {}", self.lineno), msg)
    }

    fn next_line(&mut self) -> Result<&'a str> {
        let (i, l) = self
            .lines
            .next()
            .ok_or_else(|| Error::parse("end of input", "unexpected end of instance file"))?;
        self.lineno = i + 1;
        Ok(l)
    }

    fn parse_field<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse()
            .map_err(|_| self.err(format!("cannot parse '{tok}'")))
    }

    fn keyword_value(&mut self, key: &str) -> Result<String> {
        let line = self.next_line()?;
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected '{key} ...'")))?;
        Ok(rest.to_string())
    }

    fn keyword_parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.keyword_value(key)?;
        self.parse_field(&v)
    }

    fn param(&mut self, name: &str) -> Result<String> {
        let v = self.keyword_value("param")?;
        let rest = v
            .strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected 'param {name} ...'")))?;
        Ok(rest.to_string())
    }

    fn reals(&mut self, prefix: Option<&str>, count: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let mut toks = line.split_whitespace();
        if let Some(pre) = prefix {
            if toks.next() != Some(pre) {
                return Err(self.err(format!("expected '{pre} ...'")));
            }
        }
        let vals = toks
            .map(|t| self.parse_field::<f64>(t))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != count {
            return Err(self.err(format!("expected {count} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn block(&mut self, rows: usize, cols: usize) -> Result<Stacked> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.reals(None, cols)?);
        }
        Stacked::from_vec(rows, cols, data)
    }

    fn smooth(&mut self, dim: usize) -> Result<SmoothPart> {
        let line = self.keyword_value("smooth")?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let part = match toks.as_slice() {
            ["zero"] => SmoothPart::Zero { dim },
            ["least_squares", rows, cols] => {
                let (rows, cols): (usize, usize) = (self.parse_field(rows)?, self.parse_field(cols)?);
                let a = self.block(rows, cols)?;
                let b = self.reals(Some("b"), rows)?;
                let lipschitz = self.keyword_parse("lipschitz")?;
                SmoothPart::LeastSquares { a, b, lipschitz }
            }
            ["logistic", rows, cols, ridge] => {
                let (rows, cols): (usize, usize) = (self.parse_field(rows)?, self.parse_field(cols)?);
                let ridge: f64 = self.parse_field(ridge)?;
                let features = self.block(rows, cols)?;
                let labels = self.reals(Some("labels"), rows)?;
                let lipschitz = self.keyword_parse("lipschitz")?;
                SmoothPart::Logistic {
                    features,
                    labels,
                    ridge,
                    lipschitz,
                }
            }
            ["quadratic"] => {
                let diag = self.reals(Some("diag"), dim)?;
                let center = self.reals(Some("center"), dim)?;
                SmoothPart::Quadratic { diag, center }
            }
            _ => return Err(self.err(format!("unknown smooth part '{line}'"))),
        };
        Ok(part)
    }

    fn nonsmooth(&mut self, dim: usize) -> Result<NonsmoothPart> {
        let line = self.keyword_value("nonsmooth")?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["zero"] => Ok(NonsmoothPart::Zero { dim }),
            ["l1", w] => Ok(NonsmoothPart::L1 {
                dim,
                weight: self.parse_field(w)?,
            }),
            _ => Err(self.err(format!("unknown nonsmooth part '{line}'"))),
        }
    }
}
