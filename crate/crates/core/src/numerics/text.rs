//! Line-oriented text encoding for tensors and networks.
//!
//! ```text
//! mlp layers=2 slope=3e-1
//! tensor 4 1
//! 1.25e-1
//! ...
//! tensor 4
//! 0e0 0e0 0e0 0e0
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip exponent formatting, so a value
//! parsed back is bit-identical to the one written.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::{Layer, Mlp, Tensor};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_tensor(out: &mut String, t: &Tensor) {
    out.push_str("tensor");
    for d in t.shape() {
        let _ = write!(out, " {d}");
    }
    out.push('\n');
    let cols = t.cols().max(1);
    if t.is_empty() {
        return;
    }
    for row in t.data().chunks(cols) {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn write_mlp(out: &mut String, net: &Mlp) {
    let _ = writeln!(
        out,
        "mlp layers={} slope={}",
        net.layers().len(),
        fmt_f64(net.slope())
    );
    for layer in net.layers() {
        write_tensor(out, &layer.weight);
        write_tensor(out, &layer.bias);
    }
}

impl Mlp {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        write_mlp(&mut s, self);
        s
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut r = TextReader::new(text, source);
        let net = r.read_mlp()?;
        r.expect_end()?;
        Ok(net)
    }
}

/// Cursor over the lines of a text document, tracking line numbers for errors.
pub struct TextReader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
    source: String,
}

impl<'a> TextReader<'a> {
    pub fn new(text: &'a str, source: &str) -> Self {
        Self {
            lines: text.lines().collect(),
            pos: 0,
            source: source.to_string(),
        }
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(self.source.clone(), self.pos.max(1), message)
    }

    pub fn next_line(&mut self) -> Result<&'a str> {
        let line = self.lines.get(self.pos).copied().ok_or_else(|| {
            Error::parse(self.source.clone(), self.pos + 1, "unexpected end of file")
        })?;
        self.pos += 1;
        Ok(line)
    }

    pub fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.lines.len() {
            return Err(Error::parse(
                self.source.clone(),
                self.pos + 1,
                "trailing content",
            ));
        }
        Ok(())
    }

    /// Reads `<keyword> <fields...>` and returns the fields.
    pub fn header(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.error(format!("expected `{keyword}` header, found `{line}`")));
        }
        Ok(parts.collect())
    }

    /// Value of `key=value` among header fields.
    pub fn field(&self, fields: &[&'a str], key: &str) -> Result<&'a str> {
        fields
            .iter()
            .find_map(|&f: &&'a str| f.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| self.error(format!("missing field `{key}`")))
    }

    pub fn parse_f64(&self, s: &str) -> Result<f64> {
        let v: f64 = s
            .parse()
            .map_err(|_| self.error(format!("invalid number `{s}`")))?;
        if !v.is_finite() {
            return Err(self.error(format!("non-finite value `{s}`")));
        }
        Ok(v)
    }

    pub fn parse_usize(&self, s: &str) -> Result<usize> {
        s.parse()
            .map_err(|_| self.error(format!("invalid integer `{s}`")))
    }

    pub fn read_tensor(&mut self) -> Result<Tensor> {
        let fields = self.header("tensor")?;
        let shape = fields
            .iter()
            .map(|f| self.parse_usize(f))
            .collect::<Result<Vec<_>>>()?;
        let probe = Tensor::zeros(&shape);
        let (rows, cols) = (probe.rows(), probe.cols());
        let mut data = Vec::with_capacity(probe.len());
        if !probe.is_empty() {
            for _ in 0..rows {
                let line = self.next_line()?;
                let before = data.len();
                for tok in line.split_whitespace() {
                    data.push(self.parse_f64(tok)?);
                }
                if data.len() - before != cols {
                    return Err(self.error(format!(
                        "expected {cols} values, found {}",
                        data.len() - before
                    )));
                }
            }
        }
        Tensor::new(shape, data).map_err(|e| self.error(e.to_string()))
    }

    pub fn read_mlp(&mut self) -> Result<Mlp> {
        let fields = self.header("mlp")?;
        let n = self.parse_usize(self.field(&fields, "layers")?)?;
        let slope = self.parse_f64(self.field(&fields, "slope")?)?;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let weight = self.read_tensor()?;
            let bias = self.read_tensor()?;
            layers.push(Layer::new(weight, bias).map_err(|e| self.error(e.to_string()))?);
        }
        Mlp::new(layers, slope).map_err(|e| self.error(e.to_string()))
    }
}
