//! Plain-text checkpoint format.
//!
//! ```text
//! srda-checkpoint v1
//! net generator layers=2
//! layer in=2 out=32 activation=relu
//! layer in=32 out=16 activation=identity
//! segment generator.layer0.weight 2x32
//! <one line per matrix row: 16-digit hex IEEE-754 bit patterns>
//! ...
//! net classifier layers=1
//! ...
//! end
//! ```
//!
//! Values are stored as raw bit patterns, so a write/read round trip is
//! bit-exact.

use std::io::{BufRead, Write};

use super::Model;
use crate::error::{Result, SrdaError};
use crate::numeric::{Activation, Dense, LayeredNet, Matrix, ParamStore, Segment};

const MAGIC: &str = "srda-checkpoint v1";

pub fn write_checkpoint(model: &Model, mut sink: impl Write) -> Result<()> {
    writeln!(sink, "{MAGIC}")?;
    for (name, net) in [("generator", &model.generator), ("classifier", &model.classifier)] {
        writeln!(sink, "net {name} layers={}", net.layers().len())?;
        for l in net.layers() {
            writeln!(sink, "layer in={} out={} activation={}", l.inputs, l.outputs, l.activation.name())?;
        }
        for s in net.params().segments() {
            writeln!(sink, "segment {} {}x{}", s.name, s.values.rows(), s.values.cols())?;
            for row in s.values.row_iter() {
                let hex: Vec<String> = row.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
                writeln!(sink, "{}", hex.join(" "))?;
            }
        }
    }
    writeln!(sink, "end")?;
    Ok(())
}

pub fn checkpoint_string(model: &Model) -> String {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("checkpoint text is ASCII")
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.number += 1;
        match self.inner.next() {
            Some(line) => Ok(line?),
            None => Err(self.error("unexpected end of file")),
        }
    }

    fn error(&self, message: impl Into<String>) -> SrdaError {
        SrdaError::Checkpoint { line: self.number, message: message.into() }
    }
}

fn field<'a>(lines: &Lines<impl BufRead>, token: Option<&'a str>, key: &str) -> Result<&'a str> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| lines.error(format!("expected {key}=…")))
}

fn count(lines: &Lines<impl BufRead>, s: &str) -> Result<usize> {
    s.parse().map_err(|_| lines.error(format!("bad count {s:?}")))
}

fn read_net(lines: &mut Lines<impl BufRead>, expected: &str) -> Result<LayeredNet> {
    let header = lines.next()?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("net") || parts.next() != Some(expected) {
        return Err(lines.error(format!("expected `net {expected}`")));
    }
    let n_layers = count(lines, field(lines, parts.next(), "layers")?)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let line = lines.next()?;
        let mut p = line.split_whitespace();
        if p.next() != Some("layer") {
            return Err(lines.error("expected `layer`"));
        }
        let inputs = count(lines, field(lines, p.next(), "in")?)?;
        let outputs = count(lines, field(lines, p.next(), "out")?)?;
        let act = field(lines, p.next(), "activation")?;
        let activation = Activation::parse(act).ok_or_else(|| lines.error(format!("unknown activation {act:?}")))?;
        layers.push(Dense { inputs, outputs, activation });
    }
    let mut params = ParamStore::new();
    for _ in 0..2 * n_layers {
        let line = lines.next()?;
        let mut p = line.split_whitespace();
        if p.next() != Some("segment") {
            return Err(lines.error("expected `segment`"));
        }
        let name = p.next().ok_or_else(|| lines.error("missing segment name"))?.to_string();
        let shape = p.next().ok_or_else(|| lines.error("missing segment shape"))?;
        let (r, c) = shape.split_once('x').ok_or_else(|| lines.error(format!("bad shape {shape:?}")))?;
        let (rows, cols) = (count(lines, r)?, count(lines, c)?);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = lines.next()?;
            let before = data.len();
            for tok in row.split_whitespace() {
                let bits = u64::from_str_radix(tok, 16).map_err(|_| lines.error(format!("bad value {tok:?}")))?;
                data.push(f64::from_bits(bits));
            }
            if data.len() - before != cols {
                return Err(lines.error(format!("expected {cols} values, found {}", data.len() - before)));
            }
        }
        params.push(Segment::new(name, Matrix::from_vec(rows, cols, data)?));
    }
    LayeredNet::from_parts(layers, params).map_err(|e| lines.error(e.to_string()))
}

pub fn read_checkpoint(source: impl BufRead) -> Result<Model> {
    let mut lines = Lines { inner: source.lines(), number: 0 };
    if lines.next()? != MAGIC {
        return Err(lines.error(format!("missing `{MAGIC}` header")));
    }
    let generator = read_net(&mut lines, "generator")?;
    let classifier = read_net(&mut lines, "classifier")?;
    if lines.next()?.trim() != "end" {
        return Err(lines.error("expected `end`"));
    }
    Model::from_nets(generator, classifier)
}

pub fn save(model: &Model, path: impl AsRef<std::path::Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<std::path::Path>) -> Result<Model> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}
