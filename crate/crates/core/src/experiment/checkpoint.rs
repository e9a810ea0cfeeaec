//! Plain-text model checkpoints.
//!
//! ```text
//! cluster-ssl-checkpoint 1
//! activation relu
//! layers 2
//! matrix 2 10
//! <row-major values, one row per line>
//! ...
//! encoder_weights / encoder_bias / centroids as matrices
//! ma_counter 120
//! observed 1 1
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a reload is exact.

use std::io::Write;

use crate::clustering::ClusteringModuleState;
use crate::error::{Error, Result};
use crate::math::DenseMatrix;
use crate::mlp::{Activation, Layer, MlpState};
use crate::trainer::Model;

const MAGIC: &str = "cluster-ssl-checkpoint 1";

fn write_matrix(m: &DenseMatrix, out: &mut impl Write) -> Result<()> {
    writeln!(out, "matrix {} {}", m.rows(), m.cols())?;
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(" "))?;
    }
    Ok(())
}

pub fn write_checkpoint(model: &Model, out: &mut impl Write) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    let act = match model.backbone.activation {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
    };
    writeln!(out, "activation {act}")?;
    writeln!(out, "layers {}", model.backbone.layers.len())?;
    for layer in &model.backbone.layers {
        write_matrix(&layer.weights, out)?;
        write_matrix(&layer.bias, out)?;
    }
    write_matrix(&model.cm.encoder_weights, out)?;
    write_matrix(&model.cm.encoder_bias, out)?;
    write_matrix(&model.cm.centroids, out)?;
    writeln!(out, "ma_counter {}", model.cm.ma_counter)?;
    let flags: Vec<&str> = model
        .cm
        .observed_flags()
        .iter()
        .map(|&f| if f { "1" } else { "0" })
        .collect();
    writeln!(out, "observed {}", flags.join(" "))?;
    Ok(())
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn bad(line: usize, what: impl std::fmt::Display) -> Error {
        Error::Argument(format!("checkpoint line {}: {what}", line + 1))
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .ok_or_else(|| Error::Argument("checkpoint truncated".into()))
    }

    /// Next line, which must start with `tag`; returns the remainder.
    fn tagged(&mut self, tag: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next()?;
        match line.strip_prefix(tag).and_then(|r| r.strip_prefix(' ')) {
            Some(rest) => Ok((n, rest)),
            None => Err(Self::bad(n, format!("expected `{tag}`"))),
        }
    }

    fn number<T: std::str::FromStr>(n: usize, s: &str) -> Result<T> {
        s.parse().map_err(|_| Self::bad(n, format!("cannot parse `{s}`")))
    }

    fn matrix(&mut self) -> Result<DenseMatrix> {
        let (n, dims) = self.tagged("matrix")?;
        let (r, c) = dims
            .split_once(' ')
            .ok_or_else(|| Self::bad(n, "expected `matrix ROWS COLS`"))?;
        let (rows, cols): (usize, usize) = (Self::number(n, r)?, Self::number(n, c)?);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, line) = self.next()?;
            let row: Vec<f64> = line.split(' ').map(|v| Self::number(n, v)).collect::<Result<_>>()?;
            if row.len() != cols {
                return Err(Self::bad(n, format!("expected {cols} values, found {}", row.len())));
            }
            data.extend(row);
        }
        DenseMatrix::from_vec(rows, cols, data)
    }
}

pub fn read_checkpoint(text: &str) -> Result<Model> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
    };
    let (n, first) = r.next()?;
    if first != MAGIC {
        return Err(Reader::bad(n, "not a checkpoint"));
    }
    let (n, act) = r.tagged("activation")?;
    let activation = match act {
        "relu" => Activation::Relu,
        "tanh" => Activation::Tanh,
        other => return Err(Reader::bad(n, format!("unknown activation `{other}`"))),
    };
    let (n, count) = r.tagged("layers")?;
    let count: usize = Reader::number(n, count)?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        layers.push(Layer {
            weights: r.matrix()?,
            bias: r.matrix()?,
        });
    }
    let backbone = MlpState::from_layers(layers, activation)?;
    let mut cm = ClusteringModuleState::from_parts(r.matrix()?, r.matrix()?, r.matrix()?)?;
    let (n, t) = r.tagged("ma_counter")?;
    let t = Reader::number(n, t)?;
    let (n, flags) = r.tagged("observed")?;
    let observed = flags
        .split(' ')
        .map(|f| match f {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Reader::bad(n, format!("bad flag `{other}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    cm.set_history(t, observed)?;
    Ok(Model { backbone, cm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{update_centroids, CentroidMode};
    use crate::rng::SeededRng;
    use crate::trainer::ModelConfig;

    #[test]
    fn reload_is_exact() {
        let mut rng = SeededRng::new(9);
        let mut model = Model::init(2, &ModelConfig::default(), &mut rng).unwrap();
        let feats = DenseMatrix::uniform(3, 2, -1.0, 1.0, &mut rng);
        update_centroids(&mut model.cm, &feats, &[1, 1, 1], CentroidMode::ClassMean).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        let back = read_checkpoint(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.cm.observed_flags(), &[false, true]);
    }

    #[test]
    fn damaged_checkpoint_names_the_line() {
        let model = Model::init(2, &ModelConfig::default(), &mut SeededRng::new(1)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("layers 4", "layers four", 1);
        let err = read_checkpoint(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(read_checkpoint("hello").is_err());
    }
}
