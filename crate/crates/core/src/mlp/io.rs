//! `SHIP-DNN` model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "SHIP-DNN" | version u32
//! n_sizes u32 | layer sizes u32 * n_sizes
//! batch_size u32 | patience u32 | max_epochs u32 | seed u64
//! learning_rate f64 | beta1 f64 | beta2 f64 | epsilon f64
//! stats_dim u32 | mean f64 * dim | std f64 * dim
//! per layer: weights f64 * (out * in), row-major | bias f64 * out
//! n_epochs u32 | per epoch: epoch u32 | train_loss f64 | val_accuracy f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use super::{AdamConfig, EpochRecord, Layer, MlpConfig, MlpModel};
use crate::features::StandardizerStats;

const MAGIC: &[u8; 8] = b"SHIP-DNN";
const VERSION: u32 = 1;
/// Upper bound on any declared size, so corrupt headers fail before allocating.
const MAX_DIM: u32 = 1 << 24;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    Magic,
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) -> std::io::Result<()> {
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> std::io::Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf)?;
        Ok(buf)
    }
    fn u32(&mut self) -> std::io::Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn dim(&mut self) -> Result<usize, ModelIoError> {
        let v = self.u32()?;
        if v > MAX_DIM {
            return Err(ModelIoError::Shape(format!("declared size {v} is implausible")));
        }
        Ok(v as usize)
    }
    fn u64(&mut self) -> std::io::Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> std::io::Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64s(&mut self, n: usize) -> std::io::Result<Vec<f64>> {
        let mut raw = vec![0u8; n * 8];
        self.0.read_exact(&mut raw)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn write_model<W: Write>(out: W, model: &MlpModel) -> Result<(), ModelIoError> {
    let mut w = Writer(out);
    w.0.write_all(MAGIC)?;
    w.u32(VERSION)?;
    let c = &model.config;
    w.u32(c.layer_sizes.len() as u32)?;
    for &s in &c.layer_sizes {
        w.u32(s as u32)?;
    }
    w.u32(c.batch_size as u32)?;
    w.u32(c.patience_epochs as u32)?;
    w.u32(c.max_epochs as u32)?;
    w.u64(c.seed)?;
    w.f64(c.adam.learning_rate)?;
    w.f64(c.adam.beta1)?;
    w.f64(c.adam.beta2)?;
    w.f64(c.adam.epsilon)?;
    w.u32(model.stats.dim() as u32)?;
    w.f64s(&model.stats.mean)?;
    w.f64s(&model.stats.std)?;
    for layer in &model.layers {
        // iter() walks logical row-major order regardless of memory layout
        w.f64s(layer.weights.iter())?;
        w.f64s(layer.bias.iter())?;
    }
    w.u32(model.history.len() as u32)?;
    for r in &model.history {
        w.u32(r.epoch as u32)?;
        w.f64(r.train_loss)?;
        w.f64(r.val_accuracy)?;
    }
    w.0.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<MlpModel, ModelIoError> {
    let mut r = Reader(input);
    if &r.bytes::<8>()? != MAGIC {
        return Err(ModelIoError::Magic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ModelIoError::Version(version));
    }
    let n_sizes = r.dim()?;
    let layer_sizes = (0..n_sizes).map(|_| r.dim()).collect::<Result<Vec<_>, _>>()?;
    let config = MlpConfig {
        layer_sizes,
        batch_size: r.u32()? as usize,
        patience_epochs: r.u32()? as usize,
        max_epochs: r.u32()? as usize,
        seed: r.u64()?,
        adam: AdamConfig {
            learning_rate: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            epsilon: r.f64()?,
        },
    };
    config.validate().map_err(|e| ModelIoError::Shape(e.to_string()))?;
    let dim = r.dim()?;
    if dim != config.layer_sizes[0] {
        return Err(ModelIoError::Shape(format!(
            "standardizer has {dim} dimensions but the input layer has {}",
            config.layer_sizes[0]
        )));
    }
    let stats = StandardizerStats { mean: r.f64s(dim)?, std: r.f64s(dim)? };
    let mut layers = Vec::with_capacity(n_sizes - 1);
    for w in config.layer_sizes.windows(2) {
        let (inputs, outputs) = (w[0], w[1]);
        let weights = Array2::from_shape_vec((outputs, inputs), r.f64s(outputs * inputs)?)
            .map_err(|e| ModelIoError::Shape(e.to_string()))?;
        let bias = Array1::from(r.f64s(outputs)?);
        layers.push(Layer { weights, bias });
    }
    let n_epochs = r.dim()?;
    let mut history = Vec::with_capacity(n_epochs);
    for _ in 0..n_epochs {
        history.push(EpochRecord {
            epoch: r.u32()? as usize,
            train_loss: r.f64()?,
            val_accuracy: r.f64()?,
        });
    }
    Ok(MlpModel { layers, stats, config, history })
}

pub fn save_model(path: impl AsRef<Path>, model: &MlpModel) -> Result<(), ModelIoError> {
    let file = std::fs::File::create(path)?;
    write_model(std::io::BufWriter::new(file), model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel, ModelIoError> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}
