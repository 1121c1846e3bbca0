//! Feed-forward network mapping CQT context windows to shared interval
//! profiles.
//!
//! Hidden layers are rectifiers. The 19 output units are split into the
//! root, third and seventh segments, each normalized by its own softmax, and
//! the loss is the sum of the three segment cross-entropies.

mod adam;
mod io;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use io::{load_model, read_model, save_model, write_model, ModelIoError};
pub use train::{train, validation_accuracy, EpochRecord, TrainError};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::StandardizerStats;
use crate::hip::{Segment, Ship, PROFILE_LEN};

pub const DEFAULT_LAYER_SIZES: [usize; 5] = [2880, 1024, 512, 256, PROFILE_LEN];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlpError {
    #[error("non-finite input feature at index {0}")]
    NonFiniteInput(usize),
    #[error("input has {got} features, model expects {expected}")]
    InputSize { expected: usize, got: usize },
    #[error("invalid layer sizes {0:?}: need at least input and {PROFILE_LEN} outputs")]
    LayerSizes(Vec<usize>),
    #[error("batch size must be at least 1")]
    BatchSize,
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layer_sizes: Vec<usize>,
    pub batch_size: usize,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            layer_sizes: DEFAULT_LAYER_SIZES.to_vec(),
            batch_size: 512,
            patience_epochs: 20,
            max_epochs: 200,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 2 || sizes.contains(&0) || sizes.last() != Some(&PROFILE_LEN) {
            return Err(MlpError::LayerSizes(sizes.clone()));
        }
        if self.batch_size == 0 {
            return Err(MlpError::BatchSize);
        }
        Ok(())
    }
}

/// Weights are stored `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { weights: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    fn zeros_like(&self) -> Self {
        Layer { weights: Array2::zeros(self.weights.raw_dim()), bias: Array1::zeros(self.bias.len()) }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Per-layer parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    /// Every gradient entry, weights before biases, in layer order.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub stats: StandardizerStats,
    pub config: MlpConfig,
    pub history: Vec<EpochRecord>,
}

/// He-scaled Gaussian weights and zero biases, deterministic in the seed.
pub fn init_model(config: &MlpConfig, stats: StandardizerStats) -> Result<MlpModel, MlpError> {
    config.validate()?;
    if stats.dim() != config.layer_sizes[0] {
        return Err(MlpError::InputSize { expected: config.layer_sizes[0], got: stats.dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layers = config
        .layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let mut layer = Layer::zeros(fan_in, fan_out);
            for x in layer.weights.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = z * scale;
            }
            layer
        })
        .collect();
    Ok(MlpModel { layers, stats, config: config.clone(), history: Vec::new() })
}

/// Per-segment softmax of each row, in place.
fn grouped_softmax(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        for segment in Segment::ALL {
            let mut seg = row.slice_mut(s![segment.range()]);
            let max = seg.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            seg.mapv_inplace(|v| (v - max).exp());
            let sum = seg.sum();
            seg.mapv_inplace(|v| v / sum);
        }
    }
    logits
}

/// Sum of the three segment cross-entropies `-Σ t log p`.
pub fn loss(prediction: &Ship, target: &Ship) -> f64 {
    cross_entropy(prediction.values(), target.values())
}

fn cross_entropy(prediction: &[f64], target: &[f64]) -> f64 {
    prediction
        .iter()
        .zip(target)
        .filter(|(_, &t)| t > 0.0)
        .map(|(&p, &t)| -t * p.ln())
        .sum()
}

/// Mean loss over the rows of a prediction/target batch.
pub fn batch_loss(predictions: &Array2<f64>, targets: ArrayView2<f64>) -> f64 {
    let n = predictions.nrows() as f64;
    predictions
        .rows()
        .into_iter()
        .zip(targets.rows())
        .map(|(p, t)| cross_entropy(p.as_slice().unwrap(), &t.to_vec()))
        .sum::<f64>()
        / n
}

struct ForwardPass {
    /// Input followed by each hidden activation.
    activations: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl MlpModel {
    pub fn input_size(&self) -> usize {
        self.layers[0].inputs()
    }

    fn forward_pass(&self, inputs: ArrayView2<f64>) -> ForwardPass {
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = inputs.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.weights.t());
            z += &layer.bias;
            activations.push(current);
            if i == last {
                return ForwardPass { activations, output: grouped_softmax(z) };
            }
            z.mapv_inplace(|v| v.max(0.0));
            current = z;
        }
        unreachable!("model has at least one layer")
    }

    /// Output profiles for a batch of standardized inputs, one row each.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>, MlpError> {
        if inputs.ncols() != self.input_size() {
            return Err(MlpError::InputSize { expected: self.input_size(), got: inputs.ncols() });
        }
        if let Some(i) = inputs.iter().position(|v| !v.is_finite()) {
            return Err(MlpError::NonFiniteInput(i));
        }
        Ok(self.forward_pass(inputs).output)
    }

    /// Output profile for one standardized input.
    pub fn forward(&self, features: &[f64]) -> Result<Ship, MlpError> {
        let view = ArrayView2::from_shape((1, features.len()), features).expect("row shape");
        let out = self.forward_batch(view)?;
        Ok(row_to_ship(out.row(0).as_slice().unwrap()))
    }

    /// Standardizes raw CQT context windows, then runs the network.
    pub fn predict(&self, raw_features: &[f64]) -> Result<Ship, MlpError> {
        let x = self
            .stats
            .apply(raw_features)
            .map_err(|_| MlpError::InputSize { expected: self.stats.dim(), got: raw_features.len() })?;
        self.forward(&x)
    }

    /// Exact gradients of the mean batch loss, plus that loss.
    pub fn gradients(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(Gradients, f64), MlpError> {
        let n = inputs.nrows();
        if n == 0 {
            return Err(MlpError::EmptyBatch);
        }
        let pass = self.forward_pass(inputs);
        let loss = batch_loss(&pass.output, targets);
        // grouped softmax + cross-entropy: dL/dz = (p - t) / n per segment
        let mut delta = (&pass.output - &targets) / n as f64;
        let mut layers: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &pass.activations[i];
            let grad_w = delta.t().dot(input);
            let grad_b = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&layer.weights);
                // activations[i] is relu output of layer i-1
                ndarray::Zip::from(&mut back).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            layers.push(Layer { weights: grad_w, bias: grad_b });
        }
        layers.reverse();
        Ok((Gradients { layers }, loss))
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients { layers: self.layers.iter().map(Layer::zeros_like).collect() }
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

pub(crate) fn row_to_ship(row: &[f64]) -> Ship {
    let values: [f64; PROFILE_LEN] = row.try_into().expect("19 outputs");
    Ship::from_raw(values)
}
