use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{init_model, row_to_ship, AdamState, MlpConfig, MlpError, MlpModel};
use crate::features::StandardizerStats;
use crate::hip::Segment;

/// Improvements at or below this margin do not reset the patience counter.
const IMPROVEMENT_MARGIN: f64 = 1e-6;
const INFERENCE_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] MlpError),
    #[error("training loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("features have {features} rows but targets have {targets}")]
    RowMismatch { features: usize, targets: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// Mean per-segment argmax agreement between predictions and targets.
pub fn validation_accuracy(
    model: &MlpModel,
    features: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<f64, TrainError> {
    if features.nrows() == 0 {
        return Err(TrainError::EmptySet("validation"));
    }
    check_rows(features, targets)?;
    let mut hits = 0usize;
    for start in (0..features.nrows()).step_by(INFERENCE_CHUNK) {
        let end = (start + INFERENCE_CHUNK).min(features.nrows());
        let out = model.forward_batch(features.slice(ndarray::s![start..end, ..]))?;
        for (p, t) in out.rows().into_iter().zip(targets.slice(ndarray::s![start..end, ..]).rows()) {
            let p = row_to_ship(p.as_slice().unwrap());
            let t = row_to_ship(&t.to_vec());
            hits += Segment::ALL.iter().filter(|&&s| p.argmax(s) == t.argmax(s)).count();
        }
    }
    Ok(hits as f64 / (3 * features.nrows()) as f64)
}

fn check_rows(features: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(), TrainError> {
    if features.nrows() != targets.nrows() {
        return Err(TrainError::RowMismatch { features: features.nrows(), targets: targets.nrows() });
    }
    Ok(())
}

/// Mini-batch Adam training with early stopping on validation accuracy.
///
/// `train_x`/`val_x` must already be standardized with `stats`. The returned
/// model carries the parameters of the best validation epoch and the full
/// per-epoch history.
pub fn train(
    train_x: ArrayView2<f64>,
    train_t: ArrayView2<f64>,
    val_x: ArrayView2<f64>,
    val_t: ArrayView2<f64>,
    config: &MlpConfig,
    stats: StandardizerStats,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<MlpModel, TrainError> {
    if train_x.nrows() == 0 {
        return Err(TrainError::EmptySet("training"));
    }
    if val_x.nrows() == 0 {
        return Err(TrainError::EmptySet("validation"));
    }
    check_rows(train_x, train_t)?;
    check_rows(val_x, val_t)?;

    let mut model = init_model(config, stats)?;
    let mut adam = AdamState::new(&model);
    // separate stream from initialization so batch order does not depend on model size
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_4950);
    let mut order: Vec<usize> = (0..train_x.nrows()).collect();
    let mut best: Option<(f64, Vec<super::Layer>)> = None;
    let mut stale = 0usize;
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x: Array2<f64> = train_x.select(Axis(0), batch);
            let t: Array2<f64> = train_t.select(Axis(0), batch);
            let (grads, loss) = model.gradients(x.view(), t.view())?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut model, &grads);
        }
        if !model.is_finite() {
            return Err(TrainError::Diverged { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_x.nrows() as f64,
            val_accuracy: validation_accuracy(&model, val_x, val_t)?,
        };
        on_epoch(&record);
        history.push(record);

        match &best {
            Some((acc, _)) if record.val_accuracy <= acc + IMPROVEMENT_MARGIN => stale += 1,
            _ => {
                best = Some((record.val_accuracy, model.layers.clone()));
                stale = 0;
            }
        }
        if stale >= config.patience_epochs {
            break;
        }
    }

    if let Some((_, layers)) = best {
        model.layers = layers;
    }
    model.history = history;
    Ok(model)
}
