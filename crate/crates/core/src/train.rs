//! Full-batch gradient descent for small desk-scale models.

use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::model::{log_sum_exp, softmax, Activation, LayerSpec, Model, ModelError};
use crate::rng::rng_from_seed;
use crate::tensor::argmax;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset carries neither labels nor targets for every example")]
    MissingSupervision,
    #[error("architecture needs at least an input and an output width")]
    BadArchitecture,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Layer widths and activations of a toy MLP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl ArchSpec {
    pub fn new(sizes: Vec<usize>, hidden: Activation, output: Activation) -> Self {
        Self {
            sizes,
            hidden,
            output,
        }
    }

    pub fn initialize(&self, seed: u64) -> Result<Model, TrainError> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(TrainError::BadArchitecture);
        }
        Ok(Model::init_mlp(
            &self.sizes,
            self.hidden,
            self.output,
            &mut rng_from_seed(seed),
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Cross-entropy on labels. Outputs are treated as logits unless the model ends in softmax.
    Classification,
    /// Squared error `‖f(x) − y‖²` on targets.
    Regression,
}

impl Task {
    pub fn infer(dataset: &Dataset) -> Result<Self, TrainError> {
        if dataset.has_labels() {
            Ok(Task::Classification)
        } else if dataset.has_targets() {
            Ok(Task::Regression)
        } else {
            Err(TrainError::MissingSupervision)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub task: Task,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Training accuracy, classification only.
    pub accuracy: Option<f64>,
}

/// Trains a freshly initialized `arch` on `dataset` with full-batch gradient descent.
pub fn train_toy(
    arch: &ArchSpec,
    dataset: &Dataset,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let task = Task::infer(dataset)?;
    let mut model = arch.initialize(seed)?;
    dataset.validate(model.input_dim(), model.output_dim())?;

    let (initial_loss, _) =
        loss_and_grads(&model, dataset, task, false).map_err(|e| diverged(e, 0))?;
    if !initial_loss.is_finite() {
        return Err(TrainError::Diverged {
            epoch: 0,
            loss: initial_loss,
        });
    }
    let mut final_loss = initial_loss;
    for epoch in 0..epochs {
        let (loss, grads) =
            loss_and_grads(&model, dataset, task, true).map_err(|e| diverged(e, epoch))?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss });
        }
        for (layer, grad) in model.layers_mut().iter_mut().zip(grads) {
            if let (LayerSpec::Dense(d), Some((gw, gb))) = (layer, grad) {
                for (w, g) in d.weights.iter_mut().zip(gw) {
                    *w -= lr * g;
                }
                for (b, g) in d.bias.iter_mut().zip(gb) {
                    *b -= lr * g;
                }
            }
        }
        let (after, _) =
            loss_and_grads(&model, dataset, task, false).map_err(|e| diverged(e, epoch))?;
        if !after.is_finite() {
            return Err(TrainError::Diverged { epoch, loss: after });
        }
        final_loss = after;
    }
    let accuracy = match task {
        Task::Classification => Some(accuracy(&model, dataset)?),
        Task::Regression => None,
    };
    Ok(TrainOutcome {
        model,
        task,
        initial_loss,
        final_loss,
        accuracy,
    })
}

fn diverged(e: ModelError, epoch: usize) -> TrainError {
    match e {
        ModelError::NonFinite { .. } => TrainError::Diverged {
            epoch,
            loss: f64::NAN,
        },
        other => TrainError::Model(other),
    }
}

/// Fraction of labelled examples whose argmax output equals the label.
pub fn accuracy(model: &Model, dataset: &Dataset) -> Result<f64, ModelError> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for e in &dataset.examples {
        if let Some(label) = e.label {
            total += 1;
            if argmax(&model.forward(&e.x)?) == label {
                hits += 1;
            }
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    })
}

type LayerGrad = Option<(Vec<f64>, Vec<f64>)>;

/// Mean loss over the dataset and, when requested, its parameter gradient.
fn loss_and_grads(
    model: &Model,
    dataset: &Dataset,
    task: Task,
    with_grads: bool,
) -> Result<(f64, Vec<LayerGrad>), ModelError> {
    let n = dataset.len() as f64;
    let mut grads: Vec<LayerGrad> = model
        .layers()
        .iter()
        .map(|l| match l {
            LayerSpec::Dense(d) => Some((vec![0.0; d.weights.len()], vec![0.0; d.bias.len()])),
            LayerSpec::Activation(_) => None,
        })
        .collect();
    let probs_out = model.ends_with_softmax();
    let mut total = 0.0;
    for e in &dataset.examples {
        let trace = model.trace(&e.x)?;
        let out = trace.last().expect("trace holds the input");
        let (loss, mut g) = match task {
            Task::Classification => {
                let label = e.label.expect("classification examples carry labels");
                if probs_out {
                    let p = out[label].max(f64::MIN_POSITIVE);
                    let mut g = vec![0.0; out.len()];
                    g[label] = -1.0 / p;
                    (-p.ln(), g)
                } else {
                    let mut g = softmax(out);
                    g[label] -= 1.0;
                    (log_sum_exp(out) - out[label], g)
                }
            }
            Task::Regression => {
                let y = e
                    .target
                    .as_ref()
                    .expect("regression examples carry targets");
                let diff: Vec<f64> = out.iter().zip(y).map(|(a, b)| a - b).collect();
                let loss = diff.iter().map(|d| d * d).sum();
                (loss, diff.into_iter().map(|d| 2.0 * d).collect())
            }
        };
        total += loss;
        if !with_grads {
            continue;
        }
        for (i, layer) in model.layers().iter().enumerate().rev() {
            if let (LayerSpec::Dense(d), Some((gw, gb))) = (layer, grads[i].as_mut()) {
                let input = &trace[i];
                for (r, &gr) in g.iter().enumerate() {
                    gb[r] += gr / n;
                    let row = &mut gw[r * d.in_dim()..(r + 1) * d.in_dim()];
                    for (w, xi) in row.iter_mut().zip(input) {
                        *w += gr * xi / n;
                    }
                }
            }
            if i > 0 {
                g = layer.cotangent(&trace[i], &trace[i + 1], &g);
            }
        }
    }
    Ok((total / n, grads))
}
