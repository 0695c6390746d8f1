//! Measurement: error rates and hypothesis selection, logit ensembles, and
//! loss along the straight line between two checkpoints.

mod wer;

pub use wer::{
    apply_selection, confidence_select, edit_distance, error_rate, oracle_select, parse_references,
    read_references, selection_error_rate, EditCounts, Hypothesis, HypothesisSet, OracleResult,
    References, Selection, Unit,
};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{argmax, cross_entropy, forward, interpolate, loss, Checkpoint, Dataset, Evaluation};
use crate::report::fmt_sig;

/// Classifies by the argmax of the unweighted mean of every model's logits.
pub fn ensemble_logits(models: &[Checkpoint], data: &Dataset) -> Result<Evaluation> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble needs at least one model".into()))?;
    for m in models {
        if m.input_dim() != first.input_dim() || m.output_dim() != first.output_dim() {
            return Err(Error::SpecMismatch("ensemble members differ in input or output width".into()));
        }
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.feature_dim() != first.input_dim() || data.num_classes() != first.output_dim() {
        return Err(Error::SpecMismatch("dataset does not match ensemble dimensions".into()));
    }
    let k = models.len() as f64;
    let mut total = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let x = data.sample(i);
        let mut mean = vec![0.0; first.output_dim()];
        for m in models {
            for (acc, z) in mean.iter_mut().zip(forward(m, x)?) {
                *acc += z;
            }
        }
        mean.iter_mut().for_each(|v| *v /= k);
        let y = data.labels()[i];
        total += cross_entropy(&mean, y);
        if argmax(&mean) == y {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        loss: total / n,
        accuracy: correct as f64 / n,
    })
}

/// Loss sampled along `θ(α) = (1 − α)·θ₀ + α·θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeCurve {
    pub alphas: Vec<f64>,
    pub losses: Vec<f64>,
}

pub const DEFAULT_LANDSCAPE_POINTS: usize = 21;

impl LandscapeCurve {
    /// `alpha,loss` rows under a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,loss\n");
        for (a, l) in self.alphas.iter().zip(&self.losses) {
            s.push_str(&format!("{},{}\n", fmt_sig(*a), fmt_sig(*l)));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Evaluates the loss on a uniform grid of `num_points` alphas from 0 to 1.
pub fn landscape(
    theta0: &Checkpoint,
    theta: &Checkpoint,
    data: &Dataset,
    num_points: usize,
) -> Result<LandscapeCurve> {
    if num_points < 2 {
        return Err(Error::InvalidArgument("landscape needs at least two points".into()));
    }
    theta0.ensure_same_specs(theta)?;
    let last = (num_points - 1) as f64;
    let alphas: Vec<f64> = (0..num_points).map(|i| i as f64 / last).collect();
    let losses = alphas
        .iter()
        .map(|&a| loss(&interpolate(theta0, theta, a)?, data))
        .collect::<Result<Vec<_>>>()?;
    Ok(LandscapeCurve { alphas, losses })
}
