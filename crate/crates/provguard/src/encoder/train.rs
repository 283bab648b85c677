//! Contrastive training over augmented views.
//!
//! Each mini-batch takes two views of every graph (positives), treats every
//! other projection in the batch as a negative, and updates all encoder and
//! projection parameters by plain gradient descent.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{make_views, AugmentationPlan};
use crate::error::{Error, Result};
use crate::graph::ProvenanceGraph;
use crate::seed::{self, stream};

use super::loss::contrastive_loss;
use super::{EncoderModel, Gradients};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            tau: 0.5,
            epochs: 20,
            batch_size: 50,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Usage("learning rate must be positive".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Usage("temperature must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: EncoderModel,
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Loss and accumulated gradients for one batch of already-built views
/// (interleaved pair layout). This *is* the training objective; the train
/// loop differs only in where the views come from.
pub fn batch_objective(
    model: &EncoderModel,
    views: &[ProvenanceGraph],
    tau: f64,
) -> Result<(f64, Gradients)> {
    let mut traces = Vec::with_capacity(views.len());
    let mut projections = Vec::with_capacity(views.len());
    for view in views {
        let trace = model.forward(view)?;
        let ptrace = model.project_trace(&trace.graph_embedding);
        projections.push(ptrace.output.clone());
        traces.push((trace, ptrace));
    }
    let (loss, d_proj) = contrastive_loss(&projections, tau)?;
    let mut grads = Gradients::zeros_like(model);
    for ((trace, ptrace), dp) in traces.iter().zip(&d_proj) {
        model.backward(trace, ptrace, dp, &mut grads);
    }
    Ok((loss, grads))
}

/// Train a freshly initialized model on benign graphs. Deterministic given
/// the config seed: same inputs, same final weights, byte for byte.
pub fn train(
    graphs: &[ProvenanceGraph],
    plan: &AugmentationPlan,
    cfg: &TrainConfig,
    mut model: EncoderModel,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if graphs.len() < 2 {
        return Err(Error::Data(format!(
            "contrastive training needs at least 2 graphs, got {}",
            graphs.len()
        )));
    }
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..graphs.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive2(cfg.seed, stream::EPOCH, epoch as u64)));
        let mut batches: Vec<Vec<usize>> =
            order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect();
        // A singleton batch cannot form a contrastive objective.
        if batches.len() >= 2 && batches.last().is_some_and(|b| b.len() == 1) {
            let last = batches.pop().unwrap();
            batches.last_mut().unwrap().extend(last);
        }

        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in batches.iter().enumerate() {
            let mut views = Vec::with_capacity(batch.len() * 2);
            for &gi in batch {
                let vseed = seed::derive(
                    seed::derive2(plan.seed, stream::EPOCH, epoch as u64),
                    gi as u64,
                );
                views.extend(make_views(&graphs[gi], &plan.with_seed(vseed), 2)?);
            }
            let (loss, grads) = batch_objective(&model, &views, cfg.tau)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss} at epoch {epoch}, batch {batch_idx}"
                )));
            }
            model.apply_step(&grads, cfg.learning_rate);
            epoch_loss += loss;
        }
        loss_history.push(epoch_loss / batches.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        loss_history,
    })
}
