//! Adam with box projection, the mini-batch training loop, and MSE
//! evaluation.
//!
//! Gradients are computed in the unconstrained space; after every Adam
//! update each parameter is clipped back into its box (tags into `[0,1]`,
//! beta and delta into their configured ranges). Moments are not reset on
//! projection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{Dataset, Sample};
use crate::dynamics::Propagator;
use crate::genome::Genome;
use crate::grad::{loss_grad, ParamGrads};

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty vectors")]
    EmptyVectors,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: adam state holds {state} parameters, genome has {genome}")]
    ShapeMismatch { state: usize, genome: usize },
    #[error(transparent)]
    Grad(#[from] crate::grad::GradError),
}

/// Adam hyperparameters; defaults are the usual lr=0.001, b1=0.9, b2=0.999,
/// eps=1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub b1: f64,
    pub b2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 0.001, b1: 0.9, b2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(n_params: usize, hyper: AdamHyper) -> Self {
        AdamState { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0, hyper }
    }

    pub fn n_params(&self) -> usize {
        self.m.len()
    }
}

/// Box constraints for projection after each update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub tag_lo: f64,
    pub tag_hi: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub delta_lo: f64,
    pub delta_hi: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { tag_lo: 0.0, tag_hi: 1.0, beta_lo: 0.05, beta_hi: 2.0, delta_lo: 0.05, delta_hi: 2.0 }
    }
}

impl Bounds {
    /// (lo, hi) for flat parameter index `k` of a genome with `n` proteins.
    pub fn for_param(&self, k: usize, n: usize) -> (f64, f64) {
        if k < 3 * n {
            (self.tag_lo, self.tag_hi)
        } else if k == 3 * n {
            (self.beta_lo, self.beta_hi)
        } else {
            (self.delta_lo, self.delta_hi)
        }
    }
}

/// One Adam update with bias correction, then projection into the bounds.
pub fn adam_step(
    genome: &Genome,
    grads: &ParamGrads,
    st: &mut AdamState,
    bounds: &Bounds,
) -> Result<Genome, OptimError> {
    let n = genome.n();
    let flat = grads.to_flat();
    if flat.len() != st.n_params() {
        return Err(OptimError::ShapeMismatch { state: st.n_params(), genome: flat.len() });
    }
    st.t += 1;
    let AdamHyper { lr, b1, b2, eps } = st.hyper;
    let bc1 = 1.0 - b1.powi(st.t as i32);
    let bc2 = 1.0 - b2.powi(st.t as i32);
    let mut out = genome.clone();
    for (k, g) in flat.iter().enumerate() {
        st.m[k] = b1 * st.m[k] + (1.0 - b1) * g;
        st.v[k] = b2 * st.v[k] + (1.0 - b2) * g * g;
        let m_hat = st.m[k] / bc1;
        let v_hat = st.v[k] / bc2;
        let updated = genome.param(k) - lr * m_hat / (v_hat.sqrt() + eps);
        let (lo, hi) = bounds.for_param(k, n);
        out.set_param(k, updated.clamp(lo, hi));
    }
    Ok(out)
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64, OptimError> {
    if predictions.is_empty() {
        return Err(OptimError::EmptyVectors);
    }
    if predictions.len() != targets.len() {
        return Err(OptimError::LengthMismatch(predictions.len(), targets.len()));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Mean MSE of the genome over all rows, state reset per row. Never mutates
/// the genome.
pub fn evaluate(genome: &Genome, dataset: &Dataset, steps: usize) -> Result<f64, OptimError> {
    if dataset.rows.is_empty() {
        return Err(OptimError::EmptyDataset);
    }
    let prop = Propagator::new(genome);
    let mut total = 0.0;
    for row in &dataset.rows {
        let (out, _) = prop.run_counting(&row.features, steps);
        total += mse(&out, &row.target)?;
    }
    Ok(total / dataset.rows.len() as f64)
}

/// Mini-batch Adam training: per-epoch seeded reshuffle, last partial batch
/// included. Returns the trained genome and the per-epoch full-train-set MSE
/// curve; `epochs == 0` is the identity with an empty curve.
#[allow(clippy::too_many_arguments)]
pub fn train(
    genome: &Genome,
    train_set: &Dataset,
    epochs: usize,
    batch_size: usize,
    steps: usize,
    hyper: AdamHyper,
    bounds: &Bounds,
    rng_seed: u64,
) -> Result<(Genome, Vec<f64>), OptimError> {
    if train_set.rows.is_empty() {
        return Err(OptimError::EmptyDataset);
    }
    assert!(batch_size >= 1);
    let mut current = genome.clone();
    if epochs == 0 {
        return Ok((current, Vec::new()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut st = AdamState::new(genome.n_params(), hyper);
    let mut rows: Vec<Sample> = train_set.rows.clone();
    let mut curve = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        rows.shuffle(&mut rng);
        for batch in rows.chunks(batch_size) {
            let (_, grads) = loss_grad(&current, batch, steps)?;
            current = adam_step(&current, &grads, &mut st, bounds)?;
        }
        curve.push(evaluate(&current, train_set, steps)?);
    }
    Ok((current, curve))
}
