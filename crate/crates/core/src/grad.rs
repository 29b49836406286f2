//! Reverse-mode differentiation of the MSE loss through the unrolled GRN
//! dynamics, with respect to every genome parameter (all tags, beta, delta).
//!
//! The computation graph is static for a given (genome size, unroll length),
//! so the backward pass is written by hand over a recorded forward tape
//! instead of going through a generic autodiff. Subgradient conventions:
//! `d|x|/dx = sign(x)` with `sign(0) = 0`, and the `max(0, .)` clamp passes
//! gradient only when the pre-clamp value was strictly positive. The
//! divide-by-sum normalization is differentiated with the exact quotient
//! rule.

use std::sync::Arc;

use thiserror::Error;

use crate::data::Sample;
use crate::genome::Genome;

#[derive(Debug, Error, PartialEq)]
pub enum GradError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("d_output length {got} does not match n_out {expected}")]
    ShapeMismatch { got: usize, expected: usize },
}

/// Gradients of a scalar loss with respect to every genome parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub d_id: Vec<f64>,
    pub d_enh: Vec<f64>,
    pub d_inh: Vec<f64>,
    pub d_beta: f64,
    pub d_delta: f64,
}

impl ParamGrads {
    pub fn zeros(n: usize) -> Self {
        ParamGrads {
            d_id: vec![0.0; n],
            d_enh: vec![0.0; n],
            d_inh: vec![0.0; n],
            d_beta: 0.0,
            d_delta: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.d_id.len()
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.d_id.iter_mut().zip(&other.d_id) {
            *a += b;
        }
        for (a, b) in self.d_enh.iter_mut().zip(&other.d_enh) {
            *a += b;
        }
        for (a, b) in self.d_inh.iter_mut().zip(&other.d_inh) {
            *a += b;
        }
        self.d_beta += other.d_beta;
        self.d_delta += other.d_delta;
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self
            .d_id
            .iter_mut()
            .chain(self.d_enh.iter_mut())
            .chain(self.d_inh.iter_mut())
        {
            *v *= factor;
        }
        self.d_beta *= factor;
        self.d_delta *= factor;
    }

    /// Flat layout matching `Genome::param`: ids, enhs, inhs, beta, delta.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.n() + 2);
        out.extend_from_slice(&self.d_id);
        out.extend_from_slice(&self.d_enh);
        out.extend_from_slice(&self.d_inh);
        out.push(self.d_beta);
        out.push(self.d_delta);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Genome-constant intermediates of the signature computation, shared by all
/// samples of a batch.
#[derive(Debug)]
pub struct GradCtx {
    n: usize,
    n_in: usize,
    n_out: usize,
    beta: f64,
    delta: f64,
    /// exp(-beta |enh_j - id_i|), row-major.
    p: Vec<f64>,
    /// exp(-beta |inh_j - id_i|), row-major.
    m: Vec<f64>,
    /// |enh_j - id_i| and its sign (sign(0) = 0).
    dplus: Vec<f64>,
    splus: Vec<f64>,
    dminus: Vec<f64>,
    sminus: Vec<f64>,
}

impl GradCtx {
    pub fn new(genome: &Genome) -> Self {
        let n = genome.n();
        let ps = genome.proteins();
        let beta = genome.beta;
        let mut ctx = GradCtx {
            n,
            n_in: genome.n_in(),
            n_out: genome.n_out(),
            beta,
            delta: genome.delta,
            p: vec![0.0; n * n],
            m: vec![0.0; n * n],
            dplus: vec![0.0; n * n],
            splus: vec![0.0; n * n],
            dminus: vec![0.0; n * n],
            sminus: vec![0.0; n * n],
        };
        for i in 0..n {
            for j in 0..n {
                let dp = ps[j].enh - ps[i].id;
                let dm = ps[j].inh - ps[i].id;
                ctx.dplus[i * n + j] = dp.abs();
                ctx.splus[i * n + j] = sign(dp);
                ctx.dminus[i * n + j] = dm.abs();
                ctx.sminus[i * n + j] = sign(dm);
                ctx.p[i * n + j] = (-beta * dp.abs()).exp();
                ctx.m[i * n + j] = (-beta * dm.abs()).exp();
            }
        }
        ctx
    }

    fn is_output(&self, i: usize) -> bool {
        i >= self.n_in && i < self.n_in + self.n_out
    }
}

#[derive(Debug, Clone)]
struct StepRecord {
    /// Entry state with output slots zeroed (the source vector of the sums).
    src: Vec<f64>,
    /// Scaled influences, only non-input rows meaningful.
    g: Vec<f64>,
    h: Vec<f64>,
    /// Pre-clamp values and clamped raw values, non-input slots.
    pre: Vec<f64>,
    raw: Vec<f64>,
    sum: f64,
    degenerate: bool,
    post: Vec<f64>,
}

/// Recorded forward trajectory: everything the backward pass needs.
#[derive(Debug)]
pub struct Tape {
    ctx: Arc<GradCtx>,
    inputs: Vec<f64>,
    initial: Vec<f64>,
    records: Vec<StepRecord>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Recomputes the forward pass from the recorded initial state and
    /// returns the final outputs. Must agree bitwise with the recorded run.
    pub fn replay(&self) -> Vec<f64> {
        let ctx = &self.ctx;
        let mut state = self.initial.clone();
        for _ in 0..self.records.len() {
            state = forward_step(ctx, &state, &self.inputs).post;
        }
        state[ctx.n_in..ctx.n_in + ctx.n_out].to_vec()
    }

    pub fn outputs(&self) -> Vec<f64> {
        let ctx = &self.ctx;
        let last = self
            .records
            .last()
            .map(|r| r.post.clone())
            .unwrap_or_else(|| self.initial.clone());
        last[ctx.n_in..ctx.n_in + ctx.n_out].to_vec()
    }
}

fn forward_step(ctx: &GradCtx, state: &[f64], inputs: &[f64]) -> StepRecord {
    let n = ctx.n;
    let inv_n = 1.0 / n as f64;
    let mut entry = state.to_vec();
    entry[..ctx.n_in].copy_from_slice(inputs);
    let mut src = entry.clone();
    for j in ctx.n_in..ctx.n_in + ctx.n_out {
        src[j] = 0.0;
    }
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut pre = vec![0.0; n];
    let mut raw = vec![0.0; n];
    let mut post = entry.clone();
    let mut sum = 0.0;
    for i in ctx.n_in..n {
        let mut gi = 0.0;
        let mut hi = 0.0;
        for j in 0..n {
            gi += src[j] * ctx.p[i * n + j];
            hi += src[j] * ctx.m[i * n + j];
        }
        let gi = gi * inv_n;
        let hi = hi * inv_n;
        g[i] = gi;
        h[i] = hi;
        let p = entry[i] + ctx.delta * (gi - hi);
        pre[i] = p;
        let r = p.max(0.0);
        raw[i] = r;
        sum += r;
    }
    let dynamic = n - ctx.n_in;
    let degenerate = dynamic > 0 && sum <= 0.0;
    if degenerate {
        let u = 1.0 / dynamic as f64;
        for ci in post.iter_mut().skip(ctx.n_in) {
            *ci = u;
        }
    } else if dynamic > 0 {
        for (i, ci) in post.iter_mut().enumerate().skip(ctx.n_in) {
            *ci = raw[i] / sum;
        }
    }
    StepRecord { src, g, h, pre, raw, sum, degenerate, post }
}

fn initial_state(ctx: &GradCtx) -> Vec<f64> {
    let n = ctx.n;
    let mut c = vec![0.0; n];
    let dynamic = n - ctx.n_in;
    if dynamic > 0 {
        let u = 1.0 / dynamic as f64;
        for ci in c.iter_mut().skip(ctx.n_in) {
            *ci = u;
        }
    }
    c
}

pub fn forward_with_ctx(ctx: Arc<GradCtx>, inputs: &[f64], steps: usize) -> (Vec<f64>, Tape) {
    assert_eq!(inputs.len(), ctx.n_in);
    let initial = initial_state(&ctx);
    let mut records = Vec::with_capacity(steps);
    let mut state = initial.clone();
    for _ in 0..steps {
        let rec = forward_step(&ctx, &state, inputs);
        state = rec.post.clone();
        records.push(rec);
    }
    let outputs = state[ctx.n_in..ctx.n_in + ctx.n_out].to_vec();
    (outputs, Tape { ctx, inputs: inputs.to_vec(), initial, records })
}

/// Runs the dynamics forward, recording everything the backward pass needs.
/// The outputs are bitwise identical to `dynamics::run` on the same
/// arguments.
pub fn forward_with_tape(genome: &Genome, inputs: &[f64], steps: usize) -> (Vec<f64>, Tape) {
    forward_with_ctx(Arc::new(GradCtx::new(genome)), inputs, steps)
}

/// Reverse pass: gradients of `sum_k d_output[k] * output[k]` with respect
/// to every genome parameter.
pub fn backward(tape: &Tape, genome: &Genome, d_output: &[f64]) -> Result<ParamGrads, GradError> {
    let ctx = &tape.ctx;
    let n = ctx.n;
    debug_assert_eq!(genome.n(), n);
    if d_output.len() != ctx.n_out {
        return Err(GradError::ShapeMismatch { got: d_output.len(), expected: ctx.n_out });
    }

    let mut grads = ParamGrads::zeros(n);
    let mut d_p = vec![0.0; n * n];
    let mut d_m = vec![0.0; n * n];
    let inv_n = 1.0 / n as f64;

    // Seed: gradient flows in through the output slots of the final state.
    let mut dc = vec![0.0; n];
    for (k, d) in d_output.iter().enumerate() {
        dc[ctx.n_in + k] = *d;
    }

    for rec in tape.records.iter().rev() {
        // Normalization: c_i = raw_i / sum. Quotient rule; a degenerate
        // (uniform-reset) step is constant in the parameters.
        let mut d_raw = vec![0.0; n];
        if !rec.degenerate {
            let sum = rec.sum;
            let mut dot = 0.0;
            for i in ctx.n_in..n {
                dot += dc[i] * rec.raw[i];
            }
            let dot_over_s2 = dot / (sum * sum);
            for i in ctx.n_in..n {
                d_raw[i] = dc[i] / sum - dot_over_s2;
            }
        }

        let mut d_entry = vec![0.0; n];
        let mut d_src = vec![0.0; n];
        for i in ctx.n_in..n {
            // Clamp: gradient passes only where pre > 0.
            if rec.pre[i] <= 0.0 {
                continue;
            }
            let dp = d_raw[i];
            if dp == 0.0 {
                continue;
            }
            d_entry[i] += dp;
            grads.d_delta += dp * (rec.g[i] - rec.h[i]);
            let dg = ctx.delta * dp;
            let dh = -ctx.delta * dp;
            for j in 0..n {
                let row = i * n + j;
                d_p[row] += inv_n * dg * rec.src[j];
                d_m[row] += inv_n * dh * rec.src[j];
                d_src[j] += inv_n * (dg * ctx.p[row] + dh * ctx.m[row]);
            }
        }

        // Source vector: output slots were zeroed (their gradient dies),
        // everything else aliases the entry state.
        for j in 0..n {
            if !ctx.is_output(j) {
                d_entry[j] += d_src[j];
            }
        }

        // Carry to the previous state. Input slots are overwritten by the
        // environment each step, so their gradient does not propagate.
        for d in d_entry.iter_mut().take(ctx.n_in) {
            *d = 0.0;
        }
        dc = d_entry;
    }

    // Fold the affinity-matrix gradients into tag, beta gradients:
    // P_ij = exp(-beta |enh_j - id_i|), and likewise for M with inh.
    let beta = ctx.beta;
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            let dp = d_p[row];
            if dp != 0.0 {
                let da = dp * ctx.p[row];
                grads.d_beta -= ctx.dplus[row] * da;
                let t = -beta * ctx.splus[row] * da;
                grads.d_enh[j] += t;
                grads.d_id[i] -= t;
            }
            let dm = d_m[row];
            if dm != 0.0 {
                let da = dm * ctx.m[row];
                grads.d_beta -= ctx.dminus[row] * da;
                let t = -beta * ctx.sminus[row] * da;
                grads.d_inh[j] += t;
                grads.d_id[i] -= t;
            }
        }
    }
    Ok(grads)
}

/// Mean-over-batch-and-output-dims MSE loss and its parameter gradients.
pub fn loss_grad(
    genome: &Genome,
    batch: &[Sample],
    steps: usize,
) -> Result<(f64, ParamGrads), GradError> {
    if batch.is_empty() {
        return Err(GradError::EmptyBatch);
    }
    let ctx = Arc::new(GradCtx::new(genome));
    let n_out = ctx.n_out;
    let denom = (n_out * batch.len()) as f64;
    let mut loss = 0.0;
    let mut grads = ParamGrads::zeros(genome.n());
    for sample in batch {
        let (out, tape) = forward_with_ctx(Arc::clone(&ctx), &sample.features, steps);
        let mut d_out = vec![0.0; n_out];
        for k in 0..n_out {
            let r = out[k] - sample.target[k];
            loss += r * r / denom;
            d_out[k] = 2.0 * r / denom;
        }
        let g = backward(&tape, genome, &d_out)?;
        grads.add_assign(&g);
    }
    Ok((loss, grads))
}

/// Batch MSE via forward passes only; the finite-difference side of the
/// gradient check.
fn batch_loss(genome: &Genome, batch: &[Sample], steps: usize) -> f64 {
    let prop = crate::dynamics::Propagator::new(genome);
    let n_out = genome.n_out();
    let denom = (n_out * batch.len()) as f64;
    let mut loss = 0.0;
    for sample in batch {
        let (out, _) = prop.run_counting(&sample.features, steps);
        for k in 0..n_out {
            let r = out[k] - sample.target[k];
            loss += r * r / denom;
        }
    }
    loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub n_checked: usize,
    pub n_skipped: usize,
}

/// Compares analytic gradients against central finite differences for every
/// parameter. Parameters within 2*epsilon of an |.| kink are skipped, as are
/// whole instances sitting too close to a clamp or normalization boundary
/// (the loss is not differentiable there and the comparison is meaningless).
pub fn grad_check(
    genome: &Genome,
    batch: &[Sample],
    steps: usize,
    epsilon: f64,
) -> Result<GradCheckReport, GradError> {
    assert!(epsilon > 0.0);
    let (_, analytic) = loss_grad(genome, batch, steps)?;
    let flat = analytic.to_flat();
    let n = genome.n();

    // Boundary diagnostics from an unperturbed forward pass.
    let ctx = Arc::new(GradCtx::new(genome));
    let mut min_abs_pre = f64::INFINITY;
    let mut min_sum = f64::INFINITY;
    for sample in batch {
        let (_, tape) = forward_with_ctx(Arc::clone(&ctx), &sample.features, steps);
        for rec in &tape.records {
            for i in genome.n_in()..n {
                min_abs_pre = min_abs_pre.min(rec.pre[i].abs());
            }
            min_sum = min_sum.min(rec.sum);
        }
    }
    let clamp_adjacent = min_abs_pre < 20.0 * epsilon || min_sum < 1e-3;

    let kink_adjacent = |k: usize| -> bool {
        if clamp_adjacent {
            return true;
        }
        let near = 2.0 * epsilon;
        if k < n {
            // id_i appears in row i; input rows are never used.
            let i = k;
            if genome.is_input(i) {
                return false;
            }
            (0..n).any(|j| ctx.dplus[i * n + j] < near || ctx.dminus[i * n + j] < near)
        } else if k < 2 * n {
            let j = k - n;
            (genome.n_in()..n).any(|i| ctx.dplus[i * n + j] < near)
        } else if k < 3 * n {
            let j = k - 2 * n;
            (genome.n_in()..n).any(|i| ctx.dminus[i * n + j] < near)
        } else {
            // beta and delta are smooth away from clamp boundaries.
            false
        }
    };

    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    let mut n_checked = 0usize;
    let mut n_skipped = 0usize;
    for k in 0..genome.n_params() {
        if kink_adjacent(k) {
            n_skipped += 1;
            continue;
        }
        let base = genome.param(k);
        let mut plus = genome.clone();
        plus.set_param(k, base + epsilon);
        let mut minus = genome.clone();
        minus.set_param(k, base - epsilon);
        let fd = (batch_loss(&plus, batch, steps) - batch_loss(&minus, batch, steps))
            / (2.0 * epsilon);
        let a = flat[k];
        let err = (a - fd).abs();
        let rel = if err <= 1e-8 {
            0.0
        } else {
            err / a.abs().max(fd.abs())
        };
        max_rel = max_rel.max(rel);
        sum_rel += rel;
        n_checked += 1;
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        mean_rel_error: if n_checked > 0 { sum_rel / n_checked as f64 } else { 0.0 },
        n_checked,
        n_skipped,
    })
}
