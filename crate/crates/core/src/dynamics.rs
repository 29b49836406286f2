//! GRN concentration dynamics.
//!
//! Two implementations live here and must agree: a matrix form built on
//! precomputed affinity matrices (`Propagator`, used everywhere), and a
//! straight-line scalar form (`reference`) kept as an independent check.
//!
//! One update step, for non-input protein `i`:
//!
//! ```text
//! g_i = (1/N) sum_j c_j exp(-beta |enh_j - id_i|)
//! h_i = (1/N) sum_j c_j exp(-beta |inh_j - id_i|)
//! c_i <- max(0, c_i + delta (g_i - h_i))          then divide by sum
//! ```
//!
//! Input concentrations are set by the environment each step and output
//! proteins do not act as sources in the sums (their source concentration is
//! treated as zero). The divide-by-sum normalization runs before the state is
//! stored, so the recurrent state is always normalized.

use crate::genome::Genome;

/// Concentration vector, one entry per protein, inputs first.
#[derive(Debug, Clone, PartialEq)]
pub struct GrnState {
    pub concentrations: Vec<f64>,
}

/// Pairwise log-affinities and net signatures for a genome.
///
/// Row-major `n*n` layout: `a_plus[i*n + j] = -beta * |enh_j - id_i|`.
#[derive(Debug, Clone)]
pub struct SignatureSet {
    pub n: usize,
    pub a_plus: Vec<f64>,
    pub a_minus: Vec<f64>,
    /// Net signature `exp(a_plus) - exp(a_minus)`, each entry in (-1, 1).
    pub s: Vec<f64>,
}

pub fn compute_signatures(genome: &Genome) -> SignatureSet {
    let n = genome.n();
    let ps = genome.proteins();
    let beta = genome.beta;
    let mut a_plus = vec![0.0; n * n];
    let mut a_minus = vec![0.0; n * n];
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let ap = -beta * (ps[j].enh - ps[i].id).abs();
            let am = -beta * (ps[j].inh - ps[i].id).abs();
            a_plus[i * n + j] = ap;
            a_minus[i * n + j] = am;
            s[i * n + j] = ap.exp() - am.exp();
        }
    }
    SignatureSet { n, a_plus, a_minus, s }
}

/// Enhancing and inhibiting influences of the given concentration vector.
/// Sums run over every protein `j` of the supplied state; masking of output
/// sources is the caller's concern (`step` zeroes them first).
pub fn influence(state: &GrnState, sig: &SignatureSet, n: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(n, sig.n);
    debug_assert_eq!(n, state.concentrations.len());
    let inv_n = 1.0 / n as f64;
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for i in 0..n {
        let mut gi = 0.0;
        let mut hi = 0.0;
        for j in 0..n {
            let c = state.concentrations[j];
            gi += c * sig.a_plus[i * n + j].exp();
            hi += c * sig.a_minus[i * n + j].exp();
        }
        g[i] = gi * inv_n;
        h[i] = hi * inv_n;
    }
    (g, h)
}

/// Initial state: inputs at 0, non-input concentrations uniform so the
/// normalization invariant holds from the start.
pub fn reset(genome: &Genome) -> GrnState {
    let mut c = vec![0.0; genome.n()];
    let dynamic = genome.n_dynamic();
    if dynamic > 0 {
        let u = 1.0 / dynamic as f64;
        for ci in c.iter_mut().skip(genome.n_in()) {
            *ci = u;
        }
    }
    GrnState { concentrations: c }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: GrnState,
    /// True when the raw non-input concentrations summed to zero and the
    /// state was reset to uniform instead of divided.
    pub degenerate: bool,
}

/// Precomputed per-genome matrices for fast repeated stepping. The exp of
/// each affinity is genome-constant, so it is paid once per genome rather
/// than once per step.
#[derive(Debug, Clone)]
pub struct Propagator {
    n: usize,
    n_in: usize,
    n_out: usize,
    delta: f64,
    /// exp(a_plus), row-major.
    p: Vec<f64>,
    /// exp(a_minus), row-major.
    m: Vec<f64>,
}

impl Propagator {
    pub fn new(genome: &Genome) -> Self {
        let sig = compute_signatures(genome);
        let n = sig.n;
        let p = sig.a_plus.iter().map(|a| a.exp()).collect();
        let m = sig.a_minus.iter().map(|a| a.exp()).collect();
        Propagator { n, n_in: genome.n_in(), n_out: genome.n_out(), delta: genome.delta, p, m }
    }

    pub fn reset_state(&self) -> GrnState {
        let mut c = vec![0.0; self.n];
        let dynamic = self.n - self.n_in;
        if dynamic > 0 {
            let u = 1.0 / dynamic as f64;
            for ci in c.iter_mut().skip(self.n_in) {
                *ci = u;
            }
        }
        GrnState { concentrations: c }
    }

    pub fn step(&self, state: &GrnState, inputs: &[f64]) -> StepOutput {
        assert_eq!(inputs.len(), self.n_in);
        assert_eq!(state.concentrations.len(), self.n);
        let n = self.n;
        let mut entry = state.concentrations.clone();
        entry[..self.n_in].copy_from_slice(inputs);

        // Source vector: outputs do not influence other proteins.
        let mut src = entry.clone();
        for s in src.iter_mut().skip(self.n_in).take(self.n_out) {
            *s = 0.0;
        }

        let inv_n = 1.0 / n as f64;
        let mut next = entry.clone();
        let mut sum = 0.0;
        for i in self.n_in..n {
            let mut gi = 0.0;
            let mut hi = 0.0;
            for j in 0..n {
                gi += src[j] * self.p[i * n + j];
                hi += src[j] * self.m[i * n + j];
            }
            let gi = gi * inv_n;
            let hi = hi * inv_n;
            let pre = entry[i] + self.delta * (gi - hi);
            let raw = pre.max(0.0);
            next[i] = raw;
            sum += raw;
        }
        let dynamic = n - self.n_in;
        let degenerate = dynamic > 0 && sum <= 0.0;
        if degenerate {
            let u = 1.0 / dynamic as f64;
            for ci in next.iter_mut().skip(self.n_in) {
                *ci = u;
            }
        } else if dynamic > 0 {
            for ci in next.iter_mut().skip(self.n_in) {
                *ci /= sum;
            }
        }
        StepOutput { state: GrnState { concentrations: next }, degenerate }
    }

    /// Runs `steps` updates from the reset state with constant inputs and
    /// returns the output-protein concentrations plus the degenerate count.
    pub fn run_counting(&self, inputs: &[f64], steps: usize) -> (Vec<f64>, usize) {
        let mut state = self.reset_state();
        let mut degenerate = 0;
        for _ in 0..steps {
            let out = self.step(&state, inputs);
            if out.degenerate {
                degenerate += 1;
            }
            state = out.state;
        }
        let outputs = state.concentrations[self.n_in..self.n_in + self.n_out].to_vec();
        (outputs, degenerate)
    }
}

/// One dynamics step. Convenience wrapper that recomputes the signatures;
/// hot paths build a `Propagator` once per genome instead.
pub fn step(genome: &Genome, state: &GrnState, inputs: &[f64]) -> StepOutput {
    Propagator::new(genome).step(state, inputs)
}

/// Resets, applies `steps` updates with constant inputs, and returns the
/// output-protein concentrations.
pub fn run(genome: &Genome, inputs: &[f64], steps: usize) -> Vec<f64> {
    Propagator::new(genome).run_counting(inputs, steps).0
}

/// Straight-line scalar implementation of the same dynamics, kept
/// deliberately independent of `Propagator` as a cross-check oracle.
pub mod reference {
    use crate::genome::{Genome, ProteinKind};

    /// Full trajectory of concentration vectors, one per step, starting
    /// after the first update.
    pub fn trajectory(genome: &Genome, inputs: &[f64], steps: usize) -> Vec<Vec<f64>> {
        let ps = genome.proteins();
        let n = ps.len();
        let n_in = genome.n_in();
        assert_eq!(inputs.len(), n_in);

        let mut c = vec![0.0; n];
        let dynamic = n - n_in;
        if dynamic > 0 {
            for ci in c.iter_mut().skip(n_in) {
                *ci = 1.0 / dynamic as f64;
            }
        }

        let mut states = Vec::with_capacity(steps);
        for _ in 0..steps {
            for (ci, x) in c.iter_mut().zip(inputs) {
                *ci = *x;
            }
            let mut next = c.clone();
            let mut sum = 0.0;
            for i in 0..n {
                if ps[i].kind == ProteinKind::Input {
                    continue;
                }
                let mut g = 0.0;
                let mut h = 0.0;
                for j in 0..n {
                    if ps[j].kind == ProteinKind::Output {
                        continue;
                    }
                    g += c[j] * (-genome.beta * (ps[j].enh - ps[i].id).abs()).exp();
                    h += c[j] * (-genome.beta * (ps[j].inh - ps[i].id).abs()).exp();
                }
                g /= n as f64;
                h /= n as f64;
                let raw = (c[i] + genome.delta * (g - h)).max(0.0);
                next[i] = raw;
                sum += raw;
            }
            if dynamic > 0 {
                if sum <= 0.0 {
                    for (i, p) in ps.iter().enumerate() {
                        if p.kind != ProteinKind::Input {
                            next[i] = 1.0 / dynamic as f64;
                        }
                    }
                } else {
                    for (i, p) in ps.iter().enumerate() {
                        if p.kind != ProteinKind::Input {
                            next[i] /= sum;
                        }
                    }
                }
            }
            c = next;
            states.push(c.clone());
        }
        states
    }

    pub fn run(genome: &Genome, inputs: &[f64], steps: usize) -> Vec<f64> {
        let last = trajectory(genome, inputs, steps)
            .pop()
            .expect("steps >= 1");
        last[genome.n_in()..genome.n_in() + genome.n_out()].to_vec()
    }
}
