//! Differentiable gene regulatory networks.
//!
//! A GRN is a set of artificial proteins whose concentrations evolve by
//! mutual enhancement and inhibition determined by tag affinities. This
//! crate implements the recurrent concentration dynamics, exact
//! reverse-mode gradients of an MSE loss through the unrolled dynamics,
//! Adam training with box projection, a speciated genetic algorithm over
//! genomes, and the experiment harness that combines evolution with
//! learning on tabular regression data.

pub mod data;
pub mod dynamics;
pub mod evo;
pub mod genome;
pub mod grad;
pub mod harness;
pub mod optim;
pub mod testutil;

pub use genome::{Genome, GenomeError, Protein, ProteinKind};
