//! Small helpers shared by unit, integration, and acceptance tests.

use rand::Rng;

use crate::genome::Genome;
use crate::optim::Bounds;

/// Random valid genome with the default bounds. Tags uniform in `[0,1]`,
/// beta/delta uniform within their boxes.
pub fn random_genome<R: Rng>(rng: &mut R, n_in: usize, n_out: usize, n_reg: usize) -> Genome {
    crate::evo::random_genome(rng, n_in, n_out, n_reg, &Bounds::default())
}
