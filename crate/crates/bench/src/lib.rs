//! Shared inputs for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use oblivion_core::simprog::synth::{green_program, SynthParams};
use oblivion_core::simprog::{ProgramModel, WorkloadSpec};

pub const STEP_BUDGET: u64 = 10_000;

/// Deterministic corpus of programs with green baselines.
pub fn corpus(n: usize, params: &SynthParams) -> Vec<(ProgramModel, WorkloadSpec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    (0..n)
        .map(|_| green_program(&mut rng, params, STEP_BUDGET))
        .collect()
}

/// Larger programs than the default generator produces.
pub fn wide() -> SynthParams {
    SynthParams {
        max_methods: 12,
        max_statements: 10,
        ..SynthParams::default()
    }
}
