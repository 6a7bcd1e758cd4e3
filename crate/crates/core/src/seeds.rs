//! Deterministic sub-seed derivation.
//!
//! Every stochastic stage derives its own RNG seed from the single top-level
//! run seed, so replacing or reordering one stage never perturbs the draws of
//! another and single components can be re-synthesized in isolation.

/// Stream tag for the noise model used inside a scenario run.
pub const STREAM_NOISE: u64 = 0x4e4f_4953_0000_0001;
/// Stream tag for the photon-detection Poisson sampling.
pub const STREAM_PHOTONS: u64 = 0x5048_4f54_0000_0002;
/// Stream tag for the visibility random walk.
pub const STREAM_DRIFT: u64 = 0x4452_4946_0000_0003;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer; a single well-mixed step is enough to decorrelate
/// adjacent stream tags.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for a named sub-stream of `master`.
pub fn derive(master: u64, stream: u64) -> u64 {
    mix(master ^ stream.wrapping_mul(GOLDEN_GAMMA))
}

/// Seed for noise component `index`: the model seed XOR-folded with the
/// component index, then mixed.
pub fn component_seed(model_seed: u64, index: usize) -> u64 {
    derive(model_seed, index as u64)
}
