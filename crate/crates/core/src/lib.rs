//! Dialog-act negotiation engine with learned dialog managers and
//! first-order theory-of-mind lookahead policies.

pub mod environment;
pub mod features;
pub mod managers;
pub mod neural;
pub mod generator;
pub mod harness;
pub mod ontology;
pub mod parser;
pub mod populations;
pub mod rollout;
pub mod tom;

/// Random generator used for every simulation stream.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Independent stream seed for item `index` of a run seeded with `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
