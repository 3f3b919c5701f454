//! Trajectory optimization over Gauss-Markov priors.
//!
//! The planning stack layers four pieces:
//!
//! * [`trajgp`] — constant-velocity GP priors over trajectories, Gaussian
//!   conditioning, and the quadratic smoothness cost;
//! * [`world`] — signed-distance collision fields, planar robots, and the
//!   obstacle / joint-limit costs with gradients;
//! * [`agd`] — accelerated gradient descent with a two-sided step-acceptance
//!   band, Lipschitz re-estimation on restart, and local-minimum detection;
//! * [`asto`] — adaptive stochastic trajectory sampling with EM rewarding and
//!   moving-average policy learning;
//!
//! orchestrated by [`planner`] (penalty outer loop, Lipschitz inner loop with
//! stochastic escapes, and incremental waypoint interpolation) and driven by
//! the scenario/benchmark layer ([`scenario`], [`bench`]).

pub mod agd;
pub mod asto;
pub mod bench;
pub mod error;
pub mod linalg;
pub mod objective;
pub mod parallel;
pub mod planner;
pub mod scenario;
pub mod trajectory;
pub mod trajgp;
pub mod world;

pub use error::{Error, Result};
pub use trajectory::Trajectory;

/// Deterministic seed derivation (splitmix64 over salted input) so benchmark
/// tuples get stable per-run streams regardless of sweep order.
pub fn derive_seed(master: u64, salt: &[u64]) -> u64 {
    let mut state = master ^ 0x9e37_79b9_7f4a_7c15;
    let mix = |mut z: u64| -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    state = mix(state);
    for &s in salt {
        state = mix(state.wrapping_add(s).wrapping_mul(0x2545_f491_4f6c_dd1d));
    }
    state
}

/// Stable hash of a string for seed salting.
pub fn hash_str(s: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}
