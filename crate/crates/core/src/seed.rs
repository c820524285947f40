//! Seed handling shared by every stochastic component.
//!
//! All randomness flows from explicit `u64` seeds. Subsystems derive child
//! seeds with [`derive_seed`], which XORs the parent seed with a stable
//! 64-bit FNV-1a hash of a subsystem tag. The generator behind every seed is
//! ChaCha8, so streams are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

/// Builds the crate's generator from a seed.
pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable 64-bit FNV-1a hash of a tag.
pub fn tag_hash(tag: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    tag.bytes()
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Child seed for a named subsystem: `seed ⊕ fnv1a(tag)`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    seed ^ tag_hash(tag)
}

/// Standard-normal sampler using the Box-Muller transform.
///
/// Each pair of uniforms yields two normals; the second one is cached. The
/// first uniform is drawn from `(0, 1]` so the logarithm stays finite.
#[derive(Debug, Clone)]
pub struct BoxMuller {
    spare: Option<f64>,
}

impl Default for BoxMuller {
    fn default() -> Self {
        Self::new()
    }
}

impl BoxMuller {
    pub fn new() -> Self {
        Self { spare: None }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - rng.random::<f64>();
        let u2 = rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}
