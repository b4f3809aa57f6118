//! Seeded random streams and the few distributions the crate samples from.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

/// The generator used everywhere in the crate. ChaCha is portable, so a seed
/// fixes every draw on every platform.
pub type SeedRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SeedRng {
    SeedRng::seed_from_u64(seed)
}

/// Derives an independent stream for a named purpose from a base seed.
pub fn substream(seed: u64, stream: u64) -> SeedRng {
    let mut rng = SeedRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw from the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard normal via Box-Muller.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = open_unit(rng);
    let u2: f64 = rng.gen();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Gumbel(0, 1).
pub fn gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -libm::log(-libm::log(open_unit(rng)))
}
