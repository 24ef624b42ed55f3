//! Deterministic splittable generator used by every randomized suite.
//!
//! The construction is SplitMix64 (Steele-Lea-Vigna finalizer) driven by a
//! golden-ratio counter, so a port in any language reproduces the streams:
//!
//! ```text
//! GAMMA = 0x9E3779B97F4A7C15
//! mix(z) = { z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!            z ^= z >> 27; z *= 0x94D049BB133111EB;
//!            z ^= z >> 31; z }
//! next():      state += GAMMA; return mix(state)
//! child(i):    Rng::new(mix(state ^ mix(i + 1)))      (parent unchanged)
//! below(m):    (next() * m) >> 64                      (128-bit product)
//! ```
//!
//! All arithmetic is mod 2^64.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Derive an independent child stream without consuming from `self`.
    pub fn child(&self, label: u64) -> Rng {
        Rng::new(mix(self.state ^ mix(label.wrapping_add(1))))
    }

    /// Uniform value in `0..m` via the 128-bit multiply-shift map.
    pub fn below(&mut self, m: u64) -> u64 {
        debug_assert!(m > 0);
        ((self.next_u64() as u128 * m as u128) >> 64) as u64
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len() as u64) as usize]
    }
}
