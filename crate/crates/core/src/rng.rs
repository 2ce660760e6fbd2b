//! Seedable, splittable random streams.
//!
//! A stream is identified by `(seed, stream_id)`. The seed expands to a
//! ChaCha8 key through SplitMix64; the stream id selects one of 2^64
//! independent ChaCha streams over the same key. Identical identifiers
//! replay identical sequences; distinct stream ids never share output.
//!
//! Uniform integers below a bound are drawn by masked rejection so that
//! every outcome is exactly equiprobable. Nothing here depends on the
//! `rand` distribution machinery, which keeps the byte streams stable
//! across dependency upgrades.

use num_bigint::BigUint;
use num_traits::Zero;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// One reproducible random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, bound)`, exact via masked rejection.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        if bound == 1 {
            return 0;
        }
        let mask = u64::MAX >> (bound - 1).leading_zeros();
        loop {
            let v = self.next_u64() & mask;
            if v < bound {
                return v;
            }
        }
    }

    /// Uniform draw in `[0, bound)` for arbitrary-precision bounds.
    pub fn next_biguint_below(&mut self, bound: &BigUint) -> BigUint {
        assert!(!bound.is_zero(), "bound must be positive");
        if let Ok(small) = u64::try_from(bound) {
            return BigUint::from(self.next_below(small));
        }
        let bits = bound.bits();
        let words = bits.div_ceil(64) as usize;
        let top_mask = if bits % 64 == 0 {
            u64::MAX
        } else {
            (1u64 << (bits % 64)) - 1
        };
        loop {
            let mut digits = Vec::with_capacity(words);
            for i in 0..words {
                let mut w = self.next_u64();
                if i == words - 1 {
                    w &= top_mask;
                }
                digits.push(w);
            }
            let v = BigUint::from_slice(
                &digits
                    .iter()
                    .flat_map(|w| [(*w & 0xffff_ffff) as u32, (*w >> 32) as u32])
                    .collect::<Vec<_>>(),
            );
            if &v < bound {
                return v;
            }
        }
    }
}
