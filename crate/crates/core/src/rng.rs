//! Deterministic random stream: xoshiro256++ seeded through splitmix64.
//!
//! Both algorithms are public specifications (Blackman & Vigna), implemented
//! here directly so the draw sequence is identical on every platform and the
//! four state words can be checkpointed verbatim. No global RNG is used
//! anywhere in the crate.

/// xoshiro256++ generator with splitmix64 seed expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    state: [u64; 4],
}

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        let mut x = seed;
        let mut state = [0u64; 4];
        for word in &mut state {
            *word = splitmix64(&mut x);
        }
        if state == [0, 0, 0, 0] {
            // xoshiro must not start from the all-zero state
            state[0] = 0x9e37_79b9_7f4a_7c15;
        }
        RandomStream { state }
    }

    /// Resume from checkpointed state words.
    pub fn from_state(state: [u64; 4]) -> Self {
        RandomStream { state }
    }

    pub fn state(&self) -> [u64; 4] {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in [0, 1), using the high 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in (0, max]: never zero, may equal `max`.
    pub fn uniform_pos(&mut self, max: f64) -> f64 {
        max * (1.0 - self.next_f64())
    }

    /// Uniform index in [0, n). `n` must be nonzero. The modulo bias is
    /// below 2^-32 for every n used in this crate (layer sizes).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Bernoulli draw with success probability `p`. Always consumes exactly
    /// one u64 so keep/reject decisions stay aligned across configs.
    pub fn keep(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
