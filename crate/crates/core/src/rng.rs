//! Counter-based normal variates.
//!
//! Every draw is a pure function of `(seed, stream, step, index)`: a Philox4x32-10
//! block keyed by the seed maps the counter `(step, index / 2, stream)` to four
//! 32-bit words, which Box-Muller turns into the normals for indices `2m` and
//! `2m + 1`. Thinning, restarts and parallel replicas therefore see exactly the
//! same noise.

use std::f64::consts::TAU;

const MUL0: u32 = 0xD251_1F53;
const MUL1: u32 = 0xCD9E_8D57;
const WEYL0: u32 = 0x9E37_79B9;
const WEYL1: u32 = 0xBB67_AE85;
const ROUNDS: usize = 10;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let prod = u64::from(a) * u64::from(b);
    ((prod >> 32) as u32, prod as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..ROUNDS {
        if round > 0 {
            k[0] = k[0].wrapping_add(WEYL0);
            k[1] = k[1].wrapping_add(WEYL1);
        }
        let (hi0, lo0) = mulhilo(MUL0, ctr[0]);
        let (hi1, lo1) = mulhilo(MUL1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// Uniform in `(0, 1]` from the top 53 bits.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn half_open_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Addressable stream of independent standard normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalStream {
    key: [u32; 2],
    stream: u32,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u32) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            stream,
        }
    }

    pub fn seed(&self) -> u64 {
        u64::from(self.key[0]) | (u64::from(self.key[1]) << 32)
    }

    pub fn stream(&self) -> u32 {
        self.stream
    }

    /// The two normals at indices `2 * pair` and `2 * pair + 1` of `step`.
    #[inline]
    pub fn normal_pair(&self, step: u64, pair: u32) -> (f64, f64) {
        let w = philox4x32([step as u32, (step >> 32) as u32, pair, self.stream], self.key);
        let u1 = open_unit(u64::from(w[0]) | (u64::from(w[1]) << 32));
        let u2 = half_open_unit(u64::from(w[2]) | (u64::from(w[3]) << 32));
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        (r * c, r * s)
    }

    pub fn normal(&self, step: u64, index: u32) -> f64 {
        let (a, b) = self.normal_pair(step, index / 2);
        if index % 2 == 0 {
            a
        } else {
            b
        }
    }

    /// `out[i]` is the normal at `(step, i)`.
    pub fn fill(&self, step: u64, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        let mut pair = 0u32;
        for chunk in &mut chunks {
            let (a, b) = self.normal_pair(step, pair);
            chunk[0] = a;
            chunk[1] = b;
            pair += 1;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair(step, pair).0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors published with the Random123 reference implementation.
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32([0, 0, 0, 0], [0, 0]),
            [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]
        );
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32([0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344], [0xa4093822, 0x299f31d0]),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn fill_matches_pointwise_addressing() {
        let s = NormalStream::new(0xdead_beef_1234, 3);
        let mut buf = vec![0.0; 7];
        s.fill(99, &mut buf);
        for (i, x) in buf.iter().enumerate() {
            assert_eq!(*x, s.normal(99, i as u32));
        }
    }

    #[test]
    fn streams_and_steps_differ() {
        let a = NormalStream::new(7, 0);
        let b = NormalStream::new(7, 1);
        let c = NormalStream::new(8, 0);
        assert_ne!(a.normal(0, 0), b.normal(0, 0));
        assert_ne!(a.normal(0, 0), c.normal(0, 0));
        assert_ne!(a.normal(0, 0), a.normal(1, 0));
        assert_eq!(NormalStream::new(u64::MAX - 5, 0).seed(), u64::MAX - 5);
    }

    #[test]
    fn moments_are_standard() {
        let s = NormalStream::new(2024, 0);
        let n = 200_000u64;
        let (mut m1, mut m2, mut m4) = (0.0, 0.0, 0.0);
        for step in 0..n / 2 {
            let (a, b) = s.normal_pair(step, 0);
            for x in [a, b] {
                m1 += x;
                m2 += x * x;
                m4 += x * x * x * x;
            }
        }
        let nf = n as f64;
        assert!((m1 / nf).abs() < 4.0 / nf.sqrt());
        assert!((m2 / nf - 1.0).abs() < 4.0 * 2f64.sqrt() / nf.sqrt());
        assert!((m4 / nf - 3.0).abs() < 4.0 * 96f64.sqrt() / nf.sqrt());
    }
}
