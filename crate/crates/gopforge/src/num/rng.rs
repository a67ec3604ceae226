//! Seedable, splittable pseudo-random streams.
//!
//! A [`RngStream`] is identified by `(seed, stream_id)` and is backed by the
//! ChaCha8 counter-mode generator: the 256-bit key is expanded from `seed`
//! with SplitMix64 and `stream_id` selects one of 2^64 independent counter
//! streams. Identical `(seed, stream_id)` pairs therefore produce identical
//! draw sequences on every platform, and distinct stream ids are independent
//! by construction, regardless of how many draws each stream consumes.
//!
//! ## Stream-id layout
//!
//! All stream ids used by the training pipeline are built with
//! [`StreamId`], a pure function of what the stream is for — never of
//! scheduling or execution order:
//!
//! ```text
//! bits 63..56   purpose tag (StreamPurpose)
//! bits 55..40   progressive step (16 bits)
//! bits 39..32   sweep ordinal within the step (8 bits)
//! bits 31..0    candidate index (32 bits)
//! ```

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// What a derived stream is consumed for. Keeping the purposes disjoint
/// guarantees that, e.g., the dataset shuffle never shares a stream with a
/// candidate's weight initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Dataset split shuffling.
    Split = 1,
    /// Synthetic dataset generation.
    Synthetic = 2,
    /// One candidate training of a sweep (init, batch order, dropout).
    Candidate = 3,
    /// The random hidden-opset draw opening each two-pass GIS step.
    GisDraw = 4,
    /// Whole-network finetuning.
    Finetune = 5,
}

/// Builder for the documented stream-id bit layout.
#[derive(Debug, Clone, Copy)]
pub struct StreamId;

impl StreamId {
    pub fn new(purpose: StreamPurpose, step: usize, sweep: usize, candidate: usize) -> u64 {
        debug_assert!(step < (1 << 16));
        debug_assert!(sweep < (1 << 8));
        debug_assert!(candidate < (1 << 32));
        ((purpose as u64) << 56)
            | ((step as u64) << 40)
            | ((sweep as u64) << 32)
            | candidate as u64
    }

    pub fn simple(purpose: StreamPurpose) -> u64 {
        Self::new(purpose, 0, 0, 0)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One reproducible random stream. Streams are never shared between
/// threads; derive a child with [`RngStream::split`] instead.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    /// Cached second Box-Muller variate.
    spare_normal: Option<f64>,
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
        Self {
            seed,
            stream_id,
            rng,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream with the same seed and the given id; the child's draws
    /// are unaffected by how much this stream has consumed.
    pub fn split(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision. The mapping
    /// `(x >> 11) * 2^-53` is part of the reproducibility contract.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) {
            return Err(Error::invalid(format!(
                "uniform range requires lo < hi, got [{}, {})",
                lo, hi
            )));
        }
        Ok(lo + self.unit() * (hi - lo))
    }

    pub fn uniform_vec(&mut self, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
        if !(lo < hi) {
            return Err(Error::invalid(format!(
                "uniform range requires lo < hi, got [{}, {})",
                lo, hi
            )));
        }
        Ok((0..n).map(|_| lo + self.unit() * (hi - lo)).collect())
    }

    /// Standard normal draw via Box-Muller.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Uniform index in `[0, n)`. Modulo bias is below 2^-32 for every `n`
    /// in this crate and is accepted in exchange for a fixed draw count.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_streams_replay() {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 0);
        let va = a.uniform_vec(0.0, 1.0, 3).unwrap();
        let vb = b.uniform_vec(0.0, 1.0, 3).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn draws_stay_in_half_open_range() {
        let mut rng = RngStream::new(42, 9);
        for v in rng.uniform_vec(0.0, 1.0, 10_000).unwrap() {
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn distinct_stream_ids_differ() {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 1);
        let va = a.uniform_vec(0.0, 1.0, 1000).unwrap();
        let vb = b.uniform_vec(0.0, 1.0, 1000).unwrap();
        assert_ne!(va, vb);
    }

    #[test]
    fn degenerate_range_rejected() {
        let mut rng = RngStream::new(1, 0);
        assert!(rng.uniform(1.0, 1.0).is_err());
        assert!(rng.uniform_vec(2.0, 1.0, 4).is_err());
    }

    // Golden values freeze the full pipeline (key derivation, ChaCha8,
    // bit mapping) against regressions; any change here is a break of the
    // reproducibility contract.
    #[test]
    fn golden_sequence() {
        let mut rng = RngStream::new(7, 3);
        let raw: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
        assert_eq!(raw, vec![10229490338903062466, 17759056194006600032, 7779193972943199779]);
        let mut rng = RngStream::new(7, 3);
        let mapped = rng.unit();
        assert_eq!(mapped, (raw[0] >> 11) as f64 * (1.0 / (1u64 << 53) as f64));
    }

    #[test]
    fn split_is_pure() {
        let mut parent = RngStream::new(5, 0);
        parent.next_u64();
        parent.next_u64();
        let mut child_after = parent.split(77);
        let fresh = RngStream::new(5, 77);
        let mut fresh = fresh;
        assert_eq!(child_after.next_u64(), fresh.next_u64());
    }

    #[test]
    fn stream_id_layout_is_disjoint() {
        let a = StreamId::new(StreamPurpose::Candidate, 2, 1, 54);
        let b = StreamId::new(StreamPurpose::Candidate, 2, 1, 55);
        let c = StreamId::new(StreamPurpose::Candidate, 2, 2, 54);
        let d = StreamId::new(StreamPurpose::Finetune, 2, 1, 54);
        assert!(a != b && a != c && a != d && b != c);
        assert_eq!(a & 0xffff_ffff, 54);
    }

    #[test]
    fn shuffle_is_deterministic_permutation() {
        let mut a: Vec<usize> = (0..100).collect();
        let mut b: Vec<usize> = (0..100).collect();
        RngStream::new(3, 8).shuffle(&mut a);
        RngStream::new(3, 8).shuffle(&mut b);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }
}
