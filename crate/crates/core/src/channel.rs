//! BSC(p) parameters and counter-based noise sampling.
//!
//! Noise is a pure function of `(seed value, trial index, purpose, draw index)`:
//! ChaCha8 keyed with `seed_from_u64(seed value)`, stream `4 * trial + purpose`,
//! and draw `k` is the `k`-th 64-bit word pair of that stream. A uniform in
//! `[0, 1)` is `(word >> 11) * 2^-53`. This layout is frozen; changing it
//! changes every recorded simulation.

use std::fmt;

use num_traits::{One, Signed, Zero};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, Rational};

/// How a probability literal is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    Rational,
    Float,
}

/// Arithmetic used by the dynamic programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArithmeticMode {
    Rational,
    LogFloat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    exact: Option<Rational>,
    p: f64,
    q: f64,
    z: f64,
    degenerate: bool,
}

impl ChannelParams {
    /// Builds a channel from a literal such as `"1/10"` or `"0.1"`.
    pub fn new(literal: &str, mode: ChannelMode) -> Result<Self> {
        let bad = |reason: &str| Error::BadProbability {
            literal: literal.to_string(),
            reason: reason.to_string(),
        };
        let parsed = if literal.contains('/') {
            exact::parse_fraction(literal)
        } else {
            exact::parse_decimal(literal)
        }
        .ok_or_else(|| bad("expected a fraction \"a/b\" or a decimal"))?;
        let half = exact::rat(1, 2);
        if !parsed.is_positive() || parsed > half {
            return Err(Error::ProbabilityOutOfRange(literal.trim().to_string()));
        }
        match mode {
            ChannelMode::Rational => Ok(Self::from_rational(parsed)),
            ChannelMode::Float => {
                let p: f64 = if literal.contains('/') {
                    exact::to_f64(&parsed)
                } else {
                    literal.trim().parse().map_err(|_| bad("not a decimal"))?
                };
                Self::from_f64(p)
            }
        }
    }

    pub fn from_rational(p: Rational) -> Self {
        assert!(p.is_positive() && p <= exact::rat(1, 2), "p out of (0, 1/2]");
        let pf = exact::to_f64(&p);
        let q = Rational::one() - &p;
        let degenerate = p == q;
        let qf = exact::to_f64(&q);
        let zf = exact::to_f64(&(&p / &q));
        ChannelParams { exact: Some(p), p: pf, q: qf, z: zf, degenerate }
    }

    pub fn from_f64(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 0.5) {
            return Err(Error::ProbabilityOutOfRange(p.to_string()));
        }
        let q = 1.0 - p;
        Ok(ChannelParams { exact: None, p, q, z: p / q, degenerate: p == 0.5 })
    }

    /// The float view of a rational channel (sampling and log-domain work).
    pub fn to_float(&self) -> Self {
        ChannelParams { exact: None, ..self.clone() }
    }

    pub fn mode(&self) -> ChannelMode {
        if self.exact.is_some() {
            ChannelMode::Rational
        } else {
            ChannelMode::Float
        }
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn p_exact(&self) -> Result<Rational> {
        self.exact.clone().ok_or(Error::NotRational)
    }

    pub fn q_exact(&self) -> Result<Rational> {
        Ok(Rational::one() - self.p_exact()?)
    }

    pub fn z_exact(&self) -> Result<Rational> {
        let p = self.p_exact()?;
        let q = Rational::one() - &p;
        Ok(p / q)
    }

    /// `p` as written in reports: exact fraction when available.
    pub fn label(&self) -> String {
        match &self.exact {
            Some(p) => p.to_string(),
            None => self.p.to_string(),
        }
    }
}

impl fmt::Display for ChannelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BSC(p={})", self.label())
    }
}

pub fn make_channel(literal: &str, mode: ChannelMode) -> Result<ChannelParams> {
    ChannelParams::new(literal, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub value: u64,
    pub trial: u64,
}

impl Seed {
    pub fn new(value: u64, trial: u64) -> Self {
        Seed { value, trial }
    }
}

/// Sub-streams of one trial. Each purpose draws from its own ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Noise = 0,
    Query = 1,
    TrueMessage = 2,
    Decode = 3,
}

/// Sequential reader over one `(seed, trial, purpose)` stream. Draw `k` equals
/// [`draw_u64`] with index `k`.
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: Seed, purpose: Purpose) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.value);
        rng.set_stream(seed.trial.wrapping_mul(4).wrapping_add(purpose as u64));
        NoiseStream { rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn next_uniform(&mut self) -> f64 {
        unit_interval(self.next_u64())
    }

    /// Uniform index in `0..k` by widening multiply.
    pub fn next_index(&mut self, k: usize) -> usize {
        index_below(self.next_u64(), k)
    }

    pub fn next_flip(&mut self, p: f64) -> bool {
        self.next_uniform() < p
    }
}

/// Draw `index` of the `(seed, purpose)` stream, computed without replaying earlier draws.
pub fn draw_u64(seed: Seed, purpose: Purpose, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.value);
    rng.set_stream(seed.trial.wrapping_mul(4).wrapping_add(purpose as u64));
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

pub fn unit_interval(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn index_below(word: u64, k: usize) -> usize {
    ((u128::from(word) * k as u128) >> 64) as usize
}

/// Whether the channel flips the bit sent at `step` (1 = channel error).
pub fn sample_flip(ch: &ChannelParams, seed: Seed, step: u64) -> Result<bool> {
    if ch.is_exact() {
        return Err(Error::SamplingExactChannel);
    }
    Ok(unit_interval(draw_u64(seed, Purpose::Noise, step)) < ch.p())
}

/// Exact-mode consistency: `p + q = 1` and `z = p / q` (always true by construction).
pub fn check_exact_invariants(ch: &ChannelParams) -> bool {
    match (ch.p_exact(), ch.q_exact(), ch.z_exact()) {
        (Ok(p), Ok(q), Ok(z)) => {
            (&p + &q - Rational::one()).is_zero() && z == &p / &q && z <= Rational::one()
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rat;

    #[test]
    fn rational_channel_fields() {
        let ch = make_channel("1/10", ChannelMode::Rational).unwrap();
        assert_eq!(ch.p_exact().unwrap(), rat(1, 10));
        assert_eq!(ch.q_exact().unwrap(), rat(9, 10));
        assert_eq!(ch.z_exact().unwrap(), rat(1, 9));
        assert!(!ch.is_degenerate());
        assert!(check_exact_invariants(&ch));
    }

    #[test]
    fn half_is_degenerate() {
        let ch = make_channel("1/2", ChannelMode::Rational).unwrap();
        assert_eq!(ch.z_exact().unwrap(), rat(1, 1));
        assert!(ch.is_degenerate());
        let f = make_channel("0.5", ChannelMode::Float).unwrap();
        assert!(f.is_degenerate());
        assert_eq!(f.z(), 1.0);
    }

    #[test]
    fn rejects_out_of_range_and_malformed() {
        let e = make_channel("0.6", ChannelMode::Float).unwrap_err();
        assert!(e.to_string().contains("p must lie in (0, 1/2]"), "{e}");
        assert!(make_channel("0", ChannelMode::Rational).is_err());
        assert!(make_channel("-1/3", ChannelMode::Rational).is_err());
        assert!(matches!(
            make_channel("abc", ChannelMode::Float),
            Err(Error::BadProbability { .. })
        ));
        assert!(make_channel("3/5", ChannelMode::Rational).is_err());
    }

    #[test]
    fn decimal_in_rational_mode_is_exact() {
        let ch = make_channel("0.1", ChannelMode::Rational).unwrap();
        assert_eq!(ch.p_exact().unwrap(), rat(1, 10));
    }

    #[test]
    fn float_sum_within_one_ulp() {
        for p in [0.1, 0.013, 0.3333333, 0.49999, 1e-9] {
            let ch = ChannelParams::from_f64(p).unwrap();
            assert!((ch.p() + ch.q() - 1.0).abs() <= f64::EPSILON);
            assert!(ch.z() <= 1.0);
        }
    }

    #[test]
    fn exact_channel_refuses_sampling() {
        let ch = make_channel("1/10", ChannelMode::Rational).unwrap();
        assert!(matches!(sample_flip(&ch, Seed::new(1, 0), 0), Err(Error::SamplingExactChannel)));
    }

    #[test]
    fn sampling_is_replayable_and_matches_stream() {
        let ch = make_channel("0.1", ChannelMode::Float).unwrap();
        let seed = Seed::new(0xDEADBEEF, 17);
        let a: Vec<bool> = (0..64).map(|k| sample_flip(&ch, seed, k).unwrap()).collect();
        let b: Vec<bool> = (0..64).map(|k| sample_flip(&ch, seed, k).unwrap()).collect();
        assert_eq!(a, b);
        let mut stream = NoiseStream::new(seed, Purpose::Noise);
        let c: Vec<bool> = (0..64).map(|_| stream.next_flip(ch.p())).collect();
        assert_eq!(a, c);
        // random access in the middle of the stream
        let mut stream = NoiseStream::new(seed, Purpose::Noise);
        for _ in 0..40 {
            stream.next_u64();
        }
        assert_eq!(stream.next_u64(), draw_u64(seed, Purpose::Noise, 40));
    }

    #[test]
    fn purposes_and_trials_are_separate_streams() {
        let s = Seed::new(5, 0);
        assert_ne!(draw_u64(s, Purpose::Noise, 0), draw_u64(s, Purpose::Query, 0));
        assert_ne!(draw_u64(s, Purpose::Noise, 0), draw_u64(Seed::new(5, 1), Purpose::Noise, 0));
    }

    fn flip_rate(ch: &ChannelParams, draws: u64) -> f64 {
        let mut stream = NoiseStream::new(Seed::new(2024, 3), Purpose::Noise);
        let hits = (0..draws).filter(|_| stream.next_flip(ch.p())).count();
        hits as f64 / draws as f64
    }

    #[test]
    fn empirical_flip_rate() {
        let n = 1_000_000u64;
        for p in [0.1, 0.5] {
            let ch = ChannelParams::from_f64(p).unwrap();
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let rate = flip_rate(&ch, n);
            assert!((rate - p).abs() <= 4.0 * sigma, "p={p} rate={rate}");
        }
    }

    #[test]
    fn index_below_is_in_range() {
        for w in [0u64, 1, u64::MAX / 3, u64::MAX / 2, u64::MAX] {
            assert!(index_below(w, 3) < 3);
        }
        assert_eq!(index_below(u64::MAX, 3), 2);
        assert_eq!(index_below(0, 3), 0);
    }
}
