//! Maximal-length sounding sequences and transmit framing.
//!
//! Sequences come from a Fibonacci LFSR. Stage `k` of an `m`-stage register
//! lives in bit `k - 1` of the state word; the feedback bit is the XOR of the
//! stages listed in the tap set, so taps `{10, 3}` realize `x^10 + x^3 + 1`.
//! The register outputs stage `m` each clock and bit `1` maps to chip `+1`,
//! bit `0` to chip `-1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Sample;

/// Largest register length accepted; `2^24 - 1` chips is far beyond any
/// realistic sounding frame.
pub const MAX_ORDER: u32 = 24;

pub const DEFAULT_ORDER: u32 = 10;
pub const DEFAULT_TAPS: [u32; 2] = [10, 3];
pub const DEFAULT_PAD_LEN: usize = 77;
pub const DEFAULT_CHIP_RATE_HZ: f64 = 1e6;

/// Start state for the default register. Of the 1023 phases of the
/// `x^10 + x^3 + 1` sequence this one has the lowest peak correlation
/// sidelobe of the zero-padded frame stream within +-40 chips of the peak
/// (6/1023, against 16/1023 for the all-ones state).
pub const DEFAULT_SEED: u64 = 0x2DB;

/// Serializable description of a sounding sequence and its framing.
///
/// JSON form: `{"order":10,"taps":[10,3],"seed":"0x2DB","pad_len":77,"chip_rate_hz":1000000}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub order: u32,
    pub taps: Vec<u32>,
    #[serde(with = "hex_seed")]
    pub seed: u64,
    pub pad_len: usize,
    pub chip_rate_hz: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec {
            order: DEFAULT_ORDER,
            taps: DEFAULT_TAPS.to_vec(),
            seed: DEFAULT_SEED,
            pad_len: DEFAULT_PAD_LEN,
            chip_rate_hz: DEFAULT_CHIP_RATE_HZ,
        }
    }
}

impl SequenceSpec {
    /// All-ones seed for the given order, the conventional LFSR start state.
    pub fn with_order(order: u32, taps: Vec<u32>) -> Self {
        SequenceSpec { order, taps, seed: all_ones(order), ..SequenceSpec::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sequence spec serializes")
    }

    /// Builds the sequence this spec describes.
    pub fn build(&self) -> Result<SoundingSequence> {
        if self.chip_rate_hz <= 0.0 || !self.chip_rate_hz.is_finite() {
            return Err(Error::InvalidSequence(format!("chip rate must be positive, got {}", self.chip_rate_hz)));
        }
        let mut seq = generate_msequence(self.order, &self.taps, self.seed)?;
        seq.pad_len = self.pad_len;
        seq.chip_rate_hz = self.chip_rate_hz;
        Ok(seq)
    }
}

fn all_ones(order: u32) -> u64 {
    if order >= 64 {
        u64::MAX
    } else {
        (1u64 << order) - 1
    }
}

/// A ±1 m-sequence together with the framing used to transmit it.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundingSequence {
    order: u32,
    feedback_taps: Vec<u32>,
    seed: u64,
    chips: Vec<i8>,
    pub pad_len: usize,
    pub chip_rate_hz: f64,
}

impl SoundingSequence {
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn feedback_taps(&self) -> &[u32] {
        &self.feedback_taps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    /// Sequence length `L = 2^order - 1`.
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// Samples per transmitted frame: chips plus trailing zero guard.
    pub fn frame_len(&self) -> usize {
        self.chips.len() + self.pad_len
    }

    pub fn chip_duration_us(&self) -> f64 {
        1e6 / self.chip_rate_hz
    }

    pub fn frame_duration_us(&self) -> f64 {
        self.frame_len() as f64 * self.chip_duration_us()
    }

    pub fn spec(&self) -> SequenceSpec {
        SequenceSpec {
            order: self.order,
            taps: self.feedback_taps.clone(),
            seed: self.seed,
            pad_len: self.pad_len,
            chip_rate_hz: self.chip_rate_hz,
        }
    }
}

/// Clocks an LFSR through one full period and maps its output to ±1 chips.
///
/// The result uses the default framing (77 zero pad samples, 1 MHz chips);
/// adjust `pad_len` and `chip_rate_hz` afterwards or go through
/// [`SequenceSpec::build`].
pub fn generate_msequence(order: u32, feedback_taps: &[u32], seed: u64) -> Result<SoundingSequence> {
    if !(2..=MAX_ORDER).contains(&order) {
        return Err(Error::InvalidSequence(format!("order must be in 2..={MAX_ORDER}, got {order}")));
    }
    if feedback_taps.is_empty() {
        return Err(Error::InvalidSequence("no feedback taps".into()));
    }
    if let Some(&t) = feedback_taps.iter().find(|&&t| t == 0 || t > order) {
        return Err(Error::InvalidSequence(format!("tap {t} outside register stages 1..={order}")));
    }
    let mask = all_ones(order);
    if seed & !mask != 0 {
        return Err(Error::InvalidSequence(format!("seed {seed:#x} does not fit in {order} bits")));
    }
    if seed == 0 {
        return Err(Error::ZeroSeed);
    }

    let mut taps = feedback_taps.to_vec();
    taps.sort_unstable_by(|a, b| b.cmp(a));
    taps.dedup();
    let tap_mask = taps.iter().fold(0u64, |m, &t| m | 1 << (t - 1));
    let expected = mask;
    let out_bit = order - 1;

    let mut chips = Vec::with_capacity(expected as usize);
    let mut state = seed;
    for step in 1..=expected {
        chips.push(if (state >> out_bit) & 1 == 1 { 1i8 } else { -1i8 });
        let feedback = u64::from((state & tap_mask).count_ones() & 1);
        state = ((state << 1) | feedback) & mask;
        if state == seed && step < expected {
            return Err(Error::NonPrimitivePolynomial { period: step, expected });
        }
    }
    if state != seed {
        // The orbit never closed within 2^m - 1 steps, so the map is not a
        // single cycle over the non-zero states.
        return Err(Error::NonPrimitivePolynomial { period: cycle_length(state, tap_mask, mask), expected });
    }

    Ok(SoundingSequence {
        order,
        feedback_taps: taps,
        seed,
        chips,
        pad_len: DEFAULT_PAD_LEN,
        chip_rate_hz: DEFAULT_CHIP_RATE_HZ,
    })
}

/// Length of the cycle the register eventually falls into from `start`.
fn cycle_length(start: u64, tap_mask: u64, mask: u64) -> u64 {
    let step = |s: u64| ((s << 1) | u64::from((s & tap_mask).count_ones() & 1)) & mask;
    // Brent's algorithm: no allocation, bounded by the state space.
    let mut power = 1u64;
    let mut lam = 1u64;
    let mut tortoise = start;
    let mut hare = step(start);
    while tortoise != hare {
        if power == lam {
            tortoise = hare;
            power *= 2;
            lam = 0;
        }
        hare = step(hare);
        lam += 1;
    }
    lam
}

/// `sum_k chips[k] * chips[(k + lag) mod L]`, in exact integer arithmetic.
pub fn periodic_autocorrelation(seq: &SoundingSequence, lag: usize) -> i64 {
    let chips = seq.chips();
    let n = chips.len();
    let lag = lag % n;
    chips.iter().enumerate().map(|(k, &c)| i64::from(c) * i64::from(chips[(k + lag) % n])).sum()
}

/// One frame is the `L` chips as real-valued samples followed by `pad_len`
/// zeros; the frame repeats `repetitions` times back to back.
pub fn frame_transmit_stream(seq: &SoundingSequence, repetitions: usize) -> Result<Vec<Sample>> {
    if repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    let mut frame: Vec<Sample> = seq.chips().iter().map(|&c| Sample::new(f64::from(c), 0.0)).collect();
    frame.resize(seq.frame_len(), Sample::new(0.0, 0.0));

    let mut stream = Vec::with_capacity(frame.len() * repetitions);
    for _ in 0..repetitions {
        stream.extend_from_slice(&frame);
    }
    Ok(stream)
}

mod hex_seed {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{seed:X}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        struct SeedVisitor;

        impl Visitor<'_> for SeedVisitor {
            type Value = u64;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative integer or a \"0x\"-prefixed hex string")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<u64, E> {
                Ok(v)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<u64, E> {
                u64::try_from(v).map_err(|_| E::custom("seed must be non-negative"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<u64, E> {
                let v = v.trim();
                let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
                    Some(hex) => u64::from_str_radix(hex, 16),
                    None => v.parse(),
                };
                parsed.map_err(|e| E::custom(format!("bad seed '{v}': {e}")))
            }
        }

        d.deserialize_any(SeedVisitor)
    }
}
