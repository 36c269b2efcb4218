//! Tapped-delay-line channel emulation and additive white Gaussian noise.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`),
//! which produces the same stream on every platform. Each consumer reads its
//! own ChaCha stream of the seeded generator:
//!
//! | stream | use                                   |
//! |--------|---------------------------------------|
//! | 0      | static per-tap phases                 |
//! | 1      | block-Rayleigh gains, frame by frame  |
//! | 2      | AWGN samples                          |

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::TapSet;
use crate::Sample;

const PHASE_STREAM: u64 = 0;
const FADING_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Tolerance for a tap delay to count as lying on the sample grid.
pub const GRID_TOLERANCE_US: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FadingMode {
    /// Fixed gains for the whole capture.
    #[default]
    Static,
    /// Independent circularly-symmetric Gaussian gains for every transmitted
    /// frame.
    BlockRayleigh,
}

impl fmt::Display for FadingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FadingMode::Static => "static",
            FadingMode::BlockRayleigh => "block_rayleigh",
        })
    }
}

impl FromStr for FadingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "static" => Ok(FadingMode::Static),
            "block_rayleigh" | "rayleigh" => Ok(FadingMode::BlockRayleigh),
            other => Err(Error::InvalidParameter(format!("unknown fading mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelTap {
    pub delay_samples: usize,
    /// Static gain; in block-Rayleigh mode only its magnitude is used, as the
    /// RMS gain of the tap.
    pub gain: Sample,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    taps: Vec<ChannelTap>,
    fading_mode: FadingMode,
    rng_seed: u64,
    frame_len: usize,
}

impl ChannelRealization {
    /// A static channel with explicit gains, mostly for tests and tools.
    pub fn from_gains(taps: impl IntoIterator<Item = (usize, Sample)>) -> Result<Self> {
        let taps: Vec<ChannelTap> = taps
            .into_iter()
            .map(|(delay_samples, gain)| ChannelTap { delay_samples, gain, amplitude: gain.norm() })
            .collect();
        if taps.is_empty() {
            return Err(Error::EmptyTapSet);
        }
        if taps.windows(2).any(|w| w[1].delay_samples <= w[0].delay_samples) {
            return Err(Error::InvalidParameter("tap delays must be strictly ascending".into()));
        }
        Ok(ChannelRealization { taps, fading_mode: FadingMode::Static, rng_seed: 0, frame_len: 1 })
    }

    pub fn taps(&self) -> &[ChannelTap] {
        &self.taps
    }

    pub fn fading_mode(&self) -> FadingMode {
        self.fading_mode
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn max_delay(&self) -> usize {
        self.taps.last().map_or(0, |t| t.delay_samples)
    }

    /// Gains of every tap for transmit frames `0..n_frames`.
    pub fn frame_gains(&self, n_frames: usize) -> Vec<Vec<Sample>> {
        match self.fading_mode {
            FadingMode::Static => vec![self.taps.iter().map(|t| t.gain).collect(); n_frames],
            FadingMode::BlockRayleigh => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
                rng.set_stream(FADING_STREAM);
                (0..n_frames)
                    .map(|_| self.taps.iter().map(|t| t.amplitude * complex_gaussian(&mut rng)).collect())
                    .collect()
            }
        }
    }
}

/// Unit-variance circularly-symmetric complex Gaussian.
fn complex_gaussian(rng: &mut ChaCha8Rng) -> Sample {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Sample::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Quantizes tap delays to the sample grid and draws the random gains.
///
/// `frame_len` sets the block boundaries for block-Rayleigh fading; it is
/// ignored in static mode.
pub fn realize_channel(
    taps: &TapSet,
    sample_rate_hz: f64,
    fading_mode: FadingMode,
    seed: u64,
    frame_len: usize,
) -> Result<ChannelRealization> {
    if taps.is_empty() {
        return Err(Error::EmptyTapSet);
    }
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(Error::InvalidParameter(format!("sample rate must be positive, got {sample_rate_hz}")));
    }
    if frame_len == 0 {
        return Err(Error::InvalidParameter("frame length must be positive".into()));
    }
    let sample_us = 1e6 / sample_rate_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PHASE_STREAM);

    let mut out = Vec::with_capacity(taps.len());
    for tap in taps.taps() {
        let exact = tap.delay_us / sample_us;
        let delay_samples = exact.round();
        if (delay_samples * sample_us - tap.delay_us).abs() > GRID_TOLERANCE_US {
            return Err(Error::OffGridDelay { delay_us: tap.delay_us, sample_rate_hz });
        }
        let theta: f64 = rng.random::<f64>() * 2.0 * PI;
        out.push(ChannelTap {
            delay_samples: delay_samples as usize,
            gain: Sample::from_polar(tap.amplitude, theta),
            amplitude: tap.amplitude,
        });
    }
    Ok(ChannelRealization { taps: out, fading_mode, rng_seed: seed, frame_len })
}

/// `out[n] = sum_i g_i * tx[n - d_i]`, with the gain of the frame the input
/// sample belongs to. The output is `max delay` samples longer than the
/// input.
pub fn apply_channel(tx: &[Sample], ch: &ChannelRealization) -> Result<Vec<Sample>> {
    if tx.is_empty() {
        return Err(Error::InvalidParameter("transmit stream is empty".into()));
    }
    let mut out = vec![Sample::new(0.0, 0.0); tx.len() + ch.max_delay()];
    match ch.fading_mode {
        FadingMode::Static => {
            for tap in &ch.taps {
                let dst = &mut out[tap.delay_samples..tap.delay_samples + tx.len()];
                for (o, &x) in dst.iter_mut().zip(tx) {
                    *o += tap.gain * x;
                }
            }
        }
        FadingMode::BlockRayleigh => {
            let n_frames = tx.len().div_ceil(ch.frame_len);
            let gains = ch.frame_gains(n_frames);
            for (frame, chunk) in tx.chunks(ch.frame_len).enumerate() {
                let start = frame * ch.frame_len;
                for (tap, &g) in ch.taps.iter().zip(&gains[frame]) {
                    let dst = &mut out[start + tap.delay_samples..start + tap.delay_samples + chunk.len()];
                    for (o, &x) in dst.iter_mut().zip(chunk) {
                        *o += g * x;
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn mean_power(samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Adds complex AWGN at `snr_db` relative to the mean power of `samples`.
/// An infinite SNR returns the input unchanged.
pub fn add_awgn(samples: &[Sample], snr_db: f64, seed: u64) -> Result<Vec<Sample>> {
    if snr_db.is_nan() {
        return Err(Error::InvalidParameter("SNR is NaN".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(samples.to_vec());
    }
    let power = mean_power(samples);
    if power <= 0.0 {
        return Err(Error::ZeroSignalPower);
    }
    let noise_var = power / 10f64.powf(snr_db / 10.0);
    let sigma = noise_var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NOISE_STREAM);
    Ok(samples.iter().map(|&s| s + sigma * complex_gaussian(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin_hilly, sample_taps, Normalization};

    fn c(re: f64, im: f64) -> Sample {
        Sample::new(re, im)
    }

    #[test]
    fn single_tap_static_gain_has_unit_magnitude() {
        let taps = TapSet::new([(0.0, 0.0)]).unwrap();
        for seed in [0, 1, 99] {
            let ch = realize_channel(&taps, 1e6, FadingMode::Static, seed, 1100).unwrap();
            assert_eq!(ch.taps().len(), 1);
            assert!((ch.taps()[0].gain.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hilly_taps_map_to_integer_delays() {
        let taps = sample_taps(&builtin_hilly(), 1.0, -40.0, Normalization::None).unwrap();
        let ch = realize_channel(&taps, 1e6, FadingMode::Static, 3, 1100).unwrap();
        let delays: Vec<usize> = ch.taps().iter().map(|t| t.delay_samples).collect();
        let expected: Vec<usize> = taps.taps().iter().map(|t| t.delay_us as usize).collect();
        assert_eq!(delays, expected);
        assert_eq!(&delays[..4], &[0, 1, 2, 3]);
        for (t, src) in ch.taps().iter().zip(taps.taps()) {
            assert!((t.gain.norm() - src.amplitude).abs() < 1e-15);
        }
    }

    #[test]
    fn half_sample_delay_is_off_grid() {
        let taps = TapSet::new([(0.0, 0.0), (0.5, -3.0)]).unwrap();
        assert!(matches!(realize_channel(&taps, 1e6, FadingMode::Static, 0, 1100), Err(Error::OffGridDelay { .. })));
        // the same taps are on the grid at 2 MHz
        assert!(realize_channel(&taps, 2e6, FadingMode::Static, 0, 1100).is_ok());
    }

    #[test]
    fn convolution_examples() {
        let x: Vec<Sample> = (0..6).map(|i| c(i as f64, -(i as f64))).collect();

        let identity = ChannelRealization::from_gains([(0, c(1.0, 0.0))]).unwrap();
        assert_eq!(apply_channel(&x, &identity).unwrap(), x);

        let shift = ChannelRealization::from_gains([(3, c(1.0, 0.0))]).unwrap();
        let y = apply_channel(&x, &shift).unwrap();
        assert_eq!(y.len(), 9);
        assert_eq!(&y[..3], &[c(0.0, 0.0); 3]);
        assert_eq!(&y[3..], &x[..]);

        let two = ChannelRealization::from_gains([(0, c(1.0, 0.0)), (2, c(0.0, 0.5))]).unwrap();
        let mut impulse = vec![c(0.0, 0.0); 4];
        impulse[0] = c(1.0, 0.0);
        let y = apply_channel(&impulse, &two).unwrap();
        assert_eq!(y, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.5), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);

        assert!(apply_channel(&[], &identity).is_err());
    }

    #[test]
    fn awgn_disabled_and_zero_power() {
        let x = vec![c(1.0, 0.5); 16];
        assert_eq!(add_awgn(&x, f64::INFINITY, 1).unwrap(), x);
        assert!(matches!(add_awgn(&[c(0.0, 0.0); 8], 10.0, 1), Err(Error::ZeroSignalPower)));
    }

    #[test]
    fn awgn_power_at_zero_db() {
        let n = 200_000;
        let x: Vec<Sample> = (0..n).map(|i| Sample::from_polar(1.0, i as f64 * 0.1)).collect();
        let y = add_awgn(&x, 0.0, 5).unwrap();
        let noise: Vec<Sample> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let p = mean_power(&noise);
        assert!((p - 1.0).abs() < 0.02, "noise power {p}");
        assert_eq!(add_awgn(&x, 0.0, 5).unwrap(), y);
        assert_ne!(add_awgn(&x, 0.0, 6).unwrap(), y);
    }

    #[test]
    fn block_rayleigh_mean_power_matches_tap_power() {
        let taps = TapSet::new([(0.0, 0.0), (2.0, -6.0)]).unwrap();
        let mut acc = [0.0f64; 2];
        let mut count = 0usize;
        for seed in 0..20 {
            let ch = realize_channel(&taps, 1e6, FadingMode::BlockRayleigh, seed, 10).unwrap();
            for frame in ch.frame_gains(500) {
                for (a, g) in acc.iter_mut().zip(frame) {
                    *a += g.norm_sqr();
                }
                count += 1;
            }
        }
        let expected = [1.0, 10f64.powf(-0.6)];
        for (a, e) in acc.iter().zip(expected) {
            let mean = a / count as f64;
            assert!((mean / e - 1.0).abs() < 0.05, "mean {mean} expected {e}");
        }
    }

    #[test]
    fn block_fading_changes_between_frames_only() {
        let taps = TapSet::new([(0.0, 0.0)]).unwrap();
        let ch = realize_channel(&taps, 1e6, FadingMode::BlockRayleigh, 11, 4).unwrap();
        let x = vec![c(1.0, 0.0); 12];
        let y = apply_channel(&x, &ch).unwrap();
        assert_eq!(y[0], y[3]);
        assert_ne!(y[3], y[4]);
        assert_eq!(y[4], y[7]);
        assert_eq!(y, apply_channel(&x, &ch).unwrap());
    }

    #[test]
    fn fading_mode_parses() {
        assert_eq!("static".parse::<FadingMode>().unwrap(), FadingMode::Static);
        assert_eq!("block-rayleigh".parse::<FadingMode>().unwrap(), FadingMode::BlockRayleigh);
        assert!("jakes".parse::<FadingMode>().is_err());
    }
}
