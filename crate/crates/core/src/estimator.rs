//! Correlation channel estimation.
//!
//! The receive stream is correlated against the known chips at every offset,
//! the per-frame impulse responses are averaged non-coherently at the frame
//! repetition period, and the squared average gives the power delay profile.

use std::ops::RangeInclusive;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::models::TapSet;
use crate::waveform::SoundingSequence;
use crate::Sample;

/// dB value reported for zero linear power.
pub const DB_SENTINEL: f64 = -300.0;

/// Default CIR window in samples.
pub const DEFAULT_WINDOW_LEN: usize = 100;

/// Fraction of the window at its tail used as the default noise guard.
pub const DEFAULT_GUARD_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrelationMethod {
    /// Time-domain sum at every offset.
    #[default]
    Direct,
    /// Overlap-save FFT; agrees with `Direct` to rounding error.
    Fft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AveragingMode {
    /// Mean of `|h|` across frames, squared afterwards.
    #[default]
    Magnitude,
    /// Mean of `|h|^2` across frames.
    Power,
}

impl std::str::FromStr for AveragingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "magnitude" => Ok(AveragingMode::Magnitude),
            "power" => Ok(AveragingMode::Power),
            other => Err(Error::InvalidParameter(format!("unknown averaging mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for AveragingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AveragingMode::Magnitude => "magnitude",
            AveragingMode::Power => "power",
        })
    }
}

/// One instantaneous impulse response on the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    pub taps: Vec<Sample>,
    pub delay_resolution_us: f64,
    pub frame_index: usize,
}

/// Frame-averaged CIR magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedCir {
    /// Magnitude per delay bin. In power mode this is the RMS magnitude, so
    /// squaring always yields power.
    pub magnitude: Vec<f64>,
    pub n_averaged: usize,
    pub mode: AveragingMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pdp {
    pub delays_us: Vec<f64>,
    pub power_linear: Vec<f64>,
    /// Peak-normalized; zero power maps to [`DB_SENTINEL`].
    pub power_db: Vec<f64>,
    pub n_averaged: usize,
    pub noise_floor_db: Option<f64>,
    /// Alignment offset within the frame, when known.
    pub offset: Option<usize>,
}

impl Pdp {
    pub fn len(&self) -> usize {
        self.delays_us.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays_us.is_empty()
    }

    pub fn delay_resolution_us(&self) -> f64 {
        match self.delays_us.as_slice() {
            [a, b, ..] => b - a,
            _ => 1.0,
        }
    }

    /// Builds a PDP from a peak-normalized dB view, as read back from CSV.
    pub fn from_db(delays_us: Vec<f64>, power_db: Vec<f64>, n_averaged: usize) -> Self {
        let power_linear = power_db.iter().map(|&d| db_to_linear(d)).collect();
        Pdp { delays_us, power_linear, power_db, n_averaged, noise_floor_db: None, offset: None }
    }

    /// The default guard: the last 20% of the delay window.
    pub fn default_guard(&self) -> Option<RangeInclusive<f64>> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let start = ((n as f64) * (1.0 - DEFAULT_GUARD_FRACTION)).floor() as usize;
        let start = start.min(n - 1);
        Some(self.delays_us[start]..=self.delays_us[n - 1])
    }
}

fn db_to_linear(db: f64) -> f64 {
    if db <= DB_SENTINEL {
        0.0
    } else {
        10f64.powf(db / 10.0)
    }
}

pub fn power_to_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(DB_SENTINEL)
    } else {
        DB_SENTINEL
    }
}

/// `corr[i] = (1/L) sum_k rx[i + k] * chips[k]` for `i = 0 ..= len - L`.
pub fn sliding_correlate(rx: &[Sample], seq: &SoundingSequence) -> Result<Vec<Sample>> {
    sliding_correlate_with(rx, seq, CorrelationMethod::Direct)
}

pub fn sliding_correlate_with(rx: &[Sample], seq: &SoundingSequence, method: CorrelationMethod) -> Result<Vec<Sample>> {
    let l = seq.len();
    if rx.len() < l || l == 0 {
        return Err(Error::InputTooShort { len: rx.len(), needed: l });
    }
    let chips: Vec<f64> = seq.chips().iter().map(|&c| f64::from(c)).collect();
    Ok(match method {
        CorrelationMethod::Direct => correlate_direct(rx, &chips),
        CorrelationMethod::Fft => correlate_fft(rx, &chips),
    })
}

fn correlate_direct(rx: &[Sample], chips: &[f64]) -> Vec<Sample> {
    let l = chips.len();
    let scale = 1.0 / l as f64;
    (0..rx.len() - l + 1)
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| {
            let acc = rx[i..i + l].iter().zip(chips).fold(Sample::new(0.0, 0.0), |acc, (&x, &c)| acc + x * c);
            acc * scale
        })
        .collect()
}

fn correlate_fft(rx: &[Sample], chips: &[f64]) -> Vec<Sample> {
    let l = chips.len();
    let n_out = rx.len() - l + 1;
    let fft_len = (4 * l).next_power_of_two();
    let hop = fft_len - l + 1;

    let mut planner = FftPlanner::<f64>::new();
    let forward: Arc<dyn Fft<f64>> = planner.plan_fft_forward(fft_len);
    let inverse: Arc<dyn Fft<f64>> = planner.plan_fft_inverse(fft_len);

    // Correlation is convolution with the time-reversed chips.
    let mut kernel = vec![Sample::new(0.0, 0.0); fft_len];
    for (k, &c) in chips.iter().enumerate() {
        kernel[l - 1 - k] = Sample::new(c, 0.0);
    }
    forward.process(&mut kernel);
    let scale = 1.0 / (l as f64 * fft_len as f64);

    let blocks: Vec<usize> = (0..n_out).step_by(hop).collect();
    let parts: Vec<Vec<Sample>> = blocks
        .par_iter()
        .map(|&start| {
            let mut buf = vec![Sample::new(0.0, 0.0); fft_len];
            let end = (start + fft_len).min(rx.len());
            buf[..end - start].copy_from_slice(&rx[start..end]);
            forward.process(&mut buf);
            for (b, k) in buf.iter_mut().zip(&kernel) {
                *b *= k;
            }
            inverse.process(&mut buf);
            let take = hop.min(n_out - start);
            buf[l - 1..l - 1 + take].iter().map(|&v| v * scale).collect()
        })
        .collect();
    parts.concat()
}

/// Strongest-path arrival phase within the frame: argmax over positions
/// modulo `frame_len` of the mean correlation magnitude.
pub fn align(corr: &[Sample], frame_len: usize) -> Result<usize> {
    if frame_len == 0 {
        return Err(Error::InvalidParameter("frame length must be positive".into()));
    }
    if corr.len() < frame_len {
        return Err(Error::NoCompleteFrame { needed: frame_len, available: corr.len() });
    }
    let mut sum = vec![0.0f64; frame_len];
    let mut count = vec![0usize; frame_len];
    for (i, v) in corr.iter().enumerate() {
        sum[i % frame_len] += v.norm();
        count[i % frame_len] += 1;
    }
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (p, (&s, &c)) in sum.iter().zip(&count).enumerate() {
        let mean = s / c as f64;
        if mean > best_val {
            best_val = mean;
            best = p;
        }
    }
    Ok(best)
}

/// The instantaneous CIR of frame `frame_index`.
pub fn frame_cir(
    corr: &[Sample],
    frame_len: usize,
    offset: usize,
    window_len: usize,
    frame_index: usize,
    delay_resolution_us: f64,
) -> Option<Cir> {
    let start = offset + frame_index * frame_len;
    corr.get(start..start + window_len).map(|w| Cir { taps: w.to_vec(), delay_resolution_us, frame_index })
}

/// Averages `|corr[offset + k + frame_len * A]|` over every complete frame `A`.
pub fn average_cirs(corr: &[Sample], frame_len: usize, offset: usize, window_len: usize) -> Result<AveragedCir> {
    average_cirs_with(corr, frame_len, offset, window_len, AveragingMode::Magnitude)
}

pub fn average_cirs_with(
    corr: &[Sample],
    frame_len: usize,
    offset: usize,
    window_len: usize,
    mode: AveragingMode,
) -> Result<AveragedCir> {
    if frame_len == 0 || window_len == 0 {
        return Err(Error::InvalidParameter("frame and window lengths must be positive".into()));
    }
    let needed = offset + window_len;
    if corr.len() < needed {
        return Err(Error::NoCompleteFrame { needed, available: corr.len() });
    }
    let n_frames = (corr.len() - needed) / frame_len + 1;
    let mut acc = vec![0.0f64; window_len];
    for a in 0..n_frames {
        let start = offset + a * frame_len;
        for (s, v) in acc.iter_mut().zip(&corr[start..start + window_len]) {
            *s += match mode {
                AveragingMode::Magnitude => v.norm(),
                AveragingMode::Power => v.norm_sqr(),
            };
        }
    }
    let n = n_frames as f64;
    let magnitude = acc
        .into_iter()
        .map(|s| match mode {
            AveragingMode::Magnitude => s / n,
            AveragingMode::Power => (s / n).sqrt(),
        })
        .collect();
    Ok(AveragedCir { magnitude, n_averaged: n_frames, mode })
}

/// Squares the averaged profile; the dB view is normalized to a 0 dB peak.
pub fn to_pdp(avg: &AveragedCir, delay_resolution_us: f64) -> Pdp {
    let power_linear: Vec<f64> = avg.magnitude.iter().map(|m| m * m).collect();
    let peak = power_linear.iter().copied().fold(0.0, f64::max);
    let power_db = power_linear.iter().map(|&p| if peak > 0.0 { power_to_db(p / peak) } else { DB_SENTINEL }).collect();
    Pdp {
        delays_us: (0..power_linear.len()).map(|k| k as f64 * delay_resolution_us).collect(),
        power_linear,
        power_db,
        n_averaged: avg.n_averaged,
        noise_floor_db: None,
        offset: None,
    }
}

/// Median dB power over the delays in `guard`.
pub fn estimate_noise_floor(pdp: &Pdp, guard: RangeInclusive<f64>) -> Result<f64> {
    let mut values: Vec<f64> =
        pdp.delays_us.iter().zip(&pdp.power_db).filter(|(d, _)| guard.contains(d)).map(|(_, &p)| p).collect();
    if values.is_empty() {
        return Err(Error::EmptyGuard);
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Ok(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Noise floor over the default guard region.
pub fn default_noise_floor(pdp: &Pdp) -> Result<f64> {
    estimate_noise_floor(pdp, pdp.default_guard().ok_or(Error::EmptyGuard)?)
}

/// Keeps every PDP point at least `threshold_db` above the noise floor.
///
/// Powers are re-referenced to the strongest kept point and delays to the
/// first kept point. A zero threshold disables detection and keeps the whole
/// grid. The floor stored in the PDP is used if present, otherwise it is
/// estimated over the default guard.
pub fn extract_taps(pdp: &Pdp, threshold_db: f64) -> Result<TapSet> {
    if threshold_db.is_nan() || threshold_db < 0.0 {
        return Err(Error::InvalidParameter(format!("threshold must be non-negative, got {threshold_db}")));
    }
    let keep_all = threshold_db == 0.0;
    let level = if keep_all {
        f64::NEG_INFINITY
    } else {
        pdp.noise_floor_db.map_or_else(|| default_noise_floor(pdp), Ok)? + threshold_db
    };
    let kept: Vec<(f64, f64)> = pdp
        .delays_us
        .iter()
        .zip(&pdp.power_db)
        .filter(|&(_, &p)| keep_all || p >= level)
        .map(|(&d, &p)| (d, p))
        .collect();
    let Some(&(first, _)) = kept.first() else {
        return Ok(TapSet::empty());
    };
    let peak = kept.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
    TapSet::new(kept.into_iter().map(|(d, p)| (d - first, p - peak)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{frame_transmit_stream, generate_msequence, SequenceSpec};

    fn standard_seq() -> SoundingSequence {
        SequenceSpec::default().build().unwrap()
    }

    #[test]
    fn clean_frame_peaks_at_one() {
        let seq = standard_seq();
        let rx = frame_transmit_stream(&seq, 1).unwrap();
        let corr = sliding_correlate(&rx, &seq).unwrap();
        assert_eq!(corr.len(), 1100 - 1023 + 1);
        assert!((corr[0].norm() - 1.0).abs() < 1e-12);
        let second = corr[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(second < 0.1, "sidelobe {second}");
    }

    #[test]
    fn periodic_input_has_one_over_l_sidelobes() {
        let mut seq = standard_seq();
        seq.pad_len = 0;
        let rx = frame_transmit_stream(&seq, 2).unwrap();
        let corr = sliding_correlate(&rx, &seq).unwrap();
        for (i, c) in corr.iter().enumerate().take(1023) {
            let expected = if i == 0 { 1.0 } else { -1.0 / 1023.0 };
            assert!((c.re - expected).abs() < 1e-12, "lag {i}: {c}");
        }
    }

    #[test]
    fn delayed_sequence_peaks_at_delay() {
        let seq = standard_seq();
        let mut rx = vec![Sample::new(0.0, 0.0); 9];
        rx.extend(frame_transmit_stream(&seq, 1).unwrap());
        let corr = sliding_correlate(&rx, &seq).unwrap();
        let peak = (0..corr.len()).max_by(|&a, &b| corr[a].norm().total_cmp(&corr[b].norm())).unwrap();
        assert_eq!(peak, 9);
    }

    #[test]
    fn short_input_is_rejected() {
        let seq = standard_seq();
        let rx = vec![Sample::new(1.0, 0.0); 1022];
        assert!(matches!(sliding_correlate(&rx, &seq), Err(Error::InputTooShort { .. })));
    }

    #[test]
    fn fft_path_matches_direct() {
        let seq = generate_msequence(7, &[7, 6], 0x7F).unwrap();
        let rx: Vec<Sample> =
            (0..5000).map(|i| Sample::new(((i * 37) % 11) as f64 - 5.0, ((i * 13) % 7) as f64 - 3.0)).collect();
        let direct = sliding_correlate_with(&rx, &seq, CorrelationMethod::Direct).unwrap();
        let fft = sliding_correlate_with(&rx, &seq, CorrelationMethod::Fft).unwrap();
        assert_eq!(direct.len(), fft.len());
        let scale = direct.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (a, b) in direct.iter().zip(&fft) {
            assert!((a - b).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn align_finds_delay() {
        let seq = standard_seq();
        let tx = frame_transmit_stream(&seq, 4).unwrap();
        let corr = sliding_correlate(&tx, &seq).unwrap();
        assert_eq!(align(&corr, 1100).unwrap(), 0);

        let mut rx = vec![Sample::new(0.0, 0.0); 17];
        rx.extend(&tx);
        let corr = sliding_correlate(&rx, &seq).unwrap();
        assert_eq!(align(&corr, 1100).unwrap(), 17);
    }

    #[test]
    fn single_frame_average_is_the_frame() {
        let corr: Vec<Sample> = (0..50).map(|i| Sample::new(i as f64, 1.0)).collect();
        let avg = average_cirs(&corr, 20, 3, 10).unwrap();
        assert_eq!(avg.n_averaged, 2);
        let one = average_cirs(&corr[..20], 20, 3, 10).unwrap();
        assert_eq!(one.n_averaged, 1);
        let frame = frame_cir(&corr, 20, 3, 10, 0, 1.0).unwrap();
        let mags: Vec<f64> = frame.taps.iter().map(|c| c.norm()).collect();
        assert_eq!(one.magnitude, mags);
        assert!(matches!(average_cirs(&corr, 20, 0, 51), Err(Error::NoCompleteFrame { .. })));
    }

    #[test]
    fn power_mode_is_rms() {
        let corr = vec![Sample::new(1.0, 0.0), Sample::new(3.0, 0.0)];
        let avg = average_cirs_with(&corr, 1, 0, 1, AveragingMode::Power).unwrap();
        assert!((avg.magnitude[0] - 5f64.sqrt()).abs() < 1e-12);
        let avg = average_cirs_with(&corr, 1, 0, 1, AveragingMode::Magnitude).unwrap();
        assert_eq!(avg.magnitude[0], 2.0);
    }

    #[test]
    fn pdp_db_view() {
        let avg = AveragedCir { magnitude: vec![1.0, 0.1, 0.0], n_averaged: 4, mode: AveragingMode::Magnitude };
        let pdp = to_pdp(&avg, 1.0);
        assert_eq!(pdp.power_db[0], 0.0);
        assert!((pdp.power_db[1] + 20.0).abs() < 1e-12);
        assert_eq!(pdp.power_db[2], DB_SENTINEL);
        assert_eq!(pdp.n_averaged, 4);
        assert_eq!(pdp.delays_us, vec![0.0, 1.0, 2.0]);

        let flat = to_pdp(&AveragedCir { magnitude: vec![0.3; 5], n_averaged: 1, mode: AveragingMode::Magnitude }, 0.5);
        assert!(flat.power_db.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn noise_floor_median_and_empty_guard() {
        let pdp = Pdp::from_db(
            (0..10).map(f64::from).collect(),
            vec![0.0, -3.0, -6.0, -9.0, -12.0, -40.0, -50.0, -41.0, -45.0, -44.0],
            1,
        );
        assert_eq!(default_noise_floor(&pdp).unwrap(), -44.5);
        assert_eq!(estimate_noise_floor(&pdp, 5.0..=7.0).unwrap(), -41.0);
        assert!(matches!(estimate_noise_floor(&pdp, 20.0..=30.0), Err(Error::EmptyGuard)));
    }

    #[test]
    fn extraction_thresholds() {
        let mut pdp = Pdp::from_db((0..6).map(f64::from).collect(), vec![-50.0, 0.0, -49.0, -10.0, -51.0, -50.0], 1);
        pdp.noise_floor_db = Some(-50.0);
        let taps = extract_taps(&pdp, 6.0).unwrap();
        let got: Vec<(f64, f64)> = taps.taps().iter().map(|t| (t.delay_us, t.power_db)).collect();
        assert_eq!(got, vec![(0.0, 0.0), (2.0, -10.0)]);

        assert_eq!(extract_taps(&pdp, 0.0).unwrap().len(), 6);
        assert!(extract_taps(&pdp, 60.0).unwrap().is_empty());
        assert!(extract_taps(&pdp, -1.0).is_err());
    }
}
