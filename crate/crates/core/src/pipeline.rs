//! End-to-end sounding loop: transmit stream, emulated channel, estimation,
//! metrics and model comparison.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::emulator::{add_awgn, apply_channel, realize_channel, FadingMode};
use crate::error::Result;
use crate::estimator::{
    align, average_cirs_with, default_noise_floor, extract_taps, sliding_correlate_with, to_pdp, AveragingMode,
    CorrelationMethod, Pdp, DEFAULT_WINDOW_LEN,
};
use crate::io::{compare_csv, write_capture, write_pdp, IqCapture, Provenance};
use crate::metrics::{compare, CompareReport, MetricsReport, DEFAULT_CLUSTER_GAP_US, DEFAULT_COMPARE_THRESHOLD_DB};
use crate::models::{sample_taps, Normalization, PdpModel, TapSet};
use crate::waveform::{frame_transmit_stream, SequenceSpec, SoundingSequence};

pub const DEFAULT_REPETITIONS: usize = 200;
pub const DEFAULT_TAP_SPACING_US: f64 = 1.0;
pub const DEFAULT_MIN_DB: f64 = -40.0;
pub const DEFAULT_SNR_DB: f64 = 30.0;
pub const DEFAULT_THRESHOLD_DB: f64 = 6.0;
pub const DEFAULT_X_DB: f64 = 25.0;
pub const DEFAULT_CENTER_FREQ_HZ: f64 = 86e6;

/// Settings for the estimation half of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub window_len: usize,
    pub averaging: AveragingMode,
    pub method: CorrelationMethod,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            window_len: DEFAULT_WINDOW_LEN,
            averaging: AveragingMode::Magnitude,
            method: CorrelationMethod::Fft,
        }
    }
}

/// Correlate, align, average and square. The returned PDP carries its noise
/// floor (default guard) and alignment offset.
pub fn estimate_pdp(rx: &[crate::Sample], seq: &SoundingSequence, config: &EstimateConfig) -> Result<Pdp> {
    let corr = sliding_correlate_with(rx, seq, config.method)?;
    let frame_len = seq.frame_len();
    let offset = align(&corr, frame_len)?;
    let avg = average_cirs_with(&corr, frame_len, offset, config.window_len, config.averaging)?;
    let mut pdp = to_pdp(&avg, seq.chip_duration_us());
    pdp.noise_floor_db = Some(default_noise_floor(&pdp)?);
    pdp.offset = Some(offset);
    Ok(pdp)
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub model: PdpModel,
    pub sequence: SequenceSpec,
    pub repetitions: usize,
    pub channel: ChannelConfig,
    pub estimate: EstimateConfig,
    pub threshold_db: f64,
    pub compare_threshold_db: f64,
    pub x_db: f64,
}

impl PipelineConfig {
    pub fn new(model: PdpModel, seed: u64) -> Self {
        PipelineConfig {
            model,
            sequence: SequenceSpec::default(),
            repetitions: DEFAULT_REPETITIONS,
            channel: ChannelConfig::new(seed),
            estimate: EstimateConfig::default(),
            threshold_db: DEFAULT_THRESHOLD_DB,
            compare_threshold_db: DEFAULT_COMPARE_THRESHOLD_DB,
            x_db: DEFAULT_X_DB,
        }
    }
}

/// Seed for the noise generator, kept apart from the channel seed.
pub fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// How the emulated channel is drawn from a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub spacing_us: f64,
    pub min_db: f64,
    pub snr_db: f64,
    pub fading: FadingMode,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(seed: u64) -> Self {
        ChannelConfig {
            spacing_us: DEFAULT_TAP_SPACING_US,
            min_db: DEFAULT_MIN_DB,
            snr_db: DEFAULT_SNR_DB,
            fading: FadingMode::Static,
            seed,
        }
    }
}

/// Passes `tx` through a channel drawn from `model` (unit total power taps)
/// and adds noise. Returns the channel taps and the received stream.
pub fn emulate(
    tx: &[crate::Sample],
    model: &PdpModel,
    sample_rate_hz: f64,
    frame_len: usize,
    channel: &ChannelConfig,
) -> Result<(TapSet, Vec<crate::Sample>)> {
    let taps = sample_taps(model, channel.spacing_us, channel.min_db, Normalization::UnitTotalPower)?;
    let realization = realize_channel(&taps, sample_rate_hz, channel.fading, channel.seed, frame_len)?;
    let faded = apply_channel(tx, &realization)?;
    let rx = add_awgn(&faded, channel.snr_db, noise_seed(channel.seed))?;
    Ok((taps, rx))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub sequence: SoundingSequence,
    pub channel_taps: TapSet,
    pub tx: IqCapture,
    pub rx: IqCapture,
    pub pdp: Pdp,
    pub taps: TapSet,
    pub metrics: MetricsReport,
    pub comparison: CompareReport,
}

#[derive(Debug, Serialize)]
struct PipelineReport<'a> {
    model: &'a str,
    seed: u64,
    snr_db: Option<f64>,
    fading: String,
    n_averaged: usize,
    offset: Option<usize>,
    noise_floor_db: Option<f64>,
    metrics: &'a MetricsReport,
    comparison: &'a CompareReport,
}

impl PipelineOutput {
    pub fn report_json(&self, config: &PipelineConfig) -> String {
        let report = PipelineReport {
            model: config.model.name(),
            seed: config.channel.seed,
            snr_db: config.channel.snr_db.is_finite().then_some(config.channel.snr_db),
            fading: config.channel.fading.to_string(),
            n_averaged: self.pdp.n_averaged,
            offset: self.pdp.offset,
            noise_floor_db: self.pdp.noise_floor_db,
            metrics: &self.metrics,
            comparison: &self.comparison,
        };
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        text
    }

    /// Writes `seq.json`, `tx.iq`, `rx.iq`, `pdp.csv`, `compare.csv` and
    /// `report.json` (plus sidecars) into `dir`.
    pub fn write_to(&self, dir: &Path, config: &PipelineConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("seq.json"), self.sequence.spec().to_json() + "\n")?;
        write_capture(&self.tx, &dir.join("tx.iq"))?;
        write_capture(&self.rx, &dir.join("rx.iq"))?;
        write_pdp(&self.pdp, &dir.join("pdp.csv"))?;
        fs::write(dir.join("compare.csv"), compare_csv(&self.comparison))?;
        fs::write(dir.join("report.json"), self.report_json(config))?;
        Ok(())
    }
}

pub fn run(config: &PipelineConfig) -> Result<PipelineOutput> {
    let seq = config.sequence.build()?;
    let tx = frame_transmit_stream(&seq, config.repetitions)?;
    let (channel_taps, rx) = emulate(&tx, &config.model, seq.chip_rate_hz, seq.frame_len(), &config.channel)?;
    let ch = &config.channel;

    let mut tx_capture = IqCapture::from_samples(&tx, seq.chip_rate_hz, "tx", Provenance::Emulated)
        .with_meta("frame_len", seq.frame_len());
    tx_capture.center_freq_hz = DEFAULT_CENTER_FREQ_HZ;
    let mut rx_capture = IqCapture::from_samples(&rx, seq.chip_rate_hz, "rx", Provenance::Emulated)
        .with_meta("frame_len", seq.frame_len())
        .with_meta("model", config.model.name())
        .with_meta("seed", ch.seed)
        .with_meta("fading", ch.fading.to_string())
        .with_meta("snr_db", ch.snr_db.is_finite().then_some(ch.snr_db));
    rx_capture.center_freq_hz = DEFAULT_CENTER_FREQ_HZ;

    // Estimate from what lands on disk.
    let pdp = estimate_pdp(&rx_capture.to_samples(), &seq, &config.estimate)?;
    let taps = extract_taps(&pdp, config.threshold_db)?;
    let metrics = MetricsReport::from_pdp(&pdp, config.threshold_db, config.x_db, DEFAULT_CLUSTER_GAP_US)?;
    let comparison = compare(&pdp, &config.model, config.compare_threshold_db)?;

    Ok(PipelineOutput { sequence: seq, channel_taps, tx: tx_capture, rx: rx_capture, pdp, taps, metrics, comparison })
}
