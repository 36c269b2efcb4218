//! Capture and result file formats.
//!
//! A capture is a raw payload of little-endian `f32` pairs (I then Q) plus a
//! JSON sidecar next to it: `rx.iq` pairs with `rx.iqmeta.json`. Result
//! tables are CSV with fixed six-decimal formatting.
//!
//! Converting a MATLAB capture with separate `I` and `Q` vectors is a
//! one-liner on the MATLAB/Octave side:
//! `csvwrite('capture.csv', [I(:) Q(:)])` followed by prepending the `i,q`
//! header, then `fmsound import-csv`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Pdp;
use crate::metrics::CompareReport;
use crate::Sample;

/// Value of the sidecar `format` field.
pub const CAPTURE_FORMAT: &str = "cf32_le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Emulated,
    Imported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqCapture {
    pub samples: Vec<Complex32>,
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
    pub capture_id: String,
    pub provenance: Provenance,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl IqCapture {
    pub fn new(
        samples: Vec<Complex32>,
        sample_rate_hz: f64,
        capture_id: impl Into<String>,
        provenance: Provenance,
    ) -> Self {
        IqCapture {
            samples,
            sample_rate_hz,
            center_freq_hz: 0.0,
            capture_id: capture_id.into(),
            provenance,
            metadata: BTreeMap::new(),
        }
    }

    /// Rounds processing samples to the on-disk precision.
    pub fn from_samples(
        samples: &[Sample],
        sample_rate_hz: f64,
        capture_id: impl Into<String>,
        provenance: Provenance,
    ) -> Self {
        let samples = samples.iter().map(|s| Complex32::new(s.re as f32, s.im as f32)).collect();
        Self::new(samples, sample_rate_hz, capture_id, provenance)
    }

    pub fn to_samples(&self) -> Vec<Sample> {
        self.samples.iter().map(|s| Sample::new(f64::from(s.re), f64::from(s.im))).collect()
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptureSidecar {
    format: String,
    sample_rate_hz: f64,
    center_freq_hz: f64,
    n_samples: usize,
    capture_id: String,
    provenance: Provenance,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
}

/// `rx.iq` -> `rx.iqmeta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("iqmeta.json")
}

pub fn write_capture(capture: &IqCapture, path: &Path) -> Result<()> {
    if capture.sample_rate_hz.is_nan() || capture.sample_rate_hz <= 0.0 {
        return Err(Error::FormatError(format!("sample rate must be positive, got {}", capture.sample_rate_hz)));
    }
    let mut payload = Vec::with_capacity(capture.samples.len() * 8);
    for s in &capture.samples {
        payload.extend_from_slice(&s.re.to_le_bytes());
        payload.extend_from_slice(&s.im.to_le_bytes());
    }
    fs::write(path, payload)?;
    let sidecar = CaptureSidecar {
        format: CAPTURE_FORMAT.to_string(),
        sample_rate_hz: capture.sample_rate_hz,
        center_freq_hz: capture.center_freq_hz,
        n_samples: capture.samples.len(),
        capture_id: capture.capture_id.clone(),
        provenance: capture.provenance,
        metadata: capture.metadata.clone(),
    };
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(sidecar_path(path), text)?;
    Ok(())
}

pub fn read_capture(path: &Path) -> Result<IqCapture> {
    let meta_path = sidecar_path(path);
    let meta_text = fs::read_to_string(&meta_path)
        .map_err(|e| Error::FormatError(format!("cannot read sidecar {}: {e}", meta_path.display())))?;
    let meta: CaptureSidecar =
        serde_json::from_str(&meta_text).map_err(|e| Error::FormatError(format!("bad sidecar: {e}")))?;
    if meta.format != CAPTURE_FORMAT {
        return Err(Error::FormatError(format!("unsupported payload format '{}'", meta.format)));
    }
    if meta.sample_rate_hz.is_nan() || meta.sample_rate_hz <= 0.0 {
        return Err(Error::FormatError(format!("sample rate must be positive, got {}", meta.sample_rate_hz)));
    }
    let payload = fs::read(path)?;
    if payload.len() % 8 != 0 {
        return Err(Error::FormatError(format!("payload of {} bytes is not a whole number of samples", payload.len())));
    }
    if payload.len() / 8 != meta.n_samples {
        return Err(Error::FormatError(format!(
            "sidecar declares {} samples, payload holds {}",
            meta.n_samples,
            payload.len() / 8
        )));
    }
    let samples = payload
        .chunks_exact(8)
        .map(|b| {
            Complex32::new(f32::from_le_bytes([b[0], b[1], b[2], b[3]]), f32::from_le_bytes([b[4], b[5], b[6], b[7]]))
        })
        .collect();
    Ok(IqCapture {
        samples,
        sample_rate_hz: meta.sample_rate_hz,
        center_freq_hz: meta.center_freq_hz,
        capture_id: meta.capture_id,
        provenance: meta.provenance,
        metadata: meta.metadata,
    })
}

/// Reads a CSV with header `i,q` into an imported capture.
pub fn import_csv_iq(path: &Path, sample_rate_hz: f64) -> Result<IqCapture> {
    if sample_rate_hz.is_nan() || sample_rate_hz <= 0.0 {
        return Err(Error::InvalidParameter(format!("sample rate must be positive, got {sample_rate_hz}")));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let cols: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
    if cols != ["i", "q"] {
        return Err(Error::ParseError {
            line: 1,
            message: format!("expected header 'i,q', got '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut samples = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::ParseError { line, message: e.to_string() })?;
        let field = |k: usize| -> Result<f32> {
            let raw = record.get(k).ok_or_else(|| Error::ParseError { line, message: "missing field".into() })?;
            let v: f32 =
                raw.parse().map_err(|_| Error::ParseError { line, message: format!("'{raw}' is not a number") })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteSample(line))
            }
        };
        samples.push(Complex32::new(field(0)?, field(1)?));
    }
    let id = path.file_stem().map_or_else(|| "imported".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(IqCapture::new(samples, sample_rate_hz, id, Provenance::Imported))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::ParseError { line, message: format!("{other:?}") },
    }
}

/// `delay_us,power_db`
pub fn model_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("delay_us,power_db\n");
    for (d, p) in points {
        out.push_str(&format!("{d:.6},{p:.6}\n"));
    }
    out
}

/// `delay_us,power_db,power_linear`, linear column peak-normalized to match
/// the dB column.
pub fn pdp_csv(pdp: &Pdp) -> String {
    let mut out = String::from("delay_us,power_db,power_linear\n");
    for (d, p) in pdp.delays_us.iter().zip(&pdp.power_db) {
        let lin = if *p <= crate::estimator::DB_SENTINEL { 0.0 } else { 10f64.powf(p / 10.0) };
        out.push_str(&format!("{d:.6},{p:.6},{lin:.6}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpMeta {
    pub n_averaged: usize,
    pub noise_floor_db: Option<f64>,
    pub offset: Option<usize>,
    pub delay_resolution_us: f64,
    pub window_len: usize,
}

impl PdpMeta {
    pub fn of(pdp: &Pdp) -> Self {
        PdpMeta {
            n_averaged: pdp.n_averaged,
            noise_floor_db: pdp.noise_floor_db,
            offset: pdp.offset,
            delay_resolution_us: pdp.delay_resolution_us(),
            window_len: pdp.len(),
        }
    }
}

/// `pdp.csv` -> `pdp.meta.json`.
pub fn pdp_meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn write_pdp(pdp: &Pdp, path: &Path) -> Result<()> {
    fs::write(path, pdp_csv(pdp))?;
    let mut text = serde_json::to_string_pretty(&PdpMeta::of(pdp))?;
    text.push('\n');
    fs::write(pdp_meta_path(path), text)?;
    Ok(())
}

/// Reads a PDP CSV; the sidecar, when present, supplies the averaging count,
/// noise floor and offset.
pub fn read_pdp(path: &Path) -> Result<Pdp> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let idx = |name: &str| headers.iter().position(|h| h == name);
    let (Some(di), Some(pi)) = (idx("delay_us"), idx("power_db")) else {
        return Err(Error::ParseError { line: 1, message: "expected columns delay_us,power_db".into() });
    };
    let mut delays = Vec::new();
    let mut power_db = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let line = n + 2;
        let record = record.map_err(|e| Error::ParseError { line, message: e.to_string() })?;
        let num = |k: usize| -> Result<f64> {
            let raw = record.get(k).unwrap_or("");
            raw.parse().map_err(|_| Error::ParseError { line, message: format!("'{raw}' is not a number") })
        };
        delays.push(num(di)?);
        power_db.push(num(pi)?);
    }
    let mut pdp = Pdp::from_db(delays, power_db, 0);
    let meta_path = pdp_meta_path(path);
    if meta_path.exists() {
        let meta: PdpMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)
            .map_err(|e| Error::FormatError(format!("bad PDP sidecar: {e}")))?;
        pdp.n_averaged = meta.n_averaged;
        pdp.noise_floor_db = meta.noise_floor_db;
        pdp.offset = meta.offset;
    }
    Ok(pdp)
}

/// `delay_us,pdp_db,model_db,residual_db`; empty model cells mark delays
/// where the model has no path.
pub fn compare_csv(report: &CompareReport) -> String {
    let mut out = String::from("delay_us,pdp_db,model_db,residual_db\n");
    for r in &report.residuals {
        let model = r.model_db.map_or_else(String::new, |m| format!("{m:.6}"));
        out.push_str(&format!("{:.6},{:.6},{},{:.6}\n", r.delay_us, r.pdp_db, model, r.residual_db));
    }
    out
}
