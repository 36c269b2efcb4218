//! Delay-dispersion metrics and model comparison.
//!
//! Moments use linear tap powers with delays measured from the first tap.
//! Coherence bandwidth follows the 50 % correlation rule `1 / (5 sigma)`.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{default_noise_floor, extract_taps, Pdp, DB_SENTINEL};
use crate::models::{PdpModel, TapSet};

pub const DEFAULT_CLUSTER_GAP_US: f64 = 2.0;

/// Power rise between consecutive taps that opens a new cluster even when
/// the taps are adjacent in delay.
pub const DEFAULT_CLUSTER_RISE_DB: f64 = 3.0;

/// Detection margin above the noise floor used by [`compare`] by default.
pub const DEFAULT_COMPARE_THRESHOLD_DB: f64 = 10.0;

fn weights(taps: &TapSet) -> Result<(f64, Vec<(f64, f64)>)> {
    let first = taps.taps().first().ok_or(Error::EmptyTapSet)?.delay_us;
    Ok((first, taps.taps().iter().map(|t| (t.delay_us - first, t.power_linear())).collect()))
}

pub fn mean_excess_delay(taps: &TapSet) -> Result<f64> {
    let (_, w) = weights(taps)?;
    let total: f64 = w.iter().map(|p| p.1).sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    Ok(w.iter().map(|&(d, p)| d * p).sum::<f64>() / total)
}

pub fn rms_delay_spread(taps: &TapSet) -> Result<f64> {
    let (_, w) = weights(taps)?;
    let total: f64 = w.iter().map(|p| p.1).sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let mean = w.iter().map(|&(d, p)| d * p).sum::<f64>() / total;
    let second = w.iter().map(|&(d, p)| d * d * p).sum::<f64>() / total;
    Ok((second - mean * mean).max(0.0).sqrt())
}

/// Largest excess delay among taps no more than `x_db` below the peak.
pub fn max_excess_delay(taps: &TapSet, x_db: f64) -> Result<f64> {
    let first = taps.taps().first().ok_or(Error::EmptyTapSet)?.delay_us;
    let peak = taps.peak_db().ok_or(Error::EmptyTapSet)?;
    Ok(taps.taps().iter().filter(|t| t.power_db >= peak - x_db).map(|t| t.delay_us - first).fold(0.0, f64::max))
}

/// `1 / (5 sigma)` in Hz for an RMS delay spread in microseconds.
pub fn coherence_bandwidth(rms_us: f64) -> Result<f64> {
    if rms_us.is_nan() || rms_us < 0.0 {
        return Err(Error::InvalidParameter(format!("delay spread {rms_us} is negative")));
    }
    if rms_us == 0.0 {
        return Err(Error::ZeroSpread);
    }
    Ok(1.0 / (5.0 * rms_us * 1e-6))
}

/// Groups of consecutive taps (see [`clusters_with`]).
pub fn cluster_count(taps: &TapSet, gap_us: f64) -> Result<usize> {
    Ok(clusters_with(taps, gap_us, DEFAULT_CLUSTER_RISE_DB)?.len())
}

/// Splits the taps into clusters. A new cluster opens when the delay step
/// from the previous tap exceeds `gap_us`, or when the power jumps up by more
/// than `rise_db` (a fresh arrival on top of a decaying cluster). Returns
/// index ranges into the tap list.
pub fn clusters_with(taps: &TapSet, gap_us: f64, rise_db: f64) -> Result<Vec<std::ops::Range<usize>>> {
    if gap_us.is_nan() || gap_us <= 0.0 {
        return Err(Error::InvalidParameter(format!("cluster gap must be positive, got {gap_us}")));
    }
    let t = taps.taps();
    if t.is_empty() {
        return Err(Error::EmptyTapSet);
    }
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..t.len() {
        let step = t[i].delay_us - t[i - 1].delay_us;
        let rise = t[i].power_db - t[i - 1].power_db;
        if step > gap_us + 1e-9 || rise > rise_db {
            out.push(start..i);
            start = i;
        }
    }
    out.push(start..t.len());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n_taps: usize,
    pub threshold_db: f64,
    pub noise_floor_db: Option<f64>,
    pub mean_excess_delay_us: f64,
    pub rms_delay_spread_us: f64,
    pub x_db: f64,
    pub max_excess_delay_us: f64,
    /// `None` when the delay spread is zero.
    pub coherence_bandwidth_hz: Option<f64>,
    pub cluster_gap_us: f64,
    pub cluster_count: usize,
}

impl MetricsReport {
    pub fn from_taps(taps: &TapSet, x_db: f64, gap_us: f64) -> Result<Self> {
        let rms = rms_delay_spread(taps)?;
        Ok(MetricsReport {
            n_taps: taps.len(),
            threshold_db: 0.0,
            noise_floor_db: None,
            mean_excess_delay_us: mean_excess_delay(taps)?,
            rms_delay_spread_us: rms,
            x_db,
            max_excess_delay_us: max_excess_delay(taps, x_db)?,
            coherence_bandwidth_hz: coherence_bandwidth(rms).ok(),
            cluster_gap_us: gap_us,
            cluster_count: cluster_count(taps, gap_us)?,
        })
    }

    /// Detects taps in the PDP and reports on them.
    pub fn from_pdp(pdp: &Pdp, threshold_db: f64, x_db: f64, gap_us: f64) -> Result<Self> {
        let floor = match pdp.noise_floor_db {
            Some(f) => f,
            None => default_noise_floor(pdp)?,
        };
        let mut with_floor = pdp.clone();
        with_floor.noise_floor_db = Some(floor);
        let taps = extract_taps(&with_floor, threshold_db)?;
        let mut report = Self::from_taps(&taps, x_db, gap_us)?;
        report.threshold_db = threshold_db;
        report.noise_floor_db = Some(floor);
        Ok(report)
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28} {}", "taps", self.n_taps)?;
        if let Some(floor) = self.noise_floor_db {
            writeln!(f, "{:<28} {:.2} dB", "noise floor", floor)?;
        }
        writeln!(f, "{:<28} {:.3} us", "mean excess delay", self.mean_excess_delay_us)?;
        writeln!(f, "{:<28} {:.3} us", "rms delay spread", self.rms_delay_spread_us)?;
        writeln!(f, "{:<28} {:.3} us", format!("max excess delay ({} dB)", self.x_db), self.max_excess_delay_us)?;
        match self.coherence_bandwidth_hz {
            Some(bc) => writeln!(f, "{:<28} {:.1} kHz", "coherence bandwidth", bc / 1e3)?,
            None => writeln!(f, "{:<28} unbounded", "coherence bandwidth")?,
        }
        write!(f, "{:<28} {}", "clusters", self.cluster_count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub delay_us: f64,
    pub pdp_db: f64,
    /// `None` where the model has no propagation path (floor region).
    pub model_db: Option<f64>,
    /// Difference after clamping both sides to the detection level.
    pub residual_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDelta {
    pub start_us: f64,
    pub end_us: f64,
    pub model_peak_db: f64,
    pub pdp_peak_db: f64,
    pub peak_delta_db: f64,
    pub mean_residual_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub model: String,
    pub rmse_db: f64,
    pub n_points: usize,
    pub detection_level_db: f64,
    pub pdp_clusters: usize,
    pub model_clusters: usize,
    pub clusters: Vec<ClusterDelta>,
    pub residuals: Vec<Residual>,
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "model {}: rmse {:.3} dB over {} points (detection level {:.2} dB)",
            self.model, self.rmse_db, self.n_points, self.detection_level_db
        )?;
        writeln!(f, "clusters: pdp {} / model {}", self.pdp_clusters, self.model_clusters)?;
        for c in &self.clusters {
            writeln!(
                f,
                "  [{:>6.2}, {:>6.2}] us  model {:>7.2} dB  pdp {:>7.2} dB  delta {:>+6.2} dB  mean residual {:>+6.2} dB",
                c.start_us, c.end_us, c.model_peak_db, c.pdp_peak_db, c.peak_delta_db, c.mean_residual_db
            )?;
        }
        Ok(())
    }
}

/// Compares a measured PDP with a model resampled on the PDP grid.
///
/// Both are normalized to a 0 dB peak. The detection level is the PDP noise
/// floor plus `threshold_db`; values below it cannot be told apart, so both
/// sides are clamped to it and the RMSE runs over every grid point where
/// either the PDP or the model is above it. Model floor regions count as no
/// path. Delays past the model's maximum delay are outside what the model
/// describes and are left out.
pub fn compare(pdp: &Pdp, model: &PdpModel, threshold_db: f64) -> Result<CompareReport> {
    if pdp.is_empty() {
        return Err(Error::EmptyTapSet);
    }
    let floor = match pdp.noise_floor_db {
        Some(f) => f,
        None => default_noise_floor(pdp)?,
    };
    let detect = floor + threshold_db;
    let pdp_peak = pdp.power_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let horizon = pdp.delays_us.iter().take_while(|&&tau| tau <= model.max_delay_us() + 1e-9).count();
    let delays = &pdp.delays_us[..horizon];
    let powers = &pdp.power_db[..horizon];
    let mut model_vals = Vec::with_capacity(horizon);
    for &tau in delays {
        let v = if model.segment_at(tau).is_some() { Some(model.eval_alpha(tau)?) } else { None };
        model_vals.push(v);
    }
    let model_peak = model_vals.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut residuals = Vec::new();
    let mut sq = 0.0;
    for ((&tau, &p), m) in delays.iter().zip(powers).zip(&model_vals) {
        let p = p - pdp_peak;
        let m = m.map(|m| m - model_peak);
        let m_level = m.unwrap_or(DB_SENTINEL);
        if p < detect && m_level < detect {
            continue;
        }
        let r = p.max(detect) - m_level.max(detect);
        sq += r * r;
        residuals.push(Residual { delay_us: tau, pdp_db: p, model_db: m, residual_db: r });
    }
    let n_points = residuals.len();
    let rmse_db = if n_points == 0 { 0.0 } else { (sq / n_points as f64).sqrt() };

    let pdp_taps = tapset_above(delays, powers.iter().map(|&p| Some(p - pdp_peak)), detect)?;
    let model_taps = tapset_above(delays, model_vals.iter().map(|m| m.map(|m| m - model_peak)), detect)?;
    let count = |t: &TapSet| if t.is_empty() { Ok(0) } else { cluster_count(t, DEFAULT_CLUSTER_GAP_US) };

    let mut clusters = Vec::new();
    if !model_taps.is_empty() {
        for range in clusters_with(&model_taps, DEFAULT_CLUSTER_GAP_US, DEFAULT_CLUSTER_RISE_DB)? {
            let members = &model_taps.taps()[range];
            let start_us = members[0].delay_us;
            let end_us = members[members.len() - 1].delay_us;
            let model_peak_db = members.iter().map(|t| t.power_db).fold(f64::NEG_INFINITY, f64::max);
            let in_cluster: Vec<&Residual> =
                residuals.iter().filter(|r| r.delay_us >= start_us - 1e-9 && r.delay_us <= end_us + 1e-9).collect();
            let pdp_peak_db = in_cluster.iter().map(|r| r.pdp_db).fold(f64::NEG_INFINITY, f64::max);
            let mean_residual_db =
                in_cluster.iter().map(|r| r.residual_db).sum::<f64>() / in_cluster.len().max(1) as f64;
            clusters.push(ClusterDelta {
                start_us,
                end_us,
                model_peak_db,
                pdp_peak_db,
                peak_delta_db: pdp_peak_db - model_peak_db,
                mean_residual_db,
            });
        }
    }

    Ok(CompareReport {
        model: model.name().to_string(),
        rmse_db,
        n_points,
        detection_level_db: detect,
        pdp_clusters: count(&pdp_taps)?,
        model_clusters: count(&model_taps)?,
        clusters,
        residuals,
    })
}

fn tapset_above(delays: &[f64], values: impl Iterator<Item = Option<f64>>, level: f64) -> Result<TapSet> {
    TapSet::new(delays.iter().zip(values).filter_map(|(&d, v)| v.filter(|&v| v >= level).map(|v| (d, v))))
}
