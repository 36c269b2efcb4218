//! Piecewise power-delay-profile models and their discretization into taps.
//!
//! A model is an ordered list of segments, each giving the power in dB over a
//! delay interval `[tau_lo, tau_hi)`. Delays outside every segment evaluate
//! to the model floor. Two models are built in:
//!
//! * bad urban: `-1.7 tau` on `[0, 10)`, `-1.76 tau + 11.6` on `[10, 35)` and
//!   `55 * 0.85^(tau - 35) - 78` from 35 on;
//! * hilly terrain: `-8.6667 tau` on `[0, 3)`, `-4.8684 tau + 2.6053` on
//!   `[3, 6.8)`, `-4.2857 tau + 31.6429` on `[11, 14.5)`, `-30.5` elsewhere.
//!
//! Other profiles (for instance the COST-207 references under `profiles/`)
//! are loaded from JSON with [`load_model`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a segment's formula sees the absolute delay or the delay measured
/// from the segment start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayReference {
    Absolute,
    SegmentRelative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentShape {
    /// `slope * tau + intercept`
    LinearDb {
        slope_db_per_us: f64,
        intercept_db: f64,
    },
    /// `scale * base^tau + offset`
    ExponentialDb {
        scale_db: f64,
        base: f64,
        offset_db: f64,
    },
    ConstantDb {
        level_db: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdpSegment {
    pub shape: SegmentShape,
    pub tau_lo_us: f64,
    /// May be `f64::INFINITY`.
    pub tau_hi_us: f64,
    pub reference: DelayReference,
}

impl PdpSegment {
    pub fn new(shape: SegmentShape, tau_lo_us: f64, tau_hi_us: f64, reference: DelayReference) -> Result<Self> {
        if tau_lo_us.is_nan()
            || tau_hi_us.is_nan()
            || tau_lo_us < 0.0
            || tau_lo_us >= tau_hi_us
            || tau_lo_us.is_infinite()
        {
            return Err(Error::NegativeInterval(tau_lo_us, tau_hi_us));
        }
        match shape {
            SegmentShape::ExponentialDb { base, scale_db, offset_db } => {
                if !(base > 0.0 && base <= 1.0) {
                    return Err(Error::SchemaError(format!("exponential base {base} outside (0, 1]")));
                }
                if !scale_db.is_finite() || !offset_db.is_finite() {
                    return Err(Error::SchemaError("exponential coefficients must be finite".into()));
                }
            }
            SegmentShape::LinearDb { slope_db_per_us, intercept_db } => {
                if !slope_db_per_us.is_finite() || !intercept_db.is_finite() {
                    return Err(Error::SchemaError("linear coefficients must be finite".into()));
                }
            }
            SegmentShape::ConstantDb { level_db } => {
                if !level_db.is_finite() {
                    return Err(Error::SchemaError("constant level must be finite".into()));
                }
            }
        }
        Ok(PdpSegment { shape, tau_lo_us, tau_hi_us, reference })
    }

    pub fn linear(slope: f64, intercept: f64, lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            SegmentShape::LinearDb { slope_db_per_us: slope, intercept_db: intercept },
            lo,
            hi,
            DelayReference::Absolute,
        )
    }

    /// Left-closed, right-open.
    pub fn contains(&self, tau_us: f64) -> bool {
        tau_us >= self.tau_lo_us && tau_us < self.tau_hi_us
    }

    /// Formula value at `tau_us`, ignoring the interval bounds.
    pub fn value_db(&self, tau_us: f64) -> f64 {
        let t = match self.reference {
            DelayReference::Absolute => tau_us,
            DelayReference::SegmentRelative => tau_us - self.tau_lo_us,
        };
        match self.shape {
            SegmentShape::LinearDb { slope_db_per_us, intercept_db } => slope_db_per_us * t + intercept_db,
            SegmentShape::ExponentialDb { scale_db, base, offset_db } => scale_db * base.powf(t) + offset_db,
            SegmentShape::ConstantDb { level_db } => level_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdpModel {
    name: String,
    segments: Vec<PdpSegment>,
    floor_db: f64,
    max_delay_us: f64,
}

impl PdpModel {
    /// Sorts segments by start delay and rejects overlaps.
    pub fn new(
        name: impl Into<String>,
        mut segments: Vec<PdpSegment>,
        floor_db: f64,
        max_delay_us: f64,
    ) -> Result<Self> {
        if !floor_db.is_finite() {
            return Err(Error::SchemaError("floor_db must be finite".into()));
        }
        if !(max_delay_us > 0.0 && max_delay_us.is_finite()) {
            return Err(Error::SchemaError(format!("max_delay_us must be positive, got {max_delay_us}")));
        }
        segments.sort_by(|a, b| a.tau_lo_us.total_cmp(&b.tau_lo_us));
        for pair in segments.windows(2) {
            if pair[0].tau_hi_us > pair[1].tau_lo_us {
                return Err(Error::OverlappingSegments(
                    pair[0].tau_lo_us,
                    pair[0].tau_hi_us,
                    pair[1].tau_lo_us,
                    pair[1].tau_hi_us,
                ));
            }
        }
        Ok(PdpModel { name: name.into(), segments, floor_db, max_delay_us })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn segments(&self) -> &[PdpSegment] {
        &self.segments
    }

    pub fn floor_db(&self) -> f64 {
        self.floor_db
    }

    pub fn max_delay_us(&self) -> f64 {
        self.max_delay_us
    }

    pub fn segment_at(&self, tau_us: f64) -> Option<&PdpSegment> {
        self.segments.iter().find(|s| s.contains(tau_us))
    }

    /// Power in dB at `tau_us`; the floor when no segment covers the delay.
    pub fn eval_alpha(&self, tau_us: f64) -> Result<f64> {
        if tau_us < 0.0 || tau_us.is_nan() {
            return Err(Error::NegativeDelay(tau_us));
        }
        Ok(self.segment_at(tau_us).map_or(self.floor_db, |s| s.value_db(tau_us)))
    }

    /// Delays `0, spacing, 2 spacing, ...` up to and including the horizon.
    pub fn grid(&self, spacing_us: f64) -> Result<Vec<f64>> {
        delay_grid(self.max_delay_us, spacing_us)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelConfig::from(self)).expect("model config serializes")
    }
}

pub(crate) fn delay_grid(max_delay_us: f64, spacing_us: f64) -> Result<Vec<f64>> {
    if !(spacing_us > 0.0 && spacing_us.is_finite()) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing_us}")));
    }
    let n = (max_delay_us / spacing_us + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * spacing_us).collect())
}

/// Bad-urban model: three clusters, the last one decaying exponentially from
/// 23 dB below the peak.
pub fn builtin_bad_urban() -> PdpModel {
    let segments = vec![
        PdpSegment::linear(-1.7, 0.0, 0.0, 10.0).unwrap(),
        PdpSegment::linear(-1.76, 11.6, 10.0, 35.0).unwrap(),
        PdpSegment::new(
            SegmentShape::ExponentialDb { scale_db: 55.0, base: 0.85, offset_db: -78.0 },
            35.0,
            f64::INFINITY,
            DelayReference::SegmentRelative,
        )
        .unwrap(),
    ];
    PdpModel::new("bad_urban", segments, -78.0, 60.0).unwrap()
}

/// Hilly-terrain model: three linear clusters over a -30.5 dB floor.
pub fn builtin_hilly() -> PdpModel {
    let segments = vec![
        PdpSegment::linear(-8.6667, 0.0, 0.0, 3.0).unwrap(),
        PdpSegment::linear(-4.8684, 2.6053, 3.0, 6.8).unwrap(),
        PdpSegment::linear(-4.2857, 31.6429, 11.0, 14.5).unwrap(),
    ];
    PdpModel::new("hilly", segments, -30.5, 30.0).unwrap()
}

/// Resolves a built-in model by name (`bad-urban`/`bad_urban`, `hilly`).
pub fn builtin(name: &str) -> Result<PdpModel> {
    match name.to_ascii_lowercase().replace('-', "_").as_str() {
        "bad_urban" | "badurban" => Ok(builtin_bad_urban()),
        "hilly" | "hilly_terrain" => Ok(builtin_hilly()),
        _ => Err(Error::UnknownModel(name.to_string())),
    }
}

/// Parses a model from its JSON config.
pub fn load_model(config_text: &str) -> Result<PdpModel> {
    let config: ModelConfig = serde_json::from_str(config_text).map_err(|e| Error::SchemaError(e.to_string()))?;
    config.into_model()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfig {
    name: String,
    floor_db: f64,
    max_delay_us: f64,
    segments: Vec<SegmentConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentConfig {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intercept: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level: Option<f64>,
    tau_lo: f64,
    /// `null` or absent means unbounded.
    #[serde(default)]
    tau_hi: Option<f64>,
    #[serde(rename = "ref", default = "absolute")]
    reference: DelayReference,
}

fn absolute() -> DelayReference {
    DelayReference::Absolute
}

fn required(v: Option<f64>, field: &str, kind: &str) -> Result<f64> {
    v.ok_or_else(|| Error::SchemaError(format!("{kind} segment needs '{field}'")))
}

impl SegmentConfig {
    fn into_segment(self) -> Result<PdpSegment> {
        let kind = self.kind.as_str();
        let shape = match kind {
            "linear_db" => SegmentShape::LinearDb {
                slope_db_per_us: required(self.slope, "slope", kind)?,
                intercept_db: self.intercept.unwrap_or(0.0),
            },
            "exponential_db" => SegmentShape::ExponentialDb {
                scale_db: required(self.scale, "scale", kind)?,
                base: required(self.base, "base", kind)?,
                offset_db: self.offset.unwrap_or(0.0),
            },
            "constant_db" => SegmentShape::ConstantDb { level_db: required(self.level, "level", kind)? },
            other => return Err(Error::SchemaError(format!("unknown segment kind '{other}'"))),
        };
        PdpSegment::new(shape, self.tau_lo, self.tau_hi.unwrap_or(f64::INFINITY), self.reference)
    }
}

impl From<&PdpSegment> for SegmentConfig {
    fn from(s: &PdpSegment) -> Self {
        let mut c = SegmentConfig {
            kind: String::new(),
            slope: None,
            intercept: None,
            scale: None,
            base: None,
            offset: None,
            level: None,
            tau_lo: s.tau_lo_us,
            tau_hi: s.tau_hi_us.is_finite().then_some(s.tau_hi_us),
            reference: s.reference,
        };
        match s.shape {
            SegmentShape::LinearDb { slope_db_per_us, intercept_db } => {
                c.kind = "linear_db".into();
                c.slope = Some(slope_db_per_us);
                c.intercept = Some(intercept_db);
            }
            SegmentShape::ExponentialDb { scale_db, base, offset_db } => {
                c.kind = "exponential_db".into();
                c.scale = Some(scale_db);
                c.base = Some(base);
                c.offset = Some(offset_db);
            }
            SegmentShape::ConstantDb { level_db } => {
                c.kind = "constant_db".into();
                c.level = Some(level_db);
            }
        }
        c
    }
}

impl From<&PdpModel> for ModelConfig {
    fn from(m: &PdpModel) -> Self {
        ModelConfig {
            name: m.name.clone(),
            floor_db: m.floor_db,
            max_delay_us: m.max_delay_us,
            segments: m.segments.iter().map(SegmentConfig::from).collect(),
        }
    }
}

impl ModelConfig {
    fn into_model(self) -> Result<PdpModel> {
        let segments = self.segments.into_iter().map(SegmentConfig::into_segment).collect::<Result<Vec<_>>>()?;
        PdpModel::new(self.name, segments, self.floor_db, self.max_delay_us)
    }
}

/// One discrete multipath component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay_us: f64,
    pub power_db: f64,
    /// `10^(power_db / 20)`
    pub amplitude: f64,
}

impl Tap {
    pub fn new(delay_us: f64, power_db: f64) -> Self {
        Tap { delay_us, power_db, amplitude: db_to_amplitude(power_db) }
    }

    pub fn power_linear(&self) -> f64 {
        self.amplitude * self.amplitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    None,
    UnitTotalPower,
}

/// Taps in strictly ascending delay order.
#[derive(Debug, Clone, PartialEq)]
pub struct TapSet {
    taps: Vec<Tap>,
    normalization: Normalization,
}

impl TapSet {
    /// Builds a tap set from `(delay_us, power_db)` pairs.
    pub fn new(taps: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        Self::from_taps(taps.into_iter().map(|(d, p)| Tap::new(d, p)).collect())
    }

    pub fn from_taps(taps: Vec<Tap>) -> Result<Self> {
        for t in &taps {
            if t.delay_us < 0.0 || t.delay_us.is_nan() {
                return Err(Error::NegativeDelay(t.delay_us));
            }
            if t.amplitude.is_nan() || t.amplitude < 0.0 {
                return Err(Error::InvalidParameter(format!("tap amplitude {} is negative", t.amplitude)));
            }
        }
        if let Some(w) = taps.windows(2).find(|w| w[1].delay_us <= w[0].delay_us) {
            return Err(Error::InvalidParameter(format!(
                "tap delays must be strictly ascending ({} then {})",
                w[0].delay_us, w[1].delay_us
            )));
        }
        Ok(TapSet { taps, normalization: Normalization::None })
    }

    pub fn empty() -> Self {
        TapSet { taps: Vec::new(), normalization: Normalization::None }
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn total_power_linear(&self) -> f64 {
        self.taps.iter().map(Tap::power_linear).sum()
    }

    pub fn peak_db(&self) -> Option<f64> {
        self.taps.iter().map(|t| t.power_db).reduce(f64::max)
    }

    /// Rescales all taps so that their powers sum to one.
    pub fn normalized(&self) -> Result<TapSet> {
        let total = self.total_power_linear();
        if self.taps.is_empty() || total <= 0.0 {
            return Err(Error::EmptyTapSet);
        }
        let gain = 1.0 / total.sqrt();
        let taps = self
            .taps
            .iter()
            .map(|t| {
                let amplitude = t.amplitude * gain;
                Tap { delay_us: t.delay_us, power_db: 20.0 * amplitude.log10(), amplitude }
            })
            .collect();
        Ok(TapSet { taps, normalization: Normalization::UnitTotalPower })
    }
}

/// How [`sample_taps_with`] discretizes a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapSampling {
    pub spacing_us: f64,
    /// Taps more than this far below the grid peak are dropped (a negative
    /// number, e.g. `-40`).
    pub min_power_db: f64,
    /// Keep grid points that fall outside every segment (at the floor level).
    pub include_floor: bool,
    pub normalization: Normalization,
}

impl TapSampling {
    pub fn new(spacing_us: f64, min_power_db: f64) -> Self {
        TapSampling { spacing_us, min_power_db, include_floor: false, normalization: Normalization::None }
    }
}

/// Samples the model on a uniform delay grid; floor regions are dropped.
pub fn sample_taps(
    model: &PdpModel,
    spacing_us: f64,
    min_power_db: f64,
    normalization: Normalization,
) -> Result<TapSet> {
    sample_taps_with(model, &TapSampling { normalization, ..TapSampling::new(spacing_us, min_power_db) })
}

pub fn sample_taps_with(model: &PdpModel, sampling: &TapSampling) -> Result<TapSet> {
    let candidates: Vec<Tap> = model
        .grid(sampling.spacing_us)?
        .into_iter()
        .filter(|&tau| sampling.include_floor || model.segment_at(tau).is_some())
        .map(|tau| Ok(Tap::new(tau, model.eval_alpha(tau)?)))
        .collect::<Result<_>>()?;
    let peak = candidates.iter().map(|t| t.power_db).fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<Tap> = candidates.into_iter().filter(|t| t.power_db - peak >= sampling.min_power_db).collect();
    if kept.is_empty() {
        return Err(Error::EmptyTapSet);
    }
    let set = TapSet::from_taps(kept)?;
    match sampling.normalization {
        Normalization::None => Ok(set),
        Normalization::UnitTotalPower => set.normalized(),
    }
}

/// Model values on a uniform grid, for plotting and comparison.
pub fn eval_grid(model: &PdpModel, spacing_us: f64) -> Result<Vec<(f64, f64)>> {
    model.grid(spacing_us)?.into_iter().map(|tau| Ok((tau, model.eval_alpha(tau)?))).collect()
}

/// Mean excess delay and RMS delay spread of the model sampled on a uniform
/// grid (floor regions excluded), with delays measured from the first
/// sampled point.
pub fn analytic_dispersion(model: &PdpModel, spacing_us: f64) -> Result<(f64, f64)> {
    let mut points = Vec::new();
    for tau in model.grid(spacing_us)? {
        if model.segment_at(tau).is_some() {
            points.push((tau, db_to_power(model.eval_alpha(tau)?)));
        }
    }
    let first = points.first().ok_or(Error::EmptyTapSet)?.0;
    let total: f64 = points.iter().map(|p| p.1).sum();
    let m1 = points.iter().map(|&(t, p)| p * (t - first)).sum::<f64>() / total;
    let m2 = points.iter().map(|&(t, p)| p * (t - first).powi(2)).sum::<f64>() / total;
    Ok((m1, (m2 - m1 * m1).max(0.0).sqrt()))
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn bad_urban_spot_values() {
        let m = builtin_bad_urban();
        assert_eq!(m.segments().len(), 3);
        assert_eq!(m.segments()[0].tau_lo_us, 0.0);
        assert!(m.segments()[2].tau_hi_us.is_infinite());
        assert_eq!(m.eval_alpha(0.0).unwrap(), 0.0);
        assert!(close(m.eval_alpha(5.0).unwrap(), -8.5, 1e-12));
        assert!(close(m.eval_alpha(20.0).unwrap(), -23.6, 1e-12));
        assert!(close(m.eval_alpha(35.0).unwrap(), -23.0, 1e-12));
        // second cluster starts 6 dB down
        assert!(close(m.eval_alpha(10.0).unwrap(), -6.0, 1e-12));
    }

    #[test]
    fn hilly_spot_values() {
        let m = builtin_hilly();
        assert_eq!(m.eval_alpha(0.0).unwrap(), 0.0);
        assert_eq!(m.eval_alpha(8.0).unwrap(), -30.5);
        assert_eq!(m.eval_alpha(20.0).unwrap(), -30.5);
        assert!(close(m.eval_alpha(12.0).unwrap(), -4.2857 * 12.0 + 31.6429, 1e-12));
        // tau = 3 belongs to the second segment
        assert!(close(m.eval_alpha(3.0).unwrap(), -4.8684 * 3.0 + 2.6053, 1e-12));
        assert!(close(m.eval_alpha(3.0).unwrap(), -11.9999, 1e-9));
        assert_eq!(m.eval_alpha(6.8).unwrap(), -30.5);
        assert_eq!(m.eval_alpha(14.5).unwrap(), -30.5);
    }

    #[test]
    fn negative_delay_is_rejected() {
        assert!(matches!(builtin_hilly().eval_alpha(-0.1), Err(Error::NegativeDelay(_))));
    }

    #[test]
    fn builtin_lookup() {
        assert_eq!(builtin("bad-urban").unwrap(), builtin_bad_urban());
        assert_eq!(builtin("HILLY").unwrap(), builtin_hilly());
        assert!(matches!(builtin("rural"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn bad_urban_taps_on_unit_grid() {
        let taps = sample_taps(&builtin_bad_urban(), 1.0, -80.0, Normalization::None).unwrap();
        assert_eq!(taps.taps()[0].delay_us, 0.0);
        assert_eq!(taps.taps()[0].power_db, 0.0);
        let t35 = taps.taps().iter().find(|t| t.delay_us == 35.0).unwrap();
        assert!(close(t35.power_db, -23.0, 1e-12));
        assert_eq!(taps.len(), 61);
    }

    #[test]
    fn hilly_taps_skip_floor_and_weak_points() {
        let taps = sample_taps(&builtin_hilly(), 1.0, -25.0, Normalization::None).unwrap();
        let delays: Vec<f64> = taps.taps().iter().map(|t| t.delay_us).collect();
        // 6 us is -26.6 dB, 14 us is -28.4 dB
        assert_eq!(delays, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 11.0, 12.0, 13.0]);

        let with_floor =
            sample_taps_with(&builtin_hilly(), &TapSampling { include_floor: true, ..TapSampling::new(1.0, -40.0) })
                .unwrap();
        assert_eq!(with_floor.len(), 31);
    }

    #[test]
    fn threshold_above_peak_empties() {
        for m in [builtin_bad_urban(), builtin_hilly()] {
            assert!(matches!(sample_taps(&m, 1.0, 10.0, Normalization::None), Err(Error::EmptyTapSet)));
        }
        assert!(sample_taps(&builtin_hilly(), 0.0, -10.0, Normalization::None).is_err());
    }

    #[test]
    fn unit_power_normalization() {
        let taps = sample_taps(&builtin_bad_urban(), 1.0, -40.0, Normalization::UnitTotalPower).unwrap();
        assert!(close(taps.total_power_linear(), 1.0, 1e-12));
        assert_eq!(taps.normalization(), Normalization::UnitTotalPower);
        for t in taps.taps() {
            assert!(close(t.amplitude, db_to_amplitude(t.power_db), 1e-12));
        }
    }

    #[test]
    fn config_round_trip_and_errors() {
        for m in [builtin_bad_urban(), builtin_hilly()] {
            assert_eq!(load_model(&m.to_json()).unwrap(), m);
        }
        let text = r#"{"name":"bad_urban","floor_db":-78,"max_delay_us":60,"segments":[
            {"kind":"linear_db","slope":-1.7,"intercept":0,"tau_lo":0,"tau_hi":10,"ref":"absolute"},
            {"kind":"linear_db","slope":-1.76,"intercept":11.6,"tau_lo":10,"tau_hi":35,"ref":"absolute"},
            {"kind":"exponential_db","scale":55,"base":0.85,"offset":-78,"tau_lo":35,"tau_hi":null,"ref":"segment_relative"}]}"#;
        assert_eq!(load_model(text).unwrap(), builtin_bad_urban());

        let reversed = r#"{"name":"x","floor_db":-30,"max_delay_us":10,"segments":[
            {"kind":"constant_db","level":-3,"tau_lo":5,"tau_hi":2}]}"#;
        assert!(matches!(load_model(reversed), Err(Error::NegativeInterval(..))));

        let overlapping = r#"{"name":"x","floor_db":-30,"max_delay_us":10,"segments":[
            {"kind":"constant_db","level":0,"tau_lo":0,"tau_hi":3},
            {"kind":"constant_db","level":-3,"tau_lo":2,"tau_hi":5}]}"#;
        assert!(matches!(load_model(overlapping), Err(Error::OverlappingSegments(..))));

        let bad_kind = r#"{"name":"x","floor_db":-30,"max_delay_us":10,"segments":[
            {"kind":"cubic_db","tau_lo":0,"tau_hi":3}]}"#;
        assert!(matches!(load_model(bad_kind), Err(Error::SchemaError(_))));
        assert!(matches!(load_model("{"), Err(Error::SchemaError(_))));

        let growing = r#"{"name":"x","floor_db":-30,"max_delay_us":10,"segments":[
            {"kind":"exponential_db","scale":1,"base":1.2,"tau_lo":0}]}"#;
        assert!(matches!(load_model(growing), Err(Error::SchemaError(_))));
    }

    #[test]
    fn analytic_dispersion_simple_cases() {
        let single = PdpModel::new(
            "single",
            vec![PdpSegment::new(SegmentShape::ConstantDb { level_db: 0.0 }, 0.0, 0.5, DelayReference::Absolute)
                .unwrap()],
            -100.0,
            12.0,
        )
        .unwrap();
        assert_eq!(analytic_dispersion(&single, 1.0).unwrap(), (0.0, 0.0));

        let pair = PdpModel::new(
            "pair",
            vec![
                PdpSegment::new(SegmentShape::ConstantDb { level_db: 0.0 }, 0.0, 0.5, DelayReference::Absolute)
                    .unwrap(),
                PdpSegment::new(SegmentShape::ConstantDb { level_db: 0.0 }, 10.0, 10.5, DelayReference::Absolute)
                    .unwrap(),
            ],
            -100.0,
            12.0,
        )
        .unwrap();
        let (mean, rms) = analytic_dispersion(&pair, 1.0).unwrap();
        assert!(close(mean, 5.0, 1e-12) && close(rms, 5.0, 1e-12));
    }
}
