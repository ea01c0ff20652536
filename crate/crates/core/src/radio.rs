//! Link budget and jamming physics.
//!
//! Powers are carried in dBm and converted to watts only where they are
//! summed. An absent interferer is represented by `f64::NEG_INFINITY` dBm,
//! which maps to exactly 0 W.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRID_POINTS: usize = 15;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    if dbm == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf((dbm - 30.0) / 10.0)
    }
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    if watts <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * watts.log10() + 30.0
    }
}

/// Free-space path loss in dB for a distance in km and a frequency in MHz.
pub fn path_loss_db(d_km: f64, f_mhz: f64) -> Result<f64> {
    if !(d_km > 0.0) || !(f_mhz > 0.0) {
        return Err(Error::Domain(format!(
            "path loss needs positive distance and frequency (d={d_km} km, f={f_mhz} MHz)"
        )));
    }
    Ok(32.44 + 20.0 * d_km.log10() + 20.0 * f_mhz.log10())
}

/// Integrated thermal noise over `b_hz` for a spectral density in dBm/Hz.
pub fn noise_floor_dbm(density_dbm_hz: f64, b_hz: f64) -> f64 {
    density_dbm_hz + 10.0 * b_hz.log10()
}

/// Interference seen by the ally: `k` scales the jammer's linear power, and
/// only the fraction of the ally band inside the jammer support counts.
pub fn interference_power_dbm(k: f64, p_opponent_dbm: f64, l_opponent_db: f64, overlap: f64) -> f64 {
    if overlap <= 0.0 {
        return f64::NEG_INFINITY;
    }
    watts_to_dbm(k * dbm_to_watts(p_opponent_dbm) * overlap) - l_opponent_db
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    /// Signal is `P_base - L_base`; interference only enters the SINR denominator.
    #[default]
    Conventional,
    /// Interference is also subtracted (in watts) from the received signal.
    Literal,
}

/// Received signal power at the ally. Literal-mode results that are not
/// positive in watts are floored at `floor_dbm`.
pub fn received_power_dbm(p_base_dbm: f64, l_base_db: f64, n_i_dbm: f64, mode: LinkMode, floor_dbm: f64) -> f64 {
    let direct = p_base_dbm - l_base_db;
    match mode {
        LinkMode::Conventional => direct,
        LinkMode::Literal => {
            let signal = dbm_to_watts(direct);
            let w = signal - dbm_to_watts(n_i_dbm).max(0.0);
            // cancellation below float resolution of the signal counts as zero
            if w > signal * 1e-9 {
                watts_to_dbm(w).max(floor_dbm)
            } else {
                floor_dbm
            }
        }
    }
}

fn sinr_ratio(i_dbm: f64, n0_dbm: f64, n_i_dbm: f64) -> f64 {
    dbm_to_watts(i_dbm) / (dbm_to_watts(n0_dbm) + dbm_to_watts(n_i_dbm))
}

pub fn snr_db(i_dbm: f64, n0_dbm: f64, n_i_dbm: f64) -> f64 {
    10.0 * sinr_ratio(i_dbm, n0_dbm, n_i_dbm).log10()
}

/// Shannon capacity in bit/s.
pub fn channel_capacity(b_hz: f64, i_dbm: f64, n0_dbm: f64, n_i_dbm: f64) -> f64 {
    // ln_1p keeps precision when the SINR is far below one
    b_hz * sinr_ratio(i_dbm, n0_dbm, n_i_dbm).ln_1p() / std::f64::consts::LN_2
}

/// The base station's channel plan.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() != GRID_POINTS {
            return Err(Error::config(
                "radio.grid",
                format!("expected {GRID_POINTS} points, got {}", points.len()),
            ));
        }
        if points.iter().any(|f| !(150.0..=250.0).contains(f)) {
            return Err(Error::config("radio.grid", "points must lie within [150, 250] MHz"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("radio.grid", "points must be strictly increasing"));
        }
        Ok(Self { points })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let step = (hi - lo) / (GRID_POINTS - 1) as f64;
        Self::new((0..GRID_POINTS).map(|i| lo + step * i as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[GRID_POINTS - 1]
    }

    pub fn span(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn nearest_index(&self, f: f64) -> usize {
        let mut best = 0;
        for (i, p) in self.points.iter().enumerate() {
            if (p - f).abs() < (self.points[best] - f).abs() {
                best = i;
            }
        }
        best
    }

    /// Maps `[0, 1]` onto grid indices (rounding to nearest).
    pub fn index_from_unit(&self, u: f64) -> usize {
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        (u * (GRID_POINTS - 1) as f64).round() as usize
    }

    /// Maps `[0, 1]` continuously onto `[min, max]`.
    pub fn freq_from_unit(&self, u: f64) -> f64 {
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        self.min() + u * self.span()
    }

    pub fn normalize(&self, f: f64) -> f64 {
        (f - self.min()) / self.span()
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self::uniform(150.0, 250.0).expect("default grid is valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JamKind {
    SingleTone,
    NarrowbandTargeted,
    BroadbandBlocking,
    CombSpectrum,
}

impl JamKind {
    pub const ALL: [JamKind; 4] = [
        JamKind::SingleTone,
        JamKind::NarrowbandTargeted,
        JamKind::BroadbandBlocking,
        JamKind::CombSpectrum,
    ];

    /// Interference intensity coefficient.
    pub fn k(self) -> f64 {
        match self {
            JamKind::SingleTone => 1.5,
            JamKind::NarrowbandTargeted => 1.2,
            JamKind::BroadbandBlocking => 0.4,
            JamKind::CombSpectrum => 0.8,
        }
    }

    /// Snake-case name, as used in configs and logs.
    pub fn slug(self) -> &'static str {
        match self {
            JamKind::SingleTone => "single_tone",
            JamKind::NarrowbandTargeted => "narrowband_targeted",
            JamKind::BroadbandBlocking => "broadband_blocking",
            JamKind::CombSpectrum => "comb_spectrum",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> JamKind {
        JamKind::ALL[i.min(3)]
    }

    pub fn from_unit(u: f64) -> JamKind {
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        JamKind::from_index((u * 4.0).floor() as usize)
    }

    pub fn label(self) -> &'static str {
        match self {
            JamKind::SingleTone => "single_tone",
            JamKind::NarrowbandTargeted => "narrowband_targeted",
            JamKind::BroadbandBlocking => "broadband_blocking",
            JamKind::CombSpectrum => "comb_spectrum",
        }
    }
}

impl fmt::Display for JamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Spectral support of a jammer, in MHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JamShape {
    SingleTone { f_j: f64, tooth_width: f64 },
    NarrowbandTargeted { f_c: f64, bandwidth: f64 },
    BroadbandBlocking { f_min: f64, f_max: f64 },
    CombSpectrum { f_0: f64, spacing: f64, teeth: u32, tooth_width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JammingSpec {
    pub shape: JamShape,
    /// Jammer transmit power in dBm.
    pub power_dbm: f64,
}

impl JammingSpec {
    pub fn new(shape: JamShape, power_dbm: f64) -> Result<Self> {
        let spec = Self { shape, power_dbm };
        spec.validate()?;
        Ok(spec)
    }

    pub fn kind(&self) -> JamKind {
        match self.shape {
            JamShape::SingleTone { .. } => JamKind::SingleTone,
            JamShape::NarrowbandTargeted { .. } => JamKind::NarrowbandTargeted,
            JamShape::BroadbandBlocking { .. } => JamKind::BroadbandBlocking,
            JamShape::CombSpectrum { .. } => JamKind::CombSpectrum,
        }
    }

    pub fn k(&self) -> f64 {
        self.kind().k()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("jamming spec: {m}")));
        match self.shape {
            JamShape::SingleTone { tooth_width, .. } if !(tooth_width > 0.0) => return bad("tooth width must be positive"),
            JamShape::NarrowbandTargeted { bandwidth, .. } if !(bandwidth > 0.0) => return bad("bandwidth must be positive"),
            JamShape::BroadbandBlocking { f_min, f_max } if !(f_min < f_max) => return bad("f_min must be below f_max"),
            JamShape::CombSpectrum { spacing, teeth, tooth_width, .. } => {
                if !(spacing > 0.0) {
                    return bad("comb spacing must be positive");
                }
                if teeth == 0 {
                    return bad("comb needs at least one tooth");
                }
                if !(tooth_width > 0.0) {
                    return bad("tooth width must be positive");
                }
            }
            _ => {}
        }
        if !self.support().iter().any(|&(lo, hi)| hi >= 100.0 && lo <= 300.0) {
            return bad("support does not intersect [100, 300] MHz");
        }
        Ok(())
    }

    /// Disjoint, ascending intervals where the jammer radiates.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let raw: Vec<(f64, f64)> = match self.shape {
            JamShape::SingleTone { f_j, tooth_width } => vec![(f_j - tooth_width / 2.0, f_j + tooth_width / 2.0)],
            JamShape::NarrowbandTargeted { f_c, bandwidth } => vec![(f_c - bandwidth / 2.0, f_c + bandwidth / 2.0)],
            JamShape::BroadbandBlocking { f_min, f_max } => vec![(f_min, f_max)],
            JamShape::CombSpectrum { f_0, spacing, teeth, tooth_width } => (0..teeth)
                .map(|n| {
                    let c = f_0 + n as f64 * spacing;
                    (c - tooth_width / 2.0, c + tooth_width / 2.0)
                })
                .collect(),
        };
        merge_intervals(raw)
    }

    /// Outer envelope of the support (lowest, highest radiated frequency).
    pub fn envelope(&self) -> (f64, f64) {
        let s = self.support();
        (s[0].0, s[s.len() - 1].1)
    }

    /// Nominal center used by the knowledge base's distance rule.
    pub fn center(&self) -> f64 {
        match self.shape {
            JamShape::SingleTone { f_j, .. } => f_j,
            JamShape::NarrowbandTargeted { f_c, .. } => f_c,
            _ => {
                let (lo, hi) = self.envelope();
                (lo + hi) / 2.0
            }
        }
    }
}

fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Widths used when the opponent builds a jammer around a target frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JamWidths {
    pub single_tone_width: f64,
    pub narrowband_bandwidth: f64,
    pub broadband_half_width: f64,
    pub comb_f0: f64,
    pub comb_spacing: f64,
    pub comb_teeth: u32,
    pub comb_tooth_width: f64,
    /// Broadband bands are clipped to this range.
    pub band_lo: f64,
    pub band_hi: f64,
}

impl Default for JamWidths {
    fn default() -> Self {
        Self {
            single_tone_width: 0.2,
            narrowband_bandwidth: 10.0,
            broadband_half_width: 30.0,
            comb_f0: 150.0,
            comb_spacing: 10.0,
            comb_teeth: 11,
            comb_tooth_width: 1.0,
            band_lo: 150.0,
            band_hi: 250.0,
        }
    }
}

impl JamWidths {
    pub fn shape_for(&self, kind: JamKind, target: f64) -> JamShape {
        match kind {
            JamKind::SingleTone => JamShape::SingleTone {
                f_j: target,
                tooth_width: self.single_tone_width,
            },
            JamKind::NarrowbandTargeted => JamShape::NarrowbandTargeted {
                f_c: target,
                bandwidth: self.narrowband_bandwidth,
            },
            JamKind::BroadbandBlocking => {
                let lo = (target - self.broadband_half_width).max(self.band_lo);
                let hi = (target + self.broadband_half_width).min(self.band_hi);
                JamShape::BroadbandBlocking {
                    f_min: lo,
                    f_max: hi.max(lo + 1e-6),
                }
            }
            // the comb is a fixed spectral pattern and does not follow the target
            JamKind::CombSpectrum => JamShape::CombSpectrum {
                f_0: self.comb_f0,
                spacing: self.comb_spacing,
                teeth: self.comb_teeth,
                tooth_width: self.comb_tooth_width,
            },
        }
    }

    pub fn spec_for(&self, kind: JamKind, target: f64, power_dbm: f64) -> JammingSpec {
        JammingSpec {
            shape: self.shape_for(kind, target),
            power_dbm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kb.widths.single_tone_width", self.single_tone_width),
            ("kb.widths.narrowband_bandwidth", self.narrowband_bandwidth),
            ("kb.widths.broadband_half_width", self.broadband_half_width),
            ("kb.widths.comb_spacing", self.comb_spacing),
            ("kb.widths.comb_tooth_width", self.comb_tooth_width),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.comb_teeth == 0 {
            return Err(Error::config("kb.widths.comb_teeth", "must be at least 1"));
        }
        if !(self.band_lo < self.band_hi) {
            return Err(Error::config("kb.widths.band_lo", "must be below band_hi"));
        }
        Ok(())
    }
}

/// The ally's occupied band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllyChannel {
    pub center: f64,
    pub bandwidth: f64,
    pub spread: bool,
}

impl AllyChannel {
    pub const NARROW_MHZ: f64 = 5.0;
    pub const SPREAD_MHZ: f64 = 2400.0;

    pub fn narrow(center: f64) -> Self {
        Self {
            center,
            bandwidth: Self::NARROW_MHZ,
            spread: false,
        }
    }

    pub fn spread(center: f64) -> Self {
        Self {
            center,
            bandwidth: Self::SPREAD_MHZ,
            spread: true,
        }
    }

    pub fn with_spread(center: f64, spread: bool, bandwidths: &Bandwidths) -> Self {
        Self {
            center,
            bandwidth: if spread { bandwidths.spread_mhz } else { bandwidths.narrow_mhz },
            spread,
        }
    }

    pub fn band(&self) -> (f64, f64) {
        (self.center - self.bandwidth / 2.0, self.center + self.bandwidth / 2.0)
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth * 1e6
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bandwidths {
    pub narrow_mhz: f64,
    pub spread_mhz: f64,
}

impl Default for Bandwidths {
    fn default() -> Self {
        Self {
            narrow_mhz: AllyChannel::NARROW_MHZ,
            spread_mhz: AllyChannel::SPREAD_MHZ,
        }
    }
}

/// Fraction of the ally band covered by the jammer's support.
pub fn band_overlap_fraction(jam: &JammingSpec, ch: &AllyChannel) -> f64 {
    let (lo, hi) = ch.band();
    let width = hi - lo;
    if width <= 0.0 {
        return 0.0;
    }
    let covered: f64 = jam
        .support()
        .iter()
        .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
        .sum();
    (covered / width).clamp(0.0, 1.0)
}

/// Every quantity entering the ally's SINR on one tick.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinkBudget {
    pub p_base_dbm: f64,
    pub l_base_db: f64,
    pub p_opponent_dbm: f64,
    pub l_opponent_db: f64,
    pub n0_dbm: f64,
    /// `-inf` without spectral overlap.
    pub n_i_dbm: f64,
    pub i_dbm: f64,
    pub snr_db: f64,
    pub capacity_bps: f64,
}

/// Inputs for [`LinkBudget::evaluate`]; distances in meters.
#[derive(Clone, Copy, Debug)]
pub struct LinkGeometry {
    pub base_distance_m: f64,
    pub opponent_distance_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    #[serde(rename = "P_base")]
    pub p_base_dbm: f64,
    #[serde(rename = "P_opponent")]
    pub p_opponent_dbm: f64,
    /// dBm/Hz
    pub noise_density: f64,
    pub bandwidths: Bandwidths,
    pub link_mode: LinkMode,
    pub power_floor_dbm: f64,
    /// Distances are clamped to this many meters before computing path loss.
    pub min_distance_m: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            p_base_dbm: 45.0,
            p_opponent_dbm: 20.0,
            noise_density: -170.0,
            bandwidths: Bandwidths::default(),
            link_mode: LinkMode::Conventional,
            power_floor_dbm: -200.0,
            min_distance_m: 1.0,
        }
    }
}

impl LinkBudget {
    pub fn evaluate(params: &RadioParams, ch: &AllyChannel, jam: Option<&JammingSpec>, geo: LinkGeometry) -> Result<Self> {
        let d_base = geo.base_distance_m.max(params.min_distance_m) / 1000.0;
        let d_opp = geo.opponent_distance_m.max(params.min_distance_m) / 1000.0;
        let l_base = path_loss_db(d_base, ch.center)?;
        let l_opp = path_loss_db(d_opp, ch.center)?;
        let (n_i, p_opp) = match jam {
            Some(j) => {
                let overlap = band_overlap_fraction(j, ch);
                (interference_power_dbm(j.k(), j.power_dbm, l_opp, overlap), j.power_dbm)
            }
            None => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        let n0 = noise_floor_dbm(params.noise_density, ch.bandwidth_hz());
        let i = received_power_dbm(params.p_base_dbm, l_base, n_i, params.link_mode, params.power_floor_dbm);
        Ok(Self {
            p_base_dbm: params.p_base_dbm,
            l_base_db: l_base,
            p_opponent_dbm: p_opp,
            l_opponent_db: l_opp,
            n0_dbm: n0,
            n_i_dbm: n_i,
            i_dbm: i,
            snr_db: snr_db(i, n0, n_i),
            capacity_bps: channel_capacity(ch.bandwidth_hz(), i, n0, n_i),
        })
    }
}
