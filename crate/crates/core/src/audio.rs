//! Voice gain over distance.
//!
//! Gain is 1 up to the zone's reference distance and is multiplied by the
//! attenuation coefficient for every doubling of distance beyond it:
//! `gain(d) = coef ^ log2(d / ref_distance)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

pub const DEFAULT_EPSILON: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AudioError {
    #[error("attenuation coefficient must be in (0, 1], got {0}")]
    InvalidCoefficient(f64),
    #[error("reference distance must be positive, got {0}")]
    InvalidReferenceDistance(f64),
    #[error("audibility threshold must be in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("coefficient 1 never attenuates; no distance is private")]
    NoPrivacy,
    #[error("client {0:?} is grouped but has no position")]
    MissingPosition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioZone {
    pub coef: f64,
    pub ref_distance: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl Default for AudioZone {
    fn default() -> Self {
        Self { coef: 0.5, ref_distance: 1.0, epsilon: DEFAULT_EPSILON }
    }
}

impl AudioZone {
    pub fn new(coef: f64, ref_distance: f64, epsilon: f64) -> Result<Self, AudioError> {
        let zone = Self { coef, ref_distance, epsilon };
        zone.validate()?;
        Ok(zone)
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if !(self.coef > 0.0 && self.coef <= 1.0) {
            return Err(AudioError::InvalidCoefficient(self.coef));
        }
        if !(self.ref_distance > 0.0 && self.ref_distance.is_finite()) {
            return Err(AudioError::InvalidReferenceDistance(self.ref_distance));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(AudioError::InvalidEpsilon(self.epsilon));
        }
        Ok(())
    }
}

/// Splits `ratio >= 1` into `(octaves, mantissa)` with
/// `ratio = mantissa * 2^octaves` and `mantissa` in `[1, 2)`. Exact.
fn split_octaves(ratio: f64) -> (u32, f64) {
    const EXP_MASK: u64 = 0x7ff << 52;
    let bits = ratio.to_bits();
    let octaves = ((bits & EXP_MASK) >> 52) as u32 - 1023;
    let mantissa = f64::from_bits((bits & !EXP_MASK) | (1023 << 52));
    (octaves, mantissa)
}

/// Gain heard at distance `d` from a speaker, in `[0, 1]`.
///
/// Whole octaves are applied as repeated multiplication by `coef`, so
/// `gain(2d) == coef * gain(d)` holds bit-for-bit for `d >= ref_distance`.
pub fn gain(zone: &AudioZone, d: f64) -> f64 {
    if d <= zone.ref_distance || zone.coef == 1.0 {
        return 1.0;
    }
    let ratio = d / zone.ref_distance;
    if !ratio.is_finite() {
        return 0.0;
    }
    let (octaves, mantissa) = split_octaves(ratio);
    let mut g = zone.coef.powf(mantissa.log2());
    for _ in 0..octaves {
        if g == 0.0 {
            break;
        }
        g *= zone.coef;
    }
    g
}

/// `gains[listener][speaker]` for every ordered pair of clients, ordered by
/// client id. The diagonal is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    pub ids: Vec<String>,
    pub gains: Vec<Vec<f64>>,
}

impl GainMatrix {
    pub fn get(&self, listener: &str, speaker: &str) -> Option<f64> {
        let l = self.ids.iter().position(|id| id == listener)?;
        let s = self.ids.iter().position(|id| id == speaker)?;
        Some(self.gains[l][s])
    }
}

pub fn gain_matrix(zone: &AudioZone, positions: &BTreeMap<String, Vec3>) -> GainMatrix {
    let ids: Vec<String> = positions.keys().cloned().collect();
    let points: Vec<Vec3> = positions.values().copied().collect();
    let n = ids.len();
    let mut gains = vec![vec![0.0; n]; n];
    for l in 0..n {
        for s in (l + 1)..n {
            let g = gain(zone, points[l].distance(points[s]));
            gains[l][s] = g;
            gains[s][l] = g;
        }
    }
    GainMatrix { ids, gains }
}

/// Smallest distance at which gain drops to `epsilon` or below.
pub fn privacy_radius(zone: &AudioZone) -> Result<f64, AudioError> {
    if zone.coef >= 1.0 {
        return Err(AudioError::NoPrivacy);
    }
    let octaves = zone.epsilon.log2() / zone.coef.log2();
    let mut radius = zone.ref_distance * octaves.exp2();
    // Rounding in the closed form can land a hair short of the threshold.
    while gain(zone, radius) > zone.epsilon {
        radius = radius.next_up();
    }
    Ok(radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPairReport {
    pub group_a: String,
    pub group_b: String,
    pub min_distance: f64,
    pub max_gain: f64,
    pub private: bool,
}

/// For every pair of distinct groups, whether no member of one can hear any
/// member of the other above the zone's audibility threshold.
pub fn check_group_privacy(
    zone: &AudioZone,
    groups: &BTreeMap<String, String>,
    positions: &BTreeMap<String, Vec3>,
) -> Result<Vec<GroupPairReport>, AudioError> {
    privacy_radius(zone)?;
    let mut members: BTreeMap<&str, Vec<Vec3>> = BTreeMap::new();
    for (client, label) in groups {
        let p = positions.get(client).ok_or_else(|| AudioError::MissingPosition(client.clone()))?;
        members.entry(label.as_str()).or_default().push(*p);
    }
    let labels: Vec<&str> = members.keys().copied().collect();
    let mut report = Vec::new();
    for (i, a) in labels.iter().enumerate() {
        for b in &labels[i + 1..] {
            let min_distance = members[a]
                .iter()
                .flat_map(|p| members[b].iter().map(move |q| p.distance(*q)))
                .fold(f64::INFINITY, f64::min);
            // Gain is non-increasing in distance, so the closest pair is the loudest.
            let max_gain = gain(zone, min_distance);
            report.push(GroupPairReport {
                group_a: a.to_string(),
                group_b: b.to_string(),
                min_distance,
                max_gain,
                private: max_gain <= zone.epsilon,
            });
        }
    }
    Ok(report)
}
