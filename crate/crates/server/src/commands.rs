//! Report builders behind the `veld survey` and `veld audio-report`
//! subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use veld_core::audio::{
    check_group_privacy, gain_matrix, privacy_radius, AudioError, AudioZone, GainMatrix, GroupPairReport,
};
use veld_core::survey::{
    paired_shift, preference_rate, preferences, summarize, DistributionSummary, LikertResponse, Mode, PairedShift,
    Share, SubjectProfile, SurveyError,
};
use veld_core::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveyReport {
    pub question_id: String,
    pub desktop: DistributionSummary,
    pub vr: DistributionSummary,
    /// Absent when some subject lacks one of the two modes.
    pub paired_shift: Option<PairedShift>,
    /// Absent when no preference data was supplied.
    pub preference_rate: Option<Share>,
}

pub fn survey_report(
    responses: &[LikertResponse],
    profiles: &[SubjectProfile],
    question_id: &str,
) -> Result<SurveyReport, SurveyError> {
    let desktop = summarize(responses, question_id, Mode::Desktop)?;
    let vr = summarize(responses, question_id, Mode::Vr)?;
    let shift = match paired_shift(responses, question_id) {
        Ok(shift) => Some(shift),
        Err(SurveyError::UnpairedSubject(_)) => None,
        Err(e) => return Err(e),
    };
    let preference = preference_rate(&preferences(profiles)).ok();
    Ok(SurveyReport {
        question_id: question_id.to_string(),
        desktop,
        vr,
        paired_shift: shift,
        preference_rate: preference,
    })
}

impl fmt::Display for SurveyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "question {:?} (n = {} desktop, {} VR)", self.question_id, self.desktop.n, self.vr.n)?;
        writeln!(f, "{:<8} {:>12} {:>12}", "rating", "Desktop", "VR")?;
        let ratings: BTreeSet<u8> =
            self.desktop.proportions.keys().chain(self.vr.proportions.keys()).copied().collect();
        for r in ratings {
            let cell = |s: &DistributionSummary| {
                let share = s.share(r);
                format!("{} ({}/{})", share.label(), share.count, share.total)
            };
            writeln!(f, "{:<8} {:>12} {:>12}", r, cell(&self.desktop), cell(&self.vr))?;
        }
        if let Some(shift) = &self.paired_shift {
            writeln!(
                f,
                "VR - Desktop per subject: {} up, {} same, {} down",
                shift.positive, shift.zero, shift.negative
            )?;
        }
        if let Some(p) = &self.preference_rate {
            writeln!(f, "prefer VR: {}/{} ({})", p.count, p.total, p.label())?;
        }
        Ok(())
    }
}

/// Input of `veld audio-report`: positions, optional groups and optional zone.
/// A bare `{"id": [x, y, z], ...}` object is accepted as positions only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PositionsFile {
    Full {
        positions: BTreeMap<String, Vec3>,
        #[serde(default)]
        groups: BTreeMap<String, String>,
        #[serde(default)]
        audio_zone: Option<AudioZone>,
    },
    Bare(BTreeMap<String, Vec3>),
}

impl PositionsFile {
    pub fn parts(self) -> (BTreeMap<String, Vec3>, BTreeMap<String, String>, Option<AudioZone>) {
        match self {
            PositionsFile::Full { positions, groups, audio_zone } => (positions, groups, audio_zone),
            PositionsFile::Bare(positions) => (positions, BTreeMap::new(), None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AudioReport {
    pub zone: AudioZone,
    /// `None` when the zone never attenuates below its threshold.
    pub privacy_radius: Option<f64>,
    pub matrix: GainMatrix,
    pub groups: Vec<GroupPairReport>,
}

pub fn audio_report(
    zone: AudioZone,
    positions: &BTreeMap<String, Vec3>,
    groups: &BTreeMap<String, String>,
) -> Result<AudioReport, AudioError> {
    zone.validate()?;
    let radius = match privacy_radius(&zone) {
        Ok(r) => Some(r),
        Err(AudioError::NoPrivacy) => None,
        Err(e) => return Err(e),
    };
    let pairs =
        if groups.is_empty() || radius.is_none() { Vec::new() } else { check_group_privacy(&zone, groups, positions)? };
    Ok(AudioReport { zone, privacy_radius: radius, matrix: gain_matrix(&zone, positions), groups: pairs })
}

impl fmt::Display for AudioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "zone: a = {}, d_ref = {} m, epsilon = {}",
            self.zone.coef, self.zone.ref_distance, self.zone.epsilon
        )?;
        match self.privacy_radius {
            Some(r) => writeln!(f, "privacy radius: {r} m")?,
            None => writeln!(f, "privacy radius: none (no attenuation)")?,
        }
        writeln!(f, "gain[listener][speaker]:")?;
        write!(f, "{:<10}", "")?;
        for id in &self.matrix.ids {
            write!(f, " {id:>8}")?;
        }
        writeln!(f)?;
        for (id, row) in self.matrix.ids.iter().zip(&self.matrix.gains) {
            write!(f, "{id:<10}")?;
            for g in row {
                write!(f, " {g:>8.4}")?;
            }
            writeln!(f)?;
        }
        for pair in &self.groups {
            writeln!(
                f,
                "{} / {}: min distance {:.3} m, max gain {:.5} -> {}",
                pair.group_a,
                pair.group_b,
                pair.min_distance,
                pair.max_gain,
                if pair.private { "private" } else { "AUDIBLE" }
            )?;
        }
        Ok(())
    }
}
