//! Likert survey aggregation for desktop-vs-VR usability sessions.
//!
//! All proportions are kept as exact `count / total` pairs; floating point
//! only appears when a value is rendered.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

pub const BUNDLED_RESPONSES: &str = include_str!("../data/survey_reconstructed.csv");
pub const BUNDLED_PROFILES: &str = include_str!("../data/subject_profiles_reconstructed.csv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SurveyError {
    #[error("malformed survey csv: {0}")]
    Csv(String),
    #[error("rating {rating} for subject {subject:?} is outside 1..=5")]
    InvalidRating { subject: String, rating: i64 },
    #[error("duplicate response ({subject}, {mode}, {question})")]
    DuplicateResponse { subject: String, mode: Mode, question: String },
    #[error("no responses for question {question:?}{}", .mode.map(|m| format!(" in {m} mode")).unwrap_or_default())]
    NoData { question: String, mode: Option<Mode> },
    #[error("subject {0:?} lacks a response in one of the two modes")]
    UnpairedSubject(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Desktop,
    #[serde(rename = "VR")]
    Vr,
}

impl Mode {
    pub fn other(self) -> Mode {
        match self {
            Mode::Desktop => Mode::Vr,
            Mode::Vr => Mode::Desktop,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Desktop => f.write_str("Desktop"),
            Mode::Vr => f.write_str("VR"),
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "desktop" => Ok(Mode::Desktop),
            "vr" => Ok(Mode::Vr),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertResponse {
    pub subject_id: String,
    pub mode: Mode,
    pub question_id: String,
    pub rating: u8,
}

/// An exact proportion `count / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct Share {
    pub count: u32,
    pub total: u32,
}

impl Share {
    pub fn value(self) -> f64 {
        f64::from(self.count) / f64::from(self.total)
    }

    /// Two-decimal rendering with trailing zeros dropped: `0.29`, `0.43`, `1`.
    pub fn label(self) -> String {
        let fixed = format!("{:.2}", self.value());
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl fmt::Display for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.count, self.total)
    }
}

impl Serialize for Share {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Share", 4)?;
        s.serialize_field("count", &self.count)?;
        s.serialize_field("total", &self.total)?;
        s.serialize_field("value", &self.value())?;
        s.serialize_field("label", &self.label())?;
        s.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub question_id: String,
    pub mode: Mode,
    pub n: u32,
    /// Only ratings that occur are present.
    pub proportions: BTreeMap<u8, Share>,
}

impl DistributionSummary {
    pub fn share(&self, rating: u8) -> Share {
        self.proportions.get(&rating).copied().unwrap_or(Share { count: 0, total: self.n })
    }
}

#[derive(Deserialize)]
struct RawResponse {
    subject_id: String,
    mode: String,
    question_id: String,
    rating: i64,
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input)
}

/// Parses `subject_id,mode,question_id,rating` rows. Lines starting with `#`
/// are comments.
pub fn parse_responses<R: Read>(input: R) -> Result<Vec<LikertResponse>, SurveyError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in csv_reader(input).deserialize::<RawResponse>() {
        let raw = row.map_err(|e| SurveyError::Csv(e.to_string()))?;
        let mode: Mode = raw.mode.parse().map_err(SurveyError::Csv)?;
        if !(1..=5).contains(&raw.rating) {
            return Err(SurveyError::InvalidRating { subject: raw.subject_id, rating: raw.rating });
        }
        if !seen.insert((raw.subject_id.clone(), mode, raw.question_id.clone())) {
            return Err(SurveyError::DuplicateResponse { subject: raw.subject_id, mode, question: raw.question_id });
        }
        out.push(LikertResponse {
            subject_id: raw.subject_id,
            mode,
            question_id: raw.question_id,
            rating: raw.rating as u8,
        });
    }
    Ok(out)
}

pub fn bundled_responses() -> Vec<LikertResponse> {
    parse_responses(BUNDLED_RESPONSES.as_bytes()).expect("bundled survey data is valid")
}

pub fn summarize(
    responses: &[LikertResponse],
    question_id: &str,
    mode: Mode,
) -> Result<DistributionSummary, SurveyError> {
    let mut counts: BTreeMap<u8, u32> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.question_id == question_id && r.mode == mode) {
        *counts.entry(r.rating).or_default() += 1;
    }
    let n: u32 = counts.values().sum();
    if n == 0 {
        return Err(SurveyError::NoData { question: question_id.to_string(), mode: Some(mode) });
    }
    let proportions = counts.into_iter().map(|(rating, count)| (rating, Share { count, total: n })).collect();
    Ok(DistributionSummary { question_id: question_id.to_string(), mode, n, proportions })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairedShift {
    pub question_id: String,
    /// VR rating minus desktop rating, per subject.
    pub deltas: BTreeMap<String, i8>,
    pub positive: u32,
    pub zero: u32,
    pub negative: u32,
}

impl PairedShift {
    pub fn all_positive(&self) -> bool {
        !self.deltas.is_empty() && self.zero == 0 && self.negative == 0
    }
}

/// Per-subject change in rating from `from` mode to the other mode. The
/// usual direction is `Mode::Desktop` (VR minus desktop).
pub fn paired_shift_from(
    responses: &[LikertResponse],
    question_id: &str,
    from: Mode,
) -> Result<PairedShift, SurveyError> {
    let mut by_subject: BTreeMap<&str, [Option<u8>; 2]> = BTreeMap::new();
    for r in responses.iter().filter(|r| r.question_id == question_id) {
        let slot = if r.mode == from { 0 } else { 1 };
        by_subject.entry(r.subject_id.as_str()).or_default()[slot] = Some(r.rating);
    }
    if by_subject.is_empty() {
        return Err(SurveyError::NoData { question: question_id.to_string(), mode: None });
    }
    let mut shift = PairedShift {
        question_id: question_id.to_string(),
        deltas: BTreeMap::new(),
        positive: 0,
        zero: 0,
        negative: 0,
    };
    for (subject, ratings) in by_subject {
        let [Some(before), Some(after)] = ratings else {
            return Err(SurveyError::UnpairedSubject(subject.to_string()));
        };
        let delta = after as i8 - before as i8;
        match delta.signum() {
            1 => shift.positive += 1,
            0 => shift.zero += 1,
            _ => shift.negative += 1,
        }
        shift.deltas.insert(subject.to_string(), delta);
    }
    Ok(shift)
}

/// VR rating minus desktop rating for every subject.
pub fn paired_shift(responses: &[LikertResponse], question_id: &str) -> Result<PairedShift, SurveyError> {
    paired_shift_from(responses, question_id, Mode::Desktop)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub preferred_mode: Mode,
    pub dizzy_in_vr: bool,
}

pub fn parse_profiles<R: Read>(input: R) -> Result<Vec<SubjectProfile>, SurveyError> {
    #[derive(Deserialize)]
    struct Raw {
        subject_id: String,
        preferred_mode: String,
        dizzy_in_vr: bool,
    }
    csv_reader(input)
        .deserialize::<Raw>()
        .map(|row| {
            let raw = row.map_err(|e| SurveyError::Csv(e.to_string()))?;
            Ok(SubjectProfile {
                subject_id: raw.subject_id,
                preferred_mode: raw.preferred_mode.parse().map_err(SurveyError::Csv)?,
                dizzy_in_vr: raw.dizzy_in_vr,
            })
        })
        .collect()
}

pub fn bundled_profiles() -> Vec<SubjectProfile> {
    parse_profiles(BUNDLED_PROFILES.as_bytes()).expect("bundled profile data is valid")
}

pub fn preferences(profiles: &[SubjectProfile]) -> BTreeMap<String, Mode> {
    profiles.iter().map(|p| (p.subject_id.clone(), p.preferred_mode)).collect()
}

/// Share of subjects preferring VR.
pub fn preference_rate(preferences: &BTreeMap<String, Mode>) -> Result<Share, SurveyError> {
    if preferences.is_empty() {
        return Err(SurveyError::NoData { question: "preference".into(), mode: None });
    }
    let count = preferences.values().filter(|m| **m == Mode::Vr).count() as u32;
    Ok(Share { count, total: preferences.len() as u32 })
}

pub fn dizziness_rate(profiles: &[SubjectProfile]) -> Result<Share, SurveyError> {
    if profiles.is_empty() {
        return Err(SurveyError::NoData { question: "dizzy_in_vr".into(), mode: None });
    }
    let count = profiles.iter().filter(|p| p.dizzy_in_vr).count() as u32;
    Ok(Share { count, total: profiles.len() as u32 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(subject: &str, mode: Mode, q: &str, rating: u8) -> LikertResponse {
        LikertResponse { subject_id: subject.into(), mode, question_id: q.into(), rating }
    }

    #[test]
    fn labels() {
        assert_eq!(Share { count: 2, total: 7 }.label(), "0.29");
        assert_eq!(Share { count: 3, total: 7 }.label(), "0.43");
        assert_eq!(Share { count: 7, total: 7 }.label(), "1");
        assert_eq!(Share { count: 1, total: 2 }.label(), "0.5");
        assert_eq!(Share { count: 0, total: 7 }.label(), "0");
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_rating = "subject_id,mode,question_id,rating\ns1,VR,q,6\n";
        assert!(matches!(parse_responses(bad_rating.as_bytes()), Err(SurveyError::InvalidRating { .. })));
        let dup = "subject_id,mode,question_id,rating\ns1,VR,q,3\ns1,vr,q,4\n";
        assert!(matches!(parse_responses(dup.as_bytes()), Err(SurveyError::DuplicateResponse { .. })));
        let bad_mode = "subject_id,mode,question_id,rating\ns1,Tablet,q,3\n";
        assert!(matches!(parse_responses(bad_mode.as_bytes()), Err(SurveyError::Csv(_))));
    }

    #[test]
    fn summarize_without_rows() {
        let err = summarize(&[], "present", Mode::Vr).unwrap_err();
        assert!(matches!(err, SurveyError::NoData { .. }));
    }

    #[test]
    fn identical_ratings_shift_zero() {
        let rows = vec![row("a", Mode::Desktop, "q", 3), row("a", Mode::Vr, "q", 3)];
        let shift = paired_shift(&rows, "q").unwrap();
        assert_eq!(shift.deltas["a"], 0);
        assert_eq!(shift.zero, 1);
        assert!(!shift.all_positive());
    }

    #[test]
    fn missing_mode_is_unpaired() {
        let rows = vec![row("a", Mode::Desktop, "q", 3), row("b", Mode::Desktop, "q", 3), row("b", Mode::Vr, "q", 4)];
        assert_eq!(paired_shift(&rows, "q"), Err(SurveyError::UnpairedSubject("a".into())));
    }

    #[test]
    fn preference_rate_arithmetic() {
        let prefs: BTreeMap<String, Mode> = [("a".into(), Mode::Vr), ("b".into(), Mode::Desktop)].into();
        assert_eq!(preference_rate(&prefs).unwrap(), Share { count: 1, total: 2 });
        assert!(preference_rate(&BTreeMap::new()).is_err());
    }

    #[test]
    fn bundled_profiles_parse() {
        let profiles = bundled_profiles();
        assert_eq!(profiles.len(), 7);
        assert_eq!(dizziness_rate(&profiles).unwrap(), Share { count: 2, total: 7 });
    }
}
