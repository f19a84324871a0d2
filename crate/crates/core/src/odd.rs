//! Operational design domain monitor: closed range rules over flight metadata.
//!
//! Rules are read from a flat text document, one rule per line:
//!
//! ```text
//! along_track_distance = [0.08, 3] NM
//! vertical_path_angle  = [-2.2, -3.8] deg   # bounds are reordered on parse
//! missing_field_policy = reject
//! ```
//!
//! Either bound of an interval may be left empty for a half-open rule.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verdict::{Stage, Verdict};

/// The generic landing approach cone, as shipped with the crate.
pub const LANDING_CONE: &str = include_str!("../data/landing_cone.odd");

#[derive(Debug, Error, PartialEq)]
pub enum OddError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing parameters: {}", .0.join(", "))]
    MissingParameters(Vec<String>),
    #[error("metadata field `{0}` is missing")]
    MissingField(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OddParameter {
    AlongTrackDistance,
    VerticalPathAngle,
    LateralPathAngle,
    Roll,
    Pitch,
    Yaw,
}

impl OddParameter {
    pub const ALL: [OddParameter; 6] = [
        OddParameter::AlongTrackDistance,
        OddParameter::VerticalPathAngle,
        OddParameter::LateralPathAngle,
        OddParameter::Roll,
        OddParameter::Pitch,
        OddParameter::Yaw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OddParameter::AlongTrackDistance => "along_track_distance",
            OddParameter::VerticalPathAngle => "vertical_path_angle",
            OddParameter::LateralPathAngle => "lateral_path_angle",
            OddParameter::Roll => "roll",
            OddParameter::Pitch => "pitch",
            OddParameter::Yaw => "yaw",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    fn accepts_unit(self, unit: &str) -> bool {
        match self {
            OddParameter::AlongTrackDistance => matches!(unit, "NM" | "nm"),
            _ => matches!(unit, "°" | "deg" | "degrees"),
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            OddParameter::AlongTrackDistance => "NM",
            _ => "deg",
        }
    }
}

impl fmt::Display for OddParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Conditions that cannot be read from position and attitude. They are only
/// checked when both the spec requires them and the metadata reports them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OddFlag {
    DistinctiveMarkings,
    RunwayFullyVisible,
    OptimalConditions,
}

impl OddFlag {
    pub const ALL: [OddFlag; 3] = [
        OddFlag::DistinctiveMarkings,
        OddFlag::RunwayFullyVisible,
        OddFlag::OptimalConditions,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OddFlag::DistinctiveMarkings => "distinctive_markings",
            OddFlag::RunwayFullyVisible => "runway_fully_visible",
            OddFlag::OptimalConditions => "optimal_conditions",
        }
    }
}

/// Aircraft position and attitude attached to one image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FlightMetadata {
    /// Nautical miles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub along_track_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertical_path_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lateral_path_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roll: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distinctive_markings: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runway_fully_visible: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_conditions: Option<bool>,
}

impl FlightMetadata {
    pub fn new(values: [f64; 6]) -> Self {
        let mut m = Self::default();
        for (p, v) in OddParameter::ALL.into_iter().zip(values) {
            m.set(p, Some(v));
        }
        m
    }

    pub fn get(&self, p: OddParameter) -> Option<f64> {
        match p {
            OddParameter::AlongTrackDistance => self.along_track_distance,
            OddParameter::VerticalPathAngle => self.vertical_path_angle,
            OddParameter::LateralPathAngle => self.lateral_path_angle,
            OddParameter::Roll => self.roll,
            OddParameter::Pitch => self.pitch,
            OddParameter::Yaw => self.yaw,
        }
    }

    pub fn set(&mut self, p: OddParameter, v: Option<f64>) {
        let slot = match p {
            OddParameter::AlongTrackDistance => &mut self.along_track_distance,
            OddParameter::VerticalPathAngle => &mut self.vertical_path_angle,
            OddParameter::LateralPathAngle => &mut self.lateral_path_angle,
            OddParameter::Roll => &mut self.roll,
            OddParameter::Pitch => &mut self.pitch,
            OddParameter::Yaw => &mut self.yaw,
        };
        *slot = v;
    }

    pub fn flag(&self, f: OddFlag) -> Option<bool> {
        match f {
            OddFlag::DistinctiveMarkings => self.distinctive_markings,
            OddFlag::RunwayFullyVisible => self.runway_fully_visible,
            OddFlag::OptimalConditions => self.optimal_conditions,
        }
    }
}

/// Closed interval; an unbounded side is stored as an infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        Self {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingFieldPolicy {
    #[default]
    Reject,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OddSpec {
    intervals: [Interval; 6],
    pub missing_field_policy: MissingFieldPolicy,
    required_flags: Vec<OddFlag>,
}

impl OddSpec {
    pub fn new(intervals: [Interval; 6], missing_field_policy: MissingFieldPolicy) -> Self {
        Self {
            intervals,
            missing_field_policy,
            required_flags: Vec::new(),
        }
    }

    /// The shipped landing-cone rule set.
    pub fn landing_cone() -> Self {
        parse_odd_spec(LANDING_CONE).expect("bundled landing cone spec parses")
    }

    pub fn interval(&self, p: OddParameter) -> Interval {
        self.intervals[p as usize]
    }

    pub fn set_interval(&mut self, p: OddParameter, iv: Interval) {
        self.intervals[p as usize] = Interval::new(iv.lo, iv.hi);
    }

    pub fn required_flags(&self) -> &[OddFlag] {
        &self.required_flags
    }

    pub fn require_flag(&mut self, f: OddFlag) {
        if !self.required_flags.contains(&f) {
            self.required_flags.push(f);
            self.required_flags.sort();
        }
    }

    /// Canonical text form, parseable by [`parse_odd_spec`].
    pub fn to_text(&self) -> String {
        let bound = |v: f64| {
            if v.is_finite() {
                format!("{v}")
            } else {
                String::new()
            }
        };
        let mut out = String::new();
        for p in OddParameter::ALL {
            let iv = self.interval(p);
            out.push_str(&format!(
                "{} = [{}, {}] {}\n",
                p,
                bound(iv.lo),
                bound(iv.hi),
                p.unit()
            ));
        }
        for f in &self.required_flags {
            out.push_str(&format!("{} = required\n", f.name()));
        }
        let policy = match self.missing_field_policy {
            MissingFieldPolicy::Reject => "reject",
            MissingFieldPolicy::Error => "error",
        };
        out.push_str(&format!("missing_field_policy = {policy}\n"));
        out
    }
}

fn parse_bound(s: &str, line: usize) -> Result<Option<f64>, OddError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(OddError::Parse {
            line,
            message: format!("non-numeric bound `{s}`"),
        }),
    }
}

fn parse_interval(rhs: &str, param: OddParameter, line: usize) -> Result<Interval, OddError> {
    let err = |message: String| OddError::Parse { line, message };
    let open = rhs
        .find(['[', '('])
        .ok_or_else(|| err(format!("expected `[lo, hi]` for {param}")))?;
    let close = rhs
        .find([']', ')'])
        .filter(|&c| c > open)
        .ok_or_else(|| err(format!("unterminated interval for {param}")))?;
    let inner = &rhs[open + 1..close];
    let (a, b) = inner
        .split_once(',')
        .ok_or_else(|| err(format!("interval for {param} needs two bounds")))?;
    let (a, b) = (parse_bound(a, line)?, parse_bound(b, line)?);
    let unit = rhs[close + 1..].trim();
    if !unit.is_empty() && !param.accepts_unit(unit) {
        return Err(err(format!(
            "unit `{unit}` does not match {param} ({})",
            param.unit()
        )));
    }
    match (a, b) {
        (None, None) => Err(err(format!("both bounds of {param} are absent"))),
        (Some(a), Some(b)) => Ok(Interval::new(a, b)),
        (Some(a), None) => Ok(Interval::new(a, f64::INFINITY)),
        (None, Some(b)) => Ok(Interval::new(f64::NEG_INFINITY, b)),
    }
}

/// Parses a rule document. Reversed bounds are reordered so that `lo <= hi`.
pub fn parse_odd_spec(text: &str) -> Result<OddSpec, OddError> {
    let mut intervals: [Option<Interval>; 6] = [None; 6];
    let mut policy = MissingFieldPolicy::default();
    let mut flags = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (name, rhs) = content.split_once('=').ok_or_else(|| OddError::Parse {
            line,
            message: format!("expected `name = value`, got `{content}`"),
        })?;
        let (name, rhs) = (name.trim(), rhs.trim());

        if let Some(p) = OddParameter::from_name(name) {
            if intervals[p as usize].is_some() {
                return Err(OddError::Parse {
                    line,
                    message: format!("duplicate parameter {p}"),
                });
            }
            intervals[p as usize] = Some(parse_interval(rhs, p, line)?);
        } else if name == "missing_field_policy" {
            policy = match rhs {
                "reject" => MissingFieldPolicy::Reject,
                "error" => MissingFieldPolicy::Error,
                other => {
                    return Err(OddError::Parse {
                        line,
                        message: format!("unknown missing_field_policy `{other}`"),
                    })
                }
            };
        } else if let Some(flag) = OddFlag::ALL.into_iter().find(|f| f.name() == name) {
            match rhs {
                "required" => flags.push(flag),
                "ignored" => {}
                other => {
                    return Err(OddError::Parse {
                        line,
                        message: format!(
                            "flag {name} must be `required` or `ignored`, got `{other}`"
                        ),
                    })
                }
            }
        } else {
            return Err(OddError::Parse {
                line,
                message: format!("unknown parameter `{name}`"),
            });
        }
    }

    let missing: Vec<String> = OddParameter::ALL
        .into_iter()
        .filter(|p| intervals[*p as usize].is_none())
        .map(|p| p.name().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(OddError::MissingParameters(missing));
    }
    let mut spec = OddSpec::new(intervals.map(|iv| iv.expect("checked above")), policy);
    for f in flags {
        spec.require_flag(f);
    }
    Ok(spec)
}

/// Accepts iff every rule holds. Reasons are the violated names in canonical order.
pub fn check_odd(spec: &OddSpec, meta: &FlightMetadata) -> Result<Verdict, OddError> {
    let mut reasons = Vec::new();
    for p in OddParameter::ALL {
        match meta.get(p) {
            Some(v) if spec.interval(p).contains(v) => {}
            Some(_) => reasons.push(p.name().to_string()),
            None => match spec.missing_field_policy {
                MissingFieldPolicy::Reject => reasons.push(p.name().to_string()),
                MissingFieldPolicy::Error => return Err(OddError::MissingField(p.name().into())),
            },
        }
    }
    for &f in spec.required_flags() {
        if meta.flag(f) == Some(false) {
            reasons.push(f.name().to_string());
        }
    }
    Ok(Verdict::from_reasons(Stage::Odd, reasons))
}

/// Stateful wrapper holding a parsed spec.
#[derive(Debug, Clone)]
pub struct OddMonitor {
    spec: OddSpec,
}

impl OddMonitor {
    pub fn new(spec: OddSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &OddSpec {
        &self.spec
    }

    pub fn check(&self, meta: &FlightMetadata) -> Result<Verdict, OddError> {
        check_odd(&self.spec, meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verdict::Decision;
    use proptest::prelude::*;

    fn mid() -> FlightMetadata {
        FlightMetadata::new([1.54, -3.0, 0.0, 0.0, -4.0, 0.0])
    }

    #[test]
    fn landing_cone_intervals() {
        let spec = OddSpec::landing_cone();
        let expected = [
            (0.08, 3.0),
            (-3.8, -2.2),
            (-4.0, 4.0),
            (-10.0, 10.0),
            (-8.0, 0.0),
            (-10.0, 10.0),
        ];
        for (p, (lo, hi)) in OddParameter::ALL.into_iter().zip(expected) {
            assert_eq!(spec.interval(p), Interval { lo, hi }, "{p}");
        }
        assert_eq!(spec.missing_field_policy, MissingFieldPolicy::Reject);
    }

    #[test]
    fn reversed_bounds_are_normalized() {
        let text = LANDING_CONE.replace("[0.08, 3]", "(3, 0.08)");
        let spec = parse_odd_spec(&text).unwrap();
        assert_eq!(
            spec.interval(OddParameter::AlongTrackDistance),
            Interval { lo: 0.08, hi: 3.0 }
        );
    }

    #[test]
    fn empty_document_lists_all_parameters() {
        match parse_odd_spec("") {
            Err(OddError::MissingParameters(m)) => assert_eq!(m.len(), 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = format!("{LANDING_CONE}\nheading = [0, 1] deg\n");
        let err = parse_odd_spec(&text).unwrap_err();
        assert!(matches!(err, OddError::Parse { ref message, .. } if message.contains("heading")));
        let err = parse_odd_spec("roll = [a, 3] deg").unwrap_err();
        assert_eq!(
            err,
            OddError::Parse {
                line: 1,
                message: "non-numeric bound `a`".into()
            }
        );
        assert!(parse_odd_spec("roll = [ , ] deg").is_err());
        assert!(parse_odd_spec("roll = [0, 1] NM").is_err());
    }

    #[test]
    fn half_open_interval() {
        let text = LANDING_CONE.replace("[-10, 10] deg\npitch", "[, 10] deg\npitch");
        let spec = parse_odd_spec(&text).unwrap();
        assert_eq!(spec.interval(OddParameter::Roll).lo, f64::NEG_INFINITY);
    }

    #[test]
    fn to_text_roundtrip() {
        let mut spec = OddSpec::landing_cone();
        spec.require_flag(OddFlag::OptimalConditions);
        assert_eq!(parse_odd_spec(&spec.to_text()).unwrap(), spec);
    }

    #[test]
    fn check_examples() {
        let spec = OddSpec::landing_cone();
        assert_eq!(check_odd(&spec, &mid()).unwrap().decision, Decision::Accept);

        let mut m = mid();
        m.along_track_distance = Some(3.5);
        let v = check_odd(&spec, &m).unwrap();
        assert_eq!(v.decision, Decision::Reject);
        assert_eq!(v.reasons, vec!["along_track_distance"]);

        m.along_track_distance = Some(3.0);
        assert_eq!(check_odd(&spec, &m).unwrap().decision, Decision::Accept);
    }

    #[test]
    fn missing_fields() {
        let mut spec = OddSpec::landing_cone();
        let mut m = mid();
        m.yaw = None;
        let v = check_odd(&spec, &m).unwrap();
        assert_eq!(v.reasons, vec!["yaw"]);
        spec.missing_field_policy = MissingFieldPolicy::Error;
        assert_eq!(
            check_odd(&spec, &m).unwrap_err(),
            OddError::MissingField("yaw".into())
        );
    }

    #[test]
    fn flags_checked_only_when_required_and_reported() {
        let mut spec = OddSpec::landing_cone();
        let mut m = mid();
        m.optimal_conditions = Some(false);
        assert!(!check_odd(&spec, &m).unwrap().is_reject());
        spec.require_flag(OddFlag::OptimalConditions);
        assert_eq!(
            check_odd(&spec, &m).unwrap().reasons,
            vec!["optimal_conditions"]
        );
        m.optimal_conditions = None;
        assert!(!check_odd(&spec, &m).unwrap().is_reject());
    }

    fn inside(spec: &OddSpec, u: [f64; 6]) -> FlightMetadata {
        let mut vals = [0.0; 6];
        for (i, p) in OddParameter::ALL.into_iter().enumerate() {
            let iv = spec.interval(p);
            vals[i] = iv.lo + u[i] * (iv.hi - iv.lo);
        }
        FlightMetadata::new(vals)
    }

    proptest! {
        #[test]
        fn uniform_inside_is_never_rejected(u in proptest::array::uniform6(0.0f64..=1.0)) {
            let spec = OddSpec::landing_cone();
            prop_assert!(!check_odd(&spec, &inside(&spec, u)).unwrap().is_reject());
        }

        #[test]
        fn widening_never_rejects_more(
            vals in proptest::array::uniform6(-12.0f64..12.0),
            widen in proptest::array::uniform6(0.0f64..5.0),
        ) {
            let spec = OddSpec::landing_cone();
            let mut wide = spec.clone();
            for (i, p) in OddParameter::ALL.into_iter().enumerate() {
                let iv = spec.interval(p);
                wide.set_interval(p, Interval::new(iv.lo - widen[i], iv.hi + widen[i]));
            }
            let m = FlightMetadata::new(vals);
            let narrow_v = check_odd(&spec, &m).unwrap();
            let wide_v = check_odd(&wide, &m).unwrap();
            if !narrow_v.is_reject() {
                prop_assert!(!wide_v.is_reject());
            }
            // reasons are exactly the violated names in canonical order
            let expected: Vec<String> = OddParameter::ALL
                .into_iter()
                .filter(|p| !spec.interval(*p).contains(m.get(*p).unwrap()))
                .map(|p| p.name().to_string())
                .collect();
            prop_assert_eq!(narrow_v.reasons, expected);
        }
    }
}
