//! Line-oriented JSON documents for datasets (manifests) and model outputs
//! (traces).
//!
//! Both formats start with a header line naming the format and version,
//! followed by one record per line. Loading checks every line and reports all
//! violations at once.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{BBox, FeaturedDetection};
use crate::imaging::Corruption;
use crate::odd::FlightMetadata;
use crate::pipeline::{ImageSource, ReplayDetector, Sample, ThreatLabel};

pub const MANIFEST_FORMAT: &str = "safemon-manifest";
pub const TRACE_FORMAT: &str = "safemon-trace";
pub const FORMAT_VERSION: u32 = 1;

/// One problem found while loading, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {} (`{id}`): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {} violation(s):\n{}", .violations.len(), render(.violations))]
    Invalid {
        path: PathBuf,
        violations: Vec<Violation>,
    },
}

fn render(vs: &[Violation]) -> String {
    vs.iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TraceIoError + '_ {
    move |source| TraceIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(flatten)]
    rest: serde_json::Map<String, serde_json::Value>,
}

#[derive(Serialize)]
struct HeaderOut<T> {
    format: &'static str,
    version: u32,
    #[serde(flatten)]
    rest: T,
}

#[derive(Serialize)]
struct ManifestHeader<'a> {
    name: &'a str,
}

fn parse_header(
    line: Option<&str>,
    format: &str,
    out: &mut Vec<Violation>,
) -> Option<serde_json::Map<String, serde_json::Value>> {
    let Some(line) = line else {
        out.push(Violation {
            line: 1,
            id: None,
            message: "missing header".into(),
        });
        return None;
    };
    match serde_json::from_str::<Header>(line) {
        Ok(h) if h.format == format && h.version == FORMAT_VERSION => Some(h.rest),
        Ok(h) => {
            out.push(Violation {
                line: 1,
                id: None,
                message: format!(
                    "expected format `{format}` version {FORMAT_VERSION}, got `{}` version {}",
                    h.format, h.version
                ),
            });
            None
        }
        Err(e) => {
            out.push(Violation {
                line: 1,
                id: None,
                message: format!("bad header: {e}"),
            });
            None
        }
    }
}

/// Record lines with their 1-based numbers, blank lines skipped.
fn body(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Best-effort id of a line that failed to deserialize.
fn sniff_id(line: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(line).ok()?;
    v.get("id")?.as_str().map(str::to_string)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory, unless absolute.
    pub image: String,
    pub metadata: FlightMetadata,
    pub ground_truth: Vec<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threat: Option<ThreatLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<Corruption>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_jsonl(&self) -> String {
        let header = HeaderOut {
            format: MANIFEST_FORMAT,
            version: FORMAT_VERSION,
            rest: ManifestHeader { name: &self.name },
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses and validates everything except image existence.
    pub fn parse(text: &str) -> Result<Self, Vec<Violation>> {
        let mut violations = Vec::new();
        let header = parse_header(text.lines().next(), MANIFEST_FORMAT, &mut violations);
        let name = match header.as_ref().map(|h| h.get("name")) {
            Some(Some(serde_json::Value::String(s))) => s.clone(),
            Some(_) => {
                violations.push(Violation {
                    line: 1,
                    id: None,
                    message: "header lacks a string `name`".into(),
                });
                String::new()
            }
            None => String::new(),
        };
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (line, text) in body(text) {
            match serde_json::from_str::<ManifestEntry>(text) {
                Ok(e) => {
                    if !seen.insert(e.id.clone()) {
                        violations.push(Violation {
                            line,
                            id: Some(e.id.clone()),
                            message: "duplicate id".into(),
                        });
                    }
                    entries.push(e);
                }
                Err(err) => violations.push(Violation {
                    line,
                    id: sniff_id(text),
                    message: err.to_string(),
                }),
            }
        }
        if violations.is_empty() {
            Ok(Self { name, entries })
        } else {
            Err(violations)
        }
    }

    pub fn resolve_image(base: &Path, image: &str) -> PathBuf {
        let p = Path::new(image);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    /// Samples whose images are read lazily from `base`.
    pub fn to_samples(&self, base: &Path) -> Vec<Sample> {
        self.entries
            .iter()
            .map(|e| Sample {
                id: e.id.clone(),
                image: ImageSource::File(Self::resolve_image(base, &e.image)),
                metadata: e.metadata,
                ground_truth: e.ground_truth.clone(),
                threat: e.threat,
                corruption: e.corruption,
            })
            .collect()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }
}

/// Loads, validates and checks that every referenced image exists.
pub fn load_manifest(path: &Path) -> Result<Manifest, TraceIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let invalid = |violations| TraceIoError::Invalid {
        path: path.to_path_buf(),
        violations,
    };
    let manifest = Manifest::parse(&text).map_err(invalid)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let line_of: HashMap<&str, usize> = body(&text)
        .zip(&manifest.entries)
        .map(|((line, _), e)| (e.id.as_str(), line))
        .collect();
    let missing: Vec<Violation> = manifest
        .entries
        .iter()
        .filter(|e| !Manifest::resolve_image(base, &e.image).is_file())
        .map(|e| Violation {
            line: line_of[e.id.as_str()],
            id: Some(e.id.clone()),
            message: format!("image `{}` not found", e.image),
        })
        .collect();
    if missing.is_empty() {
        Ok(manifest)
    } else {
        Err(invalid(missing))
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), TraceIoError> {
    write_atomic(path, manifest.to_jsonl().as_bytes()).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub feature_dim: usize,
    pub model: String,
    /// Confidence threshold applied at export, if any.
    pub tau_conf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: String,
    pub detections: Vec<FeaturedDetection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    records: Vec<TraceRecord>,
    index: HashMap<String, usize>,
}

impl TraceFile {
    /// Fails with the first duplicate id.
    pub fn new(header: TraceHeader, records: Vec<TraceRecord>) -> Result<Self, String> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(r.id.clone());
            }
        }
        Ok(Self {
            header,
            records,
            index,
        })
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&TraceRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let header = HeaderOut {
            format: TRACE_FORMAT,
            version: FORMAT_VERSION,
            rest: &self.header,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, Vec<Violation>> {
        let mut violations = Vec::new();
        let header =
            parse_header(text.lines().next(), TRACE_FORMAT, &mut violations).and_then(|rest| {
                serde_json::from_value::<TraceHeader>(serde_json::Value::Object(rest))
                    .map_err(|e| {
                        violations.push(Violation {
                            line: 1,
                            id: None,
                            message: format!("bad header: {e}"),
                        })
                    })
                    .ok()
            });
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (line, text) in body(text) {
            match serde_json::from_str::<TraceRecord>(text) {
                Ok(r) => {
                    if !seen.insert(r.id.clone()) {
                        violations.push(Violation {
                            line,
                            id: Some(r.id.clone()),
                            message: "duplicate id".into(),
                        });
                    }
                    if let Some(h) = &header {
                        for (k, d) in r.detections.iter().enumerate() {
                            if d.features.dim() != h.feature_dim {
                                violations.push(Violation {
                                    line,
                                    id: Some(r.id.clone()),
                                    message: format!(
                                        "detection {k} has {} features, header says {}",
                                        d.features.dim(),
                                        h.feature_dim
                                    ),
                                });
                            }
                            let c = d.detection.confidence;
                            if !(0.0..=1.0).contains(&c) {
                                violations.push(Violation {
                                    line,
                                    id: Some(r.id.clone()),
                                    message: format!(
                                        "detection {k} has confidence {c} outside [0, 1]"
                                    ),
                                });
                            }
                        }
                    }
                    records.push(r);
                }
                Err(err) => violations.push(Violation {
                    line,
                    id: sniff_id(text),
                    message: err.to_string(),
                }),
            }
        }
        match header {
            Some(header) if violations.is_empty() => {
                Ok(Self::new(header, records).expect("duplicates already reported"))
            }
            _ => Err(violations),
        }
    }

    /// Ids of `manifest` that have no record here.
    pub fn missing_ids<'a>(&self, manifest: &'a Manifest) -> Vec<&'a str> {
        manifest
            .ids()
            .filter(|id| !self.index.contains_key(*id))
            .collect()
    }

    /// Record ids that `manifest` does not list.
    pub fn unknown_ids(&self, manifest: &Manifest) -> Vec<&str> {
        let known: HashSet<&str> = manifest.ids().collect();
        self.records
            .iter()
            .map(|r| r.id.as_str())
            .filter(|id| !known.contains(id))
            .collect()
    }

    pub fn to_replay(&self) -> ReplayDetector {
        self.records
            .iter()
            .map(|r| (r.id.clone(), r.detections.clone()))
            .collect()
    }
}

pub fn load_trace(path: &Path) -> Result<TraceFile, TraceIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    TraceFile::parse(&text).map_err(|violations| TraceIoError::Invalid {
        path: path.to_path_buf(),
        violations,
    })
}

pub fn write_trace(path: &Path, trace: &TraceFile) -> Result<(), TraceIoError> {
    write_atomic(path, trace.to_jsonl().as_bytes()).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Detection;
    use crate::oms::FeatureVector;

    fn record(id: &str, dims: &[usize]) -> TraceRecord {
        TraceRecord {
            id: id.into(),
            detections: dims
                .iter()
                .map(|&d| FeaturedDetection {
                    detection: Detection {
                        bbox: BBox::new(1.0, 2.0, 3.5, 4.25).unwrap(),
                        label: 0,
                        confidence: 0.1 + 0.2,
                    },
                    features: FeatureVector((0..d).map(|i| i as f64 / 3.0).collect()),
                })
                .collect(),
        }
    }

    fn header() -> TraceHeader {
        TraceHeader {
            feature_dim: 3,
            model: "stub".into(),
            tau_conf: None,
        }
    }

    #[test]
    fn trace_roundtrip() {
        let t = TraceFile::new(
            header(),
            vec![record("a", &[3, 3]), record("b", &[]), record("c", &[3])],
        )
        .unwrap();
        let text = t.to_jsonl();
        let back = TraceFile::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_jsonl(), text);
        assert_eq!(back.get("c").unwrap().detections.len(), 1);
        assert!(text.starts_with(r#"{"format":"safemon-trace","version":1,"feature_dim":3,"model":"stub","tau_conf":null}"#));
    }

    #[test]
    fn header_only_trace_is_valid() {
        let t = TraceFile::parse(&TraceFile::new(header(), vec![]).unwrap().to_jsonl()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn dimension_mismatch_names_the_sample() {
        let t = TraceFile::new(header(), vec![record("a", &[3]), record("bad", &[3, 2])]).unwrap();
        let v = TraceFile::parse(&t.to_jsonl()).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].id.as_deref(), Some("bad"));
        assert_eq!(v[0].line, 3);
    }

    #[test]
    fn all_violations_are_reported() {
        let text = concat!(
            r#"{"format":"safemon-trace","version":1,"feature_dim":1,"model":"m","tau_conf":0.5}"#,
            "\n",
            r#"{"id":"x","detections":[{"bbox":[5,0,1,1],"label":0,"confidence":0.5,"features":[1]}]}"#,
            "\n",
            r#"{"id":"y","detections":[]}"#,
            "\n",
            r#"{"id":"y","detections":[]}"#,
            "\n",
            "not json\n",
        );
        let v = TraceFile::parse(text).unwrap_err();
        assert_eq!(v.len(), 3, "{v:?}");
        assert_eq!(v[0].id.as_deref(), Some("x"));
        assert!(v[0].message.contains("x_min"), "{}", v[0].message);
        assert_eq!((v[1].line, v[1].message.as_str()), (4, "duplicate id"));
        assert_eq!(v[2].line, 5);
    }

    #[test]
    fn wrong_format_header() {
        let v = TraceFile::parse(r#"{"format":"safemon-manifest","version":1,"name":"x"}"#)
            .unwrap_err();
        assert!(v[0].message.contains("safemon-trace"));
        assert!(TraceFile::parse("").is_err());
    }

    fn manifest() -> Manifest {
        Manifest {
            name: "demo".into(),
            entries: vec![
                ManifestEntry {
                    id: "a".into(),
                    image: "images/a.png".into(),
                    metadata: FlightMetadata::new([1.0, -3.0, 0.5, 1.0, -2.0, 0.0]),
                    ground_truth: vec![BBox::new(0.0, 0.0, 10.0, 10.0).unwrap()],
                    threat: Some(ThreatLabel::Nominal),
                    corruption: None,
                },
                ManifestEntry {
                    id: "b".into(),
                    image: "images/b.ppm".into(),
                    metadata: FlightMetadata::default(),
                    ground_truth: vec![],
                    threat: None,
                    corruption: Some(
                        Corruption::new(crate::imaging::CorruptionKind::Fog, 2).unwrap(),
                    ),
                },
            ],
        }
    }

    #[test]
    fn manifest_roundtrip_and_missing_images() {
        let m = manifest();
        let text = m.to_jsonl();
        assert_eq!(Manifest::parse(&text).unwrap(), m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        write_manifest(&path, &m).unwrap();
        let err = load_manifest(&path).unwrap_err();
        let TraceIoError::Invalid { violations, .. } = err else {
            panic!("expected violations")
        };
        assert_eq!(violations.len(), 2);
        assert_eq!(violations[1].line, 3);

        std::fs::create_dir(dir.path().join("images")).unwrap();
        for f in ["a.png", "b.ppm"] {
            std::fs::write(dir.path().join("images").join(f), b"").unwrap();
        }
        assert_eq!(load_manifest(&path).unwrap(), m);
        let samples = m.to_samples(dir.path());
        assert_eq!(
            samples[0].image,
            ImageSource::File(dir.path().join("images/a.png"))
        );
    }

    #[test]
    fn manifest_duplicates_and_bad_boxes() {
        let mut m = manifest();
        m.entries[1].id = "a".into();
        let v = Manifest::parse(&m.to_jsonl()).unwrap_err();
        assert_eq!(v[0].message, "duplicate id");
        let bad = manifest()
            .to_jsonl()
            .replace("[0.0,0.0,10.0,10.0]", "[10.0,0.0,10.0,10.0]");
        let v = Manifest::parse(&bad).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].line, v[0].id.as_deref()), (2, Some("a")));
    }

    #[test]
    fn trace_manifest_cross_check() {
        let t = TraceFile::new(header(), vec![record("a", &[]), record("z", &[])]).unwrap();
        let m = manifest();
        assert_eq!(t.missing_ids(&m), vec!["b"]);
        assert_eq!(t.unknown_ids(&m), vec!["z"]);
    }
}
