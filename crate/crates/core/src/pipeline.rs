//! Serial monitoring: ODD, then OOD, then the detector, then OMS.
//!
//! [`run_sample`] stops at the first rejecting stage. [`run_dataset`] also
//! evaluates every monitor on every sample so that all monitor combinations
//! can be scored.

use std::borrow::Cow;
use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{image_correct, plain_detections, BBox, FeaturedDetection};
use crate::imaging::{
    compute_meta_properties, load_image, Corruption, Image, ImageError, MetaProperties,
};
use crate::odd::{check_odd, FlightMetadata, OddError, OddSpec};
use crate::oms::{check_oms, fit_oms, BoxAbstraction, OmsError, OmsParams};
use crate::ood::{check_ood, fit_ood_with, OodError, OodModel, SupportMode};
use crate::safety::{
    combination_table, evaluate, stage_attribution, Attribution, CombinationEntry, CombinationRow,
    MonitorSet, OutcomeRow, SafetyError, SafetyReport,
};
use crate::verdict::{Decision, Stage, Verdict};

/// Ground-truth threat category of a synthetic sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreatLabel {
    Nominal,
    OddViolation,
    OodThreat,
    IdError,
}

impl ThreatLabel {
    pub const ALL: [ThreatLabel; 4] = [
        ThreatLabel::Nominal,
        ThreatLabel::OddViolation,
        ThreatLabel::OodThreat,
        ThreatLabel::IdError,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Loaded(Image),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: ImageSource,
    pub metadata: FlightMetadata,
    pub ground_truth: Vec<BBox>,
    pub threat: Option<ThreatLabel>,
    pub corruption: Option<Corruption>,
}

impl Sample {
    pub fn load_image(&self) -> Result<Cow<'_, Image>, ImageError> {
        match &self.image {
            ImageSource::Loaded(img) => Ok(Cow::Borrowed(img)),
            ImageSource::File(path) => load_image(path).map(Cow::Owned),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("{0}")]
pub struct DetectorError(pub String);

/// Produces detections with per-detection feature vectors for one image.
pub trait Detector: Sync {
    fn detect(
        &self,
        sample: &Sample,
        image: &Image,
    ) -> Result<Vec<FeaturedDetection>, DetectorError>;

    /// Ids this detector cannot serve. Checked before a dataset run starts.
    fn missing_ids(&self, _samples: &[Sample]) -> Vec<String> {
        Vec::new()
    }
}

/// Replays precomputed detections looked up by sample id.
#[derive(Debug, Clone, Default)]
pub struct ReplayDetector {
    records: HashMap<String, Vec<FeaturedDetection>>,
}

impl ReplayDetector {
    pub fn new(records: HashMap<String, Vec<FeaturedDetection>>) -> Self {
        Self { records }
    }
}

impl FromIterator<(String, Vec<FeaturedDetection>)> for ReplayDetector {
    fn from_iter<T: IntoIterator<Item = (String, Vec<FeaturedDetection>)>>(iter: T) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl Detector for ReplayDetector {
    fn detect(
        &self,
        sample: &Sample,
        _image: &Image,
    ) -> Result<Vec<FeaturedDetection>, DetectorError> {
        self.records
            .get(&sample.id)
            .cloned()
            .ok_or_else(|| DetectorError(format!("no trace record for `{}`", sample.id)))
    }

    fn missing_ids(&self, samples: &[Sample]) -> Vec<String> {
        samples
            .iter()
            .filter(|s| !self.records.contains_key(&s.id))
            .map(|s| s.id.clone())
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("empty dataset")]
    Empty,
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("no detector output for {} sample(s): {}", .0.len(), .0.join(", "))]
    MissingIds(Vec<String>),
    #[error("sample `{id}`: image: {source}")]
    Image { id: String, source: ImageError },
    #[error("sample `{id}`: ODD: {source}")]
    Odd { id: String, source: OddError },
    #[error("sample `{id}`: OOD: {source}")]
    Ood { id: String, source: OodError },
    #[error("sample `{id}`: model: {source}")]
    Model { id: String, source: DetectorError },
    #[error("sample `{id}`: OMS: {source}")]
    Oms { id: String, source: OmsError },
    #[error("fitting OOD monitor: {0}")]
    OodFit(OodError),
    #[error("fitting OMS monitor: {0}")]
    OmsFit(OmsError),
    #[error(transparent)]
    Safety(#[from] SafetyError),
}

/// The three fitted monitors.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitors {
    pub odd: OddSpec,
    pub ood: OodModel,
    pub oms: BoxAbstraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_iou: f64,
    pub tau_conf: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            tau_iou: 0.7,
            tau_conf: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub id: String,
    pub decision: Decision,
    pub rejecting_stage: Option<Stage>,
    /// Verdicts of the stages that ran, in order.
    pub verdicts: Vec<Verdict>,
    /// Detections surviving the confidence threshold; absent if the model did not run.
    pub detections: Option<Vec<FeaturedDetection>>,
    pub model_correct: Option<bool>,
}

fn confident(dets: Vec<FeaturedDetection>, tau_conf: f64) -> Vec<FeaturedDetection> {
    dets.into_iter()
        .filter(|d| d.detection.confidence >= tau_conf)
        .collect()
}

fn odd_verdict(s: &Sample, spec: &OddSpec) -> Result<Verdict, PipelineError> {
    check_odd(spec, &s.metadata).map_err(|source| PipelineError::Odd {
        id: s.id.clone(),
        source,
    })
}

fn ood_verdict(
    s: &Sample,
    model: &OodModel,
    props: &MetaProperties,
) -> Result<Verdict, PipelineError> {
    check_ood(model, props).map_err(|source| PipelineError::Ood {
        id: s.id.clone(),
        source,
    })
}

fn oms_verdict(
    s: &Sample,
    abs: &BoxAbstraction,
    dets: &[FeaturedDetection],
) -> Result<Verdict, PipelineError> {
    check_oms(abs, dets).map_err(|source| PipelineError::Oms {
        id: s.id.clone(),
        source,
    })
}

fn meta(s: &Sample, img: &Image) -> Result<MetaProperties, PipelineError> {
    compute_meta_properties(img).map_err(|source| PipelineError::Image {
        id: s.id.clone(),
        source,
    })
}

fn infer(
    s: &Sample,
    img: &Image,
    detector: &dyn Detector,
    th: Thresholds,
) -> Result<(Vec<FeaturedDetection>, bool), PipelineError> {
    let raw = detector
        .detect(s, img)
        .map_err(|source| PipelineError::Model {
            id: s.id.clone(),
            source,
        })?;
    let dets = confident(raw, th.tau_conf);
    let correct = image_correct(
        &plain_detections(&dets),
        &s.ground_truth,
        th.tau_iou,
        th.tau_conf,
    );
    Ok((dets, correct))
}

fn finish(
    id: &str,
    verdicts: Vec<Verdict>,
    detections: Option<(Vec<FeaturedDetection>, bool)>,
) -> PipelineResult {
    let rejecting_stage = verdicts.iter().find(|v| v.is_reject()).map(|v| v.stage);
    let (detections, model_correct) = match detections {
        Some((d, c)) => (Some(d), Some(c)),
        None => (None, None),
    };
    PipelineResult {
        id: id.to_string(),
        decision: if rejecting_stage.is_some() {
            Decision::Reject
        } else {
            Decision::Accept
        },
        rejecting_stage,
        verdicts,
        detections,
        model_correct,
    }
}

fn serial(
    s: &Sample,
    img: &Image,
    monitors: &Monitors,
    detector: &dyn Detector,
    th: Thresholds,
    mut props: impl FnMut() -> Result<MetaProperties, PipelineError>,
) -> Result<PipelineResult, PipelineError> {
    let mut verdicts = Vec::with_capacity(3);
    let v = odd_verdict(s, &monitors.odd)?;
    let stop = v.is_reject();
    verdicts.push(v);
    if stop {
        return Ok(finish(&s.id, verdicts, None));
    }
    let v = ood_verdict(s, &monitors.ood, &props()?)?;
    let stop = v.is_reject();
    verdicts.push(v);
    if stop {
        return Ok(finish(&s.id, verdicts, None));
    }
    let (dets, correct) = infer(s, img, detector, th)?;
    verdicts.push(oms_verdict(s, &monitors.oms, &dets)?);
    Ok(finish(&s.id, verdicts, Some((dets, correct))))
}

/// Runs one sample through the serial chain, stopping at the first rejection.
pub fn run_sample(
    sample: &Sample,
    monitors: &Monitors,
    detector: &dyn Detector,
    th: Thresholds,
) -> Result<PipelineResult, PipelineError> {
    let img = sample.load_image().map_err(|source| PipelineError::Image {
        id: sample.id.clone(),
        source,
    })?;
    serial(sample, &img, monitors, detector, th, || meta(sample, &img))
}

/// Serial result plus every monitor's own decision on the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEvaluation {
    pub result: PipelineResult,
    pub row: CombinationRow,
    pub meta_properties: MetaProperties,
}

/// Like [`run_sample`], then completes the stages the serial chain skipped.
/// The detector runs exactly once per sample.
pub fn evaluate_sample(
    sample: &Sample,
    monitors: &Monitors,
    detector: &dyn Detector,
    th: Thresholds,
) -> Result<SampleEvaluation, PipelineError> {
    let img = sample.load_image().map_err(|source| PipelineError::Image {
        id: sample.id.clone(),
        source,
    })?;
    let props = meta(sample, &img)?;
    let result = serial(sample, &img, monitors, detector, th, || Ok(props))?;

    let find = |st: Stage| {
        result
            .verdicts
            .iter()
            .find(|v| v.stage == st)
            .map(Verdict::is_reject)
    };
    let odd = match find(Stage::Odd) {
        Some(r) => r,
        None => odd_verdict(sample, &monitors.odd)?.is_reject(),
    };
    let ood = match find(Stage::Ood) {
        Some(r) => r,
        None => ood_verdict(sample, &monitors.ood, &props)?.is_reject(),
    };
    let (oms, model_correct) = match (&result.detections, result.model_correct) {
        (Some(_), Some(c)) => (find(Stage::Oms).expect("OMS ran with the model"), c),
        _ => {
            let (dets, c) = infer(sample, &img, detector, th)?;
            (oms_verdict(sample, &monitors.oms, &dets)?.is_reject(), c)
        }
    };
    let row = CombinationRow {
        id: sample.id.clone(),
        model_correct,
        rejects: [odd, ood, oms],
    };
    Ok(SampleEvaluation {
        result,
        row,
        meta_properties: props,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRun {
    pub evaluations: Vec<SampleEvaluation>,
    /// Serial pipeline scored against the model's correctness on every sample.
    pub report: SafetyReport,
    pub table: Vec<CombinationEntry>,
    pub attribution: Attribution,
}

impl DatasetRun {
    pub fn results(&self) -> impl Iterator<Item = &PipelineResult> {
        self.evaluations.iter().map(|e| &e.result)
    }

    pub fn rows(&self) -> Vec<CombinationRow> {
        self.evaluations.iter().map(|e| e.row.clone()).collect()
    }

    pub fn entry(&self, set: MonitorSet) -> &CombinationEntry {
        self.table
            .iter()
            .find(|e| e.monitors == set)
            .expect("table covers every subset")
    }
}

/// Evaluates samples in parallel; results keep dataset order.
pub fn run_dataset(
    samples: &[Sample],
    monitors: &Monitors,
    detector: &dyn Detector,
    th: Thresholds,
) -> Result<DatasetRun, PipelineError> {
    if samples.is_empty() {
        return Err(PipelineError::Empty);
    }
    let mut seen = HashSet::with_capacity(samples.len());
    if let Some(dup) = samples.iter().find(|s| !seen.insert(s.id.as_str())) {
        return Err(PipelineError::DuplicateId(dup.id.clone()));
    }
    let missing = detector.missing_ids(samples);
    if !missing.is_empty() {
        return Err(PipelineError::MissingIds(missing));
    }

    let outcomes: Vec<Result<SampleEvaluation, PipelineError>> = samples
        .par_iter()
        .map(|s| evaluate_sample(s, monitors, detector, th))
        .collect();
    let evaluations = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let serial_rows: Vec<OutcomeRow> = evaluations
        .iter()
        .map(|e| {
            OutcomeRow::new(
                e.result.id.clone(),
                e.row.model_correct,
                e.result.rejecting_stage,
            )
        })
        .collect();
    let report = evaluate(&serial_rows)?;
    let attribution = stage_attribution(&serial_rows)?;
    let rows: Vec<CombinationRow> = evaluations.iter().map(|e| e.row.clone()).collect();
    let table = combination_table(&rows)?;
    Ok(DatasetRun {
        evaluations,
        report,
        table,
        attribution,
    })
}

/// Meta-properties of every sample, in order.
pub fn dataset_meta_properties(samples: &[Sample]) -> Result<Vec<MetaProperties>, PipelineError> {
    let out: Vec<Result<MetaProperties, PipelineError>> = samples
        .par_iter()
        .map(|s| {
            let img = s.load_image().map_err(|source| PipelineError::Image {
                id: s.id.clone(),
                source,
            })?;
            meta(s, &img)
        })
        .collect();
    out.into_iter().collect()
}

/// Raw detector output for every sample, in order.
pub fn dataset_detections(
    samples: &[Sample],
    detector: &dyn Detector,
) -> Result<Vec<Vec<FeaturedDetection>>, PipelineError> {
    let out: Vec<Result<Vec<FeaturedDetection>, PipelineError>> = samples
        .par_iter()
        .map(|s| {
            let img = s.load_image().map_err(|source| PipelineError::Image {
                id: s.id.clone(),
                source,
            })?;
            detector
                .detect(s, &img)
                .map_err(|source| PipelineError::Model {
                    id: s.id.clone(),
                    source,
                })
        })
        .collect();
    out.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub q: f64,
    pub support: SupportMode,
    pub oms: OmsParams,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            q: 0.01,
            support: SupportMode::SampleRange,
            oms: OmsParams::default(),
        }
    }
}

/// Fits OOD on the samples' images and OMS on the detector's true positives.
pub fn fit_monitors(
    samples: &[Sample],
    detector: &dyn Detector,
    odd: OddSpec,
    params: &FitParams,
) -> Result<Monitors, PipelineError> {
    let props = dataset_meta_properties(samples)?;
    let ood = fit_ood_with(&props, params.q, params.support).map_err(PipelineError::OodFit)?;
    let dets = dataset_detections(samples, detector)?;
    let oms = fit_oms(
        dets.iter()
            .map(Vec::as_slice)
            .zip(samples.iter().map(|s| s.ground_truth.as_slice())),
        &params.oms,
    )
    .map_err(PipelineError::OmsFit)?;
    Ok(Monitors { odd, ood, oms })
}

/// One line of the per-sample results log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    pub decision: Decision,
    pub rejecting_stage: Option<Stage>,
    pub verdicts: Vec<Verdict>,
    /// Number of confident detections, if the model ran in the serial chain.
    pub detections: Option<usize>,
    pub model_correct: bool,
    /// Each monitor's own decision, ignoring the serial short-circuit.
    pub individual: IndividualDecisions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndividualDecisions {
    #[serde(rename = "ODD")]
    pub odd: Decision,
    #[serde(rename = "OOD")]
    pub ood: Decision,
    #[serde(rename = "OMS")]
    pub oms: Decision,
}

impl From<&SampleEvaluation> for ResultRecord {
    fn from(e: &SampleEvaluation) -> Self {
        let d = |r: bool| {
            if r {
                Decision::Reject
            } else {
                Decision::Accept
            }
        };
        ResultRecord {
            id: e.result.id.clone(),
            decision: e.result.decision,
            rejecting_stage: e.result.rejecting_stage,
            verdicts: e.result.verdicts.clone(),
            detections: e.result.detections.as_ref().map(Vec::len),
            model_correct: e.row.model_correct,
            individual: IndividualDecisions {
                odd: d(e.row.rejects[0]),
                ood: d(e.row.rejects[1]),
                oms: d(e.row.rejects[2]),
            },
        }
    }
}

/// Appends one JSON line per evaluation.
pub fn write_results_log<W: Write>(
    mut w: W,
    evaluations: &[SampleEvaluation],
) -> std::io::Result<()> {
    for e in evaluations {
        serde_json::to_writer(&mut w, &ResultRecord::from(e))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Detection;
    use crate::imaging::MetaProperty;
    use crate::odd::OddParameter;
    use crate::oms::{build_abstraction, FeatureVector};
    use crate::ood::{BetaParams, PropertyModel};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Fixed {
        features: Vec<f64>,
        calls: AtomicUsize,
    }

    impl Detector for Fixed {
        fn detect(&self, s: &Sample, _: &Image) -> Result<Vec<FeaturedDetection>, DetectorError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(s.ground_truth
                .iter()
                .map(|&bbox| FeaturedDetection {
                    detection: Detection {
                        bbox,
                        label: 0,
                        confidence: 0.9,
                    },
                    features: FeatureVector(self.features.clone()),
                })
                .collect())
        }
    }

    fn fixed(features: &[f64]) -> Fixed {
        Fixed {
            features: features.to_vec(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Accepts brightness in [0.2, 0.8], every other property anywhere.
    fn ood_model() -> OodModel {
        let pm = |property: MetaProperty, lower: f64, upper: f64| PropertyModel {
            property,
            params: BetaParams {
                alpha: 2.0,
                beta: 2.0,
                scale_lo: 0.0,
                scale_hi: 8.0,
            },
            lower,
            upper,
        };
        OodModel {
            q: 0.01,
            support: SupportMode::Declared,
            properties: [
                pm(MetaProperty::Brightness, 0.2, 0.8),
                pm(MetaProperty::Saturation, 0.0, 1.0),
                pm(MetaProperty::Entropy, 0.0, 8.0),
                pm(MetaProperty::EdgeAmount, 0.0, 1.0),
            ],
        }
    }

    fn monitors() -> Monitors {
        Monitors {
            odd: OddSpec::landing_cone(),
            ood: ood_model(),
            oms: build_abstraction(
                &[vec![
                    FeatureVector(vec![0.0, 0.0]),
                    FeatureVector(vec![1.0, 1.0]),
                ]],
                0.0,
            )
            .unwrap(),
        }
    }

    fn sample(id: &str, gray: u8, along_track: f64) -> Sample {
        let mut metadata = FlightMetadata::new([1.0, -3.0, 0.0, 0.0, -4.0, 0.0]);
        metadata.set(OddParameter::AlongTrackDistance, Some(along_track));
        Sample {
            id: id.into(),
            image: ImageSource::Loaded(Image::filled(16, 16, [gray; 3]).unwrap()),
            metadata,
            ground_truth: vec![BBox::new(2.0, 2.0, 10.0, 10.0).unwrap()],
            threat: None,
            corruption: None,
        }
    }

    #[test]
    fn odd_rejection_short_circuits() {
        let det = fixed(&[0.5, 0.5]);
        let r = run_sample(
            &sample("a", 128, 5.0),
            &monitors(),
            &det,
            Thresholds::default(),
        )
        .unwrap();
        assert_eq!(r.rejecting_stage, Some(Stage::Odd));
        assert_eq!(r.verdicts.len(), 1);
        assert!(r.detections.is_none() && r.model_correct.is_none());
        assert_eq!(det.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn ood_rejection_skips_the_model() {
        let det = fixed(&[0.5, 0.5]);
        let r = run_sample(
            &sample("a", 255, 1.0),
            &monitors(),
            &det,
            Thresholds::default(),
        )
        .unwrap();
        assert_eq!(r.rejecting_stage, Some(Stage::Ood));
        assert_eq!(r.verdicts.len(), 2);
        assert_eq!(r.verdicts[1].reasons, vec!["brightness"]);
        assert_eq!(det.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn pass_through() {
        let det = fixed(&[0.5, 0.5]);
        let r = run_sample(
            &sample("a", 128, 1.0),
            &monitors(),
            &det,
            Thresholds::default(),
        )
        .unwrap();
        assert_eq!(r.decision, Decision::Accept);
        assert_eq!(r.verdicts.len(), 3);
        assert_eq!(r.detections.as_ref().unwrap().len(), 1);
        assert_eq!(r.model_correct, Some(true));
    }

    #[test]
    fn oms_rejection_keeps_correctness() {
        let det = fixed(&[5.0, 0.5]);
        let r = run_sample(
            &sample("a", 128, 1.0),
            &monitors(),
            &det,
            Thresholds::default(),
        )
        .unwrap();
        assert_eq!(r.rejecting_stage, Some(Stage::Oms));
        assert_eq!(r.model_correct, Some(true));
    }

    #[test]
    fn dataset_runs_model_once_per_sample() {
        let det = fixed(&[0.5, 0.5]);
        let samples = vec![
            sample("a", 128, 5.0),
            sample("b", 255, 1.0),
            sample("c", 128, 1.0),
        ];
        let run = run_dataset(&samples, &monitors(), &det, Thresholds::default()).unwrap();
        assert_eq!(det.calls.load(Ordering::SeqCst), 3);
        let ids: Vec<&str> = run.results().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        // b is bright enough for OOD to reject; ODD alone accepts it
        assert_eq!(run.evaluations[1].row.rejects, [false, true, false]);
        assert_eq!(run.evaluations[0].row.rejects, [true, false, false]);
        for e in &run.evaluations {
            let composed = e.row.compose(MonitorSet::FULL);
            assert_eq!(composed.rejecting_stage, e.result.rejecting_stage);
        }
        assert_eq!(run.report.sg, 0.0);
        assert!((run.report.ac - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dataset_errors() {
        let det = fixed(&[0.5, 0.5]);
        assert!(matches!(
            run_dataset(&[], &monitors(), &det, Thresholds::default()).unwrap_err(),
            PipelineError::Empty
        ));
        let dup = vec![sample("a", 128, 1.0), sample("a", 128, 1.0)];
        assert!(matches!(
            run_dataset(&dup, &monitors(), &det, Thresholds::default()).unwrap_err(),
            PipelineError::DuplicateId(id) if id == "a"
        ));
        let replay: ReplayDetector = [("a".to_string(), Vec::new())].into_iter().collect();
        let samples = vec![
            sample("a", 128, 1.0),
            sample("b", 128, 1.0),
            sample("c", 128, 1.0),
        ];
        assert!(matches!(
            run_dataset(&samples, &monitors(), &replay, Thresholds::default()).unwrap_err(),
            PipelineError::MissingIds(ids) if ids == ["b", "c"]
        ));
    }

    #[test]
    fn always_right_never_rejected() {
        let det = fixed(&[0.5, 0.5]);
        let samples: Vec<Sample> = (0..5).map(|i| sample(&i.to_string(), 128, 1.0)).collect();
        let run = run_dataset(&samples, &monitors(), &det, Thresholds::default()).unwrap();
        assert_eq!(
            (run.report.sg, run.report.rh, run.report.ac),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn results_log_is_one_line_per_sample() {
        let det = fixed(&[0.5, 0.5]);
        let samples = vec![sample("a", 128, 5.0), sample("b", 128, 1.0)];
        let run = run_dataset(&samples, &monitors(), &det, Thresholds::default()).unwrap();
        let mut buf = Vec::new();
        write_results_log(&mut buf, &run.evaluations).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let rec: ResultRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(rec.rejecting_stage, Some(Stage::Odd));
        assert_eq!(rec.individual.odd, Decision::Reject);
        assert!(lines[0].contains(r#""rejecting_stage":"ODD""#));
    }
}
