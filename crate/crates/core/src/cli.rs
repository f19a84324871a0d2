//! `safemon` command line.
//!
//! Every option can be given as a flag or in a TOML run file passed with
//! `--config`. The run file has one table per subcommand (`[synth_gen]`,
//! `[synth_detect]`, `[corrupt]`, `[fit_ood]`, `[fit_oms]`, `[calibrate]`,
//! `[evaluate]`, `[report]`) whose keys are the flag names with dashes replaced
//! by underscores, plus top-level `seed` and `tau_iou` shared by all of them.
//! Flags win over the file.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::detect::{calibrate_conf_threshold, plain_detections, BBox, Calibration, Detection};
use crate::imaging::{apply_corruption, save_image, Corruption, CorruptionKind};
use crate::odd::{parse_odd_spec, OddSpec};
use crate::oms::{fit_oms, BoxAbstraction, OmsParams, DEFAULT_K};
use crate::ood::{fit_ood_with, OodModel, SupportMode};
use crate::pipeline::{
    dataset_detections, dataset_meta_properties, run_dataset, write_results_log, Detector,
    ImageSource, Monitors, Sample, Thresholds,
};
use crate::safety::{
    attribution_csv, combination_csv, Attribution, CombinationEntry, SafetyReport,
};
use crate::synth::{
    derive_seed, generate_dataset, SceneConfig, StubDetector, StubDetectorConfig, ThreatFractions,
};
use crate::trace_io::{
    load_manifest, load_trace, write_atomic, write_manifest, write_trace, Manifest, ManifestEntry,
    TraceFile, TraceHeader, TraceRecord,
};

pub const REPORT_FORMAT: &str = "safemon-report";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Internal => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Internal => "internal",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    fn data(message: impl fmt::Display) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.to_string(),
        }
    }

    /// Single-line JSON diagnostic.
    pub fn diagnostic(&self) -> String {
        json!({
            "status": "error",
            "kind": self.kind.name(),
            "exit_code": self.kind.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn data<E: fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::data(format!("{context}: {e}"))
}

/// A fixed confidence threshold, or the one stored by `calibrate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TauConf {
    Value(f64),
    Calibrate,
}

impl FromStr for TauConf {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("calibrate") {
            return Ok(TauConf::Calibrate);
        }
        s.parse::<f64>()
            .map(TauConf::Value)
            .map_err(|_| format!("expected a number or `calibrate`, got `{s}`"))
    }
}

impl<'de> Deserialize<'de> for TauConf {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(TauConf::Value(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Serial,
    Combinations,
    Attribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreatMix {
    Nominal,
    Mixed,
}

impl ThreatMix {
    fn fractions(self) -> ThreatFractions {
        match self {
            ThreatMix::Nominal => ThreatFractions::nominal_only(),
            ThreatMix::Mixed => ThreatFractions::mixed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    SampleRange,
    Declared,
}

impl From<Support> for SupportMode {
    fn from(s: Support) -> Self {
        match s {
            Support::SampleRange => SupportMode::SampleRange,
            Support::Declared => SupportMode::Declared,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "safemon",
    version,
    about = "Runtime safety monitors for object detectors"
)]
pub struct Cli {
    /// TOML run file supplying defaults for every subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic dataset generation and stub inference.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Write a corrupted copy of a dataset; metadata is kept.
    Corrupt(CorruptArgs),
    /// Fit the OOD monitor on a dataset's images.
    FitOod(FitOodArgs),
    /// Fit the OMS box abstraction on a trace's true positives.
    FitOms(FitOmsArgs),
    /// Choose the confidence threshold maximizing F1 on a validation set.
    Calibrate(CalibrateArgs),
    /// Run the monitored pipeline and score it.
    Evaluate(EvaluateArgs),
    /// Render evaluation reports as delimited tables.
    Report(ReportArgs),
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Generate train/val/test splits with images, manifests and stub traces.
    Gen(GenArgs),
    /// Run the stub detector over a manifest and write a trace.
    Detect(DetectArgs),
}

/// Stub error rates settable from the command line.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubOverrides {
    /// Miss probability.
    #[arg(long)]
    pub p_fn: Option<f64>,
    /// Spurious-box probability.
    #[arg(long)]
    pub p_fp: Option<f64>,
    /// Localization-failure probability.
    #[arg(long)]
    pub p_shift: Option<f64>,
    /// Full stub configuration; run file only.
    #[arg(skip)]
    pub stub: Option<StubDetectorConfig>,
}

impl StubOverrides {
    fn merge(self, file: Self) -> Self {
        Self {
            p_fn: self.p_fn.or(file.p_fn),
            p_fp: self.p_fp.or(file.p_fp),
            p_shift: self.p_shift.or(file.p_shift),
            stub: self.stub.or(file.stub),
        }
    }

    fn resolve(&self) -> StubDetectorConfig {
        let mut c = self.stub.clone().unwrap_or_default();
        if let Some(p) = self.p_fn {
            c.p_fn = p;
        }
        if let Some(p) = self.p_fp {
            c.p_fp = p;
        }
        if let Some(p) = self.p_shift {
            c.p_shift = p;
        }
        c
    }
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Threat mix of the test split; train and val are always nominal.
    #[arg(long, value_enum)]
    pub test_threats: Option<ThreatMix>,
    /// Scene configuration; run file only.
    #[arg(skip)]
    pub scene: Option<SceneConfig>,
    #[command(flatten)]
    #[serde(flatten)]
    pub stub: StubOverrides,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Trace file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub stub: StubOverrides,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// brightness, defocus_blur, frosted_blur, fog or gaussian_noise.
    #[arg(long)]
    pub kind: Option<CorruptionKind>,
    /// 1, 2 or 3.
    #[arg(long)]
    pub severity: Option<u8>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for the manifest and images.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOodArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Two-sided quantile level, in (0, 0.5).
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, value_enum)]
    pub support: Option<Support>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOmsArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Number of clusters.
    #[arg(long)]
    pub k: Option<usize>,
    /// Relative box enlargement.
    #[arg(long)]
    pub enlargement: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau_iou: Option<f64>,
    /// Confidence filter before matching.
    #[arg(long)]
    pub tau_conf: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub tau_iou: Option<f64>,
    /// Calibration document to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// ODD specification; the built-in landing cone when absent.
    #[arg(long)]
    pub odd: Option<PathBuf>,
    #[arg(long)]
    pub ood: Option<PathBuf>,
    #[arg(long)]
    pub oms: Option<PathBuf>,
    #[arg(long)]
    pub tau_iou: Option<f64>,
    /// A number, or `calibrate` to read `--calibration`.
    #[arg(long)]
    pub tau_conf: Option<TauConf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Sections of the report; all when absent.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub mode: Option<Vec<Mode>>,
    /// Output directory for results.jsonl and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportArgs {
    /// One or more report.json files written by `evaluate`.
    #[arg(long = "input", num_args = 1..)]
    pub inputs: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub seed: Option<u64>,
    pub tau_iou: Option<f64>,
    pub synth_gen: GenArgs,
    pub synth_detect: DetectArgs,
    pub corrupt: CorruptArgs,
    pub fit_ood: FitOodArgs,
    pub fit_oms: FitOmsArgs,
    pub calibrate: CalibrateArgs,
    pub evaluate: EvaluateArgs,
    pub report: ReportArgs,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(data(&path.display().to_string()))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| {
        CliError::usage(format!(
            "missing required option --{}",
            name.replace('_', "-")
        ))
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(data(&path.display().to_string()))
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).map_err(data(&path.display().to_string()))
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "--{name} must lie in [0, 1], got {v}"
        )))
    }
}

fn manifest_samples(path: &Path) -> Result<(Manifest, Vec<Sample>)> {
    let m = load_manifest(path).map_err(CliError::data)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let samples = m.to_samples(base);
    Ok((m, samples))
}

fn stub_trace(samples: &[Sample], stub: &StubDetector) -> Result<TraceFile> {
    let dets = dataset_detections(samples, stub).map_err(CliError::data)?;
    let records = samples
        .iter()
        .zip(dets)
        .map(|(s, detections)| TraceRecord {
            id: s.id.clone(),
            detections,
        })
        .collect();
    let header = TraceHeader {
        feature_dim: stub.config.feature_dim,
        model: "stub".into(),
        tau_conf: None,
    };
    TraceFile::new(header, records).map_err(|id| CliError::data(format!("duplicate id `{id}`")))
}

fn write_split(dir: &Path, name: &str, samples: Vec<Sample>, stub: &StubDetector) -> Result<usize> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(data(&images.display().to_string()))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in &samples {
        let rel = format!("images/{}.png", s.id);
        let ImageSource::Loaded(img) = &s.image else {
            return Err(CliError::data(format!("sample `{}` has no pixels", s.id)));
        };
        save_image(img, &dir.join(&rel)).map_err(data(&rel))?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            image: rel,
            metadata: s.metadata,
            ground_truth: s.ground_truth.clone(),
            threat: s.threat,
            corruption: s.corruption,
        });
    }
    let manifest = Manifest {
        name: name.to_string(),
        entries,
    };
    write_manifest(&dir.join("manifest.jsonl"), &manifest).map_err(CliError::data)?;
    write_trace(&dir.join("trace.jsonl"), &stub_trace(&samples, stub)?).map_err(CliError::data)?;
    Ok(samples.len())
}

fn synth_gen(a: GenArgs, seed: u64) -> Result<serde_json::Value> {
    let out = required(a.out, "out")?;
    let scene = a.scene.unwrap_or_default();
    let stub_cfg = a.stub.resolve();
    let stub_seed = derive_seed(seed, 100);
    let stub = StubDetector::new(stub_cfg.clone(), stub_seed)
        .map_err(|e| CliError::usage(e.to_string()))?;
    let test_threats = a.test_threats.unwrap_or(ThreatMix::Mixed);
    let splits = [
        ("train", a.n_train.unwrap_or(1000), ThreatMix::Nominal),
        ("val", a.n_val.unwrap_or(300), ThreatMix::Nominal),
        ("test", a.n_test.unwrap_or(500), test_threats),
    ];
    let mut counts = serde_json::Map::new();
    let mut split_seeds = serde_json::Map::new();
    for (i, (name, n, mix)) in splits.into_iter().enumerate() {
        let cfg = SceneConfig {
            threats: mix.fractions(),
            id_prefix: format!("{name}-"),
            ..scene.clone()
        };
        let split_seed = derive_seed(seed, i as u64);
        let samples =
            generate_dataset(&cfg, n, split_seed).map_err(|e| CliError::usage(e.to_string()))?;
        counts.insert(
            name.into(),
            write_split(&out.join(name), name, samples, &stub)?.into(),
        );
        split_seeds.insert(name.into(), split_seed.into());
    }
    let provenance = json!({
        "seed": seed,
        "split_seeds": split_seeds,
        "stub_seed": stub_seed,
        "counts": counts,
        "test_threats": test_threats,
        "scene": scene,
        "stub": stub_cfg,
    });
    let text = serde_json::to_string_pretty(&provenance).expect("provenance serializes") + "\n";
    write_out(&out.join("synth.json"), text.as_bytes())?;
    Ok(
        json!({"command": "synth gen", "out": out, "seed": seed, "stub_seed": stub_seed, "counts": counts}),
    )
}

fn synth_detect(a: DetectArgs, seed: u64) -> Result<serde_json::Value> {
    let manifest = required(a.manifest, "manifest")?;
    let out = required(a.out, "out")?;
    let stub =
        StubDetector::new(a.stub.resolve(), seed).map_err(|e| CliError::usage(e.to_string()))?;
    let (_, samples) = manifest_samples(&manifest)?;
    let trace = stub_trace(&samples, &stub)?;
    write_trace(&out, &trace).map_err(CliError::data)?;
    Ok(json!({"command": "synth detect", "out": out, "seed": seed, "records": trace.len()}))
}

fn corrupt(a: CorruptArgs, seed: u64) -> Result<serde_json::Value> {
    let manifest_path = required(a.manifest, "manifest")?;
    let kind = required(a.kind, "kind")?;
    let severity = required(a.severity, "severity")?;
    let out = required(a.out, "out")?;
    let c = Corruption::new(kind, severity).map_err(|e| CliError::usage(e.to_string()))?;
    let target = out.join("manifest.jsonl");
    if target.exists() && fs::canonicalize(&target).ok() == fs::canonicalize(&manifest_path).ok() {
        return Err(CliError::usage("output would overwrite the input manifest"));
    }
    let (manifest, samples) = manifest_samples(&manifest_path)?;
    if let Some(e) = manifest.entries.iter().find(|e| e.corruption.is_some()) {
        return Err(CliError::data(format!(
            "sample `{}` is already corrupted",
            e.id
        )));
    }
    let images = out.join("images");
    fs::create_dir_all(&images).map_err(data(&images.display().to_string()))?;
    let results: Vec<Result<ManifestEntry>> = {
        use rayon::prelude::*;
        manifest
            .entries
            .par_iter()
            .zip(samples.par_iter())
            .map(|(e, s)| {
                let img = s.load_image().map_err(data(&e.image))?;
                let key = derive_seed(seed, crate::synth::hash_id(&e.id));
                let dirty = apply_corruption(&img, c, key);
                let rel = format!("images/{}.png", e.id);
                save_image(&dirty, &out.join(&rel)).map_err(data(&rel))?;
                Ok(ManifestEntry {
                    image: rel,
                    corruption: Some(c),
                    ..e.clone()
                })
            })
            .collect()
    };
    let entries = results.into_iter().collect::<Result<Vec<_>>>()?;
    let corrupted = Manifest {
        name: format!("{}-{c}", manifest.name),
        entries,
    };
    write_manifest(&target, &corrupted).map_err(CliError::data)?;
    Ok(
        json!({"command": "corrupt", "out": out, "corruption": c.to_string(), "seed": seed, "samples": corrupted.entries.len()}),
    )
}

fn fit_ood_cmd(a: FitOodArgs) -> Result<serde_json::Value> {
    let manifest = required(a.manifest, "manifest")?;
    let out = required(a.out, "out")?;
    let q = a.q.unwrap_or(0.01);
    let support = a.support.unwrap_or(Support::SampleRange);
    let (_, samples) = manifest_samples(&manifest)?;
    let props = dataset_meta_properties(&samples).map_err(CliError::data)?;
    let model = fit_ood_with(&props, q, support.into()).map_err(CliError::data)?;
    write_out(&out, model.to_text().as_bytes())?;
    let bounds: serde_json::Map<String, serde_json::Value> = model
        .properties
        .iter()
        .map(|p| (p.property.name().to_string(), json!([p.lower, p.upper])))
        .collect();
    Ok(
        json!({"command": "fit-ood", "out": out, "q": q, "support": support, "rows": props.len(), "bounds": bounds}),
    )
}

fn fit_oms_cmd(a: FitOmsArgs, seed: u64, tau_iou: f64) -> Result<serde_json::Value> {
    let manifest = required(a.manifest, "manifest")?;
    let trace_path = required(a.trace, "trace")?;
    let out = required(a.out, "out")?;
    let params = OmsParams {
        tau_iou,
        tau_conf: a.tau_conf.unwrap_or(0.0),
        k: a.k.unwrap_or(DEFAULT_K),
        enlargement: a.enlargement.unwrap_or(0.0),
        seed,
    };
    let m = load_manifest(&manifest).map_err(CliError::data)?;
    let trace = load_trace(&trace_path).map_err(CliError::data)?;
    let missing = trace.missing_ids(&m);
    if !missing.is_empty() {
        return Err(CliError::data(format!(
            "trace lacks {} id(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let images = m.entries.iter().map(|e| {
        (
            trace.get(&e.id).expect("checked").detections.as_slice(),
            e.ground_truth.as_slice(),
        )
    });
    let abs = fit_oms(images, &params).map_err(CliError::data)?;
    write_out(&out, abs.to_text().as_bytes())?;
    Ok(
        json!({"command": "fit-oms", "out": out, "params": params, "boxes": abs.boxes.len(), "d": abs.d}),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDoc {
    pub tau_iou: f64,
    pub images: usize,
    #[serde(flatten)]
    pub calibration: Calibration,
}

fn calibrate_cmd(a: CalibrateArgs, tau_iou: f64) -> Result<serde_json::Value> {
    let manifest = required(a.manifest, "manifest")?;
    let trace_path = required(a.trace, "trace")?;
    let out = required(a.out, "out")?;
    let m = load_manifest(&manifest).map_err(CliError::data)?;
    let trace = load_trace(&trace_path).map_err(CliError::data)?;
    let missing = trace.missing_ids(&m);
    if !missing.is_empty() {
        return Err(CliError::data(format!(
            "trace lacks {} id(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let plain: Vec<(Vec<Detection>, &[BBox])> = m
        .entries
        .iter()
        .map(|e| {
            (
                plain_detections(&trace.get(&e.id).expect("checked").detections),
                e.ground_truth.as_slice(),
            )
        })
        .collect();
    let cal = calibrate_conf_threshold(plain.iter().map(|(d, g)| (d.as_slice(), *g)), tau_iou);
    let doc = CalibrationDoc {
        tau_iou,
        images: plain.len(),
        calibration: cal,
    };
    let text = serde_json::to_string_pretty(&doc).expect("calibration serializes") + "\n";
    write_out(&out, text.as_bytes())?;
    Ok(json!({"command": "calibrate", "out": out, "threshold": cal.threshold, "f1": cal.f1}))
}

/// Machine-readable output of `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub format: String,
    pub version: u32,
    pub dataset: String,
    pub n: usize,
    pub tau_iou: f64,
    pub tau_conf: f64,
    pub inputs: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub serial: Option<SafetyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combinations: Option<Vec<CombinationEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribution: Option<Attribution>,
}

fn evaluate_cmd(a: EvaluateArgs, tau_iou: f64) -> Result<serde_json::Value> {
    let manifest = required(a.manifest, "manifest")?;
    let trace_path = required(a.trace, "trace")?;
    let ood_path = required(a.ood, "ood")?;
    let oms_path = required(a.oms, "oms")?;
    let out = required(a.out, "out")?;
    let modes = a
        .mode
        .unwrap_or_else(|| vec![Mode::Serial, Mode::Combinations, Mode::Attribution]);
    let tau_conf = match required(a.tau_conf, "tau_conf")? {
        TauConf::Value(v) => v,
        TauConf::Calibrate => {
            let path = required(a.calibration.clone(), "calibration")?;
            let doc: CalibrationDoc = serde_json::from_str(&read_text(&path)?)
                .map_err(data(&path.display().to_string()))?;
            doc.calibration.threshold
        }
    };
    check_probability("tau-conf", tau_conf)?;

    let odd = match &a.odd {
        Some(p) => parse_odd_spec(&read_text(p)?).map_err(data(&p.display().to_string()))?,
        None => OddSpec::landing_cone(),
    };
    let ood = OodModel::from_text(&read_text(&ood_path)?)
        .map_err(data(&ood_path.display().to_string()))?;
    let oms = BoxAbstraction::from_text(&read_text(&oms_path)?)
        .map_err(data(&oms_path.display().to_string()))?;
    let (m, samples) = manifest_samples(&manifest)?;
    let trace = load_trace(&trace_path).map_err(CliError::data)?;
    if trace.header.feature_dim != oms.d {
        return Err(CliError::data(format!(
            "trace feature dimension {} does not match the abstraction's {}",
            trace.header.feature_dim, oms.d
        )));
    }
    let detector = trace.to_replay();
    let monitors = Monitors { odd, ood, oms };
    let th = Thresholds { tau_iou, tau_conf };
    let run =
        run_dataset(&samples, &monitors, &detector as &dyn Detector, th).map_err(CliError::data)?;

    let mut log = Vec::new();
    write_results_log(&mut log, &run.evaluations).map_err(CliError::data)?;
    write_out(&out.join("results.jsonl"), &log)?;
    let doc = ReportDoc {
        format: REPORT_FORMAT.into(),
        version: 1,
        dataset: m.name.clone(),
        n: samples.len(),
        tau_iou,
        tau_conf,
        inputs: json!({
            "manifest": manifest,
            "trace": trace_path,
            "odd": a.odd,
            "ood": ood_path,
            "oms": oms_path,
            "calibration": a.calibration,
        }),
        serial: modes.contains(&Mode::Serial).then(|| run.report.clone()),
        combinations: modes
            .contains(&Mode::Combinations)
            .then(|| run.table.clone()),
        attribution: modes
            .contains(&Mode::Attribution)
            .then(|| run.attribution.clone()),
    };
    let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    write_out(&out.join("report.json"), text.as_bytes())?;
    Ok(json!({
        "command": "evaluate",
        "out": out,
        "n": samples.len(),
        "tau_conf": tau_conf,
        "sg": run.report.sg,
        "rh": run.report.rh,
        "ac": run.report.ac,
    }))
}

fn report_cmd(a: ReportArgs) -> Result<serde_json::Value> {
    let inputs = required(a.inputs.filter(|v| !v.is_empty()), "input")?;
    let out = required(a.out, "out")?;
    let mut docs = Vec::with_capacity(inputs.len());
    for p in &inputs {
        let doc: ReportDoc =
            serde_json::from_str(&read_text(p)?).map_err(data(&p.display().to_string()))?;
        if doc.format != REPORT_FORMAT {
            return Err(CliError::data(format!(
                "{}: not a {REPORT_FORMAT} document",
                p.display()
            )));
        }
        docs.push(doc);
    }
    let multi = docs.len() > 1;
    let mut table = String::new();
    let mut attribution = String::new();
    for doc in &docs {
        if let Some(c) = &doc.combinations {
            append_csv(
                &mut table,
                &combination_csv(c),
                multi.then_some(doc.dataset.as_str()),
            );
        }
        if let Some(at) = &doc.attribution {
            append_csv(
                &mut attribution,
                &attribution_csv(at),
                multi.then_some(doc.dataset.as_str()),
            );
        }
    }
    let mut written = Vec::new();
    if !table.is_empty() {
        write_out(&out.join("table.csv"), table.as_bytes())?;
        written.push("table.csv");
    }
    if !attribution.is_empty() {
        write_out(&out.join("attribution.csv"), attribution.as_bytes())?;
        written.push("attribution.csv");
    }
    let summary = json!({
        "format": "safemon-summary",
        "version": 1,
        "reports": docs,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_out(&out.join("summary.json"), text.as_bytes())?;
    written.push("summary.json");
    Ok(json!({"command": "report", "out": out, "written": written}))
}

/// Appends `csv`, prefixing a `Dataset` column when `dataset` is set and
/// writing the header only once.
fn append_csv(acc: &mut String, csv: &str, dataset: Option<&str>) {
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default();
    if acc.is_empty() {
        match dataset {
            Some(_) => acc.push_str(&format!("Dataset,{header}\n")),
            None => acc.push_str(&format!("{header}\n")),
        }
    }
    for l in lines {
        match dataset {
            Some(d) => acc.push_str(&format!("{d},{l}\n")),
            None => acc.push_str(&format!("{l}\n")),
        }
    }
}

/// Runs a parsed command line; returns the summary printed on success.
pub fn execute(cli: Cli) -> Result<serde_json::Value> {
    let file = match &cli.config {
        Some(p) => RunFile::load(p)?,
        None => RunFile::default(),
    };
    let seed = |s: Option<u64>, section: Option<u64>| s.or(section).or(file.seed).unwrap_or(0);
    let tau_iou = |t: Option<f64>, section: Option<f64>| -> Result<f64> {
        let v = t.or(section).or(file.tau_iou).unwrap_or(0.7);
        check_probability("tau-iou", v)?;
        Ok(v)
    };
    match cli.command {
        Command::Synth(SynthCommand::Gen(a)) => {
            let f = file.synth_gen.clone();
            let s = seed(a.seed, f.seed);
            let merged = GenArgs {
                out: a.out.or(f.out),
                seed: Some(s),
                n_train: a.n_train.or(f.n_train),
                n_val: a.n_val.or(f.n_val),
                n_test: a.n_test.or(f.n_test),
                test_threats: a.test_threats.or(f.test_threats),
                scene: a.scene.or(f.scene),
                stub: a.stub.merge(f.stub),
            };
            synth_gen(merged, s)
        }
        Command::Synth(SynthCommand::Detect(a)) => {
            let f = file.synth_detect.clone();
            let s = seed(a.seed, f.seed);
            let merged = DetectArgs {
                manifest: a.manifest.or(f.manifest),
                out: a.out.or(f.out),
                seed: Some(s),
                stub: a.stub.merge(f.stub),
            };
            synth_detect(merged, s)
        }
        Command::Corrupt(a) => {
            let f = file.corrupt.clone();
            let s = seed(a.seed, f.seed);
            corrupt(
                CorruptArgs {
                    manifest: a.manifest.or(f.manifest),
                    kind: a.kind.or(f.kind),
                    severity: a.severity.or(f.severity),
                    seed: Some(s),
                    out: a.out.or(f.out),
                },
                s,
            )
        }
        Command::FitOod(a) => {
            let f = file.fit_ood.clone();
            fit_ood_cmd(FitOodArgs {
                manifest: a.manifest.or(f.manifest),
                q: a.q.or(f.q),
                support: a.support.or(f.support),
                out: a.out.or(f.out),
            })
        }
        Command::FitOms(a) => {
            let f = file.fit_oms.clone();
            let s = seed(a.seed, f.seed);
            let t = tau_iou(a.tau_iou, f.tau_iou)?;
            fit_oms_cmd(
                FitOmsArgs {
                    manifest: a.manifest.or(f.manifest),
                    trace: a.trace.or(f.trace),
                    k: a.k.or(f.k),
                    enlargement: a.enlargement.or(f.enlargement),
                    seed: Some(s),
                    tau_iou: Some(t),
                    tau_conf: a.tau_conf.or(f.tau_conf),
                    out: a.out.or(f.out),
                },
                s,
                t,
            )
        }
        Command::Calibrate(a) => {
            let f = file.calibrate.clone();
            let t = tau_iou(a.tau_iou, f.tau_iou)?;
            calibrate_cmd(
                CalibrateArgs {
                    manifest: a.manifest.or(f.manifest),
                    trace: a.trace.or(f.trace),
                    tau_iou: Some(t),
                    out: a.out.or(f.out),
                },
                t,
            )
        }
        Command::Evaluate(a) => {
            let f = file.evaluate.clone();
            let t = tau_iou(a.tau_iou, f.tau_iou)?;
            evaluate_cmd(
                EvaluateArgs {
                    manifest: a.manifest.or(f.manifest),
                    trace: a.trace.or(f.trace),
                    odd: a.odd.or(f.odd),
                    ood: a.ood.or(f.ood),
                    oms: a.oms.or(f.oms),
                    tau_iou: Some(t),
                    tau_conf: a.tau_conf.or(f.tau_conf),
                    calibration: a.calibration.or(f.calibration),
                    mode: a.mode.or(f.mode),
                    out: a.out.or(f.out),
                },
                t,
            )
        }
        Command::Report(a) => {
            let f = file.report.clone();
            report_cmd(ReportArgs {
                inputs: a.inputs.or(f.inputs),
                out: a.out.or(f.out),
            })
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(cli)));
    let result = outcome.unwrap_or_else(|panic| {
        let message = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(CliError {
            kind: ErrorKind::Internal,
            message,
        })
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            e.kind.exit_code()
        }
    }
}
