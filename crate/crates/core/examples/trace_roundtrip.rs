//! Writes a manifest and a stub trace to a temporary directory, reads them
//! back and replays the trace through the pipeline.

use safemon::imaging::save_image;
use safemon::pipeline::{dataset_detections, ImageSource};
use safemon::synth::{generate_dataset, SceneConfig, StubDetector, StubDetectorConfig};
use safemon::trace_io::{
    load_manifest, load_trace, write_manifest, write_trace, Manifest, ManifestEntry, TraceFile,
    TraceHeader, TraceRecord,
};

fn main() {
    let dir = std::env::temp_dir().join(format!("safemon-trace-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(dir.join("images")).expect("temp dir");

    let samples = generate_dataset(&SceneConfig::default(), 5, 3).expect("valid config");
    let mut entries = Vec::new();
    for s in &samples {
        let image = format!("images/{}.png", s.id);
        if let ImageSource::Loaded(img) = &s.image {
            save_image(img, &dir.join(&image)).expect("png written");
        }
        entries.push(ManifestEntry {
            id: s.id.clone(),
            image,
            metadata: s.metadata,
            ground_truth: s.ground_truth.clone(),
            threat: s.threat,
            corruption: None,
        });
    }
    let manifest = Manifest {
        name: "roundtrip".into(),
        entries,
    };
    write_manifest(&dir.join("manifest.jsonl"), &manifest).expect("manifest written");

    let config = StubDetectorConfig::default();
    let stub = StubDetector::new(config.clone(), 4).expect("valid stub");
    let records = samples
        .iter()
        .zip(dataset_detections(&samples, &stub).expect("stub never fails"))
        .map(|(s, detections)| TraceRecord {
            id: s.id.clone(),
            detections,
        })
        .collect();
    let header = TraceHeader {
        feature_dim: config.feature_dim,
        model: "stub".into(),
        tau_conf: None,
    };
    let trace = TraceFile::new(header, records).expect("unique ids");
    write_trace(&dir.join("trace.jsonl"), &trace).expect("trace written");

    let manifest_back = load_manifest(&dir.join("manifest.jsonl")).expect("valid manifest");
    let trace_back = load_trace(&dir.join("trace.jsonl")).expect("valid trace");
    assert_eq!(manifest_back, manifest);
    assert_eq!(trace_back.records(), trace.records());
    println!(
        "{} entries, {} records, missing ids: {:?}",
        manifest_back.entries.len(),
        trace_back.len(),
        trace_back.missing_ids(&manifest_back)
    );
    println!("first trace lines:");
    for line in std::fs::read_to_string(dir.join("trace.jsonl"))
        .expect("readable")
        .lines()
        .take(2)
    {
        println!("  {}", &line[..line.len().min(160)]);
    }
    std::fs::remove_dir_all(&dir).expect("cleanup");
}
