//! Builds a box abstraction from stub-detector true positives and checks
//! features from the correct and erroneous modes against it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safemon::oms::{fit_oms, BoxAbstraction, OmsParams};
use safemon::pipeline::dataset_detections;
use safemon::synth::{generate_dataset, SceneConfig, StubDetector, StubDetectorConfig};

fn main() {
    let samples = generate_dataset(&SceneConfig::default(), 500, 5).expect("valid config");
    let config = StubDetectorConfig::default();
    let stub = StubDetector::new(config.clone(), 6).expect("valid stub");
    let dets = dataset_detections(&samples, &stub).expect("stub never fails");
    let params = OmsParams {
        k: config.modes,
        ..Default::default()
    };
    let images = dets
        .iter()
        .map(Vec::as_slice)
        .zip(samples.iter().map(|s| s.ground_truth.as_slice()));
    let abs = fit_oms(images, &params).expect("enough true positives");
    for (i, b) in abs.boxes.iter().enumerate() {
        let width: f64 = b.lo.iter().zip(&b.hi).map(|(l, h)| h - l).sum::<f64>() / abs.d as f64;
        println!("box {i}: mean side {width:.3}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 2000;
    let accepted = (0..n)
        .filter(|_| {
            abs.contains(&config.correct_features(&mut rng))
                .expect("same dimension")
        })
        .count();
    let rejected = (0..n)
        .filter(|_| {
            !abs.contains(&config.error_features(&mut rng))
                .expect("same dimension")
        })
        .count();
    println!(
        "fresh correct-mode features accepted: {:.3}",
        accepted as f64 / n as f64
    );
    println!(
        "error-mode features rejected:        {:.3}",
        rejected as f64 / n as f64
    );

    let text = abs.to_text();
    assert_eq!(BoxAbstraction::from_text(&text).expect("round trip"), abs);
    println!("serialized abstraction: {} lines", text.lines().count());
}
