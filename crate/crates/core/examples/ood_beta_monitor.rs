//! Fits the OOD monitor on nominal synthetic images and checks clean and
//! corrupted test images against it.

use safemon::imaging::{Corruption, CorruptionKind};
use safemon::ood::{check_ood, fit_ood, OodModel};
use safemon::pipeline::dataset_meta_properties;
use safemon::synth::{corrupt_samples, generate_dataset, SceneConfig};

fn flag_rate(model: &OodModel, samples: &[safemon::pipeline::Sample]) -> f64 {
    let props = dataset_meta_properties(samples).expect("in-memory images");
    let flagged = props
        .iter()
        .filter(|m| check_ood(model, m).expect("finite").is_reject())
        .count();
    flagged as f64 / props.len() as f64
}

fn main() {
    let train = generate_dataset(&SceneConfig::default(), 600, 1).expect("valid config");
    let model = fit_ood(
        &dataset_meta_properties(&train).expect("in-memory images"),
        0.01,
    )
    .expect("enough rows");
    print!("{}", model.to_text());

    let cfg = SceneConfig {
        id_prefix: "t".into(),
        ..Default::default()
    };
    let test = generate_dataset(&cfg, 200, 2).expect("valid config");
    println!("\nclean flag rate {:.3}", flag_rate(&model, &test));
    for kind in [
        CorruptionKind::Brightness,
        CorruptionKind::GaussianNoise,
        CorruptionKind::Fog,
    ] {
        let rates: Vec<String> = (1..=3)
            .map(|s| {
                let c = Corruption::new(kind, s).expect("severity in range");
                format!("{:.3}", flag_rate(&model, &corrupt_samples(&test, c, 3)))
            })
            .collect();
        println!("{:<15} {}", kind.name(), rates.join("  "));
    }
}
