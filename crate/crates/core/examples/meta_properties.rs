//! Computes the four image meta-properties for a few synthetic scenes.

use safemon::imaging::{compute_meta_properties, MetaProperty};
use safemon::synth::{generate_dataset, SceneConfig, ThreatFractions};

fn main() {
    let cfg = SceneConfig {
        threats: ThreatFractions::mixed(),
        ..Default::default()
    };
    let samples = generate_dataset(&cfg, 8, 42).expect("valid config");
    print!("{:<10} {:<14}", "id", "threat");
    for p in MetaProperty::ALL {
        print!(" {:>11}", p.name());
    }
    println!();
    for s in &samples {
        let img = s.load_image().expect("in-memory image");
        let m = compute_meta_properties(&img).expect("non-empty image");
        print!(
            "{:<10} {:<14}",
            s.id,
            s.threat.map_or("-".to_string(), |t| format!("{t:?}"))
        );
        for v in m.to_array() {
            print!(" {v:>11.4}");
        }
        println!();
    }
}
