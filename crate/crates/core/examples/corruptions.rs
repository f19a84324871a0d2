//! Applies every corruption at every severity to one scene and reports how
//! the meta-properties move. Pass a directory to also save the images.

use std::path::PathBuf;

use safemon::imaging::{
    apply_corruption, compute_meta_properties, save_image, Corruption, CorruptionKind,
};
use safemon::synth::{generate_dataset, SceneConfig};

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let sample = generate_dataset(&SceneConfig::default(), 1, 7)
        .expect("valid config")
        .remove(0);
    let clean = sample.load_image().expect("in-memory image").into_owned();
    let base = compute_meta_properties(&clean).expect("non-empty");
    println!("{:<22} bright   sat  entropy  edges", "corruption");
    println!(
        "{:<22} {:.3} {:.3} {:>8.3} {:.3}",
        "clean", base.brightness, base.saturation, base.entropy, base.edge_amount
    );
    for kind in CorruptionKind::ALL {
        for severity in 1..=3 {
            let c = Corruption::new(kind, severity).expect("severity in range");
            let img = apply_corruption(&clean, c, 11);
            let m = compute_meta_properties(&img).expect("non-empty");
            println!(
                "{:<22} {:.3} {:.3} {:>8.3} {:.3}",
                c.to_string(),
                m.brightness,
                m.saturation,
                m.entropy,
                m.edge_amount
            );
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).expect("output directory");
                save_image(&img, &dir.join(format!("{}_{severity}.png", kind.name())))
                    .expect("png written");
            }
        }
    }
}
