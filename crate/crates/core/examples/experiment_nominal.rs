//! Nominal-data experiment: a stub detector with independent miss and
//! spurious-box rates, evaluated under every monitor combination.
//!
//! Usage: `experiment_nominal [n] [seed]`

use safemon::odd::OddSpec;
use safemon::pipeline::{fit_monitors, run_dataset, FitParams, Thresholds};
use safemon::safety::{attribution_csv, combination_csv};
use safemon::synth::{generate_dataset, SceneConfig, StubDetector, StubDetectorConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args
        .next()
        .map_or(2000, |a| a.parse().expect("n is an integer"));
    let seed: u64 = args
        .next()
        .map_or(0, |a| a.parse().expect("seed is an integer"));

    let config = StubDetectorConfig::default();
    let stub = StubDetector::new(config.clone(), seed).expect("valid stub");
    let train = generate_dataset(&SceneConfig::default(), 1000, seed).expect("valid config");
    let monitors = fit_monitors(
        &train,
        &stub,
        OddSpec::landing_cone(),
        &FitParams::default(),
    )
    .expect("fit succeeds");

    let test_cfg = SceneConfig {
        id_prefix: "t".into(),
        ..Default::default()
    };
    let test = generate_dataset(&test_cfg, n, seed.wrapping_add(1)).expect("valid config");
    let run = run_dataset(&test, &monitors, &stub, Thresholds::default()).expect("run succeeds");

    let expected = 1.0 - (1.0 - config.p_fn) * (1.0 - config.p_fp);
    println!("n = {n}, seed = {seed}, closed-form error rate {expected:.4}\n");
    print!("{}", combination_csv(&run.table));
    print!("\n{}", attribution_csv(&run.attribution));
}
