//! Corrupted-data experiment: monitors fitted on clean data, evaluated on
//! every corruption at every severity.
//!
//! Usage: `experiment_corrupted [n] [seed]`

use safemon::imaging::{Corruption, CorruptionKind};
use safemon::odd::OddSpec;
use safemon::pipeline::{fit_monitors, run_dataset, FitParams, Thresholds};
use safemon::safety::MonitorSet;
use safemon::synth::{
    corrupt_samples, generate_dataset, SceneConfig, StubDetector, StubDetectorConfig,
};
use safemon::verdict::Stage;

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args
        .next()
        .map_or(300, |a| a.parse().expect("n is an integer"));
    let seed: u64 = args
        .next()
        .map_or(0, |a| a.parse().expect("seed is an integer"));

    let stub = StubDetector::new(
        StubDetectorConfig {
            p_shift: 0.05,
            ..Default::default()
        },
        seed,
    )
    .expect("valid stub");
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
    let th = Thresholds::default();

    let ood = MonitorSet::of(&[Stage::Ood]);
    let oms = MonitorSet::of(&[Stage::Oms]);
    let both = MonitorSet::of(&[Stage::Ood, Stage::Oms]);
    println!("Corruption,Error,OOD_SG,OMS_SG,OOD+OMS_SG,OOD+OMS_RH,OOD+OMS_AC");
    let clean = run_dataset(&test, &monitors, &stub, th).expect("run succeeds");
    let mut runs = vec![("clean".to_string(), clean)];
    for kind in CorruptionKind::ALL {
        for severity in 1..=3 {
            let c = Corruption::new(kind, severity).expect("severity in range");
            let corrupted = corrupt_samples(&test, c, seed);
            runs.push((
                c.to_string(),
                run_dataset(&corrupted, &monitors, &stub, th).expect("run succeeds"),
            ));
        }
    }
    for (name, run) in &runs {
        let b = &run.entry(both).report;
        println!(
            "{name},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            run.entry(MonitorSet::NONE).report.error_rate(),
            run.entry(ood).report.sg,
            run.entry(oms).report.sg,
            b.sg,
            b.rh,
            b.ac
        );
    }
}
