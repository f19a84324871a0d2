//! Runs individual samples through the ODD, OOD, OMS chain and prints where
//! each one stops.

use safemon::odd::OddSpec;
use safemon::pipeline::{fit_monitors, run_sample, FitParams, Thresholds};
use safemon::synth::{
    generate_dataset, SceneConfig, StubDetector, StubDetectorConfig, ThreatFractions,
};

fn main() {
    let train = generate_dataset(&SceneConfig::default(), 600, 21).expect("valid config");
    let stub = StubDetector::new(StubDetectorConfig::default(), 22).expect("valid stub");
    let monitors = fit_monitors(
        &train,
        &stub,
        OddSpec::landing_cone(),
        &FitParams::default(),
    )
    .expect("fit succeeds");

    let cfg = SceneConfig {
        threats: ThreatFractions::mixed(),
        id_prefix: "t".into(),
        ..Default::default()
    };
    for s in generate_dataset(&cfg, 12, 23).expect("valid config") {
        let r = run_sample(&s, &monitors, &stub, Thresholds::default()).expect("sample runs");
        let stage = r.rejecting_stage.map_or("-", |st| st.name());
        let reasons: Vec<String> = r.verdicts.iter().flat_map(|v| v.reasons.clone()).collect();
        println!(
            "{} {:<13} {:?} at {stage:<3} model correct {:<5} {}",
            s.id,
            s.threat.map_or("-".into(), |t| format!("{t:?}")),
            r.decision,
            r.model_correct.map_or("n/a".into(), |c| c.to_string()),
            reasons.join(",")
        );
    }
}
