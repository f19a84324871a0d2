//! Safety gain, residual hazard and availability cost for every monitor
//! combination, plus per-stage attribution, from hand-written decisions.

use safemon::safety::{
    attribution_csv, combination_csv, combination_table, evaluate, stage_attribution,
    CombinationRow, MonitorSet,
};

fn main() {
    // (model correct, ODD rejects, OOD rejects, OMS rejects)
    let raw = [
        (true, false, false, false),
        (true, false, false, false),
        (true, false, true, false),
        (false, false, true, true),
        (false, true, false, false),
        (false, false, false, true),
        (false, false, false, false),
        (true, false, false, true),
        (true, false, false, false),
        (false, false, true, false),
    ];
    let rows: Vec<CombinationRow> = raw
        .iter()
        .enumerate()
        .map(|(i, &(ok, odd, ood, oms))| CombinationRow {
            id: format!("img{i}"),
            model_correct: ok,
            rejects: [odd, ood, oms],
        })
        .collect();
    let table = combination_table(&rows).expect("non-empty");
    print!("{}", combination_csv(&table));

    let serial: Vec<_> = rows.iter().map(|r| r.compose(MonitorSet::FULL)).collect();
    let report = evaluate(&serial).expect("non-empty");
    println!(
        "\nerror rate {:.2} = SG {:.2} + RH {:.2}\nrejection rate {:.2} = SG {:.2} + AC {:.2}",
        report.error_rate(),
        report.sg,
        report.rh,
        report.rejection_rate(),
        report.sg,
        report.ac
    );
    print!(
        "\n{}",
        attribution_csv(&stage_attribution(&serial).expect("non-empty"))
    );
}
