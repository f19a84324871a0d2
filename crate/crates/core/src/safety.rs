//! Safety gain, residual hazard and availability cost of a monitored model.
//!
//! A sample is dangerous when the model is wrong on it. A monitor that
//! rejects a dangerous sample contributes to the safety gain (SG), a
//! dangerous sample it lets through is residual hazard (RH), and a rejected
//! sample the model handled correctly is availability cost (AC).

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verdict::Stage;

#[derive(Debug, Error, PartialEq)]
pub enum SafetyError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("column `{column}` has {found} rows, expected {expected}")]
    RowCount {
        column: &'static str,
        expected: usize,
        found: usize,
    },
}

/// One evaluated sample. The monitor rejected it iff `rejecting_stage` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub id: String,
    pub model_correct: bool,
    pub rejecting_stage: Option<Stage>,
}

impl OutcomeRow {
    pub fn new(id: impl Into<String>, model_correct: bool, rejecting_stage: Option<Stage>) -> Self {
        Self {
            id: id.into(),
            model_correct,
            rejecting_stage,
        }
    }

    pub fn rejected(&self) -> bool {
        self.rejecting_stage.is_some()
    }
}

/// Rejections credited to one stage, split by whether the model was wrong.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    /// Rejected while the model was wrong.
    pub tp: usize,
    /// Rejected while the model was right.
    pub fp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub n: usize,
    pub model_errors: usize,
    pub rejections: usize,
    pub tp_m: usize,
    pub fn_m: usize,
    pub fp_m: usize,
    pub tn_m: usize,
    pub sg: f64,
    pub rh: f64,
    pub ac: f64,
    /// Indexed by [`Stage::index`].
    pub per_stage: [StageCounts; 3],
}

impl SafetyReport {
    pub fn error_rate(&self) -> f64 {
        self.model_errors as f64 / self.n as f64
    }

    pub fn rejection_rate(&self) -> f64 {
        self.rejections as f64 / self.n as f64
    }
}

pub fn evaluate(rows: &[OutcomeRow]) -> Result<SafetyReport, SafetyError> {
    if rows.is_empty() {
        return Err(SafetyError::Empty);
    }
    let mut r = SafetyReport {
        n: rows.len(),
        model_errors: 0,
        rejections: 0,
        tp_m: 0,
        fn_m: 0,
        fp_m: 0,
        tn_m: 0,
        sg: 0.0,
        rh: 0.0,
        ac: 0.0,
        per_stage: [StageCounts::default(); 3],
    };
    for row in rows {
        match (row.model_correct, row.rejecting_stage) {
            (false, Some(s)) => {
                r.tp_m += 1;
                r.per_stage[s.index()].tp += 1;
            }
            (false, None) => r.fn_m += 1,
            (true, Some(s)) => {
                r.fp_m += 1;
                r.per_stage[s.index()].fp += 1;
            }
            (true, None) => r.tn_m += 1,
        }
    }
    let n = r.n as f64;
    r.model_errors = r.tp_m + r.fn_m;
    r.rejections = r.tp_m + r.fp_m;
    r.sg = r.tp_m as f64 / n;
    r.rh = r.fn_m as f64 / n;
    r.ac = r.fp_m as f64 / n;
    Ok(r)
}

/// A subset of the three monitors, as a bit mask over [`Stage::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MonitorSet(u8);

impl MonitorSet {
    pub const NONE: MonitorSet = MonitorSet(0);
    pub const FULL: MonitorSet = MonitorSet(0b111);

    /// Empty set, singletons, pairs, then all three.
    pub const TABLE_ORDER: [MonitorSet; 8] = [
        MonitorSet(0b000),
        MonitorSet(0b001),
        MonitorSet(0b010),
        MonitorSet(0b100),
        MonitorSet(0b011),
        MonitorSet(0b101),
        MonitorSet(0b110),
        MonitorSet(0b111),
    ];

    pub fn of(stages: &[Stage]) -> Self {
        MonitorSet(stages.iter().fold(0, |m, s| m | 1 << s.index()))
    }

    pub fn contains(self, s: Stage) -> bool {
        self.0 & (1 << s.index()) != 0
    }

    pub fn with(self, s: Stage) -> Self {
        MonitorSet(self.0 | 1 << s.index())
    }

    pub fn is_subset_of(self, other: MonitorSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn stages(self) -> impl Iterator<Item = Stage> {
        Stage::ORDER.into_iter().filter(move |&s| self.contains(s))
    }

    pub fn label(self) -> String {
        if self.0 == 0 {
            return "No monitor".to_string();
        }
        self.stages().map(Stage::name).collect::<Vec<_>>().join("+")
    }
}

impl fmt::Display for MonitorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for MonitorSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.stages())
    }
}

impl<'de> Deserialize<'de> for MonitorSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let stages = Vec::<Stage>::deserialize(d)?;
        Ok(MonitorSet::of(&stages))
    }
}

/// Model correctness and each monitor's own decision on one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinationRow {
    pub id: String,
    pub model_correct: bool,
    /// Individual reject decisions, indexed by [`Stage::index`].
    pub rejects: [bool; 3],
}

impl CombinationRow {
    /// Zips per-sample columns into rows.
    pub fn from_columns(
        ids: &[String],
        model_correct: &[bool],
        odd: &[bool],
        ood: &[bool],
        oms: &[bool],
    ) -> Result<Vec<Self>, SafetyError> {
        let n = ids.len();
        for (column, len) in [
            ("model_correct", model_correct.len()),
            ("odd", odd.len()),
            ("ood", ood.len()),
            ("oms", oms.len()),
        ] {
            if len != n {
                return Err(SafetyError::RowCount {
                    column,
                    expected: n,
                    found: len,
                });
            }
        }
        Ok((0..n)
            .map(|i| CombinationRow {
                id: ids[i].clone(),
                model_correct: model_correct[i],
                rejects: [odd[i], ood[i], oms[i]],
            })
            .collect())
    }

    /// Outcome under OR-composition of the monitors in `set`, credited to the
    /// earliest rejecting member.
    pub fn compose(&self, set: MonitorSet) -> OutcomeRow {
        let stage = set.stages().find(|s| self.rejects[s.index()]);
        OutcomeRow::new(self.id.clone(), self.model_correct, stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationEntry {
    pub monitors: MonitorSet,
    pub label: String,
    pub report: SafetyReport,
}

/// Reports for all eight monitor subsets in [`MonitorSet::TABLE_ORDER`].
pub fn combination_table(rows: &[CombinationRow]) -> Result<Vec<CombinationEntry>, SafetyError> {
    MonitorSet::TABLE_ORDER
        .iter()
        .map(|&set| {
            let outcomes: Vec<OutcomeRow> = rows.iter().map(|r| r.compose(set)).collect();
            Ok(CombinationEntry {
                monitors: set,
                label: set.label(),
                report: evaluate(&outcomes)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageContribution {
    pub stage: Stage,
    pub sg: f64,
    pub ac: f64,
    pub cumulative_sg: f64,
    pub cumulative_ac: f64,
    pub counts: StageCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub n: usize,
    pub stages: Vec<StageContribution>,
    pub total_sg: f64,
    pub total_ac: f64,
}

/// Credits each serial rejection to the stage that produced it.
pub fn stage_attribution(rows: &[OutcomeRow]) -> Result<Attribution, SafetyError> {
    let report = evaluate(rows)?;
    let n = report.n as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let stages = Stage::ORDER
        .iter()
        .map(|&stage| {
            let counts = report.per_stage[stage.index()];
            tp += counts.tp;
            fp += counts.fp;
            StageContribution {
                stage,
                sg: counts.tp as f64 / n,
                ac: counts.fp as f64 / n,
                cumulative_sg: tp as f64 / n,
                cumulative_ac: fp as f64 / n,
                counts,
            }
        })
        .collect();
    Ok(Attribution {
        n: report.n,
        stages,
        total_sg: report.sg,
        total_ac: report.ac,
    })
}

/// Delimited table with columns `Monitors,SG,RH,AC`.
pub fn combination_csv(table: &[CombinationEntry]) -> String {
    let mut out = String::from("Monitors,SG,RH,AC\n");
    for e in table {
        let r = &e.report;
        let _ = writeln!(out, "{},{:.4},{:.4},{:.4}", e.label, r.sg, r.rh, r.ac);
    }
    out
}

pub fn attribution_csv(attr: &Attribution) -> String {
    let mut out = String::from("Stage,SG,AC,cumulative_SG,cumulative_AC\n");
    for s in &attr.stages {
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{:.4},{:.4}",
            s.stage, s.sg, s.ac, s.cumulative_sg, s.cumulative_ac
        );
    }
    out
}
