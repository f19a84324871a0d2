//! Monitor decisions shared by the three monitor families.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Where in the serial chain a verdict was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "ODD")]
    Odd,
    #[serde(rename = "OOD")]
    Ood,
    #[serde(rename = "OMS")]
    Oms,
}

impl Stage {
    /// Serial evaluation order.
    pub const ORDER: [Stage; 3] = [Stage::Odd, Stage::Ood, Stage::Oms];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Odd => "ODD",
            Stage::Ood => "OOD",
            Stage::Oms => "OMS",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(s: &str) -> Option<Stage> {
        Stage::ORDER
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn is_reject(self) -> bool {
        self == Decision::Reject
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub stage: Stage,
    /// Violated rule names, out-of-range property names, or rejected detection indices.
    pub reasons: Vec<String>,
}

impl Verdict {
    pub fn accept(stage: Stage) -> Self {
        Self {
            decision: Decision::Accept,
            stage,
            reasons: Vec::new(),
        }
    }

    /// Reject when `reasons` is non-empty, accept otherwise.
    pub fn from_reasons(stage: Stage, reasons: Vec<String>) -> Self {
        let decision = if reasons.is_empty() {
            Decision::Accept
        } else {
            Decision::Reject
        };
        Self {
            decision,
            stage,
            reasons,
        }
    }

    pub fn is_reject(&self) -> bool {
        self.decision.is_reject()
    }
}
