//! Evaluation harness: suite loading, the seven-condition matrix, reports,
//! and the two-proportion z-test used to compare ablations.

mod harness;
mod report;
mod stats;
mod suite;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::router::Mechanisms;

pub use harness::{required_keys, run_matrix, script_manifest, MatrixError, MatrixRun};
pub use report::{emit_report, parse_report, CellResult, ItemOutcome, ReportFormat, ResultsTable};
pub use stats::{normal_cdf, normal_sf, two_prop_ztest, CountError, ZTest};
pub use suite::{
    load_suite, load_suite_with, suite_to_json_string, validate_items, BenchmarkItem, GoldAction,
    Slice, SuiteError, SLICE_SIZE,
};

/// How a condition routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Relevance,
    RelevanceWithReflection,
    Controller(Mechanisms),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    Baseline,
    Reflection,
    NoProbe,
    NoVigilance,
    NoDecontam,
    NoDualConf,
    Full,
}

impl Condition {
    /// Report row order.
    pub const ALL: [Condition; 7] = [
        Condition::Baseline,
        Condition::Reflection,
        Condition::NoProbe,
        Condition::NoVigilance,
        Condition::NoDecontam,
        Condition::NoDualConf,
        Condition::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "Baseline",
            Condition::Reflection => "Reflection",
            Condition::NoProbe => "NoProbe",
            Condition::NoVigilance => "NoVigilance",
            Condition::NoDecontam => "NoDecontam",
            Condition::NoDualConf => "NoDualConf",
            Condition::Full => "Full",
        }
    }

    /// Row label used in the text report.
    pub fn label(self) -> &'static str {
        match self {
            Condition::Baseline => "Baseline (Direct)",
            Condition::Reflection => "Reflection (Standard CoT)",
            Condition::NoProbe => "MESA-S (w/o Probe)",
            Condition::NoVigilance => "MESA-S (w/o Vigilance)",
            Condition::NoDecontam => "MESA-S (w/o Decontam)",
            Condition::NoDualConf => "MESA-S (w/o DualConf)",
            Condition::Full => "MESA-S (Ours)",
        }
    }

    pub fn strategy(self) -> Strategy {
        let all = Mechanisms::default();
        match self {
            Condition::Baseline => Strategy::Relevance,
            Condition::Reflection => Strategy::RelevanceWithReflection,
            Condition::Full => Strategy::Controller(all),
            Condition::NoProbe => Strategy::Controller(Mechanisms { probe: false, ..all }),
            Condition::NoVigilance => Strategy::Controller(Mechanisms { vigilance: false, ..all }),
            Condition::NoDecontam => Strategy::Controller(Mechanisms { decontam: false, ..all }),
            Condition::NoDualConf => Strategy::Controller(Mechanisms { dual_conf: false, ..all }),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown condition \"{0}\" (expected one of Baseline, Reflection, Full, NoProbe, NoVigilance, NoDecontam, NoDualConf)")]
pub struct UnknownCondition(pub String);

impl FromStr for Condition {
    type Err = UnknownCondition;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownCondition(s.to_string()))
    }
}
