//! Machine-readable check reports shared by all verifiers.

use serde::{Deserialize, Serialize};

/// Report schema version, bumped whenever a field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

const MAX_OFFENDERS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub at: String,
    pub defect: f64,
    pub bound: f64,
}

/// Outcome of one sampled check: every sample carries a defect and the bound
/// it must not exceed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub samples: usize,
    pub tolerance: f64,
    pub max_defect: f64,
    pub argmax: Option<String>,
    /// Largest `defect - bound` seen; negative values are slack.
    pub max_excess: f64,
    pub violations: usize,
    pub offenders: Vec<Offender>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            pass: true,
            samples: 0,
            tolerance,
            max_defect: 0.0,
            argmax: None,
            max_excess: f64::NEG_INFINITY,
            violations: 0,
            offenders: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Records a sample that must satisfy `defect <= tolerance`.
    pub fn record(&mut self, defect: f64, at: impl FnOnce() -> String) {
        let bound = self.tolerance;
        self.record_bounded(defect, bound, at);
    }

    /// Records a sample that must satisfy `defect <= bound`.
    pub fn record_bounded(&mut self, defect: f64, bound: f64, at: impl FnOnce() -> String) {
        self.samples += 1;
        let excess = defect - bound;
        let violated = !(defect <= bound);
        let new_max = self.argmax.is_none() || defect > self.max_defect;
        if !violated && !new_max {
            self.max_excess = self.max_excess.max(excess);
            return;
        }
        let label = at();
        if new_max {
            self.max_defect = defect;
            self.argmax = Some(label.clone());
        }
        if excess > self.max_excess || excess.is_nan() {
            self.max_excess = excess;
        }
        if violated {
            self.pass = false;
            self.violations += 1;
            if self.offenders.len() < MAX_OFFENDERS {
                self.offenders.push(Offender { at: label, defect, bound });
            }
        }
    }

    /// Records a boolean condition as a 0/1 defect.
    pub fn require(&mut self, ok: bool, at: impl FnOnce() -> String) {
        self.record_bounded(if ok { 0.0 } else { 1.0 }, 0.0, at);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn fail(&mut self, at: impl Into<String>) {
        self.record_bounded(f64::INFINITY, 0.0, || at.into());
    }
}

/// A named collection of reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub schema_version: u32,
    pub name: String,
    pub pass: bool,
    pub checks: Vec<CheckReport>,
}

impl Suite {
    pub fn new(name: impl Into<String>) -> Self {
        Self { schema_version: SCHEMA_VERSION, name: name.into(), pass: true, checks: Vec::new() }
    }

    pub fn push(&mut self, report: CheckReport) {
        self.pass &= report.pass;
        self.checks.push(report);
    }

    pub fn extend(&mut self, reports: impl IntoIterator<Item = CheckReport>) {
        for r in reports {
            self.push(r);
        }
    }
}
