//! Residual reports shared by all checks.

use serde::{Deserialize, Serialize};

use crate::numerics::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Recorded value that is not graded.
    Info,
}

/// One evaluated identity: where it was evaluated, both sides and the residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub check: String,
    pub context: Option<usize>,
    pub subject: Option<String>,
    pub t: Option<f64>,
    pub z: Option<[f64; 2]>,
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl ReportEntry {
    pub fn new(check: impl Into<String>, lhs: C64, rhs: C64, tolerance: f64) -> Self {
        let residual = (lhs - rhs).norm();
        ReportEntry {
            check: check.into(),
            context: None,
            subject: None,
            t: None,
            z: None,
            lhs: [lhs.re, lhs.im],
            rhs: [rhs.re, rhs.im],
            residual,
            tolerance,
            verdict: if residual <= tolerance { Verdict::Pass } else { Verdict::Fail },
        }
    }

    pub fn real(check: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::new(check, C64::new(lhs, 0.0), C64::new(rhs, 0.0), tolerance)
    }

    /// Entry whose residual is supplied directly (for norms of differences).
    pub fn residual(check: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        let mut e = Self::real(check, residual, 0.0, tolerance);
        e.residual = residual;
        e.verdict = if residual <= tolerance { Verdict::Pass } else { Verdict::Fail };
        e
    }

    /// Entry that passes when `lhs >= rhs` (up to tolerance); the residual is the shortfall.
    pub fn at_least(check: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let mut e = Self::real(check, lhs, rhs, tolerance);
        e.residual = (rhs - lhs).max(0.0);
        e.verdict = if e.residual <= tolerance { Verdict::Pass } else { Verdict::Fail };
        e
    }

    pub fn info(mut self) -> Self {
        self.verdict = Verdict::Info;
        self
    }

    pub fn at(mut self, context: usize) -> Self {
        self.context = Some(context);
        self
    }

    pub fn about(mut self, subject: impl Into<String>) -> Self {
        self.subject = Some(subject.into());
        self
    }

    pub fn time(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    pub fn point(mut self, z: C64) -> Self {
        self.z = Some([z.re, z.im]);
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub entries: Vec<ReportEntry>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: ReportEntry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: Report) {
        self.entries.extend(other.entries);
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed())
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| e.verdict == Verdict::Fail)
    }

    /// Largest graded residual among entries of the given check (all checks if `None`).
    pub fn max_residual(&self, check: Option<&str>) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.verdict != Verdict::Info && check.is_none_or(|c| e.check == c))
            .map(|e| e.residual)
            .fold(0.0, f64::max)
    }

    /// The graded entry with the largest residual.
    pub fn worst(&self) -> Option<&ReportEntry> {
        self.entries
            .iter()
            .filter(|e| e.verdict != Verdict::Info)
            .max_by(|a, b| a.residual.total_cmp(&b.residual))
    }

    pub fn filter(&self, check: &str) -> Vec<&ReportEntry> {
        self.entries.iter().filter(|e| e.check == check).collect()
    }
}
