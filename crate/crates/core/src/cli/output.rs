//! report.json, report.csv and summary.md.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kms_external::FlowConvention;
use crate::report::{Report, ReportEntry, Verdict};

use super::scenario::{Check, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub verdict: Verdict,
    pub entries: usize,
    pub graded: usize,
    pub failures: usize,
    /// Largest residual among graded entries.
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: ToolInfo,
    pub convention: FlowConvention,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub scenario: Scenario,
    pub summary: Summary,
    pub entries: Vec<ReportEntry>,
}

impl ReportDocument {
    pub fn new(scenario: Scenario, checks: Vec<Check>, report: Report) -> Self {
        let graded: Vec<&ReportEntry> = report.entries.iter().filter(|e| e.verdict != Verdict::Info).collect();
        let failures = graded.iter().filter(|e| e.verdict == Verdict::Fail).count();
        let max_residual = graded.iter().map(|e| e.residual).filter(|x| !x.is_nan()).fold(0.0, f64::max);
        ReportDocument {
            tool: ToolInfo { name: env!("CARGO_PKG_NAME").into(), version: env!("CARGO_PKG_VERSION").into() },
            convention: scenario.convention,
            seed: scenario.seed,
            checks,
            summary: Summary {
                verdict: if failures == 0 { Verdict::Pass } else { Verdict::Fail },
                entries: report.entries.len(),
                graded: graded.len(),
                failures,
                max_residual,
            },
            scenario,
            entries: report.entries,
        }
    }

    pub fn passed(&self) -> bool {
        self.summary.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record([
            "check", "context", "subject", "t", "z_re", "z_im", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "residual",
            "tolerance", "verdict",
        ])
        .expect("in-memory csv");
        for e in &self.entries {
            let z = e.z.map(|z| (num(z[0]), num(z[1]))).unwrap_or_default();
            w.write_record([
                e.check.clone(),
                e.context.map(|c| c.to_string()).unwrap_or_default(),
                e.subject.clone().unwrap_or_default(),
                e.t.map(num).unwrap_or_default(),
                z.0,
                z.1,
                num(e.lhs[0]),
                num(e.lhs[1]),
                num(e.rhs[0]),
                num(e.rhs[1]),
                num(e.residual),
                num(e.tolerance),
                verdict(e.verdict).into(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}\n", self.scenario.name);
        let _ = writeln!(
            s,
            "Verdict: **{}** ({} graded entries, {} failures, max residual {:.3e})\n",
            verdict(self.summary.verdict).to_uppercase(),
            self.summary.graded,
            self.summary.failures,
            self.summary.max_residual
        );
        let _ = writeln!(s, "Convention: {:?}; seed: {}; {} {}\n", self.convention, self.seed, self.tool.name, self.tool.version);
        let _ = writeln!(s, "| check | entries | failures | max residual |");
        let _ = writeln!(s, "|---|---:|---:|---:|");
        let mut names: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !names.contains(&e.check.as_str()) {
                names.push(&e.check);
            }
        }
        for name in names {
            let rows: Vec<&ReportEntry> = self.entries.iter().filter(|e| e.check == name).collect();
            let fails = rows.iter().filter(|e| e.verdict == Verdict::Fail).count();
            let graded = rows.iter().any(|e| e.verdict != Verdict::Info);
            let max = rows
                .iter()
                .filter(|e| e.verdict != Verdict::Info)
                .map(|e| e.residual)
                .fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x) });
            let max = if graded { format!("{max:.3e}") } else { "info".into() };
            let _ = writeln!(s, "| {name} | {} | {fails} | {max} |", rows.len());
        }
        let failing: Vec<&ReportEntry> = self.entries.iter().filter(|e| e.verdict == Verdict::Fail).collect();
        if !failing.is_empty() {
            let _ = writeln!(s, "\n## Failures\n");
            for e in failing.iter().take(50) {
                let _ = writeln!(s, "- {}", locate(e));
            }
            if failing.len() > 50 {
                let _ = writeln!(s, "- ... {} more in report.csv", failing.len() - 50);
            }
        }
        s
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json())?;
        fs::write(dir.join("report.csv"), self.to_csv())?;
        fs::write(dir.join("summary.md"), self.to_markdown())
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn verdict(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Info => "info",
    }
}

/// One-line location of an entry: check, sub-object, context and time.
pub fn locate(e: &ReportEntry) -> String {
    let mut s = e.check.clone();
    if let Some(sub) = &e.subject {
        let _ = write!(s, " S={sub}");
    }
    if let Some(v) = e.context {
        let _ = write!(s, " V={v}");
    }
    if let Some(t) = e.t {
        let _ = write!(s, " t={t}");
    }
    let _ = write!(s, " residual={:.3e} (tol {:.1e})", e.residual, e.tolerance);
    s
}
