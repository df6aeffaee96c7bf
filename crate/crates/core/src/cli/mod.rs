//! Command-line front end: scenario files in, deterministic reports out.
//!
//! Exit codes: 0 when every graded entry passes, 1 on any check failure, 2 on input errors.

pub mod checks;
pub mod output;
pub mod scenario;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::algebra::{Context, ContextPoset};
use crate::error::{Error, Result};
use crate::kms_external::{FlowConvention, TruthObject};
use crate::measure::{measure_of, State};
use crate::numerics::{ComplexMatrix, Projection, Tolerances, C64, ZERO};
use crate::presheaf::{outer_daseinisation, ClopenSubobject};
use crate::report::Verdict;

pub use checks::run_checks;
pub use output::ReportDocument;
pub use scenario::{Check, Model, Scenario};

use scenario::{from_matrix, ContextSpec, StateSpec};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "toposkms", version, about = "Verify KMS conditions on context posets of finite quantum systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConventionArg {
    Hamiltonian,
    Modular,
}

impl From<ConventionArg> for FlowConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Hamiltonian => FlowConvention::Hamiltonian,
            ConventionArg::Modular => FlowConvention::Modular,
        }
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct Overrides {
    /// Scenario file (JSON)
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
    /// Directory for report.json, report.csv and summary.md [default: report]
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Comma-separated check suites (run only)
    #[arg(long, value_delimiter = ',', value_enum)]
    pub checks: Vec<Check>,
    /// Tolerance override, e.g. --tol eps_order=1e-9 (repeatable)
    #[arg(long = "tol", value_name = "KEY=VALUE")]
    pub tol: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub convention: Option<ConventionArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scenario's checks in the fixed order
    Run {
        /// Scenario file (alternative to --scenario)
        file: Option<PathBuf>,
        #[command(flatten)]
        args: Overrides,
    },
    /// Context poset construction
    Poset(Overrides),
    /// Outer daseinisation of a projection, or the presheaf suite of a scenario
    Dasein {
        /// Projection: e<k> (1-based basis vector), diag(...) or a JSON matrix
        #[arg(long = "P", value_name = "PROJECTION")]
        p: Option<String>,
        /// Context: example, diagonal or a JSON list of block matrices
        #[arg(long)]
        context: Option<String>,
        /// Dimension when it cannot be read off the projection or context
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[command(flatten)]
        args: Overrides,
    },
    /// Measure property suite
    Measure(Overrides),
    /// External C1/C2, truth objects, truth values and equivalences
    KmsExternal(Overrides),
    /// Orbits, fixed subgroups and internal C1/C2
    KmsInternal(Overrides),
    /// Tomita-Takesaki identities and the modular flow
    Modular {
        /// State: gibbs, diag(...) or a JSON density matrix
        #[arg(long)]
        state: Option<String>,
        /// Hamiltonian: diag(...) or a JSON matrix
        #[arg(long = "H", value_name = "MATRIX")]
        h: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[command(flatten)]
        args: Overrides,
    },
    /// State reconstruction from measure tables
    Reconstruct(Overrides),
    /// Membership conditions of the three-level example on its two-block context
    ExampleC3 {
        /// Spectrum a1,a2,a3 of the diagonal density matrix
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = vec![0.5, 0.3, 0.2])]
        a: Vec<f64>,
        /// Levels r (comma-separated)
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = vec![0.3, 0.45, 0.5, 0.7])]
        r: Vec<f64>,
    },
}

/// Input problems, reported with exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

pub fn apply_overrides(scenario: &mut Scenario, o: &Overrides) -> std::result::Result<(), InputError> {
    for kv in &o.tol {
        let (k, v) = kv.split_once('=').ok_or_else(|| InputError::Usage(format!("--tol expects key=value, got `{kv}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| InputError::Usage(format!("--tol value `{v}` is not a number")))?;
        scenario.tolerances.set(k.trim(), v)?;
    }
    if let Some(s) = o.seed {
        scenario.seed = s;
    }
    if let Some(c) = o.convention {
        scenario.convention = c.into();
    }
    if !o.checks.is_empty() {
        scenario.checks = o.checks.clone();
    }
    Ok(())
}

/// Builds the model and runs the given suites (or the scenario's own list).
pub fn evaluate(scenario: Scenario, only: Option<&[Check]>) -> std::result::Result<ReportDocument, InputError> {
    let model = Model::build(scenario)?;
    let checks: Vec<Check> = match only {
        Some(c) => {
            let mut c = c.to_vec();
            c.sort();
            c.dedup();
            c
        }
        None => model.scenario.checks.clone(),
    };
    let report = run_checks(&model, &checks);
    Ok(ReportDocument::new(model.scenario, checks, report))
}

/// Parses scenario JSON and evaluates it; used by the binary and the C interface.
pub fn evaluate_json(text: &str, o: &Overrides, only: Option<&[Check]>) -> std::result::Result<ReportDocument, InputError> {
    let mut scenario = Scenario::from_json(text)?;
    apply_overrides(&mut scenario, o)?;
    evaluate(scenario, only)
}

fn read_scenario(path: &Path) -> std::result::Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| InputError::Io { path: path.display().to_string(), source: e })
}

fn finish(doc: &ReportDocument, out_dir: Option<&Path>, out: &mut String) -> std::result::Result<i32, InputError> {
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("report"));
    doc.write_to(&dir).map_err(|e| InputError::Io { path: dir.display().to_string(), source: e })?;
    let s = &doc.summary;
    let _ = writeln!(
        out,
        "{} {}: {} graded entries, {} failures, max residual {:.3e}",
        if doc.passed() { "PASS" } else { "FAIL" },
        doc.scenario.name,
        s.graded,
        s.failures,
        s.max_residual
    );
    for e in doc.entries.iter().filter(|e| e.verdict == Verdict::Fail).take(10) {
        let _ = writeln!(out, "  {}", output::locate(e));
    }
    let _ = writeln!(out, "reports written to {}", dir.display());
    Ok(if doc.passed() { EXIT_PASS } else { EXIT_FAIL })
}

fn scenario_suite(o: &Overrides, only: &[Check], out: &mut String) -> std::result::Result<i32, InputError> {
    let path = o.scenario.as_ref().ok_or_else(|| InputError::Usage("--scenario is required".into()))?;
    let doc = evaluate_json(&read_scenario(path)?, o, Some(only))?;
    finish(&doc, o.out_dir.as_deref(), out)
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, InputError> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| InputError::Usage(format!("`{x}` is not a number"))))
        .collect()
}

/// `e<k>`, `diag(a,b,...)` or a JSON matrix.
fn parse_matrix(s: &str, dim: usize) -> std::result::Result<ComplexMatrix, InputError> {
    let s = s.trim();
    if let Some(k) = s.strip_prefix('e').and_then(|k| k.parse::<usize>().ok()) {
        if k == 0 || k > dim {
            return Err(InputError::Usage(format!("basis vector e{k} outside 1..={dim}")));
        }
        return Ok(Projection::basis(dim, k - 1).into_matrix());
    }
    if let Some(inner) = s.strip_prefix("diag(").and_then(|x| x.strip_suffix(')')) {
        return Ok(ComplexMatrix::real_diag(&parse_list(inner)?));
    }
    let spec: scenario::MatrixSpec = serde_json::from_str(s)?;
    Ok(scenario::to_matrix(&spec, spec.len())?)
}

fn matrix_dim(s: &str) -> Option<usize> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix("diag(").and_then(|x| x.strip_suffix(')')) {
        return Some(inner.split(',').count());
    }
    serde_json::from_str::<scenario::MatrixSpec>(s).ok().map(|m| m.len())
}

fn subscript(n: usize) -> String {
    n.to_string().chars().map(|c| char::from_u32(0x2080 + c.to_digit(10).unwrap_or(0)).unwrap_or(c)).collect()
}

/// The two-block context {P₁₂, I − P₁₂} of the three-level example.
pub fn example_context(tol: &Tolerances) -> Result<Context> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Context::binary(&Projection::onto_vector(&[C64::new(s, 0.0), C64::new(s, 0.0), ZERO])?, tol)
}

fn parse_context(s: &str, dim: usize, tol: &Tolerances) -> std::result::Result<Context, InputError> {
    match s.trim() {
        "example" => Ok(example_context(tol)?),
        "diagonal" => Ok(Context::diagonal(dim, tol)?),
        other => {
            let specs: Vec<scenario::MatrixSpec> = serde_json::from_str(other)?;
            let blocks = specs
                .iter()
                .map(|b| Projection::new(scenario::to_matrix(b, dim)?, tol))
                .collect::<Result<Vec<_>>>()?;
            Ok(Context::from_blocks(blocks, tol)?)
        }
    }
}

fn dasein_inline(p: &str, context: &str, dim: usize, out: &mut String) -> std::result::Result<i32, InputError> {
    let tol = Tolerances::default();
    let dim = matrix_dim(p).unwrap_or(if context.trim() == "example" { 3 } else { dim });
    let proj = Projection::new(parse_matrix(p, dim)?, &tol)?;
    let ctx = parse_context(context, dim, &tol)?;
    let d = outer_daseinisation(&proj, &ctx, &tol)?;
    let name = match p.trim().strip_prefix('e').and_then(|k| k.parse::<usize>().ok()) {
        Some(k) => format!("P{}", subscript(k)),
        None => "P".into(),
    };
    let value = if d.approx_eq(&Projection::identity(dim), &tol) {
        "I".to_string()
    } else if d.is_zero(&tol) {
        "0".to_string()
    } else if d.approx_eq(&proj, &tol) {
        name.clone()
    } else {
        let set = crate::presheaf::outer_daseinisation_set(&proj, &ctx, &tol);
        let idx: Vec<String> = (0..ctx.num_blocks()).filter(|i| set >> i & 1 == 1).map(|i| i.to_string()).collect();
        format!("sum of blocks {{{}}} (rank {})", idx.join(", "), d.rank())
    };
    let _ = writeln!(out, "δ°({name})_V = {value}");
    Ok(EXIT_PASS)
}

fn modular_inline(
    state: Option<&str>,
    h: Option<&str>,
    beta: f64,
    o: &Overrides,
    out: &mut String,
) -> std::result::Result<i32, InputError> {
    let h_text = h.ok_or_else(|| InputError::Usage("--H or --scenario is required".into()))?;
    let dim = matrix_dim(h_text).ok_or_else(|| InputError::Usage(format!("cannot read a matrix from `{h_text}`")))?;
    let h = parse_matrix(h_text, dim)?;
    let state = match state.unwrap_or("gibbs").trim() {
        "gibbs" => StateSpec::Gibbs { hamiltonian: Some(from_matrix(&h)), beta: Some(beta) },
        other => StateSpec::Density { matrix: from_matrix(&parse_matrix(other, dim)?) },
    };
    let mut scenario = Scenario::from_json(&format!(r#"{{"dim": {dim}, "state": {{"kind": "pure", "vector": []}}}}"#))?;
    scenario.name = "modular".into();
    scenario.state = state;
    scenario.hamiltonian = Some(from_matrix(&h));
    scenario.beta = beta;
    scenario.contexts = vec![ContextSpec::Diagonal];
    scenario.t_grid = vec![-1.0, 0.5, 2.0];
    apply_overrides(&mut scenario, o)?;
    let doc = evaluate(scenario, Some(&[Check::Modular]))?;
    let _ = writeln!(out, "{:<32} {:>12} {:>10}  verdict", "identity", "residual", "tolerance");
    for e in &doc.entries {
        let label = match e.t {
            Some(t) => format!("{} (t={t})", e.check),
            None => e.check.clone(),
        };
        let v = match e.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Info => "info",
        };
        let _ = writeln!(out, "{label:<32} {:>12.3e} {:>10.1e}  {v}", e.residual, e.tolerance);
    }
    if let Some(dir) = &o.out_dir {
        doc.write_to(dir).map_err(|e| InputError::Io { path: dir.display().to_string(), source: e })?;
    }
    Ok(if doc.passed() { EXIT_PASS } else { EXIT_FAIL })
}

fn fmt_value(x: f64) -> String {
    format!("{}", (x * 1e12).round() / 1e12)
}

/// μ(S)(V) and truth-object membership for the three sub-objects of the example context.
pub fn example_c3(a: &[f64], rs: &[f64], out: &mut String) -> std::result::Result<i32, InputError> {
    if a.len() != 3 {
        return Err(InputError::Usage(format!("--a needs three values, got {}", a.len())));
    }
    if let Some(r) = rs.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(InputError::Usage(format!("level r = {r} outside [0, 1]")));
    }
    let tol = Tolerances::default();
    let state = State::from_spectrum(a, &tol)?;
    let mut poset = ContextPoset::new(3, &tol);
    let (v, _) = poset.insert(example_context(&tol)?)?;
    let truth = TruthObject::new(&state, &poset);
    let subs = [("S₁", 0b01u64), ("S₂", 0b10), ("S₁₂", 0b11)];
    let mut tau = Vec::new();
    for (_, set) in subs {
        let s = ClopenSubobject::new(&poset, vec![(v, set)])?;
        let m = measure_of(&state, &poset, &s, v)?;
        tau.push((m, truth.threshold(&s, v)?));
    }
    let _ = writeln!(out, "V = {{P₁₂, I − P₁₂}}, ρ = diag({}, {}, {})", fmt_value(a[0]), fmt_value(a[1]), fmt_value(a[2]));
    let _ = writeln!(out, "μ(S₁)(V) = ½(a₁ + a₂) = {}", fmt_value(tau[0].0));
    let _ = writeln!(out, "μ(S₂)(V) = ½(a₁ + a₂) + a₃ = {}", fmt_value(tau[1].0));
    let _ = writeln!(out, "μ(S₁₂)(V) = a₁ + a₂ + a₃ = {}", fmt_value(tau[2].0));
    let _ = writeln!(out, "S₁ ∈ T(V, r) iff ½(a₁ + a₂) ≥ r; S₂ ∈ T(V, r) iff ½(a₁ + a₂) + a₃ ≥ r; S₁₂ ∈ T(V, r) for all r");
    for &r in rs {
        let yes = |t: f64| if t >= r - tol.eps_measure { "YES" } else { "NO" };
        let _ = writeln!(out, "r = {}", fmt_value(r));
        let _ = writeln!(
            out,
            "S₁: {} ≥ {}? {}; S₂: {} ≥ {}? {}; S₁₂: always {}",
            fmt_value(tau[0].1),
            fmt_value(r),
            yes(tau[0].1),
            fmt_value(tau[1].1),
            fmt_value(r),
            yes(tau[1].1),
            yes(tau[2].1)
        );
    }
    Ok(EXIT_PASS)
}

/// Executes a parsed command; stdout text is appended to `out`.
pub fn execute(cli: Cli, out: &mut String) -> std::result::Result<i32, InputError> {
    match cli.command {
        Command::Run { file, mut args } => {
            if args.scenario.is_none() {
                args.scenario = file;
            }
            let path = args.scenario.clone().ok_or_else(|| InputError::Usage("a scenario file is required".into()))?;
            let doc = evaluate_json(&read_scenario(&path)?, &args, None)?;
            finish(&doc, args.out_dir.as_deref(), out)
        }
        Command::Poset(o) => scenario_suite(&o, &[Check::Poset], out),
        Command::Dasein { p, context, dim, args } => match (p, context) {
            (Some(p), Some(c)) => dasein_inline(&p, &c, dim, out),
            (None, None) => scenario_suite(&args, &[Check::Presheaf], out),
            _ => Err(InputError::Usage("--P and --context go together".into())),
        },
        Command::Measure(o) => scenario_suite(&o, &[Check::Measure], out),
        Command::KmsExternal(o) => scenario_suite(&o, &[Check::C1, Check::C2, Check::Truth, Check::Equivalence], out),
        Command::KmsInternal(o) => scenario_suite(&o, &[Check::Internal], out),
        Command::Modular { state, h, beta, args } => {
            if args.scenario.is_some() {
                scenario_suite(&args, &[Check::Modular], out)
            } else {
                modular_inline(state.as_deref(), h.as_deref(), beta, &args, out)
            }
        }
        Command::Reconstruct(o) => scenario_suite(&o, &[Check::Reconstruction], out),
        Command::ExampleC3 { a, r } => example_c3(&a, &r, out),
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
        }
    };
    let mut out = String::new();
    let code = match execute(cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    };
    print!("{out}");
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_line() {
        let mut out = String::new();
        example_c3(&[0.5, 0.3, 0.2], &[0.45], &mut out).unwrap();
        assert!(out.lines().any(|l| l == "S₁: 0.4 ≥ 0.45? NO; S₂: 0.6 ≥ 0.45? YES; S₁₂: always YES"), "{out}");
    }

    #[test]
    fn dasein_of_e1_is_identity() {
        let mut out = String::new();
        dasein_inline("e1", "example", 3, &mut out).unwrap();
        assert_eq!(out.trim(), "δ°(P₁)_V = I");
    }

    #[test]
    fn matrix_syntax() {
        assert_eq!(parse_matrix("diag(0,1,2)", 3).unwrap(), ComplexMatrix::real_diag(&[0.0, 1.0, 2.0]));
        assert_eq!(parse_matrix("[[1,0],[0,[0,1]]]", 2).unwrap()[(1, 1)], C64::new(0.0, 1.0));
        assert!(parse_matrix("e4", 3).is_err());
    }
}
