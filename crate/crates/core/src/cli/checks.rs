//! The check suites behind `run` and the per-suite subcommands.

use rand::Rng;

use crate::algebra::bicommutant_check;
use crate::error::{Error, Result};
use crate::kms_external::{
    check_c1, check_c2, check_truth_equivalence, check_truth_value_invariance, closed_contexts, AutomorphismFlow,
    TruthObject,
};
use crate::kms_internal::{
    check_internal_c1, check_internal_c2, closes_modulo_fixed, faithful_automorphisms, fixed_point_subgroup, orbits,
};
use crate::measure::{
    excluded_middle_gap, group_action_check, measure_of, measure_table, state_from_measure, verify_measure_properties,
};
use crate::modular::{check_cyclic_separating, modular_flow, GnsSpace};
use crate::numerics::{ComplexMatrix, C64};
use crate::presheaf::{outer_daseinisation, s_map, ClopenSubobject};
use crate::report::{Report, ReportEntry, Verdict};
use crate::sampling;

use super::scenario::{to_matrix, Check, Model, StateSpec};

/// A failed entry standing in for a check that could not be evaluated.
fn error_entry(check: &str, e: &Error) -> ReportEntry {
    let mut entry = ReportEntry::residual(check, f64::NAN, 0.0).about(e.to_string());
    entry.verdict = Verdict::Fail;
    entry
}

fn skipped(check: &str, why: &str) -> ReportEntry {
    ReportEntry::residual(check, 0.0, 0.0).info().about(format!("skipped: {why}"))
}

fn absorb(report: &mut Report, check: &str, r: Result<Report>) {
    match r {
        Ok(r) => report.extend(r),
        Err(e) => report.push(error_entry(check, &e)),
    }
}

fn renamed(mut r: Report, prefix: &str) -> Report {
    for e in &mut r.entries {
        e.check = format!("{prefix}{}", e.check);
    }
    r
}

fn t_grid_or_zero(model: &Model) -> Vec<f64> {
    if model.scenario.t_grid.is_empty() {
        vec![0.0]
    } else {
        model.scenario.t_grid.clone()
    }
}

/// Seeded test operator for flow comparisons.
fn probe(model: &Model) -> ComplexMatrix {
    let mut rng = sampling::rng(model.scenario.seed ^ 0x9e37_79b9_7f4a_7c15);
    ComplexMatrix::from_fn(model.scenario.dim, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
}

pub fn run_checks(model: &Model, checks: &[Check]) -> Report {
    let mut checks = checks.to_vec();
    checks.sort();
    checks.dedup();
    let mut report = Report::new();
    for c in checks {
        let r = match c {
            Check::Poset => poset_suite(model),
            Check::Presheaf => presheaf_suite(model),
            Check::Measure => measure_suite(model),
            Check::C1 => c1_suite(model),
            Check::C2 => c2_suite(model),
            Check::Truth => truth_suite(model),
            Check::Equivalence => equivalence_suite(model),
            Check::Internal => internal_suite(model, &report),
            Check::Modular => modular_suite(model),
            Check::Reconstruction => reconstruction_suite(model),
        };
        report.extend(r);
    }
    report
}

fn poset_suite(m: &Model) -> Report {
    let p = &m.poset;
    let mut r = Report::new();
    r.push(ReportEntry::real("poset-contexts", p.len() as f64, 0.0, 0.0).info());
    let n = p.len();
    let mut violations = 0usize;
    for a in 0..n {
        if !p.leq(a, a) {
            violations += 1;
        }
        for b in 0..n {
            if a != b && p.leq(a, b) && p.leq(b, a) {
                violations += 1;
            }
            for c in 0..n {
                if p.leq(a, b) && p.leq(b, c) && !p.leq(a, c) {
                    violations += 1;
                }
            }
        }
    }
    r.push(ReportEntry::residual("poset-order", violations as f64, 0.0));
    r.push(ReportEntry::real("poset-hasse-edges", p.hasse_edges().len() as f64, 0.0, 0.0).info());
    for &v in &m.seeds {
        match bicommutant_check(p.context(v), &m.tol) {
            Ok(b) => {
                let mut e = ReportEntry::residual("bicommutant", b.residual, m.tol.eps_order).at(v);
                e.lhs = [b.bicommutant_dim as f64, 0.0];
                e.rhs = [b.algebra_dim as f64, 0.0];
                if !b.holds {
                    e.verdict = Verdict::Fail;
                }
                r.push(e);
            }
            Err(e) => r.push(error_entry("bicommutant", &e)),
        }
    }
    r
}

fn presheaf_suite(m: &Model) -> Report {
    let p = &m.poset;
    let mut r = Report::new();
    for v in 0..p.len() {
        r.push(ReportEntry::real("characters", p.context(v).num_blocks() as f64, 0.0, 0.0).info().at(v));
    }
    for (name, s) in &m.subobjects {
        let bad = s.closure_violation(p).is_some();
        r.push(ReportEntry::residual("presheaf-closure", if bad { 1.0 } else { 0.0 }, 0.0).about(name.clone()));
    }
    for (name, proj) in &m.projections {
        for v in 0..p.len() {
            let ctx = p.context(v);
            match outer_daseinisation(proj, ctx, &m.tol) {
                Ok(d) => {
                    let id = ComplexMatrix::identity(proj.dim());
                    let gap = (&id - d.matrix()).matmul(proj.matrix()).frobenius_norm();
                    r.push(ReportEntry::residual("dasein-dominates", gap, m.tol.eps_order).at(v).about(name.clone()));
                    let in_lattice = s_map(ctx, &d, &m.tol).is_ok();
                    r.push(
                        ReportEntry::residual("dasein-in-lattice", if in_lattice { 0.0 } else { 1.0 }, 0.0)
                            .at(v)
                            .about(name.clone()),
                    );
                }
                Err(e) => r.push(error_entry("dasein-dominates", &e).at(v)),
            }
        }
    }
    r
}

/// A seeded sub-object: random character sets at a few contexts, closed under restriction.
fn random_subobject(m: &Model, rng: &mut impl Rng) -> Result<ClopenSubobject> {
    let p = &m.poset;
    let k = rng.gen_range(1..=p.len().min(3));
    let seeds: Vec<(usize, u64)> = (0..k)
        .map(|_| {
            let v = rng.gen_range(0..p.len());
            let full = p.context(v).full_mask();
            (v, rng.gen::<u64>() & full)
        })
        .collect();
    ClopenSubobject::generated_by(p, &ClopenSubobject::whole_poset(p), &seeds)
}

fn measure_suite(m: &Model) -> Report {
    let mut r = Report::new();
    for (name, s) in &m.subobjects {
        for &v in s.domain() {
            match measure_of(&m.state, &m.poset, s, v) {
                Ok(x) => r.push(ReportEntry::real("measure", x, 0.0, 0.0).info().at(v).about(name.clone())),
                Err(e) => r.push(error_entry("measure", &e).at(v)),
            }
        }
    }
    let mut pairs = Vec::new();
    for i in 0..m.subobjects.len() {
        for j in i..m.subobjects.len() {
            pairs.push((m.subobjects[i].1.clone(), m.subobjects[j].1.clone()));
        }
    }
    if m.scenario.measure_pairs > 0 && !m.poset.is_empty() {
        let mut rng = sampling::rng(m.scenario.seed);
        for _ in 0..m.scenario.measure_pairs {
            match random_subobject(m, &mut rng).and_then(|a| Ok((a, random_subobject(m, &mut rng)?))) {
                Ok(pair) => pairs.push(pair),
                Err(e) => {
                    r.push(error_entry("measure-sampling", &e));
                    break;
                }
            }
        }
    }
    if !pairs.is_empty() {
        absorb(&mut r, "measure-properties", verify_measure_properties(&m.state, &m.poset, &pairs, &m.tol));
    }
    for (name, s) in &m.subobjects {
        match excluded_middle_gap(&m.state, &m.poset, s) {
            Ok((v, x)) => r.push(ReportEntry::real("excluded-middle-min", x, 1.0, 0.0).info().at(v).about(name.clone())),
            Err(e) => r.push(error_entry("excluded-middle-min", &e)),
        }
    }
    r
}

fn c1_suite(m: &Model) -> Report {
    let mut r = Report::new();
    let Some(flow) = &m.flow else {
        r.push(skipped("C1", "no flow declared"));
        return r;
    };
    if m.scenario.t_grid.is_empty() || m.subobjects.is_empty() {
        r.push(skipped("C1", "empty t-grid or no sub-objects"));
        return r;
    }
    absorb(&mut r, "C1", check_c1(&m.state, flow, &m.poset, &m.subobjects, &m.scenario.t_grid, &m.tol));
    for (name, s) in &m.subobjects {
        for &t in &m.scenario.t_grid {
            let res = group_action_check(&m.state, &m.poset, &flow.unitary(t), s, name, &m.tol).map(|mut rep| {
                for e in &mut rep.entries {
                    e.t = Some(t);
                }
                rep
            });
            absorb(&mut r, "group-action", res);
        }
    }
    r
}

fn c2_pairs(
    m: &Model,
    flow: &AutomorphismFlow,
    contexts: &[usize],
    t_grid: &[f64],
    r: &mut Report,
) {
    for (ns, s) in &m.subobjects {
        for (nt, t) in &m.subobjects {
            for &v in contexts {
                let subject = format!("{ns},{nt}");
                absorb(r, "C2", check_c2(&m.state, flow, &m.poset, s, t, v, t_grid, &subject, &m.tol));
            }
        }
    }
}

fn c2_suite(m: &Model) -> Report {
    let mut r = Report::new();
    let Some(flow) = &m.flow else {
        r.push(skipped("C2", "no flow declared"));
        return r;
    };
    if m.subobjects.is_empty() {
        r.push(skipped("C2", "no sub-objects"));
        return r;
    }
    if let Err(e) = m.state.require_faithful() {
        r.push(error_entry("C2", &e));
        return r;
    }
    let grid = t_grid_or_zero(m);
    match closed_contexts(&m.poset, flow, &grid) {
        Ok(ctx) if !ctx.is_empty() => c2_pairs(m, flow, &ctx, &grid, &mut r),
        Ok(_) => r.push(error_entry("C2", &Error::PosetNotClosed("no context is closed under the t-grid".into()))),
        Err(e) => r.push(error_entry("C2", &e)),
    }
    r
}

fn truth_suite(m: &Model) -> Report {
    let mut r = Report::new();
    let truth = TruthObject::new(&m.state, &m.poset);
    for &v in &m.seeds {
        let stage = match truth.stage(v) {
            Ok(s) => Some(s),
            Err(Error::EnumerationTooLarge(cap)) => {
                r.push(skipped("truth-stage", &format!("more than {cap} sub-objects below the context")).at(v));
                None
            }
            Err(e) => {
                r.push(error_entry("truth-stage", &e).at(v));
                continue;
            }
        };
        let down = m.poset.down_set(v);
        for (name, s) in &m.subobjects {
            let tau = match s.restrict_to(&down).and_then(|local| Ok((truth.threshold(&local, v)?, local))) {
                Ok((x, local)) => {
                    if let Some(stage) = &stage {
                        let found = stage.members.iter().find(|mem| mem.subobject == local).map(|mem| mem.tau);
                        r.push(
                            ReportEntry::real("truth-stage", found.unwrap_or(f64::NAN), x, m.tol.eps_measure)
                                .at(v)
                                .about(name.clone()),
                        );
                    }
                    x
                }
                Err(e) => {
                    r.push(error_entry("truth-stage", &e).at(v));
                    continue;
                }
            };
            for &level in &m.scenario.r {
                let member = tau >= level - m.tol.eps_measure;
                let tag = if member { "in" } else { "out" };
                r.push(
                    ReportEntry::real("truth-membership", tau, level, 0.0)
                        .info()
                        .at(v)
                        .about(format!("{name} r={level} {tag}")),
                );
            }
        }
    }
    for (name, p) in &m.projections {
        let trace = m.state.prob(p);
        let mins = (0..m.poset.len())
            .map(|v| {
                let d = outer_daseinisation(p, m.poset.context(v), &m.tol)?;
                Ok(m.state.prob(&d))
            })
            .collect::<Result<Vec<f64>>>();
        match mins {
            Ok(vals) if !vals.is_empty() => {
                let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let contained = m.poset.contexts().iter().any(|c| s_map(c, p, &m.tol).is_ok());
                if contained {
                    r.push(ReportEntry::real("expectation-identity", min, trace, m.tol.eps_herm).about(name.clone()));
                } else {
                    r.push(ReportEntry::at_least("expectation-bound", min, trace, m.tol.eps_measure).about(name.clone()));
                }
            }
            Ok(_) => {}
            Err(e) => r.push(error_entry("expectation-identity", &e)),
        }
        if let Some(flow) = &m.flow {
            if m.scenario.t_grid.is_empty() {
                continue;
            }
            for &v in &m.seeds {
                for &level in &m.scenario.r {
                    absorb(
                        &mut r,
                        "truth-cutoff",
                        check_truth_value_invariance(
                            &m.state,
                            flow,
                            &m.poset,
                            p,
                            v,
                            level,
                            &m.scenario.t_grid,
                            name,
                            &m.tol,
                        ),
                    );
                }
            }
        }
    }
    r
}

fn equivalence_suite(m: &Model) -> Report {
    let mut r = Report::new();
    let Some(flow) = &m.flow else {
        r.push(skipped("mu-equivalence", "no flow declared"));
        return r;
    };
    if m.scenario.t_grid.is_empty() || m.scenario.r.is_empty() {
        r.push(skipped("mu-equivalence", "empty t-grid or no levels r"));
        return r;
    }
    let closed = match closed_contexts(&m.poset, flow, &m.scenario.t_grid) {
        Ok(c) => c,
        Err(e) => {
            r.push(error_entry("mu-equivalence", &e));
            return r;
        }
    };
    let stages: Vec<usize> = closed.iter().copied().filter(|&v| m.poset.down_set(v).iter().all(|w| closed.contains(w))).collect();
    if stages.is_empty() {
        r.push(error_entry("mu-equivalence", &Error::PosetNotClosed("no down-set is closed under the t-grid".into())));
        return r;
    }
    absorb(
        &mut r,
        "mu-equivalence",
        check_truth_equivalence(&m.state, flow, &m.poset, &stages, &m.scenario.r, &m.scenario.t_grid, &m.tol),
    );
    r
}

fn internal_suite(m: &Model, earlier: &Report) -> Report {
    let mut r = Report::new();
    let Some(group) = &m.group else {
        r.push(skipped("internal-C1", "no sampled group declared"));
        return r;
    };
    for &v in &m.seeds {
        let fixed = fixed_point_subgroup(group, &m.poset, v, &m.tol);
        let idx: Vec<String> = fixed.iter().map(|i| i.to_string()).collect();
        r.push(
            ReportEntry::real("fixed-subgroup", fixed.len() as f64, 0.0, 0.0)
                .info()
                .at(v)
                .about(format!("samples [{}]", idx.join(" "))),
        );
        r.push(
            ReportEntry::real("group-closure", closes_modulo_fixed(group, &m.poset, v, &m.tol) as u8 as f64, 1.0, 0.0)
                .info()
                .at(v),
        );
        r.push(ReportEntry::real("orbit-count", orbits(group, &m.poset, v, &m.tol).len() as f64, 0.0, 0.0).info().at(v));
        match faithful_automorphisms(group, &m.poset, v, &m.tol) {
            Ok(split) => {
                r.push(ReportEntry::real("faithful-automorphisms", split.faithful.len() as f64, 0.0, 0.0).info().at(v))
            }
            Err(e) => r.push(error_entry("faithful-automorphisms", &e).at(v)),
        }
    }
    if m.subobjects.is_empty() {
        r.push(skipped("internal-C1", "no sub-objects"));
        return r;
    }
    let internal = check_internal_c1(&m.state, group, &m.poset, &m.subobjects, &m.tol);
    let internal_ok = internal.as_ref().map(|rep| rep.passed()).unwrap_or(false);
    absorb(&mut r, "internal-C1", internal);
    let external: Vec<_> = earlier.filter("C1");
    if !external.is_empty() {
        let external_ok = external.iter().all(|e| e.passed());
        let broken = external_ok && !internal_ok;
        r.push(ReportEntry::residual("internal-C1-implied", if broken { 1.0 } else { 0.0 }, 0.0));
    }
    if group.gammas().is_empty() {
        return r;
    }
    if let Err(e) = m.state.require_faithful() {
        r.push(error_entry("internal-C2", &e));
        return r;
    }
    let us = group.unitaries();
    let mut targets = m.subobjects.clone();
    targets.push(("Sigma".into(), ClopenSubobject::full(&m.poset, &ClopenSubobject::whole_poset(&m.poset))));
    for &v in &m.seeds {
        let closed = us.iter().all(|u| matches!(m.poset.image_under(u, v), Ok(Some(_))));
        if !closed {
            continue;
        }
        for (ns, s) in &m.subobjects {
            for (nt, t) in &targets {
                let subject = format!("{ns},{nt}");
                absorb(&mut r, "internal-C2", check_internal_c2(&m.state, group, &m.poset, s, t, v, &subject, &m.tol));
            }
        }
    }
    r
}

fn modular_suite(m: &Model) -> Report {
    let mut r = Report::new();
    if let Err(e) = m.state.require_faithful() {
        r.push(error_entry("modular", &e));
        return r;
    }
    let beta = m.scenario.beta;
    match GnsSpace::new(&m.state, &m.tol).and_then(|g| Ok((g.closed_form_report(&m.tol)?, g))) {
        Ok((rep, gns)) => {
            r.extend(rep);
            let a = probe(m);
            for &t in &t_grid_or_zero(m) {
                match gns.modular_implementation_residual(&a, t, &m.tol) {
                    Ok(x) => r.push(ReportEntry::residual("modular-implementation", x, m.tol.eps_order).time(t)),
                    Err(e) => r.push(error_entry("modular-implementation", &e)),
                }
            }
        }
        Err(e) => {
            r.push(error_entry("modular", &e));
            return r;
        }
    }
    if let (Some(h), StateSpec::Gibbs { .. }) = (&m.hamiltonian, &m.scenario.state) {
        let a = probe(m);
        match AutomorphismFlow::hamiltonian(h, beta, &m.tol) {
            Ok(hf) => {
                for &t in &t_grid_or_zero(m) {
                    match modular_flow(&m.state, beta, t, &a, &m.tol) {
                        Ok(x) => r.push(
                            ReportEntry::residual(
                                "modular-vs-hamiltonian",
                                (&x - &hf.apply(t, &a)).frobenius_norm(),
                                m.tol.eps_measure,
                            )
                            .time(t),
                        ),
                        Err(e) => r.push(error_entry("modular-vs-hamiltonian", &e)),
                    }
                }
            }
            Err(e) => r.push(error_entry("modular-vs-hamiltonian", &e)),
        }
    }
    if !m.scenario.t_grid.is_empty() && !m.subobjects.is_empty() {
        match AutomorphismFlow::modular(&m.state, beta, &m.tol) {
            Ok(mf) => {
                absorb(
                    &mut r,
                    "modular-C1",
                    check_c1(&m.state, &mf, &m.poset, &m.subobjects, &m.scenario.t_grid, &m.tol).map(|x| renamed(x, "modular-")),
                );
                let mut c2 = Report::new();
                match closed_contexts(&m.poset, &mf, &m.scenario.t_grid) {
                    Ok(ctx) if !ctx.is_empty() => c2_pairs(m, &mf, &ctx, &m.scenario.t_grid, &mut c2),
                    Ok(_) => c2.push(error_entry("C2", &Error::PosetNotClosed("no context is closed under the modular flow".into()))),
                    Err(e) => c2.push(error_entry("C2", &e)),
                }
                r.extend(renamed(c2, "modular-"));
            }
            Err(e) => r.push(error_entry("modular-C1", &e)),
        }
    }
    if let Some(basis) = &m.scenario.modular.subalgebra {
        let res = basis
            .iter()
            .map(|b| to_matrix(b, m.scenario.dim))
            .collect::<Result<Vec<_>>>()
            .and_then(|b| check_cyclic_separating(&m.state, &b, &m.tol));
        match res {
            Ok(()) => r.push(ReportEntry::residual("cyclic-separating", 0.0, 0.0)),
            Err(e) => r.push(error_entry("cyclic-separating", &e)),
        }
    }
    r
}

fn reconstruction_suite(m: &Model) -> Report {
    let mut r = Report::new();
    if m.poset.is_empty() {
        r.push(skipped("reconstruction", "empty poset"));
        return r;
    }
    let table = m.scenario.measure_table.clone().unwrap_or_else(|| measure_table(&m.state, &m.poset));
    match state_from_measure(&m.poset, &table, &m.tol) {
        Ok(rec) => {
            let d = &rec.diagnostics;
            r.push(ReportEntry::residual("reconstruction-fit", d.residual, m.tol.eps_order));
            if d.uniquely_determined {
                let diff = (m.state.density() - rec.state.density()).frobenius_norm();
                r.push(ReportEntry::residual("reconstruction", diff, m.tol.eps_order));
            } else {
                let mut e = ReportEntry::real("reconstruction-underdetermined", d.spanned_dim as f64, d.total_dim as f64, 0.0)
                    .info();
                e.subject = Some(format!("{} of {} Hermitian directions fixed", d.spanned_dim, d.total_dim));
                r.push(e);
            }
        }
        Err(e) => r.push(error_entry("reconstruction", &e)),
    }
    r
}
