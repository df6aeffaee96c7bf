//! Acceptance criteria 1-11. Each criterion prints one PASS/FAIL line; the test fails if any does.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::Rng;

use toposkms::algebra::{Context, ContextPoset, PosetOptions};
use toposkms::cli::output::locate;
use toposkms::cli::{evaluate, example_context, run_checks, Check, Model, Scenario};
use toposkms::kms_external::{check_truth_value_invariance, expectation_value, gibbs_state, truth_value, TruthObject};
use toposkms::kms_internal::{check_internal_c1, fixed_point_subgroup, orbits};
use toposkms::measure::{
    excluded_middle_gap, measure_of, measure_table, state_from_measure, verify_measure_properties, State,
};
use toposkms::modular::{bipartite_conjugation, jmap_on_contexts, modular_flow, AntiLinear, GnsSpace};
use toposkms::numerics::{entire_function_of, ComplexMatrix, Projection, Tolerances, C64};
use toposkms::presheaf::{
    daseinisation_subobject, outer_daseinisation, outer_daseinisation_set, s_inverse, s_map, ClopenSubobject,
};
use toposkms::report::Report;
use toposkms::{sampling, Error};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn tol() -> Tolerances {
    Tolerances::default()
}

fn scenario_text(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)).unwrap()
}

fn model(name: &str) -> Model {
    Model::build(Scenario::from_json(&scenario_text(name)).unwrap()).unwrap()
}

fn model_with(name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> Model {
    let mut v: serde_json::Value = serde_json::from_str(&scenario_text(name)).unwrap();
    edit(&mut v);
    Model::build(serde_json::from_value(v).unwrap()).unwrap()
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Hand-written P12, I - P12 and I on C^3.
fn example_projections() -> [(&'static str, ComplexMatrix); 3] {
    let p12 = ComplexMatrix::from_real_rows(&[vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
    let q = ComplexMatrix::from_real_rows(&[vec![0.5, -0.5, 0.0], vec![-0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
    [("S1", p12), ("S2", q), ("S12", ComplexMatrix::identity(3))]
}

/// Gibbs weights e^{-βh}/Z for a diagonal Hamiltonian.
fn gibbs_weights(h: &[f64], beta: f64) -> Vec<f64> {
    let w: Vec<f64> = h.iter().map(|x| (-beta * x).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn max_res(r: &Report, check: &str) -> f64 {
    r.filter(check).iter().map(|e| e.residual).fold(0.0, f64::max)
}

fn close(a: &ComplexMatrix, b: &ComplexMatrix, eps: f64) -> bool {
    (a - b).frobenius_norm() <= eps
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let t = tol();
    let a = [0.5, 0.3, 0.2];
    let ctx = example_context(&t).unwrap();
    let poset = ContextPoset::build(&[ctx], &PosetOptions::default(), &t).unwrap();
    let ctx = poset.context(0);
    let state = State::from_spectrum(&a, &t).unwrap();
    let mut ok = ctx.num_blocks() == 2;

    let [(_, p12), (_, q), (_, id)] = example_projections();
    for (mask, m) in [(0b01u64, &p12), (0b10, &q), (0b11, &id)] {
        ok &= close(s_inverse(ctx, mask).matrix(), m, 1e-12);
        ok &= s_map(ctx, &Projection::new(m.clone(), &t).unwrap(), &t).unwrap() == mask;
    }

    let oracle1 = 0.5 * (a[0] + a[1]);
    let oracle = [oracle1, 1.0 - oracle1, 1.0];
    let mut mus = [0.0; 3];
    for (k, mask) in [0b01u64, 0b10, 0b11].into_iter().enumerate() {
        let s = ClopenSubobject::new(&poset, vec![(0, mask)]).unwrap();
        mus[k] = measure_of(&state, &poset, &s, 0).unwrap();
    }
    ok &= (mus[0] - 0.4).abs() <= 1e-12 && (mus[1] - 0.6).abs() <= 1e-12 && (mus[2] - 1.0).abs() <= 1e-12;
    ok &= mus.iter().zip(&oracle).all(|(m, o)| (m - o).abs() <= 1e-12);

    let stage = TruthObject::new(&state, &poset).stage(0).unwrap();
    let mut membership = Vec::new();
    for r in [0.3, 0.45, 0.5, 0.7] {
        let members = stage.members_at(r, &t);
        let mut row = Vec::new();
        for (mask, o) in [0b01u64, 0b10, 0b11].into_iter().zip(oracle) {
            let inside = members.iter().any(|m| m.subobject.sets() == [mask]);
            ok &= inside == (o >= r);
            row.push(if inside { 'Y' } else { 'N' });
        }
        membership.push(format!("r={r}:{}", row.iter().collect::<String>()));
    }
    let mut line = String::new();
    toposkms::cli::example_c3(&a, &[0.45], &mut line).unwrap();
    ok &= line.contains("S₁: 0.4 ≥ 0.45? NO; S₂: 0.6 ≥ 0.45? YES; S₁₂: always YES");
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 1.0;
    outcome(ok, format!("mu(S1)={:.15} mu(S2)={:.15}; {}; {elapsed:.3}s", mus[0], mus[1], membership.join(" ")))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let m = model("gibbs_c3.json");
    let r = run_checks(&m, &[Check::C1, Check::C2]);
    let c1 = max_res(&r, "C1");
    let c2 = max_res(&r, "C2");
    let grid = [-2.0, -1.0, 0.5, 1.0, 2.0];
    let mut ok = m.scenario.t_grid == grid && c1 <= 1e-9 && c2 <= 1e-8;
    ok &= r.filter("C1").iter().all(|e| e.passed()) && r.filter("C2").iter().all(|e| e.passed());

    // independent trace formula on the declared context with diagonal H
    let h = [0.0, 1.0, 2.0];
    let w = gibbs_weights(&h, 1.0);
    let v = m.seeds[0];
    let projs = example_projections();
    let mut pairs = 0;
    let mut worst_oracle: f64 = 0.0;
    for (ns, ps) in &projs {
        for e in r.filter("C1").iter().filter(|e| e.context == Some(v) && e.subject.as_deref() == Some(*ns)) {
            let want: f64 = (0..3).map(|j| w[j] * ps[(j, j)].re).sum();
            worst_oracle = worst_oracle.max((e.lhs[0] - want).abs());
        }
        for (nt, pt) in &projs {
            let subject = format!("{ns},{nt}");
            let entries: Vec<_> =
                r.filter("C2").into_iter().filter(|e| e.context == Some(v) && e.subject.as_deref() == Some(&subject)).collect();
            ok &= entries.len() == grid.len();
            pairs += 1;
            for e in entries {
                let t = e.t.unwrap();
                let z = C64::new(t, 1.0);
                let mut lhs = C64::new(0.0, 0.0);
                let mut rhs = C64::new(0.0, 0.0);
                for j in 0..3 {
                    for k in 0..3 {
                        lhs += w[j] * pt[(j, k)] * (C64::i() * z * (h[k] - h[j])).exp() * ps[(k, j)];
                        rhs += w[j] * (C64::i() * t * (h[j] - h[k])).exp() * ps[(j, k)] * pt[(k, j)];
                    }
                }
                ok &= (lhs - rhs).norm() <= 1e-8;
                worst_oracle = worst_oracle.max((lhs - C64::new(e.lhs[0], e.lhs[1])).norm());
                worst_oracle = worst_oracle.max((rhs - C64::new(e.rhs[0], e.rhs[1])).norm());
            }
        }
    }
    ok &= pairs == 9 && worst_oracle <= 1e-12;
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 5.0;
    outcome(ok, format!("C1 max {c1:.2e}, C2 max {c2:.2e} over {pairs} pairs, oracle gap {worst_oracle:.1e}; {elapsed:.3}s"))
}

fn criterion_3() -> Outcome {
    let m = model("negative_control.json");
    let r = run_checks(&m, &[Check::C1]);
    let worst = max_res(&r, "C1");
    let failures: Vec<_> = r.failures().filter(|e| e.check == "C1").collect();
    let localized = !failures.is_empty()
        && failures.iter().all(|e| e.subject.is_some() && e.context.is_some() && e.t.is_some());
    let v = m.seeds[0];
    let at_one = r
        .filter("C1")
        .into_iter()
        .find(|e| e.subject.as_deref() == Some("S1") && e.context == Some(v) && e.t == Some(1.0))
        .map(|e| e.residual)
        .unwrap_or(f64::NAN);
    // |<psi, e^{itH} psi>|^2 = cos^2(t/2), so the residual at t = 1 is sin^2(1/2)
    let oracle = 0.5f64.sin().powi(2);
    let ok = worst >= 1e-2 && localized && (at_one - oracle).abs() <= 1e-12;
    let first = failures.first().map(|e| locate(e)).unwrap_or_default();
    outcome(ok, format!("max C1 residual {worst:.4}, {} failing entries, t=1 residual {at_one:.6} (oracle {oracle:.6}); first: {first}", failures.len()))
}

/// Bell numbers by the triangle recurrence.
fn bell(n: usize) -> usize {
    let mut row = vec![1usize];
    for _ in 1..n {
        let mut next = vec![*row.last().unwrap()];
        for x in &row {
            next.push(next.last().unwrap() + x);
        }
        row = next;
    }
    *row.last().unwrap()
}

fn criterion_4() -> Outcome {
    let t = tol();
    let opts = PosetOptions { downward_closure: true, ..PosetOptions::default() };
    let poset = ContextPoset::build(&[Context::diagonal(4, &t).unwrap()], &opts, &t).unwrap();
    let mut ok = poset.len() == bell(4) - 1 && poset.len() == 14;
    let mut rng = sampling::rng(2024);
    let mut cases = 0;
    let mut nontrivial = 0;
    let mut mismatches = 0;
    for _ in 0..200 {
        // projections living on a random set of coordinates give non-trivial daseinisations
        let support: Vec<usize> = loop {
            let s: Vec<usize> = (0..4).filter(|_| rng.gen_bool(0.5)).collect();
            if !s.is_empty() {
                break s;
            }
        };
        let rank = rng.gen_range(1..=support.len());
        let u = sampling::unitary(support.len(), &mut rng);
        let vecs: Vec<Vec<C64>> = (0..rank)
            .map(|k| {
                let mut v = vec![C64::new(0.0, 0.0); 4];
                for (i, &c) in support.iter().enumerate() {
                    v[c] = u[(i, k)];
                }
                v
            })
            .collect();
        let p = Projection::from_orthonormal(4, &vecs);
        for ctx in poset.contexts() {
            let full = ctx.full_mask();
            let dominating: Vec<u64> = (0..=full)
                .filter(|&mask| {
                    let q = ctx.projection_of(mask);
                    (&q.matrix().matmul(p.matrix()) - p.matrix()).frobenius_norm() <= 1e-8
                })
                .collect();
            let least = dominating.iter().fold(full, |acc, m| acc & m);
            let fast = outer_daseinisation_set(&p, ctx, &t);
            let fast_p = outer_daseinisation(&p, ctx, &t).unwrap();
            let agree =
                dominating.contains(&least) && fast == least && close(fast_p.matrix(), ctx.projection_of(least).matrix(), 0.0);
            if !agree {
                mismatches += 1;
            }
            if least != full {
                nontrivial += 1;
            }
            cases += 1;
        }
    }
    ok &= mismatches == 0 && cases == 200 * 14;
    outcome(ok, format!("{cases} (P, V) cases on {} contexts, {nontrivial} below the top element, {mismatches} mismatches", poset.len()))
}

fn criterion_5() -> Outcome {
    let mut t = tol();
    t.set("eps_measure", 1e-10).unwrap();
    let opts = PosetOptions { downward_closure: true, ..PosetOptions::default() };
    let poset = ContextPoset::build(&[Context::diagonal(4, &t).unwrap()], &opts, &t).unwrap();
    let mut rng = sampling::rng(55);
    let rho = sampling::faithful_density(4, &mut rng);
    let state = State::new(rho.clone(), &t).unwrap();
    let dom = ClopenSubobject::whole_poset(&poset);
    let random_sub = |rng: &mut rand_chacha::ChaCha8Rng| {
        let v = rng.gen_range(0..poset.len());
        let mask = rng.gen_range(1..=poset.context(v).full_mask());
        ClopenSubobject::generated_by(&poset, &dom, &[(v, mask)]).unwrap()
    };
    let pairs: Vec<(ClopenSubobject, ClopenSubobject)> = (0..60).map(|_| (random_sub(&mut rng), random_sub(&mut rng))).collect();
    let r = verify_measure_properties(&state, &poset, &pairs, &t).unwrap();
    let worst = r.entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    let mut ok = poset.len() >= 10 && pairs.len() >= 50 && r.passed() && worst <= 1e-10;

    // measure values against a direct diagonal sum
    let mut gap: f64 = 0.0;
    for (s, _) in &pairs {
        for v in 0..poset.len() {
            let q = poset.context(v).projection_of(s.component(v).unwrap());
            let direct: f64 = (0..4).filter(|&j| q.matrix()[(j, j)].re > 0.5).map(|j| rho[(j, j)].re).sum();
            gap = gap.max((measure_of(&state, &poset, s, v).unwrap() - direct).abs());
        }
    }
    ok &= gap <= 1e-12;

    let t3 = tol();
    let p3 = ContextPoset::build(&[Context::diagonal(3, &t3).unwrap()], &opts, &t3).unwrap();
    let s3 = State::from_spectrum(&[0.5, 0.3, 0.2], &t3).unwrap();
    let d = daseinisation_subobject(&p3, &Projection::basis(3, 0)).unwrap();
    let (at, em) = excluded_middle_gap(&s3, &p3, &d).unwrap();
    // at the maximal context neither e2 nor e3 lies in the negation, so S or not-S has weight a1
    ok &= em < 1.0 - 1e-3 && (em - 0.5).abs() <= 1e-12;
    outcome(
        ok,
        format!("{} pairs on {} contexts, max residual {worst:.2e}, oracle gap {gap:.1e}; mu(S or not S) = {em} at context {at}", pairs.len(), poset.len()),
    )
}

fn criterion_6() -> Outcome {
    let t = tol();
    let mut rng = sampling::rng(7);
    let rho = sampling::faithful_density(3, &mut rng);
    let state = State::new(rho.clone(), &t).unwrap();
    let mut seeds = vec![Context::diagonal(3, &t).unwrap()];
    for _ in 0..4 {
        let u = sampling::unitary(3, &mut rng);
        seeds.push(Context::from_blocks((0..3).map(|k| Projection::from_orthonormal(3, &[u.column(k)])).collect(), &t).unwrap());
    }
    let spanning = ContextPoset::build(&seeds, &PosetOptions::default(), &t).unwrap();
    let rec = state_from_measure(&spanning, &measure_table(&state, &spanning), &t).unwrap();
    let err = (rec.state.density() - &rho).frobenius_norm();
    let mut ok = rec.diagnostics.uniquely_determined && err <= 1e-8;

    let single = ContextPoset::build(&[example_context(&t).unwrap()], &PosetOptions::default(), &t).unwrap();
    let one = state_from_measure(&single, &measure_table(&state, &single), &t).unwrap();
    ok &= !one.diagnostics.uniquely_determined && one.diagnostics.spanned_dim < one.diagnostics.total_dim;

    let opts = PosetOptions { downward_closure: true, ..PosetOptions::default() };
    let closed = ContextPoset::build(&[Context::diagonal(3, &t).unwrap()], &opts, &t).unwrap();
    let top = (0..closed.len()).find(|&v| closed.context(v).num_blocks() == 3).unwrap();
    let mut table = measure_table(&state, &closed);
    let k = table
        .iter()
        .position(|e| e.context != top && closed.context(e.context).projection_of(e.set).rank() == 1)
        .unwrap();
    table[k].value += 0.05;
    let corrupted = state_from_measure(&closed, &table, &t);
    ok &= matches!(corrupted, Err(Error::InconsistentTable(_)));
    outcome(
        ok,
        format!(
            "spanning error {err:.2e}; single context fixes {} of {} directions; corrupted table: {}",
            one.diagnostics.spanned_dim,
            one.diagnostics.total_dim,
            match corrupted {
                Err(e) => e.to_string(),
                Ok(_) => "accepted".into(),
            }
        ),
    )
}

fn criterion_7() -> Outcome {
    let t = tol();
    let m = model("internal_c3.json");
    let group = m.group.as_ref().unwrap();
    let samples = group.samples().to_vec();
    let (example, diagonal) = (m.seeds[0], m.seeds[1]);
    let mut ok = samples.len() == 5;
    // alpha_t fixes the example context iff e^{it} = 1; all samples fix the diagonal one
    let oracle_fixed: Vec<usize> = (0..samples.len()).filter(|&k| (C64::new(0.0, samples[k]).exp() - 1.0).norm() < 1e-9).collect();
    let mut phases: Vec<C64> = Vec::new();
    for &s in &samples {
        let p = C64::new(0.0, s).exp();
        if !phases.iter().any(|q| (q - p).norm() < 1e-9) {
            phases.push(p);
        }
    }
    let fixed = fixed_point_subgroup(group, &m.poset, example, &t);
    let n_example = orbits(group, &m.poset, example, &t).len();
    let n_diag = orbits(group, &m.poset, diagonal, &t).len();
    ok &= fixed == oracle_fixed && fixed == vec![0, 4] && n_example == phases.len() && n_example == 4 && n_diag == 1;

    let gibbs = check_internal_c1(&m.state, group, &m.poset, &m.subobjects, &t).unwrap();
    let spread = max_res(&gibbs, "internal-C1");
    let w = gibbs_weights(&[0.0, 1.0, 2.0], 1.0);
    let orbit_value = 0.5 * (w[0] + w[1]);
    let s1 = gibbs.filter("internal-C1").into_iter().find(|e| e.context == Some(example) && e.subject.as_deref() == Some("S1")).unwrap();
    ok &= spread <= 1e-9 && (s1.lhs[0] - orbit_value).abs() <= 1e-12;

    let pure = model_with("internal_c3.json", |v| v["state"] = serde_json::json!({"kind": "pure", "vector": [1, 1, 0]}));
    let neg = check_internal_c1(&pure.state, pure.group.as_ref().unwrap(), &pure.poset, &pure.subobjects, &t).unwrap();
    let neg_spread = max_res(&neg, "internal-C1");
    // cos^2(t/2) over the grid runs from 1 down to 0
    ok &= neg_spread >= 1e-1 && (neg_spread - 1.0).abs() <= 1e-9;

    let m2 = model("internal_c2.json");
    let r2 = run_checks(&m2, &[Check::Internal]);
    let c2 = r2.filter("internal-C2");
    let c2_max = max_res(&r2, "internal-C2");
    ok &= !c2.is_empty() && c2.iter().all(|e| e.passed()) && c2_max <= 1e-8;
    ok &= m2.group.as_ref().unwrap().samples() == [-0.7, 0.0, 0.7];
    let w2 = gibbs_weights(&[0.0, 1.0, 2.0], 1.0);
    let want = |name: &str| if name.starts_with("S1") { 0.5 * (w2[0] + w2[1]) } else { 1.0 - 0.5 * (w2[0] + w2[1]) };
    let degenerate: Vec<_> = r2.filter("internal-C2-degenerate").into_iter().filter(|e| e.verdict != toposkms::report::Verdict::Info).collect();
    let c1_spread = max_res(&r2, "internal-C1");
    ok &= !degenerate.is_empty();
    for e in &degenerate {
        ok &= e.subject.as_deref().unwrap().ends_with(",Sigma");
        let name = e.subject.as_deref().unwrap();
        ok &= (e.lhs[0] - want(name)).abs() <= 1e-12 && (e.rhs[0] - want(name)).abs() <= 1e-12;
        ok &= e.residual <= c1_spread + 1e-15 && e.passed();
    }
    outcome(
        ok,
        format!(
            "fixed {fixed:?}, orbits example {n_example} diagonal {n_diag}; spread Gibbs {spread:.1e} (orbit value {orbit_value:.5}), pure {neg_spread:.3}; internal C2 max {c2_max:.1e}; {} degenerate entries match internal C1",
            degenerate.len()
        ),
    )
}

fn flatten(m: &ComplexMatrix) -> Vec<C64> {
    m.as_slice().to_vec()
}

fn vec_gap(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn criterion_8() -> Outcome {
    let t = tol();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut oracle_gap: f64 = 0.0;
    for k in 0..20u64 {
        let n = 2 + (k % 3) as usize;
        let mut rng = sampling::rng(100 + k);
        let state = State::new(sampling::faithful_density(n, &mut rng), &t).unwrap();
        let gns = GnsSpace::new(&state, &t).unwrap();
        let r = gns.closed_form_report(&t).unwrap();
        ok &= r.passed() && r.entries.iter().all(|e| e.tolerance <= 1e-10);
        worst = worst.max(r.entries.iter().map(|e| e.residual).fold(0.0, f64::max));
        let omega = &gns.data.omega;
        let root = ComplexMatrix::from_fn(n, |i, j| omega[i * n + j]);
        let a = sampling::hermitian(n, &mut rng).matmul(&sampling::unitary(n, &mut rng));
        oracle_gap = oracle_gap.max((omega.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs());
        oracle_gap = oracle_gap.max(vec_gap(&gns.data.s.apply(&flatten(&a.matmul(&root))), &flatten(&a.adjoint().matmul(&root))));
        oracle_gap = oracle_gap.max(vec_gap(&gns.data.j.apply(&flatten(&a)), &flatten(&a.adjoint())));
        let vector_state: C64 = omega.iter().zip(GnsSpace::left(&a).apply(omega)).map(|(x, y)| x.conj() * y).sum();
        oracle_gap = oracle_gap.max((vector_state - state.expectation(&a)).norm());
    }
    ok &= worst <= 1e-10 && oracle_gap <= 1e-10;

    let mut spectrum_gap: f64 = 0.0;
    for k in 0..5u64 {
        let n = 2 + (k % 3) as usize;
        let a = sampling::spectrum(n, 0.05, &mut sampling::rng(300 + k));
        let gns = GnsSpace::new(&State::from_spectrum(&a, &t).unwrap(), &t).unwrap();
        for i in 0..n {
            for j in 0..n {
                let d = gns.data.delta[(i * n + j, i * n + j)];
                spectrum_gap = spectrum_gap.max((d - re(a[i] / a[j])).norm());
            }
        }
    }
    ok &= spectrum_gap <= 1e-10;

    let mut flow_gap: f64 = 0.0;
    for k in 0..6u64 {
        let n = 2 + (k % 3) as usize;
        let beta = [0.5, 1.0, 2.0][k as usize % 3];
        let mut rng = sampling::rng(400 + k);
        let h = sampling::hermitian(n, &mut rng);
        let state = gibbs_state(&h, beta, &t).unwrap();
        let a = sampling::hermitian(n, &mut rng);
        for s in [-2.0, -0.3, 0.7, 1.5] {
            let u = entire_function_of(&h, re(s), &t).unwrap();
            let want = u.matmul(&a).matmul(&u.adjoint());
            flow_gap = flow_gap.max((&modular_flow(&state, beta, s, &a, &t).unwrap() - &want).frobenius_norm());
        }
    }
    ok &= flow_gap <= 1e-9;

    let doc = evaluate(Scenario::from_json(&scenario_text("modular_gibbs.json")).unwrap(), None).unwrap();
    let graded = |name: &str| doc.entries.iter().filter(|e| e.check == name).collect::<Vec<_>>();
    ok &= doc.passed() && !graded("C1").is_empty() && !graded("C2").is_empty();
    let mut random_ok = true;
    for k in 0..3u64 {
        let rho = sampling::faithful_density(3, &mut sampling::rng(500 + k));
        let m = model_with("modular_gibbs.json", |v| {
            v["state"] = serde_json::json!({"kind": "density", "matrix": toposkms::cli::scenario::from_matrix(&rho)});
            v.as_object_mut().unwrap().remove("hamiltonian");
        });
        let r = run_checks(&m, &[Check::C1, Check::C2]);
        random_ok &= r.passed() && !r.filter("C1").is_empty() && !r.filter("C2").is_empty();
    }
    ok &= random_ok;
    outcome(
        ok,
        format!("20 states max identity residual {worst:.1e}, oracle gap {oracle_gap:.1e}; Delta spectrum gap {spectrum_gap:.1e}; modular vs Hamiltonian flow {flow_gap:.1e}; vector state C1/C2 {}", if random_ok { "pass" } else { "fail" }),
    )
}

/// Order preservation and continuity computed directly: every lower set of the target must
/// pull back to a lower set of the source.
fn oracle_order(src: &ContextPoset, map: &[usize], tgt: &ContextPoset) -> (bool, bool) {
    let n = src.len();
    let monotone = (0..n).all(|a| (0..n).all(|b| !src.leq(a, b) || tgt.leq(map[a], map[b])));
    let m = tgt.len();
    assert!(m <= 16);
    let mut continuous = true;
    for set in 0u32..(1 << m) {
        let lower = (0..m).all(|w| set >> w & 1 == 0 || (0..m).all(|x| !tgt.leq(x, w) || set >> x & 1 == 1));
        if !lower {
            continue;
        }
        let pre: Vec<bool> = (0..n).map(|a| set >> map[a] & 1 == 1).collect();
        continuous &= (0..n).all(|a| !pre[a] || (0..n).all(|b| !src.leq(b, a) || pre[b]));
    }
    (monotone, continuous)
}

fn criterion_9() -> Outcome {
    let t = tol();
    let closed = PosetOptions { downward_closure: true, ..PosetOptions::default() };
    let mut cases: Vec<(&str, ContextPoset, AntiLinear)> = Vec::new();

    // N = M2 ⊗ I with Omega maximally entangled; J is swap composed with conjugation
    let mut left = Vec::new();
    for p in [Projection::basis(2, 0), Projection::onto_vector(&[re(FRAC_1_SQRT_2), C64::new(0.0, FRAC_1_SQRT_2)]).unwrap()] {
        let big = |q: &Projection| Projection::new(q.matrix().kron(&ComplexMatrix::identity(2)), &t).unwrap();
        left.push(Context::from_blocks(vec![big(&p), big(&p.complement())], &t).unwrap());
    }
    left.push(Context::diagonal(4, &t).unwrap());
    cases.push(("bipartite", ContextPoset::build(&left, &closed, &t).unwrap(), bipartite_conjugation(2)));

    cases.push((
        "diagonal C3 under conjugation",
        ContextPoset::build(&[Context::diagonal(3, &t).unwrap()], &closed, &t).unwrap(),
        AntiLinear { matrix: ComplexMatrix::identity(3) },
    ));

    let mut rng = sampling::rng(909);
    let u = sampling::unitary(4, &mut rng);
    let rand_ctx = Context::from_blocks((0..4).map(|k| Projection::from_orthonormal(4, &[u.column(k)])).collect(), &t).unwrap();
    cases.push((
        "random C4 basis under U K",
        ContextPoset::build(&[rand_ctx], &closed, &t).unwrap(),
        AntiLinear { matrix: sampling::unitary(4, &mut rng) },
    ));

    let state = State::new(sampling::faithful_density(3, &mut rng), &t).unwrap();
    let gns = GnsSpace::new(&state, &t).unwrap();
    let base = ContextPoset::build(&[Context::diagonal(3, &t).unwrap()], &closed, &t).unwrap();
    let lifted: Vec<Context> = base
        .contexts()
        .iter()
        .map(|c| {
            let blocks = c.blocks().iter().map(|q| Projection::new(GnsSpace::left(q.matrix()), &t).unwrap()).collect();
            Context::from_blocks(blocks, &t).unwrap()
        })
        .collect();
    cases.push(("GNS of a faithful state on M3", ContextPoset::build(&lifted, &PosetOptions::default(), &t).unwrap(), gns.data.j.clone()));

    let mut ok = true;
    let mut lines = Vec::new();
    for (name, src, theta) in &cases {
        let jm = jmap_on_contexts(src, theta, None, &t).unwrap();
        let (mono, cont) = oracle_order(src, &jm.images, &jm.target);
        let agree = jm.order.order_preserving == jm.order.lower_set_continuous;
        let pass = agree && jm.order.order_preserving && mono == jm.order.order_preserving && cont == jm.order.lower_set_continuous;
        ok &= pass;
        lines.push(format!("{name} ({} contexts): {}", src.len(), if pass { "agree, pass" } else { "disagree or fail" }));
    }
    ok &= cases.len() >= 4;
    outcome(ok, lines.join("; "))
}

fn criterion_10() -> Outcome {
    let m = model("gibbs_c3.json");
    let t = m.tol;
    let flow = m.flow.as_ref().unwrap();
    let [(_, p12), _, _] = example_projections();
    let p = Projection::new(p12, &t).unwrap();
    let v = m.seeds[0];
    let w = gibbs_weights(&[0.0, 1.0, 2.0], 1.0);
    let oracle = 0.5 * (w[0] + w[1]);
    let mut ok = true;
    let mut cutoff: f64 = 0.0;
    for &r in &m.scenario.r {
        let rep = check_truth_value_invariance(&m.state, flow, &m.poset, &p, v, r, &m.scenario.t_grid, "P12", &t).unwrap();
        cutoff = cutoff.max(max_res(&rep, "truth-cutoff"));
        ok &= rep.passed() && !rep.filter("truth-cutoff").is_empty();
        let tv = truth_value(&m.state, &m.poset, &p, v, r).unwrap();
        let own = tv.cutoffs.iter().find(|c| c.0 == v).unwrap().1;
        ok &= (own - r.min(oracle)).abs() <= 1e-12;
    }
    ok &= cutoff <= 1e-9;

    let mut gap: f64 = 0.0;
    let e = expectation_value(&m.state, &mut m.poset.clone(), &[(1.0, p.clone())], false).unwrap();
    gap = gap.max((e - oracle).abs()).max((e - m.state.prob(&p)).abs());

    let t4 = tol();
    let opts = PosetOptions { downward_closure: true, ..PosetOptions::default() };
    let poset = ContextPoset::build(&[Context::diagonal(4, &t4).unwrap()], &opts, &t4).unwrap();
    let rho = sampling::faithful_density(4, &mut sampling::rng(1010));
    let state = State::new(rho.clone(), &t4).unwrap();
    let top = (0..poset.len()).find(|&v| poset.context(v).num_blocks() == 4).unwrap();
    for mask in 1..poset.context(top).full_mask() {
        let q = poset.context(top).projection_of(mask);
        let direct: f64 = (0..4).filter(|j| mask >> j & 1 == 1).map(|j| rho[(j, j)].re).sum();
        let e = expectation_value(&state, &mut poset.clone(), &[(1.0, q)], false).unwrap();
        gap = gap.max((e - direct).abs());
    }
    ok &= gap <= 1e-10;
    outcome(ok, format!("cutoff invariance max {cutoff:.1e} over r {:?}; expectation identity max gap {gap:.1e}", m.scenario.r))
}

fn criterion_11(elapsed: f64) -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut names: Vec<String> =
        std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    let mut identical = true;
    for name in &names {
        let text = scenario_text(name);
        let a = evaluate(Scenario::from_json(&text).unwrap(), None).unwrap();
        let b = evaluate(Scenario::from_json(&text).unwrap(), None).unwrap();
        identical &= a.to_json() == b.to_json() && a.to_csv() == b.to_csv() && a.to_markdown() == b.to_markdown();
    }
    let ok = identical && elapsed < 60.0;
    outcome(ok, format!("criteria 1-10 in {elapsed:.2}s; {} scenarios byte-identical across two runs: {identical}", names.len()))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        }
    }
}

#[test]
fn acceptance_criteria() {
    let start = Instant::now();
    let criteria: Vec<fn() -> Outcome> = vec![
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
    ];
    let mut results: Vec<Outcome> = criteria.into_iter().map(guarded).collect();
    let elapsed = start.elapsed().as_secs_f64();
    results.push(guarded(|| criterion_11(elapsed)));
    // written past the test harness capture so the lines always appear
    let mut out = std::io::stdout().lock();
    for (k, o) in results.iter().enumerate() {
        let _ = writeln!(out, "acceptance {:>2}: {} {}", k + 1, if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let _ = out.flush();
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, o)| !o.passed).map(|(k, _)| k + 1).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
