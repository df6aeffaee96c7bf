use proptest::prelude::*;

use toposkms::algebra::{bicommutant_check, context_from_operators, includes, Context, ContextPoset, PosetOptions};
use toposkms::kms_external::{check_c2_operators, gibbs_state, AutomorphismFlow, TruthObject};
use toposkms::kms_internal::{breve_measure, breve_restriction, breve_spectrum, orbits, SampledGroup};
use toposkms::measure::{measure_section, measure_table, state_from_measure, State};
use toposkms::modular::GnsSpace;
use toposkms::numerics::{
    entire_function_of, hermitian_eig, proj_join, proj_meet, ComplexMatrix, Projection, Tolerances, C64,
};
use toposkms::presheaf::{
    daseinisation_subobject, outer_daseinisation, s_inverse, s_map, ClopenSubobject,
};
use toposkms::sampling;

fn tol() -> Tolerances {
    Tolerances::default()
}

/// Context from the columns of a random unitary grouped by `labels` (label per column).
fn grouped_context(n: usize, labels: &[usize], seed: u64) -> Option<Context> {
    let mut rng = sampling::rng(seed);
    let u = sampling::unitary(n, &mut rng);
    let mut groups: Vec<Vec<Vec<C64>>> = Vec::new();
    let mut keys: Vec<usize> = Vec::new();
    for (j, &l) in labels.iter().enumerate().take(n) {
        match keys.iter().position(|&k| k == l) {
            Some(i) => groups[i].push(u.column(j)),
            None => {
                keys.push(l);
                groups.push(vec![u.column(j)]);
            }
        }
    }
    if groups.len() < 2 {
        return None;
    }
    let blocks = groups.iter().map(|g| Projection::from_orthonormal(n, g)).collect();
    Context::from_blocks(blocks, &tol()).ok()
}

fn rel(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).frobenius_norm() / a.frobenius_norm().max(1.0)
}

fn diagonal_poset(n: usize) -> ContextPoset {
    let t = tol();
    let opts = PosetOptions { downward_closure: true, ..PosetOptions::default() };
    ContextPoset::build(&[Context::diagonal(n, &t).unwrap()], &opts, &t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn sampled_projections_validate(seed in any::<u64>(), n in 2usize..6, r in 0usize..6) {
        let rank = r.min(n);
        let p = sampling::projection(n, rank, &mut sampling::rng(seed));
        let m = p.matrix().clone();
        prop_assert!(m.hermiticity_defect() <= 1e-10);
        prop_assert!((&m.matmul(&m) - &m).frobenius_norm() <= 1e-10);
        let spec = hermitian_eig(&m, &tol()).unwrap().values;
        prop_assert!(spec.iter().all(|x| x.abs() <= 1e-8 || (x - 1.0).abs() <= 1e-8));
        prop_assert_eq!(m.trace().re.round() as usize, rank);
        let again = Projection::new(m, &tol()).unwrap();
        prop_assert_eq!(again.rank(), rank);
    }

    #[test]
    fn commuting_lattice_laws(seed in any::<u64>(), a in 0u8..16, b in 0u8..16, c in 0u8..16) {
        let n = 4;
        let u = sampling::unitary(n, &mut sampling::rng(seed));
        let pick = |mask: u8| {
            let cols: Vec<Vec<C64>> = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| u.column(k)).collect();
            Projection::from_orthonormal(n, &cols)
        };
        let (p, q, r) = (pick(a), pick(b), pick(c));
        let t = tol();
        let close = |x: &Projection, y: &Projection| (x.matrix() - y.matrix()).frobenius_norm() <= t.eps_order;
        prop_assert!(close(&proj_meet(&p, &q, &t).unwrap(), &proj_meet(&q, &p, &t).unwrap()));
        prop_assert!(close(&proj_join(&p, &q, &t).unwrap(), &proj_join(&q, &p, &t).unwrap()));
        let m1 = proj_meet(&proj_meet(&p, &q, &t).unwrap(), &r, &t).unwrap();
        let m2 = proj_meet(&p, &proj_meet(&q, &r, &t).unwrap(), &t).unwrap();
        prop_assert!(close(&m1, &m2));
        let j1 = proj_join(&proj_join(&p, &q, &t).unwrap(), &r, &t).unwrap();
        let j2 = proj_join(&p, &proj_join(&q, &r, &t).unwrap(), &t).unwrap();
        prop_assert!(close(&j1, &j2));
        prop_assert!(close(&proj_meet(&p, &proj_join(&p, &q, &t).unwrap(), &t).unwrap(), &p));
        prop_assert!(close(&proj_join(&p, &proj_meet(&p, &q, &t).unwrap(), &t).unwrap(), &p));
        prop_assert!(close(&proj_meet(&p, &q, &t).unwrap(), &pick(a & b)));
    }

    #[test]
    fn exponentials_are_unitary_or_positive(seed in any::<u64>(), n in 2usize..5, s in -3.0f64..3.0, y in -1.5f64..1.5) {
        let h = sampling::hermitian(n, &mut sampling::rng(seed));
        let u = entire_function_of(&h, C64::new(s, 0.0), &tol()).unwrap();
        prop_assert!(u.unitarity_defect() <= 1e-10);
        let e = entire_function_of(&h, C64::new(0.0, y), &tol()).unwrap();
        prop_assert!(e.hermiticity_defect() / e.max_abs() <= 1e-10);
        let spec = hermitian_eig(&e.hermitian_part(), &tol()).unwrap().values;
        prop_assert!(spec[0] > 0.0);
    }

    #[test]
    fn flow_group_law(seed in any::<u64>(), s in -2.0f64..2.0, t in -2.0f64..2.0, y in -0.5f64..0.5, w in -0.5f64..0.5) {
        let mut rng = sampling::rng(seed);
        let h = sampling::hermitian(3, &mut rng);
        let a = sampling::hermitian(3, &mut rng);
        let b = sampling::unitary(3, &mut rng);
        let flow = AutomorphismFlow::hamiltonian(&h, 1.0, &tol()).unwrap();
        prop_assert!(rel(&flow.apply(0.0, &a), &a) <= 1e-10);
        let z1 = C64::new(s, y);
        let z2 = C64::new(t, w);
        let composed = flow.element(z1).apply(&flow.element(z2).apply(&b));
        prop_assert!(rel(&composed, &flow.element(z1 + z2).apply(&b)) <= 1e-10);
        let ab = flow.apply(t, &a.matmul(&b));
        prop_assert!(rel(&ab, &flow.apply(t, &a).matmul(&flow.apply(t, &b))) <= 1e-10);
        prop_assert!(rel(&flow.apply(t, &b.adjoint()), &flow.apply(t, &b).adjoint()) <= 1e-10);
    }

    #[test]
    fn context_invariants(seed in any::<u64>(), labels in proptest::collection::vec(0usize..3, 4)) {
        let t = tol();
        let Some(ctx) = grouped_context(4, &labels, seed) else { return Ok(()) };
        let sum = ctx.blocks().iter().fold(ComplexMatrix::zeros(4), |acc, q| &acc + q.matrix());
        prop_assert!((&sum - &ComplexMatrix::identity(4)).frobenius_norm() <= t.eps_idem);
        for (i, p) in ctx.blocks().iter().enumerate() {
            for q in &ctx.blocks()[i + 1..] {
                prop_assert!(p.matrix().matmul(q.matrix()).frobenius_norm() <= t.eps_order);
            }
        }
        let ops: Vec<ComplexMatrix> = ctx.blocks().iter().map(|q| q.matrix().clone()).collect();
        let again = context_from_operators(&ops, &t).unwrap();
        prop_assert!(again.same_as(&ctx, &t));
        prop_assert!(bicommutant_check(&ctx, &t).unwrap().holds);
        for mask in 0..=ctx.full_mask() {
            let p = s_inverse(&ctx, mask);
            prop_assert_eq!(s_map(&ctx, &p, &t).unwrap(), mask);
        }
    }

    #[test]
    fn built_posets_are_partial_orders(seed in any::<u64>(), l1 in proptest::collection::vec(0usize..3, 4), l2 in proptest::collection::vec(0usize..3, 4)) {
        let t = tol();
        let mut seeds = vec![Context::diagonal(4, &t).unwrap()];
        seeds.extend(grouped_context(4, &l1, seed));
        seeds.extend(grouped_context(4, &l2, seed.wrapping_add(1)));
        let opts = PosetOptions { downward_closure: true, meet_closure: true, ..PosetOptions::default() };
        let poset = ContextPoset::build(&seeds, &opts, &t).unwrap();
        let n = poset.len();
        prop_assume!(n <= 50);
        for a in 0..n {
            prop_assert!(poset.leq(a, a));
            for b in 0..n {
                prop_assert_eq!(poset.leq(a, b), includes(poset.context(a), poset.context(b), &t));
                if a != b {
                    prop_assert!(!(poset.leq(a, b) && poset.leq(b, a)));
                }
                for c in 0..n {
                    if poset.leq(a, b) && poset.leq(b, c) {
                        prop_assert!(poset.leq(a, c));
                    }
                }
            }
        }
        for (lo, hi) in poset.hasse_edges() {
            prop_assert!(poset.leq(lo, hi) && lo != hi);
            let direct = poset.restriction(hi, lo).unwrap().to_vec();
            prop_assert_eq!(direct.len(), poset.context(hi).num_blocks());
        }
        for a in 0..n {
            for b in poset.down_set(a) {
                for c in poset.down_set(b) {
                    let ab = poset.restriction(a, b).unwrap();
                    let bc = poset.restriction(b, c).unwrap();
                    let ac = poset.restriction(a, c).unwrap();
                    let composed: Vec<usize> = ab.iter().map(|&i| bc[i]).collect();
                    prop_assert_eq!(composed, ac.to_vec());
                }
            }
        }
    }

    #[test]
    fn sections_are_order_reversing(seed in any::<u64>(), rank in 1usize..4) {
        let t = tol();
        let poset = diagonal_poset(4);
        let mut rng = sampling::rng(seed);
        let state = State::new(sampling::faithful_density(4, &mut rng), &t).unwrap();
        let p = sampling::projection(4, rank, &mut rng);
        let d = daseinisation_subobject(&poset, &p).unwrap();
        prop_assert!(d.closure_violation(&poset).is_none());
        let sec = measure_section(&state, &poset, &d).unwrap();
        prop_assert!(sec.order_reversal_defect(&poset) <= t.eps_measure);
        for v in 0..poset.len() {
            let dv = outer_daseinisation(&p, poset.context(v), &t).unwrap();
            prop_assert!(state.prob(&dv) >= state.prob(&p) - t.eps_measure);
        }
    }

    #[test]
    fn disjoint_additivity(seed in any::<u64>(), a in 1u64..16, b in 1u64..16) {
        let t = tol();
        let poset = diagonal_poset(4);
        let state = State::new(sampling::faithful_density(4, &mut sampling::rng(seed)), &t).unwrap();
        let dom = ClopenSubobject::whole_poset(&poset);
        let top = poset.len() - 1;
        let s = ClopenSubobject::generated_by(&poset, &dom, &[(top, a & !b)]).unwrap();
        let u = ClopenSubobject::generated_by(&poset, &dom, &[(top, b)]).unwrap();
        prop_assert!(s.closure_violation(&poset).is_none() && u.closure_violation(&poset).is_none());
        let meet = s.meet(&u).unwrap();
        let join = s.join(&u).unwrap();
        for v in 0..poset.len() {
            let mu = |x: &ClopenSubobject| toposkms::measure::measure_of(&state, &poset, x, v).unwrap();
            prop_assert!((mu(&join) + mu(&meet) - mu(&s) - mu(&u)).abs() <= t.eps_measure);
        }
    }

    #[test]
    fn reconstruction_recovers_state(seed in any::<u64>(), n in 2usize..4) {
        let t = tol();
        let mut rng = sampling::rng(seed);
        let rho = sampling::faithful_density(n, &mut rng);
        let mut seeds = vec![Context::diagonal(n, &t).unwrap()];
        for _ in 0..n + 1 {
            let u = sampling::unitary(n, &mut rng);
            let blocks = (0..n).map(|k| Projection::from_orthonormal(n, &[u.column(k)])).collect();
            seeds.push(Context::from_blocks(blocks, &t).unwrap());
        }
        let poset = ContextPoset::build(&seeds, &PosetOptions::default(), &t).unwrap();
        let state = State::new(rho.clone(), &t).unwrap();
        let rec = state_from_measure(&poset, &measure_table(&state, &poset), &t).unwrap();
        prop_assert!(rec.diagnostics.uniquely_determined);
        prop_assert!((rec.state.density() - &rho).frobenius_norm() <= 1e-8);
    }

    #[test]
    fn truth_membership_is_monotone(seed in any::<u64>(), r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
        let t = tol();
        let poset = diagonal_poset(3);
        let state = State::new(sampling::faithful_density(3, &mut sampling::rng(seed)), &t).unwrap();
        let truth = TruthObject::new(&state, &poset);
        let top = poset.len() - 1;
        let stage = truth.stage(top).unwrap();
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let low = stage.members_at(lo, &t);
        for m in stage.members_at(hi, &t) {
            prop_assert!(low.iter().any(|x| x.subobject == m.subobject));
            prop_assert!(m.tau >= hi - t.eps_measure);
        }
        for m in &stage.members {
            for w in poset.down_set(top) {
                let small = truth.threshold(&m.subobject.restrict_to(&poset.down_set(w)).unwrap(), w).unwrap();
                prop_assert!(small >= m.tau - t.eps_measure);
            }
        }
    }

    #[test]
    fn kms_closed_form_matches(seed in any::<u64>(), beta in 0.2f64..3.0) {
        let t = tol();
        let mut rng = sampling::rng(seed);
        // Spectral spread 2: the direct strip product loses about e^{β·spread} ulps.
        let raw = sampling::hermitian(3, &mut rng);
        let spec = hermitian_eig(&raw, &t).unwrap().values;
        let h = raw.scale_re(2.0 / (spec[2] - spec[0]));
        let state = gibbs_state(&h, beta, &t).unwrap();
        let flow = AutomorphismFlow::hamiltonian(&h, beta, &t).unwrap();
        let p = sampling::projection(3, 1, &mut rng);
        let q = sampling::projection(3, 2, &mut rng);
        let grid: Vec<f64> = (0..4).map(|k| -1.5 + k as f64).collect();
        let r = check_c2_operators(&state, &flow, &p, &q, &grid, "pq", &t).unwrap();
        prop_assert!(r.max_residual(Some("C2-analytic")) <= 1e-10);
        prop_assert!(r.max_residual(Some("C2")) <= t.eps_order);
    }

    #[test]
    fn modular_identities(seed in any::<u64>(), n in 2usize..5) {
        let t = tol();
        let state = State::new(sampling::faithful_density(n, &mut sampling::rng(seed)), &t).unwrap();
        let gns = GnsSpace::new(&state, &t).unwrap();
        let r = gns.closed_form_report(&t).unwrap();
        prop_assert!(r.passed(), "{:?}", r.failures().next());
    }

    #[test]
    fn orbit_classes_partition_samples(m in 2usize..7, omega in 0.5f64..2.0) {
        let t = tol();
        let h = ComplexMatrix::real_diag(&[0.0, 1.0, 2.0]);
        let flow = AutomorphismFlow::hamiltonian(&h, 1.0, &t).unwrap();
        let group = SampledGroup::cyclic(flow, m, omega, true, vec![]).unwrap();
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let p12 = Projection::onto_vector(&[C64::new(c, 0.0), C64::new(c, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let mut seeds = vec![Context::diagonal(3, &t).unwrap(), Context::binary(&p12, &t).unwrap()];
        seeds.extend(group.unitaries().iter().map(|u| Context::binary(&p12.conjugate_by(u), &t).unwrap()));
        let poset = ContextPoset::build(&seeds, &PosetOptions::default(), &t).unwrap();
        for v in 0..poset.len() {
            let classes = orbits(&group, &poset, v, &t);
            let mut all: Vec<usize> = classes.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..group.samples().len()).collect::<Vec<_>>());
        }
    }
}

#[test]
fn trivial_group_breve_is_identity() {
    let t = tol();
    let poset = diagonal_poset(4);
    let flow = AutomorphismFlow::hamiltonian(&sampling::hermitian(4, &mut sampling::rng(3)), 1.0, &t).unwrap();
    let group = SampledGroup::explicit(flow, vec![0.0], vec![]).unwrap();
    let state = State::new(sampling::faithful_density(4, &mut sampling::rng(4)), &t).unwrap();
    let p = sampling::projection(4, 2, &mut sampling::rng(5));
    let d = daseinisation_subobject(&poset, &p).unwrap();
    for v in 0..poset.len() {
        let spec = breve_spectrum(&group, &poset, v, &t).unwrap();
        assert_eq!(spec.fibers.len(), 1);
        assert_eq!(spec.fibers[0].image, v);
        assert_eq!(spec.fibers[0].data, poset.context(v).num_blocks());
        let mu = breve_measure(&state, &group, &poset, &d, v, &t).unwrap();
        assert_eq!(mu.fibers[0].data, toposkms::measure::measure_of(&state, &poset, &d, v).unwrap());
        for w in poset.down_set(v) {
            assert_eq!(breve_restriction(&group, &poset, v, w, &t).unwrap(), vec![0]);
        }
    }
}
