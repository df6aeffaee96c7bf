//! Time flows on the context poset and the two KMS conditions stated through measures,
//! truth objects and expectation values.

use serde::{Deserialize, Serialize};

use crate::algebra::{Context, ContextId, ContextPoset};
use crate::error::{Error, Result};
use crate::measure::{measure_of, State};
use crate::numerics::{hermitian_eig, ComplexMatrix, Eigen, Projection, Tolerances, C64};
use crate::presheaf::{
    daseinisation_subobject, enumerate_subobjects, locate_image, outer_daseinisation, s_map, ClopenSubobject,
    MAX_ENUMERATION,
};
use crate::report::{Report, ReportEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FlowConvention {
    /// α_t(A) = e^{itH} A e^{-itH} for a declared Hamiltonian H.
    #[default]
    Hamiltonian,
    /// The same form with H = -(1/β) log ϱ, i.e. α_t(A) = ϱ^{-it/β} A ϱ^{it/β}.
    Modular,
}

/// A one-parameter group of inner automorphisms generated by a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct AutomorphismFlow {
    generator: ComplexMatrix,
    beta: f64,
    convention: FlowConvention,
    eig: Eigen,
}

/// The (possibly non-unitary) conjugation A ↦ e^{izH} A e^{-izH}.
#[derive(Debug, Clone)]
pub struct FlowElement {
    pub z: C64,
    pub forward: ComplexMatrix,
    pub backward: ComplexMatrix,
}

impl FlowElement {
    pub fn apply(&self, a: &ComplexMatrix) -> ComplexMatrix {
        self.forward.matmul(a).matmul(&self.backward)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("inverse temperature must be positive, got {beta}")))
    }
}

impl AutomorphismFlow {
    pub fn hamiltonian(h: &ComplexMatrix, beta: f64, tol: &Tolerances) -> Result<Self> {
        check_beta(beta)?;
        let eig = hermitian_eig(h, tol)?;
        Ok(AutomorphismFlow { generator: h.hermitian_part(), beta, convention: FlowConvention::Hamiltonian, eig })
    }

    /// The flow whose generator is -(1/β) log ϱ for a faithful state.
    pub fn modular(state: &State, beta: f64, tol: &Tolerances) -> Result<Self> {
        check_beta(beta)?;
        state.require_faithful()?;
        let e = hermitian_eig(state.density(), tol)?;
        let h = e.map(|a| C64::new(-a.ln() / beta, 0.0));
        let eig = hermitian_eig(&h, tol)?;
        Ok(AutomorphismFlow { generator: h, beta, convention: FlowConvention::Modular, eig })
    }

    pub fn generator(&self) -> &ComplexMatrix {
        &self.generator
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn convention(&self) -> FlowConvention {
        self.convention
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn eigen(&self) -> &Eigen {
        &self.eig
    }

    /// e^{itH}
    pub fn unitary(&self, t: f64) -> ComplexMatrix {
        self.eig.map(|l| C64::new(0.0, t * l).exp())
    }

    pub fn element(&self, z: C64) -> FlowElement {
        let i = C64::i();
        FlowElement {
            z,
            forward: self.eig.map(|l| (i * z * l).exp()),
            backward: self.eig.map(|l| (-i * z * l).exp()),
        }
    }

    pub fn apply(&self, t: f64, a: &ComplexMatrix) -> ComplexMatrix {
        self.element(C64::new(t, 0.0)).apply(a)
    }
}

/// e^{-βH} / tr e^{-βH}.
pub fn gibbs_state(h: &ComplexMatrix, beta: f64, tol: &Tolerances) -> Result<State> {
    check_beta(beta)?;
    let e = hermitian_eig(h, tol)?;
    let shift = e.values[0];
    let weights: Vec<f64> = e.values.iter().map(|l| (-beta * (l - shift)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let rho = e.map(|l| C64::new((-beta * (l - shift)).exp() / z, 0.0));
    State::new(rho, tol)
}

/// Contexts V whose images α_t V lie in the poset for every t of the grid.
pub fn closed_contexts(poset: &ContextPoset, flow: &AutomorphismFlow, t_grid: &[f64]) -> Result<Vec<ContextId>> {
    let us: Vec<ComplexMatrix> = t_grid.iter().map(|&t| flow.unitary(t)).collect();
    let mut out = Vec::new();
    'ctx: for v in 0..poset.len() {
        for u in &us {
            if poset.image_under(u, v)?.is_none() {
                continue 'ctx;
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Condition C1: μ^ρ(S)(V) against μ^ρ(α_t*S)(V) = μ^ρ(S)(α_t V).
pub fn check_c1(
    state: &State,
    flow: &AutomorphismFlow,
    poset: &ContextPoset,
    subobjects: &[(String, ClopenSubobject)],
    t_grid: &[f64],
    tol: &Tolerances,
) -> Result<Report> {
    let contexts = closed_contexts(poset, flow, t_grid)?;
    if contexts.is_empty() {
        return Err(Error::PosetNotClosed("no context has all its flow images in the poset".into()));
    }
    let mut report = Report::new();
    for (name, s) in subobjects {
        for &t in t_grid {
            let u = flow.unitary(t);
            for &v in &contexts {
                let w = poset.image_under(&u, v)?.expect("closed context");
                let lhs = measure_of(state, poset, s, v)?;
                let rhs = measure_of(state, poset, s, w)?;
                report.push(ReportEntry::real("C1", lhs, rhs, tol.eps_measure).at(v).about(name.clone()).time(t));
            }
        }
    }
    Ok(report)
}

/// F(z) = tr(ϱ P_T α_z(P_S)) from the eigenbasis of the generator.
pub fn kms_function_closed_form(
    state: &State,
    flow: &AutomorphismFlow,
    p_s: &ComplexMatrix,
    p_t: &ComplexMatrix,
    z: C64,
) -> C64 {
    let u = &flow.eigen().vectors;
    let lam = &flow.eigen().values;
    let a = u.adjoint().matmul(&state.density().matmul(p_t)).matmul(u);
    let b = u.adjoint().matmul(p_s).matmul(u);
    let n = lam.len();
    let i = C64::i();
    let mut f = C64::new(0.0, 0.0);
    for l in 0..n {
        for k in 0..n {
            f += a[(l, k)] * b[(k, l)] * (i * z * (lam[k] - lam[l])).exp();
        }
    }
    f
}

/// Number of points on the strip 0 ≤ Im z ≤ β where the analytic form is compared.
pub const STRIP_POINTS: usize = 5;

/// Condition C2 at the operator level: F(t + iβ) = tr(ϱ α_t(P_S) P_T), with the
/// closed-form continuation compared along the strip.
pub fn check_c2_operators(
    state: &State,
    flow: &AutomorphismFlow,
    p_s: &Projection,
    p_t: &Projection,
    t_grid: &[f64],
    subject: &str,
    tol: &Tolerances,
) -> Result<Report> {
    state.require_faithful()?;
    let beta = flow.beta();
    let rho = state.density();
    let mut report = Report::new();
    for &t in t_grid {
        let z = C64::new(t, beta);
        let lhs = rho.matmul(p_t.matrix()).matmul(&flow.element(z).apply(p_s.matrix())).trace();
        let rhs = rho.matmul(&flow.apply(t, p_s.matrix())).matmul(p_t.matrix()).trace();
        report.push(ReportEntry::new("C2", lhs, rhs, tol.eps_order).about(subject).time(t).point(z));
        for k in 0..STRIP_POINTS {
            let z = C64::new(t, beta * k as f64 / (STRIP_POINTS - 1) as f64);
            let direct = rho.matmul(p_t.matrix()).matmul(&flow.element(z).apply(p_s.matrix())).trace();
            let closed = kms_function_closed_form(state, flow, p_s.matrix(), p_t.matrix(), z);
            report.push(
                ReportEntry::new("C2-analytic", direct, closed, tol.eps_order).about(subject).time(t).point(z),
            );
        }
    }
    Ok(report)
}

/// Condition C2 for sub-objects S, T evaluated at context V.
#[allow(clippy::too_many_arguments)]
pub fn check_c2(
    state: &State,
    flow: &AutomorphismFlow,
    poset: &ContextPoset,
    s: &ClopenSubobject,
    t: &ClopenSubobject,
    v: ContextId,
    t_grid: &[f64],
    subject: &str,
    tol: &Tolerances,
) -> Result<Report> {
    let p_s = s.projection_at(poset, v)?;
    let p_t = t.projection_at(poset, v)?;
    let mut r = check_c2_operators(state, flow, &p_s, &p_t, t_grid, subject, tol)?;
    for e in &mut r.entries {
        e.context = Some(v);
    }
    Ok(r)
}

/// A sub-object over ↓V with its measure section and truth threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMember {
    pub subobject: ClopenSubobject,
    /// μ values on the contexts of the stage's down-set, in the same order.
    pub section: Vec<f64>,
    /// Smallest measure over the down-set: S ∈ T_(V, r) iff tau ≥ r.
    pub tau: f64,
}

/// All sub-objects of the spectral presheaf over ↓V with their thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStage {
    pub context: ContextId,
    pub down: Vec<ContextId>,
    pub members: Vec<StageMember>,
}

impl TruthStage {
    pub fn members_at(&self, r: f64, tol: &Tolerances) -> Vec<&StageMember> {
        self.members.iter().filter(|m| m.tau >= r - tol.eps_measure).collect()
    }
}

/// The truth object of a state on a poset; stages are computed on demand.
#[derive(Debug, Clone)]
pub struct TruthObject<'a> {
    pub state: &'a State,
    pub poset: &'a ContextPoset,
    pub cap: usize,
}

impl<'a> TruthObject<'a> {
    pub fn new(state: &'a State, poset: &'a ContextPoset) -> Self {
        TruthObject { state, poset, cap: MAX_ENUMERATION }
    }

    /// τ(S, V) = min over V′ ⊆ V of μ(S)(V′).
    pub fn threshold(&self, s: &ClopenSubobject, v: ContextId) -> Result<f64> {
        self.poset.down_set(v).iter().map(|&w| measure_of(self.state, self.poset, s, w)).try_fold(1.0f64, |m, x| Ok(m.min(x?)))
    }

    pub fn stage(&self, v: ContextId) -> Result<TruthStage> {
        let down = self.poset.down_set(v);
        let members = enumerate_subobjects(self.poset, &down, self.cap)?
            .into_iter()
            .map(|s| {
                let section =
                    down.iter().map(|&w| measure_of(self.state, self.poset, &s, w)).collect::<Result<Vec<f64>>>()?;
                let tau = section.iter().copied().fold(1.0, f64::min);
                Ok(StageMember { subobject: s, section, tau })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TruthStage { context: v, down, members })
    }

    pub fn members_at(&self, v: ContextId, r: f64, tol: &Tolerances) -> Result<Vec<ClopenSubobject>> {
        Ok(self.stage(v)?.members_at(r, tol).into_iter().map(|m| m.subobject.clone()).collect())
    }

    /// Stage V of the pulled-back truth object α*T: sub-objects over ↓(αV) relabelled to ↓V,
    /// measured on the twisted components.
    pub fn pulled_back_stage(&self, u: &ComplexMatrix, v: ContextId) -> Result<TruthStage> {
        let down = self.poset.down_set(v);
        let mut images = Vec::with_capacity(down.len());
        for &w in &down {
            let img = locate_image(self.poset, u, w)?
                .ok_or_else(|| Error::PosetNotClosed(format!("image of context {w} is not in the poset")))?;
            images.push(img);
        }
        let top = images[down.binary_search(&v).expect("v in its down-set")].0;
        let mut image_down: Vec<ContextId> = images.iter().map(|i| i.0).collect();
        image_down.sort_unstable();
        if image_down != self.poset.down_set(top) {
            return Err(Error::PosetNotClosed(format!("down-set of the image of context {v} is not the image of its down-set")));
        }
        let mut members = Vec::new();
        for s in enumerate_subobjects(self.poset, &image_down, self.cap)? {
            let mut comps = Vec::with_capacity(down.len());
            let mut section = Vec::with_capacity(down.len());
            for (&w, (img, corr)) in down.iter().zip(&images) {
                let sw = s.component(*img)?;
                comps.push((w, corr.iter().enumerate().filter(|(_, &j)| sw >> j & 1 == 1).fold(0, |m, (i, _)| m | 1 << i)));
                section.push(measure_of(self.state, self.poset, &s, *img)?);
            }
            let tau = section.iter().copied().fold(1.0, f64::min);
            members.push(StageMember { subobject: ClopenSubobject::new(self.poset, comps)?, section, tau });
        }
        members.sort_by(|a, b| a.subobject.sets().cmp(b.subobject.sets()));
        Ok(TruthStage { context: v, down, members })
    }
}

fn sections_match(a: &[f64], b: &[f64], tol: &Tolerances) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol.eps_measure)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceOutcome {
    pub holds: bool,
    /// Members of either side without a partner of equal measure.
    pub unmatched: Vec<ClopenSubobject>,
    /// Largest section difference along the supplied mapping (strong form only).
    pub max_defect: f64,
}

/// μ-equivalence at one stage (V, r): every member on each side has a member on the other
/// side with the same measure section over ↓V.
pub fn mu_equivalent(a: &TruthStage, b: &TruthStage, r: f64, tol: &Tolerances) -> Result<EquivalenceOutcome> {
    if a.down != b.down {
        return Err(Error::DomainMismatch);
    }
    let (ma, mb) = (a.members_at(r, tol), b.members_at(r, tol));
    let mut unmatched = Vec::new();
    for (from, to) in [(&ma, &mb), (&mb, &ma)] {
        for m in from.iter() {
            if !to.iter().any(|n| sections_match(&m.section, &n.section, tol)) {
                unmatched.push(m.subobject.clone());
            }
        }
    }
    Ok(EquivalenceOutcome { holds: unmatched.is_empty(), unmatched, max_defect: 0.0 })
}

/// Strong μ-equivalence at one stage, along the map sending S to the member of `b` with the
/// same characters. The image must be the only member of `b` carrying S's section.
pub fn strong_mu_equivalence(a: &TruthStage, b: &TruthStage, r: f64, tol: &Tolerances) -> Result<EquivalenceOutcome> {
    if a.down != b.down {
        return Err(Error::DomainMismatch);
    }
    let mb = b.members_at(r, tol);
    let mut unmatched = Vec::new();
    let mut max_defect: f64 = 0.0;
    for m in a.members_at(r, tol) {
        let Some(img) = mb.iter().find(|n| n.subobject == m.subobject) else {
            unmatched.push(m.subobject.clone());
            continue;
        };
        let defect = m.section.iter().zip(&img.section).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        max_defect = max_defect.max(defect);
        if defect > tol.eps_measure {
            unmatched.push(m.subobject.clone());
            continue;
        }
        let rivals = mb.iter().filter(|n| sections_match(&n.section, &m.section, tol)).count();
        if rivals > 1 {
            return Err(Error::AmbiguousMatch(format!(
                "{rivals} members at context {} share the measure section of {:?}",
                a.context,
                m.subobject.sets()
            )));
        }
    }
    Ok(EquivalenceOutcome { holds: unmatched.is_empty(), unmatched, max_defect })
}

/// Compares T^ρ with α_t*T^ρ at every requested stage.
pub fn check_truth_equivalence(
    state: &State,
    flow: &AutomorphismFlow,
    poset: &ContextPoset,
    contexts: &[ContextId],
    rs: &[f64],
    t_grid: &[f64],
    tol: &Tolerances,
) -> Result<Report> {
    let truth = TruthObject::new(state, poset);
    let mut report = Report::new();
    for &v in contexts {
        let base = truth.stage(v)?;
        for &t in t_grid {
            let moved = truth.pulled_back_stage(&flow.unitary(t), v)?;
            for &r in rs {
                let weak = mu_equivalent(&base, &moved, r, tol)?;
                report.push(
                    ReportEntry::residual("mu-equivalence", weak.unmatched.len() as f64, 0.0)
                        .at(v)
                        .time(t)
                        .about(format!("r={r}")),
                );
                let strong = strong_mu_equivalence(&base, &moved, r, tol)?;
                let mut e = ReportEntry::residual("strong-mu-equivalence", strong.max_defect, tol.eps_measure)
                    .at(v)
                    .time(t)
                    .about(format!("r={r}"));
                if !strong.holds {
                    e.verdict = crate::report::Verdict::Fail;
                }
                report.push(e);
            }
        }
    }
    Ok(report)
}

/// The generalised truth value v(δ(P) ∈ T^ρ)(V, r), as the cutoff min(r, μ(δP)(V′)) on ↓V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthValue {
    pub context: ContextId,
    pub r: f64,
    pub cutoffs: Vec<(ContextId, f64)>,
}

pub fn truth_value(state: &State, poset: &ContextPoset, p: &Projection, v: ContextId, r: f64) -> Result<TruthValue> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Invalid(format!("level r = {r} outside [0, 1]")));
    }
    let d = daseinisation_subobject(poset, p)?;
    let cutoffs = poset
        .down_set(v)
        .into_iter()
        .map(|w| Ok((w, r.min(measure_of(state, poset, &d, w)?))))
        .collect::<Result<Vec<_>>>()?;
    Ok(TruthValue { context: v, r, cutoffs })
}

/// Moves the cutoff table of δ(P) at (V, r) along α_t and compares it with that of δ(α_t P)
/// at (α_t V, r). `truth-structural` checks δ°(α_t P)_{α_t V′} = α_t(δ°(P)_{V′});
/// `truth-cutoff` compares the cutoff values.
#[allow(clippy::too_many_arguments)]
pub fn check_truth_value_invariance(
    state: &State,
    flow: &AutomorphismFlow,
    poset: &ContextPoset,
    p: &Projection,
    v: ContextId,
    r: f64,
    t_grid: &[f64],
    subject: &str,
    tol: &Tolerances,
) -> Result<Report> {
    let base = truth_value(state, poset, p, v, r)?;
    let mut report = Report::new();
    for &t in t_grid {
        let u = flow.unitary(t);
        let moved_p = p.conjugate_by(&u);
        for &(w, cut) in &base.cutoffs {
            let img = poset
                .image_under(&u, w)?
                .ok_or_else(|| Error::PosetNotClosed(format!("image of context {w} is not in the poset")))?;
            let moved_d = outer_daseinisation(&moved_p, poset.context(img), tol)?;
            let d = outer_daseinisation(p, poset.context(w), tol)?.conjugate_by(&u);
            report.push(
                ReportEntry::residual("truth-structural", (moved_d.matrix() - d.matrix()).frobenius_norm(), tol.eps_order)
                    .at(w)
                    .time(t)
                    .about(subject),
            );
            let moved_cut = r.min(state.prob(&moved_d));
            report.push(ReportEntry::real("truth-cutoff", cut, moved_cut, tol.eps_measure).at(w).time(t).about(subject));
        }
    }
    Ok(report)
}

/// Inserts {P, I - P} when no context of the poset has P in its lattice.
pub fn ensure_context_for(poset: &mut ContextPoset, p: &Projection, auto_insert: bool) -> Result<()> {
    let tol = *poset.tolerances();
    if p.rank() == 0 || p.rank() == p.dim() || poset.contexts().iter().any(|c| s_map(c, p, &tol).is_ok()) {
        return Ok(());
    }
    if !auto_insert {
        return Err(Error::ContextMissing(format!("rank-{} projection", p.rank())));
    }
    poset.insert(Context::binary(p, &tol)?)?;
    Ok(())
}

/// E(A) = Σ a_i min_V μ(δ(P_i))(V) for A = Σ a_i P_i.
pub fn expectation_value(
    state: &State,
    poset: &mut ContextPoset,
    spectral: &[(f64, Projection)],
    auto_insert: bool,
) -> Result<f64> {
    for (_, p) in spectral {
        ensure_context_for(poset, p, auto_insert)?;
    }
    let mut total = 0.0;
    for (a, p) in spectral {
        let d = daseinisation_subobject(poset, p)?;
        let m = (0..poset.len()).map(|v| measure_of(state, poset, &d, v)).try_fold(1.0f64, |m, x| Ok::<f64, Error>(m.min(x?)))?;
        total += a * m;
    }
    Ok(total)
}

/// Expectation-value form of the KMS conditions for A = Σ a_i P_i and B = Σ b_j Q_j.
#[allow(clippy::too_many_arguments)]
pub fn check_expectation_kms(
    state: &State,
    flow: &AutomorphismFlow,
    poset: &ContextPoset,
    a: &[(f64, Projection)],
    b: &[(f64, Projection)],
    t_grid: &[f64],
    tol: &Tolerances,
) -> Result<Report> {
    let mut report = Report::new();
    let mut work = poset.clone();
    let ea = expectation_value(state, &mut work, a, true)?;
    for (i, (_, p)) in a.iter().enumerate() {
        let e = expectation_value(state, &mut work, &[(1.0, p.clone())], true)?;
        report.push(ReportEntry::real("expectation-trace", e, state.prob(p), tol.eps_order).about(format!("P{i}")));
    }
    for &t in t_grid {
        let u = flow.unitary(t);
        let moved: Vec<(f64, Projection)> = a.iter().map(|(x, p)| (*x, p.conjugate_by(&u))).collect();
        let em = expectation_value(state, &mut work, &moved, true)?;
        report.push(ReportEntry::real("expectation-invariance", em, ea, tol.eps_measure).time(t));
    }
    if state.is_faithful() {
        let rho = state.density();
        let shifted = flow.element(C64::new(0.0, flow.beta()));
        let mut lhs_sum = C64::new(0.0, 0.0);
        let mut rhs_sum = C64::new(0.0, 0.0);
        for (i, (x, p)) in a.iter().enumerate() {
            for (j, (y, q)) in b.iter().enumerate() {
                let lhs = rho.matmul(p.matrix()).matmul(&shifted.apply(q.matrix())).trace();
                let rhs = rho.matmul(q.matrix()).matmul(p.matrix()).trace();
                lhs_sum += lhs * (x * y);
                rhs_sum += rhs * (x * y);
                report.push(ReportEntry::new("expectation-kms", lhs, rhs, tol.eps_order).about(format!("P{i}Q{j}")));
            }
        }
        report.push(ReportEntry::new("expectation-kms", lhs_sum, rhs_sum, tol.eps_order).about("AB"));
    }
    Ok(report)
}
