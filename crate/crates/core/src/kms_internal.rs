//! The flow as a sampled group acting on contexts: fixed-point subgroups, orbits, breve
//! objects and the internal form of the KMS conditions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::algebra::{ContextId, ContextPoset};
use crate::error::{Error, Result};
use crate::kms_external::AutomorphismFlow;
use crate::measure::{measure_of, State};
use crate::numerics::{hermitian_eig, proj_meet, ComplexMatrix, Tolerances, C64};
use crate::presheaf::{locate_image, ClopenSubobject};
use crate::report::{Report, ReportEntry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroupKind {
    Explicit,
    /// t_k = 2πk / (m ω); parameters are compared modulo the period 2π/ω.
    Cyclic { m: usize, omega: f64 },
}

/// Finitely many real flow parameters, plus strip offsets γ ∈ [0, β] for t + iγ.
#[derive(Debug, Clone)]
pub struct SampledGroup {
    flow: AutomorphismFlow,
    samples: Vec<f64>,
    gammas: Vec<f64>,
    kind: GroupKind,
    sum_closed: bool,
}

const PARAM_EPS: f64 = 1e-9;

impl SampledGroup {
    /// An explicit list, which must contain 0 and be closed under negation.
    pub fn explicit(flow: AutomorphismFlow, samples: Vec<f64>, gammas: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("non-finite group sample".into()));
        }
        if !samples.iter().any(|t| t.abs() <= PARAM_EPS) {
            return Err(Error::Invalid("group samples must contain 0".into()));
        }
        for &t in &samples {
            if !samples.iter().any(|&s| (s + t).abs() <= PARAM_EPS) {
                return Err(Error::Invalid(format!("group samples are not closed under negation ({t})")));
            }
        }
        let sum_closed = samples
            .iter()
            .all(|&a| samples.iter().all(|&b| samples.iter().any(|&c| (a + b - c).abs() <= PARAM_EPS)));
        Self::finish(flow, samples, gammas, GroupKind::Explicit, sum_closed)
    }

    /// The grid 2πk/(mω) for k = 0..m, or k = 0..=m when `include_period` is set.
    pub fn cyclic(flow: AutomorphismFlow, m: usize, omega: f64, include_period: bool, gammas: Vec<f64>) -> Result<Self> {
        if m == 0 || !(omega.is_finite() && omega > 0.0) {
            return Err(Error::Invalid("cyclic grid needs m ≥ 1 and ω > 0".into()));
        }
        let last = if include_period { m } else { m - 1 };
        let samples = (0..=last).map(|k| 2.0 * PI * k as f64 / (m as f64 * omega)).collect();
        Self::finish(flow, samples, gammas, GroupKind::Cyclic { m, omega }, true)
    }

    fn finish(flow: AutomorphismFlow, samples: Vec<f64>, gammas: Vec<f64>, kind: GroupKind, sum_closed: bool) -> Result<Self> {
        let beta = flow.beta();
        if let Some(g) = gammas.iter().find(|g| !(**g >= -PARAM_EPS && **g <= beta + PARAM_EPS)) {
            return Err(Error::Invalid(format!("strip offset {g} outside [0, β]")));
        }
        Ok(SampledGroup { flow, samples, gammas, kind, sum_closed })
    }

    pub fn flow(&self) -> &AutomorphismFlow {
        &self.flow
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    /// Whether sums of samples are again samples (always true for cyclic grids modulo the period).
    pub fn is_sum_closed(&self) -> bool {
        self.sum_closed
    }

    pub fn unitaries(&self) -> Vec<ComplexMatrix> {
        self.samples.iter().map(|&t| self.flow.unitary(t)).collect()
    }
}

/// Whether α_t fixes every element of the context (each block is invariant).
pub fn fixes_context(flow: &AutomorphismFlow, t: f64, poset: &ContextPoset, v: ContextId, tol: &Tolerances) -> bool {
    let u = flow.unitary(t);
    poset.context(v).blocks().iter().all(|q| (q.conjugate_by(&u).matrix() - q.matrix()).frobenius_norm() <= tol.eps_order)
}

/// Dimension of the subspace of V fixed by α_t.
fn fixed_dimension(flow: &AutomorphismFlow, t: f64, poset: &ContextPoset, v: ContextId, tol: &Tolerances) -> Result<usize> {
    let u = flow.unitary(t);
    let diffs: Vec<ComplexMatrix> =
        poset.context(v).blocks().iter().map(|q| q.conjugate_by(&u).matrix() - q.matrix()).collect();
    let k = diffs.len();
    let gram = ComplexMatrix::from_fn(k, |i, j| diffs[i].hs_inner(&diffs[j]));
    let e = hermitian_eig(&gram.hermitian_part(), tol)?;
    Ok(e.values.iter().filter(|&&x| x <= tol.eps_order).count())
}

/// Indices of samples whose automorphism fixes V elementwise.
pub fn fixed_point_subgroup(group: &SampledGroup, poset: &ContextPoset, v: ContextId, tol: &Tolerances) -> Vec<usize> {
    (0..group.samples.len()).filter(|&i| fixes_context(&group.flow, group.samples[i], poset, v, tol)).collect()
}

/// Whether a + b lands on some sample c modulo the fixed subgroup of V, for all samples a, b.
pub fn closes_modulo_fixed(group: &SampledGroup, poset: &ContextPoset, v: ContextId, tol: &Tolerances) -> bool {
    let s = &group.samples;
    s.iter().all(|&a| s.iter().all(|&b| s.iter().any(|&c| fixes_context(&group.flow, a + b - c, poset, v, tol))))
}

/// Classes of samples under t ∼ t′ iff α_{t − t′} fixes V; each class lists sample indices.
pub fn orbits(group: &SampledGroup, poset: &ContextPoset, v: ContextId, tol: &Tolerances) -> Vec<Vec<usize>> {
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in 0..group.samples.len() {
        let t = group.samples[i];
        match classes.iter_mut().find(|c| fixes_context(&group.flow, t - group.samples[c[0]], poset, v, tol)) {
            Some(c) => c.push(i),
            None => classes.push(vec![i]),
        }
    }
    classes
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaithfulSplit {
    /// Samples fixing only the scalars of V.
    pub faithful: Vec<usize>,
    /// Samples fixing all of V.
    pub fixing: Vec<usize>,
    /// Samples fixing some but not all non-scalar elements.
    pub middle: Vec<usize>,
}

pub fn faithful_automorphisms(group: &SampledGroup, poset: &ContextPoset, v: ContextId, tol: &Tolerances) -> Result<FaithfulSplit> {
    let k = poset.context(v).num_blocks();
    let mut split = FaithfulSplit { faithful: vec![], fixing: vec![], middle: vec![] };
    for (i, &t) in group.samples.iter().enumerate() {
        match fixed_dimension(&group.flow, t, poset, v, tol)? {
            1 => split.faithful.push(i),
            d if d == k => split.fixing.push(i),
            _ => split.middle.push(i),
        }
    }
    Ok(split)
}

/// One fiber of a breve object: an orbit class and the image context l_g V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreveFiber<T> {
    pub orbit: Vec<usize>,
    pub representative: usize,
    pub image: ContextId,
    pub data: T,
}

/// The breve object at V: a coproduct of copies of X(l_g V) indexed by orbit classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreveComponent<T> {
    pub context: ContextId,
    pub fibers: Vec<BreveFiber<T>>,
}

fn breve_fibers<T>(
    group: &SampledGroup,
    poset: &ContextPoset,
    v: ContextId,
    tol: &Tolerances,
    mut data: impl FnMut(ContextId, &[usize]) -> Result<T>,
) -> Result<BreveComponent<T>> {
    let mut fibers = Vec::new();
    for orbit in orbits(group, poset, v, tol) {
        let rep = orbit[0];
        let u = group.flow.unitary(group.samples[rep]);
        let (image, corr) = locate_image(poset, &u, v)?
            .ok_or_else(|| Error::PosetNotClosed(format!("image of context {v} under sample {rep} is not in the poset")))?;
        let d = data(image, &corr)?;
        fibers.push(BreveFiber { orbit, representative: rep, image, data: d });
    }
    Ok(BreveComponent { context: v, fibers })
}

/// Breve spectrum at V: each fiber carries the number of characters of l_g V.
pub fn breve_spectrum(group: &SampledGroup, poset: &ContextPoset, v: ContextId, tol: &Tolerances) -> Result<BreveComponent<usize>> {
    breve_fibers(group, poset, v, tol, |w, _| Ok(poset.context(w).num_blocks()))
}

/// Breve measure at V: μ^ρ(l_g*S)(V) = μ^ρ(S)(l_g V) per orbit class.
pub fn breve_measure(
    state: &State,
    group: &SampledGroup,
    poset: &ContextPoset,
    s: &ClopenSubobject,
    v: ContextId,
    tol: &Tolerances,
) -> Result<BreveComponent<f64>> {
    breve_fibers(group, poset, v, tol, |w, _| measure_of(state, poset, s, w))
}

/// Breve truth thresholds at V for a character set at V: each fiber carries
/// μ^ρ of the transported set at l_g V.
pub fn breve_thresholds(
    state: &State,
    group: &SampledGroup,
    poset: &ContextPoset,
    v: ContextId,
    set: u64,
    tol: &Tolerances,
) -> Result<BreveComponent<f64>> {
    breve_fibers(group, poset, v, tol, |w, corr| {
        let moved = corr.iter().enumerate().filter(|(i, _)| set >> i & 1 == 1).fold(0u64, |m, (_, &j)| m | 1 << j);
        Ok(state.prob(&poset.context(w).projection_of(moved)))
    })
}

/// For V′ ⊆ V, sends each fiber of the breve object at V to the fiber at V′ containing its
/// representative, checking l_g V′ ⊆ l_g V.
pub fn breve_restriction(
    group: &SampledGroup,
    poset: &ContextPoset,
    upper: ContextId,
    lower: ContextId,
    tol: &Tolerances,
) -> Result<Vec<usize>> {
    if !poset.leq(lower, upper) {
        return Err(Error::NotIncluded { lower, upper });
    }
    let up = breve_spectrum(group, poset, upper, tol)?;
    let low = breve_spectrum(group, poset, lower, tol)?;
    let mut out = Vec::with_capacity(up.fibers.len());
    for f in &up.fibers {
        let target = low
            .fibers
            .iter()
            .position(|g| f.orbit.iter().all(|i| g.orbit.contains(i)))
            .ok_or_else(|| Error::Invalid("orbit class does not descend to the smaller context".into()))?;
        let img = poset
            .image_under(&group.flow.unitary(group.samples[f.representative]), lower)?
            .ok_or_else(|| Error::PosetNotClosed(format!("image of context {lower} missing")))?;
        if !poset.leq(img, f.image) {
            return Err(Error::Invalid("image of the smaller context is not contained in the image".into()));
        }
        out.push(target);
    }
    Ok(out)
}

/// Internal C1: for every V and S, μ^ρ(S)(α_t V) is the same for all samples t.
pub fn check_internal_c1(
    state: &State,
    group: &SampledGroup,
    poset: &ContextPoset,
    subobjects: &[(String, ClopenSubobject)],
    tol: &Tolerances,
) -> Result<Report> {
    let us = group.unitaries();
    let mut contexts = Vec::new();
    'ctx: for v in 0..poset.len() {
        for u in &us {
            if poset.image_under(u, v)?.is_none() {
                continue 'ctx;
            }
        }
        contexts.push(v);
    }
    if contexts.is_empty() {
        return Err(Error::PosetNotClosed("no context has all its sampled images in the poset".into()));
    }
    let mut report = Report::new();
    for (name, s) in subobjects {
        for &v in &contexts {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for u in &us {
                let w = poset.image_under(u, v)?.expect("closed context");
                let m = measure_of(state, poset, s, w)?;
                lo = lo.min(m);
                hi = hi.max(m);
            }
            let mut e = ReportEntry::residual("internal-C1", hi - lo, tol.eps_measure).at(v).about(name.clone());
            e.lhs = [hi, 0.0];
            e.rhs = [lo, 0.0];
            report.push(e);
        }
    }
    Ok(report)
}

/// Internal C2 at V for each real sample t and strip offset γ.
///
/// At γ = β the operator-level identity tr(ϱ P_T α_{t+iβ}(P_S)) = tr(ϱ α_t(P_S) P_T) is
/// graded. At γ = 0 the switching diagram collapses to the real flow and is graded as
/// μ^ρ(T ∧ α_t*S)(V) = μ^ρ(T ∧ S)(V), with the meet taken between T_V and the twisted
/// component S_{α_t V}. Only T = Σ is graded there, where the identity is internal C1;
/// other T and other offsets are recorded ungraded.
#[allow(clippy::too_many_arguments)]
pub fn check_internal_c2(
    state: &State,
    group: &SampledGroup,
    poset: &ContextPoset,
    s: &ClopenSubobject,
    t_sub: &ClopenSubobject,
    v: ContextId,
    subject: &str,
    tol: &Tolerances,
) -> Result<Report> {
    state.require_faithful()?;
    let flow = &group.flow;
    let beta = flow.beta();
    let rho = state.density();
    let p_s = s.projection_at(poset, v)?;
    let p_t = t_sub.projection_at(poset, v)?;
    let mut report = Report::new();
    for &t in &group.samples {
        for &gamma in &group.gammas {
            let z = C64::new(t, gamma);
            let lhs = rho.matmul(p_t.matrix()).matmul(&flow.element(z).apply(p_s.matrix())).trace();
            if (gamma - beta).abs() <= PARAM_EPS {
                let rhs = rho.matmul(&flow.apply(t, p_s.matrix())).matmul(p_t.matrix()).trace();
                report.push(ReportEntry::new("internal-C2", lhs, rhs, tol.eps_order).at(v).about(subject).time(t).point(z));
            } else if gamma.abs() <= PARAM_EPS {
                let u = flow.unitary(t);
                let w = poset
                    .image_under(&u, v)?
                    .ok_or_else(|| Error::PosetNotClosed(format!("image of context {v} at t = {t} is not in the poset")))?;
                let twisted = s.projection_at(poset, w)?;
                let moved = state.prob(&proj_meet(&p_t, &twisted, tol)?);
                let still = state.prob(&proj_meet(&p_t, &p_s, tol)?);
                let mut e = ReportEntry::real("internal-C2-degenerate", moved, still, tol.eps_measure)
                    .at(v)
                    .about(subject)
                    .time(t)
                    .point(z);
                if p_t.rank() != p_t.dim() {
                    e = e.info();
                }
                report.push(e);
            } else {
                report.push(ReportEntry::new("internal-C2-strip", lhs, lhs, 0.0).info().at(v).about(subject).time(t).point(z));
            }
        }
    }
    Ok(report)
}
