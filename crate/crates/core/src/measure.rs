//! States, the probability measures they induce on clopen sub-objects, and reconstruction
//! of a density matrix from a measure table.

use serde::{Deserialize, Serialize};

use crate::algebra::{ContextId, ContextPoset};
use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, ComplexMatrix, Projection, Tolerances, C64};
use crate::presheaf::{pullback_component, s_inverse, BlockSet, ClopenSubobject};
use crate::report::{Report, ReportEntry};

/// A density matrix.
#[derive(Debug, Clone)]
pub struct State {
    density: ComplexMatrix,
    min_eigenvalue: f64,
    faithful: bool,
}

impl State {
    pub fn new(density: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        if !density.is_finite() {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        let herm = density.hermiticity_defect();
        if herm > tol.eps_herm {
            return Err(Error::InvalidState(format!("not Hermitian ({herm:.3e})")));
        }
        let density = density.hermitian_part();
        let tr = density.trace().re;
        if (tr - 1.0).abs() > tol.eps_eig {
            return Err(Error::InvalidState(format!("trace is {tr}")));
        }
        let e = hermitian_eig(&density, tol)?;
        let min_eigenvalue = e.values[0];
        if min_eigenvalue < -tol.eps_eig {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eigenvalue:.3e}")));
        }
        Ok(State { density, min_eigenvalue, faithful: min_eigenvalue > tol.eps_eig })
    }

    /// diag(values) in the standard basis.
    pub fn from_spectrum(values: &[f64], tol: &Tolerances) -> Result<Self> {
        Self::new(ComplexMatrix::real_diag(values), tol)
    }

    /// |ψ><ψ| for a normalised copy of ψ.
    pub fn pure(psi: &[C64], tol: &Tolerances) -> Result<Self> {
        let p = Projection::onto_vector(psi).map_err(|_| Error::InvalidState("zero vector".into()))?;
        Self::new(p.into_matrix(), tol)
    }

    pub fn density(&self) -> &ComplexMatrix {
        &self.density
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn is_faithful(&self) -> bool {
        self.faithful
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn require_faithful(&self) -> Result<()> {
        if self.faithful {
            Ok(())
        } else {
            Err(Error::NotFaithful(self.min_eigenvalue))
        }
    }

    /// tr(ϱ A)
    pub fn expectation(&self, a: &ComplexMatrix) -> C64 {
        self.density.matmul(a).trace()
    }

    pub fn prob(&self, p: &Projection) -> f64 {
        self.expectation(p.matrix()).re
    }

    /// The state ρ∘Ad(U*), with density U ϱ U*.
    pub fn conjugated(&self, u: &ComplexMatrix) -> State {
        State {
            density: u.matmul(&self.density).matmul(&u.adjoint()).hermitian_part(),
            min_eigenvalue: self.min_eigenvalue,
            faithful: self.faithful,
        }
    }
}

/// μ^ρ(S)(V) = tr(ϱ 𝔖⁻¹(S_V)).
pub fn measure_of(state: &State, poset: &ContextPoset, s: &ClopenSubobject, v: ContextId) -> Result<f64> {
    if state.dim() != poset.dim() {
        return Err(Error::DimMismatch { expected: poset.dim(), got: state.dim() });
    }
    Ok(state.prob(&s.projection_at(poset, v)?))
}

/// tr(ϱ 𝔖⁻¹(set)) at a context.
pub fn measure_of_set(state: &State, poset: &ContextPoset, v: ContextId, set: BlockSet) -> f64 {
    state.prob(&s_inverse(poset.context(v), set))
}

/// A [0, 1]-valued function on the contexts of a sub-object domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSection {
    pub domain: Vec<ContextId>,
    pub values: Vec<f64>,
}

impl GlobalSection {
    pub fn get(&self, v: ContextId) -> Option<f64> {
        self.domain.binary_search(&v).ok().map(|i| self.values[i])
    }

    /// Largest violation of V′ ⊆ V ⇒ γ(V′) ≥ γ(V).
    pub fn order_reversal_defect(&self, poset: &ContextPoset) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, &v) in self.domain.iter().enumerate() {
            for (b, &w) in self.domain.iter().enumerate() {
                if a != b && poset.leq(w, v) {
                    worst = worst.max(self.values[a] - self.values[b]);
                }
            }
        }
        worst
    }
}

pub fn measure_section(state: &State, poset: &ContextPoset, s: &ClopenSubobject) -> Result<GlobalSection> {
    let values = s.domain().iter().map(|&v| measure_of(state, poset, s, v)).collect::<Result<Vec<_>>>()?;
    Ok(GlobalSection { domain: s.domain().to_vec(), values })
}

/// Evaluates the defining properties of μ^ρ on pairs of sub-objects, context by context.
///
/// Entries: `measure-empty`, `measure-top`, `measure-disjoint-additivity`,
/// `measure-modularity`, `measure-excluded-middle` (graded as ≤ 1, with the gap recorded
/// in `rhs`), `measure-family-additivity` and `measure-order-reversing`.
pub fn verify_measure_properties(
    state: &State,
    poset: &ContextPoset,
    pairs: &[(ClopenSubobject, ClopenSubobject)],
    tol: &Tolerances,
) -> Result<Report> {
    let eps = tol.eps_measure;
    let mut report = Report::new();
    for (k, (s, t)) in pairs.iter().enumerate() {
        let tag = format!("pair{k}");
        let dom = s.domain().to_vec();
        if t.domain() != dom.as_slice() {
            return Err(Error::DomainMismatch);
        }
        let empty = ClopenSubobject::empty(&dom);
        let top = ClopenSubobject::full(poset, &dom);
        let ns = s.negation(poset)?;
        let nt = t.negation(poset)?;
        let disjoint = if s.meet(t)?.sets().iter().all(|&x| x == 0) { s.clone() } else { s.meet(&nt)? };
        let family = [s.meet(t)?, s.meet(&nt)?, ns.meet(t)?, ns.meet(&nt)?];
        let family_join = family.iter().skip(1).try_fold(family[0].clone(), |acc, f| acc.join(f))?;
        let mu = |x: &ClopenSubobject, v: ContextId| measure_of(state, poset, x, v);
        for &v in &dom {
            let e = |r: ReportEntry| r.at(v).about(tag.clone());
            report.push(e(ReportEntry::real("measure-empty", mu(&empty, v)?, 0.0, eps)));
            report.push(e(ReportEntry::real("measure-top", mu(&top, v)?, 1.0, eps)));
            report.push(e(ReportEntry::real(
                "measure-disjoint-additivity",
                mu(&disjoint.join(t)?, v)?,
                mu(&disjoint, v)? + mu(t, v)?,
                eps,
            )));
            report.push(e(ReportEntry::real(
                "measure-modularity",
                mu(&s.join(t)?, v)? + mu(&s.meet(t)?, v)?,
                mu(s, v)? + mu(t, v)?,
                eps,
            )));
            let em = mu(&s.join(&ns)?, v)?;
            report.push(e(ReportEntry::at_least("measure-excluded-middle", 1.0, em, eps)));
            let sum: f64 = family.iter().map(|f| mu(f, v)).sum::<Result<f64>>()?;
            report.push(e(ReportEntry::real("measure-family-additivity", mu(&family_join, v)?, sum, eps)));
        }
        for (name, x) in [("S", s), ("T", t)] {
            let sec = measure_section(state, poset, x)?;
            report.push(
                ReportEntry::residual("measure-order-reversing", sec.order_reversal_defect(poset), eps)
                    .about(format!("{tag}/{name}")),
            );
        }
    }
    Ok(report)
}

/// Smallest value of μ(S ∨ ¬S)(V) over all contexts, with the context attaining it.
pub fn excluded_middle_gap(state: &State, poset: &ContextPoset, s: &ClopenSubobject) -> Result<(ContextId, f64)> {
    let em = s.join(&s.negation(poset)?)?;
    let sec = measure_section(state, poset, &em)?;
    let (i, v) = sec
        .values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Invalid("empty domain".into()))?;
    Ok((sec.domain[i], *v))
}

/// Compares μ^ρ(α*S) with μ^{ρ∘α⁻¹}(S) at every context whose image under U lies in the poset.
pub fn group_action_check(
    state: &State,
    poset: &ContextPoset,
    u: &ComplexMatrix,
    s: &ClopenSubobject,
    subject: &str,
    tol: &Tolerances,
) -> Result<Report> {
    let moved = state.conjugated(u);
    let mut report = Report::new();
    for &v in s.domain() {
        let set = match pullback_component(poset, u, s, v) {
            Ok(set) => set,
            Err(Error::PosetNotClosed(_)) => continue,
            Err(e) => return Err(e),
        };
        let lhs = measure_of_set(state, poset, v, set);
        let rhs = measure_of(&moved, poset, s, v)?;
        report.push(ReportEntry::real("group-action", lhs, rhs, tol.eps_measure).at(v).about(subject));
    }
    if report.entries.is_empty() {
        return Err(Error::PosetNotClosed("no context has its image in the poset".into()));
    }
    Ok(report)
}

/// One row of an abstract measure table: the value assigned to the set at a context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEntry {
    pub context: ContextId,
    pub set: BlockSet,
    pub value: f64,
}

/// Tabulates μ^ρ on every lattice element of every context.
pub fn measure_table(state: &State, poset: &ContextPoset) -> Vec<MeasureEntry> {
    let mut out = Vec::new();
    for v in 0..poset.len() {
        for set in 0..=poset.context(v).full_mask() {
            out.push(MeasureEntry { context: v, set, value: measure_of_set(state, poset, v, set) });
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionDiagnostics {
    pub spanned_dim: usize,
    pub total_dim: usize,
    pub uniquely_determined: bool,
    pub residual: f64,
    pub clipped_mass: f64,
    pub distinct_projections: usize,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub state: State,
    pub diagnostics: ReconstructionDiagnostics,
}

/// Recovers a density matrix from a table of measure values on every context lattice.
pub fn state_from_measure(poset: &ContextPoset, table: &[MeasureEntry], tol: &Tolerances) -> Result<Reconstruction> {
    let n = poset.dim();
    let eps = tol.eps_measure;
    let mut values: Vec<Vec<Option<f64>>> =
        (0..poset.len()).map(|v| vec![None; 1usize << poset.context(v).num_blocks()]).collect();
    for e in table {
        if e.context >= poset.len() {
            return Err(Error::Invalid(format!("table refers to unknown context {}", e.context)));
        }
        let slot = values[e.context]
            .get_mut(e.set as usize)
            .ok_or_else(|| Error::Invalid(format!("set {:#b} is not in the lattice of context {}", e.set, e.context)))?;
        if !(e.value.is_finite() && (-eps..=1.0 + eps).contains(&e.value)) {
            return Err(Error::Invalid(format!("table value {} outside [0, 1]", e.value)));
        }
        if slot.replace(e.value).is_some_and(|old| (old - e.value).abs() > eps) {
            return Err(Error::InconsistentTable(format!(
                "context {} set {:#b} listed twice with different values",
                e.context, e.set
            )));
        }
    }
    let mut full: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    for (v, row) in values.iter().enumerate() {
        let row: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(set, x)| {
                x.ok_or_else(|| Error::Invalid(format!("table lacks set {set:#b} at context {v}")))
            })
            .collect::<Result<_>>()?;
        full.push(row);
    }

    // the same projection must receive the same value in every context
    let mut distinct: Vec<(Projection, f64, ContextId)> = Vec::new();
    for (v, row) in full.iter().enumerate() {
        let ctx = poset.context(v);
        for (set, &value) in row.iter().enumerate() {
            let p = ctx.projection_of(set as u64);
            match distinct.iter().find(|(q, _, _)| q.approx_eq(&p, tol)) {
                Some((_, other, w)) if (other - value).abs() > eps => {
                    return Err(Error::InconsistentTable(format!(
                        "projection with set {set:#b} at context {v} has value {value}, but {other} at context {w}"
                    )));
                }
                Some(_) => {}
                None => distinct.push((p, value, v)),
            }
        }
    }
    for (v, row) in full.iter().enumerate() {
        if (row[0]).abs() > eps {
            return Err(Error::NotAdditive(format!("empty set has value {} at context {v}", row[0])));
        }
        let k = poset.context(v).num_blocks();
        for set in 1..row.len() {
            let sum: f64 = (0..k).filter(|i| set >> i & 1 == 1).map(|i| row[1 << i]).sum();
            if (row[set] - sum).abs() > eps {
                return Err(Error::NotAdditive(format!(
                    "context {v}: value {} of set {set:#b} differs from the sum {sum} over its blocks",
                    row[set]
                )));
            }
        }
        if (row[row.len() - 1] - 1.0).abs() > eps {
            return Err(Error::NotAdditive(format!("context {v}: total mass {}", row[row.len() - 1])));
        }
    }

    // least squares over the real coordinates of a Hermitian matrix
    let basis = hermitian_basis(n);
    let m = basis.len();
    let rows: Vec<Vec<f64>> =
        distinct.iter().map(|(p, _, _)| basis.iter().map(|b| b.matmul(p.matrix()).trace().re).collect()).collect();
    let rhs: Vec<f64> = distinct.iter().map(|d| d.1).collect();
    let normal = ComplexMatrix::from_fn(m, |i, j| C64::new(rows.iter().map(|r| r[i] * r[j]).sum(), 0.0));
    let atb: Vec<f64> = (0..m).map(|i| rows.iter().zip(&rhs).map(|(r, b)| r[i] * b).sum()).collect();
    let e = hermitian_eig(&normal, tol)?;
    let top = e.values.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; m];
    let mut spanned = 0;
    for k in 0..m {
        if e.values[k] <= 1e-10 * top {
            continue;
        }
        spanned += 1;
        let vk: Vec<f64> = e.vectors.column(k).iter().map(|z| z.re).collect();
        let coef = vk.iter().zip(&atb).map(|(a, b)| a * b).sum::<f64>() / e.values[k];
        for (xi, vi) in x.iter_mut().zip(&vk) {
            *xi += coef * vi;
        }
    }
    let residual = rows
        .iter()
        .zip(&rhs)
        .map(|(r, b)| (r.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>() - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut rho = ComplexMatrix::zeros(n);
    for (b, c) in basis.iter().zip(&x) {
        rho = &rho + &b.scale_re(*c);
    }
    let e = hermitian_eig(&rho.hermitian_part(), tol)?;
    if e.values[0] < -1e-6 {
        return Err(Error::Infeasible(e.values[0]));
    }
    let clipped_mass: f64 = e.values.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    let clipped = e.map(|l| C64::new(l.max(0.0), 0.0));
    let tr = clipped.trace().re;
    let state = State::new(clipped.scale_re(1.0 / tr), tol)?;
    Ok(Reconstruction {
        state,
        diagnostics: ReconstructionDiagnostics {
            spanned_dim: spanned,
            total_dim: m,
            uniquely_determined: spanned == m,
            residual,
            clipped_mass,
            distinct_projections: distinct.len(),
        },
    })
}

/// Hilbert-Schmidt orthonormal basis of the real space of Hermitian n×n matrices.
fn hermitian_basis(n: usize) -> Vec<ComplexMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut m = ComplexMatrix::zeros(n);
            match i.cmp(&j) {
                std::cmp::Ordering::Equal => m[(i, i)] = C64::new(1.0, 0.0),
                std::cmp::Ordering::Less => {
                    m[(i, j)] = C64::new(s, 0.0);
                    m[(j, i)] = C64::new(s, 0.0);
                }
                std::cmp::Ordering::Greater => {
                    m[(i, j)] = C64::new(0.0, s);
                    m[(j, i)] = C64::new(0.0, -s);
                }
            }
            out.push(m);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Context;
    use crate::numerics::ZERO;

    fn example_poset() -> (ContextPoset, Tolerances) {
        let t = Tolerances::default();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = Projection::onto_vector(&[C64::new(s, 0.0), C64::new(s, 0.0), ZERO]).unwrap();
        let mut poset = ContextPoset::new(3, &t);
        poset.insert(Context::binary(&p, &t).unwrap()).unwrap();
        (poset, t)
    }

    #[test]
    fn example_measures() {
        let (poset, t) = example_poset();
        let rho = State::from_spectrum(&[0.5, 0.3, 0.2], &t).unwrap();
        let s1 = ClopenSubobject::new(&poset, vec![(0, 0b01)]).unwrap();
        let s2 = ClopenSubobject::new(&poset, vec![(0, 0b10)]).unwrap();
        assert!((measure_of(&rho, &poset, &s1, 0).unwrap() - 0.4).abs() < 1e-15);
        assert!((measure_of(&rho, &poset, &s2, 0).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn invalid_states_rejected() {
        let t = Tolerances::default();
        assert!(State::from_spectrum(&[0.5, 0.6], &t).is_err());
        assert!(State::from_spectrum(&[1.2, -0.2], &t).is_err());
        let pure = State::from_spectrum(&[1.0, 0.0], &t).unwrap();
        assert!(!pure.is_faithful());
        assert!(matches!(pure.require_faithful(), Err(Error::NotFaithful(_))));
    }

    #[test]
    fn single_context_reconstruction_is_underdetermined() {
        let (poset, t) = example_poset();
        let rho = State::from_spectrum(&[0.5, 0.3, 0.2], &t).unwrap();
        let rec = state_from_measure(&poset, &measure_table(&rho, &poset), &t).unwrap();
        assert!(!rec.diagnostics.uniquely_determined);
        assert_eq!(rec.diagnostics.spanned_dim, 2);
        assert!(rec.diagnostics.residual < 1e-12);
    }

    #[test]
    fn non_additive_table_rejected() {
        let (poset, t) = example_poset();
        let table = vec![
            MeasureEntry { context: 0, set: 0, value: 0.0 },
            MeasureEntry { context: 0, set: 1, value: 0.5 },
            MeasureEntry { context: 0, set: 2, value: 0.6 },
            MeasureEntry { context: 0, set: 3, value: 1.0 },
        ];
        assert!(matches!(state_from_measure(&poset, &table, &t), Err(Error::NotAdditive(_))));
    }
}
