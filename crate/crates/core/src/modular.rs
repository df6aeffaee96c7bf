//! Tomita-Takesaki data for finite-dimensional cyclic separating vectors and the induced
//! map on context posets.

use serde::{Deserialize, Serialize};

use crate::algebra::{Context, ContextId, ContextPoset};
use crate::error::{Error, Result};
use crate::measure::State;
use crate::numerics::{hermitian_eig, ComplexMatrix, Projection, Tolerances, C64, ONE, ZERO};
use crate::report::{Report, ReportEntry};

/// An antilinear map x ↦ M conj(x).
#[derive(Debug, Clone, PartialEq)]
pub struct AntiLinear {
    pub matrix: ComplexMatrix,
}

impl AntiLinear {
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let c: Vec<C64> = x.iter().map(|z| z.conj()).collect();
        self.matrix.apply(&c)
    }

    /// The antilinear adjoint, x ↦ Mᵀ conj(x).
    pub fn adjoint(&self) -> AntiLinear {
        AntiLinear { matrix: self.matrix.transpose() }
    }

    /// self ∘ other for another antilinear map, which is linear.
    pub fn compose(&self, other: &AntiLinear) -> ComplexMatrix {
        self.matrix.matmul(&other.matrix.conj())
    }

    /// self ∘ L for a linear L.
    pub fn after_linear(&self, l: &ComplexMatrix) -> AntiLinear {
        AntiLinear { matrix: self.matrix.matmul(&l.conj()) }
    }

    /// L ∘ self for a linear L.
    pub fn before_linear(&self, l: &ComplexMatrix) -> AntiLinear {
        AntiLinear { matrix: l.matmul(&self.matrix) }
    }

    /// Θ A Θ⁻¹ for an antiunitary Θ.
    pub fn conjugate(&self, a: &ComplexMatrix) -> ComplexMatrix {
        self.matrix.matmul(&a.conj()).matmul(&self.matrix.adjoint())
    }
}

/// S, Δ and J for a vector Ω and an algebra given by a linear basis acting on C^N.
#[derive(Debug, Clone)]
pub struct ModularData {
    pub omega: Vec<C64>,
    pub s: AntiLinear,
    pub delta: ComplexMatrix,
    pub j: AntiLinear,
    delta_half: ComplexMatrix,
    delta_minus_half: ComplexMatrix,
}

fn rank_of(vectors: &[Vec<C64>], tol: &Tolerances) -> Result<usize> {
    let k = vectors.len();
    let gram = ComplexMatrix::from_fn(k, |i, j| vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a.conj() * b).sum());
    let e = hermitian_eig(&gram.hermitian_part(), tol)?;
    let top = e.values.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    Ok(e.values.iter().filter(|&&x| x > tol.eps_eig * top).count())
}

impl ModularData {
    /// Defines S(AΩ) = A*Ω on the basis and extends antilinearly. The basis must have exactly
    /// N linearly independent vectors AΩ.
    pub fn new(basis: &[ComplexMatrix], omega: &[C64], tol: &Tolerances) -> Result<Self> {
        let n = omega.len();
        if basis.iter().any(|a| a.dim() != n) {
            return Err(Error::DimMismatch { expected: n, got: basis.iter().map(|a| a.dim()).find(|&d| d != n).unwrap_or(n) });
        }
        let images: Vec<Vec<C64>> = basis.iter().map(|a| a.apply(omega)).collect();
        let rank = rank_of(&images, tol)?;
        if rank != n || basis.len() != n {
            return Err(Error::NotCyclicSeparating { rank, needed: n });
        }
        let b = ComplexMatrix::from_fn(n, |i, k| images[k][i]);
        let c = ComplexMatrix::from_fn(n, |i, k| basis[k].adjoint().apply(omega)[i]);
        let s = AntiLinear { matrix: c.matmul(&b.conj().inverse()?) };
        let delta = s.adjoint().compose(&s).hermitian_part();
        let e = hermitian_eig(&delta, tol)?;
        if e.values[0] <= 0.0 {
            return Err(Error::NotCyclicSeparating { rank: e.values.iter().filter(|&&x| x > 0.0).count(), needed: n });
        }
        let delta_half = e.map(|x| C64::new(x.sqrt(), 0.0));
        let delta_minus_half = e.map(|x| C64::new(1.0 / x.sqrt(), 0.0));
        let j = s.after_linear(&delta_minus_half);
        Ok(ModularData { omega: omega.to_vec(), s, delta, j, delta_half, delta_minus_half })
    }

    /// Δ^{it}
    pub fn delta_power(&self, t: f64, tol: &Tolerances) -> Result<ComplexMatrix> {
        let e = hermitian_eig(&self.delta, tol)?;
        Ok(e.map(|x| C64::new(0.0, t * x.ln()).exp()))
    }

    /// Residuals of the structural identities of the polar decomposition.
    pub fn identities(&self, tol: &Tolerances) -> Report {
        let n = self.omega.len();
        let eps = tol.eps_herm;
        let id = ComplexMatrix::identity(n);
        let mut r = Report::new();
        let j_delta_half = self.j.after_linear(&self.delta_half);
        r.push(ReportEntry::residual("S=J*Delta^(1/2)", (&self.s.matrix - &j_delta_half.matrix).frobenius_norm(), eps));
        let delta_j = self.j.before_linear(&self.delta_minus_half);
        r.push(ReportEntry::residual("S=Delta^(-1/2)*J", (&self.s.matrix - &delta_j.matrix).frobenius_norm(), eps));
        r.push(ReportEntry::residual("Delta=S^*S", (&self.s.adjoint().compose(&self.s) - &self.delta).frobenius_norm(), eps));
        r.push(ReportEntry::residual("J^2=I", (&self.j.compose(&self.j) - &id).frobenius_norm(), eps));
        r.push(ReportEntry::residual("J=J^*", (&self.j.matrix - &self.j.adjoint().matrix).frobenius_norm(), eps));
        r.push(ReportEntry::residual("J antiunitary", self.j.matrix.unitarity_defect(), eps));
        let d_omega = self.delta.apply(&self.omega);
        r.push(ReportEntry::residual("Delta*Omega=Omega", vec_dist(&d_omega, &self.omega), eps));
        r.push(ReportEntry::residual("J*Omega=Omega", vec_dist(&self.j.apply(&self.omega), &self.omega), eps));
        r
    }

    /// Checks that J π(A) J commutes with π(B) for all basis elements A, B.
    pub fn commutant_swap_check(&self, basis: &[ComplexMatrix], tol: &Tolerances) -> Report {
        let mut worst: f64 = 0.0;
        for a in basis {
            let jaj = self.j.matrix.matmul(&a.conj()).matmul(&self.j.matrix.conj());
            for b in basis {
                worst = worst.max(jaj.commutator(b).frobenius_norm());
            }
        }
        let mut r = Report::new();
        r.push(ReportEntry::residual("JNJ in N'", worst, tol.eps_herm));
        r
    }
}

fn vec_dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// The GNS representation of a faithful state on M_n: H = M_n with ⟨x, y⟩ = tr(x* y),
/// π(A)x = Ax and Ω = ϱ^{1/2}. Vectors are flattened row-major.
#[derive(Debug, Clone)]
pub struct GnsSpace {
    pub n: usize,
    pub rho: ComplexMatrix,
    pub rho_eigenvalues: Vec<f64>,
    pub data: ModularData,
}

impl GnsSpace {
    pub fn new(state: &State, tol: &Tolerances) -> Result<Self> {
        state.require_faithful()?;
        let n = state.dim();
        let e = hermitian_eig(state.density(), tol)?;
        let root = e.map(|a| C64::new(a.max(0.0).sqrt(), 0.0));
        let omega = root.as_slice().to_vec();
        let basis = Self::matrix_units(n);
        let data = ModularData::new(&basis, &omega, tol)?;
        Ok(GnsSpace { n, rho: state.density().clone(), rho_eigenvalues: e.values, data })
    }

    /// π(E_ij) for all matrix units.
    pub fn matrix_units(n: usize) -> Vec<ComplexMatrix> {
        (0..n * n)
            .map(|k| {
                let mut e = ComplexMatrix::zeros(n);
                e[(k / n, k % n)] = ONE;
                Self::left(&e)
            })
            .collect()
    }

    /// π(A) = A ⊗ I in the row-major flattening.
    pub fn left(a: &ComplexMatrix) -> ComplexMatrix {
        a.kron(&ComplexMatrix::identity(a.dim()))
    }

    /// Closed-form residuals: Δ(x) = ϱxϱ⁻¹, J(x) = x*, spectrum of Δ = {a_i / a_j}.
    pub fn closed_form_report(&self, tol: &Tolerances) -> Result<Report> {
        let n = self.n;
        let inv = self.rho.inverse()?;
        let delta = self.rho.kron(&inv.transpose());
        let swap = ComplexMatrix::from_fn(n * n, |r, c| if r == (c % n) * n + c / n { ONE } else { ZERO });
        let mut report = self.data.identities(tol);
        report.push(ReportEntry::residual("Delta closed form", (&self.data.delta - &delta).frobenius_norm(), tol.eps_herm));
        report.push(ReportEntry::residual("J closed form", (&self.data.j.matrix - &swap).frobenius_norm(), tol.eps_herm));
        let mut ratios: Vec<f64> =
            self.rho_eigenvalues.iter().flat_map(|a| self.rho_eigenvalues.iter().map(move |b| a / b)).collect();
        ratios.sort_by(f64::total_cmp);
        let spec = hermitian_eig(&self.data.delta, tol)?.values;
        let dev = ratios.iter().zip(&spec).map(|(a, b)| (a - b).abs() / a.max(1.0)).fold(0.0, f64::max);
        report.push(ReportEntry::residual("Delta spectrum", dev, tol.eps_herm));
        let basis = Self::matrix_units(n);
        report.extend(self.data.commutant_swap_check(&basis, tol));
        Ok(report)
    }

    /// Δ^{iτ} π(A) Δ^{-iτ} against π(ϱ^{iτ} A ϱ^{-iτ}).
    pub fn modular_implementation_residual(&self, a: &ComplexMatrix, tau: f64, tol: &Tolerances) -> Result<f64> {
        let d = self.data.delta_power(tau, tol)?;
        let dm = self.data.delta_power(-tau, tol)?;
        let lhs = d.matmul(&Self::left(a)).matmul(&dm);
        let r = hermitian_eig(&self.rho, tol)?;
        let rp = r.map(|x| C64::new(0.0, tau * x.ln()).exp());
        let rhs = Self::left(&rp.matmul(a).matmul(&rp.adjoint()));
        Ok((&lhs - &rhs).frobenius_norm())
    }
}

/// The modular automorphism A ↦ ϱ^{-it/β} A ϱ^{it/β} of a faithful state.
pub fn modular_flow(state: &State, beta: f64, t: f64, a: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix> {
    state.require_faithful()?;
    let e = hermitian_eig(state.density(), tol)?;
    let u = e.map(|x| C64::new(0.0, -t / beta * x.ln()).exp());
    Ok(u.matmul(a).matmul(&u.adjoint()))
}

/// Checks cyclicity of Ω for a subalgebra of M_n acting in the GNS space of `state`.
pub fn check_cyclic_separating(state: &State, basis: &[ComplexMatrix], tol: &Tolerances) -> Result<()> {
    let n = state.dim();
    let e = hermitian_eig(state.density(), tol)?;
    let root = e.map(|a| C64::new(a.max(0.0).sqrt(), 0.0));
    let omega = root.as_slice().to_vec();
    let images: Vec<Vec<C64>> = basis.iter().map(|a| GnsSpace::left(a).apply(&omega)).collect();
    let rank = rank_of(&images, tol)?;
    if rank != n * n || basis.len() != rank {
        return Err(Error::NotCyclicSeparating { rank, needed: n * n });
    }
    Ok(())
}

/// Image of a context under A ↦ Θ A Θ⁻¹.
pub fn conjugate_context(theta: &AntiLinear, ctx: &Context, tol: &Tolerances) -> Result<Context> {
    let d = theta.matrix.unitarity_defect();
    if d > tol.eps_order {
        return Err(Error::NotUnitary(d));
    }
    let blocks: Vec<Projection> =
        ctx.blocks().iter().map(|q| Projection::new(theta.conjugate(q.matrix()), tol)).collect::<Result<_>>()?;
    Context::from_blocks(blocks, tol)
}

/// Verdicts for a map between finite posets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub order_preserving: bool,
    /// Preimages of principal lower sets are lower sets.
    pub lower_set_continuous: bool,
    pub injective: bool,
    pub order_reflecting: bool,
}

/// Order preservation and lower-set continuity of a map f between finite posets given by
/// their order relations.
pub fn check_order_continuity(
    src_leq: &dyn Fn(usize, usize) -> bool,
    src_len: usize,
    map: &[usize],
    tgt_leq: &dyn Fn(usize, usize) -> bool,
    tgt_len: usize,
) -> OrderReport {
    let mut order_preserving = true;
    let mut order_reflecting = true;
    let mut injective = true;
    for a in 0..src_len {
        for b in 0..src_len {
            let s = src_leq(a, b);
            let t = tgt_leq(map[a], map[b]);
            order_preserving &= !s || t;
            order_reflecting &= !t || s;
            if a != b && map[a] == map[b] {
                injective = false;
            }
        }
    }
    let mut lower_set_continuous = true;
    for w in 0..tgt_len {
        let pre: Vec<usize> = (0..src_len).filter(|&a| tgt_leq(map[a], w)).collect();
        for &a in &pre {
            for b in 0..src_len {
                if src_leq(b, a) && !pre.contains(&b) {
                    lower_set_continuous = false;
                }
            }
        }
    }
    OrderReport { order_preserving, lower_set_continuous, injective, order_reflecting }
}

/// The map V ↦ ΘVΘ⁻¹ on a context poset, with images located in `target` (or collected into
/// a new poset when no target is given).
#[derive(Debug, Clone)]
pub struct JMap {
    pub images: Vec<ContextId>,
    pub target: ContextPoset,
    pub order: OrderReport,
}

pub fn jmap_on_contexts(source: &ContextPoset, theta: &AntiLinear, target: Option<&ContextPoset>, tol: &Tolerances) -> Result<JMap> {
    let mut tgt = match target {
        Some(t) => t.clone(),
        None => ContextPoset::new(source.dim(), tol),
    };
    let mut images = Vec::with_capacity(source.len());
    for (v, ctx) in source.contexts().iter().enumerate() {
        let img = conjugate_context(theta, ctx, tol)?;
        let id = match target {
            Some(_) => tgt.find(&img).ok_or_else(|| Error::InvalidImage(format!("image of context {v}")))?,
            None => tgt.insert(img)?.0,
        };
        images.push(id);
    }
    let order = check_order_continuity(&|a, b| source.leq(a, b), source.len(), &images, &|a, b| tgt.leq(a, b), tgt.len());
    Ok(JMap { images, target: tgt, order })
}

/// M₂ ⊗ M₂ with Ω the maximally entangled vector: J = swap ∘ conjugation.
pub fn bipartite_conjugation(d: usize) -> AntiLinear {
    let n = d * d;
    AntiLinear { matrix: ComplexMatrix::from_fn(n, |r, c| if r == (c % d) * d + c / d { ONE } else { ZERO }) }
}

/// Left-acting basis A ⊗ I of M_d ⊗ I.
pub fn left_factor_basis(d: usize) -> Vec<ComplexMatrix> {
    (0..d * d)
        .map(|k| {
            let mut e = ComplexMatrix::zeros(d);
            e[(k / d, k % d)] = ONE;
            e.kron(&ComplexMatrix::identity(d))
        })
        .collect()
}

/// Maximally entangled unit vector in C^d ⊗ C^d.
pub fn maximally_entangled(d: usize) -> Vec<C64> {
    let c = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    (0..d * d).map(|k| if k / d == k % d { c } else { ZERO }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gns_identities_for_diagonal_state() {
        let t = Tolerances::default();
        let s = State::from_spectrum(&[0.5, 0.3, 0.2], &t).unwrap();
        let g = GnsSpace::new(&s, &t).unwrap();
        let r = g.closed_form_report(&t).unwrap();
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn diagonal_subalgebra_is_not_cyclic() {
        let t = Tolerances::default();
        let s = State::from_spectrum(&[0.6, 0.4], &t).unwrap();
        let basis = vec![ComplexMatrix::real_diag(&[1.0, 0.0]), ComplexMatrix::real_diag(&[0.0, 1.0])];
        assert_eq!(check_cyclic_separating(&s, &basis, &t).unwrap_err(), Error::NotCyclicSeparating { rank: 2, needed: 4 });
    }

    #[test]
    fn bipartite_conjugation_is_modular() {
        let t = Tolerances::default();
        let data = ModularData::new(&left_factor_basis(2), &maximally_entangled(2), &t).unwrap();
        assert!((&data.j.matrix - &bipartite_conjugation(2).matrix).frobenius_norm() < 1e-12);
    }

    #[test]
    fn order_checks_detect_reversal() {
        // chain 0 ≤ 1 mapped onto the reversed chain
        let leq = |a: usize, b: usize| a <= b;
        let r = check_order_continuity(&leq, 2, &[1, 0], &leq, 2);
        assert!(!r.order_preserving && !r.lower_set_continuous);
        let r = check_order_continuity(&leq, 2, &[0, 1], &leq, 2);
        assert!(r.order_preserving && r.lower_set_continuous && r.injective && r.order_reflecting);
    }
}
