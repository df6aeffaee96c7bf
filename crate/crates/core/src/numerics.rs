//! Dense complex matrices, a Hermitian eigensolver and projection lattice operations.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Numerical tolerances shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub eps_herm: f64,
    pub eps_idem: f64,
    pub eps_eig: f64,
    pub eps_order: f64,
    pub eps_measure: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps_herm: 1e-10,
            eps_idem: 1e-10,
            eps_eig: 1e-8,
            eps_order: 1e-8,
            eps_measure: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("eps_herm", self.eps_herm),
            ("eps_idem", self.eps_idem),
            ("eps_eig", self.eps_eig),
            ("eps_order", self.eps_order),
            ("eps_measure", self.eps_measure),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0 && v < 1.0) {
                return Err(Error::Invalid(format!("tolerance {name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// Overrides one tolerance by name.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "eps_herm" => self.eps_herm = value,
            "eps_idem" => self.eps_idem = value,
            "eps_eig" => self.eps_eig = value,
            "eps_order" => self.eps_order = value,
            "eps_measure" => self.eps_measure = value,
            _ => return Err(Error::Invalid(format!("unknown tolerance key `{key}`"))),
        }
        self.validate()
    }
}

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({})", self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        ComplexMatrix { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { dim, data }
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimMismatch { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(ComplexMatrix { dim, data })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> =
            rows.iter().map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect()).collect();
        Self::from_rows(&rows)
    }

    pub fn diag(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn real_diag(values: &[f64]) -> Self {
        let v: Vec<C64> = values.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::diag(&v)
    }

    /// |v><w|
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        assert_eq!(v.len(), w.len());
        Self::from_fn(v.len(), |i, j| v[i] * w[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        self.data.chunks(self.dim.max(1)).map(|c| c.to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        ComplexMatrix { dim: self.dim, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        ComplexMatrix { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                let o = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    o[j] += a * row[j];
                }
            }
        }
        ComplexMatrix { dim: n, data: out }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.dim;
        (0..n).map(|i| (0..n).map(|j| self.data[i * n + j] * v[j]).sum()).collect()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    /// tr(A* B), the Hilbert-Schmidt inner product.
    pub fn hs_inner(&self, other: &Self) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn hermitian_part(&self) -> Self {
        (self + &self.adjoint()).scale_re(0.5)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.adjoint()).frobenius_norm()
    }

    pub fn unitarity_defect(&self) -> f64 {
        (&self.adjoint().matmul(self) - &Self::identity(self.dim)).frobenius_norm()
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.dim, other.dim);
        Self::from_fn(n * m, |i, j| self[(i / m, j / m)] * other[(i % m, j % m)])
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.dim;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if a[(r, col)].norm() > a[(piv, col)].norm() {
                    piv = r;
                }
            }
            if a[(piv, col)].norm() <= 1e-14 * scale {
                return Err(Error::Singular);
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(piv * n + j, col * n + j);
                    inv.data.swap(piv * n + j, col * n + j);
                }
            }
            let d = a[(col, col)].inv();
            for j in 0..n {
                a[(col, j)] *= d;
                inv[(col, j)] *= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == ZERO {
                    continue;
                }
                for j in 0..n {
                    let (av, iv) = (a[(col, j)], inv[(col, j)]);
                    a[(r, j)] -= f * av;
                    inv[(r, j)] -= f * iv;
                }
            }
        }
        Ok(inv)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix { dim: self.dim, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// Eigen-decomposition of a Hermitian matrix; values ascending, vectors as columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigen {
    /// U f(D) U*
    pub fn map(&self, f: impl Fn(f64) -> C64) -> ComplexMatrix {
        let n = self.values.len();
        let fv: Vec<C64> = self.values.iter().map(|&x| f(x)).collect();
        let u = &self.vectors;
        ComplexMatrix::from_fn(n, |i, j| (0..n).map(|k| u[(i, k)] * fv[k] * u[(j, k)].conj()).sum())
    }

    /// Projection onto the span of the eigenvectors with the given indices.
    pub fn spectral_projection(&self, idx: &[usize]) -> ComplexMatrix {
        let n = self.values.len();
        let u = &self.vectors;
        ComplexMatrix::from_fn(n, |i, j| idx.iter().map(|&k| u[(i, k)] * u[(j, k)].conj()).sum())
    }
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi diagonalisation of a Hermitian matrix.
pub fn hermitian_eig(a: &ComplexMatrix, tol: &Tolerances) -> Result<Eigen> {
    if !a.is_finite() {
        return Err(Error::Invalid("matrix has non-finite entries".into()));
    }
    let defect = a.hermiticity_defect();
    if defect > tol.eps_herm * a.frobenius_norm().max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    jacobi(&a.hermitian_part())
}

fn off_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn jacobi(a0: &ComplexMatrix) -> Result<Eigen> {
    let n = a0.dim();
    let mut a = a0.clone();
    let mut v = ComplexMatrix::identity(n);
    let target = 1e-15 * a0.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut converged = off_norm(&a) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let phase = apq / r;
                let (app, aqq) = (a[(p, p)].re, a[(q, q)].re);
                let theta = 0.5 * (2.0 * r).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                // G restricted to (p, q) is [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                let gpp = C64::new(c, 0.0);
                let gpq = C64::new(s, 0.0);
                let gqp = -phase.conj() * s;
                let gqq = phase.conj() * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = akp * gpp + akq * gqp;
                    a[(k, q)] = akp * gpq + akq * gqq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
                    a[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = vkp * gpp + vkq * gqp;
                    v[(k, q)] = vkp * gpq + vkq * gqq;
                }
            }
        }
        converged = off_norm(&a) <= target;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        let mut vec = v.column(src);
        fix_phase(&mut vec);
        for (row, z) in vec.into_iter().enumerate() {
            vectors[(row, col)] = z;
        }
    }
    Ok(Eigen { values, vectors })
}

/// Makes the first largest-magnitude component real and positive.
fn fix_phase(v: &mut [C64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let k = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-12)).unwrap_or(0);
    let ph = v[k].conj() / v[k].norm();
    for z in v.iter_mut() {
        *z *= ph;
    }
}

/// e^{izH} for Hermitian H and complex z.
pub fn entire_function_of(h: &ComplexMatrix, z: C64, tol: &Tolerances) -> Result<ComplexMatrix> {
    let e = hermitian_eig(h, tol)?;
    Ok(e.map(|lam| (C64::i() * z * lam).exp()))
}

/// An orthogonal projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    matrix: ComplexMatrix,
    rank: usize,
}

impl Projection {
    pub fn new(m: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::NotProjection("non-finite entries".into()));
        }
        let herm = m.hermiticity_defect();
        if herm > tol.eps_herm {
            return Err(Error::NotProjection(format!("Hermiticity defect {herm:.3e}")));
        }
        let p = m.hermitian_part();
        let idem = (&p.matmul(&p) - &p).frobenius_norm();
        if idem > tol.eps_idem {
            return Err(Error::NotProjection(format!("idempotency defect {idem:.3e}")));
        }
        let rank = p.trace().re.round().max(0.0) as usize;
        Ok(Projection { matrix: p, rank })
    }

    /// Projection built from a matrix already known to be a projection up to rounding.
    pub(crate) fn from_clean(m: ComplexMatrix) -> Self {
        let p = m.hermitian_part();
        let rank = p.trace().re.round().max(0.0) as usize;
        Projection { matrix: p, rank }
    }

    pub fn zero(dim: usize) -> Self {
        Projection { matrix: ComplexMatrix::zeros(dim), rank: 0 }
    }

    pub fn identity(dim: usize) -> Self {
        Projection { matrix: ComplexMatrix::identity(dim), rank: dim }
    }

    /// Projection onto the span of orthonormal vectors.
    pub fn from_orthonormal(dim: usize, vectors: &[Vec<C64>]) -> Self {
        let mut m = ComplexMatrix::zeros(dim);
        for v in vectors {
            m = &m + &ComplexMatrix::outer(v, v);
        }
        Projection { matrix: m.hermitian_part(), rank: vectors.len() }
    }

    /// Projection onto the line through a (not necessarily normalised) vector.
    pub fn onto_vector(v: &[C64]) -> Result<Self> {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Invalid("zero vector".into()));
        }
        let u: Vec<C64> = v.iter().map(|z| z / norm).collect();
        Ok(Self::from_orthonormal(v.len(), &[u]))
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut m = ComplexMatrix::zeros(dim);
        m[(i, i)] = ONE;
        Projection { matrix: m, rank: 1 }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn complement(&self) -> Self {
        let n = self.dim();
        Projection { matrix: &ComplexMatrix::identity(n) - &self.matrix, rank: n - self.rank }
    }

    pub fn approx_eq(&self, other: &Self, tol: &Tolerances) -> bool {
        self.rank == other.rank && (&self.matrix - &other.matrix).frobenius_norm() <= tol.eps_order
    }

    pub fn is_zero(&self, tol: &Tolerances) -> bool {
        self.matrix.frobenius_norm() <= tol.eps_order
    }

    /// Orthonormal basis of the range, as columns of eigenvectors with eigenvalue near one.
    pub fn range_basis(&self, tol: &Tolerances) -> Result<Vec<Vec<C64>>> {
        let e = hermitian_eig(&self.matrix, tol)?;
        Ok((0..self.dim()).filter(|&k| e.values[k] > 0.5).map(|k| e.vectors.column(k)).collect())
    }

    /// Conjugation U P U*.
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Self {
        Projection::from_clean(u.matmul(&self.matrix).matmul(&u.adjoint()))
    }
}

/// P <= Q in the projection order.
pub fn proj_leq(p: &Projection, q: &Projection, tol: &Tolerances) -> bool {
    let n = p.dim();
    let iq = &ComplexMatrix::identity(n) - q.matrix();
    iq.matmul(p.matrix()).frobenius_norm() <= tol.eps_order
}

/// P ∧ Q via the null space of (I - P) + (I - Q).
pub fn proj_meet(p: &Projection, q: &Projection, tol: &Tolerances) -> Result<Projection> {
    if proj_leq(p, q, tol) {
        return Ok(p.clone());
    }
    if proj_leq(q, p, tol) {
        return Ok(q.clone());
    }
    let n = p.dim();
    let two = ComplexMatrix::identity(n).scale_re(2.0);
    let m = &(&two - p.matrix()) - q.matrix();
    let e = hermitian_eig(&m, tol)?;
    let idx: Vec<usize> = (0..n).filter(|&k| e.values[k] <= tol.eps_eig).collect();
    Ok(Projection::from_clean(e.spectral_projection(&idx)))
}

/// P ∨ Q = ¬(¬P ∧ ¬Q).
pub fn proj_join(p: &Projection, q: &Projection, tol: &Tolerances) -> Result<Projection> {
    Ok(proj_meet(&p.complement(), &q.complement(), tol)?.complement())
}
