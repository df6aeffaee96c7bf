//! Abelian subalgebras (contexts), their projection lattices and the context poset.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, proj_leq, ComplexMatrix, Projection, Tolerances, C64, ZERO};

pub type ContextId = usize;

/// Largest number of blocks for which the full projection lattice is materialised.
pub const MAX_LATTICE_BLOCKS: usize = 20;

/// A unital abelian subalgebra, stored as its minimal projections.
#[derive(Debug, Clone)]
pub struct Context {
    dim: usize,
    blocks: Vec<Projection>,
    fingerprint: u64,
}

fn quantize(x: f64, step: f64) -> i64 {
    (x / step).round() as i64
}

fn block_key(p: &Projection) -> (usize, usize, Vec<i64>) {
    let m = p.matrix();
    let n = m.dim();
    let first = (0..n).find(|&i| m[(i, i)].re > 1e-9).unwrap_or(n);
    let entries = m.as_slice().iter().flat_map(|z| [quantize(z.re, 1e-9), quantize(z.im, 1e-9)]).collect();
    (first, p.rank(), entries)
}

fn fnv1a(words: impl Iterator<Item = i64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl Context {
    /// Builds a context from pairwise orthogonal, nonzero projections summing to the identity.
    pub fn from_blocks(blocks: Vec<Projection>, tol: &Tolerances) -> Result<Self> {
        let dim = blocks.first().map(|b| b.dim()).ok_or(Error::TrivialAlgebra)?;
        if blocks.len() < 2 {
            return Err(Error::TrivialAlgebra);
        }
        let mut sum = ComplexMatrix::zeros(dim);
        for (i, b) in blocks.iter().enumerate() {
            if b.dim() != dim {
                return Err(Error::DimMismatch { expected: dim, got: b.dim() });
            }
            if b.rank() == 0 || b.is_zero(tol) {
                return Err(Error::Invalid("context block is zero".into()));
            }
            for c in &blocks[i + 1..] {
                let overlap = b.matrix().matmul(c.matrix()).frobenius_norm();
                if overlap > tol.eps_order {
                    return Err(Error::Invalid(format!("context blocks overlap ({overlap:.3e})")));
                }
            }
            sum = &sum + b.matrix();
        }
        let defect = (&sum - &ComplexMatrix::identity(dim)).frobenius_norm();
        if defect > tol.eps_order {
            return Err(Error::Invalid(format!("context blocks do not sum to the identity ({defect:.3e})")));
        }
        let mut keyed: Vec<_> = blocks.into_iter().map(|b| (block_key(&b), b)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        let fingerprint = fnv1a(keyed.iter().flat_map(|(_, b)| {
            let coarse: Vec<i64> = std::iter::once(b.rank() as i64)
                .chain(b.matrix().as_slice().iter().flat_map(|z| [quantize(z.re, 1e-6), quantize(z.im, 1e-6)]))
                .collect();
            coarse.into_iter()
        }));
        Ok(Context { dim, blocks: keyed.into_iter().map(|(_, b)| b).collect(), fingerprint })
    }

    /// The maximal abelian subalgebra of diagonal matrices.
    pub fn diagonal(dim: usize, tol: &Tolerances) -> Result<Self> {
        Self::from_blocks((0..dim).map(|i| Projection::basis(dim, i)).collect(), tol)
    }

    /// The two-block context {P, I - P}.
    pub fn binary(p: &Projection, tol: &Tolerances) -> Result<Self> {
        Self::from_blocks(vec![p.clone(), p.complement()], tol)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Projection] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn rank_signature(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.blocks.iter().map(|b| b.rank()).collect();
        r.sort_unstable();
        r
    }

    /// For each block of `self`, the index of the equal block of `other`.
    pub fn block_correspondence(&self, other: &Context, tol: &Tolerances) -> Option<Vec<usize>> {
        if self.dim != other.dim || self.rank_signature() != other.rank_signature() {
            return None;
        }
        let mut used = vec![false; other.blocks.len()];
        let mut out = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let j = (0..other.blocks.len()).find(|&j| !used[j] && b.approx_eq(&other.blocks[j], tol))?;
            used[j] = true;
            out.push(j);
        }
        Some(out)
    }

    pub fn same_as(&self, other: &Context, tol: &Tolerances) -> bool {
        self.block_correspondence(other, tol).is_some()
    }

    /// Sum of the blocks whose bit is set in `mask`.
    pub fn projection_of(&self, mask: u64) -> Projection {
        let mut m = ComplexMatrix::zeros(self.dim);
        for (i, b) in self.blocks.iter().enumerate() {
            if mask >> i & 1 == 1 {
                m = &m + b.matrix();
            }
        }
        Projection::from_clean(m)
    }

    pub fn full_mask(&self) -> u64 {
        (1u64 << self.blocks.len()) - 1
    }
}

/// Joint spectral decomposition of commuting normal operators.
pub fn context_from_operators(ops: &[ComplexMatrix], tol: &Tolerances) -> Result<Context> {
    let dim = ops.first().map(|m| m.dim()).ok_or(Error::TrivialAlgebra)?;
    for (i, a) in ops.iter().enumerate() {
        if a.dim() != dim {
            return Err(Error::DimMismatch { expected: dim, got: a.dim() });
        }
        if !a.is_finite() {
            return Err(Error::Invalid("operator has non-finite entries".into()));
        }
        let scale = a.frobenius_norm().max(1.0);
        let normal = (&a.matmul(&a.adjoint()) - &a.adjoint().matmul(a)).frobenius_norm();
        if normal > tol.eps_order * scale * scale {
            return Err(Error::NotNormal(normal));
        }
        for b in &ops[i + 1..] {
            let comm = a.commutator(b).frobenius_norm();
            if comm > tol.eps_order * scale * b.frobenius_norm().max(1.0) {
                return Err(Error::NonCommuting(comm));
            }
        }
    }
    let mut parts: Vec<Vec<Vec<C64>>> = vec![(0..dim)
        .map(|i| {
            let mut e = vec![ZERO; dim];
            e[i] = C64::new(1.0, 0.0);
            e
        })
        .collect()];
    for a in ops {
        let re = a.hermitian_part();
        let im = (a - &a.adjoint()).scale(C64::new(0.0, -0.5));
        for h in [re, im] {
            parts = refine(parts, &h, tol)?;
        }
    }
    if parts.len() < 2 {
        return Err(Error::TrivialAlgebra);
    }
    let blocks = parts.iter().map(|vs| Projection::from_orthonormal(dim, vs)).collect();
    Context::from_blocks(blocks, tol)
}

fn refine(parts: Vec<Vec<Vec<C64>>>, h: &ComplexMatrix, tol: &Tolerances) -> Result<Vec<Vec<Vec<C64>>>> {
    let threshold = tol.eps_eig * h.frobenius_norm().max(1.0);
    let mut out = Vec::new();
    for w in parts {
        let r = w.len();
        let hw: Vec<Vec<C64>> = w.iter().map(|v| h.apply(v)).collect();
        let m = ComplexMatrix::from_fn(r, |i, j| w[i].iter().zip(&hw[j]).map(|(a, b)| a.conj() * b).sum());
        let e = hermitian_eig(&m.hermitian_part(), tol)?;
        let mut start = 0;
        for k in 1..=r {
            if k == r || e.values[k] - e.values[k - 1] > threshold {
                let cluster: Vec<Vec<C64>> = (start..k)
                    .map(|c| {
                        let coeffs = e.vectors.column(c);
                        (0..h.dim()).map(|x| (0..r).map(|y| w[y][x] * coeffs[y]).sum()).collect()
                    })
                    .collect();
                out.push(cluster);
                start = k;
            }
        }
    }
    Ok(out)
}

/// All 2^k projections of a context, indexed by block bit mask.
pub fn projection_lattice(ctx: &Context) -> Result<Vec<Projection>> {
    let k = ctx.num_blocks();
    if k > MAX_LATTICE_BLOCKS {
        return Err(Error::LatticeTooLarge(k));
    }
    Ok((0..1u64 << k).map(|m| ctx.projection_of(m)).collect())
}

/// Coefficients of `a` in the block basis, failing if `a` is not in the algebra.
pub fn block_coefficients(ctx: &Context, a: &ComplexMatrix, tol: &Tolerances) -> Result<Vec<C64>> {
    if a.dim() != ctx.dim() {
        return Err(Error::DimMismatch { expected: ctx.dim(), got: a.dim() });
    }
    let coeffs: Vec<C64> =
        ctx.blocks().iter().map(|q| q.matrix().matmul(a).trace() / q.rank() as f64).collect();
    let mut back = ComplexMatrix::zeros(ctx.dim());
    for (q, c) in ctx.blocks().iter().zip(&coeffs) {
        back = &back + &q.matrix().scale(*c);
    }
    let res = (&back - a).frobenius_norm();
    if res > tol.eps_order * a.frobenius_norm().max(1.0) {
        return Err(Error::NotInAlgebra(res));
    }
    Ok(coeffs)
}

/// Character `lambda` (a block index) evaluated on an element of the algebra.
pub fn evaluate(ctx: &Context, lambda: usize, a: &ComplexMatrix, tol: &Tolerances) -> Result<C64> {
    if lambda >= ctx.num_blocks() {
        return Err(Error::Invalid(format!("no character {lambda}")));
    }
    Ok(block_coefficients(ctx, a, tol)?[lambda])
}

fn vec_to_matrix(v: &[C64], n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, |i, j| v[i * n + j])
}

/// Orthonormal basis (Hilbert-Schmidt) of the commutant of a set of matrices.
pub fn commutant(generators: &[ComplexMatrix], tol: &Tolerances) -> Result<Vec<ComplexMatrix>> {
    let n = generators.first().map(|g| g.dim()).ok_or_else(|| Error::Invalid("no generators".into()))?;
    let nn = n * n;
    let mut gram = ComplexMatrix::zeros(nn);
    for b in generators {
        // column (i, j) of L_B is vec(E_ij B - B E_ij)
        let cols: Vec<Vec<C64>> = (0..nn)
            .map(|c| {
                let mut e = ComplexMatrix::zeros(n);
                e[(c / n, c % n)] = C64::new(1.0, 0.0);
                e.commutator(b).as_slice().to_vec()
            })
            .collect();
        for x in 0..nn {
            for y in x..nn {
                let s: C64 = cols[x].iter().zip(&cols[y]).map(|(a, b)| a.conj() * b).sum();
                gram[(x, y)] += s;
                if x != y {
                    gram[(y, x)] += s.conj();
                }
            }
        }
    }
    let e = hermitian_eig(&gram, tol)?;
    let top = e.values.last().copied().unwrap_or(0.0).max(1.0);
    Ok((0..nn)
        .filter(|&k| e.values[k] <= tol.eps_eig * top)
        .map(|k| vec_to_matrix(&e.vectors.column(k), n))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BicommutantReport {
    pub algebra_dim: usize,
    pub commutant_dim: usize,
    pub bicommutant_dim: usize,
    pub residual: f64,
    pub holds: bool,
}

/// Checks V'' = V for a context.
pub fn bicommutant_check(ctx: &Context, tol: &Tolerances) -> Result<BicommutantReport> {
    let gens: Vec<ComplexMatrix> = ctx.blocks().iter().map(|b| b.matrix().clone()).collect();
    let c1 = commutant(&gens, tol)?;
    let c2 = commutant(&c1, tol)?;
    let mut residual: f64 = 0.0;
    for x in &c2 {
        let res = match block_coefficients(ctx, x, &Tolerances { eps_order: f64::INFINITY, ..*tol }) {
            Ok(coeffs) => {
                let mut back = ComplexMatrix::zeros(ctx.dim());
                for (q, c) in ctx.blocks().iter().zip(&coeffs) {
                    back = &back + &q.matrix().scale(*c);
                }
                (&back - x).frobenius_norm()
            }
            Err(_) => f64::INFINITY,
        };
        residual = residual.max(res);
    }
    let holds = c2.len() == ctx.num_blocks() && residual <= tol.eps_order;
    Ok(BicommutantReport {
        algebra_dim: ctx.num_blocks(),
        commutant_dim: c1.len(),
        bicommutant_dim: c2.len(),
        residual,
        holds,
    })
}

/// For `lower ⊆ upper`, maps each block of `upper` to the block of `lower` containing it.
pub fn coarsening_map(lower: &Context, upper: &Context, tol: &Tolerances) -> Option<Vec<usize>> {
    if lower.dim() != upper.dim() || lower.num_blocks() > upper.num_blocks() {
        return None;
    }
    let mut map = Vec::with_capacity(upper.num_blocks());
    let mut rank_sum = vec![0usize; lower.num_blocks()];
    for q in upper.blocks() {
        let j = (0..lower.num_blocks()).find(|&j| proj_leq(q, &lower.blocks()[j], tol))?;
        rank_sum[j] += q.rank();
        map.push(j);
    }
    if rank_sum.iter().zip(lower.blocks()).all(|(s, b)| *s == b.rank()) {
        Some(map)
    } else {
        None
    }
}

/// V ⊆ V′ as subalgebras.
pub fn includes(lower: &Context, upper: &Context, tol: &Tolerances) -> bool {
    coarsening_map(lower, upper, tol).is_some()
}

/// The image U V U* of a context under a unitary.
pub fn apply_automorphism(u: &ComplexMatrix, ctx: &Context, tol: &Tolerances) -> Result<Context> {
    if u.dim() != ctx.dim() {
        return Err(Error::DimMismatch { expected: ctx.dim(), got: u.dim() });
    }
    let d = u.unitarity_defect();
    if d > tol.eps_order {
        return Err(Error::NotUnitary(d));
    }
    Context::from_blocks(ctx.blocks().iter().map(|b| b.conjugate_by(u)).collect(), tol)
}

fn max_contexts_default() -> usize {
    std::env::var("TOPOSKMS_MAX_CONTEXTS").ok().and_then(|s| s.parse().ok()).unwrap_or(500)
}

/// Closure operations applied when building a poset from seed contexts.
#[derive(Debug, Clone)]
pub struct PosetOptions {
    pub downward_closure: bool,
    pub meet_closure: bool,
    /// Unitaries whose conjugation action the poset should be closed under.
    pub group: Vec<ComplexMatrix>,
    /// Number of group rounds; `None` iterates to a fixpoint.
    pub group_rounds: Option<usize>,
    pub max_contexts: usize,
}

impl Default for PosetOptions {
    fn default() -> Self {
        PosetOptions {
            downward_closure: false,
            meet_closure: false,
            group: Vec::new(),
            group_rounds: None,
            max_contexts: max_contexts_default(),
        }
    }
}

/// A finite poset of contexts ordered by inclusion.
#[derive(Debug, Clone)]
pub struct ContextPoset {
    dim: usize,
    tol: Tolerances,
    contexts: Vec<Context>,
    by_signature: HashMap<Vec<usize>, Vec<ContextId>>,
    /// maps[lower][upper] is the coarsening map when lower ⊆ upper.
    maps: Vec<Vec<Option<Vec<usize>>>>,
    max_contexts: usize,
}

impl ContextPoset {
    pub fn new(dim: usize, tol: &Tolerances) -> Self {
        ContextPoset {
            dim,
            tol: *tol,
            contexts: Vec::new(),
            by_signature: HashMap::new(),
            maps: Vec::new(),
            max_contexts: max_contexts_default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn context(&self, id: ContextId) -> &Context {
        &self.contexts[id]
    }

    pub fn find(&self, ctx: &Context) -> Option<ContextId> {
        self.by_signature
            .get(&ctx.rank_signature())?
            .iter()
            .copied()
            .find(|&id| self.contexts[id].same_as(ctx, &self.tol))
    }

    /// Inserts a context unless an equal one is present; returns its id and whether it is new.
    pub fn insert(&mut self, ctx: Context) -> Result<(ContextId, bool)> {
        if ctx.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: ctx.dim() });
        }
        if let Some(id) = self.find(&ctx) {
            return Ok((id, false));
        }
        if self.contexts.len() >= self.max_contexts {
            return Err(Error::PosetTooLarge(self.max_contexts));
        }
        let id = self.contexts.len();
        let mut row = Vec::with_capacity(id + 1);
        for (other, existing) in self.contexts.iter().enumerate() {
            self.maps[other].push(coarsening_map(existing, &ctx, &self.tol));
            row.push(coarsening_map(&ctx, existing, &self.tol));
        }
        row.push(Some((0..ctx.num_blocks()).collect()));
        self.maps.push(row);
        self.by_signature.entry(ctx.rank_signature()).or_default().push(id);
        self.contexts.push(ctx);
        Ok((id, true))
    }

    /// lower ⊆ upper
    pub fn leq(&self, lower: ContextId, upper: ContextId) -> bool {
        self.maps[lower][upper].is_some()
    }

    /// Restriction of characters of `upper` to `lower`, as a block index map.
    pub fn restriction(&self, upper: ContextId, lower: ContextId) -> Result<&[usize]> {
        self.maps[lower][upper].as_deref().ok_or(Error::NotIncluded { lower, upper })
    }

    /// All contexts below `v` (including `v`), in id order.
    pub fn down_set(&self, v: ContextId) -> Vec<ContextId> {
        (0..self.len()).filter(|&w| self.leq(w, v)).collect()
    }

    pub fn up_set(&self, v: ContextId) -> Vec<ContextId> {
        (0..self.len()).filter(|&w| self.leq(v, w)).collect()
    }

    /// Covering pairs (lower, upper) of the Hasse diagram.
    pub fn hasse_edges(&self) -> Vec<(ContextId, ContextId)> {
        let n = self.len();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a == b || !self.leq(a, b) {
                    continue;
                }
                let covered = (0..n).any(|c| c != a && c != b && self.leq(a, c) && self.leq(c, b));
                if !covered {
                    edges.push((a, b));
                }
            }
        }
        edges
    }

    /// Contexts sorted so that every context precedes all contexts it contains.
    pub fn top_down_order(&self) -> Vec<ContextId> {
        let mut ids: Vec<ContextId> = (0..self.len()).collect();
        ids.sort_by(|&a, &b| self.contexts[b].num_blocks().cmp(&self.contexts[a].num_blocks()).then(a.cmp(&b)));
        ids
    }

    /// Image of context `v` under conjugation by `u`, if it lies in the poset.
    pub fn image_under(&self, u: &ComplexMatrix, v: ContextId) -> Result<Option<ContextId>> {
        let img = apply_automorphism(u, &self.contexts[v], &self.tol)?;
        Ok(self.find(&img))
    }

    /// Builds the poset generated by `seeds` under the requested closures.
    pub fn build(seeds: &[Context], options: &PosetOptions, tol: &Tolerances) -> Result<Self> {
        let dim = seeds.first().map(|c| c.dim()).ok_or_else(|| Error::Invalid("no seed contexts".into()))?;
        let mut poset = ContextPoset::new(dim, tol);
        poset.max_contexts = options.max_contexts;
        for s in seeds {
            poset.insert(s.clone())?;
        }
        let mut rounds_left = options.group_rounds;
        loop {
            let before = poset.len();
            if options.downward_closure {
                poset.close_downward()?;
            }
            if options.meet_closure {
                poset.close_meets()?;
            }
            if !options.group.is_empty() && rounds_left != Some(0) {
                poset.group_round(&options.group)?;
                rounds_left = rounds_left.map(|r| r - 1);
            }
            if poset.len() == before {
                break;
            }
        }
        Ok(poset)
    }

    fn close_downward(&mut self) -> Result<()> {
        let mut i = 0;
        while i < self.len() {
            let ctx = self.contexts[i].clone();
            for groups in set_partitions(ctx.num_blocks()) {
                if groups.len() < 2 || groups.len() == ctx.num_blocks() {
                    continue;
                }
                let blocks = groups
                    .iter()
                    .map(|g| ctx.projection_of(g.iter().fold(0u64, |m, &b| m | 1 << b)))
                    .collect();
                self.insert(Context::from_blocks(blocks, &self.tol)?)?;
            }
            i += 1;
        }
        Ok(())
    }

    fn close_meets(&mut self) -> Result<()> {
        let mut changed = true;
        while changed {
            changed = false;
            let n = self.len();
            for a in 0..n {
                for b in a + 1..n {
                    if self.leq(a, b) || self.leq(b, a) {
                        continue;
                    }
                    if let Some(m) = context_meet(&self.contexts[a], &self.contexts[b], &self.tol)? {
                        changed |= self.insert(m)?.1;
                    }
                }
            }
        }
        Ok(())
    }

    fn group_round(&mut self, group: &[ComplexMatrix]) -> Result<()> {
        let n = self.len();
        for v in 0..n {
            for u in group {
                let img = apply_automorphism(u, &self.contexts[v], &self.tol)?;
                self.insert(img)?;
            }
        }
        Ok(())
    }
}

/// V ∩ W as a context, or `None` when the intersection is trivial.
pub fn context_meet(a: &Context, b: &Context, tol: &Tolerances) -> Result<Option<Context>> {
    let (ka, kb) = (a.num_blocks(), b.num_blocks());
    // union-find over a-blocks 0..ka and b-blocks ka..ka+kb
    let mut parent: Vec<usize> = (0..ka + kb).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..ka {
        for j in 0..kb {
            if a.blocks()[i].matrix().matmul(b.blocks()[j].matrix()).frobenius_norm() > tol.eps_order {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, ka + j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut comps: Vec<u64> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..ka {
        let r = root(&mut parent, i);
        match roots.iter().position(|&x| x == r) {
            Some(k) => comps[k] |= 1 << i,
            None => {
                roots.push(r);
                comps.push(1 << i);
            }
        }
    }
    if comps.len() < 2 {
        return Ok(None);
    }
    let blocks: Vec<Projection> = comps.iter().map(|&m| a.projection_of(m)).collect();
    Context::from_blocks(blocks, tol).map(Some)
}

/// All set partitions of {0..k} as lists of groups, in restricted-growth order.
pub fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    let mut rgs = vec![0usize; k];
    loop {
        let groups = rgs.iter().copied().max().unwrap_or(0) + 1;
        let mut parts = vec![Vec::new(); groups];
        for (i, &g) in rgs.iter().enumerate() {
            parts[g].push(i);
        }
        out.push(parts);
        // next restricted growth string
        let mut i = k;
        loop {
            if i <= 1 {
                return out;
            }
            i -= 1;
            let max_prefix = rgs[..i].iter().copied().max().unwrap_or(0);
            if rgs[i] <= max_prefix {
                rgs[i] += 1;
                for x in rgs.iter_mut().skip(i + 1) {
                    *x = 0;
                }
                break;
            }
        }
    }
}
