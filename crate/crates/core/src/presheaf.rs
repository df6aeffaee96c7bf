//! The spectral presheaf over a context poset, clopen sub-objects and daseinisation.

use serde::{Deserialize, Serialize};

use crate::algebra::{ContextId, ContextPoset, Context};
use crate::error::{Error, Result};
use crate::numerics::{proj_leq, ComplexMatrix, Projection, Tolerances};

/// Characters of a context, encoded as a bit mask over its blocks.
pub type BlockSet = u64;

pub const MAX_ENUMERATION: usize = 1_000_000;

/// Restriction of characters from `upper` to `lower` as an index map.
pub fn restriction_map(poset: &ContextPoset, upper: ContextId, lower: ContextId) -> Result<Vec<usize>> {
    poset.restriction(upper, lower).map(|m| m.to_vec())
}

/// Image of a set of characters under restriction.
pub fn restrict_set(map: &[usize], set: BlockSet) -> BlockSet {
    map.iter().enumerate().filter(|(i, _)| set >> i & 1 == 1).fold(0, |acc, (_, &j)| acc | 1 << j)
}

/// The clopen subset S_P ⊆ Σ_V of a projection P in the lattice of V.
pub fn s_map(ctx: &Context, p: &Projection, tol: &Tolerances) -> Result<BlockSet> {
    if p.dim() != ctx.dim() {
        return Err(Error::DimMismatch { expected: ctx.dim(), got: p.dim() });
    }
    let mask = ctx
        .blocks()
        .iter()
        .enumerate()
        .filter(|(_, q)| proj_leq(q, p, tol))
        .fold(0u64, |m, (i, _)| m | 1 << i);
    let back = ctx.projection_of(mask);
    if (back.matrix() - p.matrix()).frobenius_norm() > tol.eps_order {
        return Err(Error::NotInLattice);
    }
    Ok(mask)
}

/// The projection corresponding to a clopen subset of Σ_V.
pub fn s_inverse(ctx: &Context, set: BlockSet) -> Projection {
    ctx.projection_of(set)
}

/// Blocks of the smallest lattice element of V above P.
pub fn outer_daseinisation_set(p: &Projection, ctx: &Context, tol: &Tolerances) -> BlockSet {
    ctx.blocks()
        .iter()
        .enumerate()
        .filter(|(_, q)| q.matrix().matmul(p.matrix()).frobenius_norm() > tol.eps_order)
        .fold(0u64, |m, (i, _)| m | 1 << i)
}

/// δ°(P)_V, the smallest projection of V dominating P.
pub fn outer_daseinisation(p: &Projection, ctx: &Context, tol: &Tolerances) -> Result<Projection> {
    if p.dim() != ctx.dim() {
        return Err(Error::DimMismatch { expected: ctx.dim(), got: p.dim() });
    }
    Ok(ctx.projection_of(outer_daseinisation_set(p, ctx, tol)))
}

/// A clopen sub-object of the spectral presheaf restricted to a set of contexts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClopenSubobject {
    domain: Vec<ContextId>,
    sets: Vec<BlockSet>,
}

impl ClopenSubobject {
    /// Builds and validates a sub-object; `components` pairs contexts with character sets.
    pub fn new(poset: &ContextPoset, components: Vec<(ContextId, BlockSet)>) -> Result<Self> {
        let mut components = components;
        components.sort_by_key(|c| c.0);
        if components.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Invalid("context listed twice in sub-object".into()));
        }
        for &(v, s) in &components {
            if v >= poset.len() {
                return Err(Error::Invalid(format!("context {v} is not in the poset")));
            }
            if s & !poset.context(v).full_mask() != 0 {
                return Err(Error::Invalid(format!("character set {s:#b} exceeds spectrum of context {v}")));
            }
        }
        let (domain, sets) = components.into_iter().unzip();
        let sub = ClopenSubobject { domain, sets };
        if let Some((upper, lower)) = sub.closure_violation(poset) {
            return Err(Error::Invalid(format!(
                "not a sub-object: restriction from context {upper} to {lower} leaves the set"
            )));
        }
        Ok(sub)
    }

    pub fn empty(domain: &[ContextId]) -> Self {
        let mut d = domain.to_vec();
        d.sort_unstable();
        let sets = vec![0; d.len()];
        ClopenSubobject { domain: d, sets }
    }

    pub fn full(poset: &ContextPoset, domain: &[ContextId]) -> Self {
        let mut d = domain.to_vec();
        d.sort_unstable();
        let sets = d.iter().map(|&v| poset.context(v).full_mask()).collect();
        ClopenSubobject { domain: d, sets }
    }

    pub fn whole_poset(poset: &ContextPoset) -> Vec<ContextId> {
        (0..poset.len()).collect()
    }

    pub fn domain(&self) -> &[ContextId] {
        &self.domain
    }

    pub fn sets(&self) -> &[BlockSet] {
        &self.sets
    }

    pub fn get(&self, v: ContextId) -> Option<BlockSet> {
        self.domain.binary_search(&v).ok().map(|i| self.sets[i])
    }

    pub fn component(&self, v: ContextId) -> Result<BlockSet> {
        self.get(v).ok_or_else(|| Error::Invalid(format!("context {v} is outside the sub-object domain")))
    }

    pub fn components(&self) -> impl Iterator<Item = (ContextId, BlockSet)> + '_ {
        self.domain.iter().copied().zip(self.sets.iter().copied())
    }

    /// First pair (upper, lower) where λ ∈ S_upper restricts outside S_lower.
    pub fn closure_violation(&self, poset: &ContextPoset) -> Option<(ContextId, ContextId)> {
        for (a, &upper) in self.domain.iter().enumerate() {
            for (b, &lower) in self.domain.iter().enumerate() {
                if a == b || !poset.leq(lower, upper) {
                    continue;
                }
                let map = poset.restriction(upper, lower).ok()?;
                let img = restrict_set(map, self.sets[a]);
                if img & !self.sets[b] != 0 {
                    return Some((upper, lower));
                }
            }
        }
        None
    }

    /// The projection 𝔖⁻¹(S_V).
    pub fn projection_at(&self, poset: &ContextPoset, v: ContextId) -> Result<Projection> {
        Ok(s_inverse(poset.context(v), self.component(v)?))
    }

    /// Restriction of the sub-object to a subset of its domain.
    pub fn restrict_to(&self, domain: &[ContextId]) -> Result<Self> {
        let mut d = domain.to_vec();
        d.sort_unstable();
        let sets = d.iter().map(|&v| self.component(v)).collect::<Result<Vec<_>>>()?;
        Ok(ClopenSubobject { domain: d, sets })
    }

    fn zip_with(&self, other: &Self, f: impl Fn(BlockSet, BlockSet) -> BlockSet) -> Result<Self> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch);
        }
        Ok(ClopenSubobject {
            domain: self.domain.clone(),
            sets: self.sets.iter().zip(&other.sets).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn meet(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn join(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a | b)
    }

    /// Heyting pseudo-complement: λ ∈ ¬S_W iff no restriction of λ lies in S.
    pub fn negation(&self, poset: &ContextPoset) -> Result<Self> {
        let mut sets = Vec::with_capacity(self.domain.len());
        for &w in &self.domain {
            let k = poset.context(w).num_blocks();
            let mut set = 0;
            'chars: for lambda in 0..k {
                for (b, &lower) in self.domain.iter().enumerate() {
                    if !poset.leq(lower, w) {
                        continue;
                    }
                    let r = poset.restriction(w, lower)?[lambda];
                    if self.sets[b] >> r & 1 == 1 {
                        continue 'chars;
                    }
                }
                set |= 1 << lambda;
            }
            sets.push(set);
        }
        Ok(ClopenSubobject { domain: self.domain.clone(), sets })
    }

    pub fn is_subset_of(&self, other: &Self) -> Result<bool> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch);
        }
        Ok(self.sets.iter().zip(&other.sets).all(|(a, b)| a & !b == 0))
    }

    /// Smallest sub-object over `domain` containing the given components.
    pub fn generated_by(poset: &ContextPoset, domain: &[ContextId], seeds: &[(ContextId, BlockSet)]) -> Result<Self> {
        let mut d = domain.to_vec();
        d.sort_unstable();
        let mut sets = vec![0u64; d.len()];
        for &(v, s) in seeds {
            let i = d.binary_search(&v).map_err(|_| Error::Invalid(format!("context {v} not in domain")))?;
            sets[i] |= s;
        }
        for upper in poset.top_down_order() {
            let Ok(a) = d.binary_search(&upper) else { continue };
            for (b, &lower) in d.iter().enumerate() {
                if lower != upper && poset.leq(lower, upper) {
                    let img = restrict_set(poset.restriction(upper, lower)?, sets[a]);
                    sets[b] |= img;
                }
            }
        }
        Ok(ClopenSubobject { domain: d, sets })
    }
}

/// The daseinised proposition δ(P) over the whole poset.
pub fn daseinisation_subobject(poset: &ContextPoset, p: &Projection) -> Result<ClopenSubobject> {
    if p.dim() != poset.dim() {
        return Err(Error::DimMismatch { expected: poset.dim(), got: p.dim() });
    }
    let tol = poset.tolerances();
    Ok(ClopenSubobject {
        domain: (0..poset.len()).collect(),
        sets: poset.contexts().iter().map(|c| outer_daseinisation_set(p, c, tol)).collect(),
    })
}

/// For each block of `from`, the block of `to` equal to U Q U*.
pub fn transported_blocks(u: &ComplexMatrix, from: &Context, to: &Context, tol: &Tolerances) -> Option<Vec<usize>> {
    if from.num_blocks() != to.num_blocks() {
        return None;
    }
    let mut out = Vec::with_capacity(from.num_blocks());
    for q in from.blocks() {
        let img = q.conjugate_by(u);
        out.push((0..to.num_blocks()).find(|&j| img.approx_eq(&to.blocks()[j], tol))?);
    }
    Some(out)
}

/// The context U V U* located in the poset, with the block correspondence from V.
pub fn locate_image(poset: &ContextPoset, u: &ComplexMatrix, v: ContextId) -> Result<Option<(ContextId, Vec<usize>)>> {
    let Some(w) = poset.image_under(u, v)? else { return Ok(None) };
    let corr = transported_blocks(u, poset.context(v), poset.context(w), poset.tolerances())
        .ok_or_else(|| Error::Invalid("image context found but blocks do not correspond".into()))?;
    Ok(Some((w, corr)))
}

/// (α*S)_V: the component S_{αV} relabelled as characters of V.
pub fn pullback_component(poset: &ContextPoset, u: &ComplexMatrix, s: &ClopenSubobject, v: ContextId) -> Result<BlockSet> {
    let (w, corr) = locate_image(poset, u, v)?
        .ok_or_else(|| Error::PosetNotClosed(format!("image of context {v} is not in the poset")))?;
    let sw = s
        .get(w)
        .ok_or_else(|| Error::PosetNotClosed(format!("image {w} of context {v} is outside the sub-object domain")))?;
    Ok(corr.iter().enumerate().filter(|(_, &j)| sw >> j & 1 == 1).fold(0, |m, (i, _)| m | 1 << i))
}

/// The pulled-back sub-object α*S over the same domain.
pub fn pullback(poset: &ContextPoset, u: &ComplexMatrix, s: &ClopenSubobject) -> Result<ClopenSubobject> {
    let sets = s.domain().iter().map(|&v| pullback_component(poset, u, s, v)).collect::<Result<Vec<_>>>()?;
    Ok(ClopenSubobject { domain: s.domain().to_vec(), sets })
}

/// Extends a character set at `base` along its images under the given unitaries and closes
/// the result under restriction.
pub fn transported_subobject(
    poset: &ContextPoset,
    base: ContextId,
    set: BlockSet,
    unitaries: &[ComplexMatrix],
) -> Result<ClopenSubobject> {
    let mut seeds: Vec<(ContextId, BlockSet)> = vec![(base, set)];
    for u in unitaries {
        if let Some((w, corr)) = locate_image(poset, u, base)? {
            let img = corr.iter().enumerate().filter(|(i, _)| set >> i & 1 == 1).fold(0, |m, (_, &j)| m | 1 << j);
            match seeds.iter().find(|s| s.0 == w) {
                Some(&(_, prev)) if prev != img => {
                    return Err(Error::Invalid(format!(
                        "transport to context {w} is ambiguous: two group elements give different sets"
                    )))
                }
                Some(_) => {}
                None => seeds.push((w, img)),
            }
        }
    }
    ClopenSubobject::generated_by(poset, &ClopenSubobject::whole_poset(poset), &seeds)
}

/// Every clopen sub-object over `domain`, ordered lexicographically by component sets.
pub fn enumerate_subobjects(poset: &ContextPoset, domain: &[ContextId], cap: usize) -> Result<Vec<ClopenSubobject>> {
    let mut d = domain.to_vec();
    d.sort_unstable();
    let order: Vec<usize> = poset.top_down_order().into_iter().filter_map(|v| d.binary_search(&v).ok()).collect();
    let mut sets = vec![0u64; d.len()];
    let mut out = Vec::new();
    enumerate_rec(poset, &d, &order, 0, &mut sets, &mut out, cap)?;
    out.sort_by(|a, b| a.sets.cmp(&b.sets));
    Ok(out)
}

fn enumerate_rec(
    poset: &ContextPoset,
    d: &[ContextId],
    order: &[usize],
    depth: usize,
    sets: &mut Vec<BlockSet>,
    out: &mut Vec<ClopenSubobject>,
    cap: usize,
) -> Result<()> {
    if depth == order.len() {
        if out.len() >= cap {
            return Err(Error::EnumerationTooLarge(cap));
        }
        out.push(ClopenSubobject { domain: d.to_vec(), sets: sets.clone() });
        return Ok(());
    }
    let i = order[depth];
    let v = d[i];
    let mut required = 0;
    for &j in &order[..depth] {
        let upper = d[j];
        if poset.leq(v, upper) {
            required |= restrict_set(poset.restriction(upper, v)?, sets[j]);
        }
    }
    let free = poset.context(v).full_mask() & !required;
    // all subsets of `free`, in increasing order
    let mut sub: u64 = 0;
    loop {
        sets[i] = required | sub;
        enumerate_rec(poset, d, order, depth + 1, sets, out, cap)?;
        if sub == free {
            break;
        }
        sub = (sub.wrapping_sub(free)) & free;
    }
    sets[i] = 0;
    Ok(())
}
