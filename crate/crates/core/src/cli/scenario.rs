//! JSON scenario schema and the model it builds.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algebra::{context_from_operators, Context, ContextId, ContextPoset, PosetOptions};
use crate::error::{Error, Result};
use crate::kms_external::{gibbs_state, AutomorphismFlow, FlowConvention};
use crate::kms_internal::SampledGroup;
use crate::measure::{MeasureEntry, State};
use crate::numerics::{ComplexMatrix, Projection, Tolerances, C64};
use crate::presheaf::{daseinisation_subobject, transported_subobject, BlockSet, ClopenSubobject};
use crate::sampling;

pub const MAX_DIM: usize = 16;

/// A complex number written either as a plain number or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CNum(pub C64);

impl Serialize for CNum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

impl<'de> Deserialize<'de> for CNum {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Real(f64),
            Pair(Vec<f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Real(x) => Ok(CNum(C64::new(x, 0.0))),
            Raw::Pair(v) if v.len() == 2 => Ok(CNum(C64::new(v[0], v[1]))),
            Raw::Pair(v) => Err(D::Error::custom(format!("complex number needs [re, im], got {} entries", v.len()))),
        }
    }
}

/// Row-major nested arrays.
pub type MatrixSpec = Vec<Vec<CNum>>;

pub fn to_matrix(m: &MatrixSpec, dim: usize) -> Result<ComplexMatrix> {
    if m.len() != dim {
        return Err(Error::DimMismatch { expected: dim, got: m.len() });
    }
    if let Some(row) = m.iter().find(|r| r.len() != dim) {
        return Err(Error::DimMismatch { expected: dim, got: row.len() });
    }
    let m = ComplexMatrix::from_fn(dim, |i, j| m[i][j].0);
    if !m.is_finite() {
        return Err(Error::Invalid("non-finite matrix entry".into()));
    }
    Ok(m)
}

pub fn from_matrix(m: &ComplexMatrix) -> MatrixSpec {
    m.rows().into_iter().map(|r| r.into_iter().map(CNum).collect()).collect()
}

fn to_vector(v: &[CNum], dim: usize) -> Result<Vec<C64>> {
    if v.len() != dim {
        return Err(Error::DimMismatch { expected: dim, got: v.len() });
    }
    Ok(v.iter().map(|z| z.0).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    Density {
        matrix: MatrixSpec,
    },
    /// Eigenvalues with an optional unitary whose columns are the eigenvectors.
    Spectrum {
        values: Vec<f64>,
        #[serde(default)]
        basis: Option<MatrixSpec>,
    },
    /// e^{-βH}/Z; H and β default to the scenario's `hamiltonian` and `beta`.
    Gibbs {
        #[serde(default)]
        hamiltonian: Option<MatrixSpec>,
        #[serde(default)]
        beta: Option<f64>,
    },
    Pure {
        vector: Vec<CNum>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextSpec {
    /// The maximal context of the standard basis.
    Diagonal,
    /// {P, I - P} for P the projection onto the (normalised) vector.
    Vector { vector: Vec<CNum> },
    /// {P, I - P}.
    Binary { projection: MatrixSpec },
    /// A partition of the identity into projections.
    Blocks { blocks: Vec<MatrixSpec> },
    /// The algebra generated by commuting normal operators.
    Operators { operators: Vec<MatrixSpec> },
    /// Maximal contexts of seeded Haar-random bases.
    RandomBasis { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FlowClosure {
    None,
    /// One round of images under the t-grid and the group samples.
    #[default]
    Once,
    /// Closure under the group samples until nothing changes.
    Orbit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PosetSpec {
    pub downward_closure: bool,
    pub meet_closure: bool,
    pub flow_closure: FlowClosure,
    pub max_contexts: Option<usize>,
}

impl Default for PosetSpec {
    fn default() -> Self {
        PosetSpec { downward_closure: false, meet_closure: false, flow_closure: FlowClosure::Once, max_contexts: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubobjectDef {
    /// Characters (block indices, canonical order) at a declared context, transported along
    /// the flow images and closed under restriction.
    Characters { context: usize, blocks: Vec<usize> },
    /// Outer daseinisation of a projection over the whole poset.
    Dasein { projection: MatrixSpec },
    /// Outer daseinisation of the projection onto a vector.
    DaseinVector { vector: Vec<CNum> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubobjectSpec {
    pub name: String,
    #[serde(flatten)]
    pub def: SubobjectDef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupSpec {
    Cyclic {
        m: usize,
        #[serde(default = "one")]
        omega: f64,
        #[serde(default = "yes")]
        include_period: bool,
        #[serde(default)]
        gammas: Vec<f64>,
    },
    Explicit {
        samples: Vec<f64>,
        #[serde(default)]
        gammas: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ModularSpec {
    /// Basis of a declared sub-algebra of M_n whose GNS vector is tested for being cyclic
    /// and separating.
    pub subalgebra: Option<Vec<MatrixSpec>>,
}

/// Check suites in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    Poset,
    Presheaf,
    Measure,
    C1,
    C2,
    Truth,
    Equivalence,
    Internal,
    Modular,
    Reconstruction,
}

impl Check {
    pub const ALL: [Check; 10] = [
        Check::Poset,
        Check::Presheaf,
        Check::Measure,
        Check::C1,
        Check::C2,
        Check::Truth,
        Check::Equivalence,
        Check::Internal,
        Check::Modular,
        Check::Reconstruction,
    ];
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_name() -> String {
    "scenario".into()
}

fn all_checks() -> Vec<Check> {
    Check::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub dim: usize,
    pub state: StateSpec,
    #[serde(default)]
    pub hamiltonian: Option<MatrixSpec>,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub convention: FlowConvention,
    #[serde(default)]
    pub contexts: Vec<ContextSpec>,
    #[serde(default)]
    pub poset: PosetSpec,
    #[serde(default)]
    pub subobjects: Vec<SubobjectSpec>,
    #[serde(default)]
    pub group: Option<GroupSpec>,
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default = "all_checks")]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    /// Number of additional seeded random sub-object pairs for the measure suite.
    #[serde(default)]
    pub measure_pairs: usize,
    /// An abstract measure table to reconstruct a state from, instead of the state's own.
    #[serde(default)]
    pub measure_table: Option<Vec<MeasureEntry>>,
    #[serde(default)]
    pub modular: ModularSpec,
}

impl Scenario {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fills every default that depends on other fields so the echo is self-contained.
    pub fn resolve(&mut self) {
        if let StateSpec::Gibbs { hamiltonian, beta } = &mut self.state {
            if hamiltonian.is_none() {
                *hamiltonian = self.hamiltonian.clone();
            }
            if beta.is_none() {
                *beta = Some(self.beta);
            }
        }
        if self.poset.max_contexts.is_none() {
            self.poset.max_contexts = Some(PosetOptions::default().max_contexts);
        }
        self.checks.sort();
        self.checks.dedup();
    }
}

/// Everything a check suite needs, validated.
#[derive(Debug, Clone)]
pub struct Model {
    pub scenario: Scenario,
    pub tol: Tolerances,
    pub state: State,
    pub hamiltonian: Option<ComplexMatrix>,
    pub flow: Option<AutomorphismFlow>,
    pub group: Option<SampledGroup>,
    pub poset: ContextPoset,
    /// Poset ids of the declared contexts.
    pub seeds: Vec<ContextId>,
    pub subobjects: Vec<(String, ClopenSubobject)>,
    /// Projections behind daseinised sub-objects.
    pub projections: Vec<(String, Projection)>,
}

fn build_state(spec: &StateSpec, dim: usize, tol: &Tolerances) -> Result<State> {
    match spec {
        StateSpec::Density { matrix } => State::new(to_matrix(matrix, dim)?, tol),
        StateSpec::Spectrum { values, basis } => {
            if values.len() != dim {
                return Err(Error::DimMismatch { expected: dim, got: values.len() });
            }
            let d = ComplexMatrix::real_diag(values);
            match basis {
                None => State::new(d, tol),
                Some(b) => {
                    let u = to_matrix(b, dim)?;
                    let defect = u.unitarity_defect();
                    if defect > tol.eps_order {
                        return Err(Error::NotUnitary(defect));
                    }
                    State::new(u.matmul(&d).matmul(&u.adjoint()).hermitian_part(), tol)
                }
            }
        }
        StateSpec::Gibbs { hamiltonian, beta } => {
            let h = hamiltonian.as_ref().ok_or_else(|| Error::InvalidState("Gibbs state without a Hamiltonian".into()))?;
            gibbs_state(&to_matrix(h, dim)?, beta.unwrap_or(1.0), tol)
        }
        StateSpec::Pure { vector } => State::pure(&to_vector(vector, dim)?, tol),
    }
}

fn build_contexts(specs: &[ContextSpec], dim: usize, seed: u64, tol: &Tolerances) -> Result<Vec<Context>> {
    let mut rng = sampling::rng(seed);
    let mut out = Vec::new();
    for spec in specs {
        match spec {
            ContextSpec::Diagonal => out.push(Context::diagonal(dim, tol)?),
            ContextSpec::Vector { vector } => {
                let p = Projection::onto_vector(&to_vector(vector, dim)?)?;
                out.push(Context::binary(&p, tol)?);
            }
            ContextSpec::Binary { projection } => {
                out.push(Context::binary(&Projection::new(to_matrix(projection, dim)?, tol)?, tol)?)
            }
            ContextSpec::Blocks { blocks } => {
                let ps = blocks.iter().map(|b| Projection::new(to_matrix(b, dim)?, tol)).collect::<Result<Vec<_>>>()?;
                out.push(Context::from_blocks(ps, tol)?);
            }
            ContextSpec::Operators { operators } => {
                let ops = operators.iter().map(|m| to_matrix(m, dim)).collect::<Result<Vec<_>>>()?;
                out.push(context_from_operators(&ops, tol)?);
            }
            ContextSpec::RandomBasis { count } => {
                for _ in 0..*count {
                    let u = sampling::unitary(dim, &mut rng);
                    let blocks = (0..dim).map(|k| Projection::onto_vector(&u.column(k))).collect::<Result<Vec<_>>>()?;
                    out.push(Context::from_blocks(blocks, tol)?);
                }
            }
        }
    }
    Ok(out)
}

fn to_set(blocks: &[usize], ctx: &Context) -> Result<BlockSet> {
    let mut set = 0;
    for &b in blocks {
        if b >= ctx.num_blocks() {
            return Err(Error::Invalid(format!("block {b} out of range for a context with {} blocks", ctx.num_blocks())));
        }
        set |= 1 << b;
    }
    Ok(set)
}

impl Model {
    pub fn build(mut scenario: Scenario) -> Result<Self> {
        scenario.resolve();
        let dim = scenario.dim;
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::Invalid(format!("dimension {dim} outside 1..={MAX_DIM}")));
        }
        let tol = scenario.tolerances;
        tol.validate()?;
        if !(scenario.beta.is_finite() && scenario.beta > 0.0) {
            return Err(Error::Invalid(format!("beta must be positive, got {}", scenario.beta)));
        }
        if let Some(r) = scenario.r.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Invalid(format!("level r = {r} outside [0, 1]")));
        }
        if scenario.t_grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("non-finite flow parameter".into()));
        }
        let state = build_state(&scenario.state, dim, &tol)?;
        let hamiltonian = match (&scenario.hamiltonian, &scenario.state) {
            (Some(h), _) => Some(to_matrix(h, dim)?),
            (None, StateSpec::Gibbs { hamiltonian: Some(h), .. }) => Some(to_matrix(h, dim)?),
            _ => None,
        };
        let flow = match scenario.convention {
            FlowConvention::Hamiltonian => {
                hamiltonian.as_ref().map(|h| AutomorphismFlow::hamiltonian(h, scenario.beta, &tol)).transpose()?
            }
            FlowConvention::Modular => Some(AutomorphismFlow::modular(&state, scenario.beta, &tol)?),
        };
        let group = match (&scenario.group, &flow) {
            (None, _) => None,
            (Some(_), None) => return Err(Error::Invalid("a sampled group needs a flow (Hamiltonian or modular)".into())),
            (Some(GroupSpec::Cyclic { m, omega, include_period, gammas }), Some(f)) => {
                Some(SampledGroup::cyclic(f.clone(), *m, *omega, *include_period, gammas.clone())?)
            }
            (Some(GroupSpec::Explicit { samples, gammas }), Some(f)) => {
                Some(SampledGroup::explicit(f.clone(), samples.clone(), gammas.clone())?)
            }
        };

        let seeds_ctx = build_contexts(&scenario.contexts, dim, scenario.seed, &tol)?;
        let mut closure_unitaries = Vec::new();
        let mut rounds = Some(1);
        if let Some(f) = &flow {
            match scenario.poset.flow_closure {
                FlowClosure::None => {}
                FlowClosure::Once => {
                    closure_unitaries.extend(scenario.t_grid.iter().map(|&t| f.unitary(t)));
                    if let Some(g) = &group {
                        closure_unitaries.extend(g.unitaries());
                    }
                }
                FlowClosure::Orbit => {
                    if let Some(g) = &group {
                        closure_unitaries.extend(g.unitaries());
                    }
                    rounds = None;
                }
            }
        }
        let opts = PosetOptions {
            downward_closure: scenario.poset.downward_closure,
            meet_closure: scenario.poset.meet_closure,
            group: closure_unitaries.clone(),
            group_rounds: rounds,
            max_contexts: scenario.poset.max_contexts.unwrap_or_else(|| PosetOptions::default().max_contexts),
        };
        let poset =
            if seeds_ctx.is_empty() { ContextPoset::new(dim, &tol) } else { ContextPoset::build(&seeds_ctx, &opts, &tol)? };
        let seeds = seeds_ctx.iter().map(|c| poset.find(c).expect("seed context in poset")).collect::<Vec<_>>();

        let mut subobjects = Vec::new();
        let mut projections = Vec::new();
        for spec in &scenario.subobjects {
            let s = match &spec.def {
                SubobjectDef::Characters { context, blocks } => {
                    let v = *seeds
                        .get(*context)
                        .ok_or_else(|| Error::Invalid(format!("sub-object {} names context {context}", spec.name)))?;
                    let set = to_set(blocks, poset.context(v))?;
                    transported_subobject(&poset, v, set, &closure_unitaries)?
                }
                SubobjectDef::Dasein { projection } => {
                    let p = Projection::new(to_matrix(projection, dim)?, &tol)?;
                    let s = daseinisation_subobject(&poset, &p)?;
                    projections.push((spec.name.clone(), p));
                    s
                }
                SubobjectDef::DaseinVector { vector } => {
                    let p = Projection::onto_vector(&to_vector(vector, dim)?)?;
                    let s = daseinisation_subobject(&poset, &p)?;
                    projections.push((spec.name.clone(), p));
                    s
                }
            };
            subobjects.push((spec.name.clone(), s));
        }

        Ok(Model { scenario, tol, state, hamiltonian, flow, group, poset, seeds, subobjects, projections })
    }
}
