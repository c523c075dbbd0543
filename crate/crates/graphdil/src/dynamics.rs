//! Graphs carrying operator families `φ(u, v)` and generator families
//! `A(u, v)`, checkers for the identity, divisibility and additivity axioms
//! and for geometric growth, and builders for example systems: interpolated
//! Hamiltonians, Lindblad generators and weighted acyclic networks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linops::{
    self, expm, hermitian_eigen, spectral_norm, CMatrix, LinopsError, SuperOp, C64,
};
use crate::report::CheckReport;
use crate::rewrite::{EdgeContext, NodeId};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DynamicsError {
    #[error("({0}, {1}) is not an edge of the graph")]
    MissingEdge(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("duplicate node {0} in ordered node list")]
    DuplicateNode(NodeId),
    #[error("interval endpoints out of order: {0}")]
    Order(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("network has a directed cycle through {0}")]
    Cycle(NodeId),
    #[error("more than {limit} paths from {from} to {to}")]
    PathLimit { from: NodeId, to: NodeId, limit: usize },
    #[error("evaluator returned shape {got:?}, expected {dim}x{dim}")]
    Shape { got: (usize, usize), dim: usize },
    #[error(transparent)]
    Linops(#[from] LinopsError),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

/// Finite linearly ordered node set with edge relation `u ⪯ v`.
///
/// Nodes are listed in increasing `⪯` order. Each key also carries a real
/// coordinate `key * unit`, used by time-dependent examples. Time grids for
/// families on `(J, ≥)` list keys in decreasing order, so that `u ⪯ v` means
/// `coord(u) ≥ coord(v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearOrderGraph {
    nodes: Vec<NodeId>,
    rank: HashMap<NodeId, usize>,
    unit: f64,
}

impl LinearOrderGraph {
    pub fn new(nodes: Vec<NodeId>) -> Result<Self> {
        let mut rank = HashMap::new();
        for (i, &n) in nodes.iter().enumerate() {
            if rank.insert(n, i).is_some() {
                return Err(DynamicsError::DuplicateNode(n));
            }
        }
        Ok(Self { nodes, rank, unit: 1.0 })
    }

    /// Keys `0..=n` in increasing order.
    pub fn ascending(n: i64) -> Self {
        Self::new((0..=n).map(NodeId).collect()).expect("distinct keys")
    }

    /// Grid `t_k = k·t_max/steps`. With `decreasing` the order is `≥`, the
    /// orientation of evolution families `φ(t, s)`, `t ≥ s`.
    pub fn time_grid(steps: usize, t_max: f64, decreasing: bool) -> Self {
        let mut keys: Vec<NodeId> = (0..=steps as i64).map(NodeId).collect();
        if decreasing {
            keys.reverse();
        }
        let mut g = Self::new(keys).expect("distinct keys");
        g.unit = t_max / steps as f64;
        g
    }

    pub fn with_unit(mut self, unit: f64) -> Self {
        self.unit = unit;
        self
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn unit(&self) -> f64 {
        self.unit
    }

    pub fn contains(&self, u: NodeId) -> bool {
        self.rank.contains_key(&u)
    }

    pub fn rank(&self, u: NodeId) -> Result<usize> {
        self.rank.get(&u).copied().ok_or(DynamicsError::UnknownNode(u))
    }

    /// `u ⪯ v`; false when either node is unknown.
    pub fn precedes(&self, u: NodeId, v: NodeId) -> bool {
        matches!((self.rank.get(&u), self.rank.get(&v)), (Some(a), Some(b)) if a <= b)
    }

    pub fn coord(&self, u: NodeId) -> f64 {
        u.0 as f64 * self.unit
    }

    pub fn min(&self, u: NodeId, v: NodeId) -> NodeId {
        if self.precedes(u, v) {
            u
        } else {
            v
        }
    }

    pub fn max(&self, u: NodeId, v: NodeId) -> NodeId {
        if self.precedes(u, v) {
            v
        } else {
            u
        }
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (i, &u) in self.nodes.iter().enumerate() {
            for &v in &self.nodes[i..] {
                out.push((u, v));
            }
        }
        out
    }

    /// All `(u, v, w)` with `u ⪯ v ⪯ w`.
    pub fn chains(&self) -> Vec<(NodeId, NodeId, NodeId)> {
        let n = self.nodes.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    out.push((self.nodes[i], self.nodes[j], self.nodes[k]));
                }
            }
        }
        out
    }

    pub fn edge_context(&self) -> EdgeContext {
        EdgeContext::new(self.nodes.iter().copied(), self.edges()).expect("edges use listed nodes")
    }
}

/// Graph underlying a family: either a linear order or an explicit edge set.
#[derive(Clone, Debug)]
pub enum GraphHandle {
    Order(Arc<LinearOrderGraph>),
    General(Arc<EdgeContext>),
}

impl GraphHandle {
    pub fn nodes(&self) -> Vec<NodeId> {
        match self {
            GraphHandle::Order(g) => g.nodes().to_vec(),
            GraphHandle::General(c) => c.nodes().iter().copied().collect(),
        }
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        match self {
            GraphHandle::Order(g) => g.precedes(u, v),
            GraphHandle::General(c) => c.has_edge(u, v),
        }
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        match self {
            GraphHandle::Order(g) => g.edges(),
            GraphHandle::General(c) => c.edges().iter().copied().collect(),
        }
    }

    /// Composable triples: `(u, v)`, `(v, w)` and `(u, w)` are all edges.
    pub fn triples(&self) -> Vec<(NodeId, NodeId, NodeId)> {
        match self {
            GraphHandle::Order(g) => g.chains(),
            GraphHandle::General(c) => {
                let mut out = Vec::new();
                for &(u, v) in c.edges() {
                    for &w in c.nodes() {
                        if c.has_edge(v, w) && c.has_edge(u, w) {
                            out.push((u, v, w));
                        }
                    }
                }
                out
            }
        }
    }

    pub fn edge_context(&self) -> EdgeContext {
        match self {
            GraphHandle::Order(g) => g.edge_context(),
            GraphHandle::General(c) => (**c).clone(),
        }
    }

    pub fn as_order(&self) -> Option<&Arc<LinearOrderGraph>> {
        match self {
            GraphHandle::Order(g) => Some(g),
            GraphHandle::General(_) => None,
        }
    }
}

impl From<LinearOrderGraph> for GraphHandle {
    fn from(g: LinearOrderGraph) -> Self {
        GraphHandle::Order(Arc::new(g))
    }
}

impl From<EdgeContext> for GraphHandle {
    fn from(c: EdgeContext) -> Self {
        GraphHandle::General(Arc::new(c))
    }
}

pub type EdgeFn = Arc<dyn Fn(NodeId, NodeId) -> CMatrix + Send + Sync>;

type Cache = Arc<RwLock<HashMap<(NodeId, NodeId), CMatrix>>>;

// Shared core of operator and generator families: a graph, a dimension and
// a memoized evaluator.
#[derive(Clone)]
struct EdgeValues {
    graph: GraphHandle,
    dim: usize,
    eval: EdgeFn,
    cache: Cache,
}

impl EdgeValues {
    fn new(graph: GraphHandle, dim: usize, eval: EdgeFn) -> Self {
        Self { graph, dim, eval, cache: Arc::new(RwLock::new(HashMap::new())) }
    }

    fn get(&self, u: NodeId, v: NodeId) -> Result<CMatrix> {
        if !self.graph.has_edge(u, v) {
            return Err(DynamicsError::MissingEdge(u, v));
        }
        if let Some(m) = self.cache.read().expect("cache lock").get(&(u, v)) {
            return Ok(m.clone());
        }
        let m = (self.eval)(u, v);
        if m.shape() != (self.dim, self.dim) {
            return Err(DynamicsError::Shape { got: m.shape(), dim: self.dim });
        }
        self.cache.write().expect("cache lock").entry((u, v)).or_insert_with(|| m.clone());
        Ok(m)
    }
}

/// Edge-indexed family of bounded operators `φ(u, v)`.
#[derive(Clone)]
pub struct OperatorFamily {
    values: EdgeValues,
    contraction: bool,
}

impl fmt::Debug for OperatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorFamily")
            .field("dim", &self.values.dim)
            .field("contraction", &self.contraction)
            .finish_non_exhaustive()
    }
}

impl OperatorFamily {
    /// Builds the family and evaluates every edge once to set the contraction
    /// flag and validate shapes.
    pub fn new(
        graph: impl Into<GraphHandle>,
        dim: usize,
        eval: impl Fn(NodeId, NodeId) -> CMatrix + Send + Sync + 'static,
    ) -> Result<Self> {
        let values = EdgeValues::new(graph.into(), dim, Arc::new(eval));
        let mut contraction = true;
        for (u, v) in values.graph.edges() {
            contraction &= spectral_norm(&values.get(u, v)?) <= 1.0 + 1e-10;
        }
        Ok(Self { values, contraction })
    }

    pub fn eval(&self, u: NodeId, v: NodeId) -> Result<CMatrix> {
        self.values.get(u, v)
    }

    pub fn dim(&self) -> usize {
        self.values.dim
    }

    pub fn graph(&self) -> &GraphHandle {
        &self.values.graph
    }

    pub fn is_contraction(&self) -> bool {
        self.contraction
    }

    /// Largest `‖φ(u, v)‖` over all edges.
    pub fn sup_norm(&self) -> Result<f64> {
        let mut m: f64 = 0.0;
        for (u, v) in self.graph().edges() {
            m = m.max(spectral_norm(&self.eval(u, v)?));
        }
        Ok(m)
    }
}

/// Edge-indexed family of generators `A(u, v)`.
#[derive(Clone)]
pub struct GeneratorFamily {
    values: EdgeValues,
    dissipative: bool,
}

impl fmt::Debug for GeneratorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorFamily")
            .field("dim", &self.values.dim)
            .field("dissipative", &self.dissipative)
            .finish_non_exhaustive()
    }
}

impl GeneratorFamily {
    pub fn new(
        graph: impl Into<GraphHandle>,
        dim: usize,
        eval: impl Fn(NodeId, NodeId) -> CMatrix + Send + Sync + 'static,
    ) -> Result<Self> {
        let values = EdgeValues::new(graph.into(), dim, Arc::new(eval));
        let mut dissipative = true;
        for (u, v) in values.graph.edges() {
            dissipative &= linops::is_dissipative_hilbert(&values.get(u, v)?, 1e-10);
        }
        Ok(Self { values, dissipative })
    }

    pub fn eval(&self, u: NodeId, v: NodeId) -> Result<CMatrix> {
        self.values.get(u, v)
    }

    pub fn dim(&self) -> usize {
        self.values.dim
    }

    pub fn graph(&self) -> &GraphHandle {
        &self.values.graph
    }

    pub fn is_dissipative(&self) -> bool {
        self.dissipative
    }

    /// The family `e^{α A(u, v)}`.
    pub fn exponential(&self, alpha: f64) -> Result<OperatorFamily> {
        let values = self.values.clone();
        OperatorFamily::new(self.graph().clone(), self.dim(), move |u, v| {
            let a = values.get(u, v).expect("edge checked by the operator family");
            expm(&a.scale_real(alpha)).expect("square generator")
        })
    }

    /// `α·A`, as a generator family.
    pub fn scaled(&self, alpha: f64) -> Result<GeneratorFamily> {
        let values = self.values.clone();
        GeneratorFamily::new(self.graph().clone(), self.dim(), move |u, v| {
            values.get(u, v).expect("edge checked by the generator family").scale_real(alpha)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthKind {
    Additive,
    Superadditive,
    Subadditive,
}

/// Nonnegative edge function `ℓ(u, v)` with `ℓ(u, u) = 0`.
#[derive(Clone)]
pub struct LengthFunction {
    eval: Arc<dyn Fn(NodeId, NodeId) -> f64 + Send + Sync>,
    kind: LengthKind,
}

impl fmt::Debug for LengthFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LengthFunction").field("kind", &self.kind).finish_non_exhaustive()
    }
}

impl LengthFunction {
    pub fn new(kind: LengthKind, eval: impl Fn(NodeId, NodeId) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(eval), kind }
    }

    /// `ℓ(u, v) = rate·|coord(v) − coord(u)|`, additive on a linear order.
    pub fn linear(order: &Arc<LinearOrderGraph>, rate: f64) -> Self {
        let g = order.clone();
        Self::new(LengthKind::Additive, move |u, v| rate * (g.coord(v) - g.coord(u)).abs())
    }

    pub fn zero() -> Self {
        Self::new(LengthKind::Additive, |_, _| 0.0)
    }

    pub fn eval(&self, u: NodeId, v: NodeId) -> f64 {
        (self.eval)(u, v)
    }

    pub fn kind(&self) -> LengthKind {
        self.kind
    }

    /// Checks `ℓ(u, u) = 0`, nonnegativity and the kind's inequality on every
    /// chain of the order.
    pub fn check_kind(&self, order: &LinearOrderGraph, tol: f64) -> CheckReport {
        let mut r = CheckReport::new(format!("length function ({:?})", self.kind), tol);
        for &u in order.nodes() {
            r.record(self.eval(u, u).abs(), || format!("l({u},{u})"));
        }
        for (u, v, w) in order.chains() {
            let (a, b, c) = (self.eval(u, v), self.eval(v, w), self.eval(u, w));
            r.record((-a).max(0.0), || format!("l({u},{v}) < 0"));
            let defect = match self.kind {
                LengthKind::Additive => (c - a - b).abs(),
                LengthKind::Superadditive => (a + b - c).max(0.0),
                LengthKind::Subadditive => (c - a - b).max(0.0),
            };
            r.record(defect, || format!("({u},{v},{w})"));
        }
        r
    }
}

/// `‖φ(u, u) − I‖ ≤ tol` for every node carrying a loop edge.
pub fn check_identity_axiom(fam: &OperatorFamily, tol: f64) -> Result<CheckReport> {
    let mut r = CheckReport::new("identity axiom", tol);
    let id = CMatrix::identity(fam.dim());
    for u in fam.graph().nodes() {
        if fam.graph().has_edge(u, u) {
            let d = spectral_norm(&(&fam.eval(u, u)? - &id));
            r.record(d, || format!("u={u}"));
        }
    }
    Ok(r)
}

/// `‖φ(u, w) − φ(u, v)φ(v, w)‖`.
pub fn divisibility_defect(fam: &OperatorFamily, u: NodeId, v: NodeId, w: NodeId) -> Result<f64> {
    let (uv, vw, uw) = (fam.eval(u, v)?, fam.eval(v, w)?, fam.eval(u, w)?);
    Ok(spectral_norm(&(&uw - &(&uv * &vw))))
}

pub fn check_divisibility(fam: &OperatorFamily, tol: f64) -> Result<CheckReport> {
    let mut r = CheckReport::new("divisibility", tol);
    for (u, v, w) in fam.graph().triples() {
        let d = divisibility_defect(fam, u, v, w)?;
        r.record(d, || format!("({u},{v},{w})"));
    }
    Ok(r)
}

/// `‖A(u, w) − A(u, v) − A(v, w)‖`.
pub fn additivity_defect(gen: &GeneratorFamily, u: NodeId, v: NodeId, w: NodeId) -> Result<f64> {
    let (uv, vw, uw) = (gen.eval(u, v)?, gen.eval(v, w)?, gen.eval(u, w)?);
    Ok(spectral_norm(&(&(&uw - &uv) - &vw)))
}

pub fn check_additivity(gen: &GeneratorFamily, tol: f64) -> Result<CheckReport> {
    let mut r = CheckReport::new("additivity", tol);
    for (u, v, w) in gen.graph().triples() {
        let d = additivity_defect(gen, u, v, w)?;
        r.record(d, || format!("({u},{v},{w})"));
    }
    Ok(r)
}

pub fn check_contraction(fam: &OperatorFamily, tol: f64) -> Result<CheckReport> {
    let mut r = CheckReport::new("contraction", tol);
    for (u, v) in fam.graph().edges() {
        let excess = spectral_norm(&fam.eval(u, v)?) - 1.0;
        r.record(excess.max(0.0), || format!("({u},{v})"));
    }
    Ok(r)
}

/// `‖φ(u, v) − I‖ ≤ ℓ(u, v)` on the given edges (plus `tol` of slack).
pub fn check_geometric_growth(
    fam: &OperatorFamily,
    length: &LengthFunction,
    edges: &[(NodeId, NodeId)],
    tol: f64,
) -> Result<CheckReport> {
    let mut r = CheckReport::new("geometric growth", tol);
    if length.kind() == LengthKind::Subadditive {
        r.note("length function is only subadditive; the growth notion expects superadditive lengths");
    }
    let id = CMatrix::identity(fam.dim());
    for &(u, v) in edges {
        let lhs = spectral_norm(&(&fam.eval(u, v)? - &id));
        r.record_bounded(lhs, length.eval(u, v) + tol, || format!("({u},{v})"));
    }
    Ok(r)
}

/// `‖A(u, v)‖ ≤ ℓ(u, v)` on the given edges (plus `tol` of slack).
pub fn check_generator_growth(
    gen: &GeneratorFamily,
    length: &LengthFunction,
    edges: &[(NodeId, NodeId)],
    tol: f64,
) -> Result<CheckReport> {
    let mut r = CheckReport::new("generator geometric growth", tol);
    for &(u, v) in edges {
        let lhs = spectral_norm(&gen.eval(u, v)?);
        r.record_bounded(lhs, length.eval(u, v) + tol, || format!("({u},{v})"));
    }
    Ok(r)
}

/// Right-hand side of a Lipschitz estimate for `‖φ(u, v) − φ(u', v')‖`.
#[derive(Clone, Copy, Debug)]
pub enum LipschitzBound<'a> {
    /// `C·(ℓ(ū,u) + ℓ(v,v̄) + ℓ(ū,u') + ℓ(v',v̄))` for a divisible family with
    /// `‖φ‖ ≤ C` and `‖φ − I‖ ≤ ℓ`.
    Growth { length: &'a LengthFunction, constant: f64 },
    /// `‖A(ū,u)‖ + ‖A(v,v̄)‖ + ‖A(ū,u')‖ + ‖A(v',v̄)‖` for `φ = e^{αA}` with
    /// additive dissipative `A`.
    GeneratorNorms { generators: &'a GeneratorFamily, alpha: f64 },
}

/// Checks the four-term estimate at each pair of edges, where `ū` and `v̄`
/// are the `⪯`-minimum of the tails and maximum of the heads.
pub fn lipschitz_check(
    fam: &OperatorFamily,
    order: &LinearOrderGraph,
    bound: LipschitzBound<'_>,
    pairs: &[((NodeId, NodeId), (NodeId, NodeId))],
    tol: f64,
) -> Result<CheckReport> {
    let mut r = CheckReport::new("lipschitz bound", tol);
    for &((u, v), (u2, v2)) in pairs {
        let lhs = spectral_norm(&(&fam.eval(u, v)? - &fam.eval(u2, v2)?));
        let lo = order.min(u, u2);
        let hi = order.max(v, v2);
        let legs = [(lo, u), (v, hi), (lo, u2), (v2, hi)];
        let rhs = match bound {
            LipschitzBound::Growth { length, constant } => {
                constant * legs.iter().map(|&(a, b)| length.eval(a, b)).sum::<f64>()
            }
            LipschitzBound::GeneratorNorms { generators, alpha } => {
                let mut s = 0.0;
                for (a, b) in legs {
                    s += alpha.abs() * spectral_norm(&generators.eval(a, b)?);
                }
                s
            }
        };
        r.record_bounded(lhs, rhs + tol, || format!("({u},{v}) vs ({u2},{v2})"));
    }
    Ok(r)
}

/// `∫_s^t A_τ dτ` by composite Simpson, doubling the panel count until two
/// successive estimates agree to 1e-12 (relative).
pub fn integrate_generators(rate: impl Fn(f64) -> CMatrix, s: f64, t: f64) -> Result<CMatrix> {
    if t < s {
        return Err(DynamicsError::Order(format!("t = {t} < s = {s}")));
    }
    let simpson = |panels: usize| {
        let h = (t - s) / panels as f64;
        let mut acc = (&rate(s) + &rate(t)).scale_real(h / 6.0);
        for p in 0..panels {
            let a = s + p as f64 * h;
            acc = &acc + &rate(a + 0.5 * h).scale_real(4.0 * h / 6.0);
            if p + 1 < panels {
                acc = &acc + &rate(a + h).scale_real(2.0 * h / 6.0);
            }
        }
        acc
    };
    let mut panels = 2;
    let mut prev = simpson(panels);
    while panels < 1 << 16 {
        panels *= 2;
        let next = simpson(panels);
        let change = spectral_norm(&(&next - &prev));
        prev = next;
        if change <= 1e-12 * spectral_norm(&prev).max(1.0) {
            break;
        }
    }
    Ok(prev)
}

/// Time-dependent generator `A_τ = (τ/T²)Ψ₁ + ((T − τ)/T²)Ψ₂` with
/// `Ψᵢ = i[hᵢ, ·]` on `M_d`, and its closed-form integrals.
#[derive(Clone, Debug)]
pub struct InterpolatedHamiltonians {
    pub h1: CMatrix,
    pub h2: CMatrix,
    pub t_max: f64,
    pub psi1: SuperOp,
    pub psi2: SuperOp,
}

impl InterpolatedHamiltonians {
    pub fn new(h1: CMatrix, h2: CMatrix, t_max: f64) -> Result<Self> {
        for h in [&h1, &h2] {
            if !h.is_hermitian(1e-12) {
                return Err(DynamicsError::Input("Hamiltonians must be Hermitian".into()));
            }
        }
        if h1.shape() != h2.shape() {
            return Err(DynamicsError::Input("Hamiltonians differ in size".into()));
        }
        if !(t_max > 0.0) {
            return Err(DynamicsError::Input(format!("t_max must be positive, got {t_max}")));
        }
        let i = C64::new(0.0, 1.0);
        let psi1 = SuperOp::commutator_with(&h1).scale(i);
        let psi2 = SuperOp::commutator_with(&h2).scale(i);
        Ok(Self { h1, h2, t_max, psi1, psi2 })
    }

    pub fn dim(&self) -> usize {
        self.h1.rows()
    }

    /// Coefficients of `Ψ₁` and `Ψ₂` in `A(t, s) = ∫_s^t A_τ dτ`.
    pub fn coefficients(&self, t: f64, s: f64) -> (f64, f64) {
        let tm2 = 2.0 * self.t_max * self.t_max;
        let sq = t * t - s * s;
        (sq / tm2, (2.0 * self.t_max * (t - s) - sq) / tm2)
    }

    pub fn generator(&self, t: f64, s: f64) -> CMatrix {
        let (c1, c2) = self.coefficients(t, s);
        self.combine(c1, c2)
    }

    /// `A_τ`.
    pub fn rate(&self, tau: f64) -> CMatrix {
        let tm2 = self.t_max * self.t_max;
        self.combine(tau / tm2, (self.t_max - tau) / tm2)
    }

    fn combine(&self, c1: f64, c2: f64) -> CMatrix {
        &self.psi1.matrix().scale_real(c1) + &self.psi2.matrix().scale_real(c2)
    }

    /// The superoperator `[[h₁, h₂], ·]`.
    pub fn commutator_superop(&self) -> SuperOp {
        SuperOp::commutator_with(&linops::commutator(&self.h1, &self.h2).expect("same shape"))
    }

    /// True when `[h₁, h₂]` is a multiple of the identity, so `Ψ₁` and `Ψ₂`
    /// commute and the family is divisible.
    pub fn is_degenerate(&self) -> bool {
        let c = self.commutator_superop();
        spectral_norm(c.matrix()) <= 1e-12 * (1.0 + spectral_norm(&self.h1) * spectral_norm(&self.h2))
    }

    /// `A(u, v) = A(coord u, coord v)` on a decreasing time grid.
    pub fn family(&self, grid: Arc<LinearOrderGraph>) -> Result<GeneratorFamily> {
        let this = self.clone();
        let g = grid.clone();
        GeneratorFamily::new(GraphHandle::Order(grid), self.dim() * self.dim(), move |u, v| {
            this.generator(g.coord(u), g.coord(v))
        })
    }
}

/// Interpolated-Hamiltonian generator family on the decreasing grid
/// `{k·t_max/steps}`. Rejects commuting inputs, whose family is divisible.
pub fn example_indivisible(h1: CMatrix, h2: CMatrix, t_max: f64, steps: usize) -> Result<GeneratorFamily> {
    let ex = InterpolatedHamiltonians::new(h1, h2, t_max)?;
    if ex.is_degenerate() {
        return Err(DynamicsError::Degenerate("[h1, h2] is a multiple of the identity".into()));
    }
    ex.family(Arc::new(LinearOrderGraph::time_grid(steps, t_max, true)))
}

/// Commuting family `A(t, s) = ((t − s) + (t² − s²)/2)·X`, the integral of
/// `A_τ = (1 + τ)X`, on the decreasing grid `{k·t_max/steps}`.
pub fn example_divisible(x: CMatrix, t_max: f64, steps: usize) -> Result<GeneratorFamily> {
    if !x.is_square() {
        return Err(DynamicsError::Input("generator must be square".into()));
    }
    let grid = Arc::new(LinearOrderGraph::time_grid(steps, t_max, true));
    let g = grid.clone();
    GeneratorFamily::new(GraphHandle::Order(grid), x.rows(), move |u, v| {
        let (t, s) = (g.coord(u), g.coord(v));
        x.scale_real((t - s) + 0.5 * (t * t - s * s))
    })
}

/// `L = i[h, ·] + Ψ − ½{Ψ(1), ·}` on `M_d`.
pub fn lindblad_generator(h: &CMatrix, psi: &SuperOp) -> Result<SuperOp> {
    if !h.is_hermitian(1e-12) {
        return Err(DynamicsError::Input("h must be Hermitian".into()));
    }
    if psi.dim() != h.rows() {
        return Err(DynamicsError::Input("Ψ and h act on different spaces".into()));
    }
    let psi_one = psi.apply(&CMatrix::identity(h.rows()))?;
    let ham = SuperOp::commutator_with(h).scale(C64::new(0.0, 1.0));
    Ok(ham.add(psi).sub(&SuperOp::anticommutator_with(&psi_one).scale_real(0.5)))
}

/// `D_L(a, b) = L(b*a) − (L(b)*a + b*L(a))`.
pub fn dissipation_map(l: &SuperOp, a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let bs = b.adjoint();
    let first = l.apply(&(&bs * a))?;
    let second = &(&l.apply(b)?.adjoint() * a) + &(&bs * &l.apply(a)?);
    Ok(&first - &second)
}

/// Outcome of [`check_schwarz_generator`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchwarzReport {
    pub pass: bool,
    pub self_adjoint: CheckReport,
    pub unital: CheckReport,
    pub dissipation_psd: CheckReport,
    /// Only run when the three conditions hold.
    pub contraction: Option<CheckReport>,
}

/// Sampled contraction times `α` used by [`check_schwarz_generator`].
pub const SCHWARZ_ALPHAS: [f64; 3] = [0.1, 1.0, 10.0];

/// Checks `L(a*) = L(a)*`, `L(1) = 0` and `D_L(a, a) ⪰ 0` on the samples,
/// then `‖e^{αL}(a)‖ ≤ ‖a‖` in operator norm for `α ∈ {0.1, 1, 10}`.
pub fn check_schwarz_generator(l: &SuperOp, samples: &[CMatrix], tol: f64) -> Result<SchwarzReport> {
    let d = l.dim();
    let mut self_adjoint = CheckReport::new("self-adjoint", tol);
    let mut unital = CheckReport::new("L(1) = 0", tol);
    let mut dissipation_psd = CheckReport::new("D_L(a,a) psd", tol);
    unital.record(spectral_norm(&l.apply(&CMatrix::identity(d))?), || "L(1)".into());
    for (k, a) in samples.iter().enumerate() {
        let lhs = l.apply(&a.adjoint())?;
        let rhs = l.apply(a)?.adjoint();
        self_adjoint.record(spectral_norm(&(&lhs - &rhs)), || format!("sample {k}"));
        let dl = dissipation_map(l, a, a)?;
        let herm_defect = spectral_norm(&(&dl - &dl.adjoint()));
        let (vals, _) = hermitian_eigen(&dl)?;
        let neg = (-vals[0]).max(0.0);
        dissipation_psd.record(neg.max(herm_defect), || format!("sample {k}"));
    }
    let mut pass = self_adjoint.pass && unital.pass && dissipation_psd.pass;
    let contraction = if pass {
        let mut c = CheckReport::new("contraction of exp(alpha L)", tol);
        for &alpha in &SCHWARZ_ALPHAS {
            let e = l.scale_real(alpha).expm();
            for (k, a) in samples.iter().enumerate() {
                let lhs = spectral_norm(&e.apply(a)?);
                c.record_bounded(lhs, spectral_norm(a) + tol, || format!("alpha={alpha}, sample {k}"));
            }
        }
        pass &= c.pass;
        Some(c)
    } else {
        None
    };
    Ok(SchwarzReport { pass, self_adjoint, unital, dissipation_psd, contraction })
}

/// Maximum number of paths per node pair in a [`DagNetwork`].
pub const PATH_LIMIT: u128 = 10_000;

/// Finite directed acyclic graph with matrix edge weights.
#[derive(Clone, Debug)]
pub struct DagNetwork {
    dim: usize,
    nodes: Vec<NodeId>,
    weights: BTreeMap<(NodeId, NodeId), CMatrix>,
    topo: Vec<NodeId>,
}

impl DagNetwork {
    pub fn new(
        dim: usize,
        nodes: impl IntoIterator<Item = NodeId>,
        weights: impl IntoIterator<Item = ((NodeId, NodeId), CMatrix)>,
    ) -> Result<Self> {
        let nodes: Vec<NodeId> = {
            let mut v: Vec<NodeId> = nodes.into_iter().collect();
            v.sort();
            v.dedup();
            v
        };
        let weights: BTreeMap<_, _> = weights.into_iter().collect();
        for (&(u, v), w) in &weights {
            for n in [u, v] {
                if nodes.binary_search(&n).is_err() {
                    return Err(DynamicsError::UnknownNode(n));
                }
            }
            if w.shape() != (dim, dim) {
                return Err(DynamicsError::Shape { got: w.shape(), dim });
            }
        }
        // Kahn's algorithm; leftover nodes lie on a cycle.
        let mut indegree: BTreeMap<NodeId, usize> = nodes.iter().map(|&n| (n, 0)).collect();
        for &(_, v) in weights.keys() {
            *indegree.get_mut(&v).expect("checked") += 1;
        }
        let mut ready: Vec<NodeId> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
        let mut topo = Vec::new();
        while let Some(u) = ready.pop() {
            topo.push(u);
            for (&(a, b), _) in weights.range((u, NodeId(i64::MIN))..=(u, NodeId(i64::MAX))) {
                debug_assert_eq!(a, u);
                let d = indegree.get_mut(&b).expect("checked");
                *d -= 1;
                if *d == 0 {
                    ready.push(b);
                }
            }
        }
        if topo.len() < nodes.len() {
            let stuck = indegree.iter().find(|(n, &d)| d > 0 && !topo.contains(n)).map(|(&n, _)| n);
            return Err(DynamicsError::Cycle(stuck.expect("some node is on a cycle")));
        }
        Ok(Self { dim, nodes, weights, topo })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn weights(&self) -> &BTreeMap<(NodeId, NodeId), CMatrix> {
        &self.weights
    }

    fn successors(&self, u: NodeId) -> impl Iterator<Item = (NodeId, &CMatrix)> {
        self.weights.range((u, NodeId(i64::MIN))..=(u, NodeId(i64::MAX))).map(|(&(_, v), w)| (v, w))
    }

    /// Number of directed paths from `u` to `v` (the trivial path when `u = v`).
    pub fn path_count(&self, u: NodeId, v: NodeId) -> u128 {
        let mut count: HashMap<NodeId, u128> = HashMap::new();
        for &x in self.topo.iter().rev() {
            let mut c = u128::from(x == v);
            for (y, _) in self.successors(x) {
                c = c.saturating_add(count[&y]);
            }
            count.insert(x, c);
        }
        count[&u]
    }

    /// Path sums `φ(x, v)` for every `x`, from memoized suffix sums
    /// `φ(x, v) = [x = v]·I + Σ_y w(x, y)·φ(y, v)`.
    fn path_sums_to(&self, v: NodeId) -> HashMap<NodeId, CMatrix> {
        let mut phi: HashMap<NodeId, CMatrix> = HashMap::new();
        for &x in self.topo.iter().rev() {
            let mut acc = if x == v { CMatrix::identity(self.dim) } else { CMatrix::zeros(self.dim, self.dim) };
            for (y, w) in self.successors(x) {
                acc = &acc + &(w * &phi[&y]);
            }
            phi.insert(x, acc);
        }
        phi
    }

    /// Every path from `u` to `w` avoiding `avoid`, as node sequences.
    pub fn paths_avoiding(&self, u: NodeId, w: NodeId, avoid: Option<NodeId>) -> Vec<Vec<NodeId>> {
        let mut out = Vec::new();
        let mut stack = vec![u];
        self.walk(u, w, avoid, &mut stack, &mut out);
        out
    }

    fn walk(&self, x: NodeId, w: NodeId, avoid: Option<NodeId>, stack: &mut Vec<NodeId>, out: &mut Vec<Vec<NodeId>>) {
        if Some(x) == avoid {
            return;
        }
        if x == w {
            out.push(stack.clone());
        }
        for (y, _) in self.successors(x) {
            stack.push(y);
            self.walk(y, w, avoid, stack, out);
            stack.pop();
        }
    }

    /// Ordered product of the weights along a path.
    pub fn path_weight(&self, path: &[NodeId]) -> CMatrix {
        let mut acc = CMatrix::identity(self.dim);
        for pair in path.windows(2) {
            acc = &acc * &self.weights[&(pair[0], pair[1])];
        }
        acc
    }
}

/// Path-sum family `φ(u, v) = Σ_π w_π` on the complete graph over the
/// network's nodes; `φ(u, v) = 0` when no path exists.
pub fn network_family(net: &DagNetwork) -> Result<OperatorFamily> {
    let mut table: HashMap<(NodeId, NodeId), CMatrix> = HashMap::new();
    for &v in net.nodes() {
        for &u in net.nodes() {
            if net.path_count(u, v) > PATH_LIMIT {
                return Err(DynamicsError::PathLimit { from: u, to: v, limit: PATH_LIMIT as usize });
            }
        }
        for (u, m) in net.path_sums_to(v) {
            table.insert((u, v), m);
        }
    }
    let ctx = EdgeContext::complete(net.nodes().iter().copied());
    OperatorFamily::new(ctx, net.dim(), move |u, v| table[&(u, v)].clone())
}

/// `Σ w_π` over paths from `u` to `w` that avoid `v`, enumerated directly.
pub fn network_defect(net: &DagNetwork, u: NodeId, v: NodeId, w: NodeId) -> Result<CMatrix> {
    for n in [u, v, w] {
        if net.nodes().binary_search(&n).is_err() {
            return Err(DynamicsError::UnknownNode(n));
        }
    }
    let mut acc = CMatrix::zeros(net.dim(), net.dim());
    for path in net.paths_avoiding(u, w, Some(v)) {
        acc = &acc + &net.path_weight(&path);
    }
    Ok(acc)
}

/// Lindblad generator with `Ψ(a) = Σ Kᵢ* a Kᵢ`.
pub fn lindblad_from_kraus(h: &CMatrix, kraus: &[CMatrix]) -> Result<SuperOp> {
    if kraus.is_empty() {
        return lindblad_generator(h, &SuperOp::zero(h.rows()));
    }
    lindblad_generator(h, &SuperOp::from_kraus_dual(kraus))
}
