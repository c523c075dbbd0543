//! JSON descriptions of graphs and dynamical systems, and the axiom report
//! computed from them.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dilate::{Channel, ChannelFamily, ChannelSpec, DilateError, DynamicalSystem, Flavor, SystemFamily};
use crate::dynamics::{
    self, DagNetwork, DynamicsError, GeneratorFamily, GraphHandle, InterpolatedHamiltonians, LengthFunction,
    LinearOrderGraph, OperatorFamily, SchwarzReport,
};
use crate::linops::{CMatrix, LinopsError, SuperOp};
use crate::report::{CheckReport, Suite};
use crate::rewrite::{EdgeContext, NodeId, RewriteError};
use crate::sample;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SystemError {
    #[error("invalid system spec: {0}")]
    Input(String),
    #[error(transparent)]
    Linops(#[from] LinopsError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Dilate(#[from] DilateError),
}

pub type Result<T> = std::result::Result<T, SystemError>;

fn input(msg: impl Into<String>) -> SystemError {
    SystemError::Input(msg.into())
}

/// Grid `{k·t_max/steps}`, ordered by `≥` unless `decreasing` is false.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGridSpec {
    pub steps: usize,
    pub t_max: f64,
    #[serde(default = "yes")]
    pub decreasing: bool,
}

/// Either `{"time_grid": {...}}` or `{"nodes", "edges", "order"}`. A present
/// `order` (listed in increasing `⪯` order) makes the graph a linear order
/// and `edges` is then ignored; `complete` adds every ordered pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    TimeGrid { time_grid: TimeGridSpec },
    Listed {
        #[serde(default)]
        nodes: Vec<NodeId>,
        #[serde(default)]
        edges: Vec<(NodeId, NodeId)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<Vec<NodeId>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<f64>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        complete: bool,
    },
}

fn yes() -> bool {
    true
}

impl GraphSpec {
    pub fn order(nodes: Vec<NodeId>) -> Self {
        GraphSpec::Listed { nodes: Vec::new(), edges: Vec::new(), order: Some(nodes), unit: None, complete: false }
    }

    pub fn general(nodes: Vec<NodeId>, edges: Vec<(NodeId, NodeId)>) -> Self {
        GraphSpec::Listed { nodes, edges, order: None, unit: None, complete: false }
    }

    pub fn time_grid(steps: usize, t_max: f64) -> Self {
        GraphSpec::TimeGrid { time_grid: TimeGridSpec { steps, t_max, decreasing: true } }
    }

    pub fn build(&self) -> Result<GraphHandle> {
        match self {
            GraphSpec::TimeGrid { time_grid: TimeGridSpec { steps, t_max, decreasing } } => {
                if *steps == 0 || !(*t_max > 0.0) {
                    return Err(input("time grid needs steps ≥ 1 and t_max > 0"));
                }
                Ok(LinearOrderGraph::time_grid(*steps, *t_max, *decreasing).into())
            }
            GraphSpec::Listed { nodes, edges, order, unit, complete } => {
                if let Some(order) = order {
                    if !nodes.is_empty() {
                        let mut a = nodes.clone();
                        let mut b = order.clone();
                        a.sort();
                        b.sort();
                        if a != b {
                            return Err(input("\"order\" must list exactly the nodes"));
                        }
                    }
                    let g = LinearOrderGraph::new(order.clone())?;
                    return Ok(match unit {
                        Some(u) => g.with_unit(*u),
                        None => g,
                    }
                    .into());
                }
                if nodes.is_empty() {
                    return Err(input("graph has no nodes"));
                }
                if *complete {
                    return Ok(EdgeContext::complete(nodes.iter().copied()).into());
                }
                Ok(EdgeContext::new(nodes.iter().copied(), edges.iter().copied())?.into())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeMatrix {
    pub edge: (NodeId, NodeId),
    pub matrix: CMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeChannel {
    pub edge: (NodeId, NodeId),
    pub channel: ChannelSpec,
}

fn alpha_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilySpec {
    /// Operators on the listed edges; loops default to the identity.
    Explicit { dim: usize, values: Vec<EdgeMatrix> },
    /// Generators `A(u, v)` on the listed edges (loops default to 0), with
    /// `φ = e^{αA}`.
    Generators {
        dim: usize,
        values: Vec<EdgeMatrix>,
        #[serde(default = "alpha_one")]
        alpha: f64,
    },
    /// Additive generators on a linear order: `segments[i]` sits between the
    /// `i`-th and `(i+1)`-th node and `A(u, v)` sums the pieces in between.
    Segments {
        segments: Vec<CMatrix>,
        #[serde(default = "alpha_one")]
        alpha: f64,
    },
    /// `A_τ = (τ/T²)i[h₁,·] + ((T−τ)/T²)i[h₂,·]` integrated over a
    /// decreasing grid with `steps` intervals on `[0, T]`.
    InterpolatedHamiltonians {
        h1: CMatrix,
        h2: CMatrix,
        t_max: f64,
        steps: usize,
        #[serde(default = "alpha_one")]
        alpha: f64,
    },
    /// `A(t, s) = ((t − s) + (t² − s²)/2)·x` on a decreasing grid.
    Commuting {
        x: CMatrix,
        t_max: f64,
        steps: usize,
        #[serde(default = "alpha_one")]
        alpha: f64,
    },
    /// Path sums of a weighted acyclic network, on the complete graph over
    /// its nodes.
    Network { dim: usize, nodes: Vec<NodeId>, weights: Vec<EdgeMatrix> },
    /// `A(t, s) = (t − s)·L` with `L = i[h,·] + Ψ − ½{Ψ(1),·}` and
    /// `Ψ(a) = Σ Kᵢ* a Kᵢ`, on a decreasing grid.
    Lindblad { h: CMatrix, kraus: Vec<CMatrix>, t_max: f64, steps: usize },
    /// CPTP maps on the listed edges; loops default to the identity channel.
    Channels { dim: usize, values: Vec<EdgeChannel> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LengthSpec {
    /// `ℓ(u, v) = rate·|coord(u) − coord(v)|`.
    Linear { rate: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Required unless the family determines its own graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    pub family: FamilySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<LengthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flavor: Option<Flavor>,
}

/// A built system plus the pieces only some reports need.
#[derive(Clone, Debug)]
pub struct BuiltSystem {
    pub system: DynamicalSystem,
    pub lindblad: Option<SuperOp>,
}

fn edge_table(dim: usize, values: &[EdgeMatrix], graph: &GraphHandle) -> Result<BTreeMap<(NodeId, NodeId), CMatrix>> {
    let mut table = BTreeMap::new();
    for v in values {
        let (a, b) = v.edge;
        if !graph.has_edge(a, b) {
            return Err(DynamicsError::MissingEdge(a, b).into());
        }
        if v.matrix.shape() != (dim, dim) {
            return Err(input(format!("matrix on ({a},{b}) has shape {:?}, expected {dim}x{dim}", v.matrix.shape())));
        }
        if table.insert(v.edge, v.matrix.clone()).is_some() {
            return Err(input(format!("edge ({a},{b}) listed twice")));
        }
    }
    Ok(table)
}

fn require_graph(spec: &SystemSpec) -> Result<GraphHandle> {
    spec.graph.as_ref().ok_or_else(|| input("this family kind needs a \"graph\" entry"))?.build()
}

fn decreasing_grid(steps: usize, t_max: f64) -> Result<Arc<LinearOrderGraph>> {
    if steps == 0 || !(t_max > 0.0) {
        return Err(input("grid needs steps ≥ 1 and t_max > 0"));
    }
    Ok(Arc::new(LinearOrderGraph::time_grid(steps, t_max, true)))
}

impl SystemSpec {
    pub fn build(&self) -> Result<BuiltSystem> {
        let mut lindblad = None;
        let family = match &self.family {
            FamilySpec::Explicit { dim, values } => {
                let graph = require_graph(self)?;
                let table = edge_table(*dim, values, &graph)?;
                for (u, v) in graph.edges() {
                    if u != v && !table.contains_key(&(u, v)) {
                        return Err(input(format!("no operator given for edge ({u},{v})")));
                    }
                }
                let d = *dim;
                SystemFamily::Operators(OperatorFamily::new(graph, d, move |u, v| {
                    table.get(&(u, v)).cloned().unwrap_or_else(|| CMatrix::identity(d))
                })?)
            }
            FamilySpec::Generators { dim, values, alpha } => {
                let graph = require_graph(self)?;
                let table = edge_table(*dim, values, &graph)?;
                for (u, v) in graph.edges() {
                    if u != v && !table.contains_key(&(u, v)) {
                        return Err(input(format!("no generator given for edge ({u},{v})")));
                    }
                }
                let d = *dim;
                let generators = GeneratorFamily::new(graph, d, move |u, v| {
                    table.get(&(u, v)).cloned().unwrap_or_else(|| CMatrix::zeros(d, d))
                })?;
                SystemFamily::Generators { generators, alpha: *alpha }
            }
            FamilySpec::Segments { segments, alpha } => {
                let graph = require_graph(self)?;
                let order = graph.as_order().cloned().ok_or_else(|| input("segment generators need a linear order"))?;
                if segments.len() + 1 != order.len() {
                    return Err(input(format!("{} segments for {} nodes", segments.len(), order.len())));
                }
                let d = segments.first().map(CMatrix::rows).ok_or_else(|| input("no segments"))?;
                if segments.iter().any(|s| s.shape() != (d, d)) {
                    return Err(input("segments differ in shape"));
                }
                let pieces = segments.clone();
                let ord = order.clone();
                let generators = GeneratorFamily::new(graph, d, move |u, v| {
                    let (a, b) = (ord.rank(u).expect("edge node"), ord.rank(v).expect("edge node"));
                    pieces[a..b].iter().fold(CMatrix::zeros(d, d), |acc, p| &acc + p)
                })?;
                SystemFamily::Generators { generators, alpha: *alpha }
            }
            FamilySpec::InterpolatedHamiltonians { h1, h2, t_max, steps, alpha } => {
                let grid = decreasing_grid(*steps, *t_max)?;
                let ex = InterpolatedHamiltonians::new(h1.clone(), h2.clone(), *t_max)?;
                SystemFamily::Generators { generators: ex.family(grid)?, alpha: *alpha }
            }
            FamilySpec::Commuting { x, t_max, steps, alpha } => {
                decreasing_grid(*steps, *t_max)?;
                SystemFamily::Generators { generators: dynamics::example_divisible(x.clone(), *t_max, *steps)?, alpha: *alpha }
            }
            FamilySpec::Network { dim, nodes, weights } => {
                let net = DagNetwork::new(*dim, nodes.iter().copied(), weights.iter().map(|w| (w.edge, w.matrix.clone())))?;
                SystemFamily::Operators(dynamics::network_family(&net)?)
            }
            FamilySpec::Lindblad { h, kraus, t_max, steps } => {
                let grid = decreasing_grid(*steps, *t_max)?;
                let l = dynamics::lindblad_from_kraus(h, kraus)?;
                let m = l.matrix().clone();
                let g = grid.clone();
                lindblad = Some(l);
                let n = m.rows();
                SystemFamily::Generators {
                    generators: GeneratorFamily::new(GraphHandle::Order(grid), n, move |u, v| {
                        m.scale_real(g.coord(u) - g.coord(v))
                    })?,
                    alpha: 1.0,
                }
            }
            FamilySpec::Channels { dim, values } => {
                let graph = require_graph(self)?;
                let mut chans = BTreeMap::new();
                for v in values {
                    if chans.insert(v.edge, v.channel.to_channel()?).is_some() {
                        return Err(input(format!("edge ({},{}) listed twice", v.edge.0, v.edge.1)));
                    }
                }
                SystemFamily::Channels(ChannelFamily::new(graph, *dim, chans)?)
            }
        };
        let mut system = DynamicalSystem::new(family);
        if let Some(LengthSpec::Linear { rate }) = &self.length {
            let order = system.graph().as_order().cloned().ok_or_else(|| input("a length function needs a linear order"))?;
            if !(*rate >= 0.0) {
                return Err(input("length rate must be nonnegative"));
            }
            system = system.with_length(LengthFunction::linear(&order, *rate));
        }
        if let Some(f) = self.flavor {
            system = system.with_flavor(f);
        }
        Ok(BuiltSystem { system, lindblad })
    }
}

/// Axiom report: identity and divisibility of `φ`, contraction, additivity
/// of generators, geometric growth when a length is known, and the Schwarz
/// conditions for Lindblad generators.
pub fn axiom_report(built: &BuiltSystem, tol: f64, seed: u64) -> Result<Suite> {
    let sys = &built.system;
    let mut suite = Suite::new("axioms");
    let fam = sys.operators().map_err(SystemError::from)?;
    suite.push(dynamics::check_identity_axiom(&fam, tol)?);
    suite.push(dynamics::check_divisibility(&fam, tol)?);
    let mut contraction = dynamics::check_contraction(&fam, tol)?;
    contraction.note("informational: pipelines A and A-cptp accept non-contractive families");
    suite.push(contraction);
    if let SystemFamily::Generators { generators, alpha } = &sys.family {
        let scaled = generators.scaled(*alpha)?;
        suite.push(dynamics::check_additivity(&scaled, tol)?);
        let mut diss = CheckReport::new("dissipativity", tol);
        for (u, v) in scaled.graph().edges() {
            let a = scaled.eval(u, v)?;
            let (vals, _) = crate::linops::hermitian_eigen(&a.hermitian_part())?;
            diss.record(vals.last().copied().unwrap_or(0.0).max(0.0), || format!("({u},{v})"));
        }
        suite.push(diss);
        if let (Some(l), Some(order)) = (&sys.length, scaled.graph().as_order()) {
            suite.push(dynamics::check_generator_growth(&scaled, l, &order.edges(), tol)?);
        }
    }
    if let (Some(l), Some(order)) = (&sys.length, fam.graph().as_order()) {
        suite.push(dynamics::check_geometric_growth(&fam, l, &order.edges(), tol)?);
    }
    if let Some(l) = &built.lindblad {
        let mut rng = sample::rng(seed);
        let d = l.dim();
        let samples: Vec<CMatrix> = (0..8).map(|_| sample::gaussian(&mut rng, d, d)).collect();
        let s = dynamics::check_schwarz_generator(l, &samples, 1e-9)?;
        suite.extend(schwarz_checks(s));
    }
    Ok(suite)
}

pub fn schwarz_checks(s: SchwarzReport) -> Vec<CheckReport> {
    let mut out = vec![s.self_adjoint, s.unital, s.dissipation_psd];
    out.extend(s.contraction);
    out
}

/// Interpolated Hamiltonians `σ_x`, `σ_z` on `[0, 1]`, grid `{0, 1/2, 1}`.
pub fn indivisible_demo() -> SystemSpec {
    SystemSpec {
        name: Some("indivisible".into()),
        graph: None,
        family: FamilySpec::InterpolatedHamiltonians {
            h1: crate::linops::pauli_x(),
            h2: crate::linops::pauli_z(),
            t_max: 1.0,
            steps: 2,
            alpha: 1.0,
        },
        length: None,
        flavor: None,
    }
}

/// Commuting family generated by `X = [[-1, 1], [-1, -1]]` on a 4-step grid
/// of `[0, 1]`.
pub fn divisible_demo() -> SystemSpec {
    let x = CMatrix::from_real(2, 2, &[-1.0, 1.0, -1.0, -1.0]).expect("2x2");
    SystemSpec {
        name: Some("divisible".into()),
        graph: None,
        family: FamilySpec::Commuting { x, t_max: 1.0, steps: 4, alpha: 1.0 },
        length: None,
        flavor: None,
    }
}

/// Diamond `0 → {1, 2} → 3` with every weight `w·I₂`.
pub fn network_demo(weight: f64) -> SystemSpec {
    let w = CMatrix::identity(2).scale_real(weight);
    let weights = [(0, 1), (0, 2), (1, 3), (2, 3)]
        .into_iter()
        .map(|(a, b)| EdgeMatrix { edge: (NodeId(a), NodeId(b)), matrix: w.clone() })
        .collect();
    SystemSpec {
        name: Some("network".into()),
        graph: None,
        family: FamilySpec::Network { dim: 2, nodes: (0..4).map(NodeId).collect(), weights },
        length: None,
        flavor: None,
    }
}

/// Qubit with `h = σ_z` and amplitude damping `K = ½σ₋` on a 2-step grid.
pub fn lindblad_demo() -> SystemSpec {
    let lower = CMatrix::from_real(2, 2, &[0.0, 0.5, 0.0, 0.0]).expect("2x2");
    SystemSpec {
        name: Some("lindblad".into()),
        graph: None,
        family: FamilySpec::Lindblad { h: crate::linops::pauli_z(), kraus: vec![lower], t_max: 1.0, steps: 2 },
        length: None,
        flavor: None,
    }
}

/// Qubit channels on the order `0 ⪯ 1 ⪯ 2`: amplitude damping on `(0,1)`,
/// an X-flip on `(1,2)` and full depolarization on `(0,2)`, so the family is
/// indivisible.
pub fn channel_demo() -> SystemSpec {
    let g = 0.4f64;
    let damping = Channel::from_kraus(vec![
        CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, (1.0 - g).sqrt()]).expect("2x2"),
        CMatrix::from_real(2, 2, &[0.0, g.sqrt(), 0.0, 0.0]).expect("2x2"),
    ])
    .expect("CPTP");
    let p = 0.3f64;
    let flip = Channel::from_kraus(vec![
        CMatrix::identity(2).scale_real((1.0 - p).sqrt()),
        crate::linops::pauli_x().scale_real(p.sqrt()),
    ])
    .expect("CPTP");
    let values = [((0, 1), damping), ((1, 2), flip), ((0, 2), Channel::depolarizing(2))]
        .into_iter()
        .map(|((a, b), ch)| EdgeChannel { edge: (NodeId(a), NodeId(b)), channel: ChannelSpec::from_channel(&ch) })
        .collect();
    SystemSpec {
        name: Some("channels".into()),
        graph: Some(GraphSpec::order(vec![NodeId(0), NodeId(1), NodeId(2)])),
        family: FamilySpec::Channels { dim: 2, values },
        length: None,
        flavor: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{pauli_x, pauli_z};

    fn parse(json: &str) -> SystemSpec {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn interpolated_spec_builds_and_reports_indivisibility() {
        let spec = SystemSpec {
            name: Some("demo".into()),
            graph: None,
            family: FamilySpec::InterpolatedHamiltonians { h1: pauli_x(), h2: pauli_z(), t_max: 1.0, steps: 2, alpha: 1.0 },
            length: None,
            flavor: None,
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(parse(&json), spec);
        let built = spec.build().unwrap();
        let suite = axiom_report(&built, 1e-10, 0).unwrap();
        let div = suite.checks.iter().find(|c| c.name == "divisibility").unwrap();
        assert!(div.max_defect > 1e-3);
        assert_eq!(div.argmax.as_deref(), Some("(2,1,0)"));
        assert!(suite.checks.iter().find(|c| c.name == "additivity").unwrap().pass);
    }

    #[test]
    fn explicit_family_needs_every_edge() {
        let json = r#"{"graph": {"nodes": [0, 1, 2], "edges": [[0, 1], [1, 2]]},
            "family": {"kind": "explicit", "dim": 1, "values": [{"edge": [0, 1], "matrix": [[0.5]]}]}}"#;
        assert!(matches!(parse(json).build(), Err(SystemError::Input(_))));
        let json = r#"{"graph": {"nodes": [0, 1], "edges": [[0, 1]]},
            "family": {"kind": "explicit", "dim": 1, "values": [{"edge": [1, 0], "matrix": [[0.5]]}]}}"#;
        assert!(parse(json).build().is_err());
    }

    #[test]
    fn segments_are_additive() {
        let json = r#"{"graph": {"time_grid": {"steps": 3, "t_max": 1.5}},
            "family": {"kind": "segments", "segments": [[[-1, 0], [0, -2]], [[-1, 0], [0, 0]], [[0, 0], [0, -1]]]},
            "length": {"kind": "linear", "rate": 4}}"#;
        let built = parse(json).build().unwrap();
        let suite = axiom_report(&built, 1e-12, 0).unwrap();
        assert!(suite.pass, "{suite:?}");
    }

    #[test]
    fn lindblad_spec_runs_schwarz_checks() {
        let amp = CMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let spec = SystemSpec {
            name: None,
            graph: None,
            family: FamilySpec::Lindblad { h: pauli_z(), kraus: vec![amp.scale_real(0.5)], t_max: 1.0, steps: 2 },
            length: None,
            flavor: None,
        };
        let suite = axiom_report(&spec.build().unwrap(), 1e-10, 1).unwrap();
        assert!(suite.checks.iter().any(|c| c.name == "D_L(a,a) psd" && c.pass));
        assert!(suite.checks.iter().find(|c| c.name == "divisibility").unwrap().pass);
    }

    #[test]
    fn demos_round_trip_and_build() {
        for spec in [indivisible_demo(), divisible_demo(), network_demo(2.0), lindblad_demo(), channel_demo()] {
            let json = serde_json::to_string_pretty(&spec).unwrap();
            let back: SystemSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, spec);
            back.build().unwrap();
        }
        let div = axiom_report(&divisible_demo().build().unwrap(), 1e-10, 0).unwrap();
        assert!(div.pass, "{div:?}");
    }

    #[test]
    fn channel_family_spec() {
        let json = r#"{"graph": {"order": [0, 1]},
            "family": {"kind": "channels", "dim": 2, "values": [
                {"edge": [0, 1], "channel": {"dim": 2, "repr": "kraus", "data": [[[0, 1], [1, 0]]]}}]}}"#;
        let built = parse(json).build().unwrap();
        assert!(matches!(built.system.family, SystemFamily::Channels(_)));
    }
}
