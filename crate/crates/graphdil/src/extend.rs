//! Cover functions of words over a linearly ordered graph and the three ways
//! of lifting an edge-indexed family to the edge group: the normal-form
//! extension (any graph) and the first and second cover extensions (linear
//! orders), plus a checker for their continuity moduli.
//!
//! A letter `ℓ(u, v)` has cover `1_{[v)} − 1_{[u)}`, where `[u)` is the set of
//! nodes strictly below `u`. For `u ⪯ v` that is `+1` on `[u, v)`, otherwise
//! `−1` on `[v, u)`. Covers add along words and are invariant under the
//! rewriting rules, so they are functions of group elements.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    self, DynamicsError, GeneratorFamily, GraphHandle, LengthFunction, LinearOrderGraph, OperatorFamily,
};
use crate::linops::{expm, spectral_norm, CMatrix};
use crate::report::CheckReport;
use crate::rewrite::{self, EdgeContext, GroupElement, Letter, NodeId, RewriteError, Word};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExtendError {
    #[error("cover functions need a linearly ordered graph")]
    Structure,
    #[error("precondition failed ({axiom}): {detail}")]
    Precondition { axiom: String, detail: String },
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

pub type Result<T> = std::result::Result<T, ExtendError>;

fn precondition(axiom: &str, detail: impl Into<String>) -> ExtendError {
    ExtendError::Precondition { axiom: axiom.into(), detail: detail.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub left: NodeId,
    pub right: NodeId,
    pub coeff: i64,
}

/// Integer simple function on the node order, in canonical form: sorted,
/// disjoint, nonzero segments `[left, right)`, with neighbours that share a
/// boundary carrying different coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverFunction {
    segments: Vec<Segment>,
}

impl CoverFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_zero(&self) -> bool {
        self.segments.is_empty()
    }

    /// Canonical form of `Σ coeff·1_{[left, right)}` over arbitrary pieces.
    pub fn from_pieces(order: &LinearOrderGraph, pieces: &[Segment]) -> Result<Self> {
        let n = order.len();
        let mut diff = vec![0i64; n + 1];
        for p in pieces {
            let (a, b) = (order.rank(p.left)?, order.rank(p.right)?);
            let (a, b, c) = if a <= b { (a, b, p.coeff) } else { (b, a, -p.coeff) };
            diff[a] += c;
            diff[b] -= c;
        }
        let nodes = order.nodes();
        let mut segments: Vec<Segment> = Vec::new();
        let mut value = 0i64;
        for i in 0..n.saturating_sub(1) {
            value += diff[i];
            if value == 0 {
                continue;
            }
            match segments.last_mut() {
                Some(s) if s.right == nodes[i] && s.coeff == value => s.right = nodes[i + 1],
                _ => segments.push(Segment { left: nodes[i], right: nodes[i + 1], coeff: value }),
            }
        }
        Ok(Self { segments })
    }

    /// Value at a node: the sum over segments with `left ⪯ x ≺ right`.
    pub fn value_at(&self, order: &LinearOrderGraph, x: NodeId) -> Result<i64> {
        let rx = order.rank(x)?;
        let mut total = 0;
        for s in &self.segments {
            if order.rank(s.left)? <= rx && rx < order.rank(s.right)? {
                total += s.coeff;
            }
        }
        Ok(total)
    }

    pub fn add(&self, other: &CoverFunction, order: &LinearOrderGraph) -> Result<CoverFunction> {
        let pieces: Vec<Segment> = self.segments.iter().chain(&other.segments).copied().collect();
        Self::from_pieces(order, &pieces)
    }

    /// Segments with positive coefficient, ascending.
    pub fn positive_support(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.coeff > 0)
    }
}

impl fmt::Display for CoverFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.segments.is_empty() {
            return write!(f, "0");
        }
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}*[{},{})", s.coeff, s.left, s.right)?;
        }
        Ok(())
    }
}

fn letter_piece(l: &Letter) -> Segment {
    Segment { left: l.tail, right: l.head, coeff: 1 }
}

/// Cover of a word on a linearly ordered graph.
pub fn cover_of_word(graph: &GraphHandle, w: &Word) -> Result<CoverFunction> {
    let order = graph.as_order().ok_or(ExtendError::Structure)?;
    cover_in_order(order, w)
}

/// Cover of a word, given the order directly.
pub fn cover_in_order(order: &LinearOrderGraph, w: &Word) -> Result<CoverFunction> {
    for l in w.letters() {
        for n in [l.tail, l.head] {
            if !order.contains(n) {
                return Err(RewriteError::UnknownNode(n).into());
            }
        }
    }
    let pieces: Vec<Segment> = w.letters().iter().map(letter_piece).collect();
    CoverFunction::from_pieces(order, &pieces)
}

pub fn cover_of_element(order: &LinearOrderGraph, g: &GroupElement) -> Result<CoverFunction> {
    cover_in_order(order, g.normal_form())
}

/// Subdivision `w₀ ⪯ … ⪯ w_m` with coefficients `c₁..c_m`, where `cᵢ` is the
/// value on `[wᵢ₋₁, wᵢ)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refinement {
    pub breakpoints: Vec<NodeId>,
    pub coeffs: Vec<i64>,
}

impl Refinement {
    pub fn value_at(&self, order: &LinearOrderGraph, x: NodeId) -> Result<i64> {
        let rx = order.rank(x)?;
        for (i, c) in self.coeffs.iter().enumerate() {
            if order.rank(self.breakpoints[i])? <= rx && rx < order.rank(self.breakpoints[i + 1])? {
                return Ok(*c);
            }
        }
        Ok(0)
    }

    /// Intervals `(wᵢ₋₁, wᵢ, cᵢ)`.
    pub fn intervals(&self) -> impl Iterator<Item = (NodeId, NodeId, i64)> + '_ {
        self.coeffs.iter().enumerate().map(|(i, &c)| (self.breakpoints[i], self.breakpoints[i + 1], c))
    }
}

/// Refinement whose breakpoints are the segment endpoints of `cov` together
/// with `extra`.
pub fn refine(order: &LinearOrderGraph, cov: &CoverFunction, extra: &[NodeId]) -> Result<Refinement> {
    let mut points: Vec<(usize, NodeId)> = Vec::new();
    for s in cov.segments() {
        points.push((order.rank(s.left)?, s.left));
        points.push((order.rank(s.right)?, s.right));
    }
    for &x in extra {
        points.push((order.rank(x)?, x));
    }
    points.sort();
    points.dedup();
    let breakpoints: Vec<NodeId> = points.into_iter().map(|(_, n)| n).collect();
    let mut coeffs = Vec::new();
    for w in breakpoints.windows(2) {
        coeffs.push(cov.value_at(order, w[0])?);
    }
    Ok(Refinement { breakpoints, coeffs })
}

/// A family indexed by edge-group elements.
pub trait GroupFamily: Send + Sync {
    fn dim(&self) -> usize;
    fn context(&self) -> &EdgeContext;
    fn eval(&self, g: &GroupElement) -> Result<CMatrix>;
    /// Value at `ι(u, v)`.
    fn eval_edge(&self, u: NodeId, v: NodeId) -> Result<CMatrix> {
        let g = rewrite::iota(self.context(), u, v)?;
        self.eval(&g)
    }
}

/// `φ̄([x]) = Π φ₀(uᵢ, vᵢ)` over the normal-form letters, with `φ₀ = φ` on
/// edges and `φ₀ = I` on reversed or otherwise related non-edges.
#[derive(Clone, Debug)]
pub struct NormalFormExtension {
    fam: OperatorFamily,
    ctx: EdgeContext,
}

impl NormalFormExtension {
    pub fn new(fam: OperatorFamily) -> Result<Self> {
        let r = dynamics::check_identity_axiom(&fam, 1e-10)?;
        if !r.pass {
            return Err(precondition("identity", format!("max defect {:.3e} at {}", r.max_defect, r.argmax.as_deref().unwrap_or("?"))));
        }
        let ctx = fam.graph().edge_context();
        Ok(Self { fam, ctx })
    }

    pub fn family(&self) -> &OperatorFamily {
        &self.fam
    }

    fn base(&self, l: &Letter) -> Result<CMatrix> {
        if self.fam.graph().has_edge(l.tail, l.head) {
            Ok(self.fam.eval(l.tail, l.head)?)
        } else {
            Ok(CMatrix::identity(self.fam.dim()))
        }
    }
}

impl GroupFamily for NormalFormExtension {
    fn dim(&self) -> usize {
        self.fam.dim()
    }

    fn context(&self) -> &EdgeContext {
        &self.ctx
    }

    fn eval(&self, g: &GroupElement) -> Result<CMatrix> {
        self.ctx.check_word(g.normal_form())?;
        let mut acc = CMatrix::identity(self.dim());
        for l in g.letters() {
            acc = &acc * &self.base(l)?;
        }
        Ok(acc)
    }
}

impl fmt::Debug for dyn GroupFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupFamily(dim = {})", self.dim())
    }
}

/// Convenience wrapper around [`NormalFormExtension`].
pub fn normal_form_extension(fam: &OperatorFamily, g: &GroupElement) -> Result<CMatrix> {
    NormalFormExtension::new(fam.clone())?.eval(g)
}

fn require_order(graph: &GraphHandle) -> Result<Arc<LinearOrderGraph>> {
    graph.as_order().cloned().ok_or(ExtendError::Structure)
}

/// `φ̄([x]) = Π_{cᵢ > 0} φ(wᵢ₋₁, wᵢ)` in ascending order, for a divisible
/// family on a linear order.
#[derive(Clone, Debug)]
pub struct FirstCoverExtension {
    fam: OperatorFamily,
    order: Arc<LinearOrderGraph>,
    ctx: EdgeContext,
    divisibility_defect: f64,
}

/// Tolerance for the identity and divisibility preconditions of the first
/// cover extension and the additivity precondition of the second.
pub const COVER_PRECONDITION_TOL: f64 = 1e-9;

impl FirstCoverExtension {
    pub fn new(fam: OperatorFamily) -> Result<Self> {
        let order = require_order(fam.graph())?;
        let id = dynamics::check_identity_axiom(&fam, COVER_PRECONDITION_TOL)?;
        if !id.pass {
            return Err(precondition("identity", format!("max defect {:.3e} at {}", id.max_defect, id.argmax.as_deref().unwrap_or("?"))));
        }
        let div = dynamics::check_divisibility(&fam, COVER_PRECONDITION_TOL)?;
        if !div.pass {
            return Err(precondition(
                "divisibility",
                format!("max defect {:.3e} at {}", div.max_defect, div.argmax.as_deref().unwrap_or("?")),
            ));
        }
        let ctx = order.edge_context();
        Ok(Self { fam, order, ctx, divisibility_defect: div.max_defect })
    }

    pub fn order(&self) -> &Arc<LinearOrderGraph> {
        &self.order
    }

    pub fn family(&self) -> &OperatorFamily {
        &self.fam
    }

    /// Largest divisibility defect of the input; refinement independence
    /// holds up to a multiple of it.
    pub fn divisibility_defect(&self) -> f64 {
        self.divisibility_defect
    }

    /// Value computed on the refinement obtained by adding `extra` breakpoints.
    pub fn eval_refined(&self, g: &GroupElement, extra: &[NodeId]) -> Result<CMatrix> {
        let cov = cover_of_element(&self.order, g)?;
        let r = refine(&self.order, &cov, extra)?;
        let mut acc = CMatrix::identity(self.fam.dim());
        for (a, b, c) in r.intervals() {
            if c > 0 {
                acc = &acc * &self.fam.eval(a, b)?;
            }
        }
        Ok(acc)
    }
}

impl GroupFamily for FirstCoverExtension {
    fn dim(&self) -> usize {
        self.fam.dim()
    }

    fn context(&self) -> &EdgeContext {
        &self.ctx
    }

    fn eval(&self, g: &GroupElement) -> Result<CMatrix> {
        self.eval_refined(g, &[])
    }
}

pub fn first_cover_extension(fam: &OperatorFamily, g: &GroupElement) -> Result<CMatrix> {
    FirstCoverExtension::new(fam.clone())?.eval(g)
}

/// `A([x]) = Σ_{cᵢ > 0} A(wᵢ₋₁, wᵢ)` and `φ̄([x]) = e^{A([x])}` for an
/// additive dissipative generator family on a linear order.
#[derive(Clone, Debug)]
pub struct SecondCoverExtension {
    gen: GeneratorFamily,
    order: Arc<LinearOrderGraph>,
    ctx: EdgeContext,
}

impl SecondCoverExtension {
    pub fn new(gen: GeneratorFamily) -> Result<Self> {
        let order = require_order(gen.graph())?;
        let add = dynamics::check_additivity(&gen, COVER_PRECONDITION_TOL)?;
        if !add.pass {
            return Err(precondition("additivity", format!("max defect {:.3e} at {}", add.max_defect, add.argmax.as_deref().unwrap_or("?"))));
        }
        if !gen.is_dissipative() {
            return Err(precondition("dissipativity", "some generator has a positive Hermitian part"));
        }
        let ctx = order.edge_context();
        Ok(Self { gen, order, ctx })
    }

    pub fn order(&self) -> &Arc<LinearOrderGraph> {
        &self.order
    }

    pub fn generators(&self) -> &GeneratorFamily {
        &self.gen
    }

    pub fn generator_refined(&self, g: &GroupElement, extra: &[NodeId]) -> Result<CMatrix> {
        let cov = cover_of_element(&self.order, g)?;
        let r = refine(&self.order, &cov, extra)?;
        let mut acc = CMatrix::zeros(self.gen.dim(), self.gen.dim());
        for (a, b, c) in r.intervals() {
            if c > 0 {
                acc = &acc + &self.gen.eval(a, b)?;
            }
        }
        Ok(acc)
    }

    pub fn generator(&self, g: &GroupElement) -> Result<CMatrix> {
        self.generator_refined(g, &[])
    }

    pub fn eval_refined(&self, g: &GroupElement, extra: &[NodeId]) -> Result<CMatrix> {
        Ok(expm(&self.generator_refined(g, extra)?).expect("square generator"))
    }
}

impl GroupFamily for SecondCoverExtension {
    fn dim(&self) -> usize {
        self.gen.dim()
    }

    fn context(&self) -> &EdgeContext {
        &self.ctx
    }

    fn eval(&self, g: &GroupElement) -> Result<CMatrix> {
        self.eval_refined(g, &[])
    }
}

/// `(A_g, e^{A_g})`.
pub fn second_cover_extension(gen: &GeneratorFamily, g: &GroupElement) -> Result<(CMatrix, CMatrix)> {
    let ext = SecondCoverExtension::new(gen.clone())?;
    let a = ext.generator(g)?;
    let e = expm(&a).expect("square generator");
    Ok((a, e))
}

/// Shape of the continuity estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModulusForm {
    /// Terms `e^{ℓ} − 1`, for the first cover extension of a divisible
    /// contraction family with `‖φ − I‖ ≤ ℓ`.
    ExpMinusOne,
    /// Terms `ℓ`, for the second cover extension with `‖A‖ ≤ ℓ`.
    Linear,
}

/// One sample of the continuity check: compares `φ̄(g ι(e') h) ξ` with
/// `φ̄(g ι(e) h) ξ`.
#[derive(Clone, Debug)]
pub struct ModulusSample {
    pub e: (NodeId, NodeId),
    pub e_prime: (NodeId, NodeId),
    pub g: GroupElement,
    pub h: GroupElement,
    pub xi: CMatrix,
}

/// Four-term bound for `‖(φ̄(g ι(e') h) − φ̄(g ι(e) h))ξ‖` with
/// `e = (u₀, v₀)`, `e' = (u, v)`, `ū = min(u₀, u)`, `v̄ = max(v₀, v)`:
/// `ℓ(ū,u) + ℓ(v,v̄) + ℓ(v₀,v̄) + ℓ(ū,u₀)`, each term passed through
/// `x ↦ e^x − 1` for [`ModulusForm::ExpMinusOne`], times `‖ξ‖`.
pub fn modulus_bound(
    order: &LinearOrderGraph,
    form: ModulusForm,
    length: &LengthFunction,
    e: (NodeId, NodeId),
    e_prime: (NodeId, NodeId),
) -> f64 {
    let ((u0, v0), (u, v)) = (e, e_prime);
    let lo = order.min(u0, u);
    let hi = order.max(v0, v);
    [(lo, u), (v, hi), (v0, hi), (lo, u0)]
        .iter()
        .map(|&(a, b)| {
            let l = length.eval(a, b);
            match form {
                ModulusForm::ExpMinusOne => l.exp_m1(),
                ModulusForm::Linear => l,
            }
        })
        .sum()
}

pub fn continuity_modulus_check(
    ext: &dyn GroupFamily,
    order: &LinearOrderGraph,
    form: ModulusForm,
    length: &LengthFunction,
    samples: &[ModulusSample],
    tol: f64,
) -> Result<CheckReport> {
    let mut r = CheckReport::new(format!("continuity modulus ({form:?})"), tol);
    let ctx = ext.context();
    for (k, s) in samples.iter().enumerate() {
        for (a, b) in [s.e, s.e_prime] {
            if !order.precedes(a, b) {
                return Err(DynamicsError::MissingEdge(a, b).into());
            }
        }
        let at = |edge: (NodeId, NodeId)| -> Result<CMatrix> {
            let x = rewrite::mul(&rewrite::mul(&s.g, &rewrite::iota(ctx, edge.0, edge.1)?), &s.h);
            ext.eval(&x)
        };
        let diff = &at(s.e_prime)? - &at(s.e)?;
        let lhs = (&diff * &s.xi).vector_norm();
        let bound = modulus_bound(order, form, length, s.e, s.e_prime) * s.xi.vector_norm();
        r.record_bounded(lhs, bound + tol, || {
            format!("sample {k}: e=({},{}), e'=({},{}), g={}, h={}", s.e.0, s.e.1, s.e_prime.0, s.e_prime.1, s.g, s.h)
        });
    }
    Ok(r)
}

/// Sup of `‖φ̄(g)‖` over the given elements; used to certify contraction
/// preconditions on samples.
pub fn max_norm(ext: &dyn GroupFamily, elements: &[GroupElement]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for g in elements {
        m = m.max(spectral_norm(&ext.eval(g)?));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample;
    use rand::Rng;

    fn n(k: i64) -> NodeId {
        NodeId(k)
    }

    fn order(k: i64) -> Arc<LinearOrderGraph> {
        Arc::new(LinearOrderGraph::ascending(k))
    }

    // Pointwise oracle: Σ over letters of +1 on [u, v) or −1 on [v, u).
    fn indicator_sum(ord: &LinearOrderGraph, w: &Word, x: NodeId) -> i64 {
        let rx = ord.rank(x).unwrap();
        w.letters()
            .iter()
            .map(|l| {
                let (a, b) = (ord.rank(l.tail).unwrap(), ord.rank(l.head).unwrap());
                if a <= rx && rx < b {
                    1
                } else if b <= rx && rx < a {
                    -1
                } else {
                    0
                }
            })
            .sum()
    }

    fn seg(l: i64, r: i64, c: i64) -> Segment {
        Segment { left: n(l), right: n(r), coeff: c }
    }

    #[test]
    fn cover_examples() {
        let ord = order(5);
        let h = GraphHandle::Order(ord.clone());
        assert!(cover_of_word(&h, &Word::from_pairs(&[(2, 2)])).unwrap().is_zero());
        assert!(cover_of_word(&h, &Word::empty()).unwrap().is_zero());
        assert_eq!(cover_of_word(&h, &Word::from_pairs(&[(1, 3)])).unwrap().segments(), &[seg(1, 3, 1)]);
        let w = Word::from_pairs(&[(1, 3), (2, 4)]);
        let c = cover_of_word(&h, &w).unwrap();
        assert_eq!(c.segments(), &[seg(1, 2, 1), seg(2, 3, 2), seg(3, 4, 1)]);
        for &x in ord.nodes() {
            assert_eq!(c.value_at(&ord, x).unwrap(), indicator_sum(&ord, &w, x));
        }
        let back = cover_of_word(&h, &Word::from_pairs(&[(3, 1)])).unwrap();
        assert_eq!(back.segments(), &[seg(1, 3, -1)]);
        assert_eq!(c.to_string(), "1*[1,2) + 2*[2,3) + 1*[3,4)");
    }

    #[test]
    fn cover_requires_order() {
        let h = GraphHandle::General(Arc::new(EdgeContext::complete([n(0), n(1)])));
        assert_eq!(cover_of_word(&h, &Word::from_pairs(&[(0, 1)])), Err(ExtendError::Structure));
    }

    #[test]
    fn canonical_form_merges_and_drops() {
        let ord = order(6);
        let c = CoverFunction::from_pieces(&ord, &[seg(0, 2, 1), seg(2, 4, 1), seg(4, 5, 1), seg(4, 5, -1)]).unwrap();
        assert_eq!(c.segments(), &[seg(0, 4, 1)]);
        let again = CoverFunction::from_pieces(&ord, c.segments()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn cover_matches_indicator_sum_and_reductions() {
        let ord = order(5);
        let ctx = ord.edge_context();
        let mut rng = sample::rng(3);
        for _ in 0..200 {
            let len = rng.gen_range(0..7);
            let w = sample::word(&mut rng, &ctx, len);
            let c = cover_in_order(&ord, &w).unwrap();
            for &x in ord.nodes() {
                assert_eq!(c.value_at(&ord, x).unwrap(), indicator_sum(&ord, &w, x));
            }
            for r in rewrite::reduce_once_all(&ctx, &w).unwrap() {
                assert_eq!(cover_in_order(&ord, &r).unwrap(), c);
            }
        }
    }

    #[test]
    fn refine_examples() {
        let ord = order(6);
        let r = refine(&ord, &CoverFunction::zero(), &[n(1), n(4)]).unwrap();
        assert_eq!(r.breakpoints, vec![n(1), n(4)]);
        assert!(r.coeffs.iter().all(|&c| c == 0));

        let single = CoverFunction::from_pieces(&ord, &[seg(1, 5, 2)]).unwrap();
        let r = refine(&ord, &single, &[n(3)]).unwrap();
        assert_eq!(r.breakpoints, vec![n(1), n(3), n(5)]);
        assert_eq!(r.coeffs, vec![2, 2]);

        let w = Word::from_pairs(&[(1, 3), (2, 4)]);
        let c = cover_in_order(&ord, &w).unwrap();
        let r = refine(&ord, &c, &[n(0), n(6)]).unwrap();
        assert_eq!(r.breakpoints, vec![n(0), n(1), n(2), n(3), n(4), n(6)]);
        assert_eq!(r.coeffs, vec![0, 1, 2, 1, 0]);
        for &x in ord.nodes() {
            assert_eq!(r.value_at(&ord, x).unwrap(), c.value_at(&ord, x).unwrap());
        }
    }

    fn divisible_family(ord: &Arc<LinearOrderGraph>, seed: u64) -> OperatorFamily {
        let mut rng = sample::rng(seed);
        let a = sample::dissipative(&mut rng, 3, 0.4);
        let g = ord.clone();
        OperatorFamily::new(GraphHandle::Order(ord.clone()), 3, move |u, v| {
            let dt = (g.rank(v).unwrap() - g.rank(u).unwrap()) as f64;
            expm(&a.scale_real(dt)).unwrap()
        })
        .unwrap()
    }

    #[test]
    fn normal_form_extension_examples() {
        let ctx = EdgeContext::new([n(0), n(1), n(2)], [(n(0), n(0)), (n(1), n(1)), (n(2), n(2)), (n(0), n(1)), (n(1), n(2))])
            .unwrap();
        let mut rng = sample::rng(7);
        let m01 = sample::contraction(&mut rng, 2, 0.9);
        let m12 = sample::contraction(&mut rng, 2, 0.9);
        let (a, b) = (m01.clone(), m12.clone());
        let fam = OperatorFamily::new(ctx.clone(), 2, move |u, v| match (u.0, v.0) {
            (0, 1) => a.clone(),
            (1, 2) => b.clone(),
            _ => CMatrix::identity(2),
        })
        .unwrap();
        let ext = NormalFormExtension::new(fam).unwrap();
        assert!(ext.eval(&rewrite::identity()).unwrap().max_abs_diff(&CMatrix::identity(2)) == 0.0);
        assert!(ext.eval_edge(n(0), n(1)).unwrap().max_abs_diff(&m01) == 0.0);
        let g = rewrite::element(&ctx, &Word::from_pairs(&[(0, 1), (2, 1)])).unwrap();
        assert_eq!(g.len(), 2);
        assert!(ext.eval(&g).unwrap().max_abs_diff(&m01) < 1e-15);
        // ℓ(0,1)ℓ(1,2) fuses to ℓ(0,2), which is related but not an edge.
        let g = rewrite::element(&ctx, &Word::from_pairs(&[(0, 1), (1, 2)])).unwrap();
        assert_eq!(g.len(), 1);
        assert!(ext.eval(&g).unwrap().max_abs_diff(&CMatrix::identity(2)) == 0.0);
        let g = rewrite::element(&ctx, &Word::from_pairs(&[(1, 2), (0, 1)])).unwrap();
        assert!(ext.eval(&g).unwrap().max_abs_diff(&(&m12 * &m01)) < 1e-14);
    }

    #[test]
    fn normal_form_extension_needs_identity_axiom() {
        let ord = order(2);
        let fam = OperatorFamily::new(GraphHandle::Order(ord), 2, |_, _| CMatrix::identity(2).scale_real(0.5)).unwrap();
        assert!(matches!(NormalFormExtension::new(fam), Err(ExtendError::Precondition { .. })));
    }

    #[test]
    fn first_cover_extension_examples() {
        let ord = order(5);
        let fam = divisible_family(&ord, 11);
        let ext = FirstCoverExtension::new(fam.clone()).unwrap();
        let ctx = ext.context().clone();
        assert!(ext.eval(&rewrite::identity()).unwrap().max_abs_diff(&CMatrix::identity(3)) < 1e-15);
        assert!(ext.eval_edge(n(1), n(4)).unwrap().max_abs_diff(&fam.eval(n(1), n(4)).unwrap()) < 1e-15);
        let g = rewrite::element(&ctx, &Word::from_pairs(&[(1, 3), (2, 4)])).unwrap();
        let triple = &(&fam.eval(n(1), n(2)).unwrap() * &fam.eval(n(2), n(3)).unwrap()) * &fam.eval(n(3), n(4)).unwrap();
        let v = ext.eval(&g).unwrap();
        assert!(v.max_abs_diff(&triple) < 1e-13);
        assert!(v.max_abs_diff(&fam.eval(n(1), n(4)).unwrap()) < 1e-12);
        assert!(v.max_abs_diff(&ext.eval_refined(&g, &[n(0), n(2), n(5)]).unwrap()) < 1e-12);
    }

    #[test]
    fn first_cover_extension_needs_divisibility() {
        let ord = order(3);
        let g = ord.clone();
        let fam = OperatorFamily::new(GraphHandle::Order(ord.clone()), 1, move |u, v| {
            let d = (g.rank(v).unwrap() - g.rank(u).unwrap()) as f64;
            CMatrix::from_real(1, 1, &[(-d * d).exp()]).unwrap()
        })
        .unwrap();
        assert!(matches!(FirstCoverExtension::new(fam), Err(ExtendError::Precondition { axiom, .. }) if axiom == "divisibility"));
        let general = OperatorFamily::new(EdgeContext::complete([n(0)]), 1, |_, _| CMatrix::identity(1)).unwrap();
        assert_eq!(FirstCoverExtension::new(general).unwrap_err(), ExtendError::Structure);
    }

    #[test]
    fn cyclic_invariance_and_agreement_with_normal_form() {
        let ord = order(4);
        let fam = divisible_family(&ord, 5);
        let first = FirstCoverExtension::new(fam.clone()).unwrap();
        let nf = NormalFormExtension::new(fam).unwrap();
        let ctx = first.context().clone();
        let mut rng = sample::rng(9);
        for _ in 0..50 {
            let g = sample::element(&mut rng, &ctx, 4);
            let h = sample::element(&mut rng, &ctx, 4);
            let a = first.eval(&rewrite::mul(&g, &h)).unwrap();
            let b = first.eval(&rewrite::mul(&h, &g)).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12);
        }
        for (u, v) in ord.edges() {
            let g = rewrite::iota(&ctx, u, v).unwrap();
            assert!(first.eval(&g).unwrap().max_abs_diff(&nf.eval(&g).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn second_cover_extension_examples() {
        let mut rng = sample::rng(2);
        let h1 = sample::hermitian(&mut rng, 2);
        let h2 = sample::hermitian(&mut rng, 2);
        let gen = dynamics::example_indivisible(h1.clone(), h2.clone(), 1.0, 4).unwrap();
        let ext = SecondCoverExtension::new(gen.clone()).unwrap();
        let ctx = ext.context().clone();
        let (a0, e0) = second_cover_extension(&gen, &rewrite::identity()).unwrap();
        assert_eq!(a0.frobenius_norm(), 0.0);
        assert!(e0.max_abs_diff(&CMatrix::identity(4)) < 1e-15);
        let (a, e) = second_cover_extension(&gen, &rewrite::iota(&ctx, n(3), n(1)).unwrap()).unwrap();
        assert!(a.max_abs_diff(&gen.eval(n(3), n(1)).unwrap()) < 1e-15);
        assert!(e.max_abs_diff(&expm(&a).unwrap()) < 1e-15);

        // Nodes listed 4,3,2,1,0 (times 1, 0.75, ...); t1..t4 = 4,3,2,1.
        let g = rewrite::element(&ctx, &Word::from_pairs(&[(4, 2), (3, 1)])).unwrap();
        let ex = dynamics::InterpolatedHamiltonians::new(h1, h2, 1.0).unwrap();
        let oracle = dynamics::integrate_generators(|t| ex.rate(t), 0.25, 1.0).unwrap();
        assert!(ext.generator(&g).unwrap().max_abs_diff(&oracle) < 1e-12);
        for _ in 0..30 {
            let g = sample::element(&mut rng, &ctx, 5);
            let v = ext.eval(&g).unwrap();
            assert!(spectral_norm(&v) <= 1.0 + 1e-10);
            let extra: Vec<NodeId> = ord_sample(&mut rng, ext.order());
            assert!(v.max_abs_diff(&ext.eval_refined(&g, &extra).unwrap()) < 1e-12);
        }
    }

    fn ord_sample(rng: &mut impl Rng, ord: &LinearOrderGraph) -> Vec<NodeId> {
        ord.nodes().iter().copied().filter(|_| rng.gen_bool(0.5)).collect()
    }

    #[test]
    fn second_cover_extension_needs_additivity() {
        let ord = order(2);
        let g = ord.clone();
        let gen = GeneratorFamily::new(GraphHandle::Order(ord.clone()), 1, move |u, v| {
            let d = (g.rank(v).unwrap() - g.rank(u).unwrap()) as f64;
            CMatrix::from_real(1, 1, &[-d * d]).unwrap()
        })
        .unwrap();
        assert!(matches!(SecondCoverExtension::new(gen), Err(ExtendError::Precondition { .. })));
    }

    #[test]
    fn modulus_bound_holds_for_both_extensions() {
        let ord = order(5);
        let mut rng = sample::rng(21);
        let a = sample::dissipative(&mut rng, 3, 0.3);
        let rate = spectral_norm(&a);
        let g = ord.clone();
        let fam = OperatorFamily::new(GraphHandle::Order(ord.clone()), 3, move |u, v| {
            let dt = (g.rank(v).unwrap() - g.rank(u).unwrap()) as f64;
            expm(&a.scale_real(dt)).unwrap()
        })
        .unwrap();
        let first = FirstCoverExtension::new(fam).unwrap();
        let ctx = first.context().clone();
        let length = LengthFunction::linear(&ord, rate);
        let mut samples = Vec::new();
        let edges = ord.edges();
        for _ in 0..40 {
            let e = edges[rng.gen_range(0..edges.len())];
            let e_prime = edges[rng.gen_range(0..edges.len())];
            samples.push(ModulusSample {
                e,
                e_prime,
                g: sample::element(&mut rng, &ctx, 3),
                h: sample::element(&mut rng, &ctx, 3),
                xi: sample::unit_vector(&mut rng, 3),
            });
        }
        samples.push(ModulusSample {
            e: (n(1), n(3)),
            e_prime: (n(1), n(3)),
            g: rewrite::identity(),
            h: rewrite::identity(),
            xi: sample::unit_vector(&mut rng, 3),
        });
        let r = continuity_modulus_check(&first, &ord, ModulusForm::ExpMinusOne, &length, &samples, 1e-10).unwrap();
        assert!(r.pass, "{r:?}");

        let h1 = sample::hermitian(&mut rng, 2);
        let h2 = sample::hermitian(&mut rng, 2);
        let ex = dynamics::InterpolatedHamiltonians::new(h1.clone(), h2.clone(), 1.0).unwrap();
        let gen = dynamics::example_indivisible(h1, h2, 1.0, 4).unwrap();
        let second = SecondCoverExtension::new(gen.clone()).unwrap();
        let grid = second.order().clone();
        // ‖A_τ‖ ≤ max ‖Ψᵢ‖ / T, so ℓ(t, s) = max ‖Ψᵢ‖·|t − s| dominates ‖A(t, s)‖.
        let rate = spectral_norm(ex.psi1.matrix()).max(spectral_norm(ex.psi2.matrix()));
        let length = LengthFunction::linear(&grid, rate);
        let r0 = dynamics::check_generator_growth(&gen, &length, &grid.edges(), 1e-12).unwrap();
        assert!(r0.pass);
        let ctx = second.context().clone();
        let grid_edges = grid.edges();
        let samples: Vec<ModulusSample> = (0..40)
            .map(|_| ModulusSample {
                e: grid_edges[rng.gen_range(0..grid_edges.len())],
                e_prime: grid_edges[rng.gen_range(0..grid_edges.len())],
                g: sample::element(&mut rng, &ctx, 3),
                h: sample::element(&mut rng, &ctx, 3),
                xi: sample::unit_vector(&mut rng, 4),
            })
            .collect();
        let r = continuity_modulus_check(&second, &grid, ModulusForm::Linear, &length, &samples, 1e-10).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
