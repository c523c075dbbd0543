//! String rewriting over the edge alphabet of a graph and the resulting edge
//! group.
//!
//! Letters are pairs `ℓ(u, v)` with `u, v` in the same connected component.
//! The rules delete loop letters `ℓ(u, u)` and fuse adjacent pairs
//! `ℓ(u, v) ℓ(v, w) → ℓ(u, w)`. They are never materialized: applicability is
//! decided from the component map. Every rule shortens a word by one letter,
//! and the system is confluent, so each word has a unique irreducible form.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::CheckReport;

/// Node label. Ordered graphs compare these keys exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub i64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(NodeId, NodeId)", into = "(NodeId, NodeId)")]
pub struct Letter {
    pub tail: NodeId,
    pub head: NodeId,
}

impl Letter {
    pub fn new(tail: NodeId, head: NodeId) -> Self {
        Self { tail, head }
    }

    pub fn is_loop(&self) -> bool {
        self.tail == self.head
    }

    pub fn reversed(&self) -> Self {
        Self { tail: self.head, head: self.tail }
    }
}

impl From<(NodeId, NodeId)> for Letter {
    fn from((tail, head): (NodeId, NodeId)) -> Self {
        Self { tail, head }
    }
}

impl From<Letter> for (NodeId, NodeId) {
    fn from(l: Letter) -> Self {
        (l.tail, l.head)
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l({},{})", self.tail, self.head)
    }
}

/// Finite sequence of letters; the empty word is the monoid unit.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn from_pairs(pairs: &[(i64, i64)]) -> Self {
        Self(pairs.iter().map(|&(u, v)| Letter::new(NodeId(u), NodeId(v))).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RewriteError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("letter {0} joins different components")]
    InvalidLetter(Letter),
}

pub type Result<T> = std::result::Result<T, RewriteError>;

/// Nodes, edges and the connected components that decide letter validity.
#[derive(Clone, Debug)]
pub struct EdgeContext {
    nodes: BTreeSet<NodeId>,
    edges: BTreeSet<(NodeId, NodeId)>,
    component: HashMap<NodeId, usize>,
}

impl EdgeContext {
    pub fn new(
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        let nodes: BTreeSet<NodeId> = nodes.into_iter().collect();
        let edges: BTreeSet<(NodeId, NodeId)> = edges.into_iter().collect();
        let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut parent: Vec<usize> = (0..nodes.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(u, v) in &edges {
            let a = *index.get(&u).ok_or(RewriteError::UnknownNode(u))?;
            let b = *index.get(&v).ok_or(RewriteError::UnknownNode(v))?;
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        let component = nodes.iter().map(|&n| (n, find(&mut parent, index[&n]))).collect();
        Ok(Self { nodes, edges, component })
    }

    /// Graph carrying every ordered pair of the given nodes as an edge.
    pub fn complete(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let nodes: Vec<NodeId> = nodes.into_iter().collect();
        let edges: Vec<(NodeId, NodeId)> =
            nodes.iter().flat_map(|&u| nodes.iter().map(move |&v| (u, v))).collect();
        Self::new(nodes, edges).expect("edges only use listed nodes")
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.edges
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edges.contains(&(u, v))
    }

    /// Membership in the equivalence closure of the edge relation.
    pub fn related(&self, u: NodeId, v: NodeId) -> bool {
        match (self.component.get(&u), self.component.get(&v)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    pub fn check_letter(&self, l: &Letter) -> Result<()> {
        for n in [l.tail, l.head] {
            if !self.nodes.contains(&n) {
                return Err(RewriteError::UnknownNode(n));
            }
        }
        if self.related(l.tail, l.head) {
            Ok(())
        } else {
            Err(RewriteError::InvalidLetter(*l))
        }
    }

    pub fn check_word(&self, w: &Word) -> Result<()> {
        w.0.iter().try_for_each(|l| self.check_letter(l))
    }

    /// All valid letters, in a fixed order.
    pub fn alphabet(&self) -> Vec<Letter> {
        let mut out = Vec::new();
        for &u in &self.nodes {
            for &v in &self.nodes {
                if self.related(u, v) {
                    out.push(Letter::new(u, v));
                }
            }
        }
        out
    }
}

/// Every word reachable from `w` by exactly one rule application.
pub fn reduce_once_all(ctx: &EdgeContext, w: &Word) -> Result<BTreeSet<Word>> {
    ctx.check_word(w)?;
    Ok(one_step_reducts(w))
}

fn one_step_reducts(w: &Word) -> BTreeSet<Word> {
    let letters = &w.0;
    let mut out = BTreeSet::new();
    for (i, l) in letters.iter().enumerate() {
        if l.is_loop() {
            let mut v = letters.clone();
            v.remove(i);
            out.insert(Word(v));
        }
    }
    for i in 0..letters.len().saturating_sub(1) {
        if letters[i].head == letters[i + 1].tail {
            let mut v = letters.clone();
            v[i] = Letter::new(letters[i].tail, letters[i + 1].head);
            v.remove(i + 1);
            out.insert(Word(v));
        }
    }
    out
}

/// Position and kind of the leftmost applicable rule, if any.
fn leftmost_step(w: &Word) -> Option<Word> {
    let letters = &w.0;
    for i in 0..letters.len() {
        if letters[i].is_loop() {
            let mut v = letters.clone();
            v.remove(i);
            return Some(Word(v));
        }
        if i + 1 < letters.len() && letters[i].head == letters[i + 1].tail {
            let mut v = letters.clone();
            v[i] = Letter::new(letters[i].tail, letters[i + 1].head);
            v.remove(i + 1);
            return Some(Word(v));
        }
    }
    None
}

pub fn is_irreducible(w: &Word) -> bool {
    w.0.iter().all(|l| !l.is_loop()) && w.0.windows(2).all(|p| p[0].head != p[1].tail)
}

/// Element of the edge group, held as its irreducible representative.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement {
    normal_form: Word,
}

impl GroupElement {
    pub fn normal_form(&self) -> &Word {
        &self.normal_form
    }

    pub fn letters(&self) -> &[Letter] {
        &self.normal_form.0
    }

    pub fn len(&self) -> usize {
        self.normal_form.len()
    }

    pub fn is_identity(&self) -> bool {
        self.normal_form.is_empty()
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.normal_form)
    }
}

// Stack pass: the stack always holds an irreducible word, and appending a
// letter can only interact with the top.
fn normalize_unchecked(letters: impl IntoIterator<Item = Letter>) -> GroupElement {
    let mut stack: Vec<Letter> = Vec::new();
    for l in letters {
        if l.is_loop() {
            continue;
        }
        match stack.last() {
            Some(top) if top.head == l.tail => {
                let fused = Letter::new(top.tail, l.head);
                stack.pop();
                if !fused.is_loop() {
                    stack.push(fused);
                }
            }
            _ => stack.push(l),
        }
    }
    GroupElement { normal_form: Word(stack) }
}

/// Unique irreducible word reachable from `w`.
pub fn normalize(ctx: &EdgeContext, w: &Word) -> Result<GroupElement> {
    ctx.check_word(w)?;
    Ok(normalize_unchecked(w.0.iter().copied()))
}

/// Normal form together with one witnessing reduction sequence (leftmost
/// rule first). The trace lists the intermediate words after each step.
pub fn normalize_traced(ctx: &EdgeContext, w: &Word) -> Result<(GroupElement, Vec<Word>)> {
    ctx.check_word(w)?;
    let mut trace = Vec::new();
    let mut current = w.clone();
    while let Some(next) = leftmost_step(&current) {
        trace.push(next.clone());
        current = next;
    }
    Ok((GroupElement { normal_form: current }, trace))
}

pub fn identity() -> GroupElement {
    GroupElement::default()
}

pub fn mul(g: &GroupElement, h: &GroupElement) -> GroupElement {
    normalize_unchecked(g.letters().iter().chain(h.letters()).copied())
}

pub fn inv(g: &GroupElement) -> GroupElement {
    GroupElement { normal_form: Word(g.letters().iter().rev().map(Letter::reversed).collect()) }
}

/// Embedding of a related pair as a group element.
pub fn iota(ctx: &EdgeContext, u: NodeId, v: NodeId) -> Result<GroupElement> {
    let l = Letter::new(u, v);
    ctx.check_letter(&l)?;
    Ok(normalize_unchecked([l]))
}

/// Reads a word as a group element after validating it.
pub fn element(ctx: &EdgeContext, w: &Word) -> Result<GroupElement> {
    normalize(ctx, w)
}

/// Exhaustive check of the pre-identity and pre-associativity axioms over all
/// loop and fusion rules on the (finite) node set.
pub fn check_pre_algebraic(ctx: &EdgeContext) -> (CheckReport, CheckReport) {
    let mut identity_report = CheckReport::new("pre-identity", 0.0);
    let mut assoc_report = CheckReport::new("pre-associativity", 0.0);
    let alphabet = ctx.alphabet();
    // Pair rule ((x, y), z) exists iff head(x) = tail(y); then z = fuse(x, y).
    let fuse = |x: &Letter, y: &Letter| (x.head == y.tail).then(|| Letter::new(x.tail, y.head));
    for x in &alphabet {
        for y in &alphabet {
            let Some(z) = fuse(x, y) else { continue };
            if x.is_loop() {
                identity_report.require(*y == z, || format!("(({x},{y}),{z}) with {x} -> 1"));
            }
            if y.is_loop() {
                identity_report.require(*x == z, || format!("(({x},{y}),{z}) with {y} -> 1"));
            }
            for y2 in &alphabet {
                let Some(z2) = fuse(y, y2) else { continue };
                let left = fuse(x, &z2);
                let right = fuse(&z, y2);
                let ok = matches!((left, right), (Some(a), Some(b)) if a == b && ctx.check_letter(&a).is_ok());
                assoc_report.require(ok, || format!("(({x},{y}),{z}) and (({y},{y2}),{z2})"));
            }
        }
    }
    if identity_report.samples == 0 {
        identity_report.note("no instances; holds vacuously");
    }
    if assoc_report.samples == 0 {
        assoc_report.note("no instances; holds vacuously");
    }
    (identity_report, assoc_report)
}

/// Every irreducible word reachable from `w`, by breadth-first closure.
pub fn irreducible_descendants(w: &Word) -> BTreeSet<Word> {
    let mut seen: HashSet<Word> = HashSet::new();
    let mut queue = VecDeque::from([w.clone()]);
    let mut terminal = BTreeSet::new();
    seen.insert(w.clone());
    while let Some(cur) = queue.pop_front() {
        let next = one_step_reducts(&cur);
        if next.is_empty() {
            terminal.insert(cur);
            continue;
        }
        for n in next {
            if seen.insert(n.clone()) {
                queue.push_back(n);
            }
        }
    }
    terminal
}

/// For every word up to `max_len`, all reduction orders must end in the same
/// irreducible word, equal to [`normalize`]'s output.
pub fn check_confluence_bruteforce(ctx: &EdgeContext, max_len: usize) -> CheckReport {
    let mut report = CheckReport::new(format!("confluence (words of length <= {max_len})"), 0.0);
    let alphabet = ctx.alphabet();
    let mut layer = vec![Word::empty()];
    for len in 0..=max_len {
        for w in &layer {
            let ends = irreducible_descendants(w);
            let nf = normalize_unchecked(w.0.iter().copied());
            let ok = ends.len() == 1 && ends.iter().next() == Some(&nf.normal_form);
            report.require(ok, || format!("{w} reaches {} irreducible words", ends.len()));
        }
        if len == max_len {
            break;
        }
        layer = layer
            .iter()
            .flat_map(|w| {
                alphabet.iter().map(move |l| {
                    let mut v = w.0.clone();
                    v.push(*l);
                    Word(v)
                })
            })
            .collect();
    }
    report
}
