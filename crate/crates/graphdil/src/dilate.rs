//! Dilations of group-indexed families: channels and their Kraus forms, the
//! reflection unitary realizing a channel as `tr₂(ad_u(· ⊗ ω))`, the lazy
//! unitary representation of a channel assignment, formal-sum dilations of
//! contraction families, and the pipelines composing extensions with
//! dilations.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, RwLock};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, DynamicsError, GeneratorFamily, GraphHandle, LengthFunction, LinearOrderGraph, OperatorFamily};
use crate::extend::{
    self, ExtendError, FirstCoverExtension, GroupFamily, ModulusForm, ModulusSample, NormalFormExtension,
    SecondCoverExtension,
};
use crate::linops::{
    hermitian_eigen, is_psd, partial_trace_first, partial_trace_second, spectral_norm, tensor, trace_norm,
    CMatrix, LinopsError, SuperOp, C64,
};
use crate::report::{CheckReport, Suite};
use crate::rewrite::{self, EdgeContext, GroupElement, NodeId, RewriteError};
use crate::sample;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DilateError {
    #[error("not completely positive and trace preserving: {0}")]
    NotCptp(String),
    #[error("precondition failed ({axiom}): {detail}")]
    Precondition { axiom: String, detail: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Linops(#[from] LinopsError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Extend(#[from] ExtendError),
}

pub type Result<T> = std::result::Result<T, DilateError>;

fn precondition(axiom: &str, detail: impl Into<String>) -> DilateError {
    DilateError::Precondition { axiom: axiom.into(), detail: detail.into() }
}

/// Tolerance for complete positivity, trace preservation and the identity
/// channel test.
pub const CPTP_TOL: f64 = 1e-10;

/// Kraus extraction keeps Choi eigenvalues above this fraction of the largest.
pub const KRAUS_CUTOFF: f64 = 1e-12;

/// Unit vector `η` and its projector `|η⟩⟨η|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    vector: CMatrix,
    matrix: CMatrix,
}

impl PureState {
    pub fn new(vector: CMatrix) -> Result<Self> {
        if vector.cols() != 1 {
            return Err(DilateError::Input(format!("state vector has shape {:?}", vector.shape())));
        }
        if (vector.vector_norm() - 1.0).abs() > 1e-10 {
            return Err(DilateError::Input(format!("state vector has norm {}", vector.vector_norm())));
        }
        let matrix = &vector * &vector.adjoint();
        Ok(Self { vector, matrix })
    }

    pub fn basis(n: usize, k: usize) -> Self {
        Self::new(CMatrix::basis(n, k)).expect("basis vectors are unit vectors")
    }

    pub fn dim(&self) -> usize {
        self.vector.rows()
    }

    pub fn vector(&self) -> &CMatrix {
        &self.vector
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }
}

/// Completely positive trace-preserving map on `M_d`, stored by its Choi
/// matrix `Σ_ij Φ(E_ij) ⊗ E_ij`, with an optional Kraus list `Φ(s) = Σ Kᵢ s Kᵢ*`.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    dim: usize,
    choi: CMatrix,
    kraus: Option<Vec<CMatrix>>,
}

impl Channel {
    pub fn from_choi(dim: usize, choi: CMatrix) -> Result<Self> {
        if choi.shape() != (dim * dim, dim * dim) {
            return Err(DilateError::Input(format!("Choi matrix has shape {:?} for d = {dim}", choi.shape())));
        }
        let ch = Self { dim, choi, kraus: None };
        ch.validate(CPTP_TOL)?;
        Ok(ch)
    }

    pub fn from_kraus(kraus: Vec<CMatrix>) -> Result<Self> {
        let dim = kraus.first().map(CMatrix::rows).ok_or_else(|| DilateError::Input("empty Kraus list".into()))?;
        if kraus.iter().any(|k| k.shape() != (dim, dim)) {
            return Err(DilateError::Input("Kraus operators differ in shape".into()));
        }
        let choi = SuperOp::from_kraus(&kraus).choi();
        let ch = Self { dim, choi, kraus: Some(kraus) };
        ch.validate(CPTP_TOL)?;
        Ok(ch)
    }

    pub fn from_superop(phi: &SuperOp) -> Result<Self> {
        Self::from_choi(phi.dim(), phi.choi())
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_kraus(vec![CMatrix::identity(dim)]).expect("identity is a channel")
    }

    /// `s ↦ u s u*`.
    pub fn unitary(u: CMatrix) -> Result<Self> {
        Self::from_kraus(vec![u])
    }

    /// `s ↦ tr(s) I/d`.
    pub fn depolarizing(dim: usize) -> Self {
        let phi = SuperOp::from_fn(dim, |s| CMatrix::identity(dim).scale(s.trace() / dim as f64));
        Self::from_superop(&phi).expect("depolarizing map is a channel")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn choi(&self) -> &CMatrix {
        &self.choi
    }

    pub fn kraus(&self) -> Option<&[CMatrix]> {
        self.kraus.as_deref()
    }

    pub fn superop(&self) -> SuperOp {
        SuperOp::from_choi(self.dim, &self.choi).expect("Choi shape checked on construction")
    }

    pub fn apply(&self, s: &CMatrix) -> Result<CMatrix> {
        Ok(self.superop().apply(s)?)
    }

    /// Complete positivity (Choi PSD) and trace preservation (`tr₁ choi = I`).
    pub fn validate(&self, tol: f64) -> Result<()> {
        if !is_psd(&self.choi, tol) {
            return Err(DilateError::NotCptp("Choi matrix is not positive semidefinite".into()));
        }
        let tp = partial_trace_first(&self.choi, self.dim, self.dim)?;
        let defect = spectral_norm(&(&tp - &CMatrix::identity(self.dim)));
        if defect > tol {
            return Err(DilateError::NotCptp(format!("trace-preservation defect {defect:.3e}")));
        }
        Ok(())
    }

    /// `max_ij ‖Φ(E_ij) − Σ Kᵢ E_ij Kᵢ*‖₁` and `‖Σ Kᵢ*Kᵢ − I‖`.
    pub fn kraus_defects(&self) -> Option<(f64, f64)> {
        let kraus = self.kraus.as_ref()?;
        let phi = self.superop();
        let mut recon: f64 = 0.0;
        for (i, j) in matrix_units(self.dim) {
            let e = CMatrix::unit(self.dim, i, j);
            let mut sum = CMatrix::zeros(self.dim, self.dim);
            for k in kraus {
                sum = &sum + &(&(k * &e) * &k.adjoint());
            }
            recon = recon.max(trace_norm(&(&phi.apply(&e).expect("unit shape") - &sum)));
        }
        let mut norm = CMatrix::zeros(self.dim, self.dim);
        for k in kraus {
            norm = &norm + &(&k.adjoint() * k);
        }
        Some((recon, spectral_norm(&(&norm - &CMatrix::identity(self.dim)))))
    }
}

fn matrix_units(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |i| (0..d).map(move |j| (i, j)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRepr {
    Choi,
    Kraus,
}

/// JSON form `{ "dim": d, "repr": "choi"|"kraus", "data": ... }`, where
/// `data` is one matrix literal for `choi` and a list of them for `kraus`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub dim: usize,
    pub repr: ChannelRepr,
    pub data: serde_json::Value,
}

impl ChannelSpec {
    pub fn to_channel(&self) -> Result<Channel> {
        let bad = |e: serde_json::Error| DilateError::Input(format!("channel data: {e}"));
        let ch = match self.repr {
            ChannelRepr::Choi => Channel::from_choi(self.dim, serde_json::from_value(self.data.clone()).map_err(bad)?)?,
            ChannelRepr::Kraus => Channel::from_kraus(serde_json::from_value(self.data.clone()).map_err(bad)?)?,
        };
        if ch.dim() != self.dim {
            return Err(DilateError::Input(format!("declared dim {} but data has dim {}", self.dim, ch.dim())));
        }
        Ok(ch)
    }

    pub fn from_channel(ch: &Channel) -> Self {
        match ch.kraus() {
            Some(k) => Self { dim: ch.dim(), repr: ChannelRepr::Kraus, data: serde_json::to_value(k).expect("matrices serialize") },
            None => Self { dim: ch.dim(), repr: ChannelRepr::Choi, data: serde_json::to_value(ch.choi()).expect("matrices serialize") },
        }
    }
}

/// Kraus form from the eigendecomposition of the Choi matrix:
/// `Kₐ[p, i] = √λₐ · vₐ[p·d + i]` for eigenvalues above `tol·λ_max`.
pub fn kraus_from_choi(ch: &Channel, tol: f64) -> Result<Channel> {
    let d = ch.dim;
    let (values, vectors) = hermitian_eigen(&ch.choi.hermitian_part())?;
    let top = values.iter().copied().fold(0.0, f64::max);
    if values.iter().any(|&l| l < -CPTP_TOL) {
        return Err(DilateError::NotCptp("Choi matrix has a negative eigenvalue".into()));
    }
    let mut kraus = Vec::new();
    for (a, &l) in values.iter().enumerate().rev() {
        if l <= tol * top {
            continue;
        }
        let s = l.sqrt();
        kraus.push(CMatrix::from_fn(d, d, |p, i| vectors.get(p * d + i, a) * s));
    }
    Ok(Channel { dim: d, choi: ch.choi.clone(), kraus: Some(kraus) })
}

fn kraus_or_extract(ch: &Channel) -> Result<Vec<CMatrix>> {
    match ch.kraus() {
        Some(k) => Ok(k.to_vec()),
        None => Ok(kraus_from_choi(ch, KRAUS_CUTOFF)?.kraus.expect("populated")),
    }
}

/// `v ξ = Σᵢ Kᵢ ξ ⊗ eᵢ` and `vᵢ ξ = ξ ⊗ eᵢ` on `H ⊗ ℂᵏ`.
#[derive(Clone, Debug, PartialEq)]
pub struct IsometricPartition {
    pub k: usize,
    pub v: CMatrix,
    pub parts: Vec<CMatrix>,
}

/// Isometric partition for the channel's Kraus list, zero-padded to `k`.
pub fn isometric_partition(ch: &Channel, k: usize) -> Result<IsometricPartition> {
    let kraus = kraus_or_extract(ch)?;
    partition_from_kraus(ch.dim, &kraus, k)
}

fn partition_from_kraus(d: usize, kraus: &[CMatrix], k: usize) -> Result<IsometricPartition> {
    if kraus.len() > k {
        return Err(DilateError::Input(format!("{} Kraus operators do not fit k = {k}", kraus.len())));
    }
    let id = CMatrix::identity(d);
    let parts: Vec<CMatrix> = (0..k).map(|i| tensor(&id, &CMatrix::basis(k, i))).collect();
    let mut v = CMatrix::zeros(d * k, d);
    for (i, ki) in kraus.iter().enumerate() {
        v = &v + &tensor(ki, &CMatrix::basis(k, i));
    }
    Ok(IsometricPartition { k, v, parts })
}

impl IsometricPartition {
    /// `v*v = I`, `vⱼ*vᵢ = δᵢⱼ I`, `Σ vᵢvᵢ* = I` and `Kᵢ* = v*vᵢ`.
    pub fn check(&self, kraus: &[CMatrix], tol: f64) -> CheckReport {
        let d = self.v.cols();
        let id = CMatrix::identity(d);
        let mut r = CheckReport::new("isometric partition", tol);
        r.record(spectral_norm(&(&(&self.v.adjoint() * &self.v) - &id)), || "v*v = I".into());
        for (i, vi) in self.parts.iter().enumerate() {
            for (j, vj) in self.parts.iter().enumerate() {
                let target = if i == j { id.clone() } else { CMatrix::zeros(d, d) };
                r.record(spectral_norm(&(&(&vj.adjoint() * vi) - &target)), || format!("v{j}*v{i}"));
            }
        }
        let mut sum = CMatrix::zeros(d * self.k, d * self.k);
        for vi in &self.parts {
            sum = &sum + &(vi * &vi.adjoint());
        }
        r.record(spectral_norm(&(&sum - &CMatrix::identity(d * self.k))), || "sum vi vi* = I".into());
        for i in 0..self.k {
            let w = &self.v.adjoint() * &self.parts[i];
            let k = kraus.get(i).cloned().unwrap_or_else(|| CMatrix::zeros(d, d));
            r.record(w.max_abs_diff(&k.adjoint()), || format!("w{i} = v*v{i}"));
        }
        r
    }
}

/// Reflection `u` on `H ⊗ E`, `E = H ⊕ (H ⊗ ℂᵏ)`, and the pure state
/// `ω = ι₁|ξ⟩⟨ξ|ι₁*` with `Φ(s) = tr₂(u (s ⊗ ω) u*)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausDilation {
    pub d: usize,
    pub k: usize,
    pub env_dim: usize,
    pub unitary: CMatrix,
    pub state: PureState,
    /// The isometry `D = Σ Kᵢ ⊗ vᵢ` from `H ⊗ H` into `H ⊗ H ⊗ ℂᵏ`.
    pub isometry: CMatrix,
}

pub fn kraus_ii_dilation(ch: &Channel, xi: &CMatrix) -> Result<KrausDilation> {
    let kraus = kraus_or_extract(ch)?;
    let k = kraus.len();
    kraus_ii_padded(ch.dim, &kraus, xi, k)
}

/// As [`kraus_ii_dilation`] with the Kraus list zero-padded to `k`.
pub fn kraus_ii_dilation_padded(ch: &Channel, xi: &CMatrix, k: usize) -> Result<KrausDilation> {
    let kraus = kraus_or_extract(ch)?;
    kraus_ii_padded(ch.dim, &kraus, xi, k)
}

fn kraus_ii_padded(d: usize, kraus: &[CMatrix], xi: &CMatrix, k: usize) -> Result<KrausDilation> {
    if xi.shape() != (d, 1) || (xi.vector_norm() - 1.0).abs() > 1e-10 {
        return Err(DilateError::Input(format!("xi must be a unit vector of length {d}")));
    }
    let part = partition_from_kraus(d, kraus, k)?;
    let mut dmat = CMatrix::zeros(d * d * k, d * d);
    for vi in &part.parts {
        let ki = &vi.adjoint() * &part.v;
        dmat = &dmat + &tensor(&ki, vi);
    }
    let (n1, n2) = (d * d, d * d * k);
    let reflection = CMatrix::zeros(n1 + n2, n1 + n2)
        .with_block(0, n1, &dmat.adjoint())
        .with_block(n1, 0, &dmat)
        .with_block(n1, n1, &(&CMatrix::identity(n2) - &(&dmat * &dmat.adjoint())));
    // Reorder from (H⊗H) ⊕ (H⊗H⊗ℂᵏ) to H ⊗ (H ⊕ H⊗ℂᵏ) with the system slow.
    let env = d * (k + 1);
    let block_index = |t: usize| {
        let (p, e) = (t / env, t % env);
        if e < d {
            p * d + e
        } else {
            n1 + p * d * k + (e - d)
        }
    };
    let unitary = CMatrix::from_fn(d * env, d * env, |a, b| reflection.get(block_index(a), block_index(b)));
    let eta = CMatrix::zeros(env, 1).with_block(0, 0, xi);
    Ok(KrausDilation { d, k, env_dim: env, unitary, state: PureState::new(eta)?, isometry: dmat })
}

/// `tr₂(M s M*)` for `M` of shape `(d·env) × d`, computed blockwise.
fn pure_partial_trace(m: &CMatrix, s: &CMatrix, d: usize, env: usize) -> CMatrix {
    let ms = m * s;
    CMatrix::from_fn(d, d, |a, b| {
        let mut acc = C64::new(0.0, 0.0);
        for e in 0..env {
            for c in 0..d {
                acc += ms.get(a * env + e, c) * m.get(b * env + e, c).conj();
            }
        }
        acc
    })
}

impl KrausDilation {
    /// `tr₂(ad_u(s ⊗ ω))` through the factorization `u (s ⊗ |η⟩⟨η|) u* = M s M*`
    /// with `M = u (I ⊗ η)`.
    pub fn apply(&self, s: &CMatrix) -> CMatrix {
        let m = &self.unitary * &tensor(&CMatrix::identity(self.d), self.state.vector());
        pure_partial_trace(&m, s, self.d, self.env_dim)
    }

    /// Same quantity from the dense operator `s ⊗ ω`.
    pub fn apply_dense(&self, s: &CMatrix) -> CMatrix {
        let rho = &(&self.unitary * &tensor(s, self.state.matrix())) * &self.unitary.adjoint();
        partial_trace_second(&rho, self.d, self.env_dim).expect("shapes fixed by construction")
    }

    /// `(‖u² − I‖, ‖u − u*‖, ‖D*D − I‖)`.
    pub fn reflection_defects(&self) -> (f64, f64, f64) {
        let n = self.unitary.rows();
        let sq = spectral_norm(&(&(&self.unitary * &self.unitary) - &CMatrix::identity(n)));
        let herm = spectral_norm(&(&self.unitary - &self.unitary.adjoint()));
        let iso = spectral_norm(&(&(&self.isometry.adjoint() * &self.isometry) - &CMatrix::identity(self.d * self.d)));
        (sq, herm, iso)
    }

    /// Trace-norm reconstruction defect on every matrix unit.
    pub fn verify(&self, ch: &Channel, tol: f64) -> CheckReport {
        let mut r = CheckReport::new("Kraus II reconstruction", tol);
        let phi = ch.superop();
        for (i, j) in matrix_units(self.d) {
            let e = CMatrix::unit(self.d, i, j);
            let defect = trace_norm(&(&phi.apply(&e).expect("unit shape") - &self.apply(&e)));
            r.record(defect, || format!("E_{i}{j}"));
        }
        r
    }
}

/// Finitely supported formal sum `Σ (tag, payload)` over group elements.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FormalVector {
    terms: Vec<(GroupElement, CMatrix)>,
}

impl FormalVector {
    pub fn new(terms: Vec<(GroupElement, CMatrix)>) -> Self {
        Self { terms }
    }

    pub fn single(tag: GroupElement, payload: CMatrix) -> Self {
        Self { terms: vec![(tag, payload)] }
    }

    pub fn terms(&self) -> &[(GroupElement, CMatrix)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms with equal tags merged, sorted by tag.
    pub fn canonical(&self) -> BTreeMap<GroupElement, CMatrix> {
        let mut out: BTreeMap<GroupElement, CMatrix> = BTreeMap::new();
        for (t, p) in &self.terms {
            match out.get_mut(t) {
                Some(acc) => *acc = &*acc + p,
                None => {
                    out.insert(t.clone(), p.clone());
                }
            }
        }
        out
    }

    pub fn same_tags(&self, other: &FormalVector) -> bool {
        self.canonical().keys().eq(other.canonical().keys())
    }

    /// `Σ_tag ‖payload − payload'‖` after merging, missing tags counting as 0.
    pub fn distance(&self, other: &FormalVector) -> f64 {
        let (a, b) = (self.canonical(), other.canonical());
        let mut total = 0.0;
        for (t, p) in &a {
            total += match b.get(t) {
                Some(q) => (p - q).frobenius_norm(),
                None => p.frobenius_norm(),
            };
        }
        for (t, q) in &b {
            if !a.contains_key(t) {
                total += q.frobenius_norm();
            }
        }
        total
    }
}

/// Per-element channel assignment `x ↦ Φ_x`.
pub type Assignment = Arc<dyn Fn(&GroupElement) -> Result<Channel> + Send + Sync>;

/// Lazy unitary representation `U(x)(ζ ⊗ e_y) = (u_{xy} u_y* ζ) ⊗ e_{xy}` of a
/// channel assignment, with `ω = ω₀ ⊗ |e_1⟩⟨e_1|` and `u_1 = I`.
#[derive(Clone)]
pub struct VedDilation {
    ctx: EdgeContext,
    d: usize,
    k: usize,
    env_dim: usize,
    xi: CMatrix,
    base_state: PureState,
    assignment: Assignment,
    unitaries: Arc<RwLock<HashMap<GroupElement, Arc<CMatrix>>>>,
}

impl fmt::Debug for VedDilation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VedDilation")
            .field("d", &self.d)
            .field("k", &self.k)
            .field("env_dim", &self.env_dim)
            .finish_non_exhaustive()
    }
}

/// Builds the lazy dilation. Kraus lists are zero-padded to `k` (default
/// `d²`, the largest possible Choi rank) so that every `u_x` acts on one
/// environment.
pub fn ved_dilation(ctx: EdgeContext, assignment: Assignment, xi: CMatrix, k: Option<usize>) -> Result<VedDilation> {
    let id_channel = assignment(&rewrite::identity())?;
    let d = id_channel.dim();
    let defect = id_channel.choi().max_abs_diff(Channel::identity(d).choi());
    if defect > CPTP_TOL {
        return Err(precondition("identity", format!("assignment at the identity differs from id by {defect:.3e}")));
    }
    if xi.shape() != (d, 1) || (xi.vector_norm() - 1.0).abs() > 1e-10 {
        return Err(DilateError::Input(format!("xi must be a unit vector of length {d}")));
    }
    let k = k.unwrap_or(d * d);
    let env_dim = d * (k + 1);
    let eta = CMatrix::zeros(env_dim, 1).with_block(0, 0, &xi);
    Ok(VedDilation {
        ctx,
        d,
        k,
        env_dim,
        xi,
        base_state: PureState::new(eta)?,
        assignment,
        unitaries: Arc::new(RwLock::new(HashMap::new())),
    })
}

impl VedDilation {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    /// Dimension of `H ⊗ E`, the payload space.
    pub fn total_dim(&self) -> usize {
        self.d * self.env_dim
    }

    pub fn context(&self) -> &EdgeContext {
        &self.ctx
    }

    pub fn base_state(&self) -> &PureState {
        &self.base_state
    }

    pub fn channel(&self, x: &GroupElement) -> Result<Channel> {
        let ch = (self.assignment)(x)?;
        if ch.dim() != self.d {
            return Err(DilateError::Input(format!("assignment at {x} has dim {}", ch.dim())));
        }
        Ok(ch)
    }

    /// `u_x`, cached by normal form.
    pub fn unitary_of(&self, x: &GroupElement) -> Result<Arc<CMatrix>> {
        if let Some(u) = self.unitaries.read().expect("cache lock").get(x) {
            return Ok(u.clone());
        }
        let u = if x.is_identity() {
            CMatrix::identity(self.total_dim())
        } else {
            kraus_ii_dilation_padded(&self.channel(x)?, &self.xi, self.k)?.unitary
        };
        let u = Arc::new(u);
        self.unitaries.write().expect("cache lock").entry(x.clone()).or_insert_with(|| u.clone());
        Ok(u)
    }
}

pub fn ved_apply(dil: &VedDilation, x: &GroupElement, v: &FormalVector) -> Result<FormalVector> {
    let mut terms = Vec::with_capacity(v.len());
    for (y, zeta) in v.terms() {
        if zeta.shape() != (dil.total_dim(), 1) {
            return Err(DilateError::Input(format!("payload has shape {:?}", zeta.shape())));
        }
        let xy = rewrite::mul(x, y);
        let u_xy = dil.unitary_of(&xy)?;
        let u_y = dil.unitary_of(y)?;
        let moved = &*u_xy * &(&u_y.adjoint() * zeta);
        terms.push((xy, moved));
    }
    Ok(FormalVector::new(terms))
}

/// `tr₂(ad_{U(x)}(s ⊗ ω))`, evaluated on the tags reached from `e_1`.
pub fn ved_output(dil: &VedDilation, x: &GroupElement, s: &CMatrix) -> Result<CMatrix> {
    let d = dil.d;
    let id = rewrite::identity();
    // Column b of M = U(x)(I ⊗ η ⊗ e_1), grouped by tag.
    let mut columns: BTreeMap<GroupElement, CMatrix> = BTreeMap::new();
    for b in 0..d {
        let zeta = tensor(&CMatrix::basis(d, b), dil.base_state.vector());
        let out = ved_apply(dil, x, &FormalVector::single(id.clone(), zeta))?;
        for (tag, payload) in out.canonical() {
            let m = columns.entry(tag).or_insert_with(|| CMatrix::zeros(dil.total_dim(), d));
            *m = m.with_block(0, b, &(&m.block(0, b, dil.total_dim(), 1) + &payload));
        }
    }
    let mut out = CMatrix::zeros(d, d);
    for m in columns.values() {
        out = &out + &pure_partial_trace(m, s, d, dil.env_dim);
    }
    Ok(out)
}

/// Trace-norm distance between `tr₂(ad_{U(x)}(s ⊗ ω))` and `Φ_x(s)`.
pub fn ved_verify(dil: &VedDilation, x: &GroupElement, s: &CMatrix) -> Result<f64> {
    let direct = dil.channel(x)?.apply(s)?;
    Ok(trace_norm(&(&ved_output(dil, x, s)? - &direct)))
}

/// Superoperator matrix of `s ↦ tr₂(ad_{U(x)}(s ⊗ ω))`.
pub fn ved_compressed(dil: &VedDilation, x: &GroupElement) -> Result<CMatrix> {
    let mut err = None;
    let phi = SuperOp::from_fn(dil.d, |s| match ved_output(dil, x, s) {
        Ok(m) => m,
        Err(e) => {
            err = Some(e);
            CMatrix::zeros(dil.d, dil.d)
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(phi.matrix().clone()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    /// Contractions on a Hilbert space `ℂⁿ`, payloads are vectors.
    Banach,
    /// Maps on `M_d` in vectorized form (`n = d²`), payloads are `vec(s)`.
    CStar,
}

/// Submultiplicative bound `K(x) ≥ ‖φ̄(x)‖` with `K(1) = 1`.
pub type Growth = Arc<dyn Fn(&GroupElement) -> f64 + Send + Sync>;

/// Formal-sum dilation: `r(ξ) = (1, ξ)`, `U(x)` relabels tags `y ↦ xy`,
/// `eval(v, g) = Σ φ̄(g·tag)·payload` and `j = eval(·, 1)`.
#[derive(Clone)]
pub struct StroescuDilation {
    ext: Arc<dyn GroupFamily>,
    flavor: Flavor,
    growth: Option<Growth>,
}

impl fmt::Debug for StroescuDilation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StroescuDilation")
            .field("dim", &self.ext.dim())
            .field("flavor", &self.flavor)
            .field("weighted", &self.growth.is_some())
            .finish_non_exhaustive()
    }
}

fn check_unit(ext: &dyn GroupFamily) -> Result<()> {
    let e = ext.eval(&rewrite::identity())?;
    let defect = e.max_abs_diff(&CMatrix::identity(ext.dim()));
    if defect > 1e-10 {
        return Err(precondition("identity", format!("value at the identity differs from I by {defect:.3e}")));
    }
    Ok(())
}

/// Dilation of a contraction-valued family; `samples` are the elements on
/// which the contraction precondition is certified.
pub fn stroescu_dilation(ext: Arc<dyn GroupFamily>, flavor: Flavor, samples: &[GroupElement]) -> Result<StroescuDilation> {
    check_unit(ext.as_ref())?;
    check_flavor(ext.as_ref(), flavor)?;
    for g in samples {
        let n = spectral_norm(&ext.eval(g)?);
        if n > 1.0 + 1e-10 {
            return Err(precondition("contraction", format!("norm {n} at {g}")));
        }
    }
    Ok(StroescuDilation { ext, flavor, growth: None })
}

/// Weighted variant for families bounded by a submultiplicative `K`.
pub fn stroescu_dilation_weighted(
    ext: Arc<dyn GroupFamily>,
    flavor: Flavor,
    growth: Growth,
    samples: &[GroupElement],
) -> Result<StroescuDilation> {
    check_unit(ext.as_ref())?;
    check_flavor(ext.as_ref(), flavor)?;
    if (growth(&rewrite::identity()) - 1.0).abs() > 1e-12 {
        return Err(precondition("growth", "K(1) must equal 1"));
    }
    for g in samples {
        let (n, k) = (spectral_norm(&ext.eval(g)?), growth(g));
        if n > k * (1.0 + 1e-10) {
            return Err(precondition("growth", format!("norm {n} exceeds K = {k} at {g}")));
        }
    }
    Ok(StroescuDilation { ext, flavor, growth: Some(growth) })
}

fn check_flavor(ext: &dyn GroupFamily, flavor: Flavor) -> Result<()> {
    if flavor == Flavor::CStar {
        let n = ext.dim();
        let d = (n as f64).sqrt().round() as usize;
        if d * d != n {
            return Err(DilateError::Input(format!("C* flavor needs maps on M_d, got dimension {n}")));
        }
    }
    Ok(())
}

/// Product of formal vectors, evaluated pointwise in `M_d` (C* flavor).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FormalProduct {
    pub factors: Vec<FormalVector>,
}

impl StroescuDilation {
    pub fn dim(&self) -> usize {
        self.ext.dim()
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn extension(&self) -> &Arc<dyn GroupFamily> {
        &self.ext
    }

    pub fn growth(&self, g: &GroupElement) -> f64 {
        self.growth.as_ref().map_or(1.0, |k| k(g))
    }

    pub fn is_weighted(&self) -> bool {
        self.growth.is_some()
    }

    /// Algebra size `d` in the C* flavor.
    pub fn algebra_dim(&self) -> usize {
        (self.dim() as f64).sqrt().round() as usize
    }

    pub fn r(&self, xi: &CMatrix) -> FormalVector {
        FormalVector::single(rewrite::identity(), xi.clone())
    }

    pub fn u(&self, x: &GroupElement, v: &FormalVector) -> FormalVector {
        FormalVector::new(v.terms().iter().map(|(y, p)| (rewrite::mul(x, y), p.clone())).collect())
    }

    pub fn eval(&self, v: &FormalVector, g: &GroupElement) -> Result<CMatrix> {
        let mut acc = CMatrix::zeros(self.dim(), 1);
        for (tag, p) in v.terms() {
            acc = &acc + &(&self.ext.eval(&rewrite::mul(g, tag))? * p);
        }
        Ok(acc)
    }

    pub fn j(&self, v: &FormalVector) -> Result<CMatrix> {
        self.eval(v, &rewrite::identity())
    }

    /// `j U(x) r`, assembled column by column.
    pub fn compress(&self, x: &GroupElement) -> Result<CMatrix> {
        let n = self.dim();
        let mut m = CMatrix::zeros(n, n);
        for b in 0..n {
            let col = self.j(&self.u(x, &self.r(&CMatrix::basis(n, b))))?;
            m = m.with_block(0, b, &col);
        }
        Ok(m)
    }

    /// `r(a)` for `a ∈ M_d` (C* flavor).
    pub fn r_algebra(&self, a: &CMatrix) -> FormalVector {
        self.r(&a.vec())
    }

    /// Value of a formal vector at `g` as an element of `M_d`.
    pub fn eval_algebra(&self, v: &FormalVector, g: &GroupElement) -> Result<CMatrix> {
        let d = self.algebra_dim();
        Ok(self.eval(v, g)?.unvec(d, d)?)
    }

    /// Pointwise adjoint, valid when every `φ̄(x)` preserves adjoints.
    pub fn adjoint(&self, v: &FormalVector) -> Result<FormalVector> {
        let d = self.algebra_dim();
        let mut terms = Vec::with_capacity(v.len());
        for (t, p) in v.terms() {
            terms.push((t.clone(), p.unvec(d, d)?.adjoint().vec()));
        }
        Ok(FormalVector::new(terms))
    }

    pub fn eval_product(&self, p: &FormalProduct, g: &GroupElement) -> Result<CMatrix> {
        let mut acc = CMatrix::identity(self.algebra_dim());
        for f in &p.factors {
            acc = &acc * &self.eval_algebra(f, g)?;
        }
        Ok(acc)
    }

    pub fn u_product(&self, x: &GroupElement, p: &FormalProduct) -> FormalProduct {
        FormalProduct { factors: p.factors.iter().map(|f| self.u(x, f)).collect() }
    }

    pub fn j_product(&self, p: &FormalProduct) -> Result<CMatrix> {
        self.eval_product(p, &rewrite::identity())
    }

    /// Pointwise identities at sampled elements and vectors: `j∘r = id`,
    /// `j U(x) r = φ̄(x)`, the representation law on tags, the right-shift law
    /// and point-evaluation norm transport, plus the growth bound.
    pub fn check_identities(&self, elements: &[GroupElement], vectors: &[CMatrix], tol: f64) -> Result<Vec<CheckReport>> {
        let mut jr = CheckReport::new("j r = id", tol);
        let mut compression = CheckReport::new("j U(x) r = phi(x)", tol);
        let mut rep = CheckReport::new("representation law U(x)U(y) = U(xy)", 0.0);
        let mut shift = CheckReport::new("right-shift law eval(U(x)v, g) = eval(v, gx)", 0.0);
        let mut transport = CheckReport::new("norm transport ||eval(U(x)v, g)|| = ||eval(v, gx)||", 0.0);
        let mut growth = CheckReport::new("growth bound ||phi(x)|| <= K(x)", tol);
        let m = elements.len();
        for (a, xi) in vectors.iter().enumerate() {
            jr.record((&self.j(&self.r(xi))? - xi).vector_norm(), || format!("vector {a}"));
        }
        for (i, x) in elements.iter().enumerate() {
            let phi = self.ext.eval(x)?;
            growth.record_bounded(spectral_norm(&phi), self.growth(x) + tol, || format!("x = {x}"));
            for (a, xi) in vectors.iter().enumerate() {
                let lhs = self.j(&self.u(x, &self.r(xi)))?;
                compression.record((&lhs - &(&phi * xi)).vector_norm(), || format!("x = {x}, vector {a}"));
                let y = &elements[(i * 7 + a + 1) % m];
                let g = &elements[(i * 3 + a + 2) % m];
                let v = FormalVector::new(vec![(y.clone(), xi.clone()), (g.clone(), xi.scale_real(0.5))]);
                let two = self.u(x, &self.u(y, &v));
                let one = self.u(&rewrite::mul(x, y), &v);
                rep.require(two == one, || format!("x = {x}, y = {y}"));
                let lhs = self.eval(&self.u(x, &v), g)?;
                let rhs = self.eval(&v, &rewrite::mul(g, x))?;
                shift.record(lhs.max_abs_diff(&rhs), || format!("x = {x}, g = {g}"));
                transport.record((lhs.vector_norm() - rhs.vector_norm()).abs(), || format!("x = {x}, g = {g}"));
            }
        }
        Ok(vec![jr, compression, rep, shift, transport, growth])
    }

    /// C* flavor: `r` unital and positive at sampled points, `j` and `U(x)`
    /// multiplicative on formal products, adjoints transported pointwise.
    pub fn check_cstar(&self, elements: &[GroupElement], mats: &[CMatrix], tol: f64) -> Result<Vec<CheckReport>> {
        if self.flavor != Flavor::CStar {
            return Err(DilateError::Input("algebra checks need the C* flavor".into()));
        }
        let d = self.algebra_dim();
        let id = CMatrix::identity(d);
        let mut unital = CheckReport::new("r unital", tol);
        let mut positive = CheckReport::new("r positive", tol);
        let mut j_hom = CheckReport::new("j multiplicative", tol);
        let mut u_hom = CheckReport::new("U(x) multiplicative", tol);
        let mut star = CheckReport::new("adjoint transport", tol);
        let one = self.r_algebra(&id);
        for g in elements {
            unital.record(self.eval_algebra(&one, g)?.max_abs_diff(&id), || format!("g = {g}"));
        }
        for (a, s) in mats.iter().enumerate() {
            let sq = &s.adjoint() * s;
            let rs = self.r_algebra(&sq);
            let b = &mats[(a + 1) % mats.len()];
            let prod = FormalProduct { factors: vec![self.r_algebra(s), self.r_algebra(b)] };
            j_hom.record(self.j_product(&prod)?.max_abs_diff(&(s * b)), || format!("pair {a}"));
            for g in elements {
                let val = self.eval_algebra(&rs, g)?;
                let (vals, _) = hermitian_eigen(&val.hermitian_part())?;
                let min = vals.first().copied().unwrap_or(0.0);
                positive.record((-min).max(0.0) + val.max_abs_diff(&val.adjoint()), || format!("pair {a}, g = {g}"));
                let x = g;
                let shifted = self.u_product(x, &prod);
                let lhs = self.eval_product(&shifted, g)?;
                let rhs = &self.eval_algebra(&self.u(x, &prod.factors[0]), g)? * &self.eval_algebra(&self.u(x, &prod.factors[1]), g)?;
                u_hom.record(lhs.max_abs_diff(&rhs), || format!("pair {a}, x = {x}"));
                let v = self.r_algebra(s);
                let lhs = self.eval_algebra(&self.adjoint(&v)?, g)?;
                let rhs = self.eval_algebra(&v, g)?.adjoint();
                star.record(lhs.max_abs_diff(&rhs), || format!("pair {a}, g = {g}"));
            }
        }
        Ok(vec![unital, positive, j_hom, u_hom, star])
    }
}

/// Channel-valued family on the edges of a graph, stored as superoperator
/// matrices on `vec(M_d)`.
#[derive(Clone, Debug)]
pub struct ChannelFamily {
    d: usize,
    superops: OperatorFamily,
}

impl ChannelFamily {
    /// `channels` gives the non-loop edges; loops default to the identity.
    pub fn new(graph: impl Into<GraphHandle>, d: usize, channels: BTreeMap<(NodeId, NodeId), Channel>) -> Result<Self> {
        let graph = graph.into();
        for (u, v) in graph.edges() {
            match channels.get(&(u, v)) {
                Some(ch) if ch.dim() != d => {
                    return Err(DilateError::Input(format!("channel on ({u},{v}) has dim {}", ch.dim())))
                }
                None if u != v => return Err(DilateError::Input(format!("no channel on edge ({u},{v})"))),
                _ => {}
            }
        }
        for &(u, v) in channels.keys() {
            if !graph.has_edge(u, v) {
                return Err(DynamicsError::MissingEdge(u, v).into());
            }
        }
        let mats: HashMap<(NodeId, NodeId), CMatrix> =
            channels.iter().map(|(&e, ch)| (e, ch.superop().matrix().clone())).collect();
        let superops = OperatorFamily::new(graph, d * d, move |u, v| {
            mats.get(&(u, v)).cloned().unwrap_or_else(|| CMatrix::identity(d * d))
        })?;
        Ok(Self { d, superops })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn graph(&self) -> &GraphHandle {
        self.superops.graph()
    }

    pub fn superops(&self) -> &OperatorFamily {
        &self.superops
    }

    pub fn channel(&self, u: NodeId, v: NodeId) -> Result<Channel> {
        let m = self.superops.eval(u, v)?;
        Channel::from_superop(&SuperOp::from_matrix(self.d, m)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pipeline {
    A,
    B,
    C,
    #[serde(rename = "A-cptp")]
    ACptp,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::A => "A",
            Pipeline::B => "B",
            Pipeline::C => "C",
            Pipeline::ACptp => "A-cptp",
        })
    }
}

impl std::str::FromStr for Pipeline {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "A" | "a" => Ok(Pipeline::A),
            "B" | "b" => Ok(Pipeline::B),
            "C" | "c" => Ok(Pipeline::C),
            "A-cptp" | "a-cptp" => Ok(Pipeline::ACptp),
            _ => Err(format!("unknown pipeline {s:?}; expected A, B, C or A-cptp")),
        }
    }
}

/// Edge family handed to a pipeline.
#[derive(Clone, Debug)]
pub enum SystemFamily {
    Operators(OperatorFamily),
    /// `φ = e^{αA}`.
    Generators { generators: GeneratorFamily, alpha: f64 },
    Channels(ChannelFamily),
}

#[derive(Clone, Debug)]
pub struct DynamicalSystem {
    pub family: SystemFamily,
    /// Geometric-growth length; derived from the family when absent.
    pub length: Option<LengthFunction>,
    pub flavor: Flavor,
}

impl DynamicalSystem {
    pub fn new(family: SystemFamily) -> Self {
        Self { family, length: None, flavor: Flavor::Banach }
    }

    pub fn with_length(mut self, length: LengthFunction) -> Self {
        self.length = Some(length);
        self
    }

    pub fn with_flavor(mut self, flavor: Flavor) -> Self {
        self.flavor = flavor;
        self
    }

    pub fn graph(&self) -> &GraphHandle {
        match &self.family {
            SystemFamily::Operators(f) => f.graph(),
            SystemFamily::Generators { generators, .. } => generators.graph(),
            SystemFamily::Channels(c) => c.graph(),
        }
    }

    /// The operator family `φ` (superoperators for channel families).
    pub fn operators(&self) -> Result<OperatorFamily> {
        match &self.family {
            SystemFamily::Operators(f) => Ok(f.clone()),
            SystemFamily::Generators { generators, alpha } => Ok(generators.exponential(*alpha)?),
            SystemFamily::Channels(c) => Ok(c.superops().clone()),
        }
    }
}

/// Dilation realized by a pipeline.
#[derive(Clone, Debug)]
pub enum Backend {
    Stroescu(StroescuDilation),
    Ved(VedDilation),
}

#[derive(Clone, Debug)]
pub struct Continuity {
    pub extension: Arc<dyn GroupFamily>,
    pub form: ModulusForm,
    pub length: LengthFunction,
}

/// A family together with its dilation.
#[derive(Clone, Debug)]
pub struct DilatedSystem {
    pub pipeline: Pipeline,
    ctx: EdgeContext,
    graph: GraphHandle,
    family: OperatorFamily,
    backend: Backend,
    continuity: Option<Continuity>,
    notes: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { samples: 200, seed: 0, tol: 1e-10 }
    }
}

/// Tolerance for the representation law on payloads.
pub const REPRESENTATION_TOL: f64 = 1e-12;

fn sample_elements(rng: &mut impl Rng, ctx: &EdgeContext, n: usize, max_len: usize) -> Vec<GroupElement> {
    let mut out = vec![rewrite::identity()];
    out.extend((0..n).map(|_| sample::element(rng, ctx, max_len)));
    out
}

/// `K(x) = c^{|N(x)|}` with `c = max(1, sup ‖φ‖)`, which bounds the
/// normal-form extension and is submultiplicative.
pub fn letter_growth(fam: &OperatorFamily) -> Result<Growth> {
    let c = fam.sup_norm()?.max(1.0);
    Ok(Arc::new(move |g: &GroupElement| c.powi(g.len() as i32)))
}

fn derived_length(
    order: &Arc<LinearOrderGraph>,
    norm_of: impl Fn(NodeId, NodeId) -> Result<f64>,
) -> Result<(LengthFunction, f64)> {
    let mut rate: f64 = 0.0;
    for (u, v) in order.edges() {
        let span = (order.coord(v) - order.coord(u)).abs();
        let n = norm_of(u, v)?;
        if span > 0.0 {
            rate = rate.max(n / span);
        } else if n > 1e-12 {
            return Err(precondition("geometric growth", format!("nonzero value on the degenerate edge ({u},{v})")));
        }
    }
    Ok((LengthFunction::linear(order, rate), rate))
}

/// Discrete dilation on any graph: normal-form extension, then a formal-sum
/// dilation (weighted by `c^{|N(x)|}` when the family is not contractive).
pub fn theorem_a_pipeline(sys: &DynamicalSystem) -> Result<DilatedSystem> {
    if let SystemFamily::Channels(_) = sys.family {
        return theorem_a_cptp_pipeline(sys);
    }
    let fam = sys.operators()?;
    let ext = NormalFormExtension::new(fam.clone()).map_err(map_precondition)?;
    let ctx = ext.context().clone();
    let ext: Arc<dyn GroupFamily> = Arc::new(ext);
    let samples = certification_samples(&ctx);
    let mut notes = Vec::new();
    let backend = if fam.is_contraction() {
        stroescu_dilation(ext, sys.flavor, &samples)?
    } else {
        let c = fam.sup_norm()?;
        notes.push(format!("family is not contractive (sup norm {c:.6}); dilation space weighted by K(x) = c^|N(x)|"));
        stroescu_dilation_weighted(ext, sys.flavor, letter_growth(&fam)?, &samples)?
    };
    Ok(DilatedSystem {
        pipeline: Pipeline::A,
        ctx,
        graph: fam.graph().clone(),
        family: fam,
        backend: Backend::Stroescu(backend),
        continuity: None,
        notes,
    })
}

fn map_precondition(e: ExtendError) -> DilateError {
    match e {
        ExtendError::Precondition { axiom, detail } => DilateError::Precondition { axiom, detail },
        other => other.into(),
    }
}

fn certification_samples(ctx: &EdgeContext) -> Vec<GroupElement> {
    let mut rng = sample::rng(0x5eed);
    let mut out: Vec<GroupElement> = ctx
        .alphabet()
        .iter()
        .map(|l| rewrite::iota(ctx, l.tail, l.head).expect("alphabet letters are valid"))
        .collect();
    out.extend(sample_elements(&mut rng, ctx, 64, 4));
    out
}

fn require_order(graph: &GraphHandle) -> Result<Arc<LinearOrderGraph>> {
    graph.as_order().cloned().ok_or(DilateError::Extend(ExtendError::Structure))
}

/// Continuous dilation of a divisible contraction family with geometric
/// growth on a linear order: first cover extension, then a formal-sum
/// dilation.
pub fn theorem_b_pipeline(sys: &DynamicalSystem) -> Result<DilatedSystem> {
    if let SystemFamily::Channels(_) = sys.family {
        return Err(DilateError::Input("pipeline B takes operator families; use A-cptp for channels".into()));
    }
    let fam = sys.operators()?;
    let order = require_order(fam.graph())?;
    let ext = FirstCoverExtension::new(fam.clone()).map_err(map_precondition)?;
    if !fam.is_contraction() {
        return Err(precondition("contraction", format!("sup norm {:.6}", fam.sup_norm()?)));
    }
    let mut notes = Vec::new();
    let id = CMatrix::identity(fam.dim());
    let length = match &sys.length {
        Some(l) => l.clone(),
        None => {
            let (l, rate) = derived_length(&order, |u, v| Ok(spectral_norm(&(&fam.eval(u, v)? - &id))))?;
            notes.push(format!("length derived from the family: l(u,v) = {rate:.6}·|t_u − t_v|"));
            l
        }
    };
    let growth = dynamics::check_geometric_growth(&fam, &length, &order.edges(), 1e-10)?;
    if !growth.pass {
        return Err(precondition("geometric growth", format!("max excess {:.3e} at {}", growth.max_excess, growth.argmax.as_deref().unwrap_or("?"))));
    }
    let ctx = ext.context().clone();
    let ext: Arc<dyn GroupFamily> = Arc::new(ext);
    let backend = stroescu_dilation(ext.clone(), sys.flavor, &certification_samples(&ctx))?;
    Ok(DilatedSystem {
        pipeline: Pipeline::B,
        ctx,
        graph: fam.graph().clone(),
        family: fam,
        backend: Backend::Stroescu(backend),
        continuity: Some(Continuity { extension: ext, form: ModulusForm::ExpMinusOne, length }),
        notes,
    })
}

/// Continuous dilation of an exponential family `e^{αA}` with additive
/// dissipative generators: second cover extension, then a formal-sum
/// dilation.
pub fn theorem_c_pipeline(sys: &DynamicalSystem) -> Result<DilatedSystem> {
    let SystemFamily::Generators { generators, alpha } = &sys.family else {
        return Err(DilateError::Input("pipeline C takes a generator family".into()));
    };
    let gen = generators.scaled(*alpha)?;
    let order = require_order(gen.graph())?;
    let ext = SecondCoverExtension::new(gen.clone()).map_err(map_precondition)?;
    let mut notes = Vec::new();
    let length = match &sys.length {
        Some(l) => l.clone(),
        None => {
            let (l, rate) = derived_length(&order, |u, v| Ok(spectral_norm(&gen.eval(u, v)?)))?;
            notes.push(format!("length derived from the generators: l(u,v) = {rate:.6}·|t_u − t_v|"));
            l
        }
    };
    let growth = dynamics::check_generator_growth(&gen, &length, &order.edges(), 1e-10)?;
    if !growth.pass {
        return Err(precondition("generator geometric growth", format!("max excess {:.3e} at {}", growth.max_excess, growth.argmax.as_deref().unwrap_or("?"))));
    }
    let fam = gen.exponential(1.0)?;
    let ctx = ext.context().clone();
    let ext: Arc<dyn GroupFamily> = Arc::new(ext);
    let backend = stroescu_dilation(ext.clone(), sys.flavor, &certification_samples(&ctx))?;
    Ok(DilatedSystem {
        pipeline: Pipeline::C,
        ctx,
        graph: fam.graph().clone(),
        family: fam,
        backend: Backend::Stroescu(backend),
        continuity: Some(Continuity { extension: ext, form: ModulusForm::Linear, length }),
        notes,
    })
}

/// CPTP dilation on any graph: normal-form extension of the superoperators
/// `Φ_x = Π Φ₀(uᵢ, vᵢ)`, then the lazy unitary representation.
pub fn theorem_a_cptp_pipeline(sys: &DynamicalSystem) -> Result<DilatedSystem> {
    let SystemFamily::Channels(channels) = &sys.family else {
        return Err(DilateError::Input("pipeline A-cptp takes a channel family".into()));
    };
    let d = channels.dim();
    let fam = channels.superops().clone();
    let ext = Arc::new(NormalFormExtension::new(fam.clone()).map_err(map_precondition)?);
    let ctx = ext.context().clone();
    let inner = ext.clone();
    let assignment: Assignment = Arc::new(move |x: &GroupElement| {
        let m = inner.eval(x)?;
        Channel::from_superop(&SuperOp::from_matrix(d, m)?)
    });
    let ved = ved_dilation(ctx.clone(), assignment, CMatrix::basis(d, 0), None)?;
    Ok(DilatedSystem {
        pipeline: Pipeline::ACptp,
        ctx,
        graph: fam.graph().clone(),
        family: fam,
        backend: Backend::Ved(ved),
        continuity: None,
        notes: vec!["no continuous pipeline is offered for channel families".into()],
    })
}

pub fn run_pipeline(pipeline: Pipeline, sys: &DynamicalSystem) -> Result<DilatedSystem> {
    match pipeline {
        Pipeline::A => theorem_a_pipeline(sys),
        Pipeline::B => theorem_b_pipeline(sys),
        Pipeline::C => theorem_c_pipeline(sys),
        Pipeline::ACptp => theorem_a_cptp_pipeline(sys),
    }
}

impl DilatedSystem {
    pub fn context(&self) -> &EdgeContext {
        &self.ctx
    }

    pub fn graph(&self) -> &GraphHandle {
        &self.graph
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn continuity(&self) -> Option<&Continuity> {
        self.continuity.as_ref()
    }

    /// `φ(u, v)` (the superoperator matrix for channel families).
    pub fn edge_value(&self, u: NodeId, v: NodeId) -> Result<CMatrix> {
        Ok(self.family.eval(u, v)?)
    }

    /// `U(u, v) := Ū(ι(u, v))`, as a group element.
    pub fn edge_element(&self, u: NodeId, v: NodeId) -> Result<GroupElement> {
        Ok(rewrite::iota(&self.ctx, u, v)?)
    }

    pub fn apply(&self, x: &GroupElement, v: &FormalVector) -> Result<FormalVector> {
        match &self.backend {
            Backend::Stroescu(s) => Ok(s.u(x, v)),
            Backend::Ved(d) => ved_apply(d, x, v),
        }
    }

    /// Compression of `U(x)`: `j U(x) r`, or the superoperator of
    /// `tr₂(ad_{U(x)}(· ⊗ ω))`.
    pub fn compressed(&self, x: &GroupElement) -> Result<CMatrix> {
        match &self.backend {
            Backend::Stroescu(s) => s.compress(x),
            Backend::Ved(d) => ved_compressed(d, x),
        }
    }

    fn payload_dim(&self) -> usize {
        match &self.backend {
            Backend::Stroescu(s) => s.dim(),
            Backend::Ved(d) => d.total_dim(),
        }
    }

    fn random_vector(&self, rng: &mut impl Rng) -> FormalVector {
        let elems = sample_elements(rng, &self.ctx, 2, 3);
        let n = self.payload_dim();
        FormalVector::new(elems.into_iter().map(|g| (g, sample::unit_vector(rng, n))).collect())
    }

    /// Identity and divisibility of `U` at group level, the representation
    /// law on formal vectors, the compression identity on every edge, and
    /// the backend's own identities; for continuous pipelines also the
    /// continuity modulus.
    pub fn verify(&self, cfg: &VerifyConfig) -> Result<Suite> {
        let mut suite = Suite::new(format!("pipeline {}", self.pipeline));
        let mut rng = sample::rng(cfg.seed);

        let mut ident = CheckReport::new("identity axiom (group level)", 0.0);
        for u in self.graph.nodes() {
            if self.graph.has_edge(u, u) {
                ident.require(self.edge_element(u, u)?.is_identity(), || format!("iota({u},{u})"));
            }
        }
        suite.push(ident);

        let mut div = CheckReport::new("divisibility (group level)", 0.0);
        for (u, v, w) in self.graph.triples() {
            let lhs = rewrite::mul(&self.edge_element(u, v)?, &self.edge_element(v, w)?);
            div.require(lhs == self.edge_element(u, w)?, || format!("({u},{v},{w})"));
        }
        suite.push(div);

        let mut rep = CheckReport::new("representation law", REPRESENTATION_TOL);
        let mut unit = CheckReport::new("U(1) = id", REPRESENTATION_TOL);
        let n_rep = cfg.samples.clamp(1, 200);
        for k in 0..n_rep {
            let x = sample::element(&mut rng, &self.ctx, 3);
            let y = sample::element(&mut rng, &self.ctx, 3);
            let v = self.random_vector(&mut rng);
            let two = self.apply(&x, &self.apply(&y, &v)?)?;
            let one = self.apply(&rewrite::mul(&x, &y), &v)?;
            if two.same_tags(&one) {
                rep.record(two.distance(&one), || format!("sample {k}: x = {x}, y = {y}"));
            } else {
                rep.fail(format!("sample {k}: tags differ for x = {x}, y = {y}"));
            }
            let fixed = self.apply(&rewrite::identity(), &v)?;
            if fixed.same_tags(&v) {
                unit.record(fixed.distance(&v), || format!("sample {k}"));
            } else {
                unit.fail(format!("sample {k}: tags moved"));
            }
        }
        suite.push(rep);
        suite.push(unit);

        let mut comp = CheckReport::new("compression identity on every edge", cfg.tol);
        for (u, v) in self.graph.edges() {
            let x = self.edge_element(u, v)?;
            match &self.backend {
                Backend::Stroescu(s) => {
                    let defect = spectral_norm(&(&s.compress(&x)? - &self.edge_value(u, v)?));
                    comp.record(defect, || format!("({u},{v})"));
                }
                Backend::Ved(d) => {
                    for (i, j) in matrix_units(d.dim()) {
                        let defect = ved_verify(d, &x, &CMatrix::unit(d.dim(), i, j))?;
                        comp.record(defect, || format!("({u},{v}) on E_{i}{j}"));
                    }
                }
            }
        }
        suite.push(comp);

        let elements = sample_elements(&mut rng, &self.ctx, cfg.samples.clamp(4, 64), 4);
        match &self.backend {
            Backend::Stroescu(s) => {
                let n = s.dim();
                let vectors: Vec<CMatrix> = (0..3).map(|_| sample::unit_vector(&mut rng, n)).collect();
                suite.extend(s.check_identities(&elements, &vectors, cfg.tol)?);
                if s.flavor() == Flavor::CStar {
                    let d = s.algebra_dim();
                    let mats: Vec<CMatrix> = (0..3).map(|_| sample::gaussian(&mut rng, d, d)).collect();
                    suite.extend(s.check_cstar(&elements, &mats, 1e-9)?);
                }
            }
            Backend::Ved(d) => {
                let mut unitary = CheckReport::new("u_x unitary", cfg.tol);
                let mut sampled = CheckReport::new("tr2 identity at sampled elements", cfg.tol);
                for x in &elements {
                    let u = d.unitary_of(x)?;
                    let defect = spectral_norm(&(&(&*u * &u.adjoint()) - &CMatrix::identity(d.total_dim())));
                    unitary.record(defect, || format!("x = {x}"));
                    let s = sample::gaussian(&mut rng, d.dim(), d.dim());
                    sampled.record(ved_verify(d, x, &s)?, || format!("x = {x}"));
                }
                suite.push(unitary);
                suite.push(sampled);
            }
        }

        if let Some(c) = &self.continuity {
            let order = self.graph.as_order().expect("continuous pipelines run on linear orders");
            let samples = modulus_samples(&mut rng, order, &self.ctx, c.extension.dim(), cfg.samples);
            suite.push(extend::continuity_modulus_check(c.extension.as_ref(), order, c.form, &c.length, &samples, cfg.tol)?);
        }
        Ok(suite)
    }
}

/// Random `(e, e', g, h, ξ)` samples for the continuity check.
pub fn modulus_samples(
    rng: &mut impl Rng,
    order: &LinearOrderGraph,
    ctx: &EdgeContext,
    dim: usize,
    n: usize,
) -> Vec<ModulusSample> {
    let edges = order.edges();
    (0..n)
        .map(|_| ModulusSample {
            e: edges[rng.gen_range(0..edges.len())],
            e_prime: edges[rng.gen_range(0..edges.len())],
            g: sample::element(rng, ctx, 3),
            h: sample::element(rng, ctx, 3),
            xi: sample::unit_vector(rng, dim),
        })
        .collect()
}

/// Outcome of the one-parameter factorization `U(t, s) = U(t) U(s)⁻¹`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub t0: NodeId,
    pub pass: bool,
    pub group_identity: CheckReport,
    pub operator_identity: CheckReport,
    /// `max ‖φ(a,t₀)φ(b,t₀) − φ(c,t₀)‖` with `c − t₀ = (a − t₀) + (b − t₀)`;
    /// zero for time-homogeneous divisible families.
    pub family_semigroup_defect: f64,
    /// `max ‖j U(a)U(b) r − j U(c) r‖` over the same triples.
    pub dilation_semigroup_defect: f64,
    pub semigroup_triples: usize,
    /// The family breaks the semigroup law beyond tolerance.
    pub memoryful: bool,
}

/// `U(t) = Ū(ι(t, t₀))` when `t ⪯ t₀` and `Ū(ι(t₀, t))⁻¹` otherwise.
pub fn one_param_element(sys: &DilatedSystem, t: NodeId, t0: NodeId) -> Result<GroupElement> {
    let order = require_order(&sys.graph)?;
    if order.precedes(t, t0) {
        sys.edge_element(t, t0)
    } else {
        Ok(rewrite::inv(&sys.edge_element(t0, t)?))
    }
}

pub fn one_param_factorization(sys: &DilatedSystem, t0: NodeId, cfg: &VerifyConfig) -> Result<FactorizationReport> {
    let order = require_order(&sys.graph)?;
    order.rank(t0)?;
    let mut rng = sample::rng(cfg.seed);
    let mut group = CheckReport::new("iota(t,s) = U(t) U(s)^-1 (group level)", 0.0);
    let mut operator = CheckReport::new("U(t,s) = U(t) U(s)^-1 (operator level)", REPRESENTATION_TOL);
    let edges = order.edges();
    for &(t, s) in &edges {
        let lhs = sys.edge_element(t, s)?;
        let ut = one_param_element(sys, t, t0)?;
        let us = one_param_element(sys, s, t0)?;
        group.require(lhs == rewrite::mul(&ut, &rewrite::inv(&us)), || format!("({t},{s})"));
    }
    let picks = cfg.samples.clamp(1, edges.len().max(1) * 4);
    for k in 0..picks {
        let (t, s) = edges[rng.gen_range(0..edges.len())];
        let v = sys.random_vector(&mut rng);
        let direct = sys.apply(&sys.edge_element(t, s)?, &v)?;
        let ut = one_param_element(sys, t, t0)?;
        let us_inv = rewrite::inv(&one_param_element(sys, s, t0)?);
        let factored = sys.apply(&ut, &sys.apply(&us_inv, &v)?)?;
        if direct.same_tags(&factored) {
            operator.record(direct.distance(&factored), || format!("sample {k}: ({t},{s})"));
        } else {
            operator.fail(format!("sample {k}: tags differ at ({t},{s})"));
        }
    }

    let mut fam_defect: f64 = 0.0;
    let mut dil_defect: f64 = 0.0;
    let mut triples = 0;
    for &a in order.nodes() {
        for &b in order.nodes() {
            let c = NodeId(a.0 + b.0 - t0.0);
            if a == t0 || b == t0 || !order.precedes(a, t0) || !order.precedes(b, t0) || !order.contains(c) || !order.precedes(c, t0) {
                continue;
            }
            triples += 1;
            let prod = &sys.edge_value(a, t0)? * &sys.edge_value(b, t0)?;
            fam_defect = fam_defect.max(spectral_norm(&(&prod - &sys.edge_value(c, t0)?)));
            let uab = rewrite::mul(&one_param_element(sys, a, t0)?, &one_param_element(sys, b, t0)?);
            let lhs = sys.compressed(&uab)?;
            let rhs = sys.compressed(&one_param_element(sys, c, t0)?)?;
            dil_defect = dil_defect.max(spectral_norm(&(&lhs - &rhs)));
        }
    }
    Ok(FactorizationReport {
        t0,
        pass: group.pass && operator.pass,
        group_identity: group,
        operator_identity: operator,
        family_semigroup_defect: fam_defect,
        dilation_semigroup_defect: dil_defect,
        semigroup_triples: triples,
        memoryful: fam_defect > cfg.tol,
    })
}

/// `‖Φ_{gh}(s) − Φ_g(Φ_h(s))‖₁` computed through the dilation on both sides.
pub fn ved_indivisibility(dil: &VedDilation, g: &GroupElement, h: &GroupElement, s: &CMatrix) -> Result<f64> {
    let joint = ved_output(dil, &rewrite::mul(g, h), s)?;
    let composed = ved_output(dil, g, &ved_output(dil, h, s)?)?;
    Ok(trace_norm(&(&joint - &composed)))
}

/// Sampled positivity helper: smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(a: &CMatrix) -> Result<f64> {
    let (v, _) = hermitian_eigen(&a.hermitian_part())?;
    Ok(v.first().copied().unwrap_or(0.0))
}
