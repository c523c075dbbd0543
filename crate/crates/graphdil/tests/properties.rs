use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use graphdil::dilate::{self, Backend, Channel, ChannelFamily, DynamicalSystem, Flavor, FormalVector, SystemFamily};
use graphdil::dynamics::{self, DagNetwork, GeneratorFamily, GraphHandle, LengthFunction, LinearOrderGraph, OperatorFamily};
use graphdil::extend::{self, FirstCoverExtension, GroupFamily, NormalFormExtension, SecondCoverExtension};
use graphdil::linops::{self, expm, hermitian_eigen, spectral_norm, CMatrix, SuperOp};
use graphdil::rewrite::{self, EdgeContext, GroupElement, Letter, NodeId, Word};
use graphdil::sample::{self, SampleRng};

fn n(k: i64) -> NodeId {
    NodeId(k)
}

fn order(k: i64) -> Arc<LinearOrderGraph> {
    Arc::new(LinearOrderGraph::ascending(k))
}

/// Clique, linear order or random graph on up to five nodes.
fn context(rng: &mut SampleRng, kind: u8) -> EdgeContext {
    match kind % 3 {
        0 => EdgeContext::complete((0..3).map(n)),
        1 => order(4).edge_context(),
        _ => {
            let edges: Vec<(NodeId, NodeId)> =
                (0..5).flat_map(|a| (0..5).map(move |b| (n(a), n(b)))).filter(|_| rng.gen_bool(0.3)).collect();
            EdgeContext::new((0..5).map(n), edges).unwrap()
        }
    }
}

/// `φ(u, v) = e^{X_i} e^{X_{i+1}} ⋯` over the segments between `u ⪯ v`;
/// divisible for arbitrary, non-commuting `X_i`.
fn segment_family(ord: &Arc<LinearOrderGraph>, seg: Vec<CMatrix>) -> OperatorFamily {
    let d = seg[0].rows();
    let exps: Vec<CMatrix> = seg.iter().map(|x| expm(x).unwrap()).collect();
    let o = ord.clone();
    OperatorFamily::new(GraphHandle::Order(ord.clone()), d, move |u, v| {
        let (a, b) = (o.rank(u).unwrap(), o.rank(v).unwrap());
        exps[a..b].iter().fold(CMatrix::identity(d), |acc, e| &acc * e)
    })
    .unwrap()
}

/// `A(u, v) = Σ X_i` over the segments between `u ⪯ v`.
fn segment_generators(ord: &Arc<LinearOrderGraph>, seg: Vec<CMatrix>) -> GeneratorFamily {
    let d = seg[0].rows();
    let o = ord.clone();
    GeneratorFamily::new(GraphHandle::Order(ord.clone()), d, move |u, v| {
        let (a, b) = (o.rank(u).unwrap(), o.rank(v).unwrap());
        seg[a..b].iter().fold(CMatrix::zeros(d, d), |acc, x| &acc + x)
    })
    .unwrap()
}

fn dissipative_segments(rng: &mut SampleRng, count: usize, d: usize) -> Vec<CMatrix> {
    (0..count).map(|_| sample::dissipative(rng, d, 0.7)).collect()
}

fn random_nodes(rng: &mut SampleRng, ord: &LinearOrderGraph) -> Vec<NodeId> {
    ord.nodes().iter().copied().filter(|_| rng.gen_bool(0.5)).collect()
}

fn random_channel(rng: &mut SampleRng, d: usize) -> Channel {
    let k = rng.gen_range(1..=d * d);
    Channel::from_superop(&SuperOp::from_kraus(&sample::kraus(rng, d, k))).unwrap()
}

fn sorted_eigenvalues(a: &CMatrix) -> Vec<f64> {
    hermitian_eigen(a).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // linops

    // Integer entries keep every product exact, so equality is bitwise.
    #[test]
    fn tensor_is_associative(seed in any::<u64>(), a in 1usize..3, b in 1usize..3, c in 1usize..3) {
        let mut rng = sample::rng(seed);
        let mut int = |r: usize, k: usize| {
            CMatrix::from_fn(r, k, |_, _| linops::C64::new(rng.gen_range(-9..=9) as f64, rng.gen_range(-9..=9) as f64))
        };
        let (x, y, z) = (int(a, b), int(b, c), int(c, a));
        let left = linops::tensor(&linops::tensor(&x, &y), &z);
        let right = linops::tensor(&x, &linops::tensor(&y, &z));
        prop_assert_eq!(left, right);
    }

    #[test]
    fn partial_trace_of_product(seed in any::<u64>(), d1 in 1usize..4, d2 in 1usize..4) {
        let mut rng = sample::rng(seed);
        let (a, b) = (sample::gaussian(&mut rng, d1, d1), sample::gaussian(&mut rng, d2, d2));
        let pt = linops::partial_trace_second(&linops::tensor(&a, &b), d1, d2).unwrap();
        prop_assert!(pt.max_abs_diff(&a.scale(b.trace())) <= 1e-12);
    }

    #[test]
    fn exponential_perturbation_bound(seed in any::<u64>(), d in 2usize..7) {
        let mut rng = sample::rng(seed);
        let x = sample::dissipative(&mut rng, d, 2.0);
        let y = sample::dissipative(&mut rng, d, 2.0);
        let lhs = spectral_norm(&(&expm(&(&x + &y)).unwrap() - &expm(&x).unwrap()));
        prop_assert!(lhs <= spectral_norm(&y) + 1e-10);
    }

    #[test]
    fn exp_derivative_is_bounded_by_direction(seed in any::<u64>(), d in 2usize..5, t in 0.0f64..1.0) {
        let mut rng = sample::rng(seed);
        let x = sample::dissipative(&mut rng, d, 1.0);
        let y = sample::dissipative(&mut rng, d, 1.0);
        let der = linops::exp_derivative(&x, &y, t).unwrap();
        prop_assert!(spectral_norm(&der) <= spectral_norm(&y) + 1e-10);
    }

    #[test]
    fn conjugation_preserves_spectrum(seed in any::<u64>(), d in 1usize..5) {
        let mut rng = sample::rng(seed);
        let u = sample::unitary(&mut rng, d);
        let s = sample::hermitian(&mut rng, d);
        let t = linops::adjoint_action(&u, &s).unwrap();
        prop_assert!((t.trace() - s.trace()).norm() <= 1e-12);
        for (a, b) in sorted_eigenvalues(&t).iter().zip(sorted_eigenvalues(&s)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    // rewrite

    #[test]
    fn reductions_shorten_by_one(seed in any::<u64>(), kind in any::<u8>(), len in 0usize..8) {
        let mut rng = sample::rng(seed);
        let ctx = context(&mut rng, kind);
        let w = sample::word(&mut rng, &ctx, len);
        for r in rewrite::reduce_once_all(&ctx, &w).unwrap() {
            prop_assert_eq!(r.len() + 1, w.len());
        }
        let g = rewrite::normalize(&ctx, &w).unwrap();
        prop_assert!(rewrite::is_irreducible(g.normal_form()));
        prop_assert_eq!(rewrite::normalize(&ctx, g.normal_form()).unwrap(), g);
    }

    #[test]
    fn normalize_is_a_homomorphism(seed in any::<u64>(), kind in any::<u8>(), lx in 0usize..7, ly in 0usize..7) {
        let mut rng = sample::rng(seed);
        let ctx = context(&mut rng, kind);
        let x = sample::word(&mut rng, &ctx, lx);
        let y = sample::word(&mut rng, &ctx, ly);
        let joint = rewrite::normalize(&ctx, &x.concat(&y)).unwrap();
        let split = rewrite::mul(&rewrite::normalize(&ctx, &x).unwrap(), &rewrite::normalize(&ctx, &y).unwrap());
        prop_assert_eq!(joint, split);
    }

    #[test]
    fn group_axioms(seed in any::<u64>(), kind in any::<u8>()) {
        let mut rng = sample::rng(seed);
        let ctx = context(&mut rng, kind);
        let e = rewrite::identity();
        for _ in 0..20 {
            let [g, h, k]: [GroupElement; 3] = std::array::from_fn(|_| sample::element(&mut rng, &ctx, 6));
            prop_assert_eq!(rewrite::mul(&rewrite::mul(&g, &h), &k), rewrite::mul(&g, &rewrite::mul(&h, &k)));
            prop_assert_eq!(rewrite::mul(&g, &e), g.clone());
            prop_assert_eq!(rewrite::mul(&e, &g), g.clone());
            prop_assert!(rewrite::mul(&g, &rewrite::inv(&g)).is_identity());
            prop_assert_eq!(rewrite::inv(&rewrite::mul(&g, &h)), rewrite::mul(&rewrite::inv(&h), &rewrite::inv(&g)));
        }
    }

    #[test]
    fn iota_composes_along_chains(k in 1i64..7, a in 0i64..7, b in 0i64..7, c in 0i64..7) {
        let ctx = order(k).edge_context();
        let mut t = [a.min(k), b.min(k), c.min(k)];
        t.sort();
        let [u, v, w] = t.map(n);
        let lhs = rewrite::mul(&rewrite::iota(&ctx, u, v).unwrap(), &rewrite::iota(&ctx, v, w).unwrap());
        prop_assert_eq!(lhs, rewrite::iota(&ctx, u, w).unwrap());
    }

    // dynamics

    #[test]
    fn commuting_additive_generators_are_divisible(seed in any::<u64>(), d in 1usize..4, alpha in 0.0f64..3.0) {
        let mut rng = sample::rng(seed);
        let x = sample::gaussian(&mut rng, d, d).scale_real(0.5);
        let ord = order(4);
        // Commuting values: c_i·X with random weights c_i per segment.
        let seg: Vec<CMatrix> = (0..4).map(|_| x.scale_real(rng.gen_range(0.0..1.0))).collect();
        let gens = segment_generators(&ord, seg);
        let fam = gens.exponential(alpha).unwrap();
        prop_assert!(dynamics::check_additivity(&gens, 1e-12).unwrap().pass);
        for (u, v, w) in ord.chains() {
            prop_assert!(dynamics::divisibility_defect(&fam, u, v, w).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn network_defect_closes_the_path_algebra(seed in any::<u64>()) {
        let mut rng = sample::rng(seed);
        let mut weights = Vec::new();
        for a in 0..5 {
            for b in a + 1..5 {
                if rng.gen_bool(0.6) {
                    let entries: Vec<f64> = (0..4).map(|_| rng.gen_range(-3..=3) as f64).collect();
                    weights.push(((n(a), n(b)), CMatrix::from_real(2, 2, &entries).unwrap()));
                }
            }
        }
        let net = DagNetwork::new(2, (0..5).map(n), weights).unwrap();
        let fam = dynamics::network_family(&net).unwrap();
        for (u, v, w) in fam.graph().triples() {
            let lhs = &dynamics::network_defect(&net, u, v, w).unwrap() + &(&fam.eval(u, v).unwrap() * &fam.eval(v, w).unwrap());
            prop_assert_eq!(lhs, fam.eval(u, w).unwrap());
        }
    }

    #[test]
    fn growth_implies_identity(seed in any::<u64>(), eps in 0.0f64..0.2) {
        let mut rng = sample::rng(seed);
        let ord = order(3);
        let seg = dissipative_segments(&mut rng, 3, 2);
        let base = segment_family(&ord, seg);
        let bump = sample::gaussian(&mut rng, 2, 2).scale_real(eps);
        let perturbed = rng.gen_range(0..4);
        let b = base.clone();
        let fam = OperatorFamily::new(GraphHandle::Order(ord.clone()), 2, move |u, v| {
            let m = b.eval(u, v).unwrap();
            if u == v && u == n(perturbed) { &m + &bump } else { m }
        })
        .unwrap();
        let len = LengthFunction::linear(&ord, 10.0);
        let growth = dynamics::check_geometric_growth(&fam, &len, &ord.edges(), 1e-12).unwrap();
        let identity = dynamics::check_identity_axiom(&fam, 1e-10).unwrap();
        prop_assert!(!growth.pass || identity.pass);
    }

    #[test]
    fn lindblad_dissipation_is_positive(seed in any::<u64>(), d in 2usize..4, k in 0usize..3) {
        let mut rng = sample::rng(seed);
        let h = sample::hermitian(&mut rng, d);
        let kraus: Vec<CMatrix> = (0..k).map(|_| sample::gaussian(&mut rng, d, d)).collect();
        let l = dynamics::lindblad_from_kraus(&h, &kraus).unwrap();
        for _ in 0..4 {
            let a = sample::gaussian(&mut rng, d, d);
            let dl = dynamics::dissipation_map(&l, &a, &a).unwrap();
            let scale = 1.0 + spectral_norm(&dl);
            prop_assert!(linops::is_psd(&dl, 1e-10 * scale));
        }
    }

    // extend

    #[test]
    fn cover_is_reduction_invariant(seed in any::<u64>(), len in 0usize..8) {
        let mut rng = sample::rng(seed);
        let ord = order(5);
        let graph = GraphHandle::Order(ord.clone());
        let ctx = ord.edge_context();
        let w = sample::word(&mut rng, &ctx, len);
        let cov = extend::cover_of_word(&graph, &w).unwrap();
        for r in rewrite::reduce_once_all(&ctx, &w).unwrap() {
            prop_assert_eq!(&extend::cover_of_word(&graph, &r).unwrap(), &cov);
        }
    }

    #[test]
    fn cover_is_additive_and_cyclic(seed in any::<u64>(), lx in 0usize..6, ly in 0usize..6) {
        let mut rng = sample::rng(seed);
        let ord = order(5);
        let graph = GraphHandle::Order(ord.clone());
        let ctx = ord.edge_context();
        let x = sample::word(&mut rng, &ctx, lx);
        let y = sample::word(&mut rng, &ctx, ly);
        let cx = extend::cover_of_word(&graph, &x).unwrap();
        let cy = extend::cover_of_word(&graph, &y).unwrap();
        let cxy = extend::cover_of_word(&graph, &x.concat(&y)).unwrap();
        prop_assert_eq!(&cxy, &cx.add(&cy, &ord).unwrap());
        prop_assert_eq!(&cxy, &extend::cover_of_word(&graph, &y.concat(&x)).unwrap());
    }

    #[test]
    fn cover_extensions_agree_with_normal_form_on_letters(seed in any::<u64>()) {
        let mut rng = sample::rng(seed);
        let ord = order(4);
        let ctx = ord.edge_context();
        let seg = dissipative_segments(&mut rng, 4, 2);
        let first = FirstCoverExtension::new(segment_family(&ord, seg.clone())).unwrap();
        let second = SecondCoverExtension::new(segment_generators(&ord, seg.clone())).unwrap();
        let nf = NormalFormExtension::new(segment_generators(&ord, seg).exponential(1.0).unwrap()).unwrap();
        let nf_first = NormalFormExtension::new(first.family().clone()).unwrap();
        for l in ctx.alphabet() {
            let g = rewrite::element(&ctx, &Word(vec![l])).unwrap();
            prop_assert!(first.eval(&g).unwrap().max_abs_diff(&nf_first.eval(&g).unwrap()) <= 1e-12);
            prop_assert!(second.eval(&g).unwrap().max_abs_diff(&nf.eval(&g).unwrap()) <= 1e-12);
        }
    }

    #[test]
    fn first_cover_extension_is_cyclic(seed in any::<u64>()) {
        let mut rng = sample::rng(seed);
        let ord = order(5);
        let ctx = ord.edge_context();
        let ext = FirstCoverExtension::new(segment_family(&ord, dissipative_segments(&mut rng, 5, 2))).unwrap();
        for _ in 0..10 {
            let g = sample::element(&mut rng, &ctx, 5);
            let h = sample::element(&mut rng, &ctx, 5);
            let gh = ext.eval(&rewrite::mul(&g, &h)).unwrap();
            let hg = ext.eval(&rewrite::mul(&h, &g)).unwrap();
            prop_assert!(gh.max_abs_diff(&hg) <= 1e-12);
        }
    }

    #[test]
    fn second_cover_extension_contracts(seed in any::<u64>(), d in 1usize..4) {
        let mut rng = sample::rng(seed);
        let ord = order(5);
        let ctx = ord.edge_context();
        let ext = SecondCoverExtension::new(segment_generators(&ord, dissipative_segments(&mut rng, 5, d))).unwrap();
        for _ in 0..10 {
            let g = sample::element(&mut rng, &ctx, 6);
            prop_assert!(spectral_norm(&ext.eval(&g).unwrap()) <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn refinement_does_not_change_extensions(seed in any::<u64>()) {
        let mut rng = sample::rng(seed);
        let ord = order(5);
        let ctx = ord.edge_context();
        let seg = dissipative_segments(&mut rng, 5, 2);
        let first = FirstCoverExtension::new(segment_family(&ord, seg.clone())).unwrap();
        let second = SecondCoverExtension::new(segment_generators(&ord, seg)).unwrap();
        for _ in 0..10 {
            let g = sample::element(&mut rng, &ctx, 6);
            let (r1, r2) = (random_nodes(&mut rng, &ord), random_nodes(&mut rng, &ord));
            prop_assert!(first.eval_refined(&g, &r1).unwrap().max_abs_diff(&first.eval_refined(&g, &r2).unwrap()) <= 1e-12);
            prop_assert!(second.eval_refined(&g, &r1).unwrap().max_abs_diff(&second.eval_refined(&g, &r2).unwrap()) <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // dilate

    #[test]
    fn kraus_dilations_reconstruct_random_channels(seed in any::<u64>(), d in 2usize..5) {
        let mut rng = sample::rng(seed);
        let ch = random_channel(&mut rng, d);
        let kraus = dilate::kraus_from_choi(&ch, 1e-10).unwrap();
        let (recon, norm) = kraus.kraus_defects().unwrap();
        prop_assert!(recon <= 1e-10 && norm <= 1e-10);
        let xi = sample::unit_vector(&mut rng, d);
        let k2 = dilate::kraus_ii_dilation(&ch, &xi).unwrap();
        let (sq, herm, _) = k2.reflection_defects();
        prop_assert!(sq <= 1e-10 && herm <= 1e-10);
        let report = k2.verify(&ch, 1e-10);
        prop_assert!(report.pass, "{:?}", report);
    }

    #[test]
    fn pipeline_c_dilates_random_generators(seed in any::<u64>()) {
        let mut rng = sample::rng(seed);
        let ord = order(3);
        let gens = segment_generators(&ord, dissipative_segments(&mut rng, 3, 2));
        let sys = DynamicalSystem::new(SystemFamily::Generators { generators: gens, alpha: 1.0 });
        let dil = dilate::theorem_c_pipeline(&sys).unwrap();
        let suite = dil.verify(&dilate::VerifyConfig { samples: 10, seed, tol: 1e-10 }).unwrap();
        prop_assert!(suite.pass, "{:?}", suite.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
        for (u, v, w) in ord.chains() {
            let lhs = rewrite::mul(&dil.edge_element(u, v).unwrap(), &dil.edge_element(v, w).unwrap());
            prop_assert_eq!(lhs, dil.edge_element(u, w).unwrap());
        }
    }

    #[test]
    fn ved_representation_law(seed in any::<u64>()) {
        let mut rng = sample::rng(seed);
        let ord = order(2);
        let mut chans = BTreeMap::new();
        for (u, v) in ord.edges() {
            if u != v {
                chans.insert((u, v), random_channel(&mut rng, 2));
            }
        }
        let fam = ChannelFamily::new(GraphHandle::Order(ord.clone()), 2, chans).unwrap();
        let dil = dilate::theorem_a_cptp_pipeline(&DynamicalSystem::new(SystemFamily::Channels(fam))).unwrap();
        let Backend::Ved(ved) = dil.backend() else { panic!("channel families use the lazy representation") };
        let ctx = ved.context().clone();
        for _ in 0..10 {
            let z = sample::element(&mut rng, &ctx, 3);
            let v = FormalVector::single(z, sample::unit_vector(&mut rng, ved.total_dim()));
            let x = sample::element(&mut rng, &ctx, 3);
            let y = sample::element(&mut rng, &ctx, 3);
            let two = dilate::ved_apply(ved, &x, &dilate::ved_apply(ved, &y, &v).unwrap()).unwrap();
            let one = dilate::ved_apply(ved, &rewrite::mul(&x, &y), &v).unwrap();
            prop_assert!(two.same_tags(&one));
            prop_assert!(two.distance(&one) <= 1e-12);
        }
    }

    #[test]
    fn stroescu_transports_point_evaluations(seed in any::<u64>()) {
        let mut rng = sample::rng(seed);
        let ord = order(3);
        let ctx = ord.edge_context();
        let ext: Arc<dyn GroupFamily> =
            Arc::new(NormalFormExtension::new(segment_family(&ord, dissipative_segments(&mut rng, 3, 2))).unwrap());
        let dil = dilate::stroescu_dilation(ext, Flavor::Banach, &[]).unwrap();
        let v = dil.r(&sample::unit_vector(&mut rng, 2));
        for _ in 0..10 {
            let x = sample::element(&mut rng, &ctx, 4);
            let g = sample::element(&mut rng, &ctx, 4);
            let lhs = dil.eval(&dil.u(&x, &v), &g).unwrap();
            let rhs = dil.eval(&v, &rewrite::mul(&g, &x)).unwrap();
            prop_assert_eq!(lhs.vector_norm(), rhs.vector_norm());
        }
    }
}

#[test]
fn single_letters_are_irreducible() {
    let ctx = order(2).edge_context();
    for l in ctx.alphabet() {
        let w = Word(vec![l]);
        assert_eq!(rewrite::is_irreducible(&w), !Letter::is_loop(&l));
    }
}
