//! Built-in verification suite: rewriting, demos, every pipeline and the
//! channel dilations, all driven by one seed.

use graphdil::dilate::{self, Channel, Pipeline, VerifyConfig};
use graphdil::dynamics::DynamicsError;
use graphdil::linops::SuperOp;
use graphdil::report::{CheckReport, Suite};
use graphdil::rewrite::{self, EdgeContext, NodeId};
use graphdil::sample;
use graphdil::system::{self, SystemSpec};

use crate::{demo, CmdResult, Outcome};

fn prefixed(prefix: &str, reports: impl IntoIterator<Item = CheckReport>) -> Vec<CheckReport> {
    reports
        .into_iter()
        .map(|mut r| {
            r.name = format!("{prefix}: {}", r.name);
            r
        })
        .collect()
}

fn pipeline_checks(name: &str, spec: SystemSpec, pipeline: Pipeline, cfg: &VerifyConfig) -> CmdResult<Vec<CheckReport>> {
    let built = spec.build()?;
    let dil = dilate::run_pipeline(pipeline, &built.system)?;
    Ok(prefixed(&format!("{name} via {pipeline}"), dil.verify(cfg)?.checks))
}

pub fn suite(cfg: &VerifyConfig) -> CmdResult<Suite> {
    let mut suite = Suite::new("verify");

    let clique = EdgeContext::complete((0..3).map(NodeId));
    suite.push(prefixed("3-clique", [rewrite::check_confluence_bruteforce(&clique, 4)]).remove(0));
    let (pre_id, pre_assoc) = rewrite::check_pre_algebraic(&clique);
    suite.extend(prefixed("3-clique", [pre_id, pre_assoc]));

    let divisible = system::axiom_report(&system::divisible_demo().build()?, cfg.tol, cfg.seed)?;
    suite.extend(prefixed("divisible demo", divisible.checks));

    let indivisible = system::indivisible_demo().build()?;
    let fam = indivisible.system.operators()?;
    let mut ind = CheckReport::new("indivisible demo: divisibility fails", 0.0);
    let d = graphdil::dynamics::divisibility_defect(&fam, NodeId(2), NodeId(1), NodeId(0)).map_err(DynamicsError::from)?;
    ind.require(d > 1e-3, || format!("defect {d:e} at (2,1,0)"));
    suite.push(ind);

    for name in [demo::DemoName::Indivisible, demo::DemoName::Network, demo::DemoName::Lindblad] {
        let demo = demo::build(name, cfg.seed)?;
        let mut r = CheckReport::new(format!("demo {name:?}: expected values"), 0.0);
        r.require(demo.pass, || "expected values".into());
        suite.push(r);
    }

    suite.extend(pipeline_checks("indivisible demo", system::indivisible_demo(), Pipeline::C, cfg)?);
    suite.extend(pipeline_checks("divisible demo", system::divisible_demo(), Pipeline::B, cfg)?);
    suite.extend(pipeline_checks("network demo", system::network_demo(2.0), Pipeline::A, cfg)?);
    suite.extend(pipeline_checks("channel demo", system::channel_demo(), Pipeline::ACptp, cfg)?);

    let mut rng = sample::rng(cfg.seed);
    for d in 2..=3 {
        let ch = Channel::from_superop(&SuperOp::from_kraus(&sample::kraus(&mut rng, d, 2)))?;
        let kraus = dilate::kraus_from_choi(&ch, cfg.tol)?;
        let mut k1 = CheckReport::new(format!("Kraus I, d={d}"), cfg.tol);
        let (recon, norm) = kraus.kraus_defects().expect("extracted Kraus list");
        k1.record(recon, || "reconstruction".into());
        k1.record(norm, || "normalization".into());
        suite.push(k1);
        let xi = sample::unit_vector(&mut rng, d);
        let k2 = dilate::kraus_ii_dilation(&ch, &xi)?;
        let mut r = k2.verify(&ch, cfg.tol);
        r.name = format!("Kraus II, d={d}: {}", r.name);
        suite.push(r);
    }
    Ok(suite)
}

pub fn run(cfg: &VerifyConfig) -> CmdResult<Outcome> {
    let s = suite(cfg)?;
    let pass = s.pass;
    Ok(Outcome { body: serde_json::to_value(&s).expect("serializable"), pass })
}
