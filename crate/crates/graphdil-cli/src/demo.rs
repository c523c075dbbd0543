//! Built-in example systems with their expected values and CSV sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clap::ValueEnum;
use serde_json::{json, Value};

use graphdil::dynamics::{self, InterpolatedHamiltonians};
use graphdil::linops::{spectral_norm, CMatrix};
use graphdil::report::SCHEMA_VERSION;
use graphdil::rewrite::NodeId;
use graphdil::sample;
use graphdil::system::{self, SystemSpec};

use crate::{pretty, write_file, CmdResult, Failure, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DemoName {
    /// Interpolated Hamiltonians `σ_x`, `σ_z`: an indivisible family.
    #[value(name = "indivisible-2.4", alias = "indivisible")]
    Indivisible,
    /// Diamond network with weights `2I`: divisibility defect `4I`.
    #[value(name = "network-2.5", alias = "network")]
    Network,
    /// Damped qubit generator satisfying the Schwarz conditions.
    #[value(name = "lindblad")]
    Lindblad,
}

impl DemoName {
    fn stem(self) -> &'static str {
        match self {
            DemoName::Indivisible => "indivisible",
            DemoName::Network => "network",
            DemoName::Lindblad => "lindblad",
        }
    }
}

pub struct Demo {
    pub spec: SystemSpec,
    pub expected: Value,
    pub csv: String,
    pub pass: bool,
}

pub fn build(name: DemoName, seed: u64) -> CmdResult<Demo> {
    match name {
        DemoName::Indivisible => indivisible(),
        DemoName::Network => network(),
        DemoName::Lindblad => lindblad(seed),
    }
}

pub fn run(name: DemoName, dir: &Path, seed: u64) -> CmdResult<Outcome> {
    let demo = build(name, seed)?;
    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
    let stem = name.stem();
    let files = [
        (format!("{stem}.system.json"), pretty(&demo.spec)),
        (format!("{stem}.expected.json"), pretty(&demo.expected)),
        (format!("{stem}.sweep.csv"), demo.csv),
    ];
    let mut written = Vec::new();
    for (file, text) in &files {
        let path = dir.join(file);
        write_file(&path, text)?;
        written.push(path.display().to_string());
    }
    Ok(Outcome { body: json!({"schema_version": SCHEMA_VERSION, "demo": stem, "files": written, "expected": demo.expected}), pass: demo.pass })
}

fn n(i: i64) -> NodeId {
    NodeId(i)
}

fn indivisible() -> CmdResult<Demo> {
    let spec = system::indivisible_demo();
    let system::FamilySpec::InterpolatedHamiltonians { h1, h2, t_max, .. } = &spec.family else {
        unreachable!("demo family kind is fixed")
    };
    let ex = InterpolatedHamiltonians::new(h1.clone(), h2.clone(), *t_max)?;
    let (t, s) = (*t_max, 0.5 * t_max);
    let coefficients = ex.coefficients(t, s);
    let a = ex.generator(t, s);
    let b = ex.generator(s, 0.0);
    let comm = &(&a * &b) - &(&b * &a);
    let commutator_defect = comm.max_abs_diff(ex.commutator_superop().scale_real(-0.125).matrix());
    let grid = std::sync::Arc::new(dynamics::LinearOrderGraph::time_grid(2, *t_max, true));
    let gens = ex.family(grid)?;
    let mut csv = String::from("alpha,divisibility_defect\n");
    let mut at_one = 0.0;
    for k in 0..=16 {
        let alpha = 0.25 * k as f64;
        let fam = gens.exponential(alpha)?;
        let d = dynamics::divisibility_defect(&fam, n(2), n(1), n(0))?;
        if k == 4 {
            at_one = d;
        }
        writeln!(csv, "{alpha},{d:e}").expect("string write");
    }
    let pass = coefficients == (0.375, 0.125) && commutator_defect <= 1e-12 && at_one > 1e-3;
    let expected = json!({
        "schema_version": SCHEMA_VERSION,
        "coefficients": {"t": t, "s": s, "value": [coefficients.0, coefficients.1], "expected": [0.375, 0.125]},
        "commutator_defect": commutator_defect,
        "divisibility_defect": {"triple_times": [t, s, 0.0], "triple_nodes": [2, 1, 0], "alpha": 1.0, "value": at_one, "threshold": 1e-3},
        "pass": pass,
    });
    Ok(Demo { spec, expected, csv, pass })
}

fn network() -> CmdResult<Demo> {
    let spec = system::network_demo(2.0);
    let mut csv = String::from("weight,divisibility_defect,path_sum_norm\n");
    let mut pass = true;
    let mut at_two = None;
    for k in 0..=8 {
        let w = 0.5 * k as f64;
        let sweep = system::network_demo(w);
        let system::FamilySpec::Network { dim, nodes, weights } = &sweep.family else {
            unreachable!("demo family kind is fixed")
        };
        let net = dynamics::DagNetwork::new(*dim, nodes.iter().copied(), weights.iter().map(|e| (e.edge, e.matrix.clone())))?;
        let fam = dynamics::network_family(&net)?;
        let defect = dynamics::divisibility_defect(&fam, n(0), n(1), n(3))?;
        let path_sum = dynamics::network_defect(&net, n(0), n(1), n(3))?;
        let path_norm = spectral_norm(&path_sum);
        pass &= (defect - path_norm).abs() <= 1e-12;
        if k == 4 {
            at_two = Some(path_sum);
        }
        writeln!(csv, "{w},{defect:e},{path_norm:e}").expect("string write");
    }
    let at_two = at_two.expect("sweep covers w = 2");
    let four = CMatrix::identity(2).scale_real(4.0);
    let matrix_defect = at_two.max_abs_diff(&four);
    pass &= matrix_defect <= 1e-12;
    let expected = json!({
        "schema_version": SCHEMA_VERSION,
        "weight": 2.0,
        "triple": [0, 1, 3],
        "defect_matrix": at_two,
        "expected_defect_matrix": four,
        "matrix_defect": matrix_defect,
        "pass": pass,
    });
    Ok(Demo { spec, expected, csv, pass })
}

fn lindblad(seed: u64) -> CmdResult<Demo> {
    let spec = system::lindblad_demo();
    let system::FamilySpec::Lindblad { h, kraus, .. } = &spec.family else {
        unreachable!("demo family kind is fixed")
    };
    let l = dynamics::lindblad_from_kraus(h, kraus)?;
    let mut rng = sample::rng(seed);
    let samples: Vec<CMatrix> = (0..8).map(|_| sample::gaussian(&mut rng, 2, 2)).collect();
    let report = dynamics::check_schwarz_generator(&l, &samples, 1e-9)?;
    let mut csv = String::from("alpha,max_norm_ratio\n");
    for k in 0..=20 {
        let alpha = 0.5 * k as f64;
        let e = l.scale_real(alpha).expm();
        let mut worst: f64 = 0.0;
        for a in &samples {
            worst = worst.max(spectral_norm(&e.apply(a)?) / spectral_norm(a));
        }
        writeln!(csv, "{alpha},{worst:.15}").expect("string write");
    }
    let pass = report.pass;
    let expected = json!({"schema_version": SCHEMA_VERSION, "schwarz": report, "pass": pass});
    Ok(Demo { spec, expected, csv, pass })
}
