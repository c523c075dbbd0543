use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use graphdil::dilate::{self, DilateError, Pipeline, VerifyConfig};
use graphdil::extend::{self, ExtendError, GroupFamily};
use graphdil::report::SCHEMA_VERSION;
use graphdil::rewrite::{self, NodeId, Word};
use graphdil::system::{self, GraphSpec, SystemError, SystemSpec};

mod demo;
mod suite;

#[derive(Parser, Debug)]
#[command(name = "graphdil", version, about = "Edge groups, extensions and dilations of operator families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON input file, or `-` for stdin.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Report file (directory for `demo`); stdout when absent.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 200)]
    samples: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Include a reduction trace in `normalize` output.
    #[arg(long, global = true)]
    trace: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normal form of a word: input `{"graph": ..., "word": [[u, v], ...]}`.
    Normalize {
        /// Word literal overriding the one in the input.
        #[arg(long)]
        word: Option<String>,
    },
    /// Group operations: input `{"graph": ..., "g": word, "h": word}`.
    Group {
        #[command(subcommand)]
        op: GroupOp,
    },
    /// Axiom report for a system spec.
    Check,
    /// Evaluate an extension of the system's family on a word.
    Extend {
        /// Word literal, e.g. `[[0,1],[2,1]]`.
        #[arg(long)]
        word: String,
        #[arg(long, value_enum, default_value_t = Method::NormalForm)]
        method: Method,
    },
    /// Run a dilation pipeline and verify the result.
    Dilate {
        /// One of `A`, `B`, `C`, `A-cptp`.
        #[arg(long)]
        pipeline: Pipeline,
        /// Also check the one-parameter factorization around this node.
        #[arg(long)]
        factorize: Option<i64>,
        /// Write the dilation's edge data to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Write a built-in example system, its expected values and a CSV sweep.
    Demo {
        #[arg(value_enum)]
        name: demo::DemoName,
    },
    /// Run the built-in verification suite.
    Verify,
}

#[derive(Subcommand, Debug)]
enum GroupOp {
    Mul,
    Inv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    NormalForm,
    FirstCover,
    SecondCover,
}

/// Command failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Precondition(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Precondition(_) => 3,
        }
    }
}

impl From<SystemError> for Failure {
    fn from(e: SystemError) -> Self {
        match e {
            SystemError::Dilate(d) => d.into(),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<DilateError> for Failure {
    fn from(e: DilateError) -> Self {
        match e {
            DilateError::Precondition { .. } | DilateError::NotCptp(_) => Failure::Precondition(e.to_string()),
            DilateError::Extend(x) => x.into(),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<ExtendError> for Failure {
    fn from(e: ExtendError) -> Self {
        match e {
            ExtendError::Precondition { .. } => Failure::Precondition(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<rewrite::RewriteError> for Failure {
    fn from(e: rewrite::RewriteError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<graphdil::dynamics::DynamicsError> for Failure {
    fn from(e: graphdil::dynamics::DynamicsError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<graphdil::linops::LinopsError> for Failure {
    fn from(e: graphdil::linops::LinopsError) -> Self {
        Failure::Input(e.to_string())
    }
}

pub type CmdResult<T> = Result<T, Failure>;

/// JSON body plus whether every check passed.
pub struct Outcome {
    pub body: Value,
    pub pass: bool,
}

fn read_input(path: Option<&Path>) -> CmdResult<String> {
    let path = path.ok_or_else(|| Failure::Input("--input is required for this command".into()))?;
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin().read_to_string(&mut text).map_err(|e| Failure::Input(format!("stdin: {e}")))?;
    } else {
        text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    }
    Ok(text)
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> CmdResult<T> {
    serde_json::from_str(text).map_err(|e| Failure::Input(format!("malformed {what}: {e}")))
}

fn load_system(cli: &Cli) -> CmdResult<SystemSpec> {
    parse_json(&read_input(cli.input.as_deref())?, "system spec")
}

fn config(cli: &Cli) -> VerifyConfig {
    VerifyConfig { samples: cli.samples, seed: cli.seed, tol: cli.tol }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WordInput {
    graph: GraphSpec,
    #[serde(default)]
    word: Option<Word>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupInput {
    graph: GraphSpec,
    g: Word,
    #[serde(default)]
    h: Option<Word>,
}

fn cmd_normalize(cli: &Cli, word: Option<&str>) -> CmdResult<Outcome> {
    let input: WordInput = parse_json(&read_input(cli.input.as_deref())?, "normalize input")?;
    let ctx = input.graph.build()?.edge_context();
    let word = match word {
        Some(text) => parse_json::<Word>(text, "word literal")?,
        None => input.word.ok_or_else(|| Failure::Input("no word given".into()))?,
    };
    let (g, trace) = rewrite::normalize_traced(&ctx, &word)?;
    let mut body = json!({
        "schema_version": SCHEMA_VERSION,
        "input": word,
        "normal_form": g,
        "length": g.len(),
        "steps": trace.len(),
    });
    if cli.trace {
        body["trace"] = json!(trace);
    }
    Ok(Outcome { body, pass: true })
}

fn cmd_group(cli: &Cli, op: &GroupOp) -> CmdResult<Outcome> {
    let input: GroupInput = parse_json(&read_input(cli.input.as_deref())?, "group input")?;
    let ctx = input.graph.build()?.edge_context();
    let g = rewrite::element(&ctx, &input.g)?;
    let result = match op {
        GroupOp::Mul => {
            let h = input.h.ok_or_else(|| Failure::Input("`group mul` needs \"h\"".into()))?;
            rewrite::mul(&g, &rewrite::element(&ctx, &h)?)
        }
        GroupOp::Inv => rewrite::inv(&g),
    };
    let op = match op {
        GroupOp::Mul => "mul",
        GroupOp::Inv => "inv",
    };
    Ok(Outcome {
        body: json!({"schema_version": SCHEMA_VERSION, "op": op, "result": result, "length": result.len()}),
        pass: true,
    })
}

fn cmd_check(cli: &Cli) -> CmdResult<Outcome> {
    let spec = load_system(cli)?;
    let built = spec.build()?;
    let suite = system::axiom_report(&built, cli.tol, cli.seed)?;
    let pass = suite.pass;
    Ok(Outcome { body: serde_json::to_value(&suite).expect("serializable"), pass })
}

fn cmd_extend(cli: &Cli, word: &str, method: Method) -> CmdResult<Outcome> {
    let spec = load_system(cli)?;
    let built = spec.build()?;
    let sys = &built.system;
    let word: Word = parse_json(word, "word literal")?;
    let ctx = sys.graph().edge_context();
    let g = rewrite::element(&ctx, &word)?;
    let cover = match sys.graph().as_order() {
        Some(order) => Some(extend::cover_of_element(order, &g)?),
        None => None,
    };
    let mut body = json!({
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "normal_form": g,
    });
    if let Some(c) = &cover {
        body["cover"] = json!(c);
        body["cover_text"] = json!(c.to_string());
    }
    match method {
        Method::NormalForm => {
            let ext = extend::NormalFormExtension::new(sys.operators()?)?;
            body["value"] = json!(ext.eval(&g)?);
        }
        Method::FirstCover => {
            let ext = extend::FirstCoverExtension::new(sys.operators()?)?;
            body["value"] = json!(ext.eval(&g)?);
        }
        Method::SecondCover => {
            let dilate::SystemFamily::Generators { generators, alpha } = &sys.family else {
                return Err(Failure::Input("second-cover extension needs a generator family".into()));
            };
            let ext = extend::SecondCoverExtension::new(generators.scaled(*alpha)?)?;
            body["generator"] = json!(ext.generator(&g)?);
            body["value"] = json!(ext.eval(&g)?);
        }
    }
    Ok(Outcome { body, pass: true })
}

fn cmd_dilate(cli: &Cli, pipeline: Pipeline, factorize: Option<i64>, dump: Option<&Path>) -> CmdResult<Outcome> {
    let spec = load_system(cli)?;
    let built = spec.build()?;
    let dil = dilate::run_pipeline(pipeline, &built.system)?;
    let cfg = config(cli);
    let suite = dil.verify(&cfg)?;
    let mut pass = suite.pass;
    let mut body = json!({
        "schema_version": SCHEMA_VERSION,
        "pipeline": pipeline,
        "notes": dil.notes(),
        "verification": suite,
    });
    if let Some(t0) = factorize {
        let f = dilate::one_param_factorization(&dil, NodeId(t0), &cfg)?;
        pass &= f.pass;
        body["factorization"] = json!(f);
    }
    body["pass"] = json!(pass);
    if let Some(path) = dump {
        let mut edges = Vec::new();
        for (u, v) in dil.graph().edges() {
            let x = dil.edge_element(u, v)?;
            edges.push(json!({
                "edge": [u, v],
                "element": x,
                "family": dil.edge_value(u, v)?,
                "compressed": dil.compressed(&x)?,
            }));
        }
        let backend = match dil.backend() {
            dilate::Backend::Stroescu(s) => json!({"kind": "stroescu", "dim": s.dim(), "weighted": s.is_weighted()}),
            dilate::Backend::Ved(v) => json!({"kind": "ved", "dim": v.dim(), "env_dim": v.env_dim()}),
        };
        let doc = json!({"schema_version": SCHEMA_VERSION, "pipeline": pipeline, "backend": backend, "edges": edges});
        write_file(path, &pretty(&doc))?;
    }
    Ok(Outcome { body, pass })
}

pub fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, text: &str) -> CmdResult<()> {
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> CmdResult<Outcome> {
    match &cli.command {
        Command::Normalize { word } => cmd_normalize(cli, word.as_deref()),
        Command::Group { op } => cmd_group(cli, op),
        Command::Check => cmd_check(cli),
        Command::Extend { word, method } => cmd_extend(cli, word, *method),
        Command::Dilate { pipeline, factorize, dump } => cmd_dilate(cli, *pipeline, *factorize, dump.as_deref()),
        Command::Demo { name } => demo::run(*name, cli.output.as_deref().unwrap_or(Path::new(".")), cli.seed),
        Command::Verify => suite::run(&config(cli)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            let text = pretty(&out.body);
            let written = match (&cli.command, &cli.output) {
                (Command::Demo { .. }, _) | (_, None) => io::stdout().write_all(text.as_bytes()).map_err(|e| Failure::Input(e.to_string())),
                (_, Some(path)) => write_file(path, &text),
            };
            if let Err(e) = written {
                eprintln!("error: {e:?}");
                return ExitCode::from(2);
            }
            ExitCode::from(if out.pass { 0 } else { 4 })
        }
        Err(f) => {
            match &f {
                Failure::Input(m) => eprintln!("input error: {m}"),
                Failure::Precondition(m) => eprintln!("{m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
