//! `sparsegnn` command-line front end.
//!
//! Every command resolves a `key = value` config (file, then `--key value`
//! overrides), writes `manifest.json` into its output directory, and only
//! then computes. Data goes to files; diagnostics go to stderr.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use sparsegnn::analysis::{
    detect_lucky, neuron_scatter, scatter_csv, vc_verify, ProjectionTrace, VC_MAX_L,
};
use sparsegnn::experiments::run_sweep;
use sparsegnn::graph::{load_graph, save_graph, StructuredGraph};
use sparsegnn::rng::{self, tag};
use sparsegnn::sampler::{
    alpha_bound_importance, alpha_bound_uniform, estimate_alpha, SamplerKind,
};
use sparsegnn::synth::{balanced_split, generate_graph, generate_patterns};
use sparsegnn::trainer::{initialize, run_algorithm1, Phase};
use sparsegnn::{AlphaNodes, Config, Error, ModelState, CONFIG_SCHEMA_VERSION};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn long_version() -> &'static str {
    Box::leak(format!("{VERSION} (config schema {CONFIG_SCHEMA_VERSION})").into_boxed_str())
}

#[derive(Parser)]
#[command(name = "sparsegnn", version = long_version(), about = "Sparse GNN training and synthetic experiments")]
#[command(
    after_help = "Any config key can be overridden with `--key value`, e.g. `--train.beta 0.4`."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph (graph.txt).
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train on a graph (outcome.jsonl, model.ckpt, optional trace.csv).
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        /// Force beta = 0.
        #[arg(long)]
        no_prune: bool,
        /// Record <w_k, p> for every neuron and pattern at every iteration.
        #[arg(long)]
        trace_projections: bool,
    },
    /// Run a Monte-Carlo sweep (sweep.csv, summary.csv, fit.json).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Lucky-neuron report and neuron scatter (lucky.json, scatter.csv).
    /// Without a checkpoint the fresh initialization is analyzed.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Verify the shattering construction for even L (vc.json).
    Vc {
        #[command(flatten)]
        common: Common,
        l: usize,
    },
    /// Estimate alpha and its closed-form bounds (alpha.json).
    Alpha {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        /// Shorthand for `--sampler.kind`.
        #[arg(long)]
        kind: Option<SamplerKind>,
    },
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    version: String,
    schema_version: u32,
    seed: u64,
    config: BTreeMap<String, String>,
    config_hash: String,
    /// Command options other than paths.
    options: BTreeMap<String, String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

/// sha256 of the resolved config as sorted `key = value` lines, so the hash
/// does not depend on key order in the file.
fn config_hash(config: &Config) -> String {
    hex::encode(Sha256::digest(config.to_text().as_bytes()))
}

type CliResult<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

type Overrides = Vec<(String, String)>;

/// Splits `--key value` / `--key=value` config overrides out of argv.
fn split_overrides(args: Vec<String>) -> CliResult<(Vec<String>, Overrides)> {
    let keys = Config::default().to_map();
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(name) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match name.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (name.to_string(), None),
        };
        if !keys.contains_key(&key) {
            if key.contains('.') {
                return Err(err(Error::UnknownKey(key)));
            }
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().ok_or_else(|| format!("--{key} needs a value"))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> CliResult<Config> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => String::new(),
    };
    Config::parse_with(&text, overrides).map_err(|e| match path {
        Some(p) => format!("{}: {e}", p.display()),
        None => err(e),
    })
}

struct Run {
    dir: PathBuf,
}

impl Run {
    fn start(
        command: &str,
        dir: &Path,
        config: &Config,
        options: BTreeMap<String, String>,
        inputs: &[&Path],
        outputs: &[&str],
    ) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let manifest = RunManifest {
            command: command.into(),
            version: VERSION.into(),
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: config.seed,
            config: config.to_map(),
            config_hash: config_hash(config),
            options,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outputs
                .iter()
                .map(|o| dir.join(o).display().to_string())
                .collect(),
        };
        let run = Self {
            dir: dir.to_path_buf(),
        };
        run.write(
            "manifest.json",
            &(serde_json::to_string_pretty(&manifest).map_err(err)? + "\n"),
        )?;
        Ok(run)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| format!("{}: {e}", p.display()))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        self.write(
            name,
            &(serde_json::to_string_pretty(value).map_err(err)? + "\n"),
        )
    }
}

fn read_graph(path: &Path) -> CliResult<StructuredGraph> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    load_graph(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))
}

fn options(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn cmd_gen(c: &Common, config: &Config) -> CliResult<()> {
    let gen = config.gen_config().map_err(err)?;
    let run = Run::start(
        "gen",
        &c.out_dir,
        config,
        BTreeMap::new(),
        &[],
        &["graph.txt"],
    )?;
    let patterns = generate_patterns(&gen).map_err(err)?;
    let data = generate_graph(&patterns, &gen).map_err(err)?;
    let mut out = BufWriter::new(File::create(run.path("graph.txt")).map_err(err)?);
    save_graph(&data.graph, &mut out).map_err(err)?;
    out.flush().map_err(err)?;
    eprintln!(
        "gen: {} nodes, {} edges",
        data.graph.n(),
        data.graph.edge_count()
    );
    Ok(())
}

#[derive(Serialize)]
struct OutcomeLine<'a> {
    train_size: usize,
    test_size: usize,
    #[serde(flatten)]
    outcome: &'a sparsegnn::TrialOutcome,
}

fn cmd_train(
    c: &Common,
    config: &Config,
    graph_path: &Path,
    no_prune: bool,
    trace: bool,
) -> CliResult<()> {
    let mut train_cfg = config.train_config().map_err(err)?;
    if no_prune {
        train_cfg.beta = 0.0;
    }
    let mut outputs = vec!["outcome.jsonl", "model.ckpt"];
    if trace {
        outputs.push("trace.csv");
    }
    let opts = options(&[
        ("no_prune", no_prune.to_string()),
        ("trace_projections", trace.to_string()),
    ]);
    let run = Run::start("train", &c.out_dir, config, opts, &[graph_path], &outputs)?;
    let graph = read_graph(graph_path)?;
    let mut split_rng = rng::stream(config.seed, &[tag::SPLIT]);
    let (train, test) =
        balanced_split(&graph, config.gen.train_size, &mut split_rng).map_err(err)?;

    let mut recorder = match (trace, graph.patterns()) {
        (true, Some(ps)) => Some((ProjectionTrace::new(train_cfg.k, ps.len()), ps)),
        (true, None) => {
            return Err("--trace-projections needs a graph file that carries its patterns".into())
        }
        (false, _) => None,
    };
    let mut hook = |phase: Phase, t: usize, m: &ModelState| {
        if let Some((tr, ps)) = recorder.as_mut() {
            tr.record(phase, t, m, ps);
        }
    };
    let (model, outcome) =
        run_algorithm1(&graph, &train, &test, &train_cfg, &mut hook).map_err(err)?;

    let line = OutcomeLine {
        train_size: train.len(),
        test_size: test.len(),
        outcome: &outcome,
    };
    run.write(
        "outcome.jsonl",
        &(serde_json::to_string(&line).map_err(err)? + "\n"),
    )?;
    let mut ckpt = BufWriter::new(File::create(run.path("model.ckpt")).map_err(err)?);
    model.save(&mut ckpt).map_err(err)?;
    ckpt.flush().map_err(err)?;
    if let Some((tr, _)) = recorder {
        run.write("trace.csv", &tr.to_csv())?;
    }
    eprintln!(
        "train: test error {:.4}, {} iterations, {} of {} neurons kept",
        outcome.test_error, outcome.iterations, outcome.surviving, train_cfg.k
    );
    Ok(())
}

fn cmd_sweep(c: &Common, config: &Config, jobs: usize) -> CliResult<()> {
    let spec = config.sweep_spec().map_err(err)?;
    let run = Run::start(
        "sweep",
        &c.out_dir,
        config,
        BTreeMap::new(),
        &[],
        &["sweep.csv", "summary.csv", "fit.json"],
    )?;
    let result = run_sweep(&spec, jobs).map_err(err)?;
    for s in &result.summary {
        eprintln!(
            "cell {} {} {}={} |D|={} success {:.2} iterations {:.1}",
            s.cell, s.arm, spec.param, s.value, s.size, s.success_rate, s.iter_mean
        );
    }
    run.write("sweep.csv", &result.sweep_csv())?;
    run.write("summary.csv", &result.summary_csv())?;
    run.write("fit.json", &result.fit_json())?;
    Ok(())
}

#[derive(Serialize)]
struct LuckyFile {
    source: &'static str,
    sigma: f64,
    q: f64,
    surviving: usize,
    #[serde(flatten)]
    report: sparsegnn::LuckyReport,
}

fn cmd_analyze(
    c: &Common,
    config: &Config,
    graph_path: &Path,
    checkpoint: Option<&Path>,
) -> CliResult<()> {
    let train_cfg = config.train_config().map_err(err)?;
    let mut inputs = vec![graph_path];
    inputs.extend(checkpoint);
    let run = Run::start(
        "analyze",
        &c.out_dir,
        config,
        BTreeMap::new(),
        &inputs,
        &["lucky.json", "scatter.csv"],
    )?;
    let graph = read_graph(graph_path)?;
    let patterns = graph.patterns().ok_or("graph file carries no patterns")?;
    let (model, source) = match checkpoint {
        Some(p) => {
            let file = File::open(p).map_err(|e| format!("{}: {e}", p.display()))?;
            (
                ModelState::load(BufReader::new(file)).map_err(err)?,
                "checkpoint",
            )
        }
        None => (
            initialize(graph.dim(), &train_cfg).map_err(err)?,
            "initialization",
        ),
    };
    if model.dim() != graph.dim() {
        return Err(err(Error::DimensionMismatch {
            expected: graph.dim(),
            got: model.dim(),
        }));
    }
    let sigma = config.lucky_sigma.unwrap_or(graph.sigma());
    let report = detect_lucky(&model, patterns, sigma, config.q);
    eprintln!(
        "analyze: {} + {} lucky of {} ({:.4}; Prop. 1 bound {:.4})",
        report.plus.len(),
        report.minus.len(),
        model.surviving(),
        report.fraction,
        report.simple_bound
    );
    run.write_json(
        "lucky.json",
        &LuckyFile {
            source,
            sigma,
            q: config.q,
            surviving: model.surviving(),
            report,
        },
    )?;
    run.write(
        "scatter.csv",
        &scatter_csv(&neuron_scatter(&model, patterns)),
    )?;
    Ok(())
}

fn cmd_vc(c: &Common, config: &Config, l: usize) -> CliResult<()> {
    if l > VC_MAX_L {
        return Err(format!("L = {l} exceeds the exhaustive limit {VC_MAX_L}"));
    }
    let run = Run::start(
        "vc",
        &c.out_dir,
        config,
        options(&[("l", l.to_string())]),
        &[],
        &["vc.json"],
    )?;
    let result = vc_verify(l).map_err(err)?;
    eprintln!(
        "vc: L = {l}, {}/{} labelings realized",
        result.realized, result.labelings
    );
    run.write_json("vc.json", &result)
}

#[derive(Serialize)]
struct AlphaFile {
    sampler: sparsegnn::SamplingStrategy,
    nodes: AlphaNodes,
    estimate: sparsegnn::AlphaEstimate,
    /// Mean number of relevant neighbors.
    c_bar: f64,
    /// Mean |N(v) \ {v}|.
    degree: f64,
    uniform_lower: f64,
    uniform_upper: f64,
    importance_lower: Option<f64>,
}

fn cmd_alpha(c: &Common, config: &Config, graph_path: &Path) -> CliResult<()> {
    let train_cfg = config.train_config().map_err(err)?;
    let sampler = train_cfg.sampling;
    let run = Run::start(
        "alpha",
        &c.out_dir,
        config,
        BTreeMap::new(),
        &[graph_path],
        &["alpha.json"],
    )?;
    let graph = read_graph(graph_path)?;
    let nodes: Vec<usize> = match config.alpha_nodes {
        AlphaNodes::Irrelevant => (0..graph.n())
            .filter(|&v| !graph.tag(v).is_relevant())
            .collect(),
        AlphaNodes::All => (0..graph.n()).collect(),
    };
    let estimate =
        estimate_alpha(&sampler, &graph, &nodes, config.alpha_reps, config.seed).map_err(err)?;
    let mean = |f: &dyn Fn(usize) -> usize| {
        nodes.iter().map(|&v| f(v) as f64).sum::<f64>() / nodes.len() as f64
    };
    let c_bar = mean(&|v| graph.relevant_neighbor_count(v));
    let degree = mean(&|v| graph.degree(v));
    let r = sampler.r as f64;
    let (uniform_lower, uniform_upper) = alpha_bound_uniform(c_bar, degree, r).map_err(err)?;
    let importance_lower = match sampler.kind {
        SamplerKind::TwoTier => Some(
            alpha_bound_importance(sampler.gamma, degree, r)
                .map_err(err)?
                .lower,
        ),
        _ => None,
    };
    eprintln!(
        "alpha: {:.4} +- {:.4} over {} samples",
        estimate.alpha, estimate.std_err, estimate.samples
    );
    run.write_json(
        "alpha.json",
        &AlphaFile {
            sampler,
            nodes: config.alpha_nodes,
            estimate,
            c_bar,
            degree,
            uniform_lower,
            uniform_upper,
            importance_lower,
        },
    )
}

fn run() -> CliResult<()> {
    let (args, mut overrides) = split_overrides(std::env::args().collect())?;
    let cli = Cli::parse_from(args);
    if let Command::Alpha {
        kind: Some(kind), ..
    } = &cli.command
    {
        overrides.push(("sampler.kind".into(), kind.to_string()));
    }
    let common = match &cli.command {
        Command::Gen { common }
        | Command::Train { common, .. }
        | Command::Sweep { common, .. }
        | Command::Analyze { common, .. }
        | Command::Vc { common, .. }
        | Command::Alpha { common, .. } => common,
    };
    let config = load_config(common.config.as_deref(), &overrides)?;
    match &cli.command {
        Command::Gen { common } => cmd_gen(common, &config),
        Command::Train {
            common,
            graph,
            no_prune,
            trace_projections,
        } => cmd_train(common, &config, graph, *no_prune, *trace_projections),
        Command::Sweep { common, jobs } => cmd_sweep(common, &config, *jobs),
        Command::Analyze {
            common,
            graph,
            checkpoint,
        } => cmd_analyze(common, &config, graph, checkpoint.as_deref()),
        Command::Vc { common, l } => cmd_vc(common, &config, *l),
        Command::Alpha { common, graph, .. } => cmd_alpha(common, &config, graph),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
