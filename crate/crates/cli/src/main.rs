use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amos_core::amos::{run_amos, AmosConfig, AmosReport, Termination};
use amos_core::generator::{generate_rim, RimSpec};
use amos_core::graph::{connected_components, load_graph, subgraph, write_edge_list, Format, Graph, Indexing, NodeSet};
use amos_core::metrics::{conductance, f_measure, nmi, normalized_cut, rand_index, CutSummary};
use amos_core::sweep::{run_sweep, SweepConfig, CSV_HEADER};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

const SCHEMA: &str = "amos_report_v1";

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_EXHAUSTED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "amos",
    version,
    about = "Spectral graph clustering with automated model order selection"
)]
struct Cli {
    /// Log level: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a graph, choosing the number of clusters automatically.
    Cluster(ClusterArgs),
    /// Sample a planted-partition graph from a JSON spec.
    Generate(GenerateArgs),
    /// Score a labeling against a graph and optionally a ground truth.
    Evaluate(EvaluateArgs),
    /// Phase-transition sweep over the interconnectivity t.
    #[command(after_help = format!("CSV columns, in order:\n  {CSV_HEADER}"))]
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Edgelist,
    Mtx,
}

#[derive(Args)]
struct InputArgs {
    /// Graph file.
    graph: PathBuf,
    #[arg(long, value_enum, default_value = "edgelist")]
    format: FormatArg,
    /// Edge-list node indices start at 1.
    #[arg(long)]
    one_based: bool,
    /// Drop edge weights.
    #[arg(long)]
    binarize: bool,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    /// GLRT significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Inhomogeneous phase-transition test level.
    #[arg(long, default_value_t = 0.05)]
    alpha_prime: f64,
    /// V-test significance level.
    #[arg(long, default_value_t = 1e-5)]
    eta: f64,
    /// Largest K to try (default min(n - 1, 200) per component).
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// K-means restarts per K.
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    /// Cluster the raw weights instead of the degree-normalized graph.
    #[arg(long)]
    no_normalize: bool,
    /// Include wall-clock stage timings (makes the report non-reproducible).
    #[arg(long)]
    timings: bool,
    /// Report path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write one label per line, in node order.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON RIM spec.
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Edge-list path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Planted labels, one per line.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Predicted labels, one per line.
    #[arg(long)]
    labels: PathBuf,
    /// Ground-truth labels, one per line.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON RIM spec with a single cross probability; its weight mean is replaced by t / p.
    #[arg(long)]
    spec: PathBuf,
    /// Comma-separated, strictly increasing t values.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// CSV path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn read_graph(input: &InputArgs) -> Result<Graph, CliError> {
    let file = File::open(&input.graph).map_err(|e| CliError::Data(format!("{}: {e}", input.graph.display())))?;
    let format = match input.format {
        FormatArg::Edgelist => Format::EdgeList,
        FormatArg::Mtx => Format::MatrixMarket,
    };
    let indexing = if input.one_based {
        Indexing::OneBased
    } else {
        Indexing::ZeroBased
    };
    let g = load_graph(BufReader::new(file), format, indexing)
        .map_err(|e| CliError::Data(format!("{}: {e}", input.graph.display())))?;
    Ok(if input.binarize { g.binarized() } else { g })
}

fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CliError::data)?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| CliError::Data(format!("{}:{}: invalid label {t:?}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<(), CliError> {
    let mut out = open_output(Some(path))?;
    for l in labels {
        writeln!(out, "{l}").map_err(CliError::data)?;
    }
    out.flush().map_err(CliError::data)
}

fn read_spec(path: &Path) -> Result<RimSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct InputInfo {
    path: String,
    format: &'static str,
    one_based: bool,
    binarized: bool,
    normalized: bool,
    nodes: usize,
    edges: usize,
}

#[derive(Serialize)]
struct ComponentReport {
    /// Original node ids, in the component's local order.
    nodes: Vec<usize>,
    /// Added to the component's local labels to get global labels.
    label_offset: usize,
    /// Fewer than 3 nodes: reported as one cluster without running AMOS.
    trivial: bool,
    report: Option<AmosReport>,
}

#[derive(Serialize)]
struct ClusterOutput {
    schema: &'static str,
    input: InputInfo,
    k: usize,
    termination: Termination,
    labels: Vec<usize>,
    components: Vec<ComponentReport>,
}

fn cluster(args: &ClusterArgs) -> Result<u8, CliError> {
    let g = read_graph(&args.input)?;
    let cfg = AmosConfig {
        eta: args.eta,
        alpha: args.alpha,
        alpha_prime: args.alpha_prime,
        k_max: args.kmax,
        seed: args.seed,
        restarts: args.restarts,
        normalize: !args.no_normalize,
        ..AmosConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let n = g.node_count();
    if n == 0 {
        return Err(CliError::Data("graph has no nodes".into()));
    }

    let groups = connected_components(&g).groups();
    if groups.len() > 1 {
        log::info!("graph has {} connected components; clustering each", groups.len());
    }
    let mut labels = vec![0; n];
    let mut components = Vec::with_capacity(groups.len());
    let mut offset = 0;
    let mut termination = Termination::Reliable;
    for nodes in groups {
        if nodes.len() < 3 {
            for &u in &nodes {
                labels[u] = offset;
            }
            components.push(ComponentReport {
                nodes,
                label_offset: offset,
                trivial: true,
                report: None,
            });
            offset += 1;
            continue;
        }
        let set = NodeSet::new(nodes.clone(), n).map_err(CliError::data)?;
        let sub = subgraph(&g, &set).map_err(CliError::data)?;
        let comp_cfg = AmosConfig {
            k_max: args.kmax.map(|k| k.min(nodes.len() - 1)),
            ..cfg.clone()
        };
        let mut report = run_amos(&sub, &comp_cfg).map_err(CliError::data)?;
        if !args.timings {
            report.timings = None;
        }
        for (local, &u) in nodes.iter().enumerate() {
            labels[u] = offset + report.labels[local];
        }
        if report.termination == Termination::KMaxExhausted {
            termination = Termination::KMaxExhausted;
        }
        let k = report.k;
        components.push(ComponentReport {
            nodes,
            label_offset: offset,
            trivial: false,
            report: Some(report),
        });
        offset += k;
    }

    let out = ClusterOutput {
        schema: SCHEMA,
        input: InputInfo {
            path: args.input.graph.display().to_string(),
            format: match args.input.format {
                FormatArg::Edgelist => "edgelist",
                FormatArg::Mtx => "mtx",
            },
            one_based: args.input.one_based,
            binarized: args.input.binarize,
            normalized: cfg.normalize,
            nodes: n,
            edges: g.edge_count(),
        },
        k: offset,
        termination,
        labels,
        components,
    };
    if let Some(path) = &args.labels {
        write_labels(path, &out.labels)?;
    }
    let mut w = open_output(args.output.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &out).map_err(CliError::data)?;
    writeln!(w).map_err(CliError::data)?;
    w.flush().map_err(CliError::data)?;
    Ok(if termination == Termination::KMaxExhausted {
        EXIT_EXHAUSTED
    } else {
        0
    })
}

fn generate(args: &GenerateArgs) -> Result<u8, CliError> {
    let mut spec = read_spec(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let rim = generate_rim(&spec).map_err(CliError::data)?;
    let mut w = open_output(args.output.as_deref())?;
    write_edge_list(&rim.graph, &mut w).map_err(CliError::data)?;
    w.flush().map_err(CliError::data)?;
    if let Some(path) = &args.labels {
        write_labels(path, &rim.labels)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct Evaluation {
    nodes: usize,
    clusters: usize,
    conductance: Option<CutSummary>,
    normalized_cut: Option<CutSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rand_index: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f_measure: Option<f64>,
}

fn evaluate(args: &EvaluateArgs) -> Result<u8, CliError> {
    let g = read_graph(&args.input)?;
    let labels = read_labels(&args.labels)?;
    if labels.len() != g.node_count() {
        return Err(CliError::Data(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.node_count()
        )));
    }
    let clusters = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
    // undefined cut scores (zero-volume clusters) are reported as null
    let mut eval = Evaluation {
        nodes: labels.len(),
        clusters,
        conductance: conductance(&g, &labels).ok(),
        normalized_cut: normalized_cut(&g, &labels).ok(),
        nmi: None,
        rand_index: None,
        f_measure: None,
    };
    if let Some(path) = &args.truth {
        let truth = read_labels(path)?;
        eval.nmi = Some(nmi(&labels, &truth).map_err(CliError::data)?);
        eval.rand_index = Some(rand_index(&labels, &truth).map_err(CliError::data)?);
        eval.f_measure = Some(f_measure(&labels, &truth).map_err(CliError::data)?);
    }
    let mut w = open_output(None)?;
    serde_json::to_writer_pretty(&mut w, &eval).map_err(CliError::data)?;
    writeln!(w).map_err(CliError::data)?;
    w.flush().map_err(CliError::data)?;
    Ok(0)
}

fn sweep(args: &SweepArgs) -> Result<u8, CliError> {
    let spec = read_spec(&args.spec)?;
    let cfg = SweepConfig {
        spec,
        t_grid: args.grid.clone(),
        trials: args.trials,
        seed: args.seed,
        restarts: args.restarts,
    };
    let rows = run_sweep(&cfg).map_err(|e| match e {
        amos_core::sweep::SweepError::Invalid(m) => CliError::Usage(m),
        other => CliError::data(other),
    })?;
    let mut w = open_output(args.output.as_deref())?;
    writeln!(w, "{CSV_HEADER}").map_err(CliError::data)?;
    for r in &rows {
        writeln!(w, "{}", r.to_csv()).map_err(CliError::data)?;
    }
    w.flush().map_err(CliError::data)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Cluster(a) => cluster(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
