//! Command-line driver: instance generation, solvers and experiment reports.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use loopgas::activity::ActivityTable;
use loopgas::bethe::bethe_free_energy;
use loopgas::bounds::{default_bound_candidates, first_applicable_bound};
use loopgas::bp::{solve_fixed_point, BpParams};
use loopgas::channel::apply_channel;
use loopgas::exact::brute_force_log_partition;
use loopgas::experiments::{
    run_entropy, run_trend, run_verify_identity, EnsembleSpec, DEFAULT_EPSILON,
    DEFAULT_MC_SAMPLES, SCHEMA_VERSION,
};
use loopgas::expansion::polymer_series;
use loopgas::loops::{enumerate_generalized_loops, DEFAULT_ENUMERATION_BUDGET};
use loopgas::rate::{mckay_rate_function, RateFunctionSpec, DEFAULT_STARTS};
use loopgas::{ChannelParams, Error, FactorGraph, Node};

const EXIT_VALIDATION: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_TOLERANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "loopgas", version, about = "Bethe free energies, loop sums and polymer expansions")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnsembleKind {
    LdpcRegular,
    Ldgm,
}

#[derive(Args, Clone)]
struct EnsembleArgs {
    #[arg(long, value_enum)]
    ensemble: Option<EnsembleKind>,
    /// Variable degree of the regular ensemble.
    #[arg(long)]
    l: Option<usize>,
    /// Check degree of the regular ensemble.
    #[arg(long)]
    r: Option<usize>,
    /// Variable-degree fractions, e.g. "3:1.0" or "2:0.5,3:0.5".
    #[arg(long)]
    lambda: Option<String>,
    /// Check-degree fractions.
    #[arg(long)]
    p_dist: Option<String>,
}

#[derive(Args, Clone)]
struct GraphArgs {
    /// Graph JSON file; otherwise the graph is sampled from the ensemble flags.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// BSC flip probability; when given, fields are drawn from the channel.
    #[arg(long)]
    p: Option<f64>,
    /// Seed of the channel realisation (default: the graph seed).
    #[arg(long)]
    channel_seed: Option<u64>,
    /// High-noise slack in `theta = (1 + epsilon) tanh h`.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Args, Clone, Copy)]
struct BpArgs {
    #[arg(long, default_value_t = 1e-12)]
    bp_tol: f64,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
}

impl BpArgs {
    fn params(&self) -> Result<BpParams, Error> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidParameter(format!("damping = {} outside [0, 1)", self.damping)));
        }
        if !(self.bp_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter("bp tolerance and max_iter must be positive".into()));
        }
        Ok(BpParams {
            damping: self.damping,
            tol: self.bp_tol,
            max_iter: self.max_iter,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph and write it as JSON.
    Gen {
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Exact log partition function by brute force.
    Exact {
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Belief-propagation fixed point.
    Bp {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        bp: BpArgs,
    },
    /// Bethe free energy at the BP fixed point with per-node terms.
    Bethe {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        bp: BpArgs,
    },
    /// Loop-sum identity against brute force.
    VerifyIdentity {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        bp: BpArgs,
        /// Maximum accepted identity residual.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Small-polymer threshold as a fraction of n.
        #[arg(long = "split-lambda", default_value_t = 0.5)]
        split_lambda: f64,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
        budget: u64,
        /// Write one CSV row per generalized loop.
        #[arg(long)]
        dump_loops: Option<PathBuf>,
    },
    /// Truncated polymer expansion of the log loop sum.
    Series {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        bp: BpArgs,
        #[arg(long, default_value_t = 4)]
        m_max: usize,
        /// Largest polymer size kept (default: all).
        #[arg(long)]
        size_cutoff: Option<usize>,
        /// Fugacity multiplying every activity.
        #[arg(long, default_value_t = 1.0)]
        z: f64,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
        budget: u64,
    },
    /// Rate function of the high-noise type counting.
    RateFunction {
        #[arg(long)]
        l: usize,
        #[arg(long)]
        r: usize,
        /// Comma-separated list of theta values.
        #[arg(long)]
        theta: String,
        /// Size fraction of the polymer.
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = DEFAULT_STARTS)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean |f - f_bethe| across an ensemble for several n.
    Trend {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Comma-separated list of sizes.
        #[arg(long)]
        n_list: String,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
        #[command(flatten)]
        bp: BpArgs,
    },
    /// Exact and Bethe conditional entropies per instance.
    Entropy {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
        #[command(flatten)]
        bp: BpArgs,
    },
}

enum Failure {
    Lib(Error),
    Tolerance(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Lib(Error::InvalidParameter(format!("csv: {e}")))
    }
}

type CliResult<T> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Lib(Error::InvalidParameter(msg.into()))
}

fn parse_dist(text: &str) -> CliResult<Vec<(usize, f64)>> {
    text.split(',')
        .map(|part| {
            let (d, w) = part
                .split_once(':')
                .ok_or_else(|| invalid(format!("expected degree:fraction, got {part:?}")))?;
            let d = d.trim().parse().map_err(|_| invalid(format!("bad degree {d:?}")))?;
            let w = w.trim().parse().map_err(|_| invalid(format!("bad fraction {w:?}")))?;
            Ok((d, w))
        })
        .collect()
}

fn parse_list<T: std::str::FromStr>(text: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|v| v.trim().parse().map_err(|_| invalid(format!("bad list entry {v:?}"))))
        .collect()
}

impl EnsembleArgs {
    fn spec(&self) -> CliResult<EnsembleSpec> {
        match self.ensemble {
            Some(EnsembleKind::LdpcRegular) => Ok(EnsembleSpec::LdpcRegular {
                l: self.l.ok_or_else(|| invalid("--l is required"))?,
                r: self.r.ok_or_else(|| invalid("--r is required"))?,
            }),
            Some(EnsembleKind::Ldgm) => Ok(EnsembleSpec::Ldgm {
                lambda: parse_dist(self.lambda.as_deref().ok_or_else(|| invalid("--lambda is required"))?)?,
                p_dist: parse_dist(self.p_dist.as_deref().ok_or_else(|| invalid("--p-dist is required"))?)?,
            }),
            None => Err(invalid("--ensemble is required")),
        }
    }
}

impl GraphArgs {
    fn load(&self) -> CliResult<FactorGraph> {
        let graph = match &self.graph {
            Some(path) => FactorGraph::from_json(&std::fs::read_to_string(path)?)?,
            None => {
                let n = self.n.ok_or_else(|| invalid("--n or --graph is required"))?;
                self.ensemble.spec()?.sample(n, self.seed)?
            }
        };
        match self.p {
            Some(p) => Ok(apply_channel(&graph, p, self.channel_seed.unwrap_or(self.seed))?),
            None => Ok(graph),
        }
    }

    /// High-noise threshold from `--p`, or from the largest field of the graph.
    fn theta(&self, graph: &FactorGraph) -> CliResult<f64> {
        match self.p {
            Some(p) => Ok(ChannelParams::from_p(p, self.epsilon)?.theta),
            None => {
                let h = (0..graph.n()).map(|i| graph.var_field(i).abs()).fold(0.0, f64::max);
                Ok(ChannelParams::from_h(h, self.epsilon)?.theta)
            }
        }
    }
}

struct Output {
    path: Option<PathBuf>,
    format: Option<Format>,
}

impl Output {
    fn format(&self, default: Format, allowed: &[Format]) -> CliResult<Format> {
        let f = self.format.unwrap_or(default);
        if allowed.contains(&f) {
            Ok(f)
        } else {
            Err(invalid("requested output format is not supported by this subcommand"))
        }
    }

    fn write(&self, mut text: String) -> CliResult<()> {
        if !text.ends_with('\n') {
            text.push('\n');
        }
        match &self.path {
            Some(p) => std::fs::write(p, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, value: &T) -> CliResult<()> {
        self.format(Format::Json, &[Format::Json])?;
        self.write(serde_json::to_string_pretty(value).map_err(Error::from)?)
    }
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
}

fn edge_label(graph: &FactorGraph, e: usize) -> String {
    let (i, a) = graph.edge(e);
    format!("{}-{}", Node::Var(i), Node::Check(a))
}

fn dump_loops(graph: &FactorGraph, g: &GraphArgs, bp: BpParams, budget: u64, path: &PathBuf) -> CliResult<()> {
    let out = solve_fixed_point(graph, None, bp)?;
    let table = ActivityTable::new(graph, &out.messages)?;
    let candidates = default_bound_candidates(graph, g.theta(graph)?);
    let loops = enumerate_generalized_loops(graph, budget)?;
    let header: Vec<String> = ["edges", "var_types", "check_types", "k", "bound", "bound_kind"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let join = |v: &[usize]| {
        v.iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(d, c)| format!("{d}:{c}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let rows: Vec<Vec<String>> = loops
        .iter()
        .map(|lp| {
            let tv = lp.type_vector();
            let k = table.subgraph_activity(graph, lp);
            let bound = first_applicable_bound(graph, &out.messages, &candidates, lp);
            vec![
                lp.edges.iter().map(|&e| edge_label(graph, e)).collect::<Vec<_>>().join(" "),
                join(&tv.var_counts),
                join(&tv.check_counts),
                format!("{k:e}"),
                bound.map(|b| format!("{:e}", b.1)).unwrap_or_default(),
                bound
                    .map(|b| serde_json::to_value(b.0).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
                    .unwrap_or_default(),
            ]
        })
        .collect();
    std::fs::write(path, csv_text(&header, &rows)?)?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(invalid("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| invalid(e.to_string()))?;
    }
    let out = Output {
        path: cli.out,
        format: cli.format,
    };
    match cli.command {
        Command::Gen { graph } => {
            if graph.graph.is_some() {
                return Err(invalid("gen samples a graph; --graph is not accepted"));
            }
            let g = graph.load()?;
            out.format(Format::Json, &[Format::Json])?;
            out.write(g.to_json()?)
        }
        Command::Exact { graph } => {
            let g = graph.load()?;
            let rep = brute_force_log_partition(&g)?;
            out.json(&json!({
                "schema_version": SCHEMA_VERSION,
                "log_z": rep.log_z,
                "free_energy": rep.log_z / g.n() as f64,
                "n": g.n(),
                "method": "bruteforce",
            }))
        }
        Command::Bp { graph, bp } => {
            let g = graph.load()?;
            let res = solve_fixed_point(&g, None, bp.params()?)?;
            let mut messages = serde_json::Map::new();
            for e in 0..g.num_edges() {
                let (i, a) = g.edge(e);
                let (v, c) = (Node::Var(i), Node::Check(a));
                messages.insert(format!("{v}->{c}"), json!(res.messages.var_to_check[e]));
                messages.insert(format!("{c}->{v}"), json!(res.messages.check_to_var[e]));
            }
            out.json(&json!({
                "schema_version": SCHEMA_VERSION,
                "converged": res.converged,
                "residual": res.residual,
                "iterations": res.iterations,
                "messages": Value::Object(messages),
            }))
        }
        Command::Bethe { graph, bp } => {
            let g = graph.load()?;
            let res = solve_fixed_point(&g, None, bp.params()?)?;
            let b = bethe_free_energy(&g, &res.messages)?;
            out.json(&json!({
                "schema_version": SCHEMA_VERSION,
                "f_bethe": b.f_bethe,
                "bp_residual": res.residual,
                "bp_converged": res.converged,
                "check_terms": b.check_terms,
                "var_terms": b.var_terms,
                "edge_terms": b.edge_terms,
            }))
        }
        Command::VerifyIdentity {
            graph,
            bp,
            tol,
            split_lambda,
            budget,
            dump_loops: dump,
        } => {
            let g = graph.load()?;
            let params = bp.params()?;
            let rep = run_verify_identity(&g, params, split_lambda, budget)?;
            if let Some(path) = &dump {
                dump_loops(&g, &graph, params, budget, path)?;
            }
            out.json(&rep)?;
            if !(rep.residual <= tol) {
                return Err(Failure::Tolerance(format!(
                    "identity residual {:e} exceeds tolerance {tol:e}",
                    rep.residual
                )));
            }
            Ok(())
        }
        Command::Series {
            graph,
            bp,
            m_max,
            size_cutoff,
            z,
            budget,
        } => {
            let g = graph.load()?;
            let res = solve_fixed_point(&g, None, bp.params()?)?;
            let cutoff = size_cutoff.unwrap_or(g.num_nodes());
            let s = polymer_series(&g, &res.messages, m_max, cutoff, z, budget)?;
            match out.format(Format::Csv, &[Format::Csv, Format::Json])? {
                Format::Json => out.write(serde_json::to_string_pretty(&json!({
                    "schema_version": SCHEMA_VERSION,
                    "series": s,
                    "bp_residual": res.residual,
                })).map_err(Error::from)?),
                Format::Csv => {
                    let header = ["M", "term", "partial_sum", "Q"].map(String::from);
                    let rows: Vec<Vec<String>> = s
                        .terms
                        .iter()
                        .zip(&s.partial_sums)
                        .enumerate()
                        .map(|(k, (t, ps))| {
                            vec![(k + 1).to_string(), format!("{t:e}"), format!("{ps:e}"), format!("{:e}", s.q)]
                        })
                        .collect();
                    out.write(csv_text(&header, &rows)?)
                }
            }
        }
        Command::RateFunction {
            l,
            r,
            theta,
            lambda,
            starts,
            seed,
        } => {
            let thetas: Vec<f64> = parse_list(&theta)?;
            let results = thetas
                .iter()
                .map(|&th| mckay_rate_function(&RateFunctionSpec::new(l, r, th, lambda), starts, seed))
                .collect::<Result<Vec<_>, _>>()?;
            match out.format(Format::Csv, &[Format::Csv, Format::Json])? {
                Format::Json => out.write(serde_json::to_string_pretty(&json!({
                    "schema_version": SCHEMA_VERSION,
                    "l": l,
                    "r": r,
                    "lambda": lambda,
                    "rows": thetas.iter().zip(&results).map(|(th, res)| json!({
                        "theta": th,
                        "value": res.value,
                        "argmax": res.argmax,
                    })).collect::<Vec<_>>(),
                })).map_err(Error::from)?),
                Format::Csv => {
                    let mut header = vec!["theta".to_string(), "rate".to_string()];
                    header.extend((2..=l).map(|s| format!("x{s}")));
                    header.extend((2..=r).map(|t| format!("y{t}")));
                    let rows: Vec<Vec<String>> = thetas
                        .iter()
                        .zip(&results)
                        .map(|(th, res)| {
                            let mut row = vec![format!("{th:e}"), format!("{:e}", res.value)];
                            row.extend(res.argmax.x.iter().chain(&res.argmax.y).map(|v| format!("{v:e}")));
                            row
                        })
                        .collect();
                    out.write(csv_text(&header, &rows)?)
                }
            }
        }
        Command::Trend {
            ensemble,
            n_list,
            p,
            instances,
            seed,
            mc_samples,
            bp,
        } => {
            let ns: Vec<usize> = parse_list(&n_list)?;
            let rep = run_trend(&ensemble.spec()?, &ns, p, instances, seed, bp.params()?, mc_samples)?;
            match out.format(Format::Csv, &[Format::Csv, Format::Json])? {
                Format::Json => out.write(serde_json::to_string_pretty(&rep).map_err(Error::from)?),
                Format::Csv => {
                    let header = ["n", "mean_gap", "std_gap", "mean_bp_residual", "frac_high_noise"].map(String::from);
                    let rows: Vec<Vec<String>> = rep
                        .rows
                        .iter()
                        .map(|r| {
                            vec![
                                r.n.to_string(),
                                format!("{:e}", r.mean_gap),
                                format!("{:e}", r.std_gap),
                                format!("{:e}", r.mean_bp_residual),
                                format!("{}", r.frac_high_noise),
                            ]
                        })
                        .collect();
                    out.write(csv_text(&header, &rows)?)
                }
            }
        }
        Command::Entropy {
            ensemble,
            n,
            p,
            instances,
            seed,
            mc_samples,
            bp,
        } => {
            let rep = run_entropy(&ensemble.spec()?, n, p, instances, seed, bp.params()?, mc_samples)?;
            out.json(&rep)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            let kind = if e.is_budget() { "BudgetExceeded" } else { error_name(&e) };
            eprintln!("error ({kind}): {e}");
            ExitCode::from(if e.is_budget() { EXIT_BUDGET } else { EXIT_VALIDATION })
        }
        Err(Failure::Tolerance(msg)) => {
            eprintln!("error (ToleranceExceeded): {msg}");
            ExitCode::from(EXIT_TOLERANCE)
        }
    }
}

fn error_name(e: &Error) -> &'static str {
    match e {
        Error::Divisibility { .. } => "DivisibilityError",
        Error::DuplicateEdge { .. } => "DuplicateEdge",
        Error::IndexOutOfRange { .. } => "IndexOutOfRange",
        Error::TooLarge { .. } => "TooLarge",
        Error::HypothesisNotMet(_) => "HypothesisNotMet",
        Error::InvalidParameter(_) => "InvalidParameter",
        Error::Json(_) => "Json",
        Error::Io(_) => "Io",
        _ => "Error",
    }
}
