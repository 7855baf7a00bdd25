use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use gridtopo::document::{NetworkDocument, SelectionDoc};
use gridtopo::dynamics::{
    closed_form_objective, effective_reduced_weights, kron_reduce, kron_state_matrices, observability_gramian,
    state_matrices,
};
use gridtopo::engine::{self, SolutionStatus, TopologySolution};
use gridtopo::lp::HighsBackend;
use gridtopo::matpower::{self, ConvertOptions};
use gridtopo::oracle::enumerate_optimal;
use gridtopo::{DesignMode, DesignProblem, SolveOptions, TraceWindow};

#[derive(Parser)]
#[command(name = "gridtopo", version, about = "Power-grid topology design for H2 stability")]
struct Cli {
    /// Worker threads for bound sweeps, enumeration and sub-networks.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a radial or meshed network from the candidate lines.
    Design(DesignArgs),
    /// Add lines to the existing network.
    Augment(AugmentArgs),
    /// Evaluate a fixed selection: trace form, Gramian H2 and their ratio.
    Evaluate(EvaluateArgs),
    /// Greedy augmentation with the supermodularity report.
    Greedy(GreedyArgs),
    /// Brute-force optimum and ranked list.
    Oracle(OracleArgs),
    /// Bound box on X with per-entry provenance.
    Bounds(BoundsArgs),
    /// Convert a MATPOWER case (or the bundled `case39`) to a network document.
    Convert(ConvertArgs),
    /// Add seeded random candidate lines to a network document.
    Overlay(OverlayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Radial,
    Meshed,
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Global,
    Incumbent,
}

#[derive(Args)]
struct Output {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a CSV table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// Slack on shortest-path resistance bounds.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Eigenvalue threshold for cut separation.
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long)]
    sparsity_k: Option<usize>,
    /// Total cut budget.
    #[arg(long)]
    max_cuts: Option<usize>,
    #[arg(long)]
    max_cuts_per_round: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Relative MIP gap.
    #[arg(long)]
    gap: Option<f64>,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    dense_cuts: bool,
    #[arg(long)]
    random_cuts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use `X >= 0`, `X <= sum of reactances` instead of the tightened bounds.
    #[arg(long)]
    naive_bounds: bool,
    #[arg(long, value_enum)]
    trace_window: Option<WindowArg>,
    /// Extra lower-bound sweep capped by the first relaxation objective.
    #[arg(long)]
    improve_lower: bool,
    #[arg(long)]
    no_decompose: bool,
    /// Enable the backend presolve on the final MILP.
    #[arg(long)]
    mip_presolve: bool,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        let mut o = SolveOptions::default();
        if let Some(v) = self.epsilon {
            o.epsilon = v;
        }
        if let Some(v) = self.gamma {
            o.gamma = v;
        }
        if let Some(v) = self.sparsity_k {
            o.sparsity_k = v;
        }
        if let Some(v) = self.max_cuts {
            o.max_cuts_total = v;
        }
        if let Some(v) = self.max_cuts_per_round {
            o.max_cuts_per_round = v;
        }
        if let Some(v) = self.rounds {
            o.rounds = v;
        }
        if let Some(v) = self.gap {
            o.mip_gap = v;
        }
        if let Some(v) = self.random_cuts {
            o.random_cuts = v;
        }
        if let Some(v) = self.seed {
            o.seed = v;
        }
        o.time_limit = self.time_limit;
        o.dense_cuts = self.dense_cuts;
        o.tightened = !self.naive_bounds;
        o.improve_lower = self.improve_lower;
        o.decompose = !self.no_decompose;
        o.mip_presolve = self.mip_presolve;
        if let Some(w) = self.trace_window {
            o.trace_window = match w {
                WindowArg::Global => TraceWindow::Global,
                WindowArg::Incumbent => TraceWindow::Incumbent,
            };
        }
        o
    }
}

#[derive(Args)]
struct DesignArgs {
    network: PathBuf,
    #[arg(long, value_enum, default_value = "radial")]
    mode: ModeArg,
    /// Line budget K (meshed mode).
    #[arg(long)]
    budget: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct AugmentArgs {
    network: PathBuf,
    /// Number of lines to add.
    #[arg(long)]
    budget: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct EvaluateArgs {
    network: PathBuf,
    /// JSON `{"edges": [[i, j], ...]}` or a run report.
    #[arg(long)]
    selection: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GreedyArgs {
    network: PathBuf,
    #[arg(long)]
    budget: usize,
    /// Also solve exactly and report the greedy ratio.
    #[arg(long)]
    with_optimal: bool,
    /// List every supermodularity triple.
    #[arg(long)]
    all_triples: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct OracleArgs {
    network: PathBuf,
    #[arg(long, value_enum, default_value = "radial")]
    mode: ModeArg,
    /// Line budget (meshed), or number of lines to add with `--augment`.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    augment: bool,
    /// Number of ranked selections printed in the report.
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BoundsArgs {
    network: PathBuf,
    #[arg(long, value_enum, default_value = "radial")]
    mode: ModeArg,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    augment: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ConvertArgs {
    /// MATPOWER `.m` file, or `case39` for the bundled system.
    case: String,
    /// Non-generator buses become machines with M = 1e-4 (else zero-injection).
    #[arg(long)]
    paper_overrides: bool,
    /// Generator inertia constant as `BUS=H` (seconds); repeatable.
    #[arg(long = "inertia", value_parser = parse_inertia)]
    inertia: Vec<(u32, f64)>,
    #[arg(long, default_value_t = 0.025)]
    damping: f64,
    #[arg(long, default_value_t = 60.0)]
    nominal_hz: f64,
    #[arg(long)]
    reference: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OverlayArgs {
    network: PathBuf,
    #[arg(long, default_value_t = 22)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_inertia(s: &str) -> std::result::Result<(u32, f64), String> {
    let (bus, h) = s.split_once('=').ok_or("expected BUS=H")?;
    Ok((bus.trim().parse().map_err(|e| format!("{e}"))?, h.trim().parse().map_err(|e| format!("{e}"))?))
}

fn load(path: &Path) -> Result<NetworkDocument> {
    NetworkDocument::from_path(path).with_context(|| format!("reading {}", path.display()))
}

fn design_mode(mode: ModeArg, budget: Option<usize>, augment: bool) -> Result<DesignMode> {
    Ok(match (augment, mode) {
        (true, _) => DesignMode::Augment { additional: budget.context("--budget is required with --augment")? },
        (false, ModeArg::Radial) => DesignMode::Radial,
        (false, ModeArg::Meshed) => DesignMode::Meshed { budget: budget.context("--budget is required in meshed mode")? },
    })
}

fn problem(doc: &NetworkDocument, mode: DesignMode, options: SolveOptions) -> Result<DesignProblem> {
    let (net, obj) = doc.build()?;
    Ok(DesignProblem::new(net, obj, mode, options)?)
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn write_csv(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if let Some(p) = path {
        let mut f = std::io::BufWriter::new(fs::File::create(p).with_context(|| format!("writing {}", p.display()))?);
        body(&mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn selection_csv(p: &DesignProblem, sol: &TopologySolution, w: &mut dyn Write) -> Result<()> {
    writeln!(w, "from,to,susceptance,existing")?;
    for l in sol.selected() {
        let e = &p.network.edges()[l];
        writeln!(w, "{},{},{},{}", p.network.node_id(e.from), p.network.node_id(e.to), e.susceptance, e.existing)?;
    }
    Ok(())
}

fn status_code(sol: &TopologySolution) -> u8 {
    match sol.status {
        SolutionStatus::TimeLimit => 2,
        _ => 0,
    }
}

fn run_solve(p: &DesignProblem, command: &str, output: &Output) -> Result<u8> {
    let sol = engine::solve(p)?;
    eprint!("{}", engine::solution_summary(p, &sol));
    emit(&engine::artifact(p, &sol, command), output.out.as_deref())?;
    write_csv(output.csv.as_deref(), |w| selection_csv(p, &sol, w))?;
    Ok(status_code(&sol))
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<u8> {
    let doc = load(&args.network)?;
    let (net, obj) = doc.build()?;
    let mask = match &args.selection {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SelectionDoc::from_json_str(&text)?.mask(&net)?
        }
        None => vec![true; net.edge_count()],
    };
    let z: Vec<f64> = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    if !net.is_connected(&z) {
        bail!("selection does not span the network");
    }
    let lap = net.reduced_laplacian(&z);
    let ss = if net.has_zero_injection() {
        kron_state_matrices(&net, &z, &obj)?
    } else {
        state_matrices(&net, &z, &obj)?
    };
    let h2 = observability_gramian(&ss)?.h2_squared;
    let (trace, kron) = if obj.has_frequency_weights() {
        (None, None)
    } else {
        let w = effective_reduced_weights(&net, &obj);
        let trace = closed_form_objective(&w, &lap)?;
        let kron = if net.has_zero_injection() {
            let keep = net.synchronous_reduced();
            let ws = w.select_rows(&keep).select_columns(&keep);
            Some(closed_form_objective(&ws, &kron_reduce(&lap, &keep)?)?)
        } else {
            None
        };
        (Some(trace), kron)
    };
    let edges: Vec<[u32; 2]> = (0..mask.len())
        .filter(|&l| mask[l])
        .map(|l| [net.node_id(net.edges()[l].from), net.node_id(net.edges()[l].to)])
        .collect();
    let report = json!({
        "schema_version": engine::ARTIFACT_SCHEMA_VERSION,
        "command": "evaluate",
        "edges": edges,
        "trace_objective": trace,
        "h2_squared": h2,
        "ratio": trace.map(|t| h2 / t),
        "kron_objective": kron,
    });
    match trace {
        Some(t) => eprintln!("trace objective: {t:.10}\nh2_squared: {h2:.10}\nratio: {:.10}", h2 / t),
        None => eprintln!("h2_squared: {h2:.10}\ntrace objective: n/a (frequency weights)"),
    }
    emit(&report, args.output.out.as_deref())?;
    Ok(0)
}

fn cmd_greedy(args: &GreedyArgs) -> Result<u8> {
    let doc = load(&args.network)?;
    let p = problem(&doc, DesignMode::Augment { additional: args.budget }, args.solver.options())?;
    let sol = engine::greedy_augment(&p)?;
    let smod = engine::supermodularity_for(&p, args.all_triples)?;
    let mut report = engine::artifact(&p, &sol, "greedy");
    report["supermodularity"] = serde_json::to_value(&smod)?;
    if args.with_optimal {
        let opt = engine::solve(&p)?;
        let empty = engine::evaluate_selection(&p, &p.network.existing_mask(), SolutionStatus::Heuristic)?;
        let g = engine::greedy_guarantee(empty.objective, sol.objective, opt.objective);
        report["optimal_objective"] = json!(opt.objective);
        report["existing_objective"] = json!(empty.objective);
        report["guarantee"] = serde_json::to_value(g)?;
        eprintln!("greedy ratio: {:.6} (bound 1/e: {})", g.ratio, g.within_bound);
    }
    eprint!("{}", engine::solution_summary(&p, &sol));
    eprintln!("supermodularity conditions hold for all triples: {}", smod.all_hold);
    emit(&report, args.output.out.as_deref())?;
    write_csv(args.output.csv.as_deref(), |w| selection_csv(&p, &sol, w))?;
    Ok(0)
}

fn cmd_oracle(args: &OracleArgs) -> Result<u8> {
    let doc = load(&args.network)?;
    let p = problem(&doc, design_mode(args.mode, args.budget, args.augment)?, SolveOptions::default())?;
    let rep = enumerate_optimal(&p, true)?;
    let label = |edges: &[usize]| -> Vec<[u32; 2]> {
        edges
            .iter()
            .map(|&l| [p.network.node_id(p.network.edges()[l].from), p.network.node_id(p.network.edges()[l].to)])
            .collect()
    };
    let ranked: Vec<Value> = rep
        .ranked
        .iter()
        .take(args.top)
        .map(|s| json!({ "objective": s.objective, "edges": label(&s.edges) }))
        .collect();
    let report = json!({
        "schema_version": engine::ARTIFACT_SCHEMA_VERSION,
        "command": "oracle",
        "mode": p.mode,
        "feasible_count": rep.feasible_count,
        "examined": rep.examined,
        "best": rep.best.as_ref().map(|b| json!({ "objective": b.objective, "edges": label(&b.edges) })),
        "ranked": ranked,
    });
    match &rep.best {
        Some(b) => eprintln!("optimum {:.10} over {} feasible selections", b.objective, rep.feasible_count),
        None => eprintln!("no connected selection satisfies the mode"),
    }
    emit(&report, args.output.out.as_deref())?;
    write_csv(args.output.csv.as_deref(), |w| Ok(rep.write_csv(&p, w)?))?;
    Ok(if rep.is_feasible() { 0 } else { 1 })
}

fn cmd_bounds(args: &BoundsArgs) -> Result<u8> {
    let doc = load(&args.network)?;
    let p = problem(&doc, design_mode(args.mode, args.budget, args.augment)?, args.solver.options())?;
    let rep = engine::problem_bounds(&p, &HighsBackend)?;
    let entries = rep.entries(&p);
    let report = json!({
        "schema_version": engine::ARTIFACT_SCHEMA_VERSION,
        "command": "bounds",
        "mode": p.mode,
        "path": rep.path,
        "window_upper": rep.window_upper,
        "lp_count": rep.lp_count,
        "seconds": rep.seconds,
        "provenance": rep.bounds.provenance_counts(),
        "entries": entries,
    });
    emit(&report, args.output.out.as_deref())?;
    write_csv(args.output.csv.as_deref(), |w| {
        writeln!(w, "i,j,lower,upper,lower_source,upper_source")?;
        for e in &entries {
            let src = |s| serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            writeln!(w, "{},{},{},{},{},{}", e.i, e.j, e.lower, e.upper, src(e.lower_source), src(e.upper_source))?;
        }
        Ok(())
    })?;
    Ok(0)
}

fn cmd_convert(args: &ConvertArgs) -> Result<u8> {
    let bundled = args.case == "case39";
    let text = if bundled {
        matpower::CASE39.to_string()
    } else {
        fs::read_to_string(&args.case).with_context(|| format!("reading {}", args.case))?
    };
    let mut opts = ConvertOptions::case39(args.paper_overrides);
    if !bundled {
        opts.inertia_h.clear();
    }
    opts.inertia_h.extend(args.inertia.iter().copied());
    opts.damping = args.damping;
    opts.nominal_hz = args.nominal_hz;
    opts.reference = args.reference;
    let doc = matpower::to_document(&matpower::parse_matpower(&text)?, &opts)?;
    doc.build()?;
    write_doc(&doc, args.out.as_deref())
}

fn write_doc(doc: &NetworkDocument, out: Option<&Path>) -> Result<u8> {
    let text = doc.to_json_string();
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Design(a) => {
            let mode = design_mode(a.mode, a.budget, false)?;
            run_solve(&problem(&load(&a.network)?, mode, a.solver.options())?, "design", &a.output)
        }
        Command::Augment(a) => {
            let mode = DesignMode::Augment { additional: a.budget };
            run_solve(&problem(&load(&a.network)?, mode, a.solver.options())?, "augment", &a.output)
        }
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Greedy(a) => cmd_greedy(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Bounds(a) => cmd_bounds(&a),
        Command::Convert(a) => cmd_convert(&a),
        Command::Overlay(a) => write_doc(&matpower::random_overlay(&load(&a.network)?, a.count, a.seed)?, a.out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
