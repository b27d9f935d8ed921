use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use opfrelax::bounds::{tighten_all_cached, ObbtOptions};
use opfrelax::case_io::load_network;
use opfrelax::network::{cycle_basis, Network};
use opfrelax::pipeline::{
    run_method, LocalSolution, Method, MethodConfig, MethodReport, RunStatus, UpperBoundHook, WarmStart,
};
use opfrelax::relaxations::{BuildOptions, RelaxationKind};

#[derive(Parser)]
#[command(name = "opfrelax", version, about = "Convex relaxation bounds for AC optimal power flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one case and write a JSON report.
    Solve(SolveArgs),
    /// Run several methods on several cases and write a CSV table.
    Bench(BenchArgs),
    /// Print the cycle basis or the tightened edge boxes of a case.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct MethodArgs {
    /// Maximum number of separation rounds.
    #[arg(long, default_value_t = 5)]
    rounds: usize,
    #[arg(long, default_value_t = 2)]
    obbt_radius: usize,
    #[arg(long, value_enum, default_value = "on")]
    line_limits: Toggle,
    /// Directory caching tightened bounds per (case, radius).
    #[arg(long)]
    bounds_cache: Option<PathBuf>,
}

impl MethodArgs {
    fn config(&self, method: Method) -> MethodConfig {
        MethodConfig {
            max_rounds: self.rounds.max(1),
            obbt_radius: self.obbt_radius,
            line_limits: matches!(self.line_limits, Toggle::On),
            bounds_cache: self.bounds_cache.clone(),
            ..MethodConfig::new(method)
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    case: PathBuf,
    /// socp, socpa, s34a, s34, ssdp, rm, am, rsdp, rsocp, asocp or asdp.
    #[arg(long)]
    method: Method,
    #[command(flatten)]
    common: MethodArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Warm-start CSV for an external local solver.
    #[arg(long)]
    warmstart: Option<PathBuf>,
    /// Local solution JSON whose objective is the upper bound.
    #[arg(long, conflicts_with = "ub_hook")]
    reference: Option<PathBuf>,
    /// Local solver command template with `{case}`, `{warmstart}` and `{out}`.
    #[arg(long)]
    ub_hook: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Glob of MATPOWER case files.
    #[arg(long)]
    cases: String,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long)]
    table: PathBuf,
    #[command(flatten)]
    common: MethodArgs,
    /// Directory of local solution JSON files named after the case files.
    #[arg(long)]
    reference_dir: Option<PathBuf>,
    /// Skip the RSDP run used as the ratio denominator.
    #[arg(long)]
    no_ratio: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long, conflicts_with = "bounds")]
    cycles: bool,
    #[arg(long)]
    bounds: bool,
    #[arg(long, default_value_t = 2)]
    obbt_radius: usize,
    #[arg(long)]
    bounds_cache: Option<PathBuf>,
}

fn load(path: &Path) -> Result<Network, String> {
    load_network(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn solve(args: SolveArgs) -> Result<RunStatus, String> {
    let net = load(&args.case)?;
    let run = run_method(&net, &args.common.config(args.method));
    let mut report = run.report;
    let warm_path = match (&args.warmstart, &args.ub_hook) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(_)) => Some(std::env::temp_dir().join(format!("{}-{}-warm.csv", net.name, std::process::id()))),
        _ => None,
    };
    if let (Some(path), Some(rel), Some(sol)) = (&warm_path, &run.relaxation, &run.solution) {
        match WarmStart::from_solution(&net, rel, sol) {
            Ok(ws) => ws.write(path).map_err(|e| e.to_string())?,
            Err(e) => {
                warn!("{e}; writing a flat start instead");
                WarmStart::flat(&net).write(path).map_err(|e| e.to_string())?;
            }
        }
    }
    let ub = if let Some(path) = &args.reference {
        Some(LocalSolution::load(path).map_err(|e| e.to_string())?.objective)
    } else if let (Some(template), Some(warm)) = (&args.ub_hook, &warm_path) {
        let hook = UpperBoundHook::parse(template).ok_or("empty upper-bound hook")?;
        let out = warm.with_extension("local.json");
        match hook.run(&args.case, warm, &out) {
            Ok(sol) => Some(sol.objective),
            Err(e) => {
                warn!("{e}");
                None
            }
        }
    } else {
        None
    };
    if let Some(ub) = ub {
        report = report.with_upper_bound(ub);
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    match &args.out {
        Some(p) => std::fs::write(p, json + "\n").map_err(|e| format!("{}: {e}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(report.status)
}

#[derive(Serialize)]
struct TableRow {
    case: String,
    method: String,
    lb: Option<f64>,
    ratio: Option<f64>,
    ub: Option<f64>,
    gap: Option<f64>,
    seconds: f64,
    rounds: usize,
    cuts: usize,
    status: String,
}

fn bench(args: BenchArgs) -> Result<RunStatus, String> {
    let mut paths: Vec<PathBuf> = glob::glob(&args.cases)
        .map_err(|e| e.to_string())?
        .filter_map(Result::ok)
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format!("no case matches {}", args.cases));
    }
    let rsdp = Method::Raw(RelaxationKind::Rsdp);
    let mut writer = csv::Writer::from_path(&args.table).map_err(|e| e.to_string())?;
    let mut worst = RunStatus::Ok;
    for path in &paths {
        let net = load(path)?;
        let ub = args.reference_dir.as_ref().and_then(|dir| {
            let stem = path.file_stem()?.to_string_lossy().into_owned();
            LocalSolution::load(&dir.join(format!("{stem}.json"))).ok().map(|s| s.objective)
        });
        let mut reports: BTreeMap<String, (MethodReport, f64)> = BTreeMap::new();
        let mut methods = args.methods.clone();
        if !args.no_ratio && !methods.contains(&rsdp) {
            methods.insert(0, rsdp);
        }
        for &m in &methods {
            info!("{} {m}", net.name);
            let t = Instant::now();
            let mut report = run_method(&net, &args.common.config(m)).report;
            if let Some(ub) = ub {
                report = report.with_upper_bound(ub);
            }
            reports.insert(m.to_string(), (report, t.elapsed().as_secs_f64()));
        }
        let denom = reports.get(&rsdp.to_string()).and_then(|(r, _)| r.lb);
        for m in &args.methods {
            let (r, secs) = &reports[&m.to_string()];
            if r.status != RunStatus::Ok && worst == RunStatus::Ok {
                worst = r.status;
            }
            writer
                .serialize(TableRow {
                    case: net.name.clone(),
                    method: r.method.clone(),
                    lb: r.lb,
                    ratio: r.lb.zip(denom).map(|(lb, d)| lb / d),
                    ub: r.ub,
                    gap: r.gap,
                    seconds: *secs,
                    rounds: r.rounds.len().saturating_sub(1),
                    cuts: r.cuts.values().sum(),
                    status: format!("{:?}", r.status),
                })
                .map_err(|e| e.to_string())?;
        }
        writer.flush().map_err(|e| e.to_string())?;
    }
    Ok(worst)
}

#[derive(Serialize)]
struct CycleDump {
    buses: Vec<usize>,
}

fn inspect(args: InspectArgs) -> Result<RunStatus, String> {
    let net = load(&args.case)?;
    let json = if args.bounds {
        let opts = ObbtOptions {
            radius: args.obbt_radius,
            build: BuildOptions::default(),
            solver: MethodConfig::new(Method::Socpa).solver,
        };
        let set = tighten_all_cached(&net, &opts, args.bounds_cache.as_deref()).map_err(|e| e.to_string())?;
        serde_json::to_string_pretty(&set)
    } else if args.cycles {
        let cycles: Vec<CycleDump> = cycle_basis(&net)
            .cycles
            .iter()
            .map(|c| CycleDump { buses: c.buses.iter().map(|&b| net.buses[b].id).collect() })
            .collect();
        serde_json::to_string_pretty(&cycles)
    } else {
        serde_json::to_string_pretty(&serde_json::json!({
            "name": net.name,
            "buses": net.n_buses(),
            "branches": net.branches.len(),
            "edges": net.n_edges(),
            "generators": net.generators.len(),
            "components": net.n_components,
            "cycles": cycle_basis(&net).cycles.len(),
            "diagnostics": net.diagnostics,
        }))
    };
    println!("{}", json.map_err(|e| e.to_string())?);
    Ok(RunStatus::Ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Exit code 2 is taken by infeasible relaxations, so usage errors use 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => e.exit(),
    };
    let res = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Inspect(a) => inspect(a),
    };
    match res {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
