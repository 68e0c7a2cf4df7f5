mod analysis;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use bihmap::bienergy::{energy, minimize, random_interior};
use bihmap::{load_field, save_field, GridDomain, SphereField};
use clap::{Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::Analysis;
use crate::config::{ExperimentConfig, OracleSpec, SourceSpec};
use crate::output::{Check, CliError, CliResult, Manifest, OutDir};

const DEFAULT_OUT: &str = "bihmap-out";

#[derive(Parser)]
#[command(name = "bihmap", version, about = "Numerical experiments on biharmonic maps into spheres")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML experiment config
    config: PathBuf,
    /// Output directory (overrides `out` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; BIHMAP_THREADS takes precedence
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the field and run every listed analysis
    Run(RunArgs),
    /// Minimize the bienergy; writes the field and its convergence trace
    Solve(RunArgs),
    /// Run only the [strata] analysis of a config
    Strata(RunArgs),
    /// Run only the [count] analysis of a config
    Count(RunArgs),
    /// Run only the [regscale] analysis of a config
    Regscale(RunArgs),
    /// Rasterize an oracle map into a field file
    GenOracle(GenOracleArgs),
}

#[derive(clap::Args)]
struct GenOracleArgs {
    /// radial_projection, cylindrical_projection, constant, geodesic_wrap or planted_multi
    kind: String,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 1.0)]
    half_width: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    origin: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    center: Option<Vec<f64>>,
    #[arg(long)]
    suppressed: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    value: Option<Vec<f64>>,
    #[arg(long)]
    target_dim: Option<usize>,
    #[arg(long)]
    frequency: Option<f64>,
    /// One planted center per flag, comma separated
    #[arg(long = "planted", allow_hyphen_values = true)]
    centers: Vec<String>,
    #[arg(long)]
    blend_radius: Option<f64>,
    /// Output field file
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let err = CliError::Validation(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            std::process::exit(err.exit_code());
        }
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Run(a) => run(&a, "run", None),
        Command::Solve(a) => run(&a, "solve", None),
        Command::Strata(a) => run(&a, "strata", Some("strata")),
        Command::Count(a) => run(&a, "count", Some("count")),
        Command::Regscale(a) => run(&a, "regscale", Some("regscale")),
        Command::GenOracle(a) => gen_oracle(&a),
    };
    if let Err(e) = result {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}

/// BIHMAP_THREADS, then the flag, then the config.
fn thread_count(flag: Option<usize>, config: Option<usize>) -> CliResult<usize> {
    let hint = match std::env::var("BIHMAP_THREADS") {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Validation(format!("BIHMAP_THREADS = {v:?} is not a thread count")))?,
        ),
        Err(_) => flag.or(config),
    };
    match hint {
        Some(0) => Err(CliError::Validation("thread count must be positive".into())),
        Some(n) => Ok(n),
        None => Ok(rayon::current_num_threads()),
    }
}

enum Source {
    Ready(SphereField),
    Oracle(bihmap::oracle::OracleMap),
    Solve { boundary: bihmap::oracle::OracleMap },
}

struct Plan {
    domain: GridDomain,
    source: Source,
    analyses: Vec<Box<dyn Analysis>>,
}

/// Everything that can fail before computing: parse, resolve, validate.
fn plan(cfg: &ExperimentConfig, command: &str, only: Option<&str>) -> CliResult<Plan> {
    let grid = |c: &ExperimentConfig| {
        c.grid.as_ref().ok_or_else(|| CliError::Validation("this source needs a [grid] section".into()))?.domain()
    };
    let (domain, source) = match &cfg.source {
        SourceSpec::File { path } => {
            if cfg.grid.is_some() {
                return Err(CliError::Validation("a file source carries its own grid; remove [grid]".into()));
            }
            let f = load_field(path).map_err(|e| match e {
                bihmap::Error::Io(e) => CliError::Io(format!("{}: {e}", path.display())),
                e => CliError::Validation(format!("{}: {e}", path.display())),
            })?;
            (f.domain().clone(), Source::Ready(f))
        }
        SourceSpec::Oracle(o) => {
            let d = grid(cfg)?;
            let map = o.build(d.dim())?;
            (d, Source::Oracle(map))
        }
        SourceSpec::Solve { boundary, minimize, .. } => {
            let d = grid(cfg)?;
            minimize.validate().map_err(CliError::invalid)?;
            if d.nodes_per_axis() <= 2 * minimize.collar_width + 4 {
                return Err(CliError::Validation("grid too small for the collar".into()));
            }
            (d.clone(), Source::Solve { boundary: boundary.build(d.dim())? })
        }
    };
    if command == "solve" && !matches!(source, Source::Solve { .. }) {
        return Err(CliError::Validation("`solve` needs a source of type \"solve\"".into()));
    }
    let names: Vec<String> = match only {
        Some(n) => vec![n.to_string()],
        None if command == "solve" => Vec::new(),
        None => cfg.analyses.clone(),
    };
    let analyses = names.iter().map(|n| analysis::build(n, cfg)).collect::<CliResult<Vec<_>>>()?;
    for a in &analyses {
        a.validate(&domain)?;
    }
    Ok(Plan { domain, source, analyses })
}

fn source_summary(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::to_value(&cfg.source).unwrap_or(serde_json::Value::Null)
}

fn run(args: &RunArgs, command: &str, only: Option<&str>) -> CliResult<()> {
    let (cfg, bytes) = config::read(&args.config)?;
    let threads = thread_count(args.threads, cfg.threads)?;
    let plan = plan(&cfg, command, only)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Compute(format!("thread pool: {e}")))?;
    let root = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let manifest = Manifest {
        tool: "bihmap",
        version: env!("CARGO_PKG_VERSION"),
        core_version: bihmap::VERSION,
        command: command.into(),
        config_path: args.config.display().to_string(),
        config_sha256: format!("{:x}", Sha256::digest(&bytes)),
        seed: cfg.seed,
        threads,
        status: "running",
        source: source_summary(&cfg),
        analyses: plan.analyses.iter().map(|a| a.name().to_string()).collect(),
        timings: Vec::new(),
        outputs: Vec::new(),
        error: None,
    };
    let mut out = OutDir::create(root, manifest)?;
    let result = pool.install(|| execute(&cfg, plan, &mut out));
    match result {
        Ok(()) => {
            out.manifest.status = "complete";
            out.write_manifest()
        }
        Err(e) => {
            out.fail(&e);
            Err(e)
        }
    }
}

fn execute(cfg: &ExperimentConfig, plan: Plan, out: &mut OutDir) -> CliResult<()> {
    let start = Instant::now();
    let field = match plan.source {
        Source::Ready(f) => f,
        Source::Oracle(o) => o.rasterize(&plan.domain).map_err(CliError::compute)?,
        Source::Solve { boundary } => {
            let SourceSpec::Solve { init, minimize: mcfg, .. } = &cfg.source else { unreachable!() };
            let b = boundary.rasterize(&plan.domain).map_err(CliError::compute)?;
            let initial = match init {
                config::InitSpec::Boundary => b.clone(),
                config::InitSpec::Random => random_interior(&b, mcfg.collar_width, cfg.seed),
            };
            let (f, trace) = minimize(&initial, &b, mcfg).map_err(CliError::compute)?;
            out.write_text("trace.csv", &trace.to_csv())?;
            let last = trace.last();
            out.write_json(
                "solve.json",
                &json!({
                    "stop": trace.stop,
                    "iterations": last.iteration,
                    "energy": last.energy,
                    "residual": last.residual,
                    "boundary_energy": energy(&b),
                    "config": mcfg,
                }),
            )?;
            let p = out.path("field.bhf");
            save_field(&f, &p).map_err(CliError::compute)?;
            out.manifest.outputs.push("field.bhf".into());
            f
        }
    };
    out.record("source", start.elapsed().as_secs_f64())?;
    let mut checks: Vec<Check> = Vec::new();
    for a in &plan.analyses {
        let t = Instant::now();
        checks.extend(a.run(&field, out)?);
        out.record(a.name(), t.elapsed().as_secs_f64())?;
    }
    if !plan.analyses.is_empty() {
        let all = checks.iter().all(|c| c.pass);
        out.write_json("summary.json", &json!({ "all_pass": all, "checks": checks }))?;
    }
    Ok(())
}

fn parse_point(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Validation(format!("bad coordinate list {s:?}"))))
        .collect()
}

fn gen_oracle(a: &GenOracleArgs) -> CliResult<()> {
    let centers = if a.centers.is_empty() {
        None
    } else {
        Some(a.centers.iter().map(|c| parse_point(c)).collect::<CliResult<Vec<_>>>()?)
    };
    let spec = OracleSpec {
        kind: a.kind.clone(),
        center: a.center.clone(),
        suppressed: a.suppressed,
        value: a.value.clone(),
        target_dim: a.target_dim,
        frequency: a.frequency,
        centers,
        blend_radius: a.blend_radius,
    };
    let grid = config::GridSpec { dim: a.dim, nodes: a.nodes, half_width: a.half_width, origin: a.origin.clone() };
    let domain = grid.domain()?;
    let oracle = spec.build(a.dim)?;
    let field = oracle.rasterize(&domain).map_err(CliError::compute)?;
    write_field(&field, &a.out)?;
    println!(
        "{}",
        json!({ "path": a.out.display().to_string(), "kind": a.kind, "nodes": domain.node_count(), "components": field.comps() })
    );
    Ok(())
}

fn write_field(field: &SphereField, path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    save_field(field, path).map_err(|e| match e {
        bihmap::Error::Io(e) => CliError::Io(format!("{}: {e}", path.display())),
        e => CliError::Compute(e.to_string()),
    })
}
