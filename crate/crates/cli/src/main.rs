//! Experiment runner: executes scenario configs and writes CSV/JSON artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use jointloc::scenarios::{run_scenario, MethodName, Overrides, ScenarioConfig, ScenarioKind};

use jointloc_cli::artifacts::{self, Group, Summary};
use jointloc_cli::{report, summary};

#[derive(Parser, Debug)]
#[command(name = "jointloc", version, about = "Cooperative self-localization and tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute a scenario and write traces.csv, ledger.csv and summary.json.
    Run(RunArgs),
    /// Print summary tables for an artifact directory.
    Report {
        /// Directory written by `run`.
        dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario name (looked up in `scenarios/`) or path to a TOML file.
    #[arg(long)]
    scenario: String,
    /// Corner-agent measurement range; several values run a sweep.
    #[arg(long, num_args = 1..)]
    rho: Vec<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Network sizes as `agents,objects` pairs.
    #[arg(long, num_args = 1.., value_parser = parse_size)]
    sizes: Vec<[usize; 2]>,
    /// Particles per belief.
    #[arg(short = 'J', long)]
    particles: Option<usize>,
    /// Message passing iterations per time step.
    #[arg(short = 'P', long)]
    iterations: Option<usize>,
    /// Average consensus iterations.
    #[arg(short = 'C', long)]
    consensus_iterations: Option<usize>,
    /// Track each object only among the agents measuring it.
    #[arg(long, overrides_with = "no_ldt")]
    ldt: bool,
    #[arg(long)]
    no_ldt: bool,
    /// Use the alternative proposal.
    #[arg(long, overrides_with = "no_alt")]
    alt: bool,
    #[arg(long)]
    no_alt: bool,
    /// Comma-separated methods, e.g. `pm,rm`.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<MethodName>,
    /// Output directory. Defaults to `runs/<scenario>`.
    #[arg(long, env = "JOINTLOC_OUT")]
    out: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<[usize; 2], String> {
    let (a, o) = s.split_once(',').ok_or_else(|| format!("expected agents,objects, got {s:?}"))?;
    let a = a.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    let o = o.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    Ok([a, o])
}

fn flag(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

fn resolve_scenario(name: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return Ok(direct);
    }
    let file = format!("{name}.toml");
    let mut dirs = vec![PathBuf::from("scenarios")];
    if let Ok(d) = std::env::var("JOINTLOC_SCENARIOS") {
        dirs.insert(0, PathBuf::from(d));
    }
    dirs.push(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios"));
    dirs.into_iter()
        .map(|d| d.join(&file))
        .find(|p| p.is_file())
        .with_context(|| format!("scenario {name:?} not found"))
}

fn kind_name(cfg: &ScenarioConfig) -> Result<&'static str> {
    Ok(match cfg.kind()? {
        ScenarioKind::Dynamic(_) => "dynamic",
        ScenarioKind::Static(_) => "static",
        ScenarioKind::Scalability(_) => "scalability",
    })
}

fn run(args: RunArgs) -> Result<()> {
    let path = resolve_scenario(&args.scenario)?;
    let mut cfg = ScenarioConfig::load(&path)?;
    let overrides = Overrides {
        particles: args.particles,
        iterations: args.iterations,
        consensus_iterations: args.consensus_iterations,
        rho: None,
        ldt: flag(args.ldt, args.no_ldt),
        alt_proposal: flag(args.alt, args.no_alt),
        runs: args.runs,
        seed: args.seed,
        sizes: (!args.sizes.is_empty()).then(|| args.sizes.clone()),
        methods: (!args.methods.is_empty()).then(|| args.methods.clone()),
    };
    overrides.apply(&mut cfg)?;

    let sweep: Vec<Option<f64>> = if args.rho.is_empty() { vec![None] } else { args.rho.iter().map(|&r| Some(r)).collect() };
    let methods: Vec<MethodName> =
        [MethodName::Pm, MethodName::Rm, MethodName::Spf].into_iter().filter(|&m| cfg.runs_method(m)).collect();

    let mut results = Vec::with_capacity(sweep.len());
    for &rho in &sweep {
        let mut point = cfg.clone();
        Overrides { rho, ..Default::default() }.apply(&mut point)?;
        let start = Instant::now();
        let traces = run_scenario::<f64>(&point)?;
        eprintln!(
            "{}{}: {} traces in {:.1} s",
            cfg.name,
            rho.map(|r| format!(" rho={r}")).unwrap_or_default(),
            traces.len(),
            start.elapsed().as_secs_f64()
        );
        results.push((rho, traces));
    }

    let out = args.out.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let groups: Vec<Group<'_>> = results.iter().map(|(rho, t)| Group { rho: *rho, traces: t }).collect();
    artifacts::write_traces(&out.join(artifacts::TRACES), &groups)?;
    artifacts::write_ledger(&out.join(artifacts::LEDGER), &groups)?;
    let summary = Summary {
        scenario: cfg.name.clone(),
        kind: kind_name(&cfg)?.to_string(),
        seed: cfg.seed,
        runs: cfg.runs,
        config: cfg.to_toml_string()?,
        groups: results.iter().map(|(rho, t)| summary::summarize_group(*rho, t, &methods)).collect(),
    };
    artifacts::write_summary(&out.join(artifacts::SUMMARY), &summary)?;
    let aborted: usize = summary.groups.iter().flat_map(|g| &g.methods).map(|m| m.aborted_runs).sum();
    if aborted > 0 {
        eprintln!("warning: {aborted} run(s) aborted after repeated degenerate weights");
    }
    eprintln!("artifacts written to {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Report { dir } => {
            if !dir.is_dir() {
                bail!("{} is not a directory", dir.display());
            }
            let text = report::render(&dir)?;
            print!("{text}");
            Ok(())
        }
    }
}
