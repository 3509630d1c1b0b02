use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use recovery_core::analysis::{self, ArPolicy};
use recovery_core::config::RunConfig;
use recovery_core::decision::DecisionModel;
use recovery_core::dynamics::PhysicalSchedule;
use recovery_core::engine::run;
use recovery_core::network::Locations;
use recovery_core::scenario::{CountyDescriptor, Scenario, ScenarioConfig};
use recovery_core::sweep::{write_atomic, ResultStore};

#[derive(Parser)]
#[command(name = "recovery", version, about = "Household return simulation on a home/POI/infrastructure network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic disc scenario and write its locations and resolved config.
    Toy {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one simulation and write its trajectory.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArg,
        /// Trajectory output file.
        #[arg(long)]
        out: PathBuf,
        /// Also write per-agent states (`t,agent_id,returned`) to this file.
        #[arg(long)]
        agents: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run (or resume) the model × population × seed grid into a results directory.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Results directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Print the number of cells and exit without writing.
        #[arg(long)]
        dry_run: bool,
        /// Discard results produced under a different configuration.
        #[arg(long)]
        invalidate: bool,
    },
    /// Compute the AR surface, seed variability and transition worksheet from a results directory.
    Analyze {
        /// Results directory written by `sweep`.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = Policy::PerThresholdAcrossPopulations)]
        policy: Policy,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Run one of the five county scenarios.
    County {
        /// County name (harris, fort_bend, brazoria, galveston, jefferson).
        #[arg(long)]
        name: String,
        /// Measured locations CSV; placements are synthesised when absent.
        #[arg(long)]
        locations: Option<PathBuf>,
        /// Physical recovery CSV (`t_days,q_p`).
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; defaults are used for absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set scenario.population=250`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ModelArg {
    /// Model preset (logit, threshold_0.6 ... threshold_0.9, hetero, different, timevarying) or a JSON model block.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    PerThresholdAcrossPopulations,
    PerModelAcrossSeeds,
}

impl From<Policy> for ArPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::PerThresholdAcrossPopulations => ArPolicy::PerThresholdAcrossPopulations,
            Policy::PerModelAcrossSeeds => ArPolicy::PerModelAcrossSeeds,
        }
    }
}

impl Common {
    /// The resolved configuration and the directory its relative paths refer to.
    fn load(&self, defaults: &RunConfig) -> Result<(RunConfig, PathBuf)> {
        let (base, dir) = match &self.config {
            Some(p) => (
                RunConfig::from_file(p, defaults).with_context(|| format!("loading {}", p.display()))?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (defaults.clone(), PathBuf::new()),
        };
        let mut cfg = base.with_overrides(&self.set)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok((cfg, if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir }))
    }
}

fn parse_model(spec: &str) -> Result<DecisionModel> {
    let trimmed = spec.trim();
    if trimmed.starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(trimmed).context("parsing --model JSON")?;
        return Ok(DecisionModel::from_json(v, "model")?);
    }
    match DecisionModel::preset(trimmed) {
        Some(m) => {
            m.validate("model")?;
            Ok(m)
        }
        None => bail!(
            "unknown model {trimmed:?}; expected one of {} or a JSON model block",
            DecisionModel::standard_set().into_iter().map(|(k, _)| k).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn render<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> recovery_core::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    if buf.last() != Some(&b'\n') {
        buf.push(b'\n');
    }
    Ok(buf)
}

fn json_bytes<T: serde::Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn cmd_toy(common: &Common, out: &Path) -> Result<()> {
    let (mut cfg, base) = common.load(&RunConfig::default())?;
    let scenario = Scenario::build(&cfg.scenario, cfg.seed, &base)?;
    let locations = render(|b| scenario.locations().write_csv(b))?;
    let schedule = render(|b| scenario.schedule.write_csv(b))?;
    cfg.scenario.locations = Some("locations.csv".into());
    cfg.scenario.physical_schedule = Some("physical_schedule.csv".into());
    write_out(&out.join("locations.csv"), &locations)?;
    write_out(&out.join("physical_schedule.csv"), &schedule)?;
    write_out(&out.join("config.json"), &json_bytes(&cfg)?)?;
    write_out(&out.join("metadata.json"), &json_bytes(&scenario.metadata)?)?;
    eprintln!("wrote {} homes and {} POIs to {}", scenario.population(), scenario.network.n_pois(), out.display());
    Ok(())
}

fn trajectory_bytes(t: &recovery_core::Trajectory, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => render(|b| t.write_csv(b)),
        Format::Json => render(|b| t.write_json(b)),
    }
}

fn cmd_run(common: &Common, model: &ModelArg, out: &Path, agents: Option<&Path>, format: Format) -> Result<()> {
    let (mut cfg, base) = common.load(&RunConfig::default())?;
    if let Some(m) = &model.model {
        cfg.model = parse_model(m)?;
    }
    cfg.record_agents |= agents.is_some();
    let scenario = Scenario::build(&cfg.scenario, cfg.seed, &base)?;
    let traj = run(&scenario, &cfg.run_spec())?;
    let bytes = trajectory_bytes(&traj, format)?;
    let agent_bytes = match agents {
        Some(_) => Some(render(|b| traj.write_agents_csv(b))?),
        None => None,
    };
    write_out(out, &bytes)?;
    if let (Some(p), Some(b)) = (agents, agent_bytes) {
        write_out(p, &b)?;
    }
    Ok(())
}

fn cmd_sweep(common: &Common, out: &Path, parallelism: usize, dry_run: bool, invalidate: bool) -> Result<()> {
    let (cfg, _) = common.load(&RunConfig::default())?;
    if cfg.scenario.locations.is_some() || cfg.scenario.physical_schedule.is_some() {
        bail!("sweeps generate their own placements; remove scenario.locations and scenario.physical_schedule");
    }
    let grid = cfg.grid();
    grid.validate()?;
    let store = ResultStore::new(out);
    if dry_run {
        let present = store.present(&grid).len();
        println!("{} cells ({} models x {} populations x {} seeds), {} to run", grid.size(), grid.models.len(), grid.populations.len(), grid.seeds.len(), grid.size() - present);
        return Ok(());
    }
    let outcome = store.run(&grid, parallelism, invalidate)?;
    eprintln!("ran {} cells, {} already present", outcome.executed, outcome.skipped);
    if !outcome.failures.is_empty() {
        for (k, e) in &outcome.failures {
            eprintln!("cell {k} failed: {e}");
        }
        bail!("{} cells failed", outcome.failures.len());
    }
    Ok(())
}

fn cmd_analyze(results: &Path, policy: ArPolicy, out: &Path, format: Format) -> Result<()> {
    let (grid, table) = ResultStore::new(results).load()?;
    let ar = analysis::ar_grid(&table, &grid, policy)?;
    let flags = analysis::ct_classify(&ar);
    let variability = if grid.seeds.len() >= 2 { analysis::all_variability(&table, &grid)? } else { Vec::new() };
    let ext = if format == Format::Csv { "csv" } else { "json" };
    let ar_bytes = match format {
        Format::Csv => render(|b| analysis::write_ar_csv(&ar, &flags, b))?,
        Format::Json => render(|b| analysis::write_ar_json(&ar, &flags, b))?,
    };
    let var_bytes = match format {
        Format::Csv => render(|b| analysis::write_variability_csv(&variability, b))?,
        Format::Json => render(|b| analysis::write_variability_json(&variability, b))?,
    };
    let report = analysis::ct_report(&ar, &flags);
    write_out(&out.join(format!("ar_grid.{ext}")), &ar_bytes)?;
    write_out(&out.join(format!("variability.{ext}")), &var_bytes)?;
    write_out(&out.join("ct_report.md"), report.as_bytes())?;
    if grid.seeds.len() < 2 {
        eprintln!("only one seed in the grid; variability output is empty");
    }
    Ok(())
}

fn cmd_county(
    name: &str,
    locations: Option<&Path>,
    schedule: Option<&Path>,
    common: &Common,
    model: &ModelArg,
    out: &Path,
    format: Format,
) -> Result<()> {
    let desc = CountyDescriptor::find(name).with_context(|| {
        let names: Vec<&str> = CountyDescriptor::ALL.iter().map(|c| c.name).collect();
        format!("unknown county {name:?}; expected one of {}", names.join(", "))
    })?;
    let defaults = RunConfig { scenario: ScenarioConfig::county(desc), ..RunConfig::default() };
    let (mut cfg, base) = common.load(&defaults)?;
    if let Some(m) = &model.model {
        cfg.model = parse_model(m)?;
    }
    let loc = match locations {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Some(Locations::read_csv(f, cfg.scenario.frame, &p.display().to_string())?)
        }
        None => None,
    };
    let sched = match schedule {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Some(PhysicalSchedule::read_csv(f, &p.display().to_string())?)
        }
        None => None,
    };
    let scenario = match (loc, sched) {
        (None, None) => Scenario::build(&cfg.scenario, cfg.seed, &base)?,
        (loc, sched) => Scenario::assemble(&cfg.scenario, cfg.seed, loc, sched)?,
    };
    let traj = run(&scenario, &cfg.run_spec())?;
    let ext = if format == Format::Csv { "csv" } else { "json" };
    let bytes = trajectory_bytes(&traj, format)?;
    write_out(&out.join(format!("trajectory.{ext}")), &bytes)?;
    write_out(&out.join("metadata.json"), &json_bytes(&scenario.metadata)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Toy { common, out } => cmd_toy(common, out),
        Command::Run { common, model, out, agents, format } => cmd_run(common, model, out, agents.as_deref(), *format),
        Command::Sweep { common, out, parallelism, dry_run, invalidate } => {
            cmd_sweep(common, out, *parallelism, *dry_run, *invalidate)
        }
        Command::Analyze { results, policy, out, format } => cmd_analyze(results, (*policy).into(), out, *format),
        Command::County { name, locations, schedule, common, model, out, format } => {
            cmd_county(name, locations.as_deref(), schedule.as_deref(), common, model, out, *format)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
