use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser, Subcommand};

use chainsim::bounds::Constants;
use chainsim::engine;
use chainsim::harness::{self, ExperimentPreset, PresetName};
use chainsim::report::{self, fmt_num};
use chainsim::{Error, Policy, Scenario};

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

/// Default horizon of `validate` when none is given.
const VALIDATE_HORIZON: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "chainsim",
    version,
    about = "Online NFV service-chain simulator"
)]
struct Cli {
    /// Scenario file (TOML). Without it the 7-VM reference scenario is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// alg1, alg2 or heu.
    #[arg(long, global = true)]
    policy: Option<Policy>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long = "t-delta", global = true)]
    t_delta: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write its trace CSV.
    Run,
    /// Run a figure sweep into the output directory.
    Preset {
        /// fig3_time, fig4_epsilon, fig5_price_variance, fig6_rates,
        /// fig7_cost_size or fig8_queue_size.
        name: PresetName,
    },
    /// Print the bound constants B, omega_Q, omega_q and C.
    Bounds,
    /// Run the invariant suite on a short trace.
    Validate,
}

impl Cli {
    fn scenario(&self) -> chainsim::Result<Scenario> {
        let mut sc = match &self.config {
            Some(path) => Scenario::load(path)?,
            None => Scenario::reference(),
        };
        if let Some(seed) = self.seed {
            sc.sim.seed = seed;
        }
        if let Some(policy) = self.policy {
            sc.sim.policy = policy;
        }
        if let Some(eps) = self.epsilon {
            sc.sim.epsilon = eps;
        }
        if let Some(h) = self.horizon {
            sc.sim.horizon = h;
        }
        if let Some(td) = self.t_delta {
            sc.sim.t_delta = td;
        }
        sc.sim.validate()?;
        Ok(sc)
    }

    fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("."))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Invariant(_) => EXIT_INVARIANT,
                Error::Lookup(_) => EXIT_USAGE,
                _ => EXIT_CONFIG,
            })
        }
    }
}

fn dispatch(cli: &Cli) -> chainsim::Result<ExitCode> {
    let sc = cli.scenario()?;
    match &cli.command {
        Command::Run => run(cli, &sc),
        Command::Preset { name } => preset(cli, &sc, *name),
        Command::Bounds => bounds(cli, &sc),
        Command::Validate => validate(cli, &sc),
    }
}

fn run(cli: &Cli, sc: &Scenario) -> chainsim::Result<ExitCode> {
    let (topo, chains) = sc.instantiate()?;
    let trace = engine::run(&sc.sim, &topo, &chains)?;
    std::fs::create_dir_all(cli.out_dir())?;
    let path = harness::trace_path(cli.out_dir(), sc);
    report::write_trace_csv(&trace, BufWriter::new(File::create(&path)?))?;
    let last = trace.rows.last();
    println!(
        "{} slots, policy {}, avg_cost {}, final backlog {}, trace {}",
        trace.rows.len(),
        sc.sim.policy,
        fmt_num(last.map_or(0.0, |r| r.avg_cost)),
        fmt_num(last.map_or(0.0, |r| r.backlog)),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn preset(cli: &Cli, sc: &Scenario, name: PresetName) -> chainsim::Result<ExitCode> {
    let mut preset = ExperimentPreset::new(name, sc);
    if let Some(policy) = cli.policy {
        preset.policies = vec![policy];
    }
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(name.as_str()));
    let rows = harness::run_preset(&preset, &out, harness::worker_count()?)?;
    let violations: usize = rows.iter().map(|r| r.window_violations).sum();
    println!(
        "{name}: {} runs written to {}",
        rows.len(),
        out.join(harness::SUMMARY_FILE).display()
    );
    if violations > 0 {
        return Err(Error::Invariant(format!(
            "{violations} window-deviation bound violations"
        )));
    }
    Ok(ExitCode::SUCCESS)
}

fn bounds(cli: &Cli, sc: &Scenario) -> chainsim::Result<ExitCode> {
    let (topo, chains) = sc.instantiate()?;
    let c = Constants::compute(&sc.sim, &topo, &chains);
    report::write_constants_csv(&c, io::stdout().lock())?;
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
        report::write_constants_csv(&c, BufWriter::new(File::create(dir.join("bounds.csv"))?))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(cli: &Cli, sc: &Scenario) -> chainsim::Result<ExitCode> {
    let horizon = cli.horizon.unwrap_or(VALIDATE_HORIZON.min(sc.sim.horizon));
    let v = harness::validate(sc, horizon)?;
    let mut stdout = io::stdout().lock();
    for c in &v.checks {
        writeln!(
            stdout,
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        )?;
    }
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
        report::write_bound_reports(
            &v.bounds,
            BufWriter::new(File::create(dir.join("validate.csv"))?),
        )?;
    }
    Ok(if v.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVARIANT)
    })
}
