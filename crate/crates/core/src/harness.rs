//! Experiment presets, parallel sweeps and the invariant suite behind
//! `chainsim validate`.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::bounds::{self, BoundReport, Constants};
use crate::config::{Scenario, TopologySpec};
use crate::dynamics::Flows;
use crate::engine::{self, Simulation, Trace};
use crate::error::{Error, Result};
use crate::model::{DrainMode, PlacementMode, Policy, UniformRange};
use crate::report::{self, fmt_num, SummaryRow};

/// Environment variable capping the number of sweep workers.
pub const THREADS_ENV: &str = "CHAINSIM_THREADS";

pub fn worker_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV}={v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PresetName {
    Fig3Time,
    Fig4Epsilon,
    Fig5PriceVariance,
    Fig6Rates,
    Fig7CostSize,
    Fig8QueueSize,
}

impl PresetName {
    pub const ALL: [PresetName; 6] = [
        PresetName::Fig3Time,
        PresetName::Fig4Epsilon,
        PresetName::Fig5PriceVariance,
        PresetName::Fig6Rates,
        PresetName::Fig7CostSize,
        PresetName::Fig8QueueSize,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Fig3Time => "fig3_time",
            PresetName::Fig4Epsilon => "fig4_epsilon",
            PresetName::Fig5PriceVariance => "fig5_price_variance",
            PresetName::Fig6Rates => "fig6_rates",
            PresetName::Fig7CostSize => "fig7_cost_size",
            PresetName::Fig8QueueSize => "fig8_queue_size",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Lookup(format!("unknown preset {s:?}")))
    }
}

/// Mean of the price distribution in the variance sweep.
pub const SWEEP_PRICE_MEAN: f64 = 0.55;
pub const DEFAULT_EPSILONS: [f64; 4] = [0.01, 0.05, 0.1, 0.5];
pub const DEFAULT_VARIANCES: [f64; 5] = [3.3e-5, 1e-3, 1e-2, 4e-2, 8.3e-2];
pub const DEFAULT_SIZES: [usize; 4] = [5, 7, 9, 11];
pub const DEFAULT_ARRIVALS: [f64; 2] = [14.0, 28.0];

/// One grid point of a sweep; every policy and seed is run at it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub n_vms: usize,
    pub arrival_mean: f64,
    /// Replaces the price distribution by a uniform with mean 0.55.
    pub price_variance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub base: Scenario,
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
}

impl ExperimentPreset {
    /// Default grid for `name` around `base`, seeded with `base.sim.seed`.
    pub fn new(name: PresetName, base: &Scenario) -> Self {
        let here = SweepPoint {
            epsilon: base.sim.epsilon,
            n_vms: base.topology.n_vms,
            arrival_mean: base.sim.dists.arrival_mean,
            price_variance: None,
        };
        let points = match name {
            PresetName::Fig3Time => vec![here],
            PresetName::Fig4Epsilon => DEFAULT_EPSILONS
                .iter()
                .map(|&epsilon| SweepPoint { epsilon, ..here })
                .collect(),
            PresetName::Fig5PriceVariance | PresetName::Fig6Rates => DEFAULT_VARIANCES
                .iter()
                .map(|&v| SweepPoint {
                    price_variance: Some(v),
                    ..here
                })
                .collect(),
            PresetName::Fig7CostSize | PresetName::Fig8QueueSize => DEFAULT_ARRIVALS
                .iter()
                .flat_map(|&arrival_mean| {
                    DEFAULT_SIZES.iter().map(move |&n_vms| SweepPoint {
                        n_vms,
                        arrival_mean,
                        ..here
                    })
                })
                .collect(),
        };
        Self {
            name,
            base: base.clone(),
            policies: Policy::ALL.to_vec(),
            seeds: vec![base.sim.seed],
            points,
        }
    }

    /// Every run of the sweep in a fixed order: point, then policy, then seed.
    pub fn runs(&self) -> Result<Vec<RunSpec>> {
        let mut out = Vec::new();
        for point in &self.points {
            for &policy in &self.policies {
                for &seed in &self.seeds {
                    out.push(RunSpec::at(
                        self.name.as_str(),
                        &self.base,
                        point,
                        policy,
                        seed,
                    )?);
                }
            }
        }
        Ok(out)
    }
}

/// A single fully-resolved run of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub label: String,
    pub scenario: Scenario,
}

impl RunSpec {
    pub fn at(
        label: &str,
        base: &Scenario,
        point: &SweepPoint,
        policy: Policy,
        seed: u64,
    ) -> Result<Self> {
        let mut scenario = base.clone();
        if point.n_vms != base.topology.n_vms {
            let t = &base.topology;
            if t.links.is_some() || !t.host_of.is_empty() || t.p_max.is_some() || t.l_max.is_some()
            {
                return Err(Error::Config(
                    "network-size sweeps need a complete-graph topology without fixed capacities or hosts".into(),
                ));
            }
            scenario.topology = TopologySpec::complete(point.n_vms);
        }
        scenario.sim.epsilon = point.epsilon;
        scenario.sim.dists.arrival_mean = point.arrival_mean;
        if let Some(var) = point.price_variance {
            scenario.sim.dists.prices = UniformRange::from_mean_variance(SWEEP_PRICE_MEAN, var)?;
        }
        scenario.sim.policy = policy;
        scenario.sim.seed = seed;
        scenario.sim.validate()?;
        Ok(Self {
            label: label.to_string(),
            scenario,
        })
    }

    pub fn file_name(&self) -> String {
        let sim = &self.scenario.sim;
        format!(
            "{}_{}_eps{}_n{}_r{}_v{}_s{}.csv",
            self.label,
            sim.policy,
            fmt_num(sim.epsilon),
            self.scenario.topology.n_vms,
            fmt_num(sim.dists.arrival_mean),
            fmt_num(sim.dists.prices.variance()),
            sim.seed
        )
    }
}

/// Result of one run: the trace, its window-deviation checks and a summary line.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    pub constants: Constants,
    pub window: (BoundReport, BoundReport),
    pub summary: SummaryRow,
}

pub fn execute(spec: &RunSpec) -> Result<RunOutcome> {
    let sc = &spec.scenario;
    let (topo, chains) = sc.instantiate()?;
    let trace = engine::run(&sc.sim, &topo, &chains)?;
    let constants = Constants::compute(&sc.sim, &topo, &chains);
    let window = bounds::verify_lemma1(
        &trace.snapshots,
        sc.sim.t_delta,
        constants.omega_big,
        constants.omega_small,
    )?;
    let (avg_cost, steady) = if trace.is_empty() {
        (0.0, None)
    } else {
        let ss = engine::steady_state_stats(
            &trace,
            sc.sim.tail_fraction,
            topo.n_vms(),
            topo.links().len(),
        )?;
        (trace.rows.last().map_or(0.0, |r| r.avg_cost), Some(ss))
    };
    let summary = SummaryRow {
        preset: spec.label.clone(),
        policy: sc.sim.policy.to_string(),
        epsilon: sc.sim.epsilon,
        seed: sc.sim.seed,
        n_vms: topo.n_vms(),
        arrival_mean: sc.sim.dists.arrival_mean,
        price_variance: sc.sim.dists.prices.variance(),
        horizon: sc.sim.horizon,
        avg_cost,
        steady_cost: steady.map_or(0.0, |s| s.cost),
        steady_backlog: steady.map_or(0.0, |s| s.backlog),
        processing: steady.map_or(0.0, |s| s.processing),
        routing: steady.map_or(0.0, |s| s.routing),
        window_violations: window.0.violations + window.1.violations,
        trace_file: spec.file_name(),
    };
    Ok(RunOutcome {
        trace,
        constants,
        window,
        summary,
    })
}

/// Runs `specs` on up to `threads` workers. Results keep the input order.
pub fn execute_all(specs: &[RunSpec], threads: usize) -> Result<Vec<RunOutcome>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| specs.par_iter().map(execute).collect())
}

/// Runs a sweep, writing one trace CSV per run into `out_dir` followed by
/// `summary.csv`.
pub fn run_sweep(specs: &[RunSpec], out_dir: &Path, threads: usize) -> Result<Vec<SummaryRow>> {
    std::fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<SummaryRow> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let outcome = execute(spec)?;
                let file = BufWriter::new(File::create(out_dir.join(spec.file_name()))?);
                report::write_trace_csv(&outcome.trace, file)?;
                Ok(outcome.summary)
            })
            .collect::<Result<_>>()
    })?;
    let summary = BufWriter::new(File::create(out_dir.join(SUMMARY_FILE))?);
    report::write_summary_csv(&rows, summary)?;
    Ok(rows)
}

pub const SUMMARY_FILE: &str = "summary.csv";

pub fn run_preset(
    preset: &ExperimentPreset,
    out_dir: &Path,
    threads: usize,
) -> Result<Vec<SummaryRow>> {
    run_sweep(&preset.runs()?, out_dir, threads)
}

/// Runs every policy at each price variance, mean fixed at 0.55.
pub fn price_variance_sweep(
    base: &Scenario,
    variances: &[f64],
    out_dir: &Path,
    threads: usize,
) -> Result<Vec<SummaryRow>> {
    let mut preset = ExperimentPreset::new(PresetName::Fig5PriceVariance, base);
    preset.points = variances
        .iter()
        .map(|&v| SweepPoint {
            price_variance: Some(v),
            ..preset.points[0]
        })
        .collect();
    run_preset(&preset, out_dir, threads)
}

/// Outcome of one named invariant check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Validation {
    pub checks: Vec<Check>,
    pub bounds: Vec<BoundReport>,
}

impl Validation {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Absolute tolerance of the multiplier-update identity.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Steps the scenario for `horizon` slots and checks feasibility, queue
/// nonnegativity, the multiplier-update identity on unclipped slots,
/// decision replay, running-average consistency and the window deviation
/// bounds.
pub fn validate(scenario: &Scenario, horizon: usize) -> Result<Validation> {
    let mut sc = scenario.clone();
    sc.sim.horizon = horizon;
    let (topo, chains) = sc.instantiate()?;
    let eps = sc.sim.epsilon;
    let mut sim = Simulation::new(sc.sim.clone(), topo.clone(), chains.clone())?;

    let mut snapshots = vec![sim.state().clone()];
    let mut costs = Vec::with_capacity(horizon);
    let mut feasibility = Ok(());
    let mut negative = 0usize;
    let (mut identity_slots, mut identity_worst) = (0usize, 0.0f64);
    let mut replay_mismatch = Vec::new();
    let mut avg_worst = 0.0f64;

    for _ in 0..horizon {
        let before = sim.clone();
        let out = match sim.step() {
            Ok(out) => out,
            Err(e @ Error::Invariant(_)) => {
                feasibility = Err(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let t = out.record.t;

        let hold = match sc.sim.placement {
            PlacementMode::TwoTimescale => before
                .refresh_hold(&out.sample)?
                .or_else(|| before.hold().cloned()),
            PlacementMode::PerSlot => None,
        };
        let (mut again, _) = before.decide(&out.sample, hold.as_ref());
        if sc.sim.drain == DrainMode::Strict {
            again = again.capped_to_backlog(before.state(), &topo);
        }
        if again != out.decision {
            replay_mismatch.push(t);
        }

        let prev = before.state();
        let next = sim.state();
        negative += next
            .input
            .iter()
            .chain(&next.output)
            .filter(|&&x| x < 0.0)
            .count();

        let flows = Flows::of(&out.decision, &topo, &chains);
        if !flows.truncates(prev) {
            identity_slots += 1;
            let (g1, g2) = flows.residuals(&out.sample.arrivals);
            let pairs = prev
                .input
                .iter()
                .zip(&g1)
                .zip(&next.input)
                .chain(prev.output.iter().zip(&g2).zip(&next.output));
            for ((a, g), b) in pairs {
                identity_worst = identity_worst.max((eps * b - (eps * a + eps * g)).abs());
            }
        }

        costs.push(out.record.cost);
        let mean = costs.iter().sum::<f64>() / costs.len() as f64;
        let rel = (out.record.avg_cost - mean).abs() / mean.abs().max(f64::MIN_POSITIVE);
        if mean != 0.0 || out.record.avg_cost != 0.0 {
            avg_worst = avg_worst.max(rel);
        }
        snapshots.push(next.clone());
    }

    let constants = Constants::compute(&sc.sim, &topo, &chains);
    let (lq, lsmall) = bounds::verify_lemma1(
        &snapshots,
        sc.sim.t_delta,
        constants.omega_big,
        constants.omega_small,
    )?;

    let mut checks = vec![
        Check {
            name: "feasibility",
            passed: feasibility.is_ok(),
            detail: feasibility
                .err()
                .unwrap_or_else(|| format!("{} slots", costs.len())),
        },
        Check {
            name: "nonnegative_queues",
            passed: negative == 0,
            detail: format!("{negative} negative entries"),
        },
        Check {
            name: "multiplier_identity",
            passed: identity_worst <= IDENTITY_TOL,
            detail: format!("{identity_slots} unclipped slots, worst error {identity_worst:e}"),
        },
        Check {
            name: "replay",
            passed: replay_mismatch.is_empty(),
            detail: match replay_mismatch.first() {
                Some(t) => format!("{} mismatches, first at slot {t}", replay_mismatch.len()),
                None => "all decisions reproduced".into(),
            },
        },
        Check {
            name: "running_average",
            passed: avg_worst <= 1e-9,
            detail: format!("worst relative error {avg_worst:e}"),
        },
    ];
    for r in [&lq, &lsmall] {
        checks.push(Check {
            name: r.name,
            passed: r.passed(),
            detail: format!(
                "{} violations, max ratio {}",
                r.violations,
                fmt_num(r.max_ratio)
            ),
        });
    }
    Ok(Validation {
        checks,
        bounds: vec![lq, lsmall],
    })
}

/// Trace file name used by `chainsim run`.
pub fn trace_path(out_dir: &Path, scenario: &Scenario) -> PathBuf {
    let sim = &scenario.sim;
    out_dir.join(format!(
        "trace_{}_eps{}_s{}.csv",
        sim.policy,
        fmt_num(sim.epsilon),
        sim.seed
    ))
}
