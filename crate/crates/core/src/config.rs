//! Scenario files.
//!
//! A scenario is a TOML document with four sections:
//!
//! ```toml
//! [topology]
//! n_vms = 7
//! # links = [[1, 2], [2, 1]]      # 1-based; omitted means complete graph
//! # hosts = [[1, 2]]              # groups of VMs sharing a host
//! # p_max = [...]  l_max = [...]  # fixed caps instead of sampled ones
//!
//! [chains]
//! services = [[1, 2, 3], [3, 1, 2]]   # VNF numbers, f1 = 1
//!
//! [distributions]
//! price_lo = 0.1
//! price_hi = 1.0
//! arrival_mean = 14.0
//! capacity_lo = 10.0
//! capacity_hi = 20.0
//!
//! [algorithm]
//! policy = "alg1"
//! placement = "two_timescale"
//! epsilon = 0.1
//! horizon = 10000
//! t_delta = 5
//! seed = 1
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{expand_colocated, ChainSet, Distributions, SimConfig, Topology, UniformRange};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    topology: TopologySection,
    chains: ChainsSection,
    #[serde(default)]
    distributions: DistSection,
    #[serde(default)]
    algorithm: AlgSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySection {
    n_vms: usize,
    links: Option<Vec<[usize; 2]>>,
    hosts: Option<Vec<Vec<usize>>>,
    p_max: Option<Vec<f64>>,
    l_max: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainsSection {
    services: Vec<Vec<usize>>,
    n_vnfs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistSection {
    price_lo: Option<f64>,
    price_hi: Option<f64>,
    price_mean: Option<f64>,
    price_variance: Option<f64>,
    arrival_mean: Option<f64>,
    capacity_lo: Option<f64>,
    capacity_hi: Option<f64>,
    price_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgSection {
    policy: Option<String>,
    placement: Option<String>,
    epsilon: Option<f64>,
    horizon: Option<usize>,
    t_delta: Option<usize>,
    theta: Option<f64>,
    theta_log_base: Option<String>,
    seed: Option<u64>,
    tail_fraction: Option<f64>,
    drain: Option<String>,
    freeze_learning: Option<bool>,
}

/// Platform shape before capacities are drawn. VM indices are zero-based.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologySpec {
    pub n_vms: usize,
    /// `None` means the complete directed graph.
    pub links: Option<Vec<(usize, usize)>>,
    pub host_of: Vec<Option<u32>>,
    pub p_max: Option<Vec<f64>>,
    pub l_max: Option<Vec<f64>>,
}

impl TopologySpec {
    pub fn complete(n_vms: usize) -> Self {
        Self {
            n_vms,
            links: None,
            host_of: Vec::new(),
            p_max: None,
            l_max: None,
        }
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        match &self.links {
            Some(l) => l.clone(),
            None => (0..self.n_vms)
                .flat_map(|a| {
                    (0..self.n_vms)
                        .filter(move |&b| b != a)
                        .map(move |b| (a, b))
                })
                .collect(),
        }
    }

    /// Draws `p_max` then `l_max` from `caps` on setup stream 0 of `seed`,
    /// unless fixed values were given, and applies host colocation.
    pub fn build(&self, caps: &UniformRange, seed: u64) -> Result<Topology> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = self.pairs();
        let p_max = match &self.p_max {
            Some(p) if p.len() == self.n_vms => p.clone(),
            Some(p) => {
                return Err(Error::Config(format!(
                    "p_max has {} entries for {} VMs",
                    p.len(),
                    self.n_vms
                )))
            }
            None => (0..self.n_vms).map(|_| caps.sample(&mut rng)).collect(),
        };
        let l_max = match &self.l_max {
            Some(l) if l.len() == pairs.len() => l.clone(),
            Some(l) => {
                return Err(Error::Config(format!(
                    "l_max has {} entries for {} links",
                    l.len(),
                    pairs.len()
                )))
            }
            None => pairs.iter().map(|_| caps.sample(&mut rng)).collect(),
        };
        let links = pairs
            .iter()
            .zip(l_max)
            .map(|(&(a, b), cap)| (a, b, cap))
            .collect();
        let topo = Topology::new(p_max, links, self.host_of.clone())?;
        Ok(expand_colocated(&topo))
    }
}

/// A fully specified experiment: platform, chains and run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub topology: TopologySpec,
    pub chains: ChainSet,
    pub sim: SimConfig,
}

impl Scenario {
    /// Seven VMs on a complete graph, chains `f1 f2 f3` and `f3 f1 f2`,
    /// default run configuration.
    pub fn reference() -> Self {
        Self::with_vms(7)
    }

    pub fn with_vms(n_vms: usize) -> Self {
        Self {
            topology: TopologySpec::complete(n_vms),
            chains: ChainSet::from_lists(&[vec![0, 1, 2], vec![2, 0, 1]], None)
                .expect("reference chains are valid"),
            sim: SimConfig::default(),
        }
    }

    /// Samples capacities with the run seed.
    pub fn instantiate(&self) -> Result<(Topology, ChainSet)> {
        self.sim.validate()?;
        let topo = self
            .topology
            .build(&self.sim.dists.capacities, self.sim.seed)?;
        Ok((topo, self.chains.clone()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: FileConfig = toml::from_str(&text).map_err(|source| Error::ConfigParse {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_file(file)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: FileConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_file(file)
    }

    fn from_file(f: FileConfig) -> Result<Self> {
        let n = f.topology.n_vms;
        let one_based = |v: usize, what: &str| {
            v.checked_sub(1)
                .ok_or_else(|| Error::Config(format!("{what} numbers start at 1, got 0")))
        };
        let links = f
            .topology
            .links
            .map(|ls| {
                ls.into_iter()
                    .map(|[a, b]| Ok((one_based(a, "VM")?, one_based(b, "VM")?)))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let mut host_of = Vec::new();
        if let Some(groups) = f.topology.hosts {
            host_of = vec![None; n];
            for (h, group) in groups.iter().enumerate() {
                for &vm in group {
                    let vm = one_based(vm, "VM")?;
                    let slot = host_of
                        .get_mut(vm)
                        .ok_or_else(|| Error::Config(format!("host group names VM {}", vm + 1)))?;
                    if slot.is_some() {
                        return Err(Error::Config(format!("VM {} is on two hosts", vm + 1)));
                    }
                    *slot = Some(h as u32);
                }
            }
        }
        let topology = TopologySpec {
            n_vms: n,
            links,
            host_of,
            p_max: f.topology.p_max,
            l_max: f.topology.l_max,
        };

        let lists = f
            .chains
            .services
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&k| one_based(k, "VNF"))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let chains = ChainSet::from_lists(&lists, f.chains.n_vnfs)
            .map_err(|e| Error::Config(e.to_string()))?;

        let defaults = Distributions::default();
        let d = f.distributions;
        let prices = match (d.price_lo, d.price_hi, d.price_mean, d.price_variance) {
            (None, None, None, None) => defaults.prices,
            (lo, hi, None, None) => UniformRange::new(
                lo.unwrap_or(defaults.prices.lo),
                hi.unwrap_or(defaults.prices.hi),
            )?,
            (None, None, mean, var) => UniformRange::from_mean_variance(
                mean.unwrap_or(defaults.prices.mean()),
                var.unwrap_or(defaults.prices.variance()),
            )?,
            _ => {
                return Err(Error::Config(
                    "give prices either as price_lo/price_hi or as price_mean/price_variance"
                        .into(),
                ))
            }
        };
        let capacities = UniformRange::new(
            d.capacity_lo.unwrap_or(defaults.capacities.lo),
            d.capacity_hi.unwrap_or(defaults.capacities.hi),
        )?;
        let dists = Distributions {
            prices,
            arrival_mean: d.arrival_mean.unwrap_or(defaults.arrival_mean),
            capacities,
            price_floor: d.price_floor.unwrap_or(defaults.price_floor),
        };

        let base = SimConfig::default();
        let a = f.algorithm;
        let sim = SimConfig {
            epsilon: a.epsilon.unwrap_or(base.epsilon),
            horizon: a.horizon.unwrap_or(base.horizon),
            t_delta: a.t_delta.unwrap_or(base.t_delta),
            theta: a.theta,
            theta_log_base: a
                .theta_log_base
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or(base.theta_log_base),
            seed: a.seed.unwrap_or(base.seed),
            dists,
            policy: a
                .policy
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or(base.policy),
            placement: a
                .placement
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or(base.placement),
            tail_fraction: a.tail_fraction.unwrap_or(base.tail_fraction),
            drain: a
                .drain
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or(base.drain),
            freeze_learning: a.freeze_learning.unwrap_or(base.freeze_learning),
        };
        sim.validate()?;
        Ok(Self {
            topology,
            chains,
            sim,
        })
    }
}
