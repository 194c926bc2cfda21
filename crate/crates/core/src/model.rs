//! Platform model: VMs and links, service chains, per-slot random state,
//! and the run configuration.
//!
//! Indices are zero-based throughout: VNF `f1` is index 0. Queue-shaped
//! arrays are dense over `(chain, vnf, vm)` and addressed through [`Dims`].

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};

/// Shape of the `(chain, vnf, vm)` index space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub chains: usize,
    pub vnfs: usize,
    pub vms: usize,
}

impl Dims {
    pub fn len(&self) -> usize {
        self.chains * self.vnfs * self.vms
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, chain: usize, vnf: usize, vm: usize) -> usize {
        debug_assert!(chain < self.chains && vnf < self.vnfs && vm < self.vms);
        (chain * self.vnfs + vnf) * self.vms + vm
    }
}

/// Ordered VNF sequence a service type must traverse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServiceChain {
    id: usize,
    vnfs: Vec<usize>,
}

impl ServiceChain {
    pub fn new(id: usize, vnfs: Vec<usize>) -> Result<Self> {
        if vnfs.is_empty() {
            return Err(Error::Model(format!("chain {id} has no VNFs")));
        }
        for (pos, k) in vnfs.iter().enumerate() {
            if vnfs[..pos].contains(k) {
                return Err(Error::Model(format!("chain {id} lists VNF {k} twice")));
            }
        }
        Ok(Self { id, vnfs })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn vnfs(&self) -> &[usize] {
        &self.vnfs
    }

    /// Entry function of the chain; exogenous arrivals land here.
    pub fn first(&self) -> usize {
        self.vnfs[0]
    }

    pub fn position(&self, vnf: usize) -> Option<usize> {
        self.vnfs.iter().position(|&k| k == vnf)
    }
}

/// All service types of a run, with precomputed predecessor/successor tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainSet {
    chains: Vec<ServiceChain>,
    n_vnfs: usize,
    // [chain * n_vnfs + vnf] -> (prev, next) when the VNF is on the chain
    links: Vec<Option<(Option<usize>, Option<usize>)>>,
}

impl ChainSet {
    /// `n_vnfs` defaults to one past the largest VNF index used by any chain.
    pub fn new(chains: Vec<ServiceChain>, n_vnfs: Option<usize>) -> Result<Self> {
        if chains.is_empty() {
            return Err(Error::Model(
                "at least one service chain is required".into(),
            ));
        }
        for (pos, c) in chains.iter().enumerate() {
            if c.id != pos {
                return Err(Error::Model(format!(
                    "chain ids must be 0..I in order; found {} at position {pos}",
                    c.id
                )));
            }
        }
        let used = chains
            .iter()
            .flat_map(|c| c.vnfs.iter().copied())
            .max()
            .map_or(0, |k| k + 1);
        let n_vnfs = n_vnfs.unwrap_or(used);
        if n_vnfs < used {
            return Err(Error::Model(format!(
                "n_vnfs = {n_vnfs} but chains use VNF index {}",
                used - 1
            )));
        }
        let mut links = vec![None; chains.len() * n_vnfs];
        for c in &chains {
            for (pos, &k) in c.vnfs.iter().enumerate() {
                let prev = pos.checked_sub(1).map(|p| c.vnfs[p]);
                let next = c.vnfs.get(pos + 1).copied();
                links[c.id * n_vnfs + k] = Some((prev, next));
            }
        }
        Ok(Self {
            chains,
            n_vnfs,
            links,
        })
    }

    /// Builds chains from plain VNF index lists, assigning ids in order.
    pub fn from_lists(lists: &[Vec<usize>], n_vnfs: Option<usize>) -> Result<Self> {
        let chains = lists
            .iter()
            .enumerate()
            .map(|(i, v)| ServiceChain::new(i, v.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(chains, n_vnfs)
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn n_vnfs(&self) -> usize {
        self.n_vnfs
    }

    pub fn chains(&self) -> &[ServiceChain] {
        &self.chains
    }

    pub fn get(&self, chain: usize) -> Option<&ServiceChain> {
        self.chains.get(chain)
    }

    pub fn dims(&self, n_vms: usize) -> Dims {
        Dims {
            chains: self.chains.len(),
            vnfs: self.n_vnfs,
            vms: n_vms,
        }
    }

    #[inline]
    fn entry(&self, chain: usize, vnf: usize) -> Option<(Option<usize>, Option<usize>)> {
        if chain >= self.chains.len() || vnf >= self.n_vnfs {
            return None;
        }
        self.links[chain * self.n_vnfs + vnf]
    }

    /// Predecessor and successor of `vnf` within chain `chain`.
    pub fn chain_neighbors(
        &self,
        chain: usize,
        vnf: usize,
    ) -> Result<(Option<usize>, Option<usize>)> {
        self.entry(chain, vnf)
            .ok_or_else(|| Error::Lookup(format!("VNF {vnf} is not on chain {chain}")))
    }

    #[inline]
    pub fn contains(&self, chain: usize, vnf: usize) -> bool {
        self.entry(chain, vnf).is_some()
    }

    #[inline]
    pub fn next(&self, chain: usize, vnf: usize) -> Option<usize> {
        self.entry(chain, vnf).and_then(|(_, n)| n)
    }

    #[inline]
    pub fn prev(&self, chain: usize, vnf: usize) -> Option<usize> {
        self.entry(chain, vnf).and_then(|(p, _)| p)
    }

    /// Whether `Q[chain][vnf][·]` is a live queue (the VNF is on the chain).
    #[inline]
    pub fn has_input_queue(&self, chain: usize, vnf: usize) -> bool {
        self.contains(chain, vnf)
    }

    /// Whether `q[chain][vnf][·]` is a live queue: something upstream on the
    /// chain feeds it. Entry functions have no such queue.
    #[inline]
    pub fn has_output_queue(&self, chain: usize, vnf: usize) -> bool {
        self.prev(chain, vnf).is_some()
    }
}

/// A directed inter-VM link.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    /// `l_max`, services per slot.
    pub capacity: f64,
    /// Set on intra-host links; the sampler prices them at the floor.
    pub zero_price: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    p_max: Vec<f64>,
    links: Vec<Link>,
    host_of: Vec<Option<u32>>,
    by_pair: HashMap<(usize, usize), usize>,
    out_links: Vec<Vec<usize>>,
    in_links: Vec<Vec<usize>>,
}

impl Topology {
    /// `links` are `(from, to, l_max)`; `host_of` may be empty (no colocation).
    pub fn new(
        p_max: Vec<f64>,
        links: Vec<(usize, usize, f64)>,
        host_of: Vec<Option<u32>>,
    ) -> Result<Self> {
        let n = p_max.len();
        if n == 0 {
            return Err(Error::Model("topology needs at least one VM".into()));
        }
        if let Some((vm, cap)) = p_max
            .iter()
            .enumerate()
            .find(|(_, &c)| !(c > 0.0 && c.is_finite()))
        {
            return Err(Error::Model(format!(
                "p_max[{vm}] = {cap} must be positive"
            )));
        }
        let host_of = if host_of.is_empty() {
            vec![None; n]
        } else {
            host_of
        };
        if host_of.len() != n {
            return Err(Error::Model(format!(
                "host_of has {} entries for {n} VMs",
                host_of.len()
            )));
        }

        let mut by_pair = HashMap::with_capacity(links.len());
        let mut out_links = vec![Vec::new(); n];
        let mut in_links = vec![Vec::new(); n];
        let mut built = Vec::with_capacity(links.len());
        for (from, to, capacity) in links {
            if from >= n || to >= n {
                return Err(Error::Model(format!(
                    "link [{from},{to}] names an unknown VM"
                )));
            }
            if from == to {
                return Err(Error::Model(format!("self-link [{from},{from}]")));
            }
            if !(capacity > 0.0 && capacity.is_finite()) {
                return Err(Error::Model(format!(
                    "l_max[{from},{to}] = {capacity} must be positive"
                )));
            }
            let idx = built.len();
            if by_pair.insert((from, to), idx).is_some() {
                return Err(Error::Model(format!("duplicate link [{from},{to}]")));
            }
            out_links[from].push(idx);
            in_links[to].push(idx);
            built.push(Link {
                from,
                to,
                capacity,
                zero_price: false,
            });
        }
        for a in 0..n {
            for b in 0..n {
                if a != b
                    && host_of[a].is_some()
                    && host_of[a] == host_of[b]
                    && !by_pair.contains_key(&(a, b))
                {
                    return Err(Error::Model(format!(
                        "VMs {a} and {b} share a host but link [{a},{b}] is missing"
                    )));
                }
            }
        }
        Ok(Self {
            p_max,
            links: built,
            host_of,
            by_pair,
            out_links,
            in_links,
        })
    }

    /// Complete directed graph over `p_max.len()` VMs; `l_max(a, b)` gives each cap.
    pub fn complete(p_max: Vec<f64>, mut l_max: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let n = p_max.len();
        let mut links = Vec::with_capacity(n * n.saturating_sub(1));
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    links.push((a, b, l_max(a, b)));
                }
            }
        }
        Self::new(p_max, links, Vec::new())
    }

    pub fn with_hosts(mut self, host_of: Vec<Option<u32>>) -> Result<Self> {
        let links = self
            .links
            .iter()
            .map(|l| (l.from, l.to, l.capacity))
            .collect();
        let p_max = std::mem::take(&mut self.p_max);
        Self::new(p_max, links, host_of)
    }

    pub fn n_vms(&self) -> usize {
        self.p_max.len()
    }

    pub fn p_max(&self) -> &[f64] {
        &self.p_max
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, idx: usize) -> &Link {
        &self.links[idx]
    }

    pub fn link_index(&self, from: usize, to: usize) -> Option<usize> {
        self.by_pair.get(&(from, to)).copied()
    }

    pub fn out_links(&self, vm: usize) -> &[usize] {
        &self.out_links[vm]
    }

    pub fn in_links(&self, vm: usize) -> &[usize] {
        &self.in_links[vm]
    }

    pub fn host_of(&self) -> &[Option<u32>] {
        &self.host_of
    }

    /// Largest in- or out-degree over all VMs.
    pub fn max_degree(&self) -> usize {
        (0..self.n_vms())
            .map(|n| self.out_links[n].len().max(self.in_links[n].len()))
            .max()
            .unwrap_or(0)
    }

    pub fn max_link_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.capacity).fold(0.0, f64::max)
    }

    pub fn max_processing_capacity(&self) -> f64 {
        self.p_max.iter().copied().fold(0.0, f64::max)
    }
}

/// Marks every link between two VMs on the same host as zero-price.
///
/// Colocated VNFs behave like a cluster of VMs joined by free links; the
/// sampler prices flagged links at the configured floor instead of zero so
/// the closed-form rates stay finite.
pub fn expand_colocated(topo: &Topology) -> Topology {
    let mut out = topo.clone();
    for link in &mut out.links {
        let (a, b) = (topo.host_of[link.from], topo.host_of[link.to]);
        link.zero_price = a.is_some() && a == b;
    }
    out
}

/// Closed interval for a uniform distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformRange {
    pub lo: f64,
    pub hi: f64,
}

impl UniformRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Parameter(format!("bad uniform range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// Uniform with the given mean and variance; width is `sqrt(12 var)`.
    /// Rejects variances that would push the lower end to or below zero.
    pub fn from_mean_variance(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !mean.is_finite() {
            return Err(Error::Config(format!(
                "bad mean/variance ({mean}, {variance})"
            )));
        }
        let half = (12.0 * variance).sqrt() / 2.0;
        if mean - half <= 0.0 {
            return Err(Error::Config(format!(
                "variance {variance} too large for a positive uniform with mean {mean} (max {})",
                mean * mean / 3.0
            )));
        }
        Ok(Self {
            lo: mean - half,
            hi: mean + half,
        })
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn variance(&self) -> f64 {
        let w = self.hi - self.lo;
        w * w / 12.0
    }

    /// Always consumes exactly one draw, even when `lo == hi`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }
}

/// Random-input distributions of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Distributions {
    /// Per-slot processing (`alpha`) and routing (`beta`) prices.
    pub prices: UniformRange,
    /// Mean new services per slot over the whole platform, shared equally
    /// among chains. Each chain draws `U[0, 2 mean / chains]`.
    pub arrival_mean: f64,
    /// `p_max` and `l_max`, sampled once at setup.
    pub capacities: UniformRange,
    /// Routing price used on zero-price intra-host links.
    pub price_floor: f64,
}

impl Default for Distributions {
    fn default() -> Self {
        Self {
            prices: UniformRange { lo: 0.1, hi: 1.0 },
            arrival_mean: 14.0,
            capacities: UniformRange { lo: 10.0, hi: 20.0 },
            price_floor: 1e-6,
        }
    }
}

impl Distributions {
    /// Largest arrival any single queue can see in a slot.
    pub fn arrival_max(&self, n_chains: usize) -> f64 {
        if n_chains == 0 {
            return 0.0;
        }
        2.0 * self.arrival_mean / n_chains as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prices.lo > 0.0) {
            return Err(Error::Config(format!(
                "prices must be strictly positive, got lower bound {}",
                self.prices.lo
            )));
        }
        if !(self.arrival_mean >= 0.0 && self.arrival_mean.is_finite()) {
            return Err(Error::Config(format!(
                "arrival_mean = {}",
                self.arrival_mean
            )));
        }
        if !(self.capacities.lo > 0.0) {
            return Err(Error::Config(format!(
                "capacities must be positive, got lower bound {}",
                self.capacities.lo
            )));
        }
        if !(self.price_floor > 0.0) {
            return Err(Error::Config(format!(
                "price_floor = {} must be > 0",
                self.price_floor
            )));
        }
        Ok(())
    }
}

/// One realization of the random state: arrivals and both price families.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSample {
    /// Dense over `(chain, vnf, vm)`.
    pub arrivals: Vec<f64>,
    /// Processing price per VM.
    pub alpha: Vec<f64>,
    /// Routing price per link, in `Topology::links` order.
    pub beta: Vec<f64>,
}

impl StateSample {
    pub fn zeros(dims: Dims, n_links: usize) -> Self {
        Self {
            arrivals: vec![0.0; dims.len()],
            alpha: vec![1.0; dims.vms],
            beta: vec![1.0; n_links],
        }
    }

    pub fn total_arrivals(&self) -> f64 {
        self.arrivals.iter().sum()
    }
}

/// Draws a fresh i.i.d. state.
///
/// Per chain, a `U[0, 2 mean / chains]` batch enters the entry-function queue of one
/// VM chosen uniformly. Prices are drawn independently per VM and per link.
/// The number of RNG draws is fixed by the topology and chain count.
pub fn sample_state<R: Rng + ?Sized>(
    rng: &mut R,
    dists: &Distributions,
    topo: &Topology,
    chains: &ChainSet,
) -> StateSample {
    let dims = chains.dims(topo.n_vms());
    let mut arrivals = vec![0.0; dims.len()];
    let arrival = UniformRange {
        lo: 0.0,
        hi: dists.arrival_max(chains.len()),
    };
    for chain in chains.chains() {
        let amount = arrival.sample(rng);
        let vm = rng.random_range(0..dims.vms);
        arrivals[dims.index(chain.id(), chain.first(), vm)] += amount;
    }
    let alpha = (0..dims.vms).map(|_| dists.prices.sample(rng)).collect();
    let beta = topo
        .links()
        .iter()
        .map(|l| {
            let draw = dists.prices.sample(rng);
            if l.zero_price {
                dists.price_floor
            } else {
                draw
            }
        })
        .collect();
    StateSample {
        arrivals,
        alpha,
        beta,
    }
}

/// Which per-slot decision rule drives the run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    Alg1,
    Alg2,
    Heu,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Alg1, Policy::Alg2, Policy::Heu];

    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Alg1 => "alg1",
            Policy::Alg2 => "alg2",
            Policy::Heu => "heu",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alg1" => Ok(Policy::Alg1),
            "alg2" => Ok(Policy::Alg2),
            "heu" => Ok(Policy::Heu),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlacementMode {
    PerSlot,
    TwoTimescale,
}

impl std::str::FromStr for PlacementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_slot" => Ok(PlacementMode::PerSlot),
            "two_timescale" => Ok(PlacementMode::TwoTimescale),
            other => Err(Error::Config(format!("unknown placement mode {other:?}"))),
        }
    }
}

/// How rates that exceed the source backlog are treated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrainMode {
    /// Apply the queue recursions as written; `max{.,0}` absorbs over-draining.
    Literal,
    /// Cap each rate at what its source queue actually holds.
    Strict,
}

impl std::str::FromStr for DrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(DrainMode::Literal),
            "strict" => Ok(DrainMode::Strict),
            other => Err(Error::Config(format!("unknown drain mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogBase {
    E,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(&self, x: f64) -> f64 {
        match self {
            LogBase::E => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" | "ln" => Ok(LogBase::E),
            "2" => Ok(LogBase::Two),
            "10" => Ok(LogBase::Ten),
            other => Err(Error::Config(format!("unknown log base {other:?}"))),
        }
    }
}

/// Learn-and-adapt bias `2 sqrt(eps) log^2(eps)`.
pub fn default_theta(epsilon: f64, base: LogBase) -> f64 {
    let l = base.log(epsilon);
    2.0 * epsilon.sqrt() * l * l
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Tradeoff stepsize; multipliers are `epsilon` times backlogs.
    pub epsilon: f64,
    pub horizon: usize,
    /// Placement interval in slots.
    pub t_delta: usize,
    /// Explicit bias; `None` uses [`default_theta`] with `theta_log_base`.
    pub theta: Option<f64>,
    pub theta_log_base: LogBase,
    pub seed: u64,
    pub dists: Distributions,
    pub policy: Policy,
    pub placement: PlacementMode,
    pub tail_fraction: f64,
    pub drain: DrainMode,
    /// Keep the learned multipliers at zero (Alg. 2 only).
    pub freeze_learning: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            horizon: 10_000,
            t_delta: 5,
            theta: None,
            theta_log_base: LogBase::E,
            seed: 1,
            dists: Distributions::default(),
            policy: Policy::Alg1,
            placement: PlacementMode::TwoTimescale,
            tail_fraction: 0.25,
            drain: DrainMode::Literal,
            freeze_learning: false,
        }
    }
}

impl SimConfig {
    pub fn theta_value(&self) -> f64 {
        self.theta
            .unwrap_or_else(|| default_theta(self.epsilon, self.theta_log_base))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon = {} must be > 0",
                self.epsilon
            )));
        }
        if self.t_delta < 1 {
            return Err(Error::Config("t_delta must be >= 1".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "tail_fraction = {} must lie in (0, 1]",
                self.tail_fraction
            )));
        }
        if let Some(theta) = self.theta {
            if !theta.is_finite() {
                return Err(Error::Config(format!("theta = {theta}")));
            }
        }
        self.dists.validate()
    }
}
