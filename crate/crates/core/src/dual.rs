//! Closed-form per-slot minimizers shared by every policy.
//!
//! Given a multiplier view and the slot's prices, each VM ranks its
//! candidate actions (process one input queue, or ship one input/output
//! queue over one outgoing link) by their queue-price objective and fills
//! its processor and links greedily, one queue per resource.

use std::cmp::Ordering;

use crate::dynamics::{Decision, Flows, Processing, QueueKind, QueueState, Routing};
use crate::error::{Error, Result};
use crate::model::{ChainSet, Dims, StateSample, Topology};

/// Multipliers attached to the two constraint families, dense over
/// `(chain, vnf, vm)`. Entries for queues that do not exist are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierView {
    dims: Dims,
    /// Multipliers of the input-queue constraints.
    pub input: Vec<f64>,
    /// Multipliers of the output-queue constraints.
    pub output: Vec<f64>,
}

impl MultiplierView {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            input: vec![0.0; dims.len()],
            output: vec![0.0; dims.len()],
        }
    }

    /// The virtual-queue view `epsilon * (Q, q)`.
    pub fn from_backlog(state: &QueueState, epsilon: f64) -> Self {
        Self {
            dims: state.dims(),
            input: state.input.iter().map(|q| epsilon * q).collect(),
            output: state.output.iter().map(|q| epsilon * q).collect(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn input_at(&self, chain: usize, vnf: usize, vm: usize) -> f64 {
        self.input[self.dims.index(chain, vnf, vm)]
    }

    #[inline]
    pub fn output_at(&self, chain: usize, vnf: usize, vm: usize) -> f64 {
        self.output[self.dims.index(chain, vnf, vm)]
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dims: self.dims,
            input: self.input.iter().map(|m| c * m).collect(),
            output: self.output.iter().map(|m| c * m).collect(),
        }
    }
}

/// Prices a decision pass sees. Heu substitutes distribution means here
/// while the cost is still charged at the realized prices.
#[derive(Clone, Copy, Debug)]
pub struct PriceView<'a> {
    pub alpha: &'a [f64],
    pub beta: &'a [f64],
}

impl<'a> From<&'a StateSample> for PriceView<'a> {
    fn from(s: &'a StateSample) -> Self {
        Self {
            alpha: &s.alpha,
            beta: &s.beta,
        }
    }
}

#[inline]
fn clamped_rate(delta: f64, price: f64, cap: f64) -> f64 {
    (delta / (2.0 * price)).max(0.0).min(cap)
}

/// Minimizer of `price r^2 - delta r` over `[0, cap]`.
pub fn opt_rate(delta: f64, price: f64, cap: f64) -> Result<f64> {
    if !(price > 0.0) {
        return Err(Error::Parameter(format!("price {price} must be positive")));
    }
    if !(cap >= 0.0) {
        return Err(Error::Parameter(format!(
            "capacity {cap} must be nonnegative"
        )));
    }
    Ok(clamped_rate(delta, price, cap))
}

/// Interior optimum of `(price r^2 - delta r) / epsilon`: `-delta^2 / (4 price epsilon)`
/// when `delta > 0`, else zero. Ignores any capacity.
pub fn objective_value(delta: f64, price: f64, epsilon: f64) -> Result<f64> {
    if !(price > 0.0) {
        return Err(Error::Parameter(format!("price {price} must be positive")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!(
            "epsilon {epsilon} must be positive"
        )));
    }
    Ok(if delta > 0.0 {
        -delta * delta / (4.0 * price * epsilon)
    } else {
        0.0
    })
}

/// `(price r^2 - delta r) / epsilon` at a given rate.
#[inline]
pub fn objective_at(delta: f64, price: f64, epsilon: f64, rate: f64) -> f64 {
    (price * rate * rate - delta * rate) / epsilon
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    Processor,
    Link(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    /// Source queue, always at the deciding VM.
    pub queue: QueueKind,
    pub chain: usize,
    pub vnf: usize,
    pub vm: usize,
    pub resource: Resource,
    /// Receiving VM for routing candidates.
    pub dest: Option<usize>,
    /// Queue-price objective at `rate`; `<= 0`.
    pub objective: f64,
    pub rate: f64,
}

impl Candidate {
    /// Candidates with a zero objective would send nothing.
    pub fn is_active(&self) -> bool {
        self.objective < 0.0
    }

    /// Deterministic ranking: objective, then VNF, chain, destination.
    pub fn rank(&self, other: &Self) -> Ordering {
        self.objective
            .total_cmp(&other.objective)
            .then(self.vnf.cmp(&other.vnf))
            .then(self.chain.cmp(&other.chain))
            .then(self.dest.cmp(&other.dest))
            .then(self.queue.cmp(&other.queue))
    }
}

/// Processing objective of `Q[chain][vnf][vm]` if `vnf` were installed:
/// delta is the input multiplier minus the successor's output multiplier.
fn process_candidate(
    view: &MultiplierView,
    prices: PriceView<'_>,
    topo: &Topology,
    chains: &ChainSet,
    epsilon: f64,
    chain: usize,
    vnf: usize,
    vm: usize,
) -> Candidate {
    let downstream = chains
        .next(chain, vnf)
        .map_or(0.0, |next| view.output_at(chain, next, vm));
    let delta = view.input_at(chain, vnf, vm) - downstream;
    let price = prices.alpha[vm];
    let rate = clamped_rate(delta, price, topo.p_max()[vm]);
    Candidate {
        queue: QueueKind::Input,
        chain,
        vnf,
        vm,
        resource: Resource::Processor,
        dest: None,
        objective: if rate > 0.0 {
            objective_at(delta, price, epsilon, rate)
        } else {
            0.0
        },
        rate,
    }
}

/// Picks the VNF minimizing the summed processing objective at `vm`
/// (sum over chains that use the VNF). Ties go to the lowest index.
pub fn placement_select(
    view: &MultiplierView,
    prices: PriceView<'_>,
    topo: &Topology,
    chains: &ChainSet,
    epsilon: f64,
    vm: usize,
) -> usize {
    let mut best = (0, f64::INFINITY);
    for vnf in 0..chains.n_vnfs() {
        let total: f64 = chains
            .chains()
            .iter()
            .filter(|c| chains.contains(c.id(), vnf))
            .map(|c| {
                process_candidate(view, prices, topo, chains, epsilon, c.id(), vnf, vm).objective
            })
            .sum();
        if total < best.1 {
            best = (vnf, total);
        }
    }
    best.0
}

/// Every candidate action at `vm` given the installed VNF, inert ones included.
pub fn build_candidates(
    view: &MultiplierView,
    prices: PriceView<'_>,
    topo: &Topology,
    chains: &ChainSet,
    epsilon: f64,
    vm: usize,
    installed: usize,
) -> Vec<Candidate> {
    let mut out = Vec::new();
    for c in chains.chains() {
        if chains.contains(c.id(), installed) {
            out.push(process_candidate(
                view,
                prices,
                topo,
                chains,
                epsilon,
                c.id(),
                installed,
                vm,
            ));
        }
    }
    for &link_idx in topo.out_links(vm) {
        let link = topo.link(link_idx);
        let price = prices.beta[link_idx];
        for c in chains.chains() {
            let chain = c.id();
            for &vnf in c.vnfs() {
                let remote = view.input_at(chain, vnf, link.to);
                let mut push = |queue: QueueKind, local: f64| {
                    let delta = local - remote;
                    let rate = clamped_rate(delta, price, link.capacity);
                    out.push(Candidate {
                        queue,
                        chain,
                        vnf,
                        vm,
                        resource: Resource::Link(link_idx),
                        dest: Some(link.to),
                        objective: if rate > 0.0 {
                            objective_at(delta, price, epsilon, rate)
                        } else {
                            0.0
                        },
                        rate,
                    });
                };
                push(QueueKind::Input, view.input_at(chain, vnf, vm));
                if chains.has_output_queue(chain, vnf) {
                    push(QueueKind::Output, view.output_at(chain, vnf, vm));
                }
            }
        }
    }
    out
}

/// Greedy one-to-one matching of queues to resources.
///
/// Repeatedly takes the most negative remaining objective whose queue and
/// resource are both still free. Inert candidates are never selected.
pub fn greedy_assign(candidates: &[Candidate]) -> Vec<Candidate> {
    let mut active: Vec<&Candidate> = candidates.iter().filter(|c| c.is_active()).collect();
    active.sort_by(|a, b| a.rank(b));
    let mut used_queues: Vec<(QueueKind, usize, usize)> = Vec::new();
    let mut used_resources: Vec<Resource> = Vec::new();
    let mut chosen = Vec::new();
    for c in active {
        let q = (c.queue, c.chain, c.vnf);
        if used_queues.contains(&q) || used_resources.contains(&c.resource) {
            continue;
        }
        used_queues.push(q);
        used_resources.push(c.resource);
        chosen.push(*c);
    }
    chosen
}

/// Appends the selected candidates of one VM to a decision.
pub fn apply_assignment(d: &mut Decision, chosen: &[Candidate]) {
    for c in chosen {
        match c.resource {
            Resource::Processor => d.processing.push(Processing {
                vm: c.vm,
                chain: c.chain,
                vnf: c.vnf,
                rate: c.rate,
            }),
            Resource::Link(link) => d.routing.push(Routing {
                link,
                source: c.queue,
                chain: c.chain,
                vnf: c.vnf,
                rate: c.rate,
            }),
        }
    }
}

/// Full per-slot decision under `view`, for a fixed placement.
///
/// Every VM reads the same snapshot; no VM sees another's choices.
pub fn decide(
    view: &MultiplierView,
    prices: PriceView<'_>,
    topo: &Topology,
    chains: &ChainSet,
    epsilon: f64,
    placement: Vec<usize>,
) -> Decision {
    let mut d = Decision::idle(placement);
    for vm in 0..topo.n_vms() {
        let candidates = build_candidates(view, prices, topo, chains, epsilon, vm, d.placement[vm]);
        let chosen = greedy_assign(&candidates);
        apply_assignment(&mut d, &chosen);
    }
    d
}

/// Per-VM argmin placement under `view`.
pub fn select_placement(
    view: &MultiplierView,
    prices: PriceView<'_>,
    topo: &Topology,
    chains: &ChainSet,
    epsilon: f64,
) -> Vec<usize> {
    (0..topo.n_vms())
        .map(|vm| placement_select(view, prices, topo, chains, epsilon, vm))
        .collect()
}

/// Instantaneous Lagrangian: slot cost plus multiplier-weighted residuals
/// of both stability-constraint families.
pub fn instantaneous_lagrangian(
    d: &Decision,
    view: &MultiplierView,
    s: &StateSample,
    topo: &Topology,
    chains: &ChainSet,
) -> f64 {
    let (g1, g2) = Flows::of(d, topo, chains).residuals(&s.arrivals);
    let weighted = |m: &[f64], g: &[f64]| m.iter().zip(g).map(|(m, g)| m * g).sum::<f64>();
    crate::dynamics::slot_cost(d, s) + weighted(&view.input, &g1) + weighted(&view.output, &g2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> (Topology, ChainSet) {
        // 3 VMs, complete graph, chains {f1,f2,f3} and {f3,f1,f2}
        let topo = Topology::complete(vec![20.0; 3], |_, _| 20.0).unwrap();
        let chains = ChainSet::from_lists(&[vec![0, 1, 2], vec![2, 0, 1]], None).unwrap();
        (topo, chains)
    }

    #[test]
    fn opt_rate_examples() {
        assert_eq!(opt_rate(0.1 * (10.0 - 0.0), 0.5, 20.0).unwrap(), 1.0);
        assert_eq!(opt_rate(-3.0, 0.5, 20.0).unwrap(), 0.0);
        assert_eq!(opt_rate(0.0, 0.5, 20.0).unwrap(), 0.0);
        assert_eq!(opt_rate(1e3, 0.1, 20.0).unwrap(), 20.0);
        assert!(matches!(opt_rate(1.0, 0.0, 20.0), Err(Error::Parameter(_))));
        assert!(opt_rate(1.0, -1.0, 20.0).is_err());
    }

    #[test]
    fn objective_examples() {
        let v = objective_value(0.1 * 10.0, 0.5, 0.1).unwrap();
        assert!((v - -5.0).abs() < 1e-12);
        assert!((v - -(0.1 * 100.0) / (4.0 * 0.5)).abs() < 1e-12);
        assert_eq!(objective_value(-1.0, 0.5, 0.1).unwrap(), 0.0);
        let a = objective_value(2.0, 0.7, 0.1).unwrap();
        let b = objective_value(4.0, 0.7, 0.1).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-12);
        assert!(objective_value(1.0, 0.0, 0.1).is_err());
        assert!(objective_value(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn placement_prefers_most_negative_sum() {
        let (topo, chains) = line();
        let dims = chains.dims(3);
        let s = StateSample::zeros(dims, topo.links().len());
        let empty = MultiplierView::zeros(dims);
        assert_eq!(
            placement_select(&empty, (&s).into(), &topo, &chains, 0.1, 0),
            0
        );

        // Only f3 (index 2) has backlog at VM 1, for both chains.
        let mut view = MultiplierView::zeros(dims);
        view.input[dims.index(0, 2, 1)] = 1.0;
        view.input[dims.index(1, 2, 1)] = 2.0;
        assert_eq!(
            placement_select(&view, (&s).into(), &topo, &chains, 0.1, 1),
            2
        );
    }

    #[test]
    fn placement_sums_over_chains() {
        // per-VNF sums {-1, -1, -6}: f1 gets -1 from chain 0, f2 -1 from chain 1,
        // f3 -3 from each chain
        let (topo, chains) = line();
        let dims = chains.dims(3);
        let s = StateSample::zeros(dims, topo.links().len());
        let eps = 1.0;
        // with price 1 and eps 1, objective = -delta^2 / 4 (uncapped)
        let delta_for = |obj: f64| (4.0 * -obj).sqrt();
        let mut view = MultiplierView::zeros(dims);
        view.input[dims.index(0, 0, 0)] = delta_for(-1.0);
        view.input[dims.index(1, 1, 0)] = delta_for(-1.0);
        view.input[dims.index(0, 2, 0)] = delta_for(-3.0);
        view.input[dims.index(1, 2, 0)] = delta_for(-3.0);
        let sums: Vec<f64> = (0..3)
            .map(|k| {
                chains
                    .chains()
                    .iter()
                    .filter(|c| chains.contains(c.id(), k))
                    .map(|c| {
                        process_candidate(&view, (&s).into(), &topo, &chains, eps, c.id(), k, 0)
                            .objective
                    })
                    .sum()
            })
            .collect();
        for (got, want) in sums.iter().zip([-1.0, -1.0, -6.0]) {
            assert!((got - want).abs() < 1e-12, "{sums:?}");
        }
        assert_eq!(
            placement_select(&view, (&s).into(), &topo, &chains, eps, 0),
            2
        );
    }

    #[test]
    fn empty_queues_give_inert_candidates() {
        let (topo, chains) = line();
        let dims = chains.dims(3);
        let s = StateSample::zeros(dims, topo.links().len());
        let cands = build_candidates(
            &MultiplierView::zeros(dims),
            (&s).into(),
            &topo,
            &chains,
            0.1,
            0,
            0,
        );
        assert!(!cands.is_empty());
        assert!(cands.iter().all(|c| !c.is_active()));
        assert!(greedy_assign(&cands).is_empty());
    }

    #[test]
    fn single_loaded_queue_gives_one_process_candidate() {
        let (topo, chains) = line();
        let dims = chains.dims(3);
        let s = StateSample::zeros(dims, topo.links().len());
        let mut state = QueueState::zeros(dims);
        state.set_input(0, 0, 0, 10.0);
        // neighbors hold the same backlog so routing is not attractive
        state.set_input(0, 0, 1, 10.0);
        state.set_input(0, 0, 2, 10.0);
        let view = MultiplierView::from_backlog(&state, 0.1);
        let cands = build_candidates(&view, (&s).into(), &topo, &chains, 0.1, 0, 0);
        let active: Vec<_> = cands.iter().filter(|c| c.is_active()).collect();
        assert_eq!(active.len(), 1);
        assert_eq!(active[0].resource, Resource::Processor);
        assert_eq!(active[0].rate, opt_rate(1.0, 1.0, 20.0).unwrap());
    }

    #[test]
    fn output_backlog_routes_toward_emptier_neighbor() {
        let (topo, chains) = line();
        let dims = chains.dims(3);
        let s = StateSample::zeros(dims, topo.links().len());
        let mut state = QueueState::zeros(dims);
        state.set_output(0, 1, 0, 8.0);
        state.set_input(0, 1, 1, 3.0);
        state.set_input(0, 1, 2, 9.0);
        let view = MultiplierView::from_backlog(&state, 0.1);
        let cands = build_candidates(&view, (&s).into(), &topo, &chains, 0.1, 0, 0);
        let active: Vec<_> = cands.iter().filter(|c| c.is_active()).collect();
        assert_eq!(active.len(), 1);
        assert_eq!(active[0].queue, QueueKind::Output);
        assert_eq!(active[0].dest, Some(1));
    }

    fn cand(queue: usize, resource: Resource, objective: f64) -> Candidate {
        Candidate {
            queue: QueueKind::Input,
            chain: 0,
            vnf: queue,
            vm: 0,
            resource,
            dest: None,
            objective,
            rate: 1.0,
        }
    }

    #[test]
    fn greedy_examples() {
        let one = [cand(0, Resource::Processor, -5.0)];
        assert_eq!(greedy_assign(&one), one.to_vec());

        let a = cand(0, Resource::Link(3), -5.0);
        let b = cand(1, Resource::Link(3), -3.0);
        assert_eq!(greedy_assign(&[b, a]), vec![a]);

        // a queue is used at most once
        let a2 = cand(0, Resource::Processor, -4.0);
        assert_eq!(greedy_assign(&[a, a2, b]), vec![a]);
    }

    #[test]
    fn lagrangian_examples() {
        let (topo, chains) = line();
        let dims = chains.dims(3);
        let mut s = StateSample::zeros(dims, topo.links().len());
        let mut view = MultiplierView::zeros(dims);
        let idle = Decision::idle(vec![0; 3]);
        assert_eq!(
            instantaneous_lagrangian(&idle, &view, &s, &topo, &chains),
            0.0
        );

        s.arrivals[dims.index(0, 0, 1)] = 4.0;
        s.arrivals[dims.index(1, 2, 2)] = 3.0;
        view.input[dims.index(0, 0, 1)] = 0.5;
        view.input[dims.index(1, 2, 2)] = 2.0;
        view.output[dims.index(0, 1, 1)] = 9.0;
        assert_eq!(
            instantaneous_lagrangian(&idle, &view, &s, &topo, &chains),
            0.5 * 4.0 + 2.0 * 3.0
        );
    }
}
