//! Queue evolution, decision feasibility and per-slot cost.
//!
//! Two fluid queues live at every `(chain, vnf, vm)`: the *input* queue `Q`
//! of services waiting to be processed by that VNF on that VM, and the
//! *output* queue `q` of services already processed upstream on that VM and
//! waiting to be shipped to a VM that runs the VNF.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{ChainSet, Dims, StateSample, Topology};

/// Backlog vector `A(t) = (Q, q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueState {
    dims: Dims,
    /// `Q`: awaiting processing.
    pub input: Vec<f64>,
    /// `q`: processed, awaiting downstream routing.
    pub output: Vec<f64>,
}

impl QueueState {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            input: vec![0.0; dims.len()],
            output: vec![0.0; dims.len()],
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

    pub fn set_input(&mut self, chain: usize, vnf: usize, vm: usize, value: f64) {
        let i = self.dims.index(chain, vnf, vm);
        self.input[i] = value;
    }

    pub fn set_output(&mut self, chain: usize, vnf: usize, vm: usize, value: f64) {
        let i = self.dims.index(chain, vnf, vm);
        self.output[i] = value;
    }

    /// Largest entrywise deviation from `other`, for `(Q, q)` separately.
    pub fn max_deviation(&self, other: &QueueState) -> (f64, f64) {
        let dev = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        (
            dev(&self.input, &other.input),
            dev(&self.output, &other.output),
        )
    }
}

/// Total backlog `sum(Q) + sum(q)`.
pub fn total_backlog(state: &QueueState) -> f64 {
    state.input.iter().sum::<f64>() + state.output.iter().sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueueKind {
    /// `Q`; routing it is the `u` family.
    Input,
    /// `q`; routing it is the `v` family.
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Processing {
    pub vm: usize,
    pub chain: usize,
    pub vnf: usize,
    pub rate: f64,
}

/// Ships services of queue `source[chain][vnf][link.from]` into the input
/// queue `Q[chain][vnf][link.to]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Routing {
    pub link: usize,
    pub source: QueueKind,
    pub chain: usize,
    pub vnf: usize,
    pub rate: f64,
}

/// One slot's placement plus processing and routing rates.
///
/// Rates are stored sparsely: every listed action is an entry of `p`, `u`
/// or `v`, everything unlisted is zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Decision {
    /// Installed VNF per VM (the one-hot `e` as an index).
    pub placement: Vec<usize>,
    pub processing: Vec<Processing>,
    pub routing: Vec<Routing>,
}

impl Decision {
    pub fn idle(placement: Vec<usize>) -> Self {
        Self {
            placement,
            ..Self::default()
        }
    }

    pub fn installed(&self, vnf: usize, vm: usize) -> bool {
        self.placement.get(vm) == Some(&vnf)
    }

    pub fn total_processing(&self) -> f64 {
        self.processing.iter().map(|p| p.rate).sum()
    }

    pub fn total_routing(&self) -> f64 {
        self.routing.iter().map(|r| r.rate).sum()
    }

    pub fn is_idle(&self) -> bool {
        self.processing.iter().all(|p| p.rate == 0.0) && self.routing.iter().all(|r| r.rate == 0.0)
    }

    /// Caps every rate at what its source queue holds, so no `max{.,0}`
    /// truncation can fire. Actions sharing a source drain it in list order.
    pub fn capped_to_backlog(&self, state: &QueueState, topo: &Topology) -> Decision {
        let dims = state.dims;
        let mut input_left = state.input.clone();
        let mut output_left = state.output.clone();
        let mut out = self.clone();
        for p in &mut out.processing {
            let i = dims.index(p.chain, p.vnf, p.vm);
            p.rate = p.rate.min(input_left[i]).max(0.0);
            input_left[i] -= p.rate;
        }
        for r in &mut out.routing {
            let from = topo.link(r.link).from;
            let i = dims.index(r.chain, r.vnf, from);
            let left = match r.source {
                QueueKind::Input => &mut input_left[i],
                QueueKind::Output => &mut output_left[i],
            };
            r.rate = r.rate.min(*left).max(0.0);
            *left -= r.rate;
        }
        out
    }
}

/// Per-entry inflow and outflow totals induced by a decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Flows {
    /// `sum_b u_out + p e` per input queue.
    pub input_out: Vec<f64>,
    /// `sum_a u_in + sum_c v_in` per input queue.
    pub input_in: Vec<f64>,
    /// `sum_d v_out` per output queue.
    pub output_out: Vec<f64>,
    /// `p_{k'} e_{k'}` per output queue.
    pub output_in: Vec<f64>,
}

impl Flows {
    pub fn of(d: &Decision, topo: &Topology, chains: &ChainSet) -> Self {
        let dims = chains.dims(topo.n_vms());
        let mut f = Flows {
            input_out: vec![0.0; dims.len()],
            input_in: vec![0.0; dims.len()],
            output_out: vec![0.0; dims.len()],
            output_in: vec![0.0; dims.len()],
        };
        for p in &d.processing {
            if !d.installed(p.vnf, p.vm) {
                continue;
            }
            f.input_out[dims.index(p.chain, p.vnf, p.vm)] += p.rate;
            if let Some(next) = chains.next(p.chain, p.vnf) {
                f.output_in[dims.index(p.chain, next, p.vm)] += p.rate;
            }
        }
        for r in &d.routing {
            let link = topo.link(r.link);
            let src = dims.index(r.chain, r.vnf, link.from);
            match r.source {
                QueueKind::Input => f.input_out[src] += r.rate,
                QueueKind::Output => f.output_out[src] += r.rate,
            }
            f.input_in[dims.index(r.chain, r.vnf, link.to)] += r.rate;
        }
        f
    }

    /// Whether any `max{., 0}` in the queue recursions would clip.
    pub fn truncates(&self, state: &QueueState) -> bool {
        state
            .input
            .iter()
            .zip(&self.input_out)
            .any(|(q, o)| q - o < 0.0)
            || state
                .output
                .iter()
                .zip(&self.output_out)
                .any(|(q, o)| q - o < 0.0)
    }

    /// Unprojected constraint residuals `(g1, g2)` of the relaxed stability
    /// constraints: net inflow minus outflow per queue, arrivals included.
    pub fn residuals(&self, arrivals: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g1 = self
            .input_in
            .iter()
            .zip(arrivals)
            .zip(&self.input_out)
            .map(|((i, r), o)| i + r - o)
            .collect();
        let g2 = self
            .output_in
            .iter()
            .zip(&self.output_out)
            .map(|(i, o)| i - o)
            .collect();
        (g1, g2)
    }
}

/// Advances the queues one slot.
///
/// `Q' = max{Q - u_out - p e, 0} + u_in + v_in + R` and
/// `q' = max{q - v_out, 0} + p_{k'} e_{k'}`. Infeasible decisions are
/// rejected before anything is touched.
pub fn step_queues(
    state: &QueueState,
    d: &Decision,
    s: &StateSample,
    topo: &Topology,
    chains: &ChainSet,
) -> Result<QueueState> {
    if let Err(violations) = feasibility_check(d, topo, chains) {
        return Err(Error::Infeasible(
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    Ok(apply_flows(state, &Flows::of(d, topo, chains), s))
}

/// The queue recursions for already-validated flows.
pub fn apply_flows(state: &QueueState, flows: &Flows, s: &StateSample) -> QueueState {
    let input = state
        .input
        .iter()
        .zip(&flows.input_out)
        .zip(&flows.input_in)
        .zip(&s.arrivals)
        .map(|(((q, out), inflow), r)| (q - out).max(0.0) + inflow + r)
        .collect();
    let output = state
        .output
        .iter()
        .zip(&flows.output_out)
        .zip(&flows.output_in)
        .map(|((q, out), inflow)| (q - out).max(0.0) + inflow)
        .collect();
    QueueState {
        dims: state.dims,
        input,
        output,
    }
}

/// Processing plus routing cost of one slot:
/// `sum alpha_n (p e)^2 + sum beta_ab (u^2 + v^2)`.
pub fn slot_cost(d: &Decision, s: &StateSample) -> f64 {
    let processing: f64 = d
        .processing
        .iter()
        .filter(|p| d.installed(p.vnf, p.vm))
        .map(|p| s.alpha[p.vm] * p.rate * p.rate)
        .sum();
    let routing: f64 = d
        .routing
        .iter()
        .map(|r| s.beta[r.link] * r.rate * r.rate)
        .sum();
    processing + routing
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    PlacementLength {
        expected: usize,
        found: usize,
    },
    UnknownVnf {
        vm: usize,
        vnf: usize,
    },
    UnknownVm {
        vm: usize,
    },
    UnknownLink {
        link: usize,
    },
    /// The targeted queue does not exist for that chain.
    NoSuchQueue {
        kind: QueueKind,
        chain: usize,
        vnf: usize,
    },
    BadRate {
        rate: f64,
    },
    NotInstalled {
        vm: usize,
        vnf: usize,
    },
    ProcessorShared {
        vm: usize,
        active: usize,
    },
    ProcessorOverCapacity {
        vm: usize,
        rate: f64,
        cap: f64,
    },
    LinkShared {
        link: usize,
        from: usize,
        to: usize,
        active: usize,
    },
    LinkOverCapacity {
        link: usize,
        from: usize,
        to: usize,
        rate: f64,
        cap: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PlacementLength { expected, found } => {
                write!(f, "placement covers {found} VMs, expected {expected}")
            }
            Violation::UnknownVnf { vm, vnf } => write!(f, "VM {vm} installs unknown VNF {vnf}"),
            Violation::UnknownVm { vm } => write!(f, "unknown VM {vm}"),
            Violation::UnknownLink { link } => write!(f, "unknown link #{link}"),
            Violation::NoSuchQueue { kind, chain, vnf } => {
                write!(f, "chain {chain} has no {kind:?} queue for VNF {vnf}")
            }
            Violation::BadRate { rate } => write!(f, "rate {rate} is negative or not finite"),
            Violation::NotInstalled { vm, vnf } => {
                write!(f, "VM {vm} processes VNF {vnf} without it installed")
            }
            Violation::ProcessorShared { vm, active } => {
                write!(f, "VM {vm} processes {active} queues in one slot")
            }
            Violation::ProcessorOverCapacity { vm, rate, cap } => {
                write!(f, "VM {vm} processes at {rate} > p_max {cap}")
            }
            Violation::LinkShared {
                link,
                from,
                to,
                active,
            } => {
                write!(
                    f,
                    "link #{link} [{from},{to}] carries {active} queues in one slot"
                )
            }
            Violation::LinkOverCapacity {
                link,
                from,
                to,
                rate,
                cap,
            } => {
                write!(f, "link #{link} [{from},{to}] carries {rate} > l_max {cap}")
            }
        }
    }
}

/// Reports every violated per-slot constraint; `Ok` iff there are none.
pub fn feasibility_check(
    d: &Decision,
    topo: &Topology,
    chains: &ChainSet,
) -> std::result::Result<(), Vec<Violation>> {
    let n = topo.n_vms();
    let mut v = Vec::new();

    if d.placement.len() != n {
        v.push(Violation::PlacementLength {
            expected: n,
            found: d.placement.len(),
        });
    }
    for (vm, &k) in d.placement.iter().enumerate() {
        if k >= chains.n_vnfs() {
            v.push(Violation::UnknownVnf { vm, vnf: k });
        }
    }

    let mut proc_active = vec![0usize; n];
    for p in &d.processing {
        if !(p.rate >= 0.0 && p.rate.is_finite()) {
            v.push(Violation::BadRate { rate: p.rate });
            continue;
        }
        if p.vm >= n {
            v.push(Violation::UnknownVm { vm: p.vm });
            continue;
        }
        if !chains.has_input_queue(p.chain, p.vnf) {
            v.push(Violation::NoSuchQueue {
                kind: QueueKind::Input,
                chain: p.chain,
                vnf: p.vnf,
            });
            continue;
        }
        if p.rate == 0.0 {
            continue;
        }
        if !d.installed(p.vnf, p.vm) {
            v.push(Violation::NotInstalled {
                vm: p.vm,
                vnf: p.vnf,
            });
            continue;
        }
        proc_active[p.vm] += 1;
        let cap = topo.p_max()[p.vm];
        if p.rate > cap {
            v.push(Violation::ProcessorOverCapacity {
                vm: p.vm,
                rate: p.rate,
                cap,
            });
        }
    }
    for (vm, &active) in proc_active.iter().enumerate() {
        if active > 1 {
            v.push(Violation::ProcessorShared { vm, active });
        }
    }

    let mut link_active = vec![0usize; topo.links().len()];
    for r in &d.routing {
        if !(r.rate >= 0.0 && r.rate.is_finite()) {
            v.push(Violation::BadRate { rate: r.rate });
            continue;
        }
        if r.link >= topo.links().len() {
            v.push(Violation::UnknownLink { link: r.link });
            continue;
        }
        let exists = match r.source {
            QueueKind::Input => chains.has_input_queue(r.chain, r.vnf),
            QueueKind::Output => chains.has_output_queue(r.chain, r.vnf),
        };
        if !exists {
            v.push(Violation::NoSuchQueue {
                kind: r.source,
                chain: r.chain,
                vnf: r.vnf,
            });
            continue;
        }
        if r.rate == 0.0 {
            continue;
        }
        link_active[r.link] += 1;
        let link = topo.link(r.link);
        if r.rate > link.capacity {
            v.push(Violation::LinkOverCapacity {
                link: r.link,
                from: link.from,
                to: link.to,
                rate: r.rate,
                cap: link.capacity,
            });
        }
    }
    for (idx, &active) in link_active.iter().enumerate() {
        if active > 1 {
            let link = topo.link(idx);
            v.push(Violation::LinkShared {
                link: idx,
                from: link.from,
                to: link.to,
                active,
            });
        }
    }

    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // chain 0: f1 -> f2 ; two VMs, links both ways with cap 10
    fn fixture() -> (Topology, ChainSet) {
        let topo =
            Topology::new(vec![20.0, 20.0], vec![(0, 1, 10.0), (1, 0, 10.0)], vec![]).unwrap();
        let chains = ChainSet::from_lists(&[vec![0, 1]], None).unwrap();
        (topo, chains)
    }

    fn sample(dims: Dims) -> StateSample {
        StateSample::zeros(dims, 2)
    }

    #[test]
    fn pure_arrival_step() {
        let (topo, chains) = fixture();
        let dims = chains.dims(2);
        let state = QueueState::zeros(dims);
        let mut s = sample(dims);
        s.arrivals[dims.index(0, 0, 1)] = 5.0;
        let next = step_queues(&state, &Decision::idle(vec![0, 0]), &s, &topo, &chains).unwrap();
        assert_eq!(next.input_at(0, 0, 1), 5.0);
        assert_eq!(total_backlog(&next), 5.0);
    }

    #[test]
    fn truncation_branch() {
        let (topo, chains) = fixture();
        let dims = chains.dims(2);
        let mut state = QueueState::zeros(dims);
        state.set_input(0, 0, 0, 2.0);
        let mut s = sample(dims);
        s.arrivals[dims.index(0, 0, 0)] = 1.0;
        let d = Decision {
            placement: vec![0, 0],
            processing: vec![Processing {
                vm: 0,
                chain: 0,
                vnf: 0,
                rate: 5.0,
            }],
            routing: vec![],
        };
        let flows = Flows::of(&d, &topo, &chains);
        assert!(flows.truncates(&state));
        let next = step_queues(&state, &d, &s, &topo, &chains).unwrap();
        // max{2 - 5, 0} + 1
        assert_eq!(next.input_at(0, 0, 0), 1.0);
    }

    #[test]
    fn processing_feeds_downstream_output_queue() {
        let (topo, chains) = fixture();
        let dims = chains.dims(2);
        let mut state = QueueState::zeros(dims);
        state.set_input(0, 0, 1, 10.0);
        let d = Decision {
            placement: vec![1, 0],
            processing: vec![Processing {
                vm: 1,
                chain: 0,
                vnf: 0,
                rate: 3.0,
            }],
            routing: vec![],
        };
        let next = step_queues(&state, &d, &sample(dims), &topo, &chains).unwrap();
        assert_eq!(next.output_at(0, 1, 1), 3.0);
        assert_eq!(next.input_at(0, 0, 1), 7.0);
    }

    #[test]
    fn terminal_processing_leaves_the_system() {
        let (topo, chains) = fixture();
        let dims = chains.dims(2);
        let mut state = QueueState::zeros(dims);
        state.set_input(0, 1, 0, 4.0);
        let d = Decision {
            placement: vec![1, 0],
            processing: vec![Processing {
                vm: 0,
                chain: 0,
                vnf: 1,
                rate: 4.0,
            }],
            routing: vec![],
        };
        let next = step_queues(&state, &d, &sample(dims), &topo, &chains).unwrap();
        assert_eq!(total_backlog(&next), 0.0);
    }

    #[test]
    fn routing_moves_output_queue_into_neighbor_input() {
        let (topo, chains) = fixture();
        let dims = chains.dims(2);
        let mut state = QueueState::zeros(dims);
        state.set_output(0, 1, 0, 6.0);
        let link = topo.link_index(0, 1).unwrap();
        let d = Decision {
            placement: vec![0, 1],
            processing: vec![],
            routing: vec![Routing {
                link,
                source: QueueKind::Output,
                chain: 0,
                vnf: 1,
                rate: 2.5,
            }],
        };
        let next = step_queues(&state, &d, &sample(dims), &topo, &chains).unwrap();
        assert_eq!(next.output_at(0, 1, 0), 3.5);
        assert_eq!(next.input_at(0, 1, 1), 2.5);
        assert_eq!(total_backlog(&next), 6.0);
    }

    #[test]
    fn infeasible_decision_is_rejected_before_stepping() {
        let (topo, chains) = fixture();
        let dims = chains.dims(2);
        let d = Decision {
            placement: vec![0, 0],
            processing: vec![Processing {
                vm: 0,
                chain: 0,
                vnf: 1,
                rate: 1.0,
            }],
            routing: vec![],
        };
        let err =
            step_queues(&QueueState::zeros(dims), &d, &sample(dims), &topo, &chains).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn feasibility_reports() {
        let (topo, chains) = fixture();
        assert!(feasibility_check(&Decision::idle(vec![1, 0]), &topo, &chains).is_ok());

        let link = topo.link_index(0, 1).unwrap();
        let shared = Decision {
            placement: vec![0, 0],
            processing: vec![],
            routing: vec![
                Routing {
                    link,
                    source: QueueKind::Input,
                    chain: 0,
                    vnf: 0,
                    rate: 1.0,
                },
                Routing {
                    link,
                    source: QueueKind::Input,
                    chain: 0,
                    vnf: 1,
                    rate: 1.0,
                },
            ],
        };
        let v = feasibility_check(&shared, &topo, &chains).unwrap_err();
        assert_eq!(
            v,
            vec![Violation::LinkShared {
                link,
                from: 0,
                to: 1,
                active: 2
            }]
        );

        let over = Decision {
            placement: vec![0, 0],
            processing: vec![Processing {
                vm: 1,
                chain: 0,
                vnf: 0,
                rate: 25.0,
            }],
            routing: vec![],
        };
        let v = feasibility_check(&over, &topo, &chains).unwrap_err();
        assert_eq!(
            v,
            vec![Violation::ProcessorOverCapacity {
                vm: 1,
                rate: 25.0,
                cap: 20.0
            }]
        );

        let no_q = Decision {
            placement: vec![0, 0],
            processing: vec![],
            routing: vec![Routing {
                link,
                source: QueueKind::Output,
                chain: 0,
                vnf: 0,
                rate: 1.0,
            }],
        };
        assert!(matches!(
            feasibility_check(&no_q, &topo, &chains).unwrap_err()[0],
            Violation::NoSuchQueue { .. }
        ));

        let bad_placement = Decision::idle(vec![0, 7, 0]);
        assert_eq!(
            feasibility_check(&bad_placement, &topo, &chains)
                .unwrap_err()
                .len(),
            2
        );
    }

    #[test]
    fn cost_examples() {
        let (topo, chains) = fixture();
        let dims = chains.dims(2);
        let mut s = sample(dims);
        assert_eq!(slot_cost(&Decision::idle(vec![0, 0]), &s), 0.0);

        s.alpha = vec![0.5, 1.0];
        let proc = Decision {
            placement: vec![0, 0],
            processing: vec![Processing {
                vm: 0,
                chain: 0,
                vnf: 0,
                rate: 2.0,
            }],
            routing: vec![],
        };
        assert_eq!(slot_cost(&proc, &s), 2.0);

        let (ab, ba) = (
            topo.link_index(0, 1).unwrap(),
            topo.link_index(1, 0).unwrap(),
        );
        s.beta[ab] = 0.3;
        s.beta[ba] = 0.1;
        let route = Decision {
            placement: vec![0, 0],
            processing: vec![],
            routing: vec![
                Routing {
                    link: ab,
                    source: QueueKind::Input,
                    chain: 0,
                    vnf: 0,
                    rate: 1.0,
                },
                Routing {
                    link: ba,
                    source: QueueKind::Output,
                    chain: 0,
                    vnf: 1,
                    rate: 2.0,
                },
            ],
        };
        assert!((slot_cost(&route, &s) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn backlog_sums_both_families() {
        let (_, chains) = fixture();
        let dims = chains.dims(2);
        let mut state = QueueState::zeros(dims);
        assert_eq!(total_backlog(&state), 0.0);
        state.set_input(0, 0, 0, 1.0);
        state.set_input(0, 1, 1, 2.0);
        state.set_output(0, 1, 0, 3.0);
        assert_eq!(total_backlog(&state), 6.0);
    }

    #[test]
    fn strict_mode_caps_rates_at_source() {
        let (topo, chains) = fixture();
        let dims = chains.dims(2);
        let mut state = QueueState::zeros(dims);
        state.set_input(0, 0, 0, 2.0);
        let d = Decision {
            placement: vec![0, 0],
            processing: vec![Processing {
                vm: 0,
                chain: 0,
                vnf: 0,
                rate: 5.0,
            }],
            routing: vec![],
        };
        let capped = d.capped_to_backlog(&state, &topo);
        assert_eq!(capped.processing[0].rate, 2.0);
        assert!(!Flows::of(&capped, &topo, &chains).truncates(&state));
    }
}
