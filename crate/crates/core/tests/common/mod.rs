//! Reference implementations the library is checked against. Each one is
//! written from the model's definitions, not from the library code paths.

#![allow(dead_code)]

use chainsim::dual::{Candidate, Resource};
use chainsim::dynamics::{Decision, QueueKind, QueueState};
use chainsim::model::{ChainSet, StateSample, Topology};

/// Minimizer of `price r^2 - delta r` on the grid `0, step, 2 step, ..., cap`.
pub fn grid_argmin(delta: f64, price: f64, cap: f64, step: f64) -> f64 {
    let n = (cap / step).floor() as usize;
    let mut best = (0.0, 0.0);
    for j in 0..=n {
        let r = (j as f64 * step).min(cap);
        let v = price * r * r - delta * r;
        if v < best.1 {
            best = (r, v);
        }
    }
    let v = price * cap * cap - delta * cap;
    if v < best.1 {
        best = (cap, v);
    }
    best.0
}

/// Queue identity of a candidate.
pub fn queue_key(c: &Candidate) -> (QueueKind, usize, usize) {
    (c.queue, c.chain, c.vnf)
}

/// Best total objective over all one-to-one selections of queues and
/// resources, by enumeration. The empty selection scores zero.
pub fn exhaustive_best(cands: &[Candidate]) -> f64 {
    fn go(
        cands: &[Candidate],
        i: usize,
        queues: &mut Vec<(QueueKind, usize, usize)>,
        resources: &mut Vec<Resource>,
        acc: f64,
        best: &mut f64,
    ) {
        if i == cands.len() {
            *best = best.min(acc);
            return;
        }
        go(cands, i + 1, queues, resources, acc, best);
        let c = &cands[i];
        let q = queue_key(c);
        if !queues.contains(&q) && !resources.contains(&c.resource) {
            queues.push(q);
            resources.push(c.resource);
            go(cands, i + 1, queues, resources, acc + c.objective, best);
            queues.pop();
            resources.pop();
        }
    }
    let mut best = 0.0;
    go(cands, 0, &mut Vec::new(), &mut Vec::new(), 0.0, &mut best);
    best
}

/// Whether `chosen` uses every queue and every resource at most once.
pub fn one_to_one(chosen: &[Candidate]) -> bool {
    for (i, a) in chosen.iter().enumerate() {
        for b in &chosen[i + 1..] {
            if queue_key(a) == queue_key(b) || a.resource == b.resource {
                return false;
            }
        }
    }
    true
}

/// Unprojected queue update: backlog plus every inflow minus every outflow,
/// accumulated action by action from the decision.
pub fn unprojected_update(
    state: &QueueState,
    d: &Decision,
    s: &StateSample,
    topo: &Topology,
    chains: &ChainSet,
) -> (Vec<f64>, Vec<f64>) {
    let dims = state.dims();
    let mut input = state.input.clone();
    let mut output = state.output.clone();
    for (i, r) in s.arrivals.iter().enumerate() {
        input[i] += r;
    }
    for p in &d.processing {
        if d.placement[p.vm] != p.vnf {
            continue;
        }
        input[dims.index(p.chain, p.vnf, p.vm)] -= p.rate;
        let vnfs = chains.get(p.chain).unwrap().vnfs();
        let pos = vnfs.iter().position(|&k| k == p.vnf).unwrap();
        if let Some(&next) = vnfs.get(pos + 1) {
            output[dims.index(p.chain, next, p.vm)] += p.rate;
        }
    }
    for r in &d.routing {
        let link = &topo.links()[r.link];
        let src = dims.index(r.chain, r.vnf, link.from);
        match r.source {
            QueueKind::Input => input[src] -= r.rate,
            QueueKind::Output => output[src] -= r.rate,
        }
        input[dims.index(r.chain, r.vnf, link.to)] += r.rate;
    }
    (input, output)
}

/// Rate processed at the last VNF of its chain, i.e. leaving the system.
pub fn completions(d: &Decision, chains: &ChainSet) -> f64 {
    d.processing
        .iter()
        .filter(|p| d.placement[p.vm] == p.vnf)
        .filter(|p| chains.get(p.chain).unwrap().vnfs().last() == Some(&p.vnf))
        .map(|p| p.rate)
        .sum()
}

/// Relative difference with an absolute floor of one.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
