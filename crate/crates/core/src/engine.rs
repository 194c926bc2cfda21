//! One simulation run: sample, decide, step, record.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algorithms::{self, LearnState, MeanPrices, PlacementHold};
use crate::dual::{MultiplierView, PriceView};
use crate::dynamics::{self, Decision, Flows, QueueState};
use crate::error::{Error, Result};
use crate::model::{
    self, ChainSet, DrainMode, PlacementMode, Policy, SimConfig, StateSample, Topology,
};

/// RNG stream carrying per-slot states; stream 0 is reserved for setup.
const STATE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SlotRecord {
    pub t: usize,
    pub cost: f64,
    /// Mean of `cost` over slots `0..=t`.
    pub avg_cost: f64,
    /// Total backlog after the slot's update.
    pub backlog: f64,
    pub placement: Vec<usize>,
    /// Some `max{., 0}` in the queue update clipped.
    pub truncated: bool,
    pub processing: f64,
    pub routing: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub policy: Policy,
    pub epsilon: f64,
    pub seed: u64,
    pub t_delta: usize,
    pub rows: Vec<SlotRecord>,
    /// Backlog at the start of every slot, plus the final state.
    pub snapshots: Vec<QueueState>,
    /// Slots where a placement window opened.
    pub anchors: Vec<usize>,
    pub learn: Option<LearnState>,
}

impl Trace {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Everything that happened in one slot, for replay checks.
#[derive(Clone, Debug)]
pub struct SlotOutcome {
    pub sample: StateSample,
    pub decision: Decision,
    pub virtual_: Option<Decision>,
    pub record: SlotRecord,
}

/// A run in progress.
#[derive(Clone)]
pub struct Simulation {
    cfg: SimConfig,
    topo: Topology,
    chains: ChainSet,
    rng: ChaCha8Rng,
    state: QueueState,
    learn: Option<LearnState>,
    hold: Option<PlacementHold>,
    means: MeanPrices,
    t: usize,
    cost_sum: f64,
}

impl Simulation {
    pub fn new(cfg: SimConfig, topo: Topology, chains: ChainSet) -> Result<Self> {
        cfg.validate()?;
        let dims = chains.dims(topo.n_vms());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STATE_STREAM);
        let learn = (cfg.policy == Policy::Alg2).then(|| LearnState::new(dims));
        let means = MeanPrices::new(&cfg.dists, &topo);
        Ok(Self {
            cfg,
            topo,
            chains,
            rng,
            state: QueueState::zeros(dims),
            learn,
            hold: None,
            means,
            t: 0,
            cost_sum: 0.0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn chains(&self) -> &ChainSet {
        &self.chains
    }

    pub fn state(&self) -> &QueueState {
        &self.state
    }

    pub fn learn(&self) -> Option<&LearnState> {
        self.learn.as_ref()
    }

    pub fn hold(&self) -> Option<&PlacementHold> {
        self.hold.as_ref()
    }

    pub fn slot(&self) -> usize {
        self.t
    }

    pub fn mean_prices(&self) -> &MeanPrices {
        &self.means
    }

    /// The multiplier view and prices this policy places on.
    fn placement_inputs<'a>(&'a self, s: &'a StateSample) -> (MultiplierView, PriceView<'a>) {
        let eps = self.cfg.epsilon;
        match self.cfg.policy {
            Policy::Alg1 => (MultiplierView::from_backlog(&self.state, eps), s.into()),
            Policy::Heu => (
                MultiplierView::from_backlog(&self.state, eps),
                self.means.view(),
            ),
            Policy::Alg2 => {
                let learn = self.learn.as_ref().expect("alg2 carries a learn state");
                let gamma = algorithms::effective_multiplier(
                    learn,
                    &self.state,
                    &self.chains,
                    eps,
                    self.cfg.theta_value(),
                );
                (gamma, s.into())
            }
        }
    }

    /// Policy output for the current snapshot without advancing anything.
    pub fn decide(
        &self,
        s: &StateSample,
        hold: Option<&PlacementHold>,
    ) -> (Decision, Option<Decision>) {
        let (topo, chains, cfg, t) = (&self.topo, &self.chains, &self.cfg, self.t);
        match cfg.policy {
            Policy::Alg1 => (
                algorithms::alg1_decide(&self.state, s, topo, chains, cfg, hold, t),
                None,
            ),
            Policy::Heu => (
                algorithms::heu_decide(&self.state, &self.means, topo, chains, cfg, hold, t),
                None,
            ),
            Policy::Alg2 => {
                let learn = self.learn.as_ref().expect("alg2 carries a learn state");
                let out =
                    algorithms::alg2_decide(&self.state, learn, s, topo, chains, cfg, hold, t);
                (out.real, Some(out.virtual_))
            }
        }
    }

    /// Placement window refresh due at the current slot, if any.
    pub fn refresh_hold(&self, s: &StateSample) -> Result<Option<PlacementHold>> {
        if self.cfg.placement != PlacementMode::TwoTimescale || self.t % self.cfg.t_delta != 0 {
            return Ok(None);
        }
        let (view, prices) = self.placement_inputs(s);
        algorithms::twoscale_place(
            &view,
            prices,
            &self.topo,
            &self.chains,
            self.cfg.epsilon,
            self.t,
            self.cfg.t_delta,
        )
        .map(Some)
    }

    pub fn step(&mut self) -> Result<SlotOutcome> {
        let s = model::sample_state(&mut self.rng, &self.cfg.dists, &self.topo, &self.chains);
        if let Some(hold) = self.refresh_hold(&s)? {
            self.hold = Some(hold);
        }
        let hold = match self.cfg.placement {
            PlacementMode::TwoTimescale => self.hold.as_ref(),
            PlacementMode::PerSlot => None,
        };
        let (mut decision, virtual_) = self.decide(&s, hold);
        if self.cfg.drain == DrainMode::Strict {
            decision = decision.capped_to_backlog(&self.state, &self.topo);
        }
        if let Err(v) = dynamics::feasibility_check(&decision, &self.topo, &self.chains) {
            return Err(Error::Invariant(format!(
                "slot {}: policy {} produced an infeasible decision: {}",
                self.t,
                self.cfg.policy,
                v.iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; ")
            )));
        }

        let flows = Flows::of(&decision, &self.topo, &self.chains);
        let truncated = flows.truncates(&self.state);
        let next = dynamics::apply_flows(&self.state, &flows, &s);
        let cost = dynamics::slot_cost(&decision, &s);

        if let (Some(learn), Some(virt)) = (self.learn.as_mut(), virtual_.as_ref()) {
            if !self.cfg.freeze_learning {
                *learn = algorithms::alg2_update(learn, virt, &s, &self.topo, &self.chains);
            }
        }

        self.cost_sum += cost;
        let record = SlotRecord {
            t: self.t,
            cost,
            avg_cost: self.cost_sum / (self.t + 1) as f64,
            backlog: dynamics::total_backlog(&next),
            placement: decision.placement.clone(),
            truncated,
            processing: decision.total_processing(),
            routing: decision.total_routing(),
        };
        self.state = next;
        self.t += 1;
        Ok(SlotOutcome {
            sample: s,
            decision,
            virtual_,
            record,
        })
    }
}

/// Runs `cfg.horizon` slots from empty queues.
pub fn run(cfg: &SimConfig, topo: &Topology, chains: &ChainSet) -> Result<Trace> {
    let mut sim = Simulation::new(cfg.clone(), topo.clone(), chains.clone())?;
    let mut rows = Vec::with_capacity(cfg.horizon);
    let mut snapshots = Vec::with_capacity(cfg.horizon + 1);
    let mut anchors = Vec::new();
    snapshots.push(sim.state().clone());
    for t in 0..cfg.horizon {
        if t % cfg.t_delta == 0 {
            anchors.push(t);
        }
        let out = sim.step()?;
        rows.push(out.record);
        snapshots.push(sim.state().clone());
    }
    Ok(Trace {
        policy: cfg.policy,
        epsilon: cfg.epsilon,
        seed: cfg.seed,
        t_delta: cfg.t_delta,
        rows,
        snapshots,
        anchors,
        learn: sim.learn,
    })
}

/// Tail-window means of a trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyState {
    pub cost: f64,
    pub backlog: f64,
    /// Mean total processing rate per VM.
    pub processing: f64,
    /// Mean total routing rate per link.
    pub routing: f64,
    pub window: usize,
}

/// Means over the last `ceil(tail_fraction * T)` slots.
pub fn steady_state_stats(
    trace: &Trace,
    tail_fraction: f64,
    n_vms: usize,
    n_links: usize,
) -> Result<SteadyState> {
    if trace.rows.is_empty() {
        return Err(Error::Contract(
            "steady-state stats of an empty trace".into(),
        ));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::Contract(format!(
            "tail_fraction {tail_fraction} outside (0, 1]"
        )));
    }
    let len = trace.rows.len();
    let window = ((tail_fraction * len as f64).ceil() as usize).clamp(1, len);
    let tail = &trace.rows[len - window..];
    let mean = |f: fn(&SlotRecord) -> f64| tail.iter().map(f).sum::<f64>() / window as f64;
    Ok(SteadyState {
        cost: mean(|r| r.cost),
        backlog: mean(|r| r.backlog),
        processing: mean(|r| r.processing) / n_vms.max(1) as f64,
        routing: mean(|r| r.routing) / n_links.max(1) as f64,
        window,
    })
}
