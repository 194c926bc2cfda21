//! The three policies as per-slot decision functions.
//!
//! * Alg. 1 decides on the virtual-queue view `epsilon * (Q, q)`.
//! * Alg. 2 decides on the effective multiplier
//!   `gamma = lambda_hat + epsilon * (Q, q) - theta`, and runs a second
//!   "virtual" pass on `lambda_hat` alone to learn it by dual ascent.
//! * Heu is Alg. 1 with every price replaced by its distribution mean.

use crate::dual::{self, MultiplierView, PriceView};
use crate::dynamics::{Decision, Flows, QueueState};
use crate::error::{Error, Result};
use crate::model::{ChainSet, Distributions, SimConfig, StateSample, Topology};

/// Placement frozen for one window of `t_delta` slots.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacementHold {
    pub placement: Vec<usize>,
    pub from: usize,
    /// First slot that is no longer covered.
    pub valid_until: usize,
}

impl PlacementHold {
    pub fn covers(&self, t: usize) -> bool {
        (self.from..self.valid_until).contains(&t)
    }
}

/// Empirical duals of the learn-and-adapt policy.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnState {
    pub lambda_hat: MultiplierView,
    /// Next update index; the step size is `1 / sqrt(t)`.
    pub t: u64,
}

impl LearnState {
    pub fn new(dims: crate::model::Dims) -> Self {
        Self {
            lambda_hat: MultiplierView::zeros(dims),
            t: 1,
        }
    }

    pub fn step_size(&self) -> f64 {
        1.0 / (self.t as f64).sqrt()
    }
}

/// Distribution means standing in for realized prices (Heu).
#[derive(Clone, Debug, PartialEq)]
pub struct MeanPrices {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl MeanPrices {
    pub fn new(dists: &Distributions, topo: &Topology) -> Self {
        let mean = dists.prices.mean();
        Self {
            alpha: vec![mean; topo.n_vms()],
            beta: topo
                .links()
                .iter()
                .map(|l| {
                    if l.zero_price {
                        dists.price_floor
                    } else {
                        mean
                    }
                })
                .collect(),
        }
    }

    pub fn view(&self) -> PriceView<'_> {
        PriceView {
            alpha: &self.alpha,
            beta: &self.beta,
        }
    }
}

fn placement_for(
    hold: Option<&PlacementHold>,
    t: usize,
    view: &MultiplierView,
    prices: PriceView<'_>,
    topo: &Topology,
    chains: &ChainSet,
    epsilon: f64,
) -> Vec<usize> {
    match hold {
        Some(h) if h.covers(t) => h.placement.clone(),
        _ => dual::select_placement(view, prices, topo, chains, epsilon),
    }
}

/// Runs placement on the window-anchor snapshot and freezes it for
/// `t_delta` slots. `tau` must sit on the window grid.
pub fn twoscale_place(
    view: &MultiplierView,
    prices: PriceView<'_>,
    topo: &Topology,
    chains: &ChainSet,
    epsilon: f64,
    tau: usize,
    t_delta: usize,
) -> Result<PlacementHold> {
    if t_delta == 0 || tau % t_delta != 0 {
        return Err(Error::Contract(format!(
            "placement refresh at slot {tau} is off the {t_delta}-slot grid"
        )));
    }
    Ok(PlacementHold {
        placement: dual::select_placement(view, prices, topo, chains, epsilon),
        from: tau,
        valid_until: tau + t_delta,
    })
}

/// Alg. 1 at slot `t`.
pub fn alg1_decide(
    state: &QueueState,
    s: &StateSample,
    topo: &Topology,
    chains: &ChainSet,
    cfg: &SimConfig,
    hold: Option<&PlacementHold>,
    t: usize,
) -> Decision {
    let view = MultiplierView::from_backlog(state, cfg.epsilon);
    let prices = PriceView::from(s);
    let placement = placement_for(hold, t, &view, prices, topo, chains, cfg.epsilon);
    dual::decide(&view, prices, topo, chains, cfg.epsilon, placement)
}

/// Heu at slot `t`: Alg. 1 on mean prices.
#[allow(clippy::too_many_arguments)]
pub fn heu_decide(
    state: &QueueState,
    means: &MeanPrices,
    topo: &Topology,
    chains: &ChainSet,
    cfg: &SimConfig,
    hold: Option<&PlacementHold>,
    t: usize,
) -> Decision {
    let view = MultiplierView::from_backlog(state, cfg.epsilon);
    let prices = means.view();
    let placement = placement_for(hold, t, &view, prices, topo, chains, cfg.epsilon);
    dual::decide(&view, prices, topo, chains, cfg.epsilon, placement)
}

/// `gamma = lambda_hat + epsilon * A - theta` on every existing queue.
/// Entries may be negative.
pub fn effective_multiplier(
    learn: &LearnState,
    state: &QueueState,
    chains: &ChainSet,
    epsilon: f64,
    theta: f64,
) -> MultiplierView {
    let dims = state.dims();
    let mut gamma = MultiplierView::zeros(dims);
    for c in chains.chains() {
        let i = c.id();
        for &k in c.vnfs() {
            let has_output = chains.has_output_queue(i, k);
            for n in 0..dims.vms {
                let idx = dims.index(i, k, n);
                gamma.input[idx] = learn.lambda_hat.input[idx] + epsilon * state.input[idx] - theta;
                if has_output {
                    gamma.output[idx] =
                        learn.lambda_hat.output[idx] + epsilon * state.output[idx] - theta;
                }
            }
        }
    }
    gamma
}

/// Decisions of one Alg. 2 slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Alg2Decision {
    /// Applied to the queues.
    pub real: Decision,
    /// Drives the dual-ascent update only.
    pub virtual_: Decision,
}

/// Alg. 2 at slot `t`. The real pass uses `gamma` (placement included);
/// the virtual pass uses `lambda_hat` with its own per-slot placement.
#[allow(clippy::too_many_arguments)]
pub fn alg2_decide(
    state: &QueueState,
    learn: &LearnState,
    s: &StateSample,
    topo: &Topology,
    chains: &ChainSet,
    cfg: &SimConfig,
    hold: Option<&PlacementHold>,
    t: usize,
) -> Alg2Decision {
    let prices = PriceView::from(s);
    let gamma = effective_multiplier(learn, state, chains, cfg.epsilon, cfg.theta_value());
    let placement = placement_for(hold, t, &gamma, prices, topo, chains, cfg.epsilon);
    let real = dual::decide(&gamma, prices, topo, chains, cfg.epsilon, placement);

    let lam = &learn.lambda_hat;
    let virtual_placement = dual::select_placement(lam, prices, topo, chains, cfg.epsilon);
    let virtual_ = dual::decide(lam, prices, topo, chains, cfg.epsilon, virtual_placement);
    Alg2Decision { real, virtual_ }
}

/// Projected dual ascent `lambda_hat <- [lambda_hat + eta(t) g]^+` with the
/// residuals of the virtual decision, arrivals included.
pub fn alg2_update(
    learn: &LearnState,
    virtual_: &Decision,
    s: &StateSample,
    topo: &Topology,
    chains: &ChainSet,
) -> LearnState {
    let eta = learn.step_size();
    let (g1, g2) = Flows::of(virtual_, topo, chains).residuals(&s.arrivals);
    let dims = learn.lambda_hat.dims();
    let mut next = MultiplierView::zeros(dims);
    for c in chains.chains() {
        let i = c.id();
        for &k in c.vnfs() {
            let has_output = chains.has_output_queue(i, k);
            for n in 0..dims.vms {
                let idx = dims.index(i, k, n);
                next.input[idx] = (learn.lambda_hat.input[idx] + eta * g1[idx]).max(0.0);
                if has_output {
                    next.output[idx] = (learn.lambda_hat.output[idx] + eta * g2[idx]).max(0.0);
                }
            }
        }
    }
    LearnState {
        lambda_hat: next,
        t: learn.t + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{feasibility_check, Processing};
    use crate::model::{Policy, UniformRange};

    fn fixture() -> (Topology, ChainSet, SimConfig) {
        let topo =
            Topology::complete(vec![15.0, 12.0, 18.0], |a, b| 10.0 + (a + 2 * b) as f64).unwrap();
        let chains = ChainSet::from_lists(&[vec![0, 1, 2], vec![2, 0, 1]], None).unwrap();
        (topo, chains, SimConfig::default())
    }

    fn prices(topo: &Topology, chains: &ChainSet) -> StateSample {
        let dims = chains.dims(topo.n_vms());
        let mut s = StateSample::zeros(dims, topo.links().len());
        s.alpha = vec![0.3, 0.6, 0.9];
        s.beta = (0..topo.links().len())
            .map(|l| 0.1 + 0.1 * l as f64)
            .collect();
        s
    }

    #[test]
    fn empty_queues_idle() {
        let (topo, chains, cfg) = fixture();
        let s = prices(&topo, &chains);
        let d = alg1_decide(
            &QueueState::zeros(chains.dims(3)),
            &s,
            &topo,
            &chains,
            &cfg,
            None,
            0,
        );
        assert!(d.is_idle());
        assert!(feasibility_check(&d, &topo, &chains).is_ok());
        let h = heu_decide(
            &QueueState::zeros(chains.dims(3)),
            &MeanPrices::new(&cfg.dists, &topo),
            &topo,
            &chains,
            &cfg,
            None,
            0,
        );
        assert!(h.is_idle());
    }

    #[test]
    fn single_loaded_queue_processes_at_closed_form_rate() {
        let (topo, chains, cfg) = fixture();
        let s = prices(&topo, &chains);
        let mut state = QueueState::zeros(chains.dims(3));
        // chain 0, f3 (terminal) at VM 2, equal backlog everywhere
        for n in 0..3 {
            state.set_input(0, 2, n, 40.0);
        }
        let d = alg1_decide(&state, &s, &topo, &chains, &cfg, None, 0);
        assert_eq!(d.placement, vec![2, 2, 2]);
        let expected = dual::opt_rate(cfg.epsilon * 40.0, s.alpha[2], 18.0).unwrap();
        assert!(d.routing.is_empty());
        assert!(d.processing.contains(&Processing {
            vm: 2,
            chain: 0,
            vnf: 2,
            rate: expected
        }));
    }

    #[test]
    fn hold_overrides_argmin_within_window() {
        let (topo, chains, cfg) = fixture();
        let s = prices(&topo, &chains);
        let mut state = QueueState::zeros(chains.dims(3));
        state.set_input(0, 0, 0, 50.0);
        let view = MultiplierView::from_backlog(&state, cfg.epsilon);
        let hold = twoscale_place(&view, (&s).into(), &topo, &chains, cfg.epsilon, 5, 5).unwrap();
        assert_eq!(hold.placement[0], 0);

        // load flips to f2 inside the window
        let mut flipped = QueueState::zeros(chains.dims(3));
        flipped.set_input(0, 1, 0, 500.0);
        for t in 5..10 {
            let d = alg1_decide(&flipped, &s, &topo, &chains, &cfg, Some(&hold), t);
            assert_eq!(d.placement, hold.placement);
        }
        let free = alg1_decide(&flipped, &s, &topo, &chains, &cfg, Some(&hold), 10);
        assert_eq!(free.placement[0], 1);
    }

    #[test]
    fn off_grid_refresh_is_rejected() {
        let (topo, chains, cfg) = fixture();
        let s = prices(&topo, &chains);
        let view = MultiplierView::zeros(chains.dims(3));
        let err =
            twoscale_place(&view, (&s).into(), &topo, &chains, cfg.epsilon, 7, 5).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        assert!(twoscale_place(&view, (&s).into(), &topo, &chains, cfg.epsilon, 7, 1).is_ok());
    }

    #[test]
    fn effective_multiplier_examples() {
        let (_, chains, _) = fixture();
        let dims = chains.dims(3);
        let mut state = QueueState::zeros(dims);
        state.set_input(0, 1, 2, 7.0);
        let learn = LearnState::new(dims);
        let gamma = effective_multiplier(&learn, &state, &chains, 0.1, 0.0);
        assert_eq!(gamma, MultiplierView::from_backlog(&state, 0.1));

        let mut learn = LearnState::new(dims);
        learn.lambda_hat.input[dims.index(0, 1, 2)] = 3.0;
        state.set_input(0, 1, 2, 10.0);
        let gamma = effective_multiplier(&learn, &state, &chains, 0.1, 0.5);
        assert_eq!(gamma.input_at(0, 1, 2), 3.5);
        assert_eq!(gamma.input_at(0, 0, 0), -0.5);
        // entry functions have no output queue, so no bias there
        assert_eq!(gamma.output_at(0, 0, 0), 0.0);
    }

    #[test]
    fn alg2_without_learning_matches_alg1() {
        let (topo, chains, cfg) = fixture();
        let s = prices(&topo, &chains);
        let mut state = QueueState::zeros(chains.dims(3));
        state.set_input(0, 0, 0, 30.0);
        state.set_output(1, 0, 1, 12.0);
        state.set_input(1, 2, 2, 44.0);
        let cfg = SimConfig {
            theta: Some(0.0),
            policy: Policy::Alg2,
            ..cfg
        };
        let learn = LearnState::new(chains.dims(3));
        let a2 = alg2_decide(&state, &learn, &s, &topo, &chains, &cfg, None, 0);
        let a1 = alg1_decide(&state, &s, &topo, &chains, &cfg, None, 0);
        assert_eq!(a2.real, a1);
        assert!(a2.virtual_.is_idle());
    }

    #[test]
    fn large_theta_suppresses_all_activity() {
        let (topo, chains, cfg) = fixture();
        let s = prices(&topo, &chains);
        let cfg = SimConfig {
            theta: Some(100.0),
            ..cfg
        };
        let learn = LearnState::new(chains.dims(3));
        let d = alg2_decide(
            &QueueState::zeros(chains.dims(3)),
            &learn,
            &s,
            &topo,
            &chains,
            &cfg,
            None,
            0,
        );
        assert!(d.real.is_idle());
    }

    #[test]
    fn virtual_pass_ignores_backlog() {
        let (topo, chains, cfg) = fixture();
        let s = prices(&topo, &chains);
        let dims = chains.dims(3);
        let mut learn = LearnState::new(dims);
        learn.lambda_hat.input[dims.index(0, 0, 1)] = 4.0;
        learn.lambda_hat.output[dims.index(1, 1, 0)] = 2.0;
        let mut a = QueueState::zeros(dims);
        a.set_input(0, 0, 0, 100.0);
        let mut b = QueueState::zeros(dims);
        b.set_input(1, 2, 2, 55.0);
        b.set_output(0, 2, 1, 9.0);
        let da = alg2_decide(&a, &learn, &s, &topo, &chains, &cfg, None, 0);
        let db = alg2_decide(&b, &learn, &s, &topo, &chains, &cfg, None, 0);
        assert_eq!(da.virtual_, db.virtual_);
        assert_ne!(da.real, db.real);
    }

    #[test]
    fn dual_ascent_examples() {
        let (topo, chains, _) = fixture();
        let dims = chains.dims(3);
        let mut s = StateSample::zeros(dims, topo.links().len());
        let learn = LearnState::new(dims);
        let idle = Decision::idle(vec![0; 3]);

        let same = alg2_update(&learn, &idle, &s, &topo, &chains);
        assert_eq!(same.lambda_hat, learn.lambda_hat);
        assert_eq!(same.t, 2);

        s.arrivals[dims.index(0, 0, 1)] = 4.0;
        let up = alg2_update(&learn, &idle, &s, &topo, &chains);
        assert_eq!(up.lambda_hat.input_at(0, 0, 1), 4.0);

        // outflow without backlog pushes below zero and is projected back
        let mut learn = LearnState::new(dims);
        learn.lambda_hat.input[dims.index(0, 0, 0)] = 1.0;
        let drain = Decision {
            placement: vec![0; 3],
            processing: vec![Processing {
                vm: 0,
                chain: 0,
                vnf: 0,
                rate: 5.0,
            }],
            routing: vec![],
        };
        let next = alg2_update(
            &learn,
            &drain,
            &StateSample::zeros(dims, topo.links().len()),
            &topo,
            &chains,
        );
        assert_eq!(next.lambda_hat.input_at(0, 0, 0), 0.0);
        assert_eq!(next.lambda_hat.output_at(0, 1, 0), 5.0);
    }

    #[test]
    fn heu_ignores_price_differences() {
        // two equal-backlog links, one cheap and one expensive
        let topo = Topology::complete(vec![10.0; 3], |_, _| 10.0).unwrap();
        let chains = ChainSet::from_lists(&[vec![0, 1]], None).unwrap();
        let dims = chains.dims(3);
        let cfg = SimConfig {
            dists: Distributions {
                prices: UniformRange { lo: 0.1, hi: 1.0 },
                ..Distributions::default()
            },
            ..SimConfig::default()
        };
        let mut state = QueueState::zeros(dims);
        state.set_output(0, 1, 0, 20.0);
        let mut s = StateSample::zeros(dims, topo.links().len());
        let to1 = topo.link_index(0, 1).unwrap();
        let to2 = topo.link_index(0, 2).unwrap();
        s.beta[to1] = 1.0;
        s.beta[to2] = 0.1;

        let a1 = alg1_decide(&state, &s, &topo, &chains, &cfg, None, 0);
        let route = a1
            .routing
            .iter()
            .find(|r| r.chain == 0 && r.vnf == 1)
            .unwrap();
        assert_eq!(route.link, to2);

        let heu = heu_decide(
            &state,
            &MeanPrices::new(&cfg.dists, &topo),
            &topo,
            &chains,
            &cfg,
            None,
            0,
        );
        let route = heu
            .routing
            .iter()
            .find(|r| r.chain == 0 && r.vnf == 1)
            .unwrap();
        assert_eq!(route.link, to1, "tie broken toward the lower destination");
    }
}
