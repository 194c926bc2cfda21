//! Performance-bound constants as computable quantities, plus trace-level
//! checks of the inequalities they appear in.

use crate::error::{Error, Result};
use crate::model::{ChainSet, SimConfig, Topology};

/// Scalar summary of a platform that every constant is built from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlatformExtremes {
    /// Largest in- or out-degree.
    pub max_degree: f64,
    pub max_link_capacity: f64,
    pub max_processing_capacity: f64,
    pub max_arrival: f64,
}

impl PlatformExtremes {
    pub fn of(topo: &Topology, max_arrival: f64) -> Self {
        Self {
            max_degree: topo.max_degree() as f64,
            max_link_capacity: topo.max_link_capacity(),
            max_processing_capacity: topo.max_processing_capacity(),
            max_arrival,
        }
    }

    fn nl(&self) -> f64 {
        self.max_degree * self.max_link_capacity
    }
}

/// Drift constant `B = 9/2 (N l)^2 + 3/2 (R^2 + p^2)`.
pub fn constant_b(x: &PlatformExtremes) -> f64 {
    let nl = x.nl();
    4.5 * nl * nl
        + 1.5
            * (x.max_arrival * x.max_arrival
                + x.max_processing_capacity * x.max_processing_capacity)
}

/// The two halves of `B`: the input-queue and output-queue drift bounds.
pub fn constant_b_parts(x: &PlatformExtremes) -> (f64, f64) {
    let nl = x.nl();
    let (r, p) = (x.max_arrival, x.max_processing_capacity);
    let b1 = (8.0 * nl * nl + 3.0 * r * r + 2.0 * p * p) / 2.0;
    let b2 = (nl * nl + p * p) / 2.0;
    (b1, b2)
}

/// Per-slot change bounds `(omega_Q, omega_q)` of the two queue families.
pub fn omega_constants(x: &PlatformExtremes) -> (f64, f64) {
    let nl = x.nl();
    let omega_q_big = (nl + x.max_processing_capacity).max(2.0 * nl + x.max_arrival);
    let omega_q_small = nl.max(x.max_processing_capacity);
    (omega_q_big, omega_q_small)
}

/// Inputs of the two-timescale loss constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParams {
    pub epsilon: f64,
    pub t_delta: f64,
    pub n_vms: f64,
    pub n_chains: f64,
    pub n_vnfs: f64,
    pub alpha_max: f64,
    pub beta_max: f64,
    pub omega_big: f64,
    pub omega_small: f64,
}

/// Two-timescale placement loss constant `C`, leading `epsilon` included:
/// `eps T^2 N^2 |I| K [ (1/(2a) + 1/(2b)) (wQ + wq)^2 + (2/b) wQ^2 ]`.
pub fn constant_c(p: &LossParams) -> f64 {
    let w = p.omega_big + p.omega_small;
    let bracket = (1.0 / (2.0 * p.alpha_max) + 1.0 / (2.0 * p.beta_max)) * w * w
        + (2.0 / p.beta_max) * p.omega_big * p.omega_big;
    p.epsilon * p.t_delta * p.t_delta * p.n_vms * p.n_vms * p.n_chains * p.n_vnfs * bracket
}

/// All constants for one configured platform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub extremes: PlatformExtremes,
    pub b: f64,
    pub omega_big: f64,
    pub omega_small: f64,
    pub c: f64,
}

impl Constants {
    pub fn compute(cfg: &SimConfig, topo: &Topology, chains: &ChainSet) -> Self {
        let extremes = PlatformExtremes::of(topo, cfg.dists.arrival_max(chains.len()));
        let (omega_big, omega_small) = omega_constants(&extremes);
        let beta_max = if topo.links().iter().any(|l| !l.zero_price) {
            cfg.dists.prices.hi
        } else {
            cfg.dists.price_floor
        };
        let c = constant_c(&LossParams {
            epsilon: cfg.epsilon,
            t_delta: cfg.t_delta as f64,
            n_vms: topo.n_vms() as f64,
            n_chains: chains.len() as f64,
            n_vnfs: chains.n_vnfs() as f64,
            alpha_max: cfg.dists.prices.hi,
            beta_max,
            omega_big,
            omega_small,
        });
        Self {
            extremes,
            b: constant_b(&extremes),
            omega_big,
            omega_small,
            c,
        }
    }
}

/// Outcome of checking one inequality along a trace.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    /// Right-hand side of the inequality.
    pub bound: f64,
    /// `bound - observed` per checked slot.
    pub slack: Vec<f64>,
    pub violations: usize,
    /// Largest `observed / bound`; 0 when the bound is 0 and nothing moved.
    pub max_ratio: f64,
}

impl BoundReport {
    fn from_observations(
        name: &'static str,
        bound: f64,
        observed: impl Iterator<Item = f64>,
    ) -> Self {
        let mut slack = Vec::new();
        let mut violations = 0;
        let mut max_ratio: f64 = 0.0;
        for obs in observed {
            slack.push(bound - obs);
            if obs > bound {
                violations += 1;
            }
            let ratio = if bound > 0.0 {
                obs / bound
            } else if obs > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            max_ratio = max_ratio.max(ratio);
        }
        Self {
            name,
            bound,
            slack,
            violations,
            max_ratio,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `|Q(t) - Q(tau)| <= T_delta omega_Q` and the `q` analogue for
/// every slot of every placement window, entrywise.
///
/// `snapshots[t]` is the backlog at the start of slot `t`; windows start at
/// multiples of `t_delta`.
pub fn verify_lemma1(
    snapshots: &[crate::dynamics::QueueState],
    t_delta: usize,
    omega_big: f64,
    omega_small: f64,
) -> Result<(BoundReport, BoundReport)> {
    if t_delta == 0 {
        return Err(Error::Parameter("t_delta must be >= 1".into()));
    }
    let mut dev_big = Vec::with_capacity(snapshots.len());
    let mut dev_small = Vec::with_capacity(snapshots.len());
    for (t, snap) in snapshots.iter().enumerate() {
        let anchor = &snapshots[t - t % t_delta];
        let (b, s) = snap.max_deviation(anchor);
        dev_big.push(b);
        dev_small.push(s);
    }
    let td = t_delta as f64;
    Ok((
        BoundReport::from_observations("window_input", td * omega_big, dev_big.into_iter()),
        BoundReport::from_observations("window_output", td * omega_small, dev_small.into_iter()),
    ))
}

/// Steady-state outcome of one run in an epsilon sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TradeoffPoint {
    pub epsilon: f64,
    pub cost: f64,
    pub backlog: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffReport {
    /// Sorted by epsilon.
    pub points: Vec<TradeoffPoint>,
    /// Adjacent pairs `(i, i+1)` where cost decreased as epsilon grew.
    pub cost_inversions: Vec<(usize, f64)>,
    /// Adjacent pairs where backlog increased as epsilon grew.
    pub backlog_inversions: Vec<(usize, f64)>,
    /// `epsilon * backlog`, which stays bounded when backlog is `O(1/epsilon)`.
    pub scaled_backlog: Vec<f64>,
}

impl TradeoffReport {
    /// Inversions whose relative size exceeds `tolerance`.
    pub fn significant_inversions(&self, tolerance: f64) -> usize {
        self.cost_inversions
            .iter()
            .chain(&self.backlog_inversions)
            .filter(|(_, rel)| *rel > tolerance)
            .count()
    }

    pub fn total_inversions(&self) -> usize {
        self.cost_inversions.len() + self.backlog_inversions.len()
    }
}

/// Orders runs by epsilon and flags departures from "cost up, backlog down".
/// Inversions carry their relative magnitude.
pub fn tradeoff_report(mut points: Vec<TradeoffPoint>) -> Result<TradeoffReport> {
    if points.len() < 2 {
        return Err(Error::Contract(format!(
            "a tradeoff report needs at least 2 runs, got {}",
            points.len()
        )));
    }
    points.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon));
    let rel = |from: f64, to: f64| {
        let scale = from.abs().max(to.abs());
        if scale == 0.0 {
            0.0
        } else {
            (from - to).abs() / scale
        }
    };
    let mut cost_inversions = Vec::new();
    let mut backlog_inversions = Vec::new();
    for (i, w) in points.windows(2).enumerate() {
        if w[1].cost < w[0].cost {
            cost_inversions.push((i, rel(w[0].cost, w[1].cost)));
        }
        if w[1].backlog > w[0].backlog {
            backlog_inversions.push((i, rel(w[0].backlog, w[1].backlog)));
        }
    }
    let scaled_backlog = points.iter().map(|p| p.epsilon * p.backlog).collect();
    Ok(TradeoffReport {
        points,
        cost_inversions,
        backlog_inversions,
        scaled_backlog,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::QueueState;
    use crate::model::Dims;

    fn toy() -> PlatformExtremes {
        PlatformExtremes {
            max_degree: 2.0,
            max_link_capacity: 1.0,
            max_processing_capacity: 1.0,
            max_arrival: 1.0,
        }
    }

    #[test]
    fn b_toy_value_and_decomposition() {
        assert_eq!(constant_b(&toy()), 21.0);
        let (b1, b2) = constant_b_parts(&toy());
        assert_eq!(b1, (8.0 * 4.0 + 3.0 + 2.0) / 2.0);
        assert_eq!(b2, (4.0 + 1.0) / 2.0);
        assert_eq!(b1 + b2, 21.0);
    }

    #[test]
    fn b_degenerate_and_scaling() {
        let zero = PlatformExtremes {
            max_degree: 0.0,
            max_link_capacity: 0.0,
            max_processing_capacity: 0.0,
            max_arrival: 0.0,
        };
        assert_eq!(constant_b(&zero), 0.0);
        let links_only = PlatformExtremes {
            max_degree: 3.0,
            max_link_capacity: 2.0,
            ..zero
        };
        let doubled = PlatformExtremes {
            max_link_capacity: 4.0,
            ..links_only
        };
        assert_eq!(constant_b(&doubled), 4.0 * constant_b(&links_only));
    }

    #[test]
    fn omega_examples() {
        assert_eq!(omega_constants(&toy()), (5.0, 2.0));
        let p_heavy = PlatformExtremes {
            max_degree: 1.0,
            max_link_capacity: 1.0,
            max_processing_capacity: 10.0,
            max_arrival: 1.0,
        };
        assert_eq!(omega_constants(&p_heavy), (11.0, 10.0));
        let zero = PlatformExtremes {
            max_degree: 0.0,
            max_link_capacity: 0.0,
            max_processing_capacity: 0.0,
            max_arrival: 0.0,
        };
        assert_eq!(omega_constants(&zero), (0.0, 0.0));
    }

    fn toy_loss(t_delta: f64) -> LossParams {
        LossParams {
            epsilon: 0.1,
            t_delta,
            n_vms: 2.0,
            n_chains: 1.0,
            n_vnfs: 1.0,
            alpha_max: 1.0,
            beta_max: 1.0,
            omega_big: 5.0,
            omega_small: 2.0,
        }
    }

    #[test]
    fn c_toy_value() {
        assert!((constant_c(&toy_loss(2.0)) - 158.4).abs() < 1e-9);
        assert_eq!(constant_c(&toy_loss(0.0)), 0.0);
        let ratio = constant_c(&toy_loss(6.0)) / constant_c(&toy_loss(2.0));
        assert!((ratio - 9.0).abs() < 1e-12);
    }

    #[test]
    fn window_bound_on_static_queues() {
        let dims = Dims {
            chains: 1,
            vnfs: 2,
            vms: 2,
        };
        let mut s = QueueState::zeros(dims);
        s.set_input(0, 0, 0, 3.0);
        let snaps = vec![s; 12];
        let (big, small) = verify_lemma1(&snaps, 5, 0.0, 0.0).unwrap();
        assert!(big.passed() && small.passed());
        assert_eq!(big.slack.len(), 12);
        assert!(big.slack.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn window_bound_flags_jumps() {
        let dims = Dims {
            chains: 1,
            vnfs: 1,
            vms: 1,
        };
        let mut snaps = Vec::new();
        for t in 0..4 {
            let mut s = QueueState::zeros(dims);
            s.set_input(0, 0, 0, [0.0, 1.0, 9.0, 0.0][t]);
            snaps.push(s);
        }
        let (big, _) = verify_lemma1(&snaps, 4, 1.0, 1.0).unwrap();
        assert_eq!(big.violations, 1);
        assert_eq!(big.max_ratio, 9.0 / 4.0);
    }

    #[test]
    fn tradeoff_examples() {
        let report = tradeoff_report(vec![
            TradeoffPoint {
                epsilon: 0.5,
                cost: 3.0,
                backlog: 10.0,
            },
            TradeoffPoint {
                epsilon: 0.05,
                cost: 1.0,
                backlog: 100.0,
            },
            TradeoffPoint {
                epsilon: 0.1,
                cost: 2.0,
                backlog: 50.0,
            },
        ])
        .unwrap();
        assert_eq!(report.total_inversions(), 0);
        assert_eq!(
            report.scaled_backlog,
            vec![0.05 * 100.0, 0.1 * 50.0, 0.5 * 10.0]
        );

        let flat = tradeoff_report(vec![
            TradeoffPoint {
                epsilon: 0.1,
                cost: 2.0,
                backlog: 5.0,
            },
            TradeoffPoint {
                epsilon: 0.1,
                cost: 2.0,
                backlog: 5.0,
            },
        ])
        .unwrap();
        assert_eq!(flat.total_inversions(), 0);

        let bumpy = tradeoff_report(vec![
            TradeoffPoint {
                epsilon: 0.1,
                cost: 2.0,
                backlog: 5.0,
            },
            TradeoffPoint {
                epsilon: 0.2,
                cost: 1.99,
                backlog: 5.0,
            },
        ])
        .unwrap();
        assert_eq!(bumpy.cost_inversions.len(), 1);
        assert_eq!(bumpy.significant_inversions(0.02), 0);

        assert!(matches!(
            tradeoff_report(vec![TradeoffPoint {
                epsilon: 0.1,
                cost: 1.0,
                backlog: 1.0
            }]),
            Err(Error::Contract(_))
        ));
    }
}
