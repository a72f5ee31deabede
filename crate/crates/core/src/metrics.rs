//! Time-average performance metrics and diagnostic bounds.

use crate::model::SystemConfig;
use crate::sim::Trace;

/// Which slots the time averages cover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    All,
    /// The final half of the run.
    LastHalf,
    /// Slots `[from, T)`.
    From(usize),
}

impl Window {
    fn start(self, len: usize) -> usize {
        match self {
            Window::All => 0,
            Window::LastHalf => len / 2,
            Window::From(k) => k.min(len),
        }
    }
}

/// Summary of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Slots averaged over.
    pub slots: usize,
    /// Time-average admitted rate per user, `R̄_n`, bits/slot.
    pub mean_admitted: Vec<f64>,
    /// Time-average service rate per user, `μ̄_n`, bits/slot.
    pub mean_service: Vec<f64>,
    /// `Σ_n R̄_n`.
    pub throughput: f64,
    /// Time-average grid power `P̄`.
    pub grid_power: f64,
    /// `φ Σ_n f(R̄_n) − ϕ P̄`.
    pub objective: f64,
    pub fairness: f64,
    pub max_q: f64,
    pub max_u: f64,
    pub battery_min: f64,
    pub battery_max: f64,
    /// Mean `Σ_n U_n`.
    pub mean_u_sum: f64,
    pub xi: f64,
    pub xi_over_v: f64,
    /// `|Ō − mean(δ w)|` over the whole run.
    pub energy_balance_gap: f64,
    /// `S^max / T` over the whole run.
    pub energy_balance_bound: f64,
    pub mean_dual_iterations: f64,
}

/// Jain's index `(Σ x)² / (N Σ x²)`; 1 for an all-zero vector.
pub fn fairness_index(x: &[f64]) -> f64 {
    let sum: f64 = x.iter().sum();
    let sq: f64 = x.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        1.0
    } else {
        sum * sum / (x.len() as f64 * sq)
    }
}

/// `Ξ = ½ N A^max Q^max + N ((Q^max − A^max)/Q^max) (A^max)² + ½ ((w^max)² + (O^max)²)`.
pub fn xi(cfg: &SystemConfig) -> f64 {
    let n = cfg.num_users as f64;
    0.5 * n * cfg.a_max * cfg.q_max
        + n * (cfg.q_max - cfg.a_max) / cfg.q_max * cfg.a_max * cfg.a_max
        + 0.5 * (cfg.w_max * cfg.w_max + cfg.o_max * cfg.o_max)
}

/// P1 objective of given time averages.
pub fn p1_objective(mean_admitted: &[f64], grid_power: f64, cfg: &SystemConfig) -> f64 {
    cfg.phi * mean_admitted.iter().map(|r| cfg.utility.value(*r)).sum::<f64>() - cfg.varphi * grid_power
}

/// Averages a trace over `window`. An empty window yields zero averages.
pub fn metrics(trace: &Trace, window: Window) -> Summary {
    let cfg = &trace.config;
    let recs = &trace.records;
    let n = cfg.num_users;
    let start = window.start(recs.len());
    let win = &recs[start..];
    let len = win.len().max(1) as f64;

    let mut mean_admitted = vec![0.0; n];
    let mut mean_service = vec![0.0; n];
    let mut grid = 0.0;
    let mut u_sum = 0.0;
    let mut iters = 0.0;
    for r in win {
        for k in 0..n {
            mean_admitted[k] += r.decision.admit_r[k] / len;
            mean_service[k] += r.decision.rate_mu[k] / len;
        }
        grid += r.grid_power / len;
        u_sum += r.state.u.iter().sum::<f64>() / len;
        iters += r.alloc.iterations as f64 / len;
    }

    let mut max_q: f64 = 0.0;
    let mut max_u: f64 = 0.0;
    let mut s_min = f64::INFINITY;
    let mut s_max = f64::NEG_INFINITY;
    let states = recs.iter().map(|r| &r.state).chain(std::iter::once(&trace.final_state));
    for s in states {
        max_q = s.q.iter().fold(max_q, |a, b| a.max(*b));
        max_u = s.u.iter().fold(max_u, |a, b| a.max(*b));
        s_min = s_min.min(s.s);
        s_max = s_max.max(s.s);
    }

    let total = recs.len().max(1) as f64;
    let mean_o: f64 = recs.iter().map(|r| r.decision.discharge_o).sum::<f64>() / total;
    let mean_in: f64 = recs.iter().map(|r| r.decision.stored()).sum::<f64>() / total;

    let xi = xi(cfg);
    Summary {
        slots: win.len(),
        throughput: mean_admitted.iter().sum(),
        objective: p1_objective(&mean_admitted, grid, cfg),
        fairness: fairness_index(&mean_admitted),
        mean_admitted,
        mean_service,
        grid_power: grid,
        max_q,
        max_u,
        battery_min: s_min,
        battery_max: s_max,
        mean_u_sum: u_sum,
        xi,
        xi_over_v: xi / cfg.v,
        energy_balance_gap: (mean_o - mean_in).abs(),
        energy_balance_bound: cfg.s_max / total,
        mean_dual_iterations: iters,
    }
}
