//! The slot loop: inputs, flow control, allocation, energy management and
//! state updates, for the online policy and its baselines.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::alloc::{solve_slot, DualParams, DualState, SlotProblem};
use crate::energy::{grid_only_energy, grid_power, greedy_energy, manage_energy, update_battery, EnergySplit};
use crate::env::{build_geometry, perturb_channels, sample_arrivals, sample_channels, sample_renewable, Geometry, RngStreams};
use crate::error::{Error, Result};
use crate::flow::{admit, aux_rate, update_queues};
use crate::metrics::{metrics, Summary, Window};
use crate::model::{Assignment, SlotDecision, SlotObjective, SystemConfig, SystemState, TraceRecord, Utility, ValidatedConfig};
use crate::phy::user_rates_scaled;

/// Control policy for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Queue-aware flow control, relaying and threshold battery management.
    Free,
    /// As [`Policy::Free`] with no relays deployed.
    NoRelayHybrid,
    /// Queue-aware control with relays, every joule bought from the grid.
    OnGridOnly,
    /// Per-slot utility maximization without queues, greedy battery use.
    PerSlotNum,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Free, Policy::NoRelayHybrid, Policy::OnGridOnly, Policy::PerSlotNum];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Free => "free",
            Policy::NoRelayHybrid => "no-relay",
            Policy::OnGridOnly => "grid-only",
            Policy::PerSlotNum => "per-slot-num",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "free" => Ok(Policy::Free),
            "no-relay" | "norelay" | "no-relay-hybrid" => Ok(Policy::NoRelayHybrid),
            "grid-only" | "ongrid" | "on-grid-only" => Ok(Policy::OnGridOnly),
            "per-slot-num" | "num" | "perslotnum" => Ok(Policy::PerSlotNum),
            other => Err(Error::InvalidArgument(format!(
                "unknown policy `{other}` (expected free|no-relay|grid-only|per-slot-num)"
            ))),
        }
    }
}

/// A completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub config: SystemConfig,
    pub policy: Policy,
    pub seed: u64,
    pub geometry: Geometry,
    /// Relays whose static power is drawn (0 for [`Policy::NoRelayHybrid`]).
    pub deployed_relays: usize,
    pub records: Vec<TraceRecord>,
    /// State after the last slot.
    pub final_state: SystemState,
}

/// `½ Σ_n [((Q^max − A^max)/Q^max) U_n² + U_n Q_n²/Q^max] + ½ (S − θ)²`.
pub fn lyapunov(state: &SystemState, cfg: &SystemConfig) -> f64 {
    let c = (cfg.q_max - cfg.a_max) / cfg.q_max;
    let queues: f64 = state
        .q
        .iter()
        .zip(&state.u)
        .map(|(q, u)| c * u * u + u * q * q / cfg.q_max)
        .sum();
    0.5 * queues + 0.5 * (state.s - cfg.theta).powi(2)
}

fn invariant(name: &'static str, slot: u64, detail: String) -> Error {
    Error::Invariant { name, slot, detail }
}

fn with_slot(err: Error, slot: u64) -> Error {
    match err {
        Error::Invariant { name, detail, .. } => Error::Invariant { name, slot, detail },
        other => other,
    }
}

const EPS: f64 = 1e-9;

fn check_decision(d: &SlotDecision, cfg: &SystemConfig, num_relays: usize, slot: u64) -> Result<()> {
    let mask = cfg.power_mask * (1.0 + EPS);
    for (m, a) in d.assign.iter().enumerate() {
        let (p_b, p_r) = (d.p_b[m], d.p_r[m]);
        if !(p_b >= 0.0 && p_b <= mask && p_r >= 0.0 && p_r <= mask) {
            return Err(invariant("power_mask", slot, format!("subcarrier {m}: p_B = {p_b}, p_r = {p_r}")));
        }
        match a {
            Assignment::Unassigned if p_b > 0.0 || p_r > 0.0 => {
                return Err(invariant("exclusivity", slot, format!("idle subcarrier {m} carries power")));
            }
            Assignment::Direct { .. } if p_r > 0.0 => {
                return Err(invariant("exclusivity", slot, format!("relay power on direct subcarrier {m}")));
            }
            Assignment::Coop { relay, .. } if *relay >= num_relays => {
                return Err(invariant("exclusivity", slot, format!("subcarrier {m} names relay {relay}")));
            }
            _ => {}
        }
    }
    let total = d.p_b_total();
    if total > cfg.p_b_max * (1.0 + EPS) {
        return Err(invariant("bs_sum_power", slot, format!("{total} > {}", cfg.p_b_max)));
    }
    for (i, t) in d.relay_totals(num_relays).iter().enumerate() {
        if *t > cfg.p_i_max * (1.0 + EPS) {
            return Err(invariant("relay_sum_power", slot, format!("relay {i}: {t} > {}", cfg.p_i_max)));
        }
    }
    let demand = total + cfg.dp_b;
    if (d.grid_j + d.discharge_o - demand).abs() > EPS * demand.max(1.0) {
        return Err(invariant(
            "supply_identity",
            slot,
            format!("J + O = {} but demand is {demand}", d.grid_j + d.discharge_o),
        ));
    }
    if d.grid_j > cfg.j_max * (1.0 + EPS) {
        return Err(invariant("grid_cap", slot, format!("J = {} > {}", d.grid_j, cfg.j_max)));
    }
    Ok(())
}

fn check_state(state: &SystemState, cfg: &SystemConfig, slot: u64) -> Result<()> {
    for (n, q) in state.q.iter().enumerate() {
        if !(*q >= 0.0 && *q <= cfg.q_max * (1.0 + EPS)) {
            return Err(invariant("queue_bound", slot, format!("Q_{} = {q} > Q^max = {}", n + 1, cfg.q_max)));
        }
    }
    if let Some(u) = state.u.iter().find(|u| !(u.is_finite() && **u >= 0.0)) {
        return Err(invariant("virtual_queue", slot, format!("U = {u}")));
    }
    Ok(())
}

/// Rate weights and power prices of the no-queue baseline, refined by a few
/// rounds of linearizing the utility around the previous allocation.
fn per_slot_num_allocation(
    cfg: &SystemConfig,
    ch: &crate::model::ChannelRealization,
    s: f64,
    dual: &mut DualState,
    params: &DualParams,
) -> crate::alloc::Allocation {
    let bs_coef = if s >= cfg.p_b_max + cfg.dp_b { 0.0 } else { -cfg.varphi };
    let mut pb = SlotProblem {
        ch,
        weights: vec![cfg.phi * cfg.subcarrier_bandwidth; ch.num_users()],
        bs_coef,
        relay_price: cfg.varphi,
        mask: cfg.power_mask,
        p_b_max: cfg.p_b_max,
        p_i_max: cfg.p_i_max,
    };
    let rounds = match cfg.utility {
        Utility::Identity => 1,
        Utility::Log => 3,
    };
    let mut alloc = solve_slot(&pb, dual, params);
    for _ in 1..rounds {
        let mut d = SlotDecision::idle(ch.num_users(), ch.num_subcarriers());
        d.assign = alloc.assign.clone();
        d.p_b = alloc.p_b.clone();
        d.p_r = alloc.p_r.clone();
        let mu = user_rates_scaled(&d, ch, cfg.subcarrier_bandwidth);
        pb.weights = mu
            .iter()
            .map(|m| cfg.phi * cfg.utility.derivative(*m) * cfg.subcarrier_bandwidth)
            .collect();
        alloc = solve_slot(&pb, dual, params);
    }
    alloc
}

/// Simulates `slots` slots of `policy` from the all-empty initial state.
pub fn run(cfg: &ValidatedConfig, policy: Policy, seed: u64, slots: u64) -> Result<Trace> {
    let cfg: &SystemConfig = cfg;
    let mut rng = RngStreams::new(seed);
    let geometry = build_geometry(cfg, &mut rng.geometry);
    let deployed_relays = match policy {
        Policy::NoRelayHybrid => 0,
        _ => cfg.num_relays,
    };
    let params = DualParams::from_config(cfg);
    let mut dual = DualState::new(deployed_relays);
    let mut state = SystemState::initial(cfg.num_users, cfg.s_init);
    let mut records = Vec::with_capacity(slots as usize);

    for t in 0..slots {
        let arrivals = sample_arrivals(cfg, &mut rng.traffic);
        let full = sample_channels(&geometry, cfg, &mut rng.fading)?;
        let harvest = sample_renewable(cfg, &mut rng.renewable);
        let ch = if deployed_relays == 0 { full.without_relays() } else { full };
        let measured = if cfg.channel_uncertainty > 0.0 {
            perturb_channels(&ch, cfg.channel_uncertainty, &mut rng.uncertainty)
        } else {
            ch.clone()
        };

        let mut decision = SlotDecision::idle(cfg.num_users, cfg.num_subcarriers);
        decision.harvested = harvest;

        let alloc = match policy {
            Policy::PerSlotNum => per_slot_num_allocation(cfg, &measured, state.s, &mut dual, &params),
            _ => {
                decision.aux_x = state.u.iter().map(|u| aux_rate(*u, cfg)).collect();
                decision.admit_r = state.q.iter().zip(&arrivals).map(|(q, a)| admit(*q, *a, cfg)).collect();
                let mut pb = SlotProblem::from_state(&state, &measured, cfg);
                if policy == Policy::OnGridOnly {
                    pb.bs_coef = -cfg.v * cfg.varphi;
                }
                solve_slot(&pb, &mut dual, &params)
            }
        };
        decision.assign = alloc.assign.clone();
        decision.p_b = alloc.p_b.clone();
        decision.p_r = alloc.p_r.clone();
        decision.rate_mu = user_rates_scaled(&decision, &ch, cfg.subcarrier_bandwidth);
        if policy == Policy::PerSlotNum {
            decision.admit_r = decision.rate_mu.clone();
        }

        let p_b_total = decision.p_b_total();
        let split: EnergySplit = match policy {
            Policy::Free | Policy::NoRelayHybrid => manage_energy(p_b_total, state.s, harvest, cfg),
            Policy::OnGridOnly => grid_only_energy(p_b_total, cfg),
            Policy::PerSlotNum => greedy_energy(p_b_total, state.s, harvest, cfg),
        }
        .map_err(|e| with_slot(e, t))?;
        decision.grid_j = split.grid_j;
        decision.discharge_o = split.discharge_o;
        decision.charge_frac = split.charge_frac;
        check_decision(&decision, cfg, deployed_relays, t)?;

        let relay_power = decision.relay_totals(deployed_relays);
        let p_grid = grid_power(split.grid_j, &relay_power, cfg);
        let objective = SlotObjective {
            allocation: alloc.objective,
            aux_utility: cfg.phi * decision.aux_x.iter().map(|x| cfg.utility.value(*x)).sum::<f64>(),
            admitted_utility: cfg.phi * decision.admit_r.iter().map(|r| cfg.utility.value(*r)).sum::<f64>(),
            grid_cost: cfg.varphi * p_grid,
        };
        let lyap = lyapunov(&state, cfg);

        let mut next = if policy == Policy::PerSlotNum {
            SystemState { t: state.t + 1, ..state.clone() }
        } else {
            update_queues(&state, &decision)
        };
        next.s = update_battery(state.s, split.discharge_o, split.charge_frac, harvest, cfg)
            .map_err(|e| with_slot(e, t))?;
        check_state(&next, cfg, t)?;

        records.push(TraceRecord {
            slot: t,
            state: std::mem::replace(&mut state, next),
            decision,
            grid_power: p_grid,
            relay_power,
            objective,
            alloc: alloc.diagnostics,
            lyapunov: lyap,
        });
    }

    Ok(Trace {
        config: cfg.clone(),
        policy,
        seed,
        geometry,
        deployed_relays,
        records,
        final_state: state,
    })
}

/// Parameter swept by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    V,
    Varphi,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::V => "v",
            SweepAxis::Varphi => "varphi",
        }
    }

    fn apply(self, cfg: &SystemConfig, value: f64) -> SystemConfig {
        let mut c = cfg.clone();
        match self {
            SweepAxis::V => c.v = value,
            SweepAxis::Varphi => c.varphi = value,
        }
        c
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "v" | "V" => Ok(SweepAxis::V),
            "varphi" => Ok(SweepAxis::Varphi),
            other => Err(Error::InvalidArgument(format!("unknown axis `{other}` (expected v|varphi)"))),
        }
    }
}

/// One sweep point: per-seed summaries over the averaging window.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub summaries: Vec<(u64, Summary)>,
    pub errors: Vec<(u64, String)>,
}

impl SweepRow {
    /// Mean of `f` over the successful seeds.
    pub fn mean(&self, f: impl Fn(&Summary) -> f64) -> f64 {
        if self.summaries.is_empty() {
            return f64::NAN;
        }
        self.summaries.iter().map(|(_, s)| f(s)).sum::<f64>() / self.summaries.len() as f64
    }
}

/// Runs every `(value, seed)` pair and summarizes the last half of each run.
/// Failed runs are recorded on their row; the sweep continues.
pub fn sweep(
    cfg: &SystemConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    slots: u64,
    policy: Policy,
) -> Vec<SweepRow> {
    let jobs: Vec<(usize, f64, u64)> = values
        .iter()
        .enumerate()
        .flat_map(|(k, v)| seeds.iter().map(move |s| (k, *v, *s)))
        .collect();
    let results: Vec<(usize, u64, Result<Summary>)> = jobs
        .par_iter()
        .map(|&(k, value, seed)| {
            let out = axis
                .apply(cfg, value)
                .validate()
                .and_then(|c| run(&c, policy, seed, slots))
                .map(|trace| metrics(&trace, Window::LastHalf));
            (k, seed, out)
        })
        .collect();
    let mut rows: Vec<SweepRow> = values
        .iter()
        .map(|v| SweepRow { value: *v, summaries: Vec::new(), errors: Vec::new() })
        .collect();
    for (k, seed, out) in results {
        match out {
            Ok(s) => rows[k].summaries.push((seed, s)),
            Err(e) => rows[k].errors.push((seed, e.to_string())),
        }
    }
    rows
}
