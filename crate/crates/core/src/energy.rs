//! Base station energy sourcing and battery evolution.
//!
//! The battery policy is a threshold rule on the stored level `S`: above
//! `θ − ϕV` (which equals `o_max`) the base station runs from the battery,
//! below it from the grid; harvested energy is accepted only while `S < θ`.

use crate::error::{Error, Result};
use crate::model::SystemConfig;

/// How the base station demand is met in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySplit {
    /// Drawn from the grid for the base station, `J`.
    pub grid_j: f64,
    /// Withdrawn from the battery, `O`.
    pub discharge_o: f64,
    /// Fraction of the harvest stored, `δ`.
    pub charge_frac: f64,
}

/// Relative slack allowed on floating-point bound checks.
const BOUND_EPS: f64 = 1e-9;

fn clip_charge(mut split: EnergySplit, s: f64, w: f64, cfg: &SystemConfig) -> EnergySplit {
    if w > 0.0 {
        let room = (cfg.s_max - (s - split.discharge_o)).max(0.0);
        if split.charge_frac * w > room {
            split.charge_frac = room / w;
        }
    }
    split
}

/// Moves any discharge beyond `min(s, o_max)` onto the grid.
fn enforce_discharge_cap(mut split: EnergySplit, s: f64, cfg: &SystemConfig) -> Result<EnergySplit> {
    let avail = s.min(cfg.o_max).max(0.0);
    if split.discharge_o > avail {
        let excess = split.discharge_o - avail;
        split.discharge_o = avail;
        split.grid_j += excess;
    }
    if split.grid_j > cfg.j_max * (1.0 + BOUND_EPS) {
        return Err(Error::InfeasibleSupply {
            demand: split.grid_j + split.discharge_o,
            j_max: cfg.j_max,
            discharge: avail,
        });
    }
    Ok(split)
}

/// Threshold energy management for base station transmit power `p_b_total`,
/// battery level `s` and harvest `w`.
pub fn manage_energy(p_b_total: f64, s: f64, w: f64, cfg: &SystemConfig) -> Result<EnergySplit> {
    let demand = p_b_total + cfg.dp_b;
    let split = if s >= cfg.theta - cfg.varphi * cfg.v {
        let discharge_o = demand.min(cfg.o_max);
        EnergySplit {
            grid_j: demand - discharge_o,
            discharge_o,
            charge_frac: if s < cfg.theta { 1.0 } else { 0.0 },
        }
    } else {
        let grid_j = demand.min(cfg.j_max);
        EnergySplit {
            grid_j,
            discharge_o: (demand - grid_j).max(0.0),
            charge_frac: 1.0,
        }
    };
    let split = enforce_discharge_cap(split, s, cfg)?;
    Ok(clip_charge(split, s, w, cfg))
}

/// Grid only: the battery is neither charged nor used.
pub fn grid_only_energy(p_b_total: f64, cfg: &SystemConfig) -> Result<EnergySplit> {
    let split = EnergySplit {
        grid_j: p_b_total + cfg.dp_b,
        discharge_o: 0.0,
        charge_frac: 0.0,
    };
    enforce_discharge_cap(split, 0.0, cfg)
}

/// Greedy heuristic: discharge first, top up from the grid, and store as
/// much of the harvest as fits.
pub fn greedy_energy(p_b_total: f64, s: f64, w: f64, cfg: &SystemConfig) -> Result<EnergySplit> {
    let demand = p_b_total + cfg.dp_b;
    let discharge_o = demand.min(s).min(cfg.o_max).max(0.0);
    let split = EnergySplit {
        grid_j: demand - discharge_o,
        discharge_o,
        charge_frac: 1.0,
    };
    let split = enforce_discharge_cap(split, s, cfg)?;
    Ok(clip_charge(split, s, w, cfg))
}

/// `S' = S − O + δ w`, checked against `[0, s_max]`.
pub fn update_battery(s: f64, o: f64, delta: f64, w: f64, cfg: &SystemConfig) -> Result<f64> {
    let slack = BOUND_EPS * cfg.s_max.max(1.0);
    if o > s.min(cfg.o_max) + slack {
        return Err(Error::Invariant {
            name: "discharge_cap",
            slot: 0,
            detail: format!("discharge {o} exceeds min(S = {s}, o_max = {})", cfg.o_max),
        });
    }
    let next = s - o + delta * w;
    if next < -slack || next > cfg.s_max + slack {
        return Err(Error::Invariant {
            name: "battery_level_bounds",
            slot: 0,
            detail: format!("S' = {next} outside [0, {}]", cfg.s_max),
        });
    }
    Ok(next.clamp(0.0, cfg.s_max))
}

/// Total grid draw `P = J + Σ_i (p_i + Δp_i)` over the deployed relays.
pub fn grid_power(grid_j: f64, relay_dynamic: &[f64], cfg: &SystemConfig) -> f64 {
    grid_j + relay_dynamic.iter().map(|p| p + cfg.dp_i).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> SystemConfig {
        SystemConfig::paper_default().validate().unwrap().into_inner()
    }

    #[test]
    fn battery_mode_at_threshold() {
        let cfg = cfg();
        let split = manage_energy(100.0 - cfg.dp_b, cfg.theta, 150.0, &cfg).unwrap();
        assert_eq!(split.grid_j, 0.0);
        assert!((split.discharge_o - 100.0).abs() < 1e-12);
        assert_eq!(split.charge_frac, 0.0);
    }

    #[test]
    fn grid_mode_below_discharge_cap() {
        let cfg = cfg();
        let split = manage_energy(100.0 - cfg.dp_b, cfg.o_max - 1.0, 150.0, &cfg).unwrap();
        assert!((split.grid_j - 100.0).abs() < 1e-12);
        assert_eq!(split.discharge_o, 0.0);
        assert_eq!(split.charge_frac, 1.0);
    }

    #[test]
    fn charges_between_thresholds() {
        let mut cfg = cfg();
        cfg.dp_b = 0.0;
        let split = manage_energy(0.0, cfg.o_max, 150.0, &cfg).unwrap();
        assert_eq!(split.grid_j, 0.0);
        assert_eq!(split.discharge_o, 0.0);
        assert_eq!(split.charge_frac, 1.0);
    }

    #[test]
    fn charge_clipped_at_capacity() {
        let mut cfg = cfg();
        // Out-of-bound V to force an overflow the threshold rule alone would not prevent.
        cfg.v = 5500.0;
        cfg.theta = cfg.varphi * cfg.v + cfg.o_max;
        cfg.dp_b = 0.0;
        let s = cfg.s_max - 50.0;
        let split = manage_energy(0.0, s, 195.0, &cfg).unwrap();
        assert!(split.charge_frac > 0.0 && split.charge_frac < 1.0);
        let next = update_battery(s, split.discharge_o, split.charge_frac, 195.0, &cfg).unwrap();
        assert!(next <= cfg.s_max);
    }

    #[test]
    fn battery_arithmetic() {
        let cfg = cfg();
        assert_eq!(update_battery(100.0, 30.0, 1.0, 50.0, &cfg).unwrap(), 120.0);
        assert_eq!(update_battery(0.0, 0.0, 0.0, 195.0, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn battery_violation_is_named() {
        let cfg = cfg();
        let err = update_battery(2990.0, 0.0, 1.0, 195.0, &cfg).unwrap_err().to_string();
        assert!(err.contains("battery_level_bounds"), "{err}");
        let err = update_battery(10.0, 20.0, 0.0, 0.0, &cfg).unwrap_err().to_string();
        assert!(err.contains("discharge_cap"), "{err}");
    }

    #[test]
    fn grid_power_counts_relay_static_draw() {
        let cfg = cfg();
        assert_eq!(grid_power(0.0, &[0.0; 4], &cfg), 160.0);
        assert_eq!(grid_power(50.0, &[], &cfg), 50.0);
        assert_eq!(grid_power(0.0, &[10.0], &cfg), 50.0);
    }

    #[test]
    fn grid_only_never_touches_battery() {
        let cfg = cfg();
        let split = grid_only_energy(12.0, &cfg).unwrap();
        assert_eq!(split.discharge_o, 0.0);
        assert_eq!(split.charge_frac, 0.0);
        assert!((split.grid_j - (12.0 + cfg.dp_b)).abs() < 1e-12);
    }

    #[test]
    fn greedy_discharges_first() {
        let cfg = cfg();
        let split = greedy_energy(5.0, 100.0, 195.0, &cfg).unwrap();
        assert_eq!(split.discharge_o, 100.0);
        assert!((split.grid_j - (5.0 + cfg.dp_b - 100.0)).abs() < 1e-9);
        assert_eq!(split.charge_frac, 1.0);
        let full = greedy_energy(5.0, cfg.s_max, 195.0, &cfg).unwrap();
        assert_eq!(full.grid_j, 0.0);
        let next = update_battery(cfg.s_max, full.discharge_o, full.charge_frac, 195.0, &cfg).unwrap();
        assert!(next <= cfg.s_max);
    }

    proptest! {
        // Supply identity and battery bounds for any reachable level under a validated config.
        #[test]
        fn threshold_policy_keeps_battery_feasible(
            s in 0.0..3000.0f64,
            p in 0.0..20.0f64,
            w_state in 0usize..2,
            v in 1.0..4967.0f64,
        ) {
            let mut cfg = SystemConfig::paper_default();
            cfg.v = v;
            let cfg = cfg.validate().unwrap();
            let w = [195.0, 100.0][w_state];
            let split = manage_energy(p, s, w, &cfg).unwrap();
            prop_assert!((split.grid_j + split.discharge_o - (p + cfg.dp_b)).abs() < 1e-9);
            prop_assert!(split.grid_j <= cfg.j_max);
            prop_assert!(split.discharge_o <= s.min(cfg.o_max) + 1e-9);
            prop_assert!(split.charge_frac == 0.0 || split.charge_frac == 1.0);
            let next = update_battery(s, split.discharge_o, split.charge_frac, w, &cfg);
            prop_assert!(next.is_ok());
        }
    }
}
