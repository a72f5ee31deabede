//! Shared domain types and configuration validation.
//!
//! Units: queues and rates are in bits (per slot), powers in watts and
//! energies in energy-per-slot units. With a slot length of one, watts and
//! energy-per-slot are numerically the same.

use std::fmt::Write as _;
use std::ops::Deref;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Concave utility applied to admitted rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Utility {
    /// `f(x) = ln(1 + x)`.
    Log,
    /// `f(x) = x`.
    Identity,
}

impl Utility {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Utility::Log => x.ln_1p(),
            Utility::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Utility::Log => 1.0 / (1.0 + x),
            Utility::Identity => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Utility::Log => "log",
            Utility::Identity => "identity",
        }
    }
}

impl FromStr for Utility {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "log" => Ok(Utility::Log),
            "identity" => Ok(Utility::Identity),
            other => Err(Error::InvalidArgument(format!(
                "unknown utility `{other}` (expected log|identity)"
            ))),
        }
    }
}

/// One state of the renewable generator: harvested energy per slot and its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewableState {
    pub value: f64,
    pub prob: f64,
}

/// All physical, economic and algorithmic parameters of one scenario.
///
/// `theta`, `q_max` and `w_max` are derived; [`validate_config`] recomputes
/// them from the other fields every time it runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_users: usize,
    pub num_relays: usize,
    pub num_subcarriers: usize,

    pub cell_radius: f64,
    pub pathloss_exponent: f64,
    pub noise_power: f64,
    pub gamma_gap: f64,
    /// Bits carried per slot by one subcarrier per bit/s/Hz of spectral
    /// efficiency (sub-bandwidth times slot length). `1.0` is the
    /// normalized model where a rate of `log2(1 + pH)` is counted directly.
    pub subcarrier_bandwidth: f64,

    pub p_b_max: f64,
    pub dp_b: f64,
    pub p_i_max: f64,
    pub dp_i: f64,
    pub power_mask: f64,

    pub s_max: f64,
    pub s_init: f64,
    pub o_max: f64,
    pub j_max: f64,
    pub renewable_states: Vec<RenewableState>,
    pub w_max: f64,

    pub arrival_rate: f64,
    pub mean_packet_size: f64,
    pub buffer_packets: f64,
    pub a_max: f64,
    pub q_max: f64,

    pub phi: f64,
    pub varphi: f64,
    pub v: f64,
    pub theta: f64,
    pub utility: Utility,

    pub dual_step0: f64,
    pub dual_max_iters: usize,
    pub dual_tol: f64,

    /// Relative channel measurement error seen by the allocator (0 disables).
    pub channel_uncertainty: f64,
}

impl SystemConfig {
    /// The reference cell: 8 users, 4 relays, 128 subcarriers, solar-backed BS.
    pub fn paper_default() -> Self {
        let p_b_max = 20.0;
        let dp_b = 194.24;
        let o_max = 1.5 * (p_b_max + dp_b);
        let mut cfg = SystemConfig {
            num_users: 8,
            num_relays: 4,
            num_subcarriers: 128,
            cell_radius: 2000.0,
            pathloss_exponent: 4.0,
            noise_power: 1e-10,
            gamma_gap: 1.0,
            subcarrier_bandwidth: 10e6 / 128.0,
            p_b_max,
            dp_b,
            p_i_max: 10.0,
            dp_i: 40.0,
            power_mask: 0.2,
            s_max: 3000.0,
            s_init: 0.0,
            o_max,
            j_max: o_max,
            renewable_states: vec![
                RenewableState { value: 195.0, prob: 0.6 },
                RenewableState { value: 100.0, prob: 0.4 },
            ],
            w_max: 0.0,
            arrival_rate: 8.0,
            mean_packet_size: 5000.0,
            buffer_packets: 10.0,
            a_max: 45_000.0,
            q_max: 0.0,
            phi: 16.0,
            varphi: 0.5,
            v: 100.0,
            theta: 0.0,
            utility: Utility::Log,
            dual_step0: 1.0 / p_b_max,
            dual_max_iters: 40,
            dual_tol: 1e-3,
            channel_uncertainty: 0.0,
        };
        cfg.fill_derived();
        cfg
    }

    fn fill_derived(&mut self) {
        self.w_max = self
            .renewable_states
            .iter()
            .map(|s| s.value)
            .fold(0.0, f64::max);
        self.q_max = self.buffer_packets * self.mean_packet_size;
        self.theta = self.varphi * self.v + self.o_max;
    }

    /// Largest `V` keeping the battery inside `[0, s_max]`.
    pub fn v_upper_bound(&self) -> f64 {
        (self.s_max - self.w_max - self.o_max) / self.varphi
    }

    /// Mean arrival in bits per slot per user.
    pub fn mean_arrival_bits(&self) -> f64 {
        self.arrival_rate * self.mean_packet_size
    }

    pub fn validate(self) -> Result<ValidatedConfig> {
        validate_config(self)
    }

    /// Parses the flat `key = value` format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SystemConfig::paper_default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        }
        cfg.fill_derived();
        Ok(cfg)
    }

    /// Sets one field from its textual value. Derived keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse::<T>()
                .map_err(|_| Error::InvalidArgument(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "num_users" => self.num_users = num(key, value)?,
            "num_relays" => self.num_relays = num(key, value)?,
            "num_subcarriers" => self.num_subcarriers = num(key, value)?,
            "cell_radius" => self.cell_radius = num(key, value)?,
            "pathloss_exponent" => self.pathloss_exponent = num(key, value)?,
            "noise_power" => self.noise_power = num(key, value)?,
            "gamma_gap" => self.gamma_gap = num(key, value)?,
            "subcarrier_bandwidth" => self.subcarrier_bandwidth = num(key, value)?,
            "p_b_max" => self.p_b_max = num(key, value)?,
            "dp_b" => self.dp_b = num(key, value)?,
            "p_i_max" => self.p_i_max = num(key, value)?,
            "dp_i" => self.dp_i = num(key, value)?,
            "power_mask" => self.power_mask = num(key, value)?,
            "s_max" => self.s_max = num(key, value)?,
            "s_init" => self.s_init = num(key, value)?,
            "o_max" => self.o_max = num(key, value)?,
            "j_max" => self.j_max = num(key, value)?,
            "renewable_states" => self.renewable_states = parse_states(value)?,
            "arrival_rate" => self.arrival_rate = num(key, value)?,
            "mean_packet_size" => self.mean_packet_size = num(key, value)?,
            "buffer_packets" => self.buffer_packets = num(key, value)?,
            "a_max" => self.a_max = num(key, value)?,
            "phi" => self.phi = num(key, value)?,
            "varphi" => self.varphi = num(key, value)?,
            "v" | "V" => self.v = num(key, value)?,
            "utility" => self.utility = value.parse()?,
            "dual_step0" => self.dual_step0 = num(key, value)?,
            "dual_max_iters" => self.dual_max_iters = num(key, value)?,
            "dual_tol" => self.dual_tol = num(key, value)?,
            "channel_uncertainty" => self.channel_uncertainty = num(key, value)?,
            "theta" | "q_max" | "w_max" => {
                return Err(Error::InvalidArgument(format!(
                    "`{key}` is derived and cannot be set"
                )))
            }
            other => return Err(Error::InvalidArgument(format!("unknown key `{other}`"))),
        }
        self.fill_derived();
        Ok(())
    }

    /// Renders the config in the same flat format [`SystemConfig::parse`] reads.
    /// Derived values are emitted as comments.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let states = self
            .renewable_states
            .iter()
            .map(|s| format!("{}:{}", s.value, s.prob))
            .collect::<Vec<_>>()
            .join(", ");
        let rows: Vec<(&str, String)> = vec![
            ("num_users", self.num_users.to_string()),
            ("num_relays", self.num_relays.to_string()),
            ("num_subcarriers", self.num_subcarriers.to_string()),
            ("cell_radius", self.cell_radius.to_string()),
            ("pathloss_exponent", self.pathloss_exponent.to_string()),
            ("noise_power", self.noise_power.to_string()),
            ("gamma_gap", self.gamma_gap.to_string()),
            ("subcarrier_bandwidth", self.subcarrier_bandwidth.to_string()),
            ("p_b_max", self.p_b_max.to_string()),
            ("dp_b", self.dp_b.to_string()),
            ("p_i_max", self.p_i_max.to_string()),
            ("dp_i", self.dp_i.to_string()),
            ("power_mask", self.power_mask.to_string()),
            ("s_max", self.s_max.to_string()),
            ("s_init", self.s_init.to_string()),
            ("o_max", self.o_max.to_string()),
            ("j_max", self.j_max.to_string()),
            ("renewable_states", states),
            ("arrival_rate", self.arrival_rate.to_string()),
            ("mean_packet_size", self.mean_packet_size.to_string()),
            ("buffer_packets", self.buffer_packets.to_string()),
            ("a_max", self.a_max.to_string()),
            ("phi", self.phi.to_string()),
            ("varphi", self.varphi.to_string()),
            ("v", self.v.to_string()),
            ("utility", self.utility.as_str().to_string()),
            ("dual_step0", self.dual_step0.to_string()),
            ("dual_max_iters", self.dual_max_iters.to_string()),
            ("dual_tol", self.dual_tol.to_string()),
            ("channel_uncertainty", self.channel_uncertainty.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "# derived: theta = {}", self.theta);
        let _ = writeln!(out, "# derived: q_max = {}", self.q_max);
        let _ = writeln!(out, "# derived: w_max = {}", self.w_max);
        out
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::paper_default()
    }
}

fn parse_states(value: &str) -> Result<Vec<RenewableState>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (v, p) = pair.split_once(':').ok_or_else(|| {
                Error::InvalidArgument(format!("renewable state `{pair}` must be value:prob"))
            })?;
            let bad = || Error::InvalidArgument(format!("bad renewable state `{pair}`"));
            Ok(RenewableState {
                value: v.trim().parse().map_err(|_| bad())?,
                prob: p.trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// A config that passed [`validate_config`]. Read-only; cheap to share.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(SystemConfig);

impl ValidatedConfig {
    pub fn into_inner(self) -> SystemConfig {
        self.0
    }
}

impl Deref for ValidatedConfig {
    type Target = SystemConfig;

    fn deref(&self) -> &SystemConfig {
        &self.0
    }
}

/// Fills the derived fields and checks every standing assumption of the model.
pub fn validate_config(mut cfg: SystemConfig) -> Result<ValidatedConfig> {
    cfg.fill_derived();
    let fail = |msg: String| Err(Error::Config(msg));

    if cfg.num_users == 0 {
        return fail("num_users must be positive".into());
    }
    if cfg.num_subcarriers == 0 {
        return fail("num_subcarriers must be positive".into());
    }
    let positive = [
        ("cell_radius", cfg.cell_radius),
        ("pathloss_exponent", cfg.pathloss_exponent),
        ("noise_power", cfg.noise_power),
        ("subcarrier_bandwidth", cfg.subcarrier_bandwidth),
        ("p_b_max", cfg.p_b_max),
        ("p_i_max", cfg.p_i_max),
        ("power_mask", cfg.power_mask),
        ("s_max", cfg.s_max),
        ("mean_packet_size", cfg.mean_packet_size),
        ("buffer_packets", cfg.buffer_packets),
        ("phi", cfg.phi),
        ("varphi", cfg.varphi),
        ("dual_step0", cfg.dual_step0),
        ("dual_tol", cfg.dual_tol),
    ];
    for (name, value) in positive {
        if !(value.is_finite() && value > 0.0) {
            return fail(format!("{name} > 0 required, got {value}"));
        }
    }
    let non_negative = [
        ("dp_b", cfg.dp_b),
        ("dp_i", cfg.dp_i),
        ("arrival_rate", cfg.arrival_rate),
        ("a_max", cfg.a_max),
        ("o_max", cfg.o_max),
        ("j_max", cfg.j_max),
    ];
    for (name, value) in non_negative {
        if !(value.is_finite() && value >= 0.0) {
            return fail(format!("{name} >= 0 required, got {value}"));
        }
    }
    if !(cfg.gamma_gap >= 1.0) {
        return fail(format!("gamma_gap >= 1 required, got {}", cfg.gamma_gap));
    }
    if cfg.dual_max_iters == 0 {
        return fail("dual_max_iters must be positive".into());
    }
    if !(0.0..1.0).contains(&cfg.channel_uncertainty) {
        return fail(format!(
            "channel_uncertainty must lie in [0, 1), got {}",
            cfg.channel_uncertainty
        ));
    }

    if cfg.renewable_states.is_empty() {
        return fail("renewable_states must not be empty".into());
    }
    let mut total = 0.0;
    for st in &cfg.renewable_states {
        if !(st.value.is_finite() && st.value >= 0.0) {
            return fail(format!("renewable state value {} must be >= 0", st.value));
        }
        if !(st.prob.is_finite() && st.prob >= 0.0) {
            return fail(format!("renewable state probability {} must be >= 0", st.prob));
        }
        total += st.prob;
    }
    if (total - 1.0).abs() > 1e-9 {
        return fail(format!("renewable probabilities sum to {total}, expected 1"));
    }

    let bs_peak = cfg.p_b_max + cfg.dp_b;
    if cfg.j_max < bs_peak {
        return fail(format!(
            "j_max >= p_b_max + dp_b violated: {} < {}",
            cfg.j_max, bs_peak
        ));
    }
    if cfg.o_max < bs_peak {
        return fail(format!(
            "o_max >= p_b_max + dp_b violated: {} < {}",
            cfg.o_max, bs_peak
        ));
    }

    let v_bound = cfg.v_upper_bound();
    if !(cfg.v > 0.0) {
        return fail(format!("0 < V violated: V = {}", cfg.v));
    }
    if cfg.v > v_bound {
        return fail(format!(
            "V <= (s_max - w_max - o_max)/varphi violated: {} > {}",
            cfg.v, v_bound
        ));
    }
    if !(cfg.s_init >= 0.0 && cfg.s_init <= cfg.s_max) {
        return fail(format!("s_init must lie in [0, s_max], got {}", cfg.s_init));
    }

    if !(cfg.q_max > cfg.a_max) {
        return fail(format!("q_max > a_max violated: {} <= {}", cfg.q_max, cfg.a_max));
    }
    if cfg.a_max < cfg.mean_arrival_bits() {
        return fail(format!(
            "a_max >= mean arrival per slot violated: {} < {}",
            cfg.a_max,
            cfg.mean_arrival_bits()
        ));
    }

    let mask_total = cfg.num_subcarriers as f64 * cfg.power_mask;
    if !(mask_total > cfg.p_b_max) {
        return fail(format!(
            "M * power_mask > p_b_max violated: {mask_total} <= {}",
            cfg.p_b_max
        ));
    }
    if !(cfg.num_users as f64 * mask_total > cfg.p_i_max) {
        return fail(format!(
            "N * M * power_mask > p_i_max violated: {} <= {}",
            cfg.num_users as f64 * mask_total,
            cfg.p_i_max
        ));
    }

    Ok(ValidatedConfig(cfg))
}

/// Normalized channel gains (already divided by `Γ·N0`) for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    num_users: usize,
    num_relays: usize,
    num_subcarriers: usize,
    h_bu: Vec<f64>,
    h_br: Vec<f64>,
    h_ru: Vec<f64>,
}

impl ChannelRealization {
    /// All-zero realization of the given dimensions.
    pub fn zeros(num_users: usize, num_relays: usize, num_subcarriers: usize) -> Self {
        ChannelRealization {
            num_users,
            num_relays,
            num_subcarriers,
            h_bu: vec![0.0; num_users * num_subcarriers],
            h_br: vec![0.0; num_relays * num_subcarriers],
            h_ru: vec![0.0; num_relays * num_users * num_subcarriers],
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_relays(&self) -> usize {
        self.num_relays
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    /// BS to user `n` on subcarrier `m`.
    #[inline]
    pub fn bu(&self, n: usize, m: usize) -> f64 {
        self.h_bu[n * self.num_subcarriers + m]
    }

    /// BS to relay `i` on subcarrier `m`.
    #[inline]
    pub fn br(&self, i: usize, m: usize) -> f64 {
        self.h_br[i * self.num_subcarriers + m]
    }

    /// Relay `i` to user `n` on subcarrier `m`.
    #[inline]
    pub fn ru(&self, i: usize, n: usize, m: usize) -> f64 {
        self.h_ru[(i * self.num_users + n) * self.num_subcarriers + m]
    }

    pub fn set_bu(&mut self, n: usize, m: usize, h: f64) {
        self.h_bu[n * self.num_subcarriers + m] = h;
    }

    pub fn set_br(&mut self, i: usize, m: usize, h: f64) {
        self.h_br[i * self.num_subcarriers + m] = h;
    }

    pub fn set_ru(&mut self, i: usize, n: usize, m: usize, h: f64) {
        self.h_ru[(i * self.num_users + n) * self.num_subcarriers + m] = h;
    }

    /// Applies `f` to every gain in place.
    pub fn map_in_place(&mut self, mut f: impl FnMut(f64) -> f64) {
        for h in self
            .h_bu
            .iter_mut()
            .chain(self.h_br.iter_mut())
            .chain(self.h_ru.iter_mut())
        {
            *h = f(*h);
        }
    }

    /// The same direct links with every relay removed.
    pub fn without_relays(&self) -> ChannelRealization {
        ChannelRealization {
            num_users: self.num_users,
            num_relays: 0,
            num_subcarriers: self.num_subcarriers,
            h_bu: self.h_bu.clone(),
            h_br: Vec::new(),
            h_ru: Vec::new(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.h_bu
            .iter()
            .chain(&self.h_br)
            .chain(&self.h_ru)
            .all(|h| h.is_finite() && *h >= 0.0)
    }
}

/// Queue and battery levels at a slot boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// Data queues `Q_n`, bits.
    pub q: Vec<f64>,
    /// Virtual queues `U_n`, bits.
    pub u: Vec<f64>,
    /// Battery level.
    pub s: f64,
    pub t: u64,
}

impl SystemState {
    pub fn initial(num_users: usize, s_init: f64) -> Self {
        SystemState {
            q: vec![0.0; num_users],
            u: vec![0.0; num_users],
            s: s_init,
            t: 0,
        }
    }
}

/// Who a subcarrier serves in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assignment {
    Unassigned,
    Direct { user: usize },
    Coop { relay: usize, user: usize },
}

impl Assignment {
    pub fn user(self) -> Option<usize> {
        match self {
            Assignment::Unassigned => None,
            Assignment::Direct { user } | Assignment::Coop { user, .. } => Some(user),
        }
    }

    pub fn relay(self) -> Option<usize> {
        match self {
            Assignment::Coop { relay, .. } => Some(relay),
            _ => None,
        }
    }
}

/// Every per-slot control decision.
///
/// Subcarriers are exclusive, so relay powers are stored per subcarrier:
/// `p_r[m]` belongs to the relay and user named by `assign[m]` and is zero
/// unless that assignment is cooperative.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    pub admit_r: Vec<f64>,
    pub aux_x: Vec<f64>,
    pub assign: Vec<Assignment>,
    pub p_b: Vec<f64>,
    pub p_r: Vec<f64>,
    pub rate_mu: Vec<f64>,
    pub grid_j: f64,
    pub discharge_o: f64,
    pub charge_frac: f64,
    pub harvested: f64,
}

impl SlotDecision {
    /// Nothing scheduled, nothing admitted.
    pub fn idle(num_users: usize, num_subcarriers: usize) -> Self {
        SlotDecision {
            admit_r: vec![0.0; num_users],
            aux_x: vec![0.0; num_users],
            assign: vec![Assignment::Unassigned; num_subcarriers],
            p_b: vec![0.0; num_subcarriers],
            p_r: vec![0.0; num_subcarriers],
            rate_mu: vec![0.0; num_users],
            grid_j: 0.0,
            discharge_o: 0.0,
            charge_frac: 0.0,
            harvested: 0.0,
        }
    }

    pub fn p_b_total(&self) -> f64 {
        self.p_b.iter().sum()
    }

    /// Dynamic transmit power of every relay, summed over users and subcarriers.
    pub fn relay_totals(&self, num_relays: usize) -> Vec<f64> {
        let mut totals = vec![0.0; num_relays];
        for (a, p) in self.assign.iter().zip(&self.p_r) {
            if let Assignment::Coop { relay, .. } = a {
                totals[*relay] += p;
            }
        }
        totals
    }

    /// `p_{i,n}^m` in dense indexing.
    pub fn relay_power(&self, relay: usize, user: usize, m: usize) -> f64 {
        match self.assign[m] {
            Assignment::Coop { relay: i, user: n } if i == relay && n == user => self.p_r[m],
            _ => 0.0,
        }
    }

    /// Energy actually stored this slot, `δ·w`.
    pub fn stored(&self) -> f64 {
        self.charge_frac * self.harvested
    }
}

/// Per-slot objective bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlotObjective {
    /// Value of the radio allocation objective for the chosen decision.
    pub allocation: f64,
    /// `φ Σ f(X_n)`.
    pub aux_utility: f64,
    /// `φ Σ f(R_n)`.
    pub admitted_utility: f64,
    /// `ϕ P(t)`.
    pub grid_cost: f64,
}

/// Allocator diagnostics recorded with each slot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AllocDiagnostics {
    pub iterations: usize,
    pub lambda_b: f64,
    pub lambda_r: Vec<f64>,
    /// Factor applied to BS powers by feasibility recovery (1 when none).
    pub bs_scale: f64,
    /// Per-relay recovery factors.
    pub relay_scale: Vec<f64>,
}

/// One row of a simulation trace: the state at the start of the slot and
/// everything decided during it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub slot: u64,
    pub state: SystemState,
    pub decision: SlotDecision,
    /// `P(t) = J + Σ_i (p_i + Δp_i)`.
    pub grid_power: f64,
    pub relay_power: Vec<f64>,
    pub objective: SlotObjective,
    pub alloc: AllocDiagnostics,
    pub lyapunov: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn paper_config_accepted() {
        let cfg = SystemConfig::paper_default().validate().unwrap();
        assert_abs_diff_eq!(cfg.o_max, 321.36, epsilon = 1e-9);
        assert_abs_diff_eq!(cfg.theta, 371.36, epsilon = 1e-9);
        assert_abs_diff_eq!(cfg.v_upper_bound(), 4967.28, epsilon = 1e-9);
        assert_eq!(cfg.w_max, 195.0);
        assert_eq!(cfg.q_max, 50_000.0);
    }

    #[test]
    fn zero_v_rejected() {
        let mut cfg = SystemConfig::paper_default();
        cfg.v = 0.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("0 < V"), "{err}");
    }

    #[test]
    fn v_above_bound_rejected() {
        let mut cfg = SystemConfig::paper_default();
        cfg.v = 4967.29;
        let err = cfg.clone().validate().unwrap_err().to_string();
        assert!(err.contains("(s_max - w_max - o_max)/varphi"), "{err}");
        cfg.v = 4967.28;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn grid_cap_below_bs_peak_rejected() {
        let mut cfg = SystemConfig::paper_default();
        cfg.j_max = cfg.p_b_max + cfg.dp_b - 1.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("j_max >= p_b_max + dp_b"), "{err}");
    }

    #[test]
    fn discharge_cap_below_bs_peak_rejected() {
        let mut cfg = SystemConfig::paper_default();
        cfg.o_max = 200.0;
        cfg.j_max = 400.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("o_max >= p_b_max + dp_b"), "{err}");
    }

    #[test]
    fn buffer_must_exceed_arrival_cap() {
        let mut cfg = SystemConfig::paper_default();
        cfg.a_max = 4.0 * cfg.mean_arrival_bits();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("q_max > a_max"), "{err}");
    }

    #[test]
    fn arrival_cap_must_cover_mean() {
        let mut cfg = SystemConfig::paper_default();
        cfg.a_max = 30_000.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("a_max >= mean arrival"), "{err}");
    }

    #[test]
    fn renewable_probabilities_must_sum_to_one() {
        let mut cfg = SystemConfig::paper_default();
        cfg.renewable_states[0].prob = 0.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn trivial_mask_rejected() {
        let mut cfg = SystemConfig::paper_default();
        cfg.power_mask = 0.15;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("M * power_mask > p_b_max"), "{err}");
    }

    #[test]
    fn validation_is_idempotent() {
        let once = SystemConfig::paper_default().validate().unwrap();
        let twice = once.clone().into_inner().validate().unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn theta_tracks_v_and_varphi() {
        let mut cfg = SystemConfig::paper_default();
        cfg.v = 250.0;
        cfg.varphi = 2.0;
        let cfg = cfg.validate().unwrap();
        assert_eq!(cfg.theta, 2.0 * 250.0 + cfg.o_max);
    }

    #[test]
    fn config_text_round_trip() {
        let mut cfg = SystemConfig::paper_default();
        cfg.v = 123.5;
        cfg.utility = Utility::Identity;
        cfg.renewable_states = vec![RenewableState { value: 50.0, prob: 1.0 }];
        let text = cfg.to_config_string();
        let back = SystemConfig::parse(&text).unwrap();
        assert_eq!(cfg.validate().unwrap(), back.validate().unwrap());
    }

    #[test]
    fn parse_rejects_unknown_and_derived_keys() {
        let err = SystemConfig::parse("bogus = 1").unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("bogus"), "{err}");
        assert!(SystemConfig::parse("theta = 4").is_err());
        assert!(SystemConfig::parse("# comment\n\nv = 5 # trailing\n").is_ok());
    }

    #[test]
    fn sparse_relay_power_view() {
        let mut d = SlotDecision::idle(2, 3);
        d.assign[1] = Assignment::Coop { relay: 0, user: 1 };
        d.p_r[1] = 0.3;
        d.assign[2] = Assignment::Direct { user: 0 };
        assert_eq!(d.relay_power(0, 1, 1), 0.3);
        assert_eq!(d.relay_power(0, 0, 1), 0.0);
        assert_eq!(d.relay_totals(1), vec![0.3]);
    }
}
