//! Per-slot radio resource allocation by Lagrangian dual decomposition.
//!
//! The slot problem maximizes
//! `Σ_n w_n μ_n + (S − θ) Σ_m p_B^m − Vϕ Σ_i p_i` subject to exclusive
//! subcarriers, per-subcarrier power masks and the BS / relay sum-power caps.
//! Relaxing the sum-power caps splits it into one small problem per
//! subcarrier; the multipliers are driven by projected subgradient steps.

use std::f64::consts::LN_2;

use crate::model::{AllocDiagnostics, Assignment, ChannelRealization, SystemConfig, SystemState};
use crate::phy::{df_rate_unchecked, direct_rate_unchecked};

/// Lagrange multipliers of the BS and relay sum-power constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda_b: f64,
    pub lambda_r: Vec<f64>,
    /// Number of subgradient steps taken in the current slot.
    pub k: usize,
}

impl DualState {
    pub fn new(num_relays: usize) -> Self {
        DualState {
            lambda_b: 0.0,
            lambda_r: vec![0.0; num_relays],
            k: 0,
        }
    }
}

/// Best powers for one subcarrier under one transmission mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubcarrierSolution {
    /// Subproblem objective at the returned powers.
    pub omega: f64,
    pub mode: Assignment,
    pub p_b: f64,
    pub p_r: f64,
}

impl SubcarrierSolution {
    fn idle() -> Self {
        SubcarrierSolution {
            omega: 0.0,
            mode: Assignment::Unassigned,
            p_b: 0.0,
            p_r: 0.0,
        }
    }
}

/// Direct transmission subproblem: `max w log2(1 + p h) + a p` over `[0, mask]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectParams {
    /// Rate weight `w`.
    pub weight: f64,
    /// Coefficient `a = S − θ − λ_B` on BS power.
    pub energy: f64,
    pub h_bu: f64,
    pub mask: f64,
}

impl DirectParams {
    pub fn from_state(
        m: usize,
        n: usize,
        state: &SystemState,
        ch: &ChannelRealization,
        lambda_b: f64,
        cfg: &SystemConfig,
    ) -> Self {
        DirectParams {
            weight: queue_weight(state, n, cfg),
            energy: state.s - cfg.theta - lambda_b,
            h_bu: ch.bu(n, m),
            mask: cfg.power_mask,
        }
    }

    pub fn objective(&self, p: f64) -> f64 {
        self.weight * direct_rate_unchecked(p, self.h_bu) + self.energy * p
    }
}

/// Cooperative subproblem:
/// `max w·df_rate(p_B, p_r) + a p_B − κ p_r` over `[0, mask]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoopParams {
    pub weight: f64,
    /// `a = S − θ − λ_B`.
    pub energy: f64,
    /// `κ = Vϕ + λ_i`.
    pub relay_price: f64,
    pub h_br: f64,
    pub h_bu: f64,
    pub h_ru: f64,
    pub mask: f64,
}

impl CoopParams {
    #[allow(clippy::too_many_arguments)]
    pub fn from_state(
        m: usize,
        i: usize,
        n: usize,
        state: &SystemState,
        ch: &ChannelRealization,
        lambda_b: f64,
        lambda_i: f64,
        cfg: &SystemConfig,
    ) -> Self {
        CoopParams {
            weight: queue_weight(state, n, cfg),
            energy: state.s - cfg.theta - lambda_b,
            relay_price: cfg.v * cfg.varphi + lambda_i,
            h_br: ch.br(i, m),
            h_bu: ch.bu(n, m),
            h_ru: ch.ru(i, n, m),
            mask: cfg.power_mask,
        }
    }

    pub fn objective(&self, p_b: f64, p_r: f64) -> f64 {
        self.weight * df_rate_unchecked(p_b, p_r, self.h_br, self.h_bu, self.h_ru)
            + self.energy * p_b
            - self.relay_price * p_r
    }

    /// `q = w / (2 ln 2)`, the weight on `ln(1 + SNR)`.
    pub fn q(&self) -> f64 {
        self.weight / (2.0 * LN_2)
    }
}

/// `U_n Q_n / Q^max` in objective units per normalized bit.
pub fn queue_weight(state: &SystemState, n: usize, cfg: &SystemConfig) -> f64 {
    state.u[n] * state.q[n] / cfg.q_max * cfg.subcarrier_bandwidth
}

/// Maximizer of `c ln(1 + p h) + a p` on `[0, mask]` for `c, h ≥ 0`.
fn log_linear_argmax(c: f64, a: f64, h: f64, mask: f64) -> f64 {
    if a >= 0.0 {
        mask
    } else if h <= 0.0 || c <= 0.0 {
        0.0
    } else {
        (c / -a - 1.0 / h).clamp(0.0, mask)
    }
}

pub fn direct_subproblem(user: usize, p: &DirectParams) -> SubcarrierSolution {
    let p_b = log_linear_argmax(p.weight / LN_2, p.energy, p.h_bu, p.mask);
    SubcarrierSolution {
        omega: p.objective(p_b),
        mode: Assignment::Direct { user },
        p_b,
        p_r: 0.0,
    }
}

fn coop_solution(relay: usize, user: usize, p: &CoopParams, p_b: f64, p_r: f64) -> SubcarrierSolution {
    SubcarrierSolution {
        omega: p.objective(p_b, p_r),
        mode: Assignment::Coop { relay, user },
        p_b,
        p_r,
    }
}

/// Closed form for the region `p_B H_{B,i} ≥ p_B H_{B,n} + p_r H_{i,n}`,
/// where the second hop limits the rate.
pub fn coop_case1(relay: usize, user: usize, p: &CoopParams) -> SubcarrierSolution {
    let ratio = if p.h_ru > 0.0 {
        p.h_bu / p.h_ru
    } else if p.h_bu > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if p.energy + p.relay_price * ratio < 0.0 {
        return coop_solution(relay, user, p, 0.0, 0.0);
    }
    let stationary = if p.h_ru > 0.0 {
        p.q() * p.h_ru / p.relay_price - 1.0
    } else {
        0.0
    };
    let d = stationary
        .min(p.mask * p.h_br)
        .min(p.mask * (p.h_ru + p.h_bu))
        .max(0.0);
    let p_r = if p.h_ru > 0.0 {
        ((d - p.mask * p.h_bu) / p.h_ru).clamp(0.0, p.mask)
    } else {
        0.0
    };
    coop_solution(relay, user, p, p.mask, p_r)
}

/// Closed form for the region where the first hop limits the rate and
/// the relay stays silent.
pub fn coop_case2(relay: usize, user: usize, p: &CoopParams) -> SubcarrierSolution {
    let p_b = if p.h_br > p.h_bu {
        0.0
    } else {
        log_linear_argmax(p.q(), p.energy, p.h_br, p.mask)
    };
    coop_solution(relay, user, p, p_b, 0.0)
}

/// Best relay power for a fixed BS power, and the resulting objective.
fn coop_best_relay(p: &CoopParams, q: f64, stationary_snr: f64, p_b: f64) -> (f64, f64) {
    let first_hop = p_b * p.h_br;
    let lo = p_b * p.h_bu;
    let (snr, p_r) = if p.h_ru > 0.0 && first_hop > lo {
        let hi = first_hop.min(lo + p.mask * p.h_ru);
        let d = stationary_snr.clamp(lo, hi);
        (d, ((d - lo) / p.h_ru).clamp(0.0, p.mask))
    } else {
        (first_hop.min(lo), 0.0)
    };
    let value = q * snr.ln_1p() + p.energy * p_b - p.relay_price * p_r;
    (value, p_r)
}

/// Exact maximizer of the cooperative subproblem.
///
/// After maximizing out `p_r` the objective is concave and piecewise smooth
/// in `p_B`, so its maximum is at an endpoint, a piece boundary or a
/// stationary point of one piece. All of them are evaluated.
fn coop_exact(relay: usize, user: usize, p: &CoopParams) -> SubcarrierSolution {
    let q = p.q();
    let mask = p.mask;
    let a = p.energy;
    let kappa = p.relay_price;
    let stationary_snr = if p.h_ru > 0.0 && kappa > 0.0 {
        q * p.h_ru / kappa - 1.0
    } else if p.h_ru > 0.0 {
        f64::INFINITY
    } else {
        -1.0
    };

    let mut cands = [f64::NAN; 10];
    cands[0] = 0.0;
    cands[1] = mask;
    if p.h_br > p.h_bu && p.h_ru > 0.0 {
        let d = stationary_snr;
        cands[2] = d / p.h_br;
        cands[3] = mask * p.h_ru / (p.h_br - p.h_bu);
        let a_first = a - kappa * (p.h_br - p.h_bu) / p.h_ru;
        if a_first < 0.0 {
            cands[4] = q / -a_first - 1.0 / p.h_br;
        }
        if p.h_bu > 0.0 {
            cands[5] = d / p.h_bu;
            cands[6] = (d - mask * p.h_ru) / p.h_bu;
            if a < 0.0 {
                cands[7] = q / -a - 1.0 / p.h_bu;
                cands[8] = q / -a - (1.0 + mask * p.h_ru) / p.h_bu;
            }
        }
    } else {
        let h = p.h_br.min(p.h_bu);
        if a < 0.0 && h > 0.0 {
            cands[9] = q / -a - 1.0 / h;
        }
    }

    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut seen = [f64::NAN; 10];
    for (k, c) in cands.into_iter().enumerate() {
        if !c.is_finite() {
            continue;
        }
        let p_b = c.clamp(0.0, mask);
        if seen[..k].contains(&p_b) {
            continue;
        }
        seen[k] = p_b;
        let (value, p_r) = coop_best_relay(p, q, stationary_snr, p_b);
        if value > best.0 {
            best = (value, p_b, p_r);
        }
    }
    coop_solution(relay, user, p, best.1, best.2)
}

/// Best cooperative powers: the better of the two closed-form cases and the
/// exact one-dimensional search, by true objective.
pub fn coop_subproblem(relay: usize, user: usize, p: &CoopParams) -> SubcarrierSolution {
    let mut best = coop_case1(relay, user, p);
    for cand in [coop_case2(relay, user, p), coop_exact(relay, user, p)] {
        if cand.omega > best.omega {
            best = cand;
        }
    }
    best
}

/// Picks the highest score; ties go to the smallest mode (Direct before Coop,
/// then by relay and user index). A best score `≤ 0` leaves the subcarrier idle.
pub fn pick_best(candidates: &[SubcarrierSolution]) -> SubcarrierSolution {
    let mut best = SubcarrierSolution::idle();
    for c in candidates {
        let better = c.omega > best.omega
            || (c.omega == best.omega && best.mode != Assignment::Unassigned && c.mode < best.mode);
        if better && c.omega > 0.0 {
            best = *c;
        }
    }
    best
}

/// Applies [`pick_best`] to every subcarrier's candidate list.
pub fn assign_subcarriers(table: &[Vec<SubcarrierSolution>]) -> Vec<Assignment> {
    table.iter().map(|cands| pick_best(cands).mode).collect()
}

/// One projected subgradient step with `ς_k = step0 / √k`.
pub fn dual_update(
    dual: &DualState,
    p_b_total: f64,
    relay_totals: &[f64],
    p_b_max: f64,
    p_i_max: f64,
    step0: f64,
) -> DualState {
    let k = dual.k + 1;
    let step = step0 / (k as f64).sqrt();
    DualState {
        lambda_b: (dual.lambda_b + step * (p_b_total - p_b_max)).max(0.0),
        lambda_r: dual
            .lambda_r
            .iter()
            .zip(relay_totals)
            .map(|(l, p)| (l + step * (p - p_i_max)).max(0.0))
            .collect(),
        k,
    }
}

fn relative_change_below(old: f64, new: f64, tol: f64) -> bool {
    let scale = old.abs().max(new.abs());
    scale == 0.0 || (new - old).abs() <= tol * scale
}

/// A slot allocation problem with all coefficients fixed.
#[derive(Debug, Clone)]
pub struct SlotProblem<'a> {
    pub ch: &'a ChannelRealization,
    /// Per-user weight on normalized rate.
    pub weights: Vec<f64>,
    /// Coefficient on each unit of BS transmit power.
    pub bs_coef: f64,
    /// Cost of each unit of relay transmit power.
    pub relay_price: f64,
    pub mask: f64,
    pub p_b_max: f64,
    pub p_i_max: f64,
}

impl<'a> SlotProblem<'a> {
    /// The online policy's slot problem for queue state `state`.
    pub fn from_state(state: &SystemState, ch: &'a ChannelRealization, cfg: &SystemConfig) -> Self {
        SlotProblem {
            ch,
            weights: (0..ch.num_users()).map(|n| queue_weight(state, n, cfg)).collect(),
            bs_coef: state.s - cfg.theta,
            relay_price: cfg.v * cfg.varphi,
            mask: cfg.power_mask,
            p_b_max: cfg.p_b_max,
            p_i_max: cfg.p_i_max,
        }
    }

    fn direct_params(&self, n: usize, m: usize, lambda_b: f64) -> DirectParams {
        DirectParams {
            weight: self.weights[n],
            energy: self.bs_coef - lambda_b,
            h_bu: self.ch.bu(n, m),
            mask: self.mask,
        }
    }

    fn coop_params(&self, i: usize, n: usize, m: usize, lambda_b: f64, lambda_i: f64) -> CoopParams {
        CoopParams {
            weight: self.weights[n],
            energy: self.bs_coef - lambda_b,
            relay_price: self.relay_price + lambda_i,
            h_br: self.ch.br(i, m),
            h_bu: self.ch.bu(n, m),
            h_ru: self.ch.ru(i, n, m),
            mask: self.mask,
        }
    }

    /// Objective contribution of subcarrier `m` under mode `a`.
    pub fn objective_on(&self, m: usize, a: Assignment, p_b: f64, p_r: f64) -> f64 {
        match a {
            Assignment::Unassigned => 0.0,
            Assignment::Direct { user } => self.direct_params(user, m, 0.0).objective(p_b),
            Assignment::Coop { relay, user } => self.coop_params(relay, user, m, 0.0, 0.0).objective(p_b, p_r),
        }
    }

    /// Slot objective of a decision.
    pub fn objective(&self, assign: &[Assignment], p_b: &[f64], p_r: &[f64]) -> f64 {
        (0..assign.len())
            .map(|m| self.objective_on(m, assign[m], p_b[m], p_r[m]))
            .sum()
    }

    /// Whether every power respects its mask and the sum caps hold.
    pub fn is_feasible(&self, assign: &[Assignment], p_b: &[f64], p_r: &[f64]) -> bool {
        let eps = 1e-9;
        let mut relay = vec![0.0; self.ch.num_relays()];
        for m in 0..assign.len() {
            if p_b[m] < 0.0 || p_b[m] > self.mask * (1.0 + eps) || p_r[m] < 0.0 || p_r[m] > self.mask * (1.0 + eps) {
                return false;
            }
            match assign[m] {
                Assignment::Unassigned if p_b[m] > 0.0 || p_r[m] > 0.0 => return false,
                Assignment::Direct { .. } if p_r[m] > 0.0 => return false,
                Assignment::Coop { relay: i, .. } => relay[i] += p_r[m],
                _ => {}
            }
        }
        p_b.iter().sum::<f64>() <= self.p_b_max * (1.0 + eps)
            && relay.iter().all(|r| *r <= self.p_i_max * (1.0 + eps))
    }
}

/// Dual iteration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualParams {
    pub step0: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl DualParams {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        DualParams {
            step0: cfg.dual_step0,
            max_iters: cfg.dual_max_iters,
            tol: cfg.dual_tol,
        }
    }
}

/// Radio part of a slot decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub assign: Vec<Assignment>,
    pub p_b: Vec<f64>,
    pub p_r: Vec<f64>,
    pub objective: f64,
    pub diagnostics: AllocDiagnostics,
}

impl Allocation {
    fn idle(num_subcarriers: usize, num_relays: usize) -> Self {
        Allocation {
            assign: vec![Assignment::Unassigned; num_subcarriers],
            p_b: vec![0.0; num_subcarriers],
            p_r: vec![0.0; num_subcarriers],
            objective: 0.0,
            diagnostics: AllocDiagnostics {
                iterations: 0,
                lambda_b: 0.0,
                lambda_r: vec![0.0; num_relays],
                bs_scale: 1.0,
                relay_scale: vec![1.0; num_relays],
            },
        }
    }

    pub fn p_b_total(&self) -> f64 {
        self.p_b.iter().sum()
    }

    pub fn relay_totals(&self, num_relays: usize) -> Vec<f64> {
        let mut totals = vec![0.0; num_relays];
        for (a, p) in self.assign.iter().zip(&self.p_r) {
            if let Assignment::Coop { relay, .. } = a {
                totals[*relay] += p;
            }
        }
        totals
    }
}

/// Upper bounds on every direct and cooperative score, valid for any
/// non-negative multipliers. Used to skip hopeless candidates.
struct ScoreBounds {
    direct: Vec<f64>,
    coop: Vec<f64>,
}

impl ScoreBounds {
    fn new(pb: &SlotProblem) -> Self {
        let (nu, nr, nm) = (pb.ch.num_users(), pb.ch.num_relays(), pb.ch.num_subcarriers());
        let energy = pb.bs_coef.max(0.0) * pb.mask;
        let mut direct = vec![0.0; nu * nm];
        let mut coop = vec![0.0; nr * nu * nm];
        for m in 0..nm {
            for n in 0..nu {
                let w = pb.weights[n];
                direct[m * nu + n] = w * direct_rate_unchecked(pb.mask, pb.ch.bu(n, m)) + energy;
                for i in 0..nr {
                    let h = pb.ch.br(i, m).min(pb.ch.bu(n, m) + pb.ch.ru(i, n, m));
                    coop[(m * nr + i) * nu + n] = if w > 0.0 {
                        0.5 * w * direct_rate_unchecked(pb.mask, h) + energy
                    } else {
                        energy
                    };
                }
            }
        }
        ScoreBounds { direct, coop }
    }
}

/// Best mode and powers on subcarrier `m` at the given multipliers.
fn best_on_subcarrier(pb: &SlotProblem, bounds: &ScoreBounds, m: usize, dual: &DualState) -> SubcarrierSolution {
    let (nu, nr) = (pb.ch.num_users(), pb.ch.num_relays());
    let mut best = SubcarrierSolution::idle();
    for n in 0..nu {
        if bounds.direct[m * nu + n] <= best.omega {
            continue;
        }
        let s = direct_subproblem(n, &pb.direct_params(n, m, dual.lambda_b));
        if s.omega > best.omega {
            best = s;
        }
    }
    for i in 0..nr {
        for n in 0..nu {
            if bounds.coop[(m * nr + i) * nu + n] <= best.omega {
                continue;
            }
            let s = coop_subproblem(i, n, &pb.coop_params(i, n, m, dual.lambda_b, dual.lambda_r[i]));
            if s.omega > best.omega {
                best = s;
            }
        }
    }
    best
}

/// Lagrangian dual function at the given multipliers, an upper bound on
/// every feasible slot objective.
pub fn dual_function(pb: &SlotProblem, lambda_b: f64, lambda_r: &[f64]) -> f64 {
    let bounds = ScoreBounds::new(pb);
    let dual = DualState { lambda_b, lambda_r: lambda_r.to_vec(), k: 0 };
    let per_subcarrier: f64 = (0..pb.ch.num_subcarriers())
        .map(|m| best_on_subcarrier(pb, &bounds, m, &dual).omega.max(0.0))
        .sum();
    per_subcarrier + lambda_b * pb.p_b_max + lambda_r.iter().sum::<f64>() * pb.p_i_max
}

/// Scales BS and relay powers down proportionally onto the sum caps.
fn recover(pb: &SlotProblem, mut alloc: Allocation) -> Allocation {
    let nr = pb.ch.num_relays();
    let total = alloc.p_b_total();
    let bs_scale = if total > pb.p_b_max { pb.p_b_max / total } else { 1.0 };
    let relay_scale: Vec<f64> = alloc
        .relay_totals(nr)
        .iter()
        .map(|t| if *t > pb.p_i_max { pb.p_i_max / t } else { 1.0 })
        .collect();
    for m in 0..alloc.assign.len() {
        alloc.p_b[m] *= bs_scale;
        if let Assignment::Coop { relay, .. } = alloc.assign[m] {
            alloc.p_r[m] *= relay_scale[relay];
        }
    }
    alloc.objective = pb.objective(&alloc.assign, &alloc.p_b, &alloc.p_r);
    alloc.diagnostics.bs_scale = bs_scale;
    alloc.diagnostics.relay_scale = relay_scale;
    alloc
}

/// Per-subcarrier optimal powers for a fixed assignment at given multipliers.
fn fixed_assignment_powers(
    pb: &SlotProblem,
    assign: &[Assignment],
    m: usize,
    lambda_b: f64,
    lambda_r: &[f64],
) -> (f64, f64) {
    match assign[m] {
        Assignment::Unassigned => (0.0, 0.0),
        Assignment::Direct { user } => {
            let s = direct_subproblem(user, &pb.direct_params(user, m, lambda_b));
            (s.p_b, 0.0)
        }
        Assignment::Coop { relay, user } => {
            let s = coop_subproblem(relay, user, &pb.coop_params(relay, user, m, lambda_b, lambda_r[relay]));
            (s.p_b, s.p_r)
        }
    }
}

/// Smallest multiplier in `[0, ∞)` at which `excess(λ) ≤ 0`, assuming
/// `excess` is non-increasing. Brackets geometrically, then refines with
/// Illinois regula falsi until the excess is within `-tol ≤ excess ≤ 0` or
/// the bracket is relatively tight.
fn find_multiplier(mut excess: impl FnMut(f64) -> f64, tol: f64) -> f64 {
    let mut f_lo = excess(0.0);
    if f_lo <= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut f_hi = excess(hi);
    let mut expansions = 0;
    while f_hi > 0.0 {
        lo = hi;
        f_lo = f_hi;
        hi *= 8.0;
        expansions += 1;
        if expansions > 400 {
            return hi;
        }
        f_hi = excess(hi);
    }
    let mut side = 0;
    for _ in 0..200 {
        if f_hi >= -tol || hi - lo <= 1e-9 * hi {
            break;
        }
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = excess(x);
        if fx > 0.0 {
            lo = x;
            f_lo = fx;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    hi
}

/// Fixed-assignment powers at BS price `lambda_b`, with each relay priced
/// just enough to meet its own cap. Returns per-subcarrier powers and the
/// relay multipliers.
fn powers_at(
    pb: &SlotProblem,
    assign: &[Assignment],
    relay_subcarriers: &[Vec<usize>],
    lambda_b: f64,
) -> (Vec<(f64, f64)>, Vec<f64>) {
    let nr = relay_subcarriers.len();
    let mut lambda_r = vec![0.0; nr];
    let mut powers: Vec<(f64, f64)> = (0..assign.len())
        .map(|m| fixed_assignment_powers(pb, assign, m, lambda_b, &lambda_r))
        .collect();
    for (i, subs) in relay_subcarriers.iter().enumerate() {
        if subs.iter().map(|&m| powers[m].1).sum::<f64>() <= pb.p_i_max {
            continue;
        }
        let mut lr = vec![0.0; nr];
        lambda_r[i] = find_multiplier(
            |l| {
                lr[i] = l;
                subs.iter().map(|&m| fixed_assignment_powers(pb, assign, m, lambda_b, &lr).1).sum::<f64>()
                    - pb.p_i_max
            },
            1e-9 * pb.p_i_max,
        );
        for &m in subs {
            powers[m] = fixed_assignment_powers(pb, assign, m, lambda_b, &lambda_r);
        }
    }
    (powers, lambda_r)
}

/// Re-optimizes all powers for a fixed assignment, meeting the sum caps
/// through per-constraint multiplier search. Also returns the multipliers.
fn polish(pb: &SlotProblem, assign: &[Assignment], template: &Allocation) -> (Allocation, f64, Vec<f64>) {
    let nr = pb.ch.num_relays();
    let mut relay_subcarriers: Vec<Vec<usize>> = vec![Vec::new(); nr];
    for (m, a) in assign.iter().enumerate() {
        if let Assignment::Coop { relay, .. } = a {
            relay_subcarriers[*relay].push(m);
        }
    }

    let lambda_b = find_multiplier(
        |lb| {
            let (powers, _) = powers_at(pb, assign, &relay_subcarriers, lb);
            powers.iter().map(|p| p.0).sum::<f64>() - pb.p_b_max
        },
        1e-9 * pb.p_b_max,
    );
    let (powers, lambda_r) = powers_at(pb, assign, &relay_subcarriers, lambda_b);

    let mut out = template.clone();
    out.assign = assign.to_vec();
    for (m, (p_b, p_r)) in powers.into_iter().enumerate() {
        out.p_b[m] = p_b;
        out.p_r[m] = p_r;
        if p_b == 0.0 && p_r == 0.0 {
            out.assign[m] = Assignment::Unassigned;
        }
    }
    // Guard against a non-monotone excess leaving a cap violated.
    (recover(pb, out), lambda_b, lambda_r)
}

/// Solves one slot's allocation. `dual` is warm-started from its current
/// value and left at the final subgradient multipliers; the diagnostics
/// carry the prices of the returned allocation.
///
/// Every subgradient iterate is made feasible by proportional scaling, and
/// the best assignment found is then re-optimized for power. The all-idle
/// decision is always a candidate, so the result is feasible with a
/// non-negative objective.
pub fn solve_slot(pb: &SlotProblem, dual: &mut DualState, params: &DualParams) -> Allocation {
    let nm = pb.ch.num_subcarriers();
    let nr = pb.ch.num_relays();
    let bounds = ScoreBounds::new(pb);
    dual.k = 0;
    if dual.lambda_r.len() != nr {
        dual.lambda_r = vec![0.0; nr];
    }

    let warm = dual.lambda_b > 0.0 || dual.lambda_r.iter().any(|l| *l > 0.0);
    let mut best = Allocation::idle(nm, nr);
    let mut last_assign: Option<Vec<Assignment>> = None;
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        iterations += 1;
        let mut alloc = Allocation::idle(nm, nr);
        for m in 0..nm {
            let s = best_on_subcarrier(pb, &bounds, m, dual);
            alloc.assign[m] = s.mode;
            alloc.p_b[m] = s.p_b;
            alloc.p_r[m] = s.p_r;
        }
        let p_b_total = alloc.p_b_total();
        let relay_totals = alloc.relay_totals(nr);
        last_assign = Some(alloc.assign.clone());
        let candidate = recover(pb, alloc);
        if candidate.objective > best.objective {
            best = candidate;
        }

        let next = dual_update(dual, p_b_total, &relay_totals, pb.p_b_max, pb.p_i_max, params.step0);
        let converged = relative_change_below(dual.lambda_b, next.lambda_b, params.tol)
            && dual
                .lambda_r
                .iter()
                .zip(&next.lambda_r)
                .all(|(o, n)| relative_change_below(*o, *n, params.tol));
        *dual = next;
        if converged {
            break;
        }
    }

    let mut assignments = vec![best.assign.clone()];
    let mut push_new = |a: Vec<Assignment>| {
        if !assignments.contains(&a) {
            assignments.push(a);
        }
    };
    if let Some(a) = last_assign {
        push_new(a);
    }
    // Stale warm-start prices can price every subcarrier out; the unpriced
    // assignment is always tried as well.
    if warm {
        let zero = DualState::new(nr);
        push_new((0..nm).map(|m| best_on_subcarrier(pb, &bounds, m, &zero).mode).collect());
    }
    let mut prices: Option<(f64, Vec<f64>)> = None;
    for assign in assignments {
        if assign.iter().all(|a| *a == Assignment::Unassigned) {
            continue;
        }
        let (polished, lambda_b, lambda_r) = polish(pb, &assign, &best);
        if polished.objective > best.objective && pb.is_feasible(&polished.assign, &polished.p_b, &polished.p_r) {
            best = polished;
            prices = Some((lambda_b, lambda_r));
        }
    }

    best.diagnostics.iterations = iterations;
    let (lambda_b, lambda_r) = prices.unwrap_or_else(|| (dual.lambda_b, dual.lambda_r.clone()));
    best.diagnostics.lambda_b = lambda_b;
    best.diagnostics.lambda_r = lambda_r;
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn coop(weight_q: f64, a: f64, kappa: f64, h_br: f64, h_bu: f64, h_ru: f64, mask: f64) -> CoopParams {
        CoopParams {
            weight: weight_q * 2.0 * LN_2,
            energy: a,
            relay_price: kappa,
            h_br,
            h_bu,
            h_ru,
            mask,
        }
    }

    fn grid_max_1d(f: impl Fn(f64) -> f64, mask: f64, steps: usize) -> f64 {
        (0..=steps)
            .map(|k| f(mask * k as f64 / steps as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn direct_full_power_when_battery_rich() {
        let p = DirectParams { weight: 1.0, energy: 0.5, h_bu: 2.0, mask: 0.2 };
        assert_eq!(direct_subproblem(0, &p).p_b, 0.2);
    }

    #[test]
    fn direct_interior_optimum() {
        // U = 2, Q = 5, Q^max = 10 gives weight 1; θ + λ_B − S = 1.
        let p = DirectParams { weight: 1.0, energy: -1.0, h_bu: 1.0, mask: 1.0 };
        let s = direct_subproblem(0, &p);
        assert_abs_diff_eq!(s.p_b, 1.0 / LN_2 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.p_b, 0.4427, epsilon = 1e-4);
        let grid = grid_max_1d(|x| p.objective(x), 1.0, 20_000);
        assert!(s.omega >= grid - 1e-12);
        assert!(s.omega - grid < 1e-8);
    }

    #[test]
    fn direct_empty_queue_is_silent() {
        let p = DirectParams { weight: 0.0, energy: -3.0, h_bu: 5.0, mask: 1.0 };
        let s = direct_subproblem(2, &p);
        assert_eq!((s.p_b, s.omega), (0.0, 0.0));
    }

    #[test]
    fn direct_from_state_uses_queue_weight() {
        let mut cfg = SystemConfig::paper_default();
        cfg.subcarrier_bandwidth = 1.0;
        cfg.power_mask = 1.0;
        let state = SystemState { q: vec![25_000.0], u: vec![2.0], s: cfg.theta - 1.0, t: 0 };
        let mut ch = ChannelRealization::zeros(1, 0, 1);
        ch.set_bu(0, 0, 1.0);
        let p = DirectParams::from_state(0, 0, &state, &ch, 0.0, &cfg);
        assert_eq!(p.weight, 1.0);
        assert_eq!(p.energy, -1.0);
        assert_abs_diff_eq!(direct_subproblem(0, &p).p_b, 1.0 / LN_2 - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn case1_second_hop_matches_direct_link() {
        let p = coop(1.0, -0.4, 1.0, 10.0, 1.0, 2.0, 1.0);
        let s = coop_case1(0, 0, &p);
        assert_eq!((s.p_b, s.p_r), (1.0, 0.0));
        let s = coop_subproblem(0, 0, &p);
        assert_eq!((s.p_b, s.p_r), (1.0, 0.0));
    }

    #[test]
    fn case1_relay_fills_second_hop() {
        let p = coop(2.0, -0.4, 1.0, 10.0, 1.0, 2.0, 1.0);
        let s = coop_case1(0, 0, &p);
        assert_abs_diff_eq!(s.p_b, 1.0);
        assert_abs_diff_eq!(s.p_r, 1.0, epsilon = 1e-12);
        let s = coop_subproblem(0, 0, &p);
        assert_abs_diff_eq!(s.p_r, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn case1_negative_condition_is_silent() {
        let p = coop(1.0, -3.0, 1.0, 10.0, 1.0, 2.0, 1.0);
        let s = coop_case1(0, 0, &p);
        assert_eq!((s.p_b, s.p_r), (0.0, 0.0));
    }

    #[test]
    fn case2_branches() {
        let s = coop_case2(0, 0, &coop(1.0, 1.0, 1.0, 3.0, 1.0, 1.0, 1.0));
        assert_eq!((s.p_b, s.p_r), (0.0, 0.0));
        let s = coop_case2(0, 0, &coop(1.0, 0.5, 1.0, 1.0, 3.0, 1.0, 1.0));
        assert_eq!((s.p_b, s.p_r), (1.0, 0.0));
        let s = coop_case2(0, 0, &coop(1.0, -2.0, 1.0, 1.0, 3.0, 1.0, 1.0));
        assert_eq!((s.p_b, s.p_r), (0.0, 0.0));
    }

    #[test]
    fn coop_all_zero_when_nothing_pays() {
        let s = coop_subproblem(0, 0, &coop(0.0, -1.0, 1.0, 3.0, 1.0, 1.0, 1.0));
        assert_eq!((s.p_b, s.p_r, s.omega), (0.0, 0.0, 0.0));
    }

    #[test]
    fn coop_without_relay_link_reduces_to_first_hop_limited() {
        let p = coop(3.0, -1.0, 1.0, 4.0, 2.0, 0.0, 1.0);
        let s = coop_subproblem(0, 0, &p);
        assert_eq!(s.p_r, 0.0);
        // Rate is ½ log2(1 + 2 p_B); stationary point q/(−a) − 1/2.
        assert_abs_diff_eq!(s.p_b, 1.0, epsilon = 1e-12);
        let p = coop(1.0, -1.0, 1.0, 4.0, 2.0, 0.0, 1.0);
        assert_abs_diff_eq!(coop_subproblem(0, 0, &p).p_b, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn exact_solver_beats_closed_form_when_base_station_power_is_expensive() {
        // Case 1's condition fails, yet a small BS power with relay support pays.
        let p = coop(4.0, -2.0, 1.0, 10.0, 0.1, 2.0, 1.0);
        let c1 = coop_case1(0, 0, &p);
        let c2 = coop_case2(0, 0, &p);
        let s = coop_subproblem(0, 0, &p);
        assert!(s.omega > c1.omega.max(c2.omega) + 1e-3);
    }

    /// Joint grid search over both powers (inner axis by ternary search,
    /// the objective being concave in `p_r`), plus the point where the two
    /// hops balance.
    fn coop_grid(p: &CoopParams, steps: usize) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for kb in 0..=steps {
            let p_b = p.mask * kb as f64 / steps as f64;
            let f = |kr: usize| p.objective(p_b, p.mask * kr as f64 / steps as f64);
            let (mut lo, mut hi) = (0usize, steps);
            while hi - lo > 2 {
                let m1 = lo + (hi - lo) / 3;
                let m2 = hi - (hi - lo) / 3;
                if f(m1) < f(m2) {
                    lo = m1 + 1;
                } else {
                    hi = m2;
                }
            }
            for kr in lo..=hi {
                best = best.max(f(kr));
            }
            if p.h_ru > 0.0 && p.h_br > p.h_bu {
                let kink = p_b * (p.h_br - p.h_bu) / p.h_ru;
                if kink <= p.mask {
                    best = best.max(p.objective(p_b, kink));
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn coop_matches_grid_search(
            q in 0.0..5.0f64, a in -4.0..1.0f64, kappa in 0.05..4.0f64,
            h_br in 0.0..5.0f64, h_bu in 0.0..5.0f64, h_ru in 0.0..5.0f64,
            mask in 0.1..1.0f64,
        ) {
            let p = coop(q, a, kappa, h_br, h_bu, h_ru, mask);
            let s = coop_subproblem(0, 0, &p);
            prop_assert!(s.p_b >= 0.0 && s.p_b <= mask && s.p_r >= 0.0 && s.p_r <= mask);
            let grid = coop_grid(&p, 400);
            prop_assert!(s.omega >= grid - 1e-9, "closed {} grid {}", s.omega, grid);
            prop_assert!(s.omega - grid < 1e-3, "closed {} grid {}", s.omega, grid);
        }

        #[test]
        fn direct_matches_grid_search(
            w in 0.0..10.0f64, a in -4.0..1.0f64, h in 0.0..5.0f64, mask in 0.1..1.0f64,
        ) {
            let p = DirectParams { weight: w, energy: a, h_bu: h, mask };
            let s = direct_subproblem(0, &p);
            let grid = grid_max_1d(|x| p.objective(x), mask, 2000);
            prop_assert!(s.omega >= grid - 1e-12);
            prop_assert!(s.omega - grid < 1e-4);
        }
    }

    fn sol(omega: f64, mode: Assignment) -> SubcarrierSolution {
        SubcarrierSolution { omega, mode, p_b: 0.1, p_r: 0.0 }
    }

    #[test]
    fn assignment_argmax_and_ties() {
        let a = assign_subcarriers(&[
            vec![sol(2.0, Assignment::Direct { user: 1 }), sol(3.0, Assignment::Coop { relay: 1, user: 1 })],
            vec![sol(-1.0, Assignment::Direct { user: 0 }), sol(-1.0, Assignment::Coop { relay: 0, user: 0 })],
            vec![sol(5.0, Assignment::Direct { user: 2 }), sol(5.0, Assignment::Direct { user: 1 })],
            vec![sol(5.0, Assignment::Coop { relay: 0, user: 0 }), sol(5.0, Assignment::Direct { user: 3 })],
            vec![],
        ]);
        assert_eq!(a[0], Assignment::Coop { relay: 1, user: 1 });
        assert_eq!(a[1], Assignment::Unassigned);
        assert_eq!(a[2], Assignment::Direct { user: 1 });
        assert_eq!(a[3], Assignment::Direct { user: 3 });
        assert_eq!(a[4], Assignment::Unassigned);
    }

    #[test]
    fn dual_update_projection() {
        let d = DualState { lambda_b: 0.5, lambda_r: vec![0.0], k: 0 };
        let next = dual_update(&d, 10.0, &[12.0], 20.0, 10.0, 0.1);
        assert_eq!(next.lambda_b, 0.0);
        assert_abs_diff_eq!(next.lambda_r[0], 0.2, epsilon = 1e-15);
        assert_eq!(next.k, 1);
        let same = dual_update(&d, 20.0, &[10.0], 20.0, 10.0, 0.1);
        assert_eq!(same.lambda_b, 0.5);
        assert_eq!(same.lambda_r[0], 0.0);
        // ς_k = ς₀/√k.
        let d4 = DualState { lambda_b: 0.0, lambda_r: vec![], k: 3 };
        assert_abs_diff_eq!(dual_update(&d4, 21.0, &[], 20.0, 10.0, 1.0).lambda_b, 0.5, epsilon = 1e-15);
    }

    fn tiny_problem(ch: &ChannelRealization, weights: Vec<f64>, bs_coef: f64) -> SlotProblem<'_> {
        SlotProblem {
            ch,
            weights,
            bs_coef,
            relay_price: 1.0,
            mask: 1.0,
            p_b_max: 1.5,
            p_i_max: 1.5,
        }
    }

    #[test]
    fn empty_queues_and_poor_battery_give_idle_slot() {
        let mut ch = ChannelRealization::zeros(2, 1, 3);
        ch.map_in_place(|_| 1.0);
        let pb = tiny_problem(&ch, vec![0.0, 0.0], -5.0);
        let mut dual = DualState::new(1);
        let out = solve_slot(&pb, &mut dual, &DualParams { step0: 1.0, max_iters: 40, tol: 1e-3 });
        assert!(out.assign.iter().all(|a| *a == Assignment::Unassigned));
        assert_eq!(out.p_b_total(), 0.0);
        assert_eq!(out.objective, 0.0);
    }

    #[test]
    fn single_subcarrier_reduces_to_direct_subproblem() {
        let mut ch = ChannelRealization::zeros(1, 0, 1);
        ch.set_bu(0, 0, 1.0);
        let pb = SlotProblem {
            ch: &ch,
            weights: vec![1.0],
            bs_coef: -1.0,
            relay_price: 1.0,
            mask: 1.0,
            p_b_max: 10.0,
            p_i_max: 10.0,
        };
        let mut dual = DualState::new(0);
        let out = solve_slot(&pb, &mut dual, &DualParams { step0: 0.1, max_iters: 40, tol: 1e-3 });
        let expect = direct_subproblem(0, &DirectParams { weight: 1.0, energy: -1.0, h_bu: 1.0, mask: 1.0 });
        assert_eq!(out.assign[0], Assignment::Direct { user: 0 });
        assert_abs_diff_eq!(out.p_b[0], expect.p_b, epsilon = 1e-12);
        assert_abs_diff_eq!(out.objective, expect.omega, epsilon = 1e-12);
        assert_eq!(out.diagnostics.iterations, 1);
    }

    #[test]
    fn binding_sum_cap_is_respected() {
        let mut ch = ChannelRealization::zeros(2, 1, 3);
        ch.map_in_place(|_| 2.0);
        let pb = tiny_problem(&ch, vec![5.0, 3.0], 0.5);
        let mut dual = DualState::new(1);
        let out = solve_slot(&pb, &mut dual, &DualParams { step0: 1.0 / 1.5, max_iters: 40, tol: 1e-3 });
        assert!(pb.is_feasible(&out.assign, &out.p_b, &out.p_r));
        assert!(out.p_b_total() <= 1.5 + 1e-9);
        assert!(out.objective > 0.0);
        assert!(dual.lambda_b >= 0.0 && dual.lambda_r.iter().all(|l| *l >= 0.0));
    }

    proptest! {
        #[test]
        fn solve_slot_always_feasible(
            gains in proptest::collection::vec(0.0..4.0f64, 2 * 2 + 2 + 2 * 2),
            w0 in 0.0..5.0f64, w1 in 0.0..5.0f64, bs in -3.0..1.0f64,
        ) {
            let mut ch = ChannelRealization::zeros(2, 1, 2);
            let mut it = gains.into_iter();
            for m in 0..2 {
                for n in 0..2 {
                    ch.set_bu(n, m, it.next().unwrap());
                    ch.set_ru(0, n, m, it.next().unwrap());
                }
                ch.set_br(0, m, it.next().unwrap());
            }
            let pb = tiny_problem(&ch, vec![w0, w1], bs);
            let mut dual = DualState::new(1);
            let out = solve_slot(&pb, &mut dual, &DualParams { step0: 1.0 / 1.5, max_iters: 40, tol: 1e-3 });
            prop_assert!(pb.is_feasible(&out.assign, &out.p_b, &out.p_r));
            prop_assert!(out.objective >= 0.0);
            prop_assert!((pb.objective(&out.assign, &out.p_b, &out.p_r) - out.objective).abs() < 1e-9);
        }

        #[test]
        fn dual_function_bounds_the_slot_objective(
            gains in proptest::collection::vec(0.0..4.0f64, 2 * 2 + 2 + 2 * 2),
            w0 in 0.0..5.0f64, w1 in 0.0..5.0f64, bs in -3.0..1.0f64,
            lb in 0.0..5.0f64, lr in 0.0..5.0f64,
        ) {
            let mut ch = ChannelRealization::zeros(2, 1, 2);
            let mut it = gains.into_iter();
            for m in 0..2 {
                for n in 0..2 {
                    ch.set_bu(n, m, it.next().unwrap());
                    ch.set_ru(0, n, m, it.next().unwrap());
                }
                ch.set_br(0, m, it.next().unwrap());
            }
            let pb = tiny_problem(&ch, vec![w0, w1], bs);
            let mut dual = DualState::new(1);
            let out = solve_slot(&pb, &mut dual, &DualParams { step0: 1.0 / 1.5, max_iters: 40, tol: 1e-3 });
            prop_assert!(dual_function(&pb, lb, &[lr]) >= out.objective - 1e-9);
            prop_assert!(dual_function(&pb, 0.0, &[0.0]) >= out.objective - 1e-9);
        }
    }
}
