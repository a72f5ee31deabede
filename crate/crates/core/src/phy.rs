//! Achievable rates for direct and decode-and-forward transmission.
//!
//! Gains are normalized (`|h|² / (Γ N0)`) and rates are per unit
//! sub-bandwidth, i.e. `log2(1 + p h)` bits per slot. Multiply by
//! `SystemConfig::subcarrier_bandwidth` for bits per slot on a real subcarrier.

use crate::error::{Error, Result};
use crate::model::{Assignment, ChannelRealization, SlotDecision};

fn check_non_negative(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    Ok(())
}

/// `log2(1 + p h)`.
pub fn direct_rate(p: f64, h: f64) -> Result<f64> {
    check_non_negative(&[("p", p), ("h", h)])?;
    Ok(direct_rate_unchecked(p, h))
}

/// Half-duplex decode-and-forward rate:
/// `½ min{log2(1 + p_b h_br), log2(1 + p_b h_bu + p_r h_ru)}`.
pub fn df_rate(p_b: f64, p_r: f64, h_br: f64, h_bu: f64, h_ru: f64) -> Result<f64> {
    check_non_negative(&[
        ("p_b", p_b),
        ("p_r", p_r),
        ("h_br", h_br),
        ("h_bu", h_bu),
        ("h_ru", h_ru),
    ])?;
    Ok(df_rate_unchecked(p_b, p_r, h_br, h_bu, h_ru))
}

#[inline]
pub(crate) fn direct_rate_unchecked(p: f64, h: f64) -> f64 {
    (p * h).ln_1p() / std::f64::consts::LN_2
}

#[inline]
pub(crate) fn df_rate_unchecked(p_b: f64, p_r: f64, h_br: f64, h_bu: f64, h_ru: f64) -> f64 {
    let snr = (p_b * h_br).min(p_b * h_bu + p_r * h_ru);
    0.5 * snr.ln_1p() / std::f64::consts::LN_2
}

/// Normalized rate delivered on subcarrier `m` by `decision`.
pub fn subcarrier_rate(decision: &SlotDecision, ch: &ChannelRealization, m: usize) -> f64 {
    match decision.assign[m] {
        Assignment::Unassigned => 0.0,
        Assignment::Direct { user } => direct_rate_unchecked(decision.p_b[m], ch.bu(user, m)),
        Assignment::Coop { relay, user } => df_rate_unchecked(
            decision.p_b[m],
            decision.p_r[m],
            ch.br(relay, m),
            ch.bu(user, m),
            ch.ru(relay, user, m),
        ),
    }
}

/// Per-user rate `μ_n`: the sum over subcarriers assigned to `n`.
pub fn user_rates(decision: &SlotDecision, ch: &ChannelRealization) -> Vec<f64> {
    let mut mu = vec![0.0; ch.num_users()];
    for m in 0..decision.assign.len() {
        if let Some(n) = decision.assign[m].user() {
            mu[n] += subcarrier_rate(decision, ch, m);
        }
    }
    mu
}

/// [`user_rates`] in bits per slot for a subcarrier of the given bandwidth.
pub fn user_rates_scaled(
    decision: &SlotDecision,
    ch: &ChannelRealization,
    subcarrier_bandwidth: f64,
) -> Vec<f64> {
    let mut mu = user_rates(decision, ch);
    for r in &mut mu {
        *r *= subcarrier_bandwidth;
    }
    mu
}
