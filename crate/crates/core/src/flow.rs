//! Per-slot flow control: admission `R_n`, auxiliary rate `X_n`, and the data
//! and virtual queue updates.

use crate::model::{SlotDecision, SystemConfig, SystemState, Utility};

/// Admits the whole arrival while the queue has at least `a_max` of headroom,
/// nothing otherwise.
pub fn admit(q_n: f64, a_n: f64, cfg: &SystemConfig) -> f64 {
    if q_n > cfg.q_max - cfg.a_max {
        0.0
    } else {
        a_n
    }
}

/// Maximizer of `V φ f(X) − ((q_max − a_max)/q_max) U X` over `[0, a_max]`.
pub fn aux_rate(u_n: f64, cfg: &SystemConfig) -> f64 {
    let price = (cfg.q_max - cfg.a_max) / cfg.q_max * u_n;
    let weight = cfg.v * cfg.phi;
    match cfg.utility {
        Utility::Log => {
            // f'(x) = 1/(1+x), so f'^-1(y) = 1/y - 1.
            let y = price / weight;
            if y <= 0.0 {
                cfg.a_max
            } else {
                (1.0 / y - 1.0).clamp(0.0, cfg.a_max)
            }
        }
        Utility::Identity => {
            if price < weight {
                cfg.a_max
            } else {
                0.0
            }
        }
    }
}

/// `Q ← [Q − μ]⁺ + R`, `U ← [U − R]⁺ + X`; the battery is left untouched.
pub fn update_queues(state: &SystemState, decision: &SlotDecision) -> SystemState {
    let q = state
        .q
        .iter()
        .zip(&decision.rate_mu)
        .zip(&decision.admit_r)
        .map(|((q, mu), r)| (q - mu).max(0.0) + r)
        .collect();
    let u = state
        .u
        .iter()
        .zip(&decision.admit_r)
        .zip(&decision.aux_x)
        .map(|((u, r), x)| (u - r).max(0.0) + x)
        .collect();
    SystemState {
        q,
        u,
        s: state.s,
        t: state.t + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn small_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::paper_default();
        cfg.mean_packet_size = 5000.0;
        cfg.buffer_packets = 10.0;
        cfg.a_max = 20_000.0;
        cfg.arrival_rate = 1.0;
        cfg.validate().unwrap().into_inner()
    }

    #[test]
    fn admit_branches() {
        let cfg = small_cfg();
        assert_eq!(cfg.q_max, 50_000.0);
        assert_eq!(admit(30_000.0, 15_000.0, &cfg), 15_000.0);
        assert_eq!(admit(30_001.0, 15_000.0, &cfg), 0.0);
        assert_eq!(admit(0.0, 0.0, &cfg), 0.0);
    }

    fn aux_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::paper_default();
        cfg.buffer_packets = 10.0;
        cfg.mean_packet_size = 1.0;
        cfg.a_max = 4.0;
        cfg.v = 2.0;
        cfg.phi = 1.0;
        cfg.arrival_rate = 1.0;
        cfg.validate().unwrap().into_inner()
    }

    #[test]
    fn aux_rate_empty_virtual_queue_hits_cap() {
        assert_eq!(aux_rate(0.0, &aux_cfg()), 4.0);
    }

    #[test]
    fn aux_rate_interior_stationary_point() {
        // y = (6/10)·1/(2·1) = 0.3, X = 1/0.3 − 1.
        let x = aux_rate(1.0, &aux_cfg());
        assert_abs_diff_eq!(x, 1.0 / 0.3 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x, 2.3333, epsilon = 1e-4);
        // Brute force over a fine grid of the objective it maximizes.
        let obj = |x: f64| 2.0 * x.ln_1p() - 0.6 * x;
        let best = (0..=400_000)
            .map(|k| k as f64 * 1e-5)
            .max_by(|a, b| obj(*a).total_cmp(&obj(*b)))
            .unwrap();
        assert_abs_diff_eq!(x, best, epsilon = 1e-4);
    }

    #[test]
    fn aux_rate_huge_virtual_queue_is_zero() {
        assert_eq!(aux_rate(1e12, &aux_cfg()), 0.0);
    }

    #[test]
    fn aux_rate_identity_is_bang_bang() {
        let mut cfg = aux_cfg();
        cfg.utility = Utility::Identity;
        assert_eq!(aux_rate(0.0, &cfg), 4.0);
        assert_eq!(aux_rate(100.0, &cfg), 0.0);
    }

    fn decision(mu: Vec<f64>, r: Vec<f64>, x: Vec<f64>) -> SlotDecision {
        let mut d = SlotDecision::idle(mu.len(), 1);
        d.rate_mu = mu;
        d.admit_r = r;
        d.aux_x = x;
        d
    }

    #[test]
    fn queue_updates() {
        let state = SystemState {
            q: vec![5.0, 0.0],
            u: vec![10.0, 0.0],
            s: 7.0,
            t: 3,
        };
        let next = update_queues(&state, &decision(vec![8.0, 0.0], vec![3.0, 0.0], vec![2.0, 0.0]));
        assert_eq!(next.q, vec![3.0, 0.0]);
        assert_eq!(next.u, vec![9.0, 0.0]);
        assert_eq!(next.s, 7.0);
        assert_eq!(next.t, 4);

        let next = update_queues(&state, &decision(vec![0.0, 0.0], vec![4.0, 0.0], vec![2.0, 0.0]));
        assert_eq!(next.u[0], 8.0);
    }

    proptest! {
        #[test]
        fn admission_never_exceeds_arrival(q in 0.0..50_000.0f64, a in 0.0..20_000.0f64) {
            let cfg = small_cfg();
            let r = admit(q, a, &cfg);
            prop_assert!(r == 0.0 || r == a);
        }

        #[test]
        fn aux_rate_bounded_and_non_increasing(u in 0.0..1e6f64, du in 0.0..1e4f64) {
            let cfg = aux_cfg();
            let x0 = aux_rate(u, &cfg);
            let x1 = aux_rate(u + du, &cfg);
            prop_assert!((0.0..=cfg.a_max).contains(&x0));
            prop_assert!(x1 <= x0);
        }

        // With Q(0) = 0 and the admission rule, Q never exceeds q_max whatever the service.
        #[test]
        fn queue_never_exceeds_buffer(
            steps in proptest::collection::vec((0.0..20_000.0f64, 0.0..30_000.0f64), 1..200)
        ) {
            let cfg = small_cfg();
            let mut state = SystemState::initial(1, 0.0);
            for (a, mu) in steps {
                let r = admit(state.q[0], a, &cfg);
                state = update_queues(&state, &decision(vec![mu], vec![r], vec![0.0]));
                prop_assert!(state.q[0] <= cfg.q_max);
            }
        }
    }
}
