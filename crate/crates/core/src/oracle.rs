//! Brute-force reference solvers used to check the allocator.

use crate::alloc::{CoopParams, DirectParams, SlotProblem};
use crate::error::{Error, Result};
use crate::model::Assignment;

/// Which subproblem to search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Subproblem {
    Direct(DirectParams),
    Coop(CoopParams),
}

/// Best grid point of a subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridResult {
    pub objective: f64,
    pub p_b: f64,
    pub p_r: f64,
    /// Lipschitz bound on how far the grid maximum can sit below the true one.
    pub error_bound: f64,
}

/// Smallest grid the searches accept.
pub const MIN_RESOLUTION: usize = 100;

/// Maximizes a subproblem over the uniform grid `{k·mask/resolution}` on
/// every power axis.
///
/// For the cooperative kind the grid is augmented with the points where the
/// two hops carry equal SNR (the rate's kink line), including the vertex
/// where that line meets the relay's mask. The inner axis is searched by
/// ternary search over grid indices: for fixed `p_B` the objective is
/// concave in `p_r`.
pub fn grid_search_subproblem(kind: &Subproblem, resolution: usize) -> Result<GridResult> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "resolution must be >= {MIN_RESOLUTION}, got {resolution}"
        )));
    }
    let steps = resolution;
    Ok(match kind {
        Subproblem::Direct(p) => {
            let step = p.mask / steps as f64;
            let mut best = GridResult {
                objective: f64::NEG_INFINITY,
                p_b: 0.0,
                p_r: 0.0,
                error_bound: (p.weight * p.h_bu / std::f64::consts::LN_2 + p.energy.abs()) * step,
            };
            for k in 0..=steps {
                let x = step * k as f64;
                let v = p.objective(x);
                if v > best.objective {
                    best.objective = v;
                    best.p_b = x;
                }
            }
            best
        }
        Subproblem::Coop(p) => {
            let step = p.mask / steps as f64;
            let q = p.q();
            let lip = q * p.h_br.max(p.h_bu + p.h_ru) + p.energy.abs() + q * p.h_ru + p.relay_price;
            let mut best = GridResult {
                objective: f64::NEG_INFINITY,
                p_b: 0.0,
                p_r: 0.0,
                error_bound: lip * step,
            };
            let balanced = p.h_ru > 0.0 && p.h_br > p.h_bu;
            let mut outer: Vec<f64> = (0..=steps).map(|k| step * k as f64).collect();
            if balanced {
                let vertex = p.mask * p.h_ru / (p.h_br - p.h_bu);
                if vertex < p.mask {
                    outer.push(vertex);
                }
            }
            for p_b in outer {
                let f = |kr: usize| p.objective(p_b, step * kr as f64);
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
                let mut consider = |p_r: f64| {
                    let v = p.objective(p_b, p_r);
                    if v > best.objective {
                        best.objective = v;
                        best.p_b = p_b;
                        best.p_r = p_r;
                    }
                };
                for kr in lo..=hi {
                    consider(step * kr as f64);
                }
                if balanced {
                    let kink = p_b * (p.h_br - p.h_bu) / p.h_ru;
                    if kink <= p.mask {
                        consider(kink);
                    }
                }
            }
            best
        }
    })
}

/// Best decision found by exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveResult {
    pub objective: f64,
    pub assign: Vec<Assignment>,
    pub p_b: Vec<f64>,
    pub p_r: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    value: f64,
    assign: Assignment,
    b: usize,
    r: usize,
}

/// Enumerates every exclusive assignment and every power vector on the
/// grid `{k·mask/resolution}` that meets the sum caps, returning the best
/// slot objective. Limited to `N ≤ 2`, `K ≤ 1`, `M ≤ 3`.
pub fn exhaustive_slot(pb: &SlotProblem, resolution: usize) -> Result<ExhaustiveResult> {
    let (nu, nr, nm) = (pb.ch.num_users(), pb.ch.num_relays(), pb.ch.num_subcarriers());
    if nu > 2 || nr > 1 || nm > 3 {
        return Err(Error::InstanceTooLarge(format!(
            "N = {nu}, K = {nr}, M = {nm}; limits are N <= 2, K <= 1, M <= 3"
        )));
    }
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let steps = resolution;
    let step = pb.mask / steps as f64;
    let budget = |cap: f64| ((cap / step + 1e-9).floor() as usize).min(steps * nm);
    let bs_budget = budget(pb.p_b_max);
    let relay_budget = if nr == 1 { budget(pb.p_i_max) } else { 0 };

    let choices: Vec<Vec<Choice>> = (0..nm)
        .map(|m| {
            let mut list = vec![Choice { value: 0.0, assign: Assignment::Unassigned, b: 0, r: 0 }];
            for n in 0..nu {
                let a = Assignment::Direct { user: n };
                for b in 0..=steps {
                    let p_b = step * b as f64;
                    let value = pb.objective_on(m, a, p_b, 0.0);
                    list.push(Choice { value, assign: a, b, r: 0 });
                }
            }
            for i in 0..nr {
                for n in 0..nu {
                    let a = Assignment::Coop { relay: i, user: n };
                    for b in 0..=steps {
                        for r in 0..=steps {
                            let value = pb.objective_on(m, a, step * b as f64, step * r as f64);
                            list.push(Choice { value, assign: a, b, r });
                        }
                    }
                }
            }
            list
        })
        .collect();

    // Prefix-max table for the last subcarrier over (BS index, relay index).
    let last = &choices[nm - 1];
    let width = steps + 1;
    let mut table: Vec<Option<usize>> = vec![None; width * width];
    for (idx, c) in last.iter().enumerate() {
        let cell = &mut table[c.b * width + c.r];
        if cell.is_none_or(|j| c.value > last[j].value) {
            *cell = Some(idx);
        }
    }
    let better = |a: Option<usize>, b: Option<usize>| match (a, b) {
        (Some(x), Some(y)) => Some(if last[y].value > last[x].value { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    };
    for b in 0..width {
        for r in 0..width {
            let mut cur = table[b * width + r];
            if b > 0 {
                cur = better(cur, table[(b - 1) * width + r]);
            }
            if r > 0 {
                cur = better(cur, table[b * width + r - 1]);
            }
            table[b * width + r] = cur;
        }
    }
    let lookup = |b_left: usize, r_left: usize| -> usize {
        table[b_left.min(steps) * width + r_left.min(steps)].expect("idle choice always present")
    };

    let mut best_value = f64::NEG_INFINITY;
    let mut best_path: Vec<usize> = Vec::new();
    let mut path: Vec<usize> = Vec::with_capacity(nm);
    fn recurse(
        m: usize,
        b_left: usize,
        r_left: usize,
        acc: f64,
        choices: &[Vec<Choice>],
        path: &mut Vec<usize>,
        lookup: &dyn Fn(usize, usize) -> usize,
        best_value: &mut f64,
        best_path: &mut Vec<usize>,
    ) {
        let nm = choices.len();
        if m == nm - 1 {
            let idx = lookup(b_left, r_left);
            let v = acc + choices[m][idx].value;
            if v > *best_value {
                *best_value = v;
                best_path.clear();
                best_path.extend_from_slice(path);
                best_path.push(idx);
            }
            return;
        }
        for (idx, c) in choices[m].iter().enumerate() {
            if c.b > b_left || c.r > r_left {
                continue;
            }
            path.push(idx);
            recurse(m + 1, b_left - c.b, r_left - c.r, acc + c.value, choices, path, lookup, best_value, best_path);
            path.pop();
        }
    }
    recurse(0, bs_budget, relay_budget, 0.0, &choices, &mut path, &lookup, &mut best_value, &mut best_path);

    let mut out = ExhaustiveResult {
        objective: best_value,
        assign: vec![Assignment::Unassigned; nm],
        p_b: vec![0.0; nm],
        p_r: vec![0.0; nm],
    };
    for (m, &idx) in best_path.iter().enumerate() {
        let c = choices[m][idx];
        out.assign[m] = c.assign;
        out.p_b[m] = step * c.b as f64;
        out.p_r[m] = step * c.r as f64;
    }
    Ok(out)
}
