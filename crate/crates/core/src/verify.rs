//! Randomized comparisons of the allocator against the brute-force oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::alloc::{coop_subproblem, direct_subproblem, solve_slot, CoopParams, DirectParams, DualParams, DualState, SlotProblem};
use crate::error::Result;
use crate::model::ChannelRealization;
use crate::oracle::{exhaustive_slot, grid_search_subproblem, Subproblem};

/// Absolute tolerance between closed form and grid search.
pub const SUBPROBLEM_TOL: f64 = 1e-4;

fn gain<R: Rng>(rng: &mut R) -> f64 {
    if rng.random::<f64>() < 0.05 {
        0.0
    } else {
        rng.random_range(0.1..5.0) * <Exp1 as Distribution<f64>>::sample(&Exp1, rng)
    }
}

pub fn random_direct<R: Rng>(rng: &mut R) -> DirectParams {
    DirectParams {
        weight: rng.random_range(0.0..10.0),
        energy: rng.random_range(-5.0..2.0),
        h_bu: gain(rng),
        mask: rng.random_range(0.05..1.0),
    }
}

pub fn random_coop<R: Rng>(rng: &mut R) -> CoopParams {
    CoopParams {
        weight: rng.random_range(0.0..10.0),
        energy: rng.random_range(-5.0..2.0),
        relay_price: rng.random_range(0.05..5.0),
        h_br: gain(rng),
        h_bu: gain(rng),
        h_ru: gain(rng),
        mask: rng.random_range(0.05..1.0),
    }
}

/// Outcome of comparing closed forms with grid search over random draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemReport {
    pub kind: &'static str,
    pub cases: usize,
    /// Largest `closed − grid`.
    pub max_excess: f64,
    /// Smallest `closed − grid` (negative means the grid found better).
    pub min_excess: f64,
    /// Draws outside `|closed − grid| ≤ tol`.
    pub out_of_tolerance: usize,
    /// Draws where the closed form fell below grid best minus its error bound.
    pub below_grid: usize,
}

impl SubproblemReport {
    fn new(kind: &'static str) -> Self {
        SubproblemReport {
            kind,
            cases: 0,
            max_excess: f64::NEG_INFINITY,
            min_excess: f64::INFINITY,
            out_of_tolerance: 0,
            below_grid: 0,
        }
    }

    fn add(&mut self, closed: f64, grid: f64, error_bound: f64) {
        let excess = closed - grid;
        self.cases += 1;
        self.max_excess = self.max_excess.max(excess);
        self.min_excess = self.min_excess.min(excess);
        if excess.abs() > SUBPROBLEM_TOL {
            self.out_of_tolerance += 1;
        }
        if closed < grid - error_bound - 1e-12 {
            self.below_grid += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.out_of_tolerance == 0 && self.below_grid == 0
    }
}

/// Checks `cases` random draws of each subproblem kind at `resolution` grid steps per axis.
pub fn check_subproblems(cases: usize, resolution: usize, seed: u64) -> Result<[SubproblemReport; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut direct = SubproblemReport::new("direct");
    let mut coop = SubproblemReport::new("coop");
    for _ in 0..cases {
        let p = random_direct(&mut rng);
        let g = grid_search_subproblem(&Subproblem::Direct(p), resolution)?;
        direct.add(direct_subproblem(0, &p).omega, g.objective, g.error_bound);

        let p = random_coop(&mut rng);
        let g = grid_search_subproblem(&Subproblem::Coop(p), resolution)?;
        coop.add(coop_subproblem(0, 0, &p).omega, g.objective, g.error_bound);
    }
    Ok([direct, coop])
}

/// A random slot problem with `N = 2`, `K = 1`, `M = 2`.
pub struct TinyInstance {
    pub ch: ChannelRealization,
    pub weights: Vec<f64>,
    pub bs_coef: f64,
    pub relay_price: f64,
}

impl TinyInstance {
    pub fn problem(&self) -> SlotProblem<'_> {
        SlotProblem {
            ch: &self.ch,
            weights: self.weights.clone(),
            bs_coef: self.bs_coef,
            relay_price: self.relay_price,
            mask: 1.0,
            p_b_max: 1.5,
            p_i_max: 1.5,
        }
    }
}

pub fn random_tiny<R: Rng>(rng: &mut R) -> TinyInstance {
    let (nu, nr, nm) = (2, 1, 2);
    let mut ch = ChannelRealization::zeros(nu, nr, nm);
    for m in 0..nm {
        for n in 0..nu {
            ch.set_bu(n, m, gain(rng));
            ch.set_ru(0, n, m, gain(rng));
        }
        ch.set_br(0, m, gain(rng));
    }
    TinyInstance {
        ch,
        weights: (0..nu).map(|_| rng.random_range(0.0..5.0)).collect(),
        bs_coef: rng.random_range(-3.0..1.0),
        relay_price: rng.random_range(0.1..2.0),
    }
}

/// Solver-to-oracle objective ratios on random tiny instances.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyReport {
    pub ratios: Vec<f64>,
}

impl TinyReport {
    pub fn share_at_least(&self, level: f64) -> f64 {
        self.ratios.iter().filter(|r| **r >= level).count() as f64 / self.ratios.len().max(1) as f64
    }

    pub fn min_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// At least 95% of instances within 0.95 of the oracle, all within 0.90.
    pub fn passed(&self) -> bool {
        self.share_at_least(0.95) >= 0.95 && self.min_ratio() >= 0.90
    }
}

pub fn check_tiny_slots(cases: usize, resolution: usize, seed: u64, params: &DualParams) -> Result<TinyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(cases);
    for _ in 0..cases {
        let inst = random_tiny(&mut rng);
        let pb = inst.problem();
        let oracle = exhaustive_slot(&pb, resolution)?;
        let mut dual = DualState::new(1);
        let solved = solve_slot(&pb, &mut dual, params);
        let ratio = if oracle.objective <= 1e-12 {
            if solved.objective >= oracle.objective - 1e-12 { 1.0 } else { 0.0 }
        } else {
            solved.objective / oracle.objective
        };
        ratios.push(ratio);
    }
    Ok(TinyReport { ratios })
}
