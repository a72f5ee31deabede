//! Seeded stochastic inputs: cell geometry, fading channels, packet arrivals
//! and renewable generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Poisson};

use crate::error::{Error, Result};
use crate::model::{ChannelRealization, SystemConfig};

/// Independent random substreams derived from one master seed.
///
/// Each stream is a ChaCha8 generator keyed by the master seed and
/// distinguished by its stream id, so consuming one never shifts another.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub traffic: ChaCha8Rng,
    pub fading: ChaCha8Rng,
    pub renewable: ChaCha8Rng,
    pub geometry: ChaCha8Rng,
    pub uncertainty: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(id);
            rng
        };
        RngStreams {
            traffic: stream(1),
            fading: stream(2),
            renewable: stream(3),
            geometry: stream(4),
            uncertainty: stream(5),
        }
    }
}

/// Node positions in meters; the base station sits at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub user_positions: Vec<[f64; 2]>,
    pub relay_positions: Vec<[f64; 2]>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Geometry {
    pub fn user_distance(&self, n: usize) -> f64 {
        dist(self.user_positions[n], [0.0, 0.0])
    }

    pub fn relay_distance(&self, i: usize) -> f64 {
        dist(self.relay_positions[i], [0.0, 0.0])
    }

    pub fn relay_user_distance(&self, i: usize, n: usize) -> f64 {
        dist(self.relay_positions[i], self.user_positions[n])
    }

    /// CSV dump: `kind,index,x,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,index,x,y\n");
        out.push_str("bs,0,0,0\n");
        for (i, p) in self.relay_positions.iter().enumerate() {
            out.push_str(&format!("relay,{},{},{}\n", i + 1, p[0], p[1]));
        }
        for (n, p) in self.user_positions.iter().enumerate() {
            out.push_str(&format!("user,{},{},{}\n", n + 1, p[0], p[1]));
        }
        out
    }
}

/// Users uniform over the cell disk; relays equally spaced in angle (first
/// at 0°) on the circle halfway to the cell edge.
pub fn build_geometry<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Geometry {
    let radius = cfg.cell_radius;
    let user_positions = (0..cfg.num_users)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let a = std::f64::consts::TAU * rng.random::<f64>();
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let k = cfg.num_relays;
    let relay_positions = (0..k)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / k as f64;
            [0.5 * radius * a.cos(), 0.5 * radius * a.sin()]
        })
        .collect();
    Geometry {
        user_positions,
        relay_positions,
    }
}

/// Large-scale gain of a link of length `d`, normalized by `Γ N0`.
fn mean_gain(d: f64, cfg: &SystemConfig) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("link distance must be positive, got {d}")));
    }
    Ok(d.powf(-cfg.pathloss_exponent) / (cfg.gamma_gap * cfg.noise_power))
}

/// Path loss times unit-mean Rayleigh power fading, i.i.d. per link and subcarrier.
pub fn sample_channels<R: Rng + ?Sized>(
    geom: &Geometry,
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let n_users = geom.user_positions.len();
    let n_relays = geom.relay_positions.len();
    let m_sub = cfg.num_subcarriers;
    let mut ch = ChannelRealization::zeros(n_users, n_relays, m_sub);

    for n in 0..n_users {
        let g = mean_gain(geom.user_distance(n), cfg)?;
        for m in 0..m_sub {
            let fade: f64 = Exp1.sample(rng);
            ch.set_bu(n, m, g * fade);
        }
    }
    for i in 0..n_relays {
        let g = mean_gain(geom.relay_distance(i), cfg)?;
        for m in 0..m_sub {
            let fade: f64 = Exp1.sample(rng);
            ch.set_br(i, m, g * fade);
        }
    }
    for i in 0..n_relays {
        for n in 0..n_users {
            let g = mean_gain(geom.relay_user_distance(i, n), cfg)?;
            for m in 0..m_sub {
                let fade: f64 = Exp1.sample(rng);
                ch.set_ru(i, n, m, g * fade);
            }
        }
    }
    Ok(ch)
}

/// Measurement seen by the allocator: every gain off by `±rel` with a random sign.
pub fn perturb_channels<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    rel: f64,
    rng: &mut R,
) -> ChannelRealization {
    let mut out = ch.clone();
    out.map_in_place(|h| {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        h * (1.0 + sign * rel)
    });
    out
}

/// Compound-Poisson arrivals in bits, truncated at `a_max`.
pub fn sample_arrivals<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Vec<f64> {
    (0..cfg.num_users)
        .map(|_| {
            if cfg.arrival_rate <= 0.0 {
                return 0.0;
            }
            let count = Poisson::new(cfg.arrival_rate)
                .expect("validated arrival rate")
                .sample(rng) as u64;
            let size = Exp::new(1.0 / cfg.mean_packet_size).expect("validated packet size");
            let bits: f64 = (0..count).map(|_| size.sample(rng)).sum();
            bits.min(cfg.a_max)
        })
        .collect()
}

/// Harvested energy this slot, drawn from the finite state distribution.
pub fn sample_renewable<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for st in &cfg.renewable_states {
        acc += st.prob;
        if u < acc {
            return st.value;
        }
    }
    cfg.renewable_states
        .iter()
        .rev()
        .find(|s| s.prob > 0.0)
        .map(|s| s.value)
        .unwrap_or(0.0)
}
