//! Scenario generation: hexagonal layout, user drops, shadowed Rayleigh
//! channels and noise normalisation against uncoordinated cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{ComplexVec, C64};

/// Reference distance of the path-loss law, in meters.
pub const REFERENCE_DISTANCE: f64 = 200.0;
pub const PATHLOSS_EXPONENT: f64 = 3.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Total number of cells in the layout, coordinated or not.
    #[serde(rename = "M_total")]
    pub m_total: usize,
    /// 1-based ids of the coordinated cells, in player order.
    pub coordinated: Vec<usize>,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "D_BS")]
    pub d_bs: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub sigma2: f64,
    pub snr_db: f64,
    pub shadowing_db: f64,
    pub pathloss_on_amplitude: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            m_total: 27,
            coordinated: (1..=7).collect(),
            n: 3,
            t: 6,
            q: 3,
            d_bs: 2000.0,
            d: 1000.0,
            sigma2: 1.0,
            snr_db: 30.0,
            shadowing_db: 8.0,
            pathloss_on_amplitude: false,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Per-BS power budget `P = sigma2 * 10^(snr_db / 10)`.
    pub fn power(&self) -> f64 {
        snr_to_power(self.snr_db, self.sigma2)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            cells: self.coordinated.len(),
            subs: self.n,
            slots: self.q,
            antennas: self.t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::config(name, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive("M_total", self.m_total)?;
        positive("N", self.n)?;
        positive("T", self.t)?;
        positive("Q", self.q)?;
        if self.q > self.t {
            return Err(Error::config(
                "Q",
                format!("Q = {} exceeds T = {}", self.q, self.t),
            ));
        }
        if self.coordinated.is_empty() {
            return Err(Error::config("coordinated", "must not be empty"));
        }
        let mut seen = vec![false; self.m_total + 1];
        for &id in &self.coordinated {
            if id == 0 || id > self.m_total {
                return Err(Error::config(
                    "coordinated",
                    format!("cell id {id} outside 1..={}", self.m_total),
                ));
            }
            if seen[id] {
                return Err(Error::config("coordinated", format!("duplicate cell id {id}")));
            }
            seen[id] = true;
        }
        for (name, v) in [("D_BS", self.d_bs), ("D", self.d), ("sigma2", self.sigma2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if self.d > self.d_bs {
            return Err(Error::config("D", "user ring radius exceeds inter-BS distance"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("snr_db", "must be finite"));
        }
        if !(self.shadowing_db.is_finite() && self.shadowing_db >= 0.0) {
            return Err(Error::config("shadowing_db", "must be non-negative"));
        }
        Ok(())
    }

    fn uncoordinated(&self) -> Vec<usize> {
        (1..=self.m_total)
            .filter(|id| !self.coordinated.contains(id))
            .collect()
    }
}

pub fn snr_to_power(snr_db: f64, sigma2: f64) -> f64 {
    sigma2 * 10f64.powf(snr_db / 10.0)
}

/// Problem dimensions over the coordinated cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub cells: usize,
    pub subs: usize,
    pub slots: usize,
    pub antennas: usize,
}

/// One served user: slot `slot` of coordinated cell `cell` on sub-channel `sub`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UserId {
    pub cell: usize,
    pub sub: usize,
    pub slot: usize,
}

impl Dims {
    pub fn users_per_cell(&self) -> usize {
        self.subs * self.slots
    }

    pub fn num_users(&self) -> usize {
        self.cells * self.users_per_cell()
    }

    pub fn index(&self, u: UserId) -> usize {
        (u.cell * self.subs + u.sub) * self.slots + u.slot
    }

    pub fn user(&self, index: usize) -> UserId {
        UserId {
            cell: index / self.users_per_cell(),
            sub: (index / self.slots) % self.subs,
            slot: index % self.slots,
        }
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        (0..self.num_users()).map(|i| self.user(i))
    }

    pub fn cell_users(&self, cell: usize) -> impl Iterator<Item = UserId> + '_ {
        let per = self.users_per_cell();
        (cell * per..(cell + 1) * per).map(|i| self.user(i))
    }

    /// Users of `cell` on sub-channel `sub`.
    pub fn group(&self, cell: usize, sub: usize) -> impl Iterator<Item = UserId> {
        (0..self.slots).map(move |slot| UserId { cell, sub, slot })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// Position of every cell's BS, indexed by `cell id - 1`.
    pub bs_positions: Vec<[f64; 2]>,
    /// Position of every coordinated user, indexed by [`Dims::index`].
    pub user_positions: Vec<[f64; 2]>,
}

/// Normalised downlink channels among the coordinated cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    dims: Dims,
    /// `h[bs * num_users + user]`: channel from coordinated BS `bs` to `user`,
    /// already divided by the square root of that user's noise power.
    h: Vec<ComplexVec>,
    eta: Vec<f64>,
}

impl ChannelSet {
    pub fn new(dims: Dims, h: Vec<ComplexVec>, eta: Vec<f64>) -> Result<Self> {
        let users = dims.num_users();
        if h.len() != dims.cells * users {
            return Err(Error::DimensionMismatch {
                expected: dims.cells * users,
                got: h.len(),
            });
        }
        if eta.len() != users {
            return Err(Error::DimensionMismatch {
                expected: users,
                got: eta.len(),
            });
        }
        if let Some(bad) = h.iter().find(|v| v.len() != dims.antennas) {
            return Err(Error::DimensionMismatch {
                expected: dims.antennas,
                got: bad.len(),
            });
        }
        Ok(ChannelSet { dims, h, eta })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Channel from coordinated BS `bs` to `user`.
    pub fn h(&self, bs: usize, user: UserId) -> &ComplexVec {
        &self.h[bs * self.dims.num_users() + self.dims.index(user)]
    }

    /// The user's own (serving) channel.
    pub fn direct(&self, user: UserId) -> &ComplexVec {
        self.h(user.cell, user)
    }

    pub fn eta(&self, user: UserId) -> f64 {
        self.eta[self.dims.index(user)]
    }
}

/// Deterministic RNG streams keyed by purpose and entity indices.
#[derive(Debug, Clone, Copy)]
pub struct StreamSeeder {
    root: u64,
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Purpose {
    Placement = 1,
    Shadowing = 2,
    Fading = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamSeeder {
    pub fn new(root: u64) -> Self {
        StreamSeeder { root }
    }

    fn stream(&self, purpose: Purpose, parts: &[u64]) -> ChaCha8Rng {
        let mut h = splitmix64(self.root ^ (purpose as u64).wrapping_mul(0xA24B_AED4_963E_E407));
        for &p in parts {
            h = splitmix64(h ^ p);
        }
        ChaCha8Rng::seed_from_u64(h)
    }
}

/// Axial coordinates of the hexagonal spiral: centre, then ring 1, ring 2, ...
fn hex_spiral(count: usize) -> Vec<(i64, i64)> {
    const DIRS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
    let mut out = vec![(0, 0)];
    let mut radius = 1i64;
    while out.len() < count {
        // Start of ring `radius`, then walk its six sides.
        let (mut q, mut r) = (-radius, radius);
        for dir in DIRS {
            for _ in 0..radius {
                out.push((q, r));
                q += dir.0;
                r += dir.1;
            }
        }
        radius += 1;
    }
    out.truncate(count);
    out
}

pub fn generate_topology(cfg: &ScenarioConfig) -> Topology {
    let bs_positions: Vec<[f64; 2]> = hex_spiral(cfg.m_total)
        .into_iter()
        .map(|(q, r)| {
            let (q, r) = (q as f64, r as f64);
            [cfg.d_bs * (q + 0.5 * r), cfg.d_bs * (3f64.sqrt() / 2.0 * r)]
        })
        .collect();

    let dims = cfg.dims();
    let seeder = StreamSeeder::new(cfg.seed);
    let inner_sq = (0.9 * cfg.d).powi(2);
    let outer_sq = cfg.d * cfg.d;
    let user_positions = dims
        .users()
        .map(|u| {
            let cell_id = cfg.coordinated[u.cell];
            let mut rng = seeder.stream(
                Purpose::Placement,
                &[cell_id as u64, u.sub as u64, u.slot as u64],
            );
            let radius = rng.random_range(inner_sq..outer_sq).sqrt();
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let [bx, by] = bs_positions[cell_id - 1];
            [bx + radius * angle.cos(), by + radius * angle.sin()]
        })
        .collect();

    Topology {
        bs_positions,
        user_positions,
    }
}

/// Large-scale factor `(200 / d)^3.5 * l` for shadowing `l` (linear).
pub fn large_scale_factor(distance: f64, shadowing_linear: f64) -> f64 {
    (REFERENCE_DISTANCE / distance).powf(PATHLOSS_EXPONENT) * shadowing_linear
}

/// Stored channel `sqrt(factor) * hbar / sqrt(eta)`; with `on_amplitude` the
/// factor scales the amplitude directly instead of the power.
pub fn normalized_channel(hbar: &ComplexVec, factor: f64, eta: f64, on_amplitude: bool) -> ComplexVec {
    let amplitude = if on_amplitude { factor } else { factor.sqrt() };
    hbar * C64::new(amplitude / eta.sqrt(), 0.0)
}

/// Draws `CN(0, I)` of length `t`.
pub fn complex_gaussian<R: Rng>(rng: &mut R, t: usize) -> ComplexVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexVec::from_fn(t, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * s, im * s)
    })
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn generate_channels(cfg: &ScenarioConfig, topo: &Topology) -> ChannelSet {
    let dims = cfg.dims();
    let seeder = StreamSeeder::new(cfg.seed);
    let power_per_sub = cfg.power() / cfg.n as f64;
    let uncoordinated = cfg.uncoordinated();
    let shadow = Normal::new(0.0, cfg.shadowing_db).expect("validated shadowing std");
    let users = dims.num_users();

    let mut factor = vec![0.0; dims.cells * users];
    let mut eta = vec![0.0; users];
    for u in dims.users() {
        let idx = dims.index(u);
        let cell_id = cfg.coordinated[u.cell];
        let pos = topo.user_positions[idx];
        let mut rng = seeder.stream(
            Purpose::Shadowing,
            &[cell_id as u64, u.sub as u64, u.slot as u64],
        );
        // One shadowing draw per BS of the layout, in cell-id order.
        let factors: Vec<f64> = (1..=cfg.m_total)
            .map(|id| {
                let s_db: f64 = shadow.sample(&mut rng);
                let d = distance(pos, topo.bs_positions[id - 1]);
                large_scale_factor(d, 10f64.powf(s_db / 10.0))
            })
            .collect();
        // The factor multiplies a power in the noise model under either reading.
        let mut noise = cfg.sigma2;
        for &id in &uncoordinated {
            noise += factors[id - 1] * power_per_sub;
        }
        eta[idx] = noise;
        for (bs, &id) in cfg.coordinated.iter().enumerate() {
            let f = factors[id - 1];
            factor[bs * users + idx] = f;
        }
    }

    let mut h = Vec::with_capacity(dims.cells * users);
    for (bs, &bs_id) in cfg.coordinated.iter().enumerate() {
        for u in dims.users() {
            let idx = dims.index(u);
            let cell_id = cfg.coordinated[u.cell];
            let mut rng = seeder.stream(
                Purpose::Fading,
                &[bs_id as u64, cell_id as u64, u.sub as u64, u.slot as u64],
            );
            let hbar = complex_gaussian(&mut rng, cfg.t);
            h.push(normalized_channel(
                &hbar,
                factor[bs * users + idx],
                eta[idx],
                cfg.pathloss_on_amplitude,
            ));
        }
    }
    ChannelSet { dims, h, eta }
}

/// Topology plus channels for a validated configuration.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<(Topology, ChannelSet)> {
    cfg.validate()?;
    let topo = generate_topology(cfg);
    let ch = generate_channels(cfg, &topo);
    Ok((topo, ch))
}
