//! Reference schemes: channel matching, in-cell zero-forcing, the pricing-free
//! non-cooperative game and slot-synchronous time sharing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributed::{Game, GameConfig, GameState, InitKind, PricingMode, RunSummary};
use crate::error::{Error, Result};
use crate::game::{gain, BeamAssignment};
use crate::hermitian::{ComplexVec, C64};
use crate::network::{ChannelSet, UserId};
use crate::solver::SolverParams;
use crate::utility::{UtilityKind, UtilitySpec};

/// Projected directions shorter than this fraction of the channel norm are
/// treated as rank deficiency.
const ZF_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[serde(alias = "priced")]
    PricedGame,
    #[serde(alias = "CM")]
    Cm,
    #[serde(alias = "ICZF")]
    Iczf,
    #[serde(alias = "NonCoop", alias = "non_cooperative")]
    NonCoop,
    #[serde(alias = "TimeSharing")]
    TimeSharing,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::PricedGame,
        Scheme::NonCoop,
        Scheme::Cm,
        Scheme::Iczf,
        Scheme::TimeSharing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::PricedGame => "priced_game",
            Scheme::Cm => "cm",
            Scheme::Iczf => "iczf",
            Scheme::NonCoop => "non_coop",
            Scheme::TimeSharing => "time_sharing",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Unsupported(format!("unknown scheme '{s}'")))
    }
}

/// `w = sqrt(P / (N Q)) h / |h|` for every user.
pub fn channel_matched(ch: &ChannelSet, power: f64) -> Result<BeamAssignment> {
    let dims = ch.dims();
    let amp = (power / dims.users_per_cell() as f64).sqrt();
    let mut w = BeamAssignment::zeros(dims);
    for u in dims.users() {
        let h = ch.direct(u);
        let norm = h.norm();
        if !(norm > 0.0) {
            return Err(zero_channel(u));
        }
        w.set(u, h * C64::new(amp / norm, 0.0));
    }
    Ok(w)
}

/// Each beam is the user's channel projected onto the orthogonal complement of
/// its co-scheduled peers' channels, at equal power `P / (N Q)`.
pub fn in_cell_zero_forcing(ch: &ChannelSet, power: f64) -> Result<BeamAssignment> {
    let dims = ch.dims();
    if dims.slots > dims.antennas {
        return Err(Error::TooManyUsers {
            q: dims.slots,
            t: dims.antennas,
        });
    }
    let amp = (power / dims.users_per_cell() as f64).sqrt();
    let mut w = BeamAssignment::zeros(dims);
    for u in dims.users() {
        let h = ch.direct(u);
        let peers: Vec<&ComplexVec> = dims
            .group(u.cell, u.sub)
            .filter(|p| p.slot != u.slot)
            .map(|p| ch.direct(p))
            .collect();
        let basis = orthonormal_basis(&peers);
        let mut r = h.clone();
        // Two passes of modified Gram-Schmidt keep the projection orthogonal to
        // machine precision.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&r);
                r -= q * c;
            }
        }
        let norm = r.norm();
        if !(norm > ZF_RANK_TOL * h.norm()) {
            return Err(Error::RankDeficient {
                cell: u.cell,
                sub: u.sub,
                slot: u.slot,
            });
        }
        w.set(u, r * C64::new(amp / norm, 0.0));
    }
    Ok(w)
}

fn orthonormal_basis(vs: &[&ComplexVec]) -> Vec<ComplexVec> {
    let mut basis: Vec<ComplexVec> = Vec::with_capacity(vs.len());
    for &v in vs {
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&r);
                r -= q * c;
            }
        }
        let norm = r.norm();
        if norm > ZF_RANK_TOL * v.norm() {
            basis.push(r / C64::new(norm, 0.0));
        }
    }
    basis
}

fn zero_channel(u: UserId) -> Error {
    Error::ZeroChannel {
        cell: u.cell,
        sub: u.sub,
        slot: u.slot,
    }
}

/// The game with out-cell prices forced to zero, started from channel matching.
pub fn non_cooperative(
    ch: &ChannelSet,
    utility: UtilitySpec,
    power: f64,
    solver: SolverParams,
    cfg: &GameConfig,
) -> Result<(GameState, RunSummary)> {
    let game = Game::new(ch, utility, power, solver, PricingMode::NonCooperative)?;
    let mut state = game.initialize(InitKind::Cm)?;
    let summary = game.run(&mut state, cfg)?;
    Ok((state, summary))
}

/// Slot-synchronous TDMA: in time fraction `k` every cell serves only its
/// slot-`k` user on each sub-channel, with the full sub-channel power `P / N`
/// on a matched beam. Returns `sum (1/Q) U(Γ)` over all users.
pub fn time_sharing_rate(ch: &ChannelSet, utility: &UtilitySpec, power: f64) -> Result<f64> {
    if !matches!(utility.kind(), UtilityKind::Rate { .. }) {
        return Err(Error::Unsupported(
            "time sharing is only defined for the rate utility".into(),
        ));
    }
    let dims = ch.dims();
    let amp = (power / dims.subs as f64).sqrt();
    let mut beams = Vec::with_capacity(dims.num_users());
    for u in dims.users() {
        let h = ch.direct(u);
        let norm = h.norm();
        if !(norm > 0.0) {
            return Err(zero_channel(u));
        }
        beams.push(h * C64::new(amp / norm, 0.0));
    }
    let mut total = 0.0;
    for u in dims.users() {
        let signal = gain(ch.direct(u), &beams[dims.index(u)]);
        let interference: f64 = (0..dims.cells)
            .filter(|&j| j != u.cell)
            .map(|j| {
                let active = UserId { cell: j, ..u };
                gain(ch.h(j, u), &beams[dims.index(active)])
            })
            .sum();
        total += utility.value(signal / (1.0 + interference))?;
    }
    Ok(total / dims.slots as f64)
}
